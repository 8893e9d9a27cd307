//! Simulation, least-squares estimation and Monte Carlo validation for
//! first-order random coefficient bifurcating autoregressive processes on
//! complete binary trees.
//!
//! The crate is organized around the pipeline
//! [`model`] -> [`simulate`] -> [`estimate`], with [`theory`] providing the
//! closed-form limit quantities and [`montecarlo`] the replicated experiments
//! that compare the two. [`cli`] is the batch front end.

pub mod cli;
pub mod error;
pub mod estimate;
pub mod linalg;
pub mod model;
pub mod montecarlo;
pub(crate) mod rational;
pub mod rng;
pub mod simulate;
pub mod theory;
pub mod tree;
