//! Least-squares estimation from one observed tree.
//!
//! All estimators regress children on their parents over the parent set
//! T_{n-1} of a fully observed tree T_n. The joint problem decouples into
//! two independent simple regressions (even and odd children share the same
//! design matrix S), and the second-order estimators reuse the residuals of
//! the first stage against the quadratic design matrix Q.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Mat2;
use crate::tree::Tree;

/// Accumulated design matrices of one tree.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct DesignMatrices {
    /// S = sum over parents of (X_k, 1)(X_k, 1)^t.
    pub s: Mat2,
    /// Q = sum over parents of (X_k^2, 1)(X_k^2, 1)^t.
    pub q: Mat2,
    /// Number of parents, |T_{n-1}|.
    pub count: usize,
}

/// Exact sums of both design matrices over the parent set.
pub fn design_matrices(tree: &Tree) -> DesignMatrices {
    let parents = tree.parent_count();
    let (mut sx, mut sxx, mut sx4) = (0.0f64, 0.0f64, 0.0f64);
    for k in 1..=parents {
        let x = tree.value(k);
        let x2 = x * x;
        sx += x;
        sxx += x2;
        sx4 += x2 * x2;
    }
    let m = parents as f64;
    DesignMatrices {
        s: Mat2::sym(sxx, sx, m),
        q: Mat2::sym(sx4, sxx, m),
        count: parents,
    }
}

/// First-order estimate in vec ordering (a, c, b, d).
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ThetaEstimate {
    pub a_hat: f64,
    pub c_hat: f64,
    pub b_hat: f64,
    pub d_hat: f64,
    pub design: DesignMatrices,
}

impl ThetaEstimate {
    pub fn vec(&self) -> [f64; 4] {
        [self.a_hat, self.c_hat, self.b_hat, self.d_hat]
    }
}

fn child_sums(tree: &Tree) -> ([f64; 2], [f64; 2]) {
    let parents = tree.parent_count();
    let (mut even_x, mut even_1, mut odd_x, mut odd_1) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for k in 1..=parents {
        let x = tree.value(k);
        let even = tree.value(2 * k);
        let odd = tree.value(2 * k + 1);
        even_x += x * even;
        even_1 += even;
        odd_x += x * odd;
        odd_1 += odd;
    }
    ([even_x, even_1], [odd_x, odd_1])
}

/// Least-squares estimate of (a, c, b, d): two decoupled 2x2 solves against
/// the shared design matrix S.
pub fn estimate_theta(tree: &Tree) -> Result<ThetaEstimate> {
    let design = design_matrices(tree);
    let (rhs_even, rhs_odd) = child_sums(tree);
    let [a_hat, c_hat] = design.s.solve_sym(rhs_even, "S")?;
    let [b_hat, d_hat] = design.s.solve_sym(rhs_odd, "S")?;
    Ok(ThetaEstimate { a_hat, c_hat, b_hat, d_hat, design })
}

/// Fitted residual pairs, indexed by parent (entry k - 1 belongs to parent k).
#[derive(Clone, Debug)]
pub struct Residuals {
    /// X_{2k} - a_hat X_k - c_hat.
    pub even: Vec<f64>,
    /// X_{2k+1} - b_hat X_k - d_hat.
    pub odd: Vec<f64>,
}

/// Residuals of a fitted tree.
pub fn residuals(tree: &Tree, theta: &ThetaEstimate) -> Residuals {
    let parents = tree.parent_count();
    let mut even = Vec::with_capacity(parents);
    let mut odd = Vec::with_capacity(parents);
    for k in 1..=parents {
        let x = tree.value(k);
        even.push(tree.value(2 * k) - theta.a_hat * x - theta.c_hat);
        odd.push(tree.value(2 * k + 1) - theta.b_hat * x - theta.d_hat);
    }
    Residuals { even, odd }
}

/// Second-order estimates: variance vectors and the covariance vector.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SecondOrderEstimates {
    /// (sigma_a^2, sigma_c^2) estimate from squared even residuals.
    pub eta_hat: [f64; 2],
    /// (sigma_b^2, sigma_d^2) estimate from squared odd residuals.
    pub zeta_hat: [f64; 2],
    /// (rho_ab, rho_cd) estimate from cross residuals.
    pub nu_hat: [f64; 2],
}

/// Regress squared and cross residuals on (X_k^2, 1) to estimate the
/// variance and covariance vectors.
pub fn estimate_second_order(tree: &Tree, theta: &ThetaEstimate) -> Result<SecondOrderEstimates> {
    let res = residuals(tree, theta);
    let parents = tree.parent_count();
    let q = theta.design.q;
    let mut rhs_eta = [0.0f64; 2];
    let mut rhs_zeta = [0.0f64; 2];
    let mut rhs_nu = [0.0f64; 2];
    for k in 1..=parents {
        let x = tree.value(k);
        let x2 = x * x;
        let ve = res.even[k - 1];
        let vo = res.odd[k - 1];
        rhs_eta[0] += ve * ve * x2;
        rhs_eta[1] += ve * ve;
        rhs_zeta[0] += vo * vo * x2;
        rhs_zeta[1] += vo * vo;
        rhs_nu[0] += ve * vo * x2;
        rhs_nu[1] += ve * vo;
    }
    Ok(SecondOrderEstimates {
        eta_hat: q.solve_sym(rhs_eta, "Q")?,
        zeta_hat: q.solve_sym(rhs_zeta, "Q")?,
        nu_hat: q.solve_sym(rhs_nu, "Q")?,
    })
}

/// Tree average of X^p over all nodes, p in 1..=8.
pub fn empirical_moment(tree: &Tree, p: usize) -> Result<f64> {
    if p == 0 || p > 8 {
        return Err(Error::InvalidArgument(format!(
            "empirical moment order must be in 1..=8, got {p}"
        )));
    }
    let sum: f64 = tree.values().iter().map(|x| x.powi(p as i32)).sum();
    Ok(sum / tree.node_count() as f64)
}

/// Everything the `estimate` subcommand reports for one tree.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EstimateBundle {
    pub a_hat: f64,
    pub c_hat: f64,
    pub b_hat: f64,
    pub d_hat: f64,
    pub eta_hat: [f64; 2],
    pub zeta_hat: [f64; 2],
    pub nu_hat: [f64; 2],
    pub s_matrix: Mat2,
    pub q_matrix: Mat2,
    pub parent_count: usize,
}

/// Full first- and second-order estimation of one tree.
pub fn estimate_bundle(tree: &Tree) -> Result<EstimateBundle> {
    let theta = estimate_theta(tree)?;
    let second = estimate_second_order(tree, &theta)?;
    Ok(EstimateBundle {
        a_hat: theta.a_hat,
        c_hat: theta.c_hat,
        b_hat: theta.b_hat,
        d_hat: theta.d_hat,
        eta_hat: second.eta_hat,
        zeta_hat: second.zeta_hat,
        nu_hat: second.nu_hat,
        s_matrix: theta.design.s,
        q_matrix: theta.design.q,
        parent_count: theta.design.count,
    })
}
