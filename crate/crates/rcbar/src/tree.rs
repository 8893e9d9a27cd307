//! Binary-tree index arithmetic and the flat storage for one realization.
//!
//! Individuals are numbered from 1 in breadth-first order: individual k has
//! children 2k and 2k + 1, so generation g occupies indices 2^g .. 2^{g+1} - 1
//! and a complete tree down to generation n holds 2^{n+1} - 1 values. The
//! realization is stored as one flat array in that order.

use crate::error::{Error, Result};

/// Number of nodes in generation `g`.
pub fn generation_size(g: usize) -> usize {
    assert!(g < usize::BITS as usize - 1, "generation {g} overflows");
    1usize << g
}

/// Number of nodes in a complete tree down to generation `g`.
pub fn tree_size(g: usize) -> usize {
    assert!(g < usize::BITS as usize - 1, "generation {g} overflows");
    (1usize << (g + 1)) - 1
}

/// `(|G_n|, |T_n|)`: nodes in generation `n` and in the whole tree up to it.
pub fn subtree_counts(n: usize) -> (usize, usize) {
    (generation_size(n), tree_size(n))
}

/// Generation of node `k`, i.e. floor(log2 k).
pub fn generation_of(k: usize) -> Result<usize> {
    if k < 1 {
        return Err(Error::InvalidArgument(format!(
            "node index must be >= 1, got {k}"
        )));
    }
    Ok((usize::BITS - 1 - k.leading_zeros()) as usize)
}

/// Direct ancestor of node `k`; the root has none.
pub fn parent_of(k: usize) -> Result<usize> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!(
            "node {k} has no parent (indices start at 1)"
        )));
    }
    Ok(k / 2)
}

/// One simulated realization: all values of a complete tree, indexed from 1.
#[derive(Clone, Debug, PartialEq)]
pub struct Tree {
    n_generations: usize,
    values: Vec<f64>,
}

impl Tree {
    /// Build a tree from the flat value array `[X_1, X_2, ...]`.
    /// The length must be exactly 2^{n+1} - 1 for some n >= 1 and every
    /// entry must be finite; partial generations are rejected.
    pub fn from_values(values: Vec<f64>) -> Result<Tree> {
        let len = values.len();
        if len < 3 || (len + 1) & len != 0 {
            return Err(Error::InvalidArgument(format!(
                "tree length must be 2^(n+1) - 1 for n >= 1, got {len}"
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite value {} at node {}",
                values[pos],
                pos + 1
            )));
        }
        let n_generations = generation_of(len)?;
        Ok(Tree { n_generations, values })
    }

    pub(crate) fn from_values_unchecked(n_generations: usize, values: Vec<f64>) -> Tree {
        debug_assert_eq!(values.len(), tree_size(n_generations));
        Tree { n_generations, values }
    }

    /// Index of the deepest complete generation.
    pub fn n_generations(&self) -> usize {
        self.n_generations
    }

    /// Total number of nodes, |T_n|.
    pub fn node_count(&self) -> usize {
        self.values.len()
    }

    /// Number of parent nodes, |T_{n-1}|.
    pub fn parent_count(&self) -> usize {
        tree_size(self.n_generations - 1)
    }

    /// Value of node `k` (1-indexed).
    pub fn value(&self, k: usize) -> f64 {
        self.values[k - 1]
    }

    /// Flat 0-indexed view of the node values.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Copy of the first `g` generations as a complete tree.
    pub fn truncated(&self, g: usize) -> Result<Tree> {
        if g < 1 || g > self.n_generations {
            return Err(Error::InvalidArgument(format!(
                "cannot truncate a {}-generation tree to {g} generations",
                self.n_generations
            )));
        }
        Ok(Tree {
            n_generations: g,
            values: self.values[..tree_size(g)].to_vec(),
        })
    }
}
