//! Seeded generation of process realizations.
//!
//! Draw order is part of the seed contract: the root value first (when it is
//! random), then for every parent node in increasing index order one
//! coefficient pair followed by one noise pair. Uniform draws consumed per
//! pair: degenerate 0, independent uniform 2, bivariate Gaussian 2. Because
//! the order never depends on the target depth, extending a tree by another
//! generation under the same seed leaves all earlier nodes bit-identical.

use crate::error::{Error, Result};
use crate::model::{InitialLaw, ModelSpec, PairLaw};
use crate::tree::{tree_size, Tree};

pub use crate::rng::mix_seed as replicate_seed;
pub use crate::rng::RngStream;

/// One draw from a pair law.
pub fn sample_pair(law: &PairLaw, rng: &mut RngStream) -> (f64, f64) {
    match *law {
        PairLaw::Degenerate { value_x, value_y } => (value_x, value_y),
        PairLaw::IndependentUniform { lo_x, hi_x, lo_y, hi_y } => {
            let x = lo_x + (hi_x - lo_x) * rng.next_open01();
            let y = lo_y + (hi_y - lo_y) * rng.next_open01();
            (x, y)
        }
        PairLaw::BivariateGaussian { mean_x, mean_y, sd_x, sd_y, corr } => {
            // Cholesky factor of [[1, corr], [corr, 1]] applied to (z1, z2)
            let z1 = rng.next_standard_normal();
            let z2 = rng.next_standard_normal();
            let x = mean_x + sd_x * z1;
            let y = mean_y + sd_y * (corr * z1 + (1.0 - corr * corr).max(0.0).sqrt() * z2);
            (x, y)
        }
    }
}

fn sample_initial(law: &InitialLaw, rng: &mut RngStream) -> f64 {
    match *law {
        InitialLaw::Constant { value } => value,
        InitialLaw::Gaussian { mean, sd } => mean + sd * rng.next_standard_normal(),
    }
}

/// Simulate one realization down to generation `n_generations`.
pub fn simulate_tree(spec: &ModelSpec, n_generations: usize, seed: u64) -> Result<Tree> {
    if n_generations < 1 {
        return Err(Error::InvalidArgument(
            "a tree needs at least one generation".to_string(),
        ));
    }
    let spec = spec.normalized()?;
    let mut rng = RngStream::new(seed);
    let total = tree_size(n_generations);
    let mut values = vec![0.0f64; total];
    values[0] = sample_initial(&spec.initial, &mut rng);
    let parents = tree_size(n_generations - 1);
    for k in 1..=parents {
        let x = values[k - 1];
        let (a, b) = sample_pair(&spec.coeff_law, &mut rng);
        let (eps_even, eps_odd) = sample_pair(&spec.noise_law, &mut rng);
        values[2 * k - 1] = a * x + eps_even;
        values[2 * k] = b * x + eps_odd;
    }
    if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "simulation diverged: non-finite value at node {}",
            pos + 1
        )));
    }
    Ok(Tree::from_values_unchecked(n_generations, values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{derive_moment_set, InitialLaw};
    use crate::theory::s_moments;

    fn degenerate(x: f64, y: f64) -> PairLaw {
        PairLaw::Degenerate { value_x: x, value_y: y }
    }

    fn reference_spec() -> ModelSpec {
        ModelSpec {
            coeff_law: degenerate(0.5, 0.5),
            noise_law: PairLaw::BivariateGaussian {
                mean_x: 1.0,
                mean_y: 1.0,
                sd_x: 1.0,
                sd_y: 1.0,
                corr: 0.0,
            },
            initial: InitialLaw::Constant { value: 1.0 },
        }
    }

    #[test]
    fn degenerate_pair_needs_no_draws() {
        let law = degenerate(0.5, 0.7);
        let mut rng = RngStream::new(1);
        let before = rng.clone().next_u64();
        assert_eq!(sample_pair(&law, &mut rng), (0.5, 0.7));
        assert_eq!(rng.next_u64(), before, "degenerate law consumed a draw");
    }

    #[test]
    fn same_seed_reproduces_pair_draws() {
        let law = PairLaw::BivariateGaussian {
            mean_x: 0.0,
            mean_y: 0.0,
            sd_x: 1.0,
            sd_y: 2.0,
            corr: 0.3,
        };
        let mut r1 = RngStream::new(99);
        let mut r2 = RngStream::new(99);
        for _ in 0..100 {
            assert_eq!(sample_pair(&law, &mut r1), sample_pair(&law, &mut r2));
        }
    }

    #[test]
    fn uncorrelated_gaussian_pair_has_negligible_sample_correlation() {
        let law = PairLaw::BivariateGaussian {
            mean_x: 0.0,
            mean_y: 0.0,
            sd_x: 1.0,
            sd_y: 1.0,
            corr: 0.0,
        };
        let n = 1_000_000usize;
        let mut rng = RngStream::new(0xC0FFEE);
        let (mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for _ in 0..n {
            let (x, y) = sample_pair(&law, &mut rng);
            sx += x;
            sy += y;
            sxx += x * x;
            syy += y * y;
            sxy += x * y;
        }
        let nf = n as f64;
        let cov = sxy / nf - (sx / nf) * (sy / nf);
        let vx = sxx / nf - (sx / nf) * (sx / nf);
        let vy = syy / nf - (sy / nf) * (sy / nf);
        let corr = cov / (vx * vy).sqrt();
        assert!(corr.abs() <= 3.0 / nf.sqrt(), "sample corr = {corr}");
    }

    #[test]
    fn correlated_gaussian_pair_matches_target_correlation() {
        let law = PairLaw::BivariateGaussian {
            mean_x: 1.0,
            mean_y: -1.0,
            sd_x: 2.0,
            sd_y: 0.5,
            corr: 0.6,
        };
        let n = 1_000_000usize;
        let mut rng = RngStream::new(0xBEEF);
        let (mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for _ in 0..n {
            let (x, y) = sample_pair(&law, &mut rng);
            sx += x;
            sy += y;
            sxx += x * x;
            syy += y * y;
            sxy += x * y;
        }
        let nf = n as f64;
        let cov = sxy / nf - (sx / nf) * (sy / nf);
        let vx = sxx / nf - (sx / nf) * (sx / nf);
        let vy = syy / nf - (sy / nf) * (sy / nf);
        let corr = cov / (vx * vy).sqrt();
        assert!((corr - 0.6).abs() <= 5.0 / nf.sqrt(), "sample corr = {corr}");
    }

    #[test]
    fn all_degenerate_model_follows_closed_recursion() {
        let spec = ModelSpec {
            coeff_law: degenerate(0.5, 0.5),
            noise_law: degenerate(1.0, 1.0),
            initial: InitialLaw::Constant { value: 1.0 },
        };
        let tree = simulate_tree(&spec, 2, 12345).unwrap();
        assert_eq!(tree.values(), &[1.0, 1.5, 1.5, 1.75, 1.75, 1.75, 1.75]);
        // every node matches x_child = 0.5 x_parent + 1 exactly
        let deep = simulate_tree(&spec, 10, 1).unwrap();
        for k in 1..=deep.parent_count() {
            assert_eq!(deep.value(2 * k), 0.5 * deep.value(k) + 1.0);
            assert_eq!(deep.value(2 * k + 1), 0.5 * deep.value(k) + 1.0);
        }
    }

    #[test]
    fn same_seed_gives_bitwise_identical_trees() {
        let spec = reference_spec();
        let t1 = simulate_tree(&spec, 8, 0xFEED).unwrap();
        let t2 = simulate_tree(&spec, 8, 0xFEED).unwrap();
        assert_eq!(t1, t2);
        let t3 = simulate_tree(&spec, 8, 0xFEED + 1).unwrap();
        assert_ne!(t1, t3);
    }

    #[test]
    fn extending_a_tree_preserves_the_prefix() {
        let spec = ModelSpec {
            coeff_law: PairLaw::IndependentUniform { lo_x: 0.1, hi_x: 0.7, lo_y: 0.0, hi_y: 0.6 },
            noise_law: PairLaw::BivariateGaussian {
                mean_x: 1.0,
                mean_y: 1.0,
                sd_x: 1.0,
                sd_y: 1.0,
                corr: 0.4,
            },
            initial: InitialLaw::Gaussian { mean: 0.0, sd: 1.0 },
        };
        let short = simulate_tree(&spec, 6, 777).unwrap();
        let long = simulate_tree(&spec, 7, 777).unwrap();
        assert_eq!(short.values(), &long.values()[..short.node_count()]);
    }

    #[test]
    fn zero_generations_is_rejected() {
        assert!(matches!(
            simulate_tree(&reference_spec(), 0, 1),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn single_deep_tree_average_approaches_s1() {
        let spec = reference_spec();
        let tree = simulate_tree(&spec, 16, 0x0BAD_5EED).unwrap();
        let mean = tree.values().iter().sum::<f64>() / tree.node_count() as f64;
        // ergodic limit of the tree average: s_1 = (c + d) / (2 - (a + b)) = 2
        assert!((mean - 2.0).abs() <= 0.04, "tree mean = {mean}");
    }

    /// Ergodicity of tree averages: for several valid models, the average of
    /// X^p over a deep tree matches the analytic limit s_p within Monte Carlo
    /// error estimated across replicate trees.
    #[test]
    fn tree_moment_averages_match_s_moments() {
        let specs = [
            reference_spec(),
            ModelSpec {
                coeff_law: PairLaw::BivariateGaussian {
                    mean_x: 0.4,
                    mean_y: 0.4,
                    sd_x: 0.2,
                    sd_y: 0.2,
                    corr: 0.5,
                },
                noise_law: PairLaw::BivariateGaussian {
                    mean_x: 1.0,
                    mean_y: 1.0,
                    sd_x: 1.0,
                    sd_y: 1.0,
                    corr: 0.5,
                },
                initial: InitialLaw::Constant { value: 1.0 },
            },
        ];
        let replicates = 20usize;
        for (si, spec) in specs.iter().enumerate() {
            let m = derive_moment_set(spec).unwrap();
            let s = s_moments(&m, 4).unwrap();
            let mut averages = vec![[0.0f64; 4]; replicates];
            for (r, avg) in averages.iter_mut().enumerate() {
                let tree =
                    simulate_tree(spec, 16, replicate_seed(0x51AB + si as u64, r as u64)).unwrap();
                let nf = tree.node_count() as f64;
                for p in 1..=4usize {
                    avg[p - 1] =
                        tree.values().iter().map(|x| x.powi(p as i32)).sum::<f64>() / nf;
                }
            }
            for p in 1..=4usize {
                let vals: Vec<f64> = averages.iter().map(|a| a[p - 1]).collect();
                let mean = vals.iter().sum::<f64>() / replicates as f64;
                let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
                    / (replicates - 1) as f64;
                let se = (var / replicates as f64).sqrt();
                assert!(
                    (mean - s[p - 1]).abs() <= 5.0 * se,
                    "spec {si} p={p}: mc {mean} vs s_p {} (se {se})",
                    s[p - 1]
                );
            }
        }
    }
}
