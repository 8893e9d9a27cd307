//! Replicated Monte Carlo experiments against the analytic limits.
//!
//! Three experiment families are supported: central limit checks for the
//! four estimators (standardized errors against the theoretical covariances),
//! the quadratic strong law (a Cesaro average of weighted quadratic errors
//! against its trace limit), and almost-sure rate checks (normalized squared
//! errors stay bounded in the generation count).
//!
//! Replicates run concurrently; replicate r always uses the derived seed
//! `mix_seed(master_seed, r)` and all reductions walk the replicate results
//! in index order, so reports are bitwise reproducible regardless of the
//! thread schedule.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::{estimate_second_order, estimate_theta};
use crate::linalg::{Mat2, Mat4};
use crate::model::{derive_moment_set, validate_hypotheses, ModelSpec, MomentSet};
use crate::simulate::{replicate_seed, simulate_tree};
use crate::theory::{c_matrix, d_matrix, l_matrix, limit_matrices, s_moments};
use crate::tree::{tree_size, Tree};

/// Which statistic an experiment validates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    CltTheta,
    CltEta,
    CltZeta,
    CltNu,
    Qsl,
    Rate,
}

impl Mode {
    pub fn parse(s: &str) -> Result<Mode> {
        Ok(match s {
            "clt_theta" => Mode::CltTheta,
            "clt_eta" => Mode::CltEta,
            "clt_zeta" => Mode::CltZeta,
            "clt_nu" => Mode::CltNu,
            "qsl" => Mode::Qsl,
            "rate" => Mode::Rate,
            other => {
                return Err(Error::InvalidArgument(format!(
                    "unknown mode {other:?}; expected clt_theta, clt_eta, clt_zeta, clt_nu, qsl or rate"
                )))
            }
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Mode::CltTheta => "clt_theta",
            Mode::CltEta => "clt_eta",
            Mode::CltZeta => "clt_zeta",
            Mode::CltNu => "clt_nu",
            Mode::Qsl => "qsl",
            Mode::Rate => "rate",
        }
    }

    fn is_clt(&self) -> bool {
        matches!(self, Mode::CltTheta | Mode::CltEta | Mode::CltZeta | Mode::CltNu)
    }
}

/// One replicated experiment.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub spec: ModelSpec,
    pub n_generations: usize,
    pub replicates: usize,
    pub master_seed: u64,
    pub mode: Mode,
    /// Frobenius tolerance for the covariance comparison; defaults to 0.15
    /// for the four-dimensional theta CLT and 0.20 for the two-dimensional
    /// second-order CLTs.
    #[serde(default)]
    pub tol_cov: Option<f64>,
    /// Level of the Kolmogorov-Smirnov gate; defaults to 0.01.
    #[serde(default)]
    pub ks_level: Option<f64>,
}

impl ExperimentConfig {
    pub fn new(spec: ModelSpec, mode: Mode, n_generations: usize, replicates: usize, master_seed: u64) -> Self {
        ExperimentConfig {
            spec,
            n_generations,
            replicates,
            master_seed,
            mode,
            tol_cov: None,
            ks_level: None,
        }
    }

    pub fn tol_cov(&self) -> f64 {
        self.tol_cov.unwrap_or(match self.mode {
            Mode::CltTheta => 0.15,
            _ => 0.20,
        })
    }

    pub fn ks_level(&self) -> f64 {
        self.ks_level.unwrap_or(0.01)
    }

    fn validate(&self) -> Result<()> {
        if self.n_generations < 4 {
            return Err(Error::InvalidArgument(format!(
                "experiments need at least 4 generations, got {}",
                self.n_generations
            )));
        }
        if self.replicates < 1 {
            return Err(Error::InvalidArgument("at least one replicate is required".into()));
        }
        if self.mode.is_clt() && self.replicates < 30 {
            return Err(Error::InvalidArgument(format!(
                "distributional tests need at least 30 replicates, got {}",
                self.replicates
            )));
        }
        Ok(())
    }
}

/// CDF of the chi-square distribution with 2 or 4 degrees of freedom
/// (closed forms of the regularized incomplete gamma at integer shape).
pub fn chi2_cdf(x: f64, dof: usize) -> Result<f64> {
    if x <= 0.0 {
        return Ok(0.0);
    }
    let h = x / 2.0;
    match dof {
        2 => Ok(1.0 - (-h).exp()),
        4 => Ok(1.0 - (-h).exp() * (1.0 + h)),
        other => Err(Error::InvalidArgument(format!(
            "chi-square CDF implemented for 2 and 4 degrees of freedom, got {other}"
        ))),
    }
}

/// Kolmogorov-Smirnov distance between the empirical CDF of `values` and the
/// chi-square CDF with `dof` degrees of freedom.
pub fn ks_distance_vs_chi2(values: &[f64], dof: usize) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InvalidArgument("KS distance needs at least one value".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let n = sorted.len() as f64;
    let mut ks = 0.0f64;
    for (i, v) in sorted.iter().enumerate() {
        let f = chi2_cdf(*v, dof)?;
        let lo = i as f64 / n;
        let hi = (i + 1) as f64 / n;
        ks = ks.max((f - lo).max(hi - f));
    }
    Ok(ks)
}

/// Asymptotic Kolmogorov-Smirnov critical value c(level) / sqrt(r), with
/// c(level) = sqrt(-ln(level / 2) / 2); c(0.01) is approximately 1.63.
pub fn ks_critical(replicates: usize, level: f64) -> f64 {
    (-(level / 2.0).ln() / 2.0).sqrt() / (replicates as f64).sqrt()
}

/// Unbiased sample covariance (divisor R - 1) of row-major samples.
pub fn sample_covariance(samples: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let r = samples.len();
    if r < 2 {
        return Err(Error::InvalidArgument(format!(
            "covariance needs at least 2 samples, got {r}"
        )));
    }
    let p = samples[0].len();
    let mut mean = vec![0.0f64; p];
    for row in samples {
        for (m, v) in mean.iter_mut().zip(row.iter()) {
            *m += v;
        }
    }
    for m in mean.iter_mut() {
        *m /= r as f64;
    }
    let mut cov = vec![vec![0.0f64; p]; p];
    for row in samples {
        for i in 0..p {
            let di = row[i] - mean[i];
            for j in 0..p {
                cov[i][j] += di * (row[j] - mean[j]);
            }
        }
    }
    for row in cov.iter_mut() {
        for v in row.iter_mut() {
            *v /= (r - 1) as f64;
        }
    }
    Ok(cov)
}

/// Relative error in Frobenius norm of `emp` against `reference`.
pub fn frobenius_rel_err(emp: &[Vec<f64>], reference: &[Vec<f64>]) -> f64 {
    let mut diff = 0.0f64;
    let mut norm = 0.0f64;
    for (er, rr) in emp.iter().zip(reference.iter()) {
        for (e, r) in er.iter().zip(rr.iter()) {
            diff += (e - r) * (e - r);
            norm += r * r;
        }
    }
    if norm == 0.0 {
        return if diff == 0.0 { 0.0 } else { f64::INFINITY };
    }
    (diff / norm).sqrt()
}

/// Sample covariance plus its Frobenius relative error against a reference.
pub fn summarize_covariance(
    samples: &[Vec<f64>],
    reference: &[Vec<f64>],
) -> Result<(Vec<Vec<f64>>, f64)> {
    let cov = sample_covariance(samples)?;
    let rel = frobenius_rel_err(&cov, reference);
    Ok((cov, rel))
}

fn mat2_rows(m: &Mat2) -> Vec<Vec<f64>> {
    m.0.iter().map(|r| r.to_vec()).collect()
}

fn mat4_rows(m: &Mat4) -> Vec<Vec<f64>> {
    m.0.iter().map(|r| r.to_vec()).collect()
}

/// The estimate vector a CLT mode standardizes, from one simulated tree.
fn estimate_vector(tree: &Tree, mode: Mode) -> Result<Vec<f64>> {
    let theta = estimate_theta(tree)?;
    Ok(match mode {
        Mode::CltTheta => theta.vec().to_vec(),
        Mode::CltEta => estimate_second_order(tree, &theta)?.eta_hat.to_vec(),
        Mode::CltZeta => estimate_second_order(tree, &theta)?.zeta_hat.to_vec(),
        Mode::CltNu => estimate_second_order(tree, &theta)?.nu_hat.to_vec(),
        Mode::Qsl | Mode::Rate => {
            return Err(Error::InvalidArgument(
                "estimate_vector is only defined for CLT modes".into(),
            ))
        }
    })
}

fn truth_vector(m: &MomentSet, mode: Mode) -> Vec<f64> {
    match mode {
        Mode::CltTheta => m.theta_vec().to_vec(),
        Mode::CltEta => m.eta_vec().to_vec(),
        Mode::CltZeta => m.zeta_vec().to_vec(),
        Mode::CltNu => m.nu_vec().to_vec(),
        Mode::Qsl | Mode::Rate => unreachable!("no truth vector for {mode:?}"),
    }
}

/// One standardized replicate: sqrt(|T_{n-1}|) (estimate - truth).
pub(crate) fn standardized_sample(
    spec: &ModelSpec,
    mode: Mode,
    n_generations: usize,
    truth: &[f64],
    seed: u64,
) -> Result<Vec<f64>> {
    let tree = simulate_tree(spec, n_generations, seed)?;
    let est = estimate_vector(&tree, mode)?;
    let scale = (tree.parent_count() as f64).sqrt();
    Ok(est
        .iter()
        .zip(truth.iter())
        .map(|(e, t)| scale * (e - t))
        .collect())
}

fn gate_clt(m: &MomentSet) -> Result<()> {
    let report = validate_hypotheses(m);
    if !report.theory_valid_for_clt {
        let failed: Vec<&str> = report
            .checks()
            .iter()
            .filter(|c| !c.passed)
            .map(|c| c.name.as_str())
            .collect();
        return Err(Error::HypothesisGate(failed.join(", ")));
    }
    Ok(())
}

fn check_failures(failed: usize, total: usize) -> Result<()> {
    // failed / total > 1%
    if failed * 100 > total {
        return Err(Error::TooManyFailures { failed, total });
    }
    Ok(())
}

/// Report of one central-limit experiment.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CltReport {
    pub mode: Mode,
    pub n_generations: usize,
    pub replicates_requested: usize,
    pub replicates_used: usize,
    pub failed_replicates: usize,
    pub dimension: usize,
    /// sqrt(|T_{n-1}|) (estimate - truth), one row per surviving replicate.
    pub standardized_samples: Vec<Vec<f64>>,
    pub empirical_cov: Vec<Vec<f64>>,
    pub theoretical_cov: Vec<Vec<f64>>,
    pub frobenius_rel_err: f64,
    pub tol_cov: f64,
    /// Quadratic forms of the samples with the inverse theoretical covariance.
    pub mahalanobis: Vec<f64>,
    pub ks_distance_chi2: f64,
    pub ks_critical: f64,
    pub ks_level: f64,
    pub pass: bool,
}

/// Run a CLT experiment: standardize replicate estimates, compare their
/// covariance against the theoretical one and their Mahalanobis distances
/// against the chi-square law.
pub fn run_clt_experiment(cfg: &ExperimentConfig) -> Result<CltReport> {
    cfg.validate()?;
    if !cfg.mode.is_clt() {
        return Err(Error::InvalidArgument(format!(
            "run_clt_experiment expects a CLT mode, got {}",
            cfg.mode.name()
        )));
    }
    let spec = cfg.spec.normalized()?;
    let m = derive_moment_set(&spec)?;
    gate_clt(&m)?;
    let limits = limit_matrices(&m)?;

    let (dimension, theoretical_cov, cov_inverse): (usize, Vec<Vec<f64>>, Vec<Vec<f64>>) =
        match cfg.mode {
            Mode::CltTheta => {
                let cov = limits.clt_cov_theta;
                let inv = cov.inverse_spd("clt covariance")?;
                (4, mat4_rows(&cov), mat4_rows(&inv))
            }
            _ => {
                let cov = match cfg.mode {
                    Mode::CltEta => limits.clt_cov_eta,
                    Mode::CltZeta => limits.clt_cov_zeta,
                    Mode::CltNu => limits.clt_cov_nu,
                    _ => unreachable!(),
                };
                cov.cholesky()
                    .ok_or(Error::NotPositiveDefinite("clt covariance"))?;
                let inv = cov
                    .inverse_sym("clt covariance")
                    .map_err(|_| Error::NotPositiveDefinite("clt covariance"))?;
                (2, mat2_rows(&cov), mat2_rows(&inv))
            }
        };

    let truth = truth_vector(&m, cfg.mode);
    let results: Vec<Option<Vec<f64>>> = (0..cfg.replicates as u64)
        .into_par_iter()
        .map(|r| {
            standardized_sample(
                &spec,
                cfg.mode,
                cfg.n_generations,
                &truth,
                replicate_seed(cfg.master_seed, r),
            )
            .ok()
        })
        .collect();

    let standardized_samples: Vec<Vec<f64>> = results.into_iter().flatten().collect();
    let failed = cfg.replicates - standardized_samples.len();
    check_failures(failed, cfg.replicates)?;

    let (empirical_cov, rel_err) = summarize_covariance(&standardized_samples, &theoretical_cov)?;
    let mahalanobis: Vec<f64> = standardized_samples
        .iter()
        .map(|x| {
            let mut acc = 0.0;
            for i in 0..dimension {
                for j in 0..dimension {
                    acc += x[i] * cov_inverse[i][j] * x[j];
                }
            }
            acc
        })
        .collect();
    let ks = ks_distance_vs_chi2(&mahalanobis, dimension)?;
    let ks_crit = ks_critical(standardized_samples.len(), cfg.ks_level());
    let pass = rel_err <= cfg.tol_cov() && ks <= ks_crit;

    Ok(CltReport {
        mode: cfg.mode,
        n_generations: cfg.n_generations,
        replicates_requested: cfg.replicates,
        replicates_used: standardized_samples.len(),
        failed_replicates: failed,
        dimension,
        standardized_samples,
        empirical_cov,
        theoretical_cov,
        frobenius_rel_err: rel_err,
        tol_cov: cfg.tol_cov(),
        mahalanobis,
        ks_distance_chi2: ks,
        ks_critical: ks_crit,
        ks_level: cfg.ks_level(),
        pass,
    })
}

/// Report of one quadratic-strong-law experiment.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct QslReport {
    pub n_generations: usize,
    pub replicates_requested: usize,
    pub replicates_used: usize,
    pub failed_replicates: usize,
    /// Replicate-averaged running statistic q_k for k = 1..n (index k - 1).
    pub running_statistic: Vec<f64>,
    /// tr(Lambda^-1/2 L Lambda^-1/2), or 0 for an all-degenerate model.
    pub limit: f64,
    /// |q_n - limit| / limit; absent when the limit is zero.
    pub final_rel_err: Option<f64>,
    /// True when L = 0, where the statistic is identically zero and no
    /// relative error is defined.
    pub degenerate_limit: bool,
}

/// Run the quadratic strong law experiment.
///
/// The running statistic is q_n = (1/n) sum_k |T_{k-1}| e_k^t W e_k with
/// e_k the estimation error after k generations and the weight
/// W = Gamma Lambda^-1 Gamma. With that weight the Cesaro average converges
/// to tr(Lambda^-1/2 L Lambda^-1/2); the first term (k = 1, a single parent,
/// singular design) is left out and counts as zero.
pub fn run_qsl_experiment(cfg: &ExperimentConfig) -> Result<QslReport> {
    cfg.validate()?;
    if cfg.mode != Mode::Qsl {
        return Err(Error::InvalidArgument(format!(
            "run_qsl_experiment expects mode qsl, got {}",
            cfg.mode.name()
        )));
    }
    let spec = cfg.spec.normalized()?;
    let m = derive_moment_set(&spec)?;
    let s = s_moments(&m, 4)?;
    let c = c_matrix(&s);
    let d = d_matrix(&s);
    let l = l_matrix(&m, &s);
    let identity = Mat2::identity();
    let degenerate_limit = l.is_zero();
    let (weight, limit) = if degenerate_limit {
        // no noise at all: the statistic is identically zero; keep the
        // Lambda weight as a plain quadratic form (no inversion involved)
        (Mat4::kron(&identity, &c.add(&d)), 0.0)
    } else {
        let gamma = Mat4::kron(&identity, &c);
        let lambda = Mat4::kron(&identity, &c.add(&d));
        let lambda_inv = lambda.inverse_spd("Lambda")?;
        let weight = gamma.mul(&lambda_inv).mul(&gamma);
        let cd_inv_sqrt = c.add(&d).inv_sqrt_sym("Lambda")?;
        let lam_inv_sqrt = Mat4::kron(&identity, &cd_inv_sqrt);
        (weight, lam_inv_sqrt.mul(&l).mul(&lam_inv_sqrt).trace())
    };

    let truth = m.theta_vec();
    let n = cfg.n_generations;
    // per replicate: the per-generation weighted error terms
    let results: Vec<Option<Vec<f64>>> = (0..cfg.replicates as u64)
        .into_par_iter()
        .map(|r| {
            let tree = simulate_tree(&spec, n, replicate_seed(cfg.master_seed, r)).ok()?;
            let mut terms = vec![0.0f64; n];
            for k in 2..=n {
                let prefix = tree.truncated(k).ok()?;
                let theta = estimate_theta(&prefix).ok()?;
                let est = theta.vec();
                let mut err = [0.0f64; 4];
                for i in 0..4 {
                    err[i] = est[i] - truth[i];
                }
                terms[k - 1] = tree_size(k - 1) as f64 * weight.quadratic_form(err);
            }
            Some(terms)
        })
        .collect();

    let survivors: Vec<Vec<f64>> = results.into_iter().flatten().collect();
    let failed = cfg.replicates - survivors.len();
    check_failures(failed, cfg.replicates)?;
    if survivors.is_empty() {
        return Err(Error::TooManyFailures { failed, total: cfg.replicates });
    }

    // replicate-average the per-generation terms, then form running means
    let mut mean_terms = vec![0.0f64; n];
    for terms in &survivors {
        for (acc, t) in mean_terms.iter_mut().zip(terms.iter()) {
            *acc += t;
        }
    }
    for t in mean_terms.iter_mut() {
        *t /= survivors.len() as f64;
    }
    let mut running_statistic = vec![0.0f64; n];
    let mut acc = 0.0f64;
    for k in 1..=n {
        acc += mean_terms[k - 1];
        running_statistic[k - 1] = acc / k as f64;
    }

    let q_final = running_statistic[n - 1];
    let final_rel_err = if degenerate_limit {
        None
    } else {
        Some((q_final - limit).abs() / limit)
    };

    Ok(QslReport {
        n_generations: n,
        replicates_requested: cfg.replicates,
        replicates_used: survivors.len(),
        failed_replicates: failed,
        running_statistic,
        limit,
        final_rel_err,
        degenerate_limit,
    })
}

/// Report of one rate experiment.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RateReport {
    pub n_generations: usize,
    pub replicates_requested: usize,
    pub replicates_used: usize,
    pub failed_replicates: usize,
    /// Generations the medians below refer to (4..=n).
    pub generations: Vec<usize>,
    /// Replicate medians of ||theta_hat - theta||^2 |T_{g-1}| / g.
    pub theta_median: Vec<f64>,
    /// Same normalization for the eta estimate.
    pub eta_median: Vec<f64>,
    /// Same normalization for the zeta estimate.
    pub zeta_median: Vec<f64>,
    /// Same normalization for the nu estimate.
    pub nu_median: Vec<f64>,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Run the almost-sure rate experiment: per generation g in 4..=n, the
/// normalized squared errors ||estimate - truth||^2 |T_{g-1}| / g for all
/// four estimators, summarized by replicate medians.
pub fn run_rate_experiment(cfg: &ExperimentConfig) -> Result<RateReport> {
    cfg.validate()?;
    if cfg.mode != Mode::Rate {
        return Err(Error::InvalidArgument(format!(
            "run_rate_experiment expects mode rate, got {}",
            cfg.mode.name()
        )));
    }
    let spec = cfg.spec.normalized()?;
    let m = derive_moment_set(&spec)?;
    let theta_truth = m.theta_vec();
    let eta_truth = m.eta_vec();
    let zeta_truth = m.zeta_vec();
    let nu_truth = m.nu_vec();
    let n = cfg.n_generations;
    let generations: Vec<usize> = (4..=n).collect();

    // per replicate: rows of (theta, eta, zeta, nu) normalized errors
    let results: Vec<Option<Vec<[f64; 4]>>> = (0..cfg.replicates as u64)
        .into_par_iter()
        .map(|r| {
            let tree = simulate_tree(&spec, n, replicate_seed(cfg.master_seed, r)).ok()?;
            let mut rows = Vec::with_capacity(generations.len());
            for &g in &generations {
                let prefix = tree.truncated(g).ok()?;
                let theta = estimate_theta(&prefix).ok()?;
                let second = estimate_second_order(&prefix, &theta).ok()?;
                let norm = tree_size(g - 1) as f64 / g as f64;
                rows.push([
                    squared_distance(&theta.vec(), &theta_truth) * norm,
                    squared_distance(&second.eta_hat, &eta_truth) * norm,
                    squared_distance(&second.zeta_hat, &zeta_truth) * norm,
                    squared_distance(&second.nu_hat, &nu_truth) * norm,
                ]);
            }
            Some(rows)
        })
        .collect();

    let survivors: Vec<Vec<[f64; 4]>> = results.into_iter().flatten().collect();
    let failed = cfg.replicates - survivors.len();
    check_failures(failed, cfg.replicates)?;
    if survivors.is_empty() {
        return Err(Error::TooManyFailures { failed, total: cfg.replicates });
    }

    let mut medians: [Vec<f64>; 4] = Default::default();
    for gi in 0..generations.len() {
        for (comp, out) in medians.iter_mut().enumerate() {
            let mut column: Vec<f64> = survivors.iter().map(|rows| rows[gi][comp]).collect();
            out.push(median(&mut column));
        }
    }
    let [theta_median, eta_median, zeta_median, nu_median] = medians;

    Ok(RateReport {
        n_generations: n,
        replicates_requested: cfg.replicates,
        replicates_used: survivors.len(),
        failed_replicates: failed,
        generations,
        theta_median,
        eta_median,
        zeta_median,
        nu_median,
    })
}
