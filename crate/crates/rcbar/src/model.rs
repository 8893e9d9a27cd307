//! Generative model description and its exact moments.
//!
//! The coefficient pair, the noise pair and the initial value are restricted
//! to families whose moments are available in closed form (bivariate Gaussian,
//! independent uniform, degenerate). That keeps every limit quantity of the
//! theory exact: no numerical integration is involved anywhere downstream.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Highest raw-moment order kept in a [`MomentSet`].
pub const MAX_RAW_ORDER: usize = 16;

/// Which marginal of a pair law is being queried.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Marginal {
    X,
    Y,
}

/// Law of an i.i.d. pair: either the coefficient pair or the noise pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PairLaw {
    BivariateGaussian {
        mean_x: f64,
        mean_y: f64,
        sd_x: f64,
        sd_y: f64,
        corr: f64,
    },
    IndependentUniform {
        lo_x: f64,
        hi_x: f64,
        lo_y: f64,
        hi_y: f64,
    },
    Degenerate {
        value_x: f64,
        value_y: f64,
    },
}

impl PairLaw {
    pub fn validate(&self) -> Result<()> {
        let finite = |v: f64, what: &str| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidLaw(format!("{what} must be finite, got {v}")))
            }
        };
        match *self {
            PairLaw::BivariateGaussian {
                mean_x,
                mean_y,
                sd_x,
                sd_y,
                corr,
            } => {
                finite(mean_x, "mean_x")?;
                finite(mean_y, "mean_y")?;
                finite(sd_x, "sd_x")?;
                finite(sd_y, "sd_y")?;
                finite(corr, "corr")?;
                if sd_x < 0.0 || sd_y < 0.0 {
                    return Err(Error::InvalidLaw(format!(
                        "standard deviations must be >= 0, got sd_x={sd_x}, sd_y={sd_y}"
                    )));
                }
                if corr.abs() > 1.0 {
                    return Err(Error::InvalidLaw(format!("|corr| must be <= 1, got {corr}")));
                }
                Ok(())
            }
            PairLaw::IndependentUniform { lo_x, hi_x, lo_y, hi_y } => {
                finite(lo_x, "lo_x")?;
                finite(hi_x, "hi_x")?;
                finite(lo_y, "lo_y")?;
                finite(hi_y, "hi_y")?;
                if lo_x >= hi_x || lo_y >= hi_y {
                    return Err(Error::InvalidLaw(format!(
                        "uniform bounds must satisfy lo < hi, got x: [{lo_x}, {hi_x}], y: [{lo_y}, {hi_y}]"
                    )));
                }
                Ok(())
            }
            PairLaw::Degenerate { value_x, value_y } => {
                finite(value_x, "value_x")?;
                finite(value_y, "value_y")?;
                Ok(())
            }
        }
    }

    /// Validated copy with the `corr` field normalized to 0 when either
    /// Gaussian marginal has zero standard deviation.
    pub fn normalized(&self) -> Result<PairLaw> {
        self.validate()?;
        let mut law = self.clone();
        if let PairLaw::BivariateGaussian { sd_x, sd_y, corr, .. } = &mut law {
            if *sd_x == 0.0 || *sd_y == 0.0 {
                *corr = 0.0;
            }
        }
        Ok(law)
    }

    pub fn mean(&self, marginal: Marginal) -> f64 {
        match (self, marginal) {
            (PairLaw::BivariateGaussian { mean_x, .. }, Marginal::X) => *mean_x,
            (PairLaw::BivariateGaussian { mean_y, .. }, Marginal::Y) => *mean_y,
            (PairLaw::IndependentUniform { lo_x, hi_x, .. }, Marginal::X) => (lo_x + hi_x) / 2.0,
            (PairLaw::IndependentUniform { lo_y, hi_y, .. }, Marginal::Y) => (lo_y + hi_y) / 2.0,
            (PairLaw::Degenerate { value_x, .. }, Marginal::X) => *value_x,
            (PairLaw::Degenerate { value_y, .. }, Marginal::Y) => *value_y,
        }
    }
}

/// Law of the root value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialLaw {
    Constant { value: f64 },
    Gaussian { mean: f64, sd: f64 },
}

impl Default for InitialLaw {
    fn default() -> Self {
        InitialLaw::Constant { value: 1.0 }
    }
}

impl InitialLaw {
    pub fn validate(&self) -> Result<()> {
        match *self {
            InitialLaw::Constant { value } => {
                if !value.is_finite() {
                    return Err(Error::InvalidLaw(format!("initial value must be finite, got {value}")));
                }
            }
            InitialLaw::Gaussian { mean, sd } => {
                if !mean.is_finite() || !sd.is_finite() || sd < 0.0 {
                    return Err(Error::InvalidLaw(format!(
                        "initial Gaussian needs finite mean and sd >= 0, got mean={mean}, sd={sd}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Full generative description of the process.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    /// Law of the coefficient pair multiplying the parent value.
    pub coeff_law: PairLaw,
    /// Law of the sibling noise pair.
    pub noise_law: PairLaw,
    /// Law of the root value.
    #[serde(default)]
    pub initial: InitialLaw,
}

impl ModelSpec {
    /// Validate all component laws and normalize degenerate correlations.
    pub fn normalized(&self) -> Result<ModelSpec> {
        let coeff_law = self.coeff_law.normalized()?;
        let noise_law = self.noise_law.normalized()?;
        self.initial.validate()?;
        Ok(ModelSpec {
            coeff_law,
            noise_law,
            initial: self.initial.clone(),
        })
    }
}

/// Double factorial (j - 1)!! for even j, i.e. the raw moment E[Z^j] of a
/// standard normal. Indexed by j / 2.
const EVEN_NORMAL_MOMENTS: [f64; 9] = [
    1.0, 1.0, 3.0, 15.0, 105.0, 945.0, 10395.0, 135135.0, 2027025.0,
];

fn binomial(n: usize, k: usize) -> f64 {
    let mut acc = 1.0f64;
    for i in 0..k.min(n - k) {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc
}

/// Exact raw moment E[Z^p] of one marginal of a pair law, for p in 1..=16.
pub fn raw_moment(law: &PairLaw, marginal: Marginal, p: usize) -> Result<f64> {
    if p == 0 || p > MAX_RAW_ORDER {
        return Err(Error::InvalidArgument(format!(
            "raw moment order must be in 1..={MAX_RAW_ORDER}, got {p}"
        )));
    }
    law.validate()?;
    let value = match *law {
        PairLaw::BivariateGaussian { mean_x, mean_y, sd_x, sd_y, .. } => {
            let (mean, sd) = match marginal {
                Marginal::X => (mean_x, sd_x),
                Marginal::Y => (mean_y, sd_y),
            };
            // E[(m + s Z)^p] expanded over the even central moments of Z
            let mut acc = 0.0;
            for j in (0..=p).step_by(2) {
                acc += binomial(p, j)
                    * mean.powi((p - j) as i32)
                    * sd.powi(j as i32)
                    * EVEN_NORMAL_MOMENTS[j / 2];
            }
            acc
        }
        PairLaw::IndependentUniform { lo_x, hi_x, lo_y, hi_y } => {
            let (lo, hi) = match marginal {
                Marginal::X => (lo_x, hi_x),
                Marginal::Y => (lo_y, hi_y),
            };
            let q = (p + 1) as i32;
            (hi.powi(q) - lo.powi(q)) / (q as f64 * (hi - lo))
        }
        PairLaw::Degenerate { value_x, value_y } => match marginal {
            Marginal::X => value_x.powi(p as i32),
            Marginal::Y => value_y.powi(p as i32),
        },
    };
    Ok(value)
}

/// Central moments of a pair law up to order four, plus the mixed moments.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CentralPairMoments {
    pub sigma2_x: f64,
    pub sigma2_y: f64,
    /// Covariance E[(X - EX)(Y - EY)].
    pub rho: f64,
    pub mu4_x: f64,
    pub mu4_y: f64,
    /// Mixed moment E[(X - EX)^2 (Y - EY)^2].
    pub nu2: f64,
}

/// Exact central moments of a pair law.
pub fn central_pair_moments(law: &PairLaw) -> Result<CentralPairMoments> {
    let law = law.normalized()?;
    Ok(match law {
        PairLaw::BivariateGaussian { sd_x, sd_y, corr, .. } => {
            let sigma2_x = sd_x * sd_x;
            let sigma2_y = sd_y * sd_y;
            let mut rho = corr * sd_x * sd_y;
            // keep the Cauchy-Schwarz invariant exact under rounding
            let bound = sigma2_x * sigma2_y;
            if rho * rho > bound {
                rho = rho.signum() * bound.sqrt();
                while rho * rho > bound {
                    rho = if rho > 0.0 { rho.next_down() } else { rho.next_up() };
                }
            }
            CentralPairMoments {
                sigma2_x,
                sigma2_y,
                rho,
                mu4_x: 3.0 * sigma2_x * sigma2_x,
                mu4_y: 3.0 * sigma2_y * sigma2_y,
                // Isserlis: E[U^2 V^2] for centered jointly Gaussian (U, V)
                nu2: sigma2_x * sigma2_y * (1.0 + 2.0 * corr * corr),
            }
        }
        PairLaw::IndependentUniform { lo_x, hi_x, lo_y, hi_y } => {
            let wx = hi_x - lo_x;
            let wy = hi_y - lo_y;
            let sigma2_x = wx * wx / 12.0;
            let sigma2_y = wy * wy / 12.0;
            CentralPairMoments {
                sigma2_x,
                sigma2_y,
                rho: 0.0,
                mu4_x: wx.powi(4) / 80.0,
                mu4_y: wy.powi(4) / 80.0,
                nu2: sigma2_x * sigma2_y,
            }
        }
        PairLaw::Degenerate { .. } => CentralPairMoments {
            sigma2_x: 0.0,
            sigma2_y: 0.0,
            rho: 0.0,
            mu4_x: 0.0,
            mu4_y: 0.0,
            nu2: 0.0,
        },
    })
}

/// Every analytic moment the estimators and the limit theory consume.
///
/// Raw-moment arrays are indexed so that `raw_a[p - 1] = E[a^p]`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MomentSet {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub sigma_a2: f64,
    pub sigma_b2: f64,
    pub sigma_c2: f64,
    pub sigma_d2: f64,
    pub rho_ab: f64,
    pub rho_cd: f64,
    pub mu_a4: f64,
    pub mu_b4: f64,
    pub mu_c4: f64,
    pub mu_d4: f64,
    pub nu_ab2: f64,
    pub nu_cd2: f64,
    pub raw_a: [f64; MAX_RAW_ORDER],
    pub raw_b: [f64; MAX_RAW_ORDER],
    pub raw_c: [f64; MAX_RAW_ORDER],
    pub raw_d: [f64; MAX_RAW_ORDER],
}

impl MomentSet {
    /// True parameter vector (a, c, b, d) in estimator ordering.
    pub fn theta_vec(&self) -> [f64; 4] {
        [self.a, self.c, self.b, self.d]
    }

    /// True variance vector of the even-child noise: (sigma_a^2, sigma_c^2).
    pub fn eta_vec(&self) -> [f64; 2] {
        [self.sigma_a2, self.sigma_c2]
    }

    /// True variance vector of the odd-child noise: (sigma_b^2, sigma_d^2).
    pub fn zeta_vec(&self) -> [f64; 2] {
        [self.sigma_b2, self.sigma_d2]
    }

    /// True covariance vector: (rho_ab, rho_cd).
    pub fn nu_vec(&self) -> [f64; 2] {
        [self.rho_ab, self.rho_cd]
    }
}

fn raw_moments(law: &PairLaw, marginal: Marginal) -> Result<[f64; MAX_RAW_ORDER]> {
    let mut out = [0.0; MAX_RAW_ORDER];
    for p in 1..=MAX_RAW_ORDER {
        out[p - 1] = raw_moment(law, marginal, p)?;
    }
    Ok(out)
}

/// Populate the full moment set of a model.
pub fn derive_moment_set(spec: &ModelSpec) -> Result<MomentSet> {
    let spec = spec.normalized()?;
    let coeff = central_pair_moments(&spec.coeff_law)?;
    let noise = central_pair_moments(&spec.noise_law)?;
    Ok(MomentSet {
        a: spec.coeff_law.mean(Marginal::X),
        b: spec.coeff_law.mean(Marginal::Y),
        c: spec.noise_law.mean(Marginal::X),
        d: spec.noise_law.mean(Marginal::Y),
        sigma_a2: coeff.sigma2_x,
        sigma_b2: coeff.sigma2_y,
        sigma_c2: noise.sigma2_x,
        sigma_d2: noise.sigma2_y,
        rho_ab: coeff.rho,
        rho_cd: noise.rho,
        mu_a4: coeff.mu4_x,
        mu_b4: coeff.mu4_y,
        mu_c4: noise.mu4_x,
        mu_d4: noise.mu4_y,
        nu_ab2: coeff.nu2,
        nu_cd2: noise.nu2,
        raw_a: raw_moments(&spec.coeff_law, Marginal::X)?,
        raw_b: raw_moments(&spec.coeff_law, Marginal::Y)?,
        raw_c: raw_moments(&spec.noise_law, Marginal::X)?,
        raw_d: raw_moments(&spec.noise_law, Marginal::Y)?,
    })
}

/// Outcome of a single hypothesis check.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HypothesisCheck {
    pub name: String,
    pub passed: bool,
    /// The numeric value the check hinges on (the offending one on failure).
    pub value: f64,
    pub detail: String,
}

impl HypothesisCheck {
    fn new(name: &str, passed: bool, value: f64, detail: String) -> Self {
        HypothesisCheck {
            name: name.to_string(),
            passed,
            value,
            detail,
        }
    }
}

/// Full hypothesis report for a moment set.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HypothesisReport {
    /// Contraction of the 16th coefficient moments plus finite noise moments.
    pub h1: HypothesisCheck,
    /// Same check at order 8; enough for the consistency results alone.
    pub h1_eighth: HypothesisCheck,
    /// Strictly positive noise variances.
    pub h2: HypothesisCheck,
    /// Cauchy-Schwarz bounds on the covariances (strict on the noise side).
    pub h3: HypothesisCheck,
    /// Fourth-moment conditions.
    pub h4: HypothesisCheck,
    /// Moments of order alpha > 4; satisfied by construction for the
    /// supported families, which all have finite moments of every order.
    pub h5: HypothesisCheck,
    pub can_simulate: bool,
    pub theory_valid_for_consistency: bool,
    pub theory_valid_for_clt: bool,
}

impl HypothesisReport {
    pub fn checks(&self) -> [&HypothesisCheck; 6] {
        [
            &self.h1,
            &self.h1_eighth,
            &self.h2,
            &self.h3,
            &self.h4,
            &self.h5,
        ]
    }
}

/// Evaluate the model hypotheses numerically.
pub fn validate_hypotheses(m: &MomentSet) -> HypothesisReport {
    let a16 = m.raw_a[15];
    let b16 = m.raw_b[15];
    let h1_pass = a16 < 1.0 && b16 < 1.0;
    let h1 = HypothesisCheck::new(
        "H1",
        h1_pass,
        a16.max(b16),
        format!("E[a^16] = {a16:.6e}, E[b^16] = {b16:.6e} (both must be < 1)"),
    );

    let a8 = m.raw_a[7];
    let b8 = m.raw_b[7];
    let h1_eighth = HypothesisCheck::new(
        "H1(order 8)",
        a8 < 1.0 && b8 < 1.0,
        a8.max(b8),
        format!("E[a^8] = {a8:.6e}, E[b^8] = {b8:.6e} (both must be < 1)"),
    );

    let h2_pass = m.sigma_c2 > 0.0 && m.sigma_d2 > 0.0;
    let h2 = HypothesisCheck::new(
        "H2",
        h2_pass,
        m.sigma_c2.min(m.sigma_d2),
        format!(
            "sigma_c^2 = {:.6e}, sigma_d^2 = {:.6e} (both must be > 0)",
            m.sigma_c2, m.sigma_d2
        ),
    );

    let ab_ok = m.rho_ab * m.rho_ab <= m.sigma_a2 * m.sigma_b2;
    let cd_ok = m.rho_cd * m.rho_cd < m.sigma_c2 * m.sigma_d2;
    let h3 = HypothesisCheck::new(
        "H3",
        ab_ok && cd_ok,
        m.rho_cd * m.rho_cd - m.sigma_c2 * m.sigma_d2,
        format!(
            "rho_ab^2 = {:.6e} vs sigma_a^2 sigma_b^2 = {:.6e} (<=); rho_cd^2 = {:.6e} vs sigma_c^2 sigma_d^2 = {:.6e} (<)",
            m.rho_ab * m.rho_ab,
            m.sigma_a2 * m.sigma_b2,
            m.rho_cd * m.rho_cd,
            m.sigma_c2 * m.sigma_d2
        ),
    );

    let raw4_c = m.raw_c[3];
    let raw2_c = m.raw_c[1];
    let raw4_d = m.raw_d[3];
    let raw2_d = m.raw_d[1];
    let h4_pass = m.mu_a4 >= m.sigma_a2 * m.sigma_a2
        && m.mu_b4 >= m.sigma_b2 * m.sigma_b2
        && m.mu_c4 > m.sigma_c2 * m.sigma_c2
        && m.mu_d4 > m.sigma_d2 * m.sigma_d2
        && raw4_c > raw2_c * raw2_c
        && raw4_d > raw2_d * raw2_d
        && m.nu_ab2 >= m.rho_ab * m.rho_ab
        && m.nu_cd2 > m.rho_cd * m.rho_cd;
    let h4 = HypothesisCheck::new(
        "H4",
        h4_pass,
        m.nu_cd2 - m.rho_cd * m.rho_cd,
        format!(
            "mu_c^4 = {:.6e} vs sigma_c^4 = {:.6e}; E[eps^4] - E[eps^2]^2 = {:.6e} (even), {:.6e} (odd); nu_cd^2 - rho_cd^2 = {:.6e}",
            m.mu_c4,
            m.sigma_c2 * m.sigma_c2,
            raw4_c - raw2_c * raw2_c,
            raw4_d - raw2_d * raw2_d,
            m.nu_cd2 - m.rho_cd * m.rho_cd
        ),
    );

    let h5 = HypothesisCheck::new(
        "H5",
        true,
        0.0,
        "satisfied by family: all supported laws have finite moments of every order".to_string(),
    );

    HypothesisReport {
        can_simulate: true,
        theory_valid_for_consistency: h1_eighth.passed && h2.passed && h3.passed,
        theory_valid_for_clt: h1.passed && h2.passed && h3.passed && h4.passed && h5.passed,
        h1,
        h1_eighth,
        h2,
        h3,
        h4,
        h5,
    }
}
