//! Exact limit quantities of the model.
//!
//! The tree averages of X^p converge almost surely to constants s_p that
//! satisfy a linear recursion in the raw moments of the coefficient and noise
//! pairs. Everything else the asymptotic theory needs (the matrices C, D, L,
//! Gamma, Lambda, A, M_ac, M_bd, H, the CLT covariances and the quadratic
//! strong law limit) is assembled from those constants in closed form.
//!
//! The recursion is evaluated in exact rational arithmetic whenever every
//! input moment is exactly representable as a small rational, so reference
//! models produce exact fixtures such as s_4 = 160/3; otherwise it falls
//! back to double precision.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Mat2, Mat4};
use crate::model::MomentSet;
use crate::rational::Ratio;

/// Highest s-moment order the theory consumes.
pub const MAX_S_ORDER: usize = 8;

fn binomial_u64(n: usize, k: usize) -> u64 {
    let mut acc = 1u64;
    for i in 0..k.min(n - k) {
        acc = acc * (n - i) as u64 / (i + 1) as u64;
    }
    acc
}

fn check_stability(m: &MomentSet, p_max: usize) -> Result<()> {
    for p in 1..=p_max {
        let sum = m.raw_a[p - 1] + m.raw_b[p - 1];
        if sum >= 2.0 {
            return Err(Error::UnstableMoment { order: p, sum });
        }
    }
    Ok(())
}

fn s_moments_f64(m: &MomentSet, p_max: usize) -> Vec<f64> {
    let mut s = vec![0.0f64; p_max];
    for p in 1..=p_max {
        let mut inner = (m.raw_c[p - 1] + m.raw_d[p - 1]) / 2.0;
        for k in 1..p {
            inner += 0.5
                * binomial_u64(p, k) as f64
                * (m.raw_a[k - 1] * m.raw_c[p - k - 1] + m.raw_b[k - 1] * m.raw_d[p - k - 1])
                * s[k - 1];
        }
        s[p - 1] = 2.0 / (2.0 - (m.raw_a[p - 1] + m.raw_b[p - 1])) * inner;
    }
    s
}

/// Exact-rational evaluation of the recursion; None when any input is not a
/// small rational or an intermediate overflows the rational caps.
pub(crate) fn s_moments_exact(m: &MomentSet, p_max: usize) -> Option<Vec<Ratio>> {
    let conv = |xs: &[f64]| -> Option<Vec<Ratio>> {
        xs[..p_max].iter().map(|&x| Ratio::from_f64_exact(x)).collect()
    };
    let a = conv(&m.raw_a)?;
    let b = conv(&m.raw_b)?;
    let c = conv(&m.raw_c)?;
    let d = conv(&m.raw_d)?;
    let two = Ratio::from_int(2);
    let half = Ratio::new(1, 2)?;
    let mut s: Vec<Ratio> = Vec::with_capacity(p_max);
    for p in 1..=p_max {
        let mut inner = c[p - 1].checked_add(d[p - 1])?.checked_mul(half)?;
        for k in 1..p {
            let coupling = a[k - 1]
                .checked_mul(c[p - k - 1])?
                .checked_add(b[k - 1].checked_mul(d[p - k - 1])?)?;
            let term = Ratio::from_int(binomial_u64(p, k) as i64)
                .checked_mul(half)?
                .checked_mul(coupling)?
                .checked_mul(s[k - 1])?;
            inner = inner.checked_add(term)?;
        }
        let denom = two.checked_sub(a[p - 1].checked_add(b[p - 1])?)?;
        if !denom.is_positive() {
            // the caller reports this as UnstableMoment from the f64 check
            return None;
        }
        s.push(two.checked_div(denom)?.checked_mul(inner)?);
    }
    Some(s)
}

/// Limits s_1 .. s_{p_max} of the tree averages of X^p, p_max <= 8.
pub fn s_moments(m: &MomentSet, p_max: usize) -> Result<Vec<f64>> {
    if p_max == 0 || p_max > MAX_S_ORDER {
        return Err(Error::InvalidArgument(format!(
            "s-moment order must be in 1..={MAX_S_ORDER}, got {p_max}"
        )));
    }
    check_stability(m, p_max)?;
    if let Some(exact) = s_moments_exact(m, p_max) {
        return Ok(exact.into_iter().map(Ratio::to_f64).collect());
    }
    Ok(s_moments_f64(m, p_max))
}

/// C = [[s2, s1], [s1, 1]].
pub fn c_matrix(s: &[f64]) -> Mat2 {
    Mat2::sym(s[1], s[0], 1.0)
}

/// D = [[s4, s3], [s3, s2]].
pub fn d_matrix(s: &[f64]) -> Mat2 {
    Mat2::sym(s[3], s[2], s[1])
}

/// A = [[s4, s2], [s2, 1]], the limit of the quadratic design matrix.
pub fn a_matrix(s: &[f64]) -> Mat2 {
    Mat2::sym(s[3], s[1], 1.0)
}

/// Covariance block of the coefficient pair.
pub fn coeff_block(m: &MomentSet) -> Mat2 {
    Mat2::sym(m.sigma_a2, m.rho_ab, m.sigma_b2)
}

/// Covariance block of the noise pair.
pub fn noise_block(m: &MomentSet) -> Mat2 {
    Mat2::sym(m.sigma_c2, m.rho_cd, m.sigma_d2)
}

/// L = N_cd (x) C + N_ab (x) D, the normalized limit of the estimation
/// martingale's increasing process.
pub fn l_matrix(m: &MomentSet, s: &[f64]) -> Mat4 {
    Mat4::kron(&noise_block(m), &c_matrix(s)).add(&Mat4::kron(&coeff_block(m), &d_matrix(s)))
}

/// Every limit quantity consumed by the Monte Carlo harness.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LimitMatrices {
    /// s_1 .. s_8.
    pub s: [f64; MAX_S_ORDER],
    pub c: Mat2,
    pub d: Mat2,
    pub a: Mat2,
    pub l: Mat4,
    /// Gamma = I_2 (x) C.
    pub gamma: Mat4,
    /// Lambda = I_2 (x) (C + D).
    pub lambda: Mat4,
    pub m_ac: Mat2,
    pub m_bd: Mat2,
    pub h: Mat2,
    /// Gamma^-1 L Gamma^-1.
    pub clt_cov_theta: Mat4,
    /// A^-1 M_ac A^-1.
    pub clt_cov_eta: Mat2,
    /// A^-1 M_bd A^-1.
    pub clt_cov_zeta: Mat2,
    /// A^-1 H A^-1.
    pub clt_cov_nu: Mat2,
    /// tr(Lambda^-1/2 L Lambda^-1/2).
    pub qsl_limit: f64,
}

/// Assemble all limit matrices from a moment set.
pub fn limit_matrices(m: &MomentSet) -> Result<LimitMatrices> {
    let s_vec = s_moments(m, MAX_S_ORDER)?;
    let mut s = [0.0; MAX_S_ORDER];
    s.copy_from_slice(&s_vec);

    let c = c_matrix(&s);
    let d = d_matrix(&s);
    let a = a_matrix(&s);
    let l = l_matrix(m, &s);
    let identity = Mat2::identity();
    let gamma = Mat4::kron(&identity, &c);
    let c_plus_d = c.add(&d);
    let lambda = Mat4::kron(&identity, &c_plus_d);

    let e8 = Mat2::sym(s[7], s[5], s[3]);
    let e6 = Mat2::sym(s[5], s[3], s[1]);
    let e4 = a;
    let m_ac = e8
        .scale(m.mu_a4 - m.sigma_a2 * m.sigma_a2)
        .add(&e6.scale(4.0 * m.sigma_a2 * m.sigma_c2))
        .add(&e4.scale(m.mu_c4 - m.sigma_c2 * m.sigma_c2));
    let m_bd = e8
        .scale(m.mu_b4 - m.sigma_b2 * m.sigma_b2)
        .add(&e6.scale(4.0 * m.sigma_b2 * m.sigma_d2))
        .add(&e4.scale(m.mu_d4 - m.sigma_d2 * m.sigma_d2));
    let h = e8
        .scale(m.nu_ab2 - m.rho_ab * m.rho_ab)
        .add(
            &e6.scale(
                m.sigma_a2 * m.sigma_d2 + m.sigma_b2 * m.sigma_c2 + 2.0 * m.rho_ab * m.rho_cd,
            ),
        )
        .add(&e4.scale(m.nu_cd2 - m.rho_cd * m.rho_cd));

    c.cholesky().ok_or(Error::NotPositiveDefinite("C"))?;
    l.cholesky().ok_or(Error::NotPositiveDefinite("L"))?;
    let c_inv = c.inverse_sym("C").map_err(|_| Error::NotPositiveDefinite("C"))?;
    let gamma_inv = Mat4::kron(&identity, &c_inv);
    let clt_cov_theta = gamma_inv.mul(&l).mul(&gamma_inv);

    let a_inv = match a.cholesky() {
        Some(_) => a.inverse_sym("A").map_err(|_| Error::NotPositiveDefinite("A"))?,
        None => return Err(Error::NotPositiveDefinite("A")),
    };
    let clt_cov_eta = a_inv.mul(&m_ac).mul(&a_inv);
    let clt_cov_zeta = a_inv.mul(&m_bd).mul(&a_inv);
    let clt_cov_nu = a_inv.mul(&h).mul(&a_inv);

    let cd_inv_sqrt = c_plus_d.inv_sqrt_sym("Lambda")?;
    let lambda_inv_sqrt = Mat4::kron(&identity, &cd_inv_sqrt);
    let qsl_limit = lambda_inv_sqrt.mul(&l).mul(&lambda_inv_sqrt).trace();

    Ok(LimitMatrices {
        s,
        c,
        d,
        a,
        l,
        gamma,
        lambda,
        m_ac,
        m_bd,
        h,
        clt_cov_theta,
        clt_cov_eta,
        clt_cov_zeta,
        clt_cov_nu,
        qsl_limit,
    })
}

/// Conditional second moments of the centered child pair given the parent
/// value `x`: (P, Q, R) = (E[V_even^2 | x], E[V_even V_odd | x], E[V_odd^2 | x]).
pub fn conditional_noise_moments(m: &MomentSet, x: f64) -> (f64, f64, f64) {
    (
        m.sigma_a2 * x * x + m.sigma_c2,
        m.rho_ab * x * x + m.rho_cd,
        m.sigma_b2 * x * x + m.sigma_d2,
    )
}
