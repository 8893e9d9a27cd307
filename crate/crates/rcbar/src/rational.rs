//! Minimal exact rational arithmetic over i128.
//!
//! Used by the moment recursion so that models whose inputs are exact small
//! rationals (degenerate coefficients, integer-moment noise) produce exact
//! limit values instead of accumulated rounding. Any value that cannot be
//! represented within the caps, or any overflowing operation, simply reports
//! `None` and the caller falls back to f64 arithmetic.

/// Magnitude cap keeping numerators and denominators inside the range where
/// conversion back to f64 is correctly rounded.
const MAX_MAGNITUDE: i128 = 1 << 53;

/// Cap on the denominator accepted from an f64; anything larger is treated
/// as "not really a small rational".
const MAX_INPUT_DEN: i128 = 1 << 40;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct Ratio {
    num: i128,
    /// Always positive.
    den: i128,
}

fn gcd(mut a: i128, mut b: i128) -> i128 {
    a = a.abs();
    b = b.abs();
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

impl Ratio {
    pub fn new(num: i128, den: i128) -> Option<Ratio> {
        if den == 0 {
            return None;
        }
        let sign = if den < 0 { -1 } else { 1 };
        let g = gcd(num, den);
        let (num, den) = if g == 0 {
            (0, 1)
        } else {
            (sign * num / g, sign * den / g)
        };
        if num.abs() > MAX_MAGNITUDE || den > MAX_MAGNITUDE {
            return None;
        }
        Some(Ratio { num, den })
    }

    pub fn from_int(v: i64) -> Ratio {
        Ratio { num: v as i128, den: 1 }
    }

    /// Exact conversion of an f64 that happens to be a small rational.
    pub fn from_f64_exact(x: f64) -> Option<Ratio> {
        if !x.is_finite() {
            return None;
        }
        if x == 0.0 {
            return Some(Ratio::from_int(0));
        }
        let mut scaled = x;
        let mut den: i128 = 1;
        while scaled.fract() != 0.0 {
            scaled *= 2.0; // exact
            den *= 2;
            if den > MAX_INPUT_DEN || scaled.abs() >= MAX_MAGNITUDE as f64 {
                return None;
            }
        }
        if scaled.abs() > MAX_MAGNITUDE as f64 {
            return None;
        }
        Ratio::new(scaled as i128, den)
    }

    pub fn checked_add(self, other: Ratio) -> Option<Ratio> {
        let g = gcd(self.den, other.den);
        let lhs = self.num.checked_mul(other.den / g)?;
        let rhs = other.num.checked_mul(self.den / g)?;
        let den = (self.den / g).checked_mul(other.den)?;
        Ratio::new(lhs.checked_add(rhs)?, den)
    }

    pub fn checked_sub(self, other: Ratio) -> Option<Ratio> {
        self.checked_add(Ratio { num: -other.num, den: other.den })
    }

    pub fn checked_mul(self, other: Ratio) -> Option<Ratio> {
        let g1 = gcd(self.num, other.den);
        let g2 = gcd(other.num, self.den);
        let num = (self.num / g1).checked_mul(other.num / g2)?;
        let den = (self.den / g2).checked_mul(other.den / g1)?;
        Ratio::new(num, den)
    }

    pub fn checked_div(self, other: Ratio) -> Option<Ratio> {
        if other.num == 0 {
            return None;
        }
        self.checked_mul(Ratio { num: other.den, den: other.num })
    }

    pub fn is_positive(&self) -> bool {
        self.num > 0
    }

    pub fn to_f64(self) -> f64 {
        // both parts are <= 2^53 by construction, so this rounds once
        self.num as f64 / self.den as f64
    }
}
