//! Fixed-size dense matrices for the 2x2 / 4x4 limit algebra.
//!
//! Everything the estimators and limit theory need stays at dimension 2 or 4,
//! so the solvers here are closed-form: Cramer elimination for 2x2 systems,
//! rotation-angle eigendecomposition for symmetric 2x2 matrices and Cholesky
//! for the 4x4 blocks. No general-purpose solver is involved, which keeps the
//! results reproducible down to the last bit.

// indexed loops over dimensions 2 and 4 read better than iterator chains here
#![allow(clippy::needless_range_loop)]

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative condition threshold above which a 2x2 system is declared singular.
pub const CONDITION_LIMIT: f64 = 1e12;

/// A dense 2x2 matrix in row-major order.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mat2(pub [[f64; 2]; 2]);

impl Mat2 {
    pub fn zeros() -> Self {
        Mat2([[0.0; 2]; 2])
    }

    pub fn identity() -> Self {
        Mat2([[1.0, 0.0], [0.0, 1.0]])
    }

    /// Symmetric matrix [[xx, xy], [xy, yy]].
    pub fn sym(xx: f64, xy: f64, yy: f64) -> Self {
        Mat2([[xx, xy], [xy, yy]])
    }

    pub fn trace(&self) -> f64 {
        self.0[0][0] + self.0[1][1]
    }

    pub fn det(&self) -> f64 {
        self.0[0][0] * self.0[1][1] - self.0[0][1] * self.0[1][0]
    }

    pub fn add(&self, other: &Mat2) -> Mat2 {
        let mut out = Mat2::zeros();
        for i in 0..2 {
            for j in 0..2 {
                out.0[i][j] = self.0[i][j] + other.0[i][j];
            }
        }
        out
    }

    pub fn sub(&self, other: &Mat2) -> Mat2 {
        let mut out = Mat2::zeros();
        for i in 0..2 {
            for j in 0..2 {
                out.0[i][j] = self.0[i][j] - other.0[i][j];
            }
        }
        out
    }

    pub fn scale(&self, c: f64) -> Mat2 {
        let mut out = *self;
        for row in out.0.iter_mut() {
            for v in row.iter_mut() {
                *v *= c;
            }
        }
        out
    }

    pub fn mul(&self, other: &Mat2) -> Mat2 {
        let a = &self.0;
        let b = &other.0;
        Mat2([
            [
                a[0][0] * b[0][0] + a[0][1] * b[1][0],
                a[0][0] * b[0][1] + a[0][1] * b[1][1],
            ],
            [
                a[1][0] * b[0][0] + a[1][1] * b[1][0],
                a[1][0] * b[0][1] + a[1][1] * b[1][1],
            ],
        ])
    }

    pub fn mul_vec(&self, v: [f64; 2]) -> [f64; 2] {
        [
            self.0[0][0] * v[0] + self.0[0][1] * v[1],
            self.0[1][0] * v[0] + self.0[1][1] * v[1],
        ]
    }

    pub fn frobenius(&self) -> f64 {
        self.0
            .iter()
            .flatten()
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    /// Eigenvalues of a symmetric 2x2 matrix, smallest first.
    pub fn eigenvalues_sym(&self) -> [f64; 2] {
        let t = self.trace();
        let d = self.det();
        let disc = (t * t - 4.0 * d).max(0.0).sqrt();
        [(t - disc) / 2.0, (t + disc) / 2.0]
    }

    /// Eigendecomposition of a symmetric 2x2 matrix: `self = V diag(l) V^t`
    /// with orthonormal columns in `V`.
    pub fn eigen_sym(&self) -> ([f64; 2], Mat2) {
        let [[p, q], [_, r]] = self.0;
        if q == 0.0 {
            if p <= r {
                return ([p, r], Mat2::identity());
            }
            return ([r, p], Mat2([[0.0, 1.0], [1.0, 0.0]]));
        }
        let theta = 0.5 * (2.0 * q).atan2(p - r);
        let (s, c) = theta.sin_cos();
        let l1 = p * c * c + 2.0 * q * c * s + r * s * s;
        let l2 = p * s * s - 2.0 * q * c * s + r * c * c;
        // columns (c, s) and (-s, c); order so the smaller eigenvalue is first
        if l1 <= l2 {
            ([l1, l2], Mat2([[c, -s], [s, c]]))
        } else {
            ([l2, l1], Mat2([[-s, c], [c, s]]))
        }
    }

    /// Solve `self * x = rhs` by Cramer elimination, rejecting systems whose
    /// eigenvalue ratio exceeds `CONDITION_LIMIT`. Intended for the symmetric
    /// positive semidefinite design matrices; `name` labels the error.
    pub fn solve_sym(&self, rhs: [f64; 2], name: &'static str) -> Result<[f64; 2]> {
        self.check_condition(name)?;
        let det = self.det();
        let x0 = (rhs[0] * self.0[1][1] - self.0[0][1] * rhs[1]) / det;
        let x1 = (self.0[0][0] * rhs[1] - rhs[0] * self.0[1][0]) / det;
        Ok([x0, x1])
    }

    /// Inverse of a symmetric 2x2 matrix with the same condition guard.
    pub fn inverse_sym(&self, name: &'static str) -> Result<Mat2> {
        self.check_condition(name)?;
        let det = self.det();
        Ok(Mat2([
            [self.0[1][1] / det, -self.0[0][1] / det],
            [-self.0[1][0] / det, self.0[0][0] / det],
        ]))
    }

    fn check_condition(&self, name: &'static str) -> Result<()> {
        let [lo, hi] = self.eigenvalues_sym();
        let (lo, hi) = (lo.abs(), hi.abs());
        if lo * CONDITION_LIMIT < hi || hi == 0.0 {
            return Err(Error::SingularDesign {
                matrix: name,
                condition: if lo > 0.0 { hi / lo } else { f64::INFINITY },
            });
        }
        Ok(())
    }

    /// Lower-triangular Cholesky factor, or None if not positive definite.
    pub fn cholesky(&self) -> Option<Mat2> {
        let a = self.0;
        if a[0][0] <= 0.0 {
            return None;
        }
        let l00 = a[0][0].sqrt();
        let l10 = a[1][0] / l00;
        let rest = a[1][1] - l10 * l10;
        if rest <= 0.0 {
            return None;
        }
        Some(Mat2([[l00, 0.0], [l10, rest.sqrt()]]))
    }

    /// Inverse square root of a symmetric positive definite matrix via its
    /// eigendecomposition.
    pub fn inv_sqrt_sym(&self, name: &'static str) -> Result<Mat2> {
        let (vals, v) = self.eigen_sym();
        if vals[0] <= 0.0 {
            return Err(Error::NotPositiveDefinite(name));
        }
        let d = Mat2([[1.0 / vals[0].sqrt(), 0.0], [0.0, 1.0 / vals[1].sqrt()]]);
        let vt = Mat2([[v.0[0][0], v.0[1][0]], [v.0[0][1], v.0[1][1]]]);
        Ok(v.mul(&d).mul(&vt))
    }
}

/// A dense 4x4 matrix in row-major order.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mat4(pub [[f64; 4]; 4]);

impl Mat4 {
    pub fn zeros() -> Self {
        Mat4([[0.0; 4]; 4])
    }

    pub fn identity() -> Self {
        let mut m = Mat4::zeros();
        for i in 0..4 {
            m.0[i][i] = 1.0;
        }
        m
    }

    /// Kronecker product of two 2x2 matrices: block (i, j) is `a[i][j] * b`.
    pub fn kron(a: &Mat2, b: &Mat2) -> Mat4 {
        let mut m = Mat4::zeros();
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    for l in 0..2 {
                        m.0[2 * i + k][2 * j + l] = a.0[i][j] * b.0[k][l];
                    }
                }
            }
        }
        m
    }

    pub fn add(&self, other: &Mat4) -> Mat4 {
        let mut out = Mat4::zeros();
        for i in 0..4 {
            for j in 0..4 {
                out.0[i][j] = self.0[i][j] + other.0[i][j];
            }
        }
        out
    }

    pub fn sub(&self, other: &Mat4) -> Mat4 {
        let mut out = Mat4::zeros();
        for i in 0..4 {
            for j in 0..4 {
                out.0[i][j] = self.0[i][j] - other.0[i][j];
            }
        }
        out
    }

    pub fn mul(&self, other: &Mat4) -> Mat4 {
        let mut out = Mat4::zeros();
        for i in 0..4 {
            for j in 0..4 {
                let mut acc = 0.0;
                for k in 0..4 {
                    acc += self.0[i][k] * other.0[k][j];
                }
                out.0[i][j] = acc;
            }
        }
        out
    }

    pub fn mul_vec(&self, v: [f64; 4]) -> [f64; 4] {
        let mut out = [0.0; 4];
        for i in 0..4 {
            for k in 0..4 {
                out[i] += self.0[i][k] * v[k];
            }
        }
        out
    }

    pub fn quadratic_form(&self, v: [f64; 4]) -> f64 {
        let mv = self.mul_vec(v);
        v.iter().zip(mv.iter()).map(|(a, b)| a * b).sum()
    }

    pub fn trace(&self) -> f64 {
        (0..4).map(|i| self.0[i][i]).sum()
    }

    pub fn frobenius(&self) -> f64 {
        self.0
            .iter()
            .flatten()
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().flatten().all(|&v| v == 0.0)
    }

    /// Lower-triangular Cholesky factor, or None if not positive definite.
    pub fn cholesky(&self) -> Option<Mat4> {
        let a = &self.0;
        let mut l = [[0.0f64; 4]; 4];
        for i in 0..4 {
            for j in 0..=i {
                let mut sum = a[i][j];
                for k in 0..j {
                    sum -= l[i][k] * l[j][k];
                }
                if i == j {
                    if sum <= 0.0 {
                        return None;
                    }
                    l[i][j] = sum.sqrt();
                } else {
                    l[i][j] = sum / l[j][j];
                }
            }
        }
        Some(Mat4(l))
    }

    /// Inverse of a symmetric positive definite matrix via Cholesky.
    pub fn inverse_spd(&self, name: &'static str) -> Result<Mat4> {
        let l = self.cholesky().ok_or(Error::NotPositiveDefinite(name))?;
        // invert against the four basis vectors by forward/back substitution
        let mut inv = Mat4::zeros();
        for col in 0..4 {
            let mut e = [0.0; 4];
            e[col] = 1.0;
            // L y = e
            let mut y = [0.0; 4];
            for i in 0..4 {
                let mut sum = e[i];
                for k in 0..i {
                    sum -= l.0[i][k] * y[k];
                }
                y[i] = sum / l.0[i][i];
            }
            // L^t x = y
            let mut x = [0.0; 4];
            for i in (0..4).rev() {
                let mut sum = y[i];
                for k in (i + 1)..4 {
                    sum -= l.0[k][i] * x[k];
                }
                x[i] = sum / l.0[i][i];
            }
            for row in 0..4 {
                inv.0[row][col] = x[row];
            }
        }
        Ok(inv)
    }
}
