//! Cholesky-based solves for symmetric positive definite matrices.
//!
//! Derivatives flow through the factorization itself, which yields the
//! usual `d(M⁻¹) = −M⁻¹ dM M⁻¹` and `d logdet M = tr(M⁻¹ dM)` without ever
//! forming an inverse.

use std::f64::consts::PI;

use super::{Matrix, Scalar};
use crate::error::{Error, Result};

/// Lower-triangular factor `L` with `M = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct Cholesky<S> {
    l: Matrix<S>,
}

impl<S: Scalar> Cholesky<S> {
    /// Factor `m`, reading only its lower triangle.
    pub fn factor(m: &Matrix<S>) -> Result<Self> {
        let n = m.rows();
        if m.cols() != n {
            return Err(Error::Shape {
                op: "cholesky",
                lhs: m.shape(),
                rhs: (n, n),
            });
        }
        let mut l = Matrix::<S>::zeros(n, n);
        for j in 0..n {
            let mut d = m[(j, j)];
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            if !d.value().is_finite() || d.value() <= 0.0 {
                return Err(Error::NotPositiveDefinite {
                    pivot: j,
                    value: d.value(),
                });
            }
            let ljj = d.sqrt()?;
            l[(j, j)] = ljj;
            for i in j + 1..n {
                let mut s = m[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / ljj;
            }
        }
        Ok(Self { l })
    }

    pub fn factor_l(&self) -> &Matrix<S> {
        &self.l
    }

    /// Solve `L Y = B`.
    pub fn forward(&self, b: &Matrix<S>) -> Result<Matrix<S>> {
        let n = self.l.rows();
        if b.rows() != n {
            return Err(Error::Shape {
                op: "cholesky_solve",
                lhs: self.l.shape(),
                rhs: b.shape(),
            });
        }
        let mut y = b.clone();
        for c in 0..b.cols() {
            for i in 0..n {
                let mut s = y[(i, c)];
                for k in 0..i {
                    s -= self.l[(i, k)] * y[(k, c)];
                }
                y[(i, c)] = s / self.l[(i, i)];
            }
        }
        Ok(y)
    }

    /// Solve `M X = B`.
    pub fn solve(&self, b: &Matrix<S>) -> Result<Matrix<S>> {
        let n = self.l.rows();
        let mut x = self.forward(b)?;
        for c in 0..b.cols() {
            for i in (0..n).rev() {
                let mut s = x[(i, c)];
                for k in i + 1..n {
                    s -= self.l[(k, i)] * x[(k, c)];
                }
                x[(i, c)] = s / self.l[(i, i)];
            }
        }
        Ok(x)
    }

    pub fn logdet(&self) -> Result<S> {
        let mut acc = S::zero();
        for i in 0..self.l.rows() {
            acc += self.l[(i, i)].ln()?;
        }
        Ok(acc.scale(2.0))
    }

    /// `νᵀ M⁻¹ ν` for a column vector `ν`.
    pub fn mahalanobis(&self, nu: &Matrix<S>) -> Result<S> {
        let y = self.forward(nu)?;
        Ok(y.iter().map(|&v| v * v).sum())
    }

    /// `log N(z; mean, M)` where `M` is the factored covariance.
    pub fn log_pdf(&self, z: &[f64], mean: &Matrix<S>) -> Result<S> {
        let l = z.len();
        if mean.shape() != (l, 1) || self.l.rows() != l {
            return Err(Error::Shape {
                op: "gaussian_log_pdf",
                lhs: mean.shape(),
                rhs: (l, 1),
            });
        }
        let nu = Matrix::from_fn(l, 1, |r, _| S::constant(z[r]) - mean[(r, 0)]);
        let quad = self.mahalanobis(&nu)?;
        let norm = S::constant(l as f64 * (2.0 * PI).ln());
        Ok(-(norm + self.logdet()? + quad).scale(0.5))
    }
}

/// Solve `M X = B` for SPD `M`.
pub fn solve_spd<S: Scalar>(m: &Matrix<S>, b: &Matrix<S>) -> Result<Matrix<S>> {
    Cholesky::factor(m)?.solve(b)
}

/// `log det M` for SPD `M`.
pub fn logdet_spd<S: Scalar>(m: &Matrix<S>) -> Result<S> {
    Cholesky::factor(m)?.logdet()
}

/// Multivariate normal log density `log N(z; mean, cov)`.
pub fn gaussian_log_pdf<S: Scalar>(z: &[f64], mean: &Matrix<S>, cov: &Matrix<S>) -> Result<S> {
    Cholesky::factor(cov)?.log_pdf(z, mean)
}
