//! Forward-mode differentiation.
//!
//! [`DiffScalar`] carries a value together with its partial derivatives with
//! respect to a fixed number `D` of parameters. Every filter, model builder
//! and loss routine is written against the [`Scalar`] trait, so the same code
//! runs on plain `f64` (evaluation) and on `DiffScalar<D>` (training).

mod matrix;
mod spd;

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};

use crate::error::{Error, Result};

pub use matrix::Matrix;
pub use spd::{gaussian_log_pdf, logdet_spd, solve_spd, Cholesky};

/// Number of tangent slots used by the training engine.
///
/// Covers the full two-mode parameter set (two process-noise levels, two
/// stay probabilities, one measurement-noise level).
pub const PARAM_SLOTS: usize = 5;

/// Differentiable scalar used by the training path.
pub type Dual = DiffScalar<PARAM_SLOTS>;

/// Matrix of [`DiffScalar`] entries.
pub type DiffMatrix<const D: usize> = Matrix<DiffScalar<D>>;

/// Arithmetic needed by the filters, implemented for `f64` and [`DiffScalar`].
pub trait Scalar:
    Copy
    + fmt::Debug
    + Send
    + Sync
    + PartialEq
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + Sum
    + 'static
{
    fn constant(v: f64) -> Self;
    fn value(&self) -> f64;
    fn scale(self, c: f64) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Result<Self>;
    fn sqrt(self) -> Result<Self>;

    fn zero() -> Self {
        Self::constant(0.0)
    }

    fn one() -> Self {
        Self::constant(1.0)
    }

    fn checked_div(self, rhs: Self) -> Result<Self> {
        if rhs.value() == 0.0 {
            return Err(Error::NumericDomain {
                op: "div",
                value: rhs.value(),
            });
        }
        Ok(self / rhs)
    }

    /// Logistic function, evaluated so it never overflows.
    fn sigmoid(self) -> Self {
        if self.value() >= 0.0 {
            let e = (-self).exp();
            Self::one() / (Self::one() + e)
        } else {
            let e = self.exp();
            e / (Self::one() + e)
        }
    }

    /// Drop derivative information.
    fn detach(self) -> Self {
        Self::constant(self.value())
    }
}

impl Scalar for f64 {
    #[inline]
    fn constant(v: f64) -> Self {
        v
    }

    #[inline]
    fn value(&self) -> f64 {
        *self
    }

    #[inline]
    fn scale(self, c: f64) -> Self {
        self * c
    }

    #[inline]
    fn exp(self) -> Self {
        f64::exp(self)
    }

    fn ln(self) -> Result<Self> {
        if self > 0.0 {
            Ok(f64::ln(self))
        } else {
            Err(Error::NumericDomain {
                op: "ln",
                value: self,
            })
        }
    }

    fn sqrt(self) -> Result<Self> {
        if self >= 0.0 {
            Ok(f64::sqrt(self))
        } else {
            Err(Error::NumericDomain {
                op: "sqrt",
                value: self,
            })
        }
    }
}

/// A value and its gradient with respect to `D` parameters.
#[derive(Clone, Copy, PartialEq)]
pub struct DiffScalar<const D: usize> {
    pub value: f64,
    pub tangent: [f64; D],
}

impl<const D: usize> DiffScalar<D> {
    /// A value that does not depend on any parameter.
    #[inline]
    pub fn lift_constant(v: f64) -> Self {
        Self {
            value: v,
            tangent: [0.0; D],
        }
    }

    /// Seed parameter `slot`: the tangent is the unit vector `e_slot`.
    pub fn lift_parameter(v: f64, slot: usize) -> Result<Self> {
        if slot >= D {
            return Err(Error::Config(format!(
                "parameter slot {slot} out of range for {D} tangent slots"
            )));
        }
        let mut tangent = [0.0; D];
        tangent[slot] = 1.0;
        Ok(Self { value: v, tangent })
    }

    #[inline]
    fn map_tangent(self, k: f64, value: f64) -> Self {
        let mut tangent = self.tangent;
        for t in &mut tangent {
            *t *= k;
        }
        Self { value, tangent }
    }

    pub fn is_constant(&self) -> bool {
        self.tangent.iter().all(|&t| t == 0.0)
    }
}

impl<const D: usize> fmt::Debug for DiffScalar<D> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {:?})", self.value, self.tangent)
    }
}

impl<const D: usize> Default for DiffScalar<D> {
    fn default() -> Self {
        Self::lift_constant(0.0)
    }
}

impl<const D: usize> Add for DiffScalar<D> {
    type Output = Self;
    #[inline]
    fn add(mut self, rhs: Self) -> Self {
        self.value += rhs.value;
        for (a, b) in self.tangent.iter_mut().zip(rhs.tangent) {
            *a += b;
        }
        self
    }
}

impl<const D: usize> Sub for DiffScalar<D> {
    type Output = Self;
    #[inline]
    fn sub(mut self, rhs: Self) -> Self {
        self.value -= rhs.value;
        for (a, b) in self.tangent.iter_mut().zip(rhs.tangent) {
            *a -= b;
        }
        self
    }
}

impl<const D: usize> Mul for DiffScalar<D> {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: Self) -> Self {
        let mut tangent = [0.0; D];
        for (i, t) in tangent.iter_mut().enumerate() {
            *t = self.tangent[i] * rhs.value + rhs.tangent[i] * self.value;
        }
        Self {
            value: self.value * rhs.value,
            tangent,
        }
    }
}

/// IEEE division; use [`Scalar::checked_div`] where a zero divisor is possible.
impl<const D: usize> Div for DiffScalar<D> {
    type Output = Self;
    #[inline]
    fn div(self, rhs: Self) -> Self {
        let value = self.value / rhs.value;
        let mut tangent = [0.0; D];
        for (i, t) in tangent.iter_mut().enumerate() {
            *t = (self.tangent[i] - value * rhs.tangent[i]) / rhs.value;
        }
        Self { value, tangent }
    }
}

impl<const D: usize> Neg for DiffScalar<D> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        self.map_tangent(-1.0, -self.value)
    }
}

impl<const D: usize> AddAssign for DiffScalar<D> {
    #[inline]
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

impl<const D: usize> SubAssign for DiffScalar<D> {
    #[inline]
    fn sub_assign(&mut self, rhs: Self) {
        *self = *self - rhs;
    }
}

impl<const D: usize> Sum for DiffScalar<D> {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::lift_constant(0.0), |acc, x| acc + x)
    }
}

impl<const D: usize> Scalar for DiffScalar<D> {
    #[inline]
    fn constant(v: f64) -> Self {
        Self::lift_constant(v)
    }

    #[inline]
    fn value(&self) -> f64 {
        self.value
    }

    #[inline]
    fn scale(self, c: f64) -> Self {
        self.map_tangent(c, self.value * c)
    }

    fn exp(self) -> Self {
        let e = self.value.exp();
        self.map_tangent(e, e)
    }

    fn ln(self) -> Result<Self> {
        if self.value > 0.0 {
            Ok(self.map_tangent(1.0 / self.value, self.value.ln()))
        } else {
            Err(Error::NumericDomain {
                op: "ln",
                value: self.value,
            })
        }
    }

    fn sqrt(self) -> Result<Self> {
        if self.value > 0.0 {
            let s = self.value.sqrt();
            Ok(self.map_tangent(0.5 / s, s))
        } else if self.value == 0.0 && self.is_constant() {
            Ok(self)
        } else {
            Err(Error::NumericDomain {
                op: "sqrt",
                value: self.value,
            })
        }
    }
}

/// Numerically stable `log Σ exp(x_i)`.
pub fn log_sum_exp<S: Scalar>(xs: &[S]) -> Result<S> {
    let max = xs
        .iter()
        .map(|x| x.value())
        .fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::NumericDomain {
            op: "log_sum_exp",
            value: max,
        });
    }
    let shift = S::constant(max);
    let total: S = xs.iter().map(|&x| (x - shift).exp()).sum();
    Ok(total.ln()? + shift)
}
