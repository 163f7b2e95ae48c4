use std::ops::{Index, IndexMut};

use super::Scalar;
use crate::error::{Error, Result};

/// Small dense row-major matrix.
///
/// Shapes are checked at runtime; the filters only ever use matrices up to
/// 4×4, so storage is a plain `Vec`.
#[derive(Clone, PartialEq)]
pub struct Matrix<S = f64> {
    rows: usize,
    cols: usize,
    data: Vec<S>,
}

impl<S: std::fmt::Debug> std::fmt::Debug for Matrix<S> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            writeln!(f, "  {:?}", &self.data[r * self.cols..(r + 1) * self.cols])?;
        }
        write!(f, "]")
    }
}

impl<S: Scalar> Matrix<S> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![S::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = S::one();
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> S) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    /// Build from row-major entries.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<S>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape {
                op: "from_vec",
                lhs: (rows, cols),
                rhs: (data.len(), 1),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn column(entries: &[S]) -> Self {
        Self {
            rows: entries.len(),
            cols: 1,
            data: entries.to_vec(),
        }
    }

    pub fn diagonal(entries: &[S]) -> Self {
        let n = entries.len();
        let mut m = Self::zeros(n, n);
        for (i, &e) in entries.iter().enumerate() {
            m[(i, i)] = e;
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[S] {
        &self.data
    }

    pub fn iter(&self) -> impl Iterator<Item = &S> {
        self.data.iter()
    }

    /// Entry values with derivative information dropped.
    pub fn values(&self) -> Matrix<f64> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|s| s.value()).collect(),
        }
    }

    pub fn map<T: Scalar>(&self, f: impl Fn(S) -> T) -> Matrix<T> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&s| f(s)).collect(),
        }
    }

    fn check_same(&self, other: &Self, op: &'static str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::Shape {
                op,
                lhs: self.shape(),
                rhs: other.shape(),
            });
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same(other, "add")?;
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| a + b)
                .collect(),
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_same(other, "sub")?;
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| a - b)
                .collect(),
        })
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::Shape {
                op: "mul",
                lhs: self.shape(),
                rhs: other.shape(),
            });
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(r, k)];
                for c in 0..other.cols {
                    out.data[r * other.cols + c] += a * other[(k, c)];
                }
            }
        }
        Ok(out)
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)])
    }

    pub fn scale(&self, k: S) -> Self {
        self.map(|s| s * k)
    }

    pub fn scale_real(&self, k: f64) -> Self {
        self.map(|s| s.scale(k))
    }

    /// `(M + Mᵀ) / 2`.
    pub fn symmetrize(&self) -> Result<Self> {
        if self.rows != self.cols {
            return Err(Error::Shape {
                op: "symmetrize",
                lhs: self.shape(),
                rhs: (self.cols, self.rows),
            });
        }
        Ok(Self::from_fn(self.rows, self.cols, |r, c| {
            if r == c {
                self[(r, c)]
            } else {
                (self[(r, c)] + self[(c, r)]).scale(0.5)
            }
        }))
    }

    /// `a bᵀ` for column vectors `a` and `b`.
    pub fn outer(a: &Self, b: &Self) -> Result<Self> {
        if a.cols != 1 || b.cols != 1 {
            return Err(Error::Shape {
                op: "outer",
                lhs: a.shape(),
                rhs: b.shape(),
            });
        }
        Ok(Self::from_fn(a.rows, b.rows, |r, c| a.data[r] * b.data[c]))
    }

    /// `C · self` for a constant matrix `C`; exact zeros in `C` are skipped.
    pub fn lmul_const(&self, c: &Matrix<f64>) -> Result<Self> {
        if c.cols != self.rows {
            return Err(Error::Shape {
                op: "lmul_const",
                lhs: c.shape(),
                rhs: self.shape(),
            });
        }
        let mut out = Self::zeros(c.rows, self.cols);
        for r in 0..c.rows {
            for k in 0..c.cols {
                let a = c[(r, k)];
                if a == 0.0 {
                    continue;
                }
                for col in 0..self.cols {
                    out.data[r * self.cols + col] += self[(k, col)].scale(a);
                }
            }
        }
        Ok(out)
    }

    /// `self · C` for a constant matrix `C`; exact zeros in `C` are skipped.
    pub fn rmul_const(&self, c: &Matrix<f64>) -> Result<Self> {
        if self.cols != c.rows {
            return Err(Error::Shape {
                op: "rmul_const",
                lhs: self.shape(),
                rhs: c.shape(),
            });
        }
        let mut out = Self::zeros(self.rows, c.cols);
        for k in 0..self.cols {
            for col in 0..c.cols {
                let b = c[(k, col)];
                if b == 0.0 {
                    continue;
                }
                for r in 0..self.rows {
                    out.data[r * c.cols + col] += self[(r, k)].scale(b);
                }
            }
        }
        Ok(out)
    }

    /// Largest `|M - Mᵀ|` entry relative to the largest entry magnitude.
    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for r in 0..self.rows {
            for c in 0..self.cols {
                scale = scale.max(self[(r, c)].value().abs());
                if c < self.rows && r < self.cols {
                    worst = worst.max((self[(r, c)].value() - self[(c, r)].value()).abs());
                }
            }
        }
        if scale == 0.0 {
            worst
        } else {
            worst / scale
        }
    }

    pub fn trace(&self) -> S {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }
}

impl Matrix<f64> {
    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Shape {
                op: "from_rows",
                lhs: (rows.len(), cols),
                rhs: (rows.len(), 0),
            });
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data: rows.iter().flat_map(|r| r.iter().copied()).collect(),
        })
    }

    /// Promote to any scalar type as constants.
    pub fn lift<S: Scalar>(&self) -> Matrix<S> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| S::constant(v)).collect(),
        }
    }
}

impl<S> Index<(usize, usize)> for Matrix<S> {
    type Output = S;
    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &S {
        debug_assert!(r < self.rows && c < self.cols);
        &self.data[r * self.cols + c]
    }
}

impl<S> IndexMut<(usize, usize)> for Matrix<S> {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut S {
        debug_assert!(r < self.rows && c < self.cols);
        &mut self.data[r * self.cols + c]
    }
}
