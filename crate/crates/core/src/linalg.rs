//! Dense linear algebra helpers on top of nalgebra, plus the rank-4 tensor
//! type used for matrix-valued covariance and quadratic variation.

use alloc::vec;
use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Condition number above which a matrix is reported as singular.
pub const COND_LIMIT: f64 = 1e12;

/// A tensor in R^{d⊗4}, stored row-major: `(i, j, k, l)` lives at
/// `((i*d + j)*d + k)*d + l`. Viewed as a d²×d² matrix, rows index the
/// pair `(i, j)` and columns the pair `(k, l)`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Tensor4 {
    d: usize,
    data: Vec<f64>,
}

impl Tensor4 {
    pub fn zeros(d: usize) -> Self {
        Tensor4 {
            d,
            data: vec![0.0; d * d * d * d],
        }
    }

    pub fn from_fn(d: usize, mut f: impl FnMut(usize, usize, usize, usize) -> f64) -> Self {
        let mut t = Tensor4::zeros(d);
        for i in 0..d {
            for j in 0..d {
                for k in 0..d {
                    for l in 0..d {
                        t.data[((i * d + j) * d + k) * d + l] = f(i, j, k, l);
                    }
                }
            }
        }
        t
    }

    /// Builds a tensor from its row-major flat data.
    pub fn from_flat(d: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != d * d * d * d {
            return Err(Error::DimensionMismatch {
                expected: d * d * d * d,
                got: data.len(),
            });
        }
        Ok(Tensor4 { d, data })
    }

    /// Reshapes a d²×d² matrix (pair-flattened rows and columns).
    pub fn from_pair_matrix(m: &Mat) -> Result<Self> {
        let n = m.nrows();
        let d = (libm::sqrt(n as f64) + 0.5) as usize;
        if d * d != n || m.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: d * d,
                got: n,
            });
        }
        Ok(Tensor4::from_fn(d, |i, j, k, l| m[(i * d + j, k * d + l)]))
    }

    /// Isotropic tensor `s · δ_ik δ_jl`.
    pub fn isotropic(d: usize, s: f64) -> Self {
        Tensor4::from_fn(d, |i, j, k, l| if i == k && j == l { s } else { 0.0 })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        let d = self.d;
        self.data[((i * d + j) * d + k) * d + l]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, l: usize, v: f64) {
        let d = self.d;
        self.data[((i * d + j) * d + k) * d + l] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn pair_matrix(&self) -> Mat {
        let n = self.d * self.d;
        Mat::from_row_slice(n, n, &self.data)
    }

    /// Hilbert–Schmidt (Frobenius) norm.
    pub fn norm(&self) -> f64 {
        libm::sqrt(self.data.iter().map(|v| v * v).sum())
    }

    pub fn scale(&self, s: f64) -> Self {
        Tensor4 {
            d: self.d,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Positive semidefiniteness of the pair matrix, up to `tol` relative to
    /// the largest eigenvalue magnitude.
    pub fn is_psd(&self, tol: f64) -> bool {
        is_psd(&self.pair_matrix(), tol)
    }
}

pub fn is_psd(m: &Mat, tol: f64) -> bool {
    if !m.iter().all(|v| v.is_finite()) {
        return false;
    }
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigenvalues();
    let scale = eig.iter().fold(0.0f64, |a, v| a.max(libm::fabs(*v)));
    eig.iter().all(|v| *v >= -tol * scale.max(1e-300))
}

/// Row-major flattening (entry `(i, j)` at `i*ncols + j`).
pub fn flatten_row_major(m: &Mat) -> Vector {
    Vector::from_iterator(m.nrows() * m.ncols(), m.transpose().iter().copied())
}

pub fn unflatten_row_major(v: &[f64], rows: usize, cols: usize) -> Mat {
    Mat::from_row_slice(rows, cols, v)
}

/// 2-norm condition number via singular values.
pub fn condition_number(m: &Mat) -> f64 {
    let sv = m.clone().singular_values();
    let max = sv.iter().fold(0.0f64, |a, v| a.max(*v));
    let min = sv.iter().fold(f64::INFINITY, |a, v| a.min(*v));
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// LU inverse guarded by the condition number; `t` is only used to label
/// the error.
pub fn inverse_checked(m: &Mat, t: f64) -> Result<Mat> {
    let cond = condition_number(m);
    if !cond.is_finite() || cond > COND_LIMIT {
        return Err(Error::Singular { t, cond });
    }
    m.clone()
        .lu()
        .try_inverse()
        .ok_or(Error::Singular { t, cond })
}

pub fn max_abs_diff(a: &Mat, b: &Mat) -> f64 {
    a.iter()
        .zip(b.iter())
        .fold(0.0f64, |m, (x, y)| m.max(libm::fabs(x - y)))
}
