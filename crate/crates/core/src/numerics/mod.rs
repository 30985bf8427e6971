//! Dense small-matrix numerics.
//!
//! Everything here works on `nalgebra` dynamic matrices; problem sizes are tiny
//! (state dimension up to a handful), so robustness is preferred over speed.

mod expm;
mod riccati;
mod spectral;

use nalgebra::DMatrix;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub use expm::{affine_step, matrix_exponential, zoh_pair};
pub use riccati::{care, lqr_gain, lyapunov_solve};
pub use spectral::{eigenvalues, is_hurwitz, operator_norm, spectral_bounds};

pub type Matrix = DMatrix<f64>;

/// Relative asymmetry tolerated (and symmetrized away) by [`SpdMatrix::new`].
pub const SYMMETRY_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: String, found: String },
    #[error("non-finite entry in input")]
    NonFinite,
    #[error("negative duration {0}")]
    NegativeDuration(f64),
    #[error("matrix is not symmetric (relative asymmetry {0:.3e})")]
    NotSymmetric(f64),
    #[error("matrix is not positive definite (smallest eigenvalue {0:.6e})")]
    NotPositiveDefinite(f64),
    #[error("rows have unequal lengths")]
    RaggedRows,
    #[error("singular linear system in {0}")]
    Singular(&'static str),
    #[error("LQR synthesis failed: {0}")]
    Synthesis(String),
}

pub(crate) fn ensure_square(a: &Matrix) -> Result<(), NumericsError> {
    if a.nrows() != a.ncols() {
        return Err(NumericsError::NotSquare {
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    Ok(())
}

pub(crate) fn ensure_finite(a: &Matrix) -> Result<(), NumericsError> {
    if a.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(NumericsError::NonFinite)
    }
}

/// Builds a matrix from row-major nested rows.
pub fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<Matrix, NumericsError> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(NumericsError::RaggedRows);
    }
    let m = DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]);
    ensure_finite(&m)?;
    Ok(m)
}

pub fn matrix_to_rows(m: &Matrix) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Serde adapter writing matrices as a list of rows.
pub mod serde_rows {
    use super::*;

    pub fn serialize<S: Serializer>(m: &Matrix, s: S) -> Result<S::Ok, S::Error> {
        matrix_to_rows(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Matrix, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        matrix_from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

/// A symmetric positive-definite matrix with cached extreme eigenvalues.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdMatrix {
    m: Matrix,
    lambda_min: f64,
    lambda_max: f64,
}

impl SpdMatrix {
    /// Validates and symmetrizes `m`.
    ///
    /// Asymmetry up to [`SYMMETRY_TOL`] (relative, Frobenius) is averaged away;
    /// anything larger is rejected.
    pub fn new(m: Matrix) -> Result<Self, NumericsError> {
        ensure_square(&m)?;
        ensure_finite(&m)?;
        if m.nrows() == 0 {
            return Err(NumericsError::NotPositiveDefinite(f64::NAN));
        }
        let scale = m.norm();
        let asym = (&m - m.transpose()).norm();
        let rel = if scale > 0.0 { asym / scale } else { 0.0 };
        if rel > SYMMETRY_TOL {
            return Err(NumericsError::NotSymmetric(rel));
        }
        let sym = (&m + m.transpose()) * 0.5;
        let eig = sym.clone().symmetric_eigenvalues();
        let lambda_min = eig.min();
        let lambda_max = eig.max();
        if !(lambda_min > 0.0) {
            return Err(NumericsError::NotPositiveDefinite(lambda_min));
        }
        Ok(Self {
            m: sym,
            lambda_min,
            lambda_max,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, NumericsError> {
        Self::new(matrix_from_rows(rows)?)
    }

    pub fn identity(n: usize) -> Self {
        Self {
            m: DMatrix::identity(n, n),
            lambda_min: 1.0,
            lambda_max: 1.0,
        }
    }

    pub fn matrix(&self) -> &Matrix {
        &self.m
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn lambda_min(&self) -> f64 {
        self.lambda_min
    }

    pub fn lambda_max(&self) -> f64 {
        self.lambda_max
    }

    /// `xᵀ P x`.
    pub fn quadratic_form(&self, x: &nalgebra::DVector<f64>) -> f64 {
        x.dot(&(&self.m * x))
    }

    /// Multiplies by a positive scalar.
    pub fn scaled(&self, s: f64) -> Result<Self, NumericsError> {
        Self::new(&self.m * s)
    }
}

impl Serialize for SpdMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        serde_rows::serialize(&self.m, s)
    }
}

impl<'de> Deserialize<'de> for SpdMatrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let m = serde_rows::deserialize(d)?;
        SpdMatrix::new(m).map_err(serde::de::Error::custom)
    }
}
