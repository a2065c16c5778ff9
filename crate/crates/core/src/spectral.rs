//! Symmetric PSD matrices stored as `basis · diag(eigenvalues) · basisᵀ`.
//!
//! Every matrix function the risk oracle needs ((Σ+λI)⁻¹, Σ^{1/2}, traces of
//! rational functions of Σ) is evaluated per eigenvalue, so no linear solves
//! or iterative methods appear anywhere downstream.

use nalgebra::SymmetricEigen;
use serde::{Deserialize, Serialize};

use crate::error::{GeoAvgError, Result};
use crate::{Matrix, Vector};

/// Tolerance on `BᵀB = I` for a user-supplied basis.
pub const ORTHONORMAL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralMatrix {
    eigenvalues: Vector,
    basis: Matrix,
}

impl SpectralMatrix {
    /// Builds the matrix from its eigen-decomposition. Eigenvalues must be
    /// nonnegative and sorted descending, and the basis columns orthonormal.
    pub fn new(eigenvalues: Vector, basis: Matrix) -> Result<Self> {
        let d = eigenvalues.len();
        if d == 0 {
            return Err(GeoAvgError::InvalidSpectrum("empty spectrum".into()));
        }
        if basis.nrows() != d || basis.ncols() != d {
            return Err(GeoAvgError::DimensionMismatch {
                expected: d,
                found: basis.nrows().max(basis.ncols()),
            });
        }
        for (i, &s) in eigenvalues.iter().enumerate() {
            if !s.is_finite() || s < 0.0 {
                return Err(GeoAvgError::InvalidSpectrum(format!(
                    "eigenvalue {i} is {s}"
                )));
            }
            if i > 0 && s > eigenvalues[i - 1] {
                return Err(GeoAvgError::InvalidSpectrum(
                    "eigenvalues must be sorted in descending order".into(),
                ));
            }
        }
        let gram = basis.transpose() * &basis;
        let defect = (gram - Matrix::identity(d, d)).amax();
        if !(defect <= ORTHONORMAL_TOL) {
            return Err(GeoAvgError::InvalidSpectrum(format!(
                "basis is not orthonormal (max |BᵀB - I| = {defect:e})"
            )));
        }
        Ok(Self { eigenvalues, basis })
    }

    pub fn diagonal(eigenvalues: Vector) -> Result<Self> {
        let d = eigenvalues.len();
        Self::new(eigenvalues, Matrix::identity(d, d))
    }

    /// Eigen-decomposes a symmetric matrix. Tiny negative eigenvalues from
    /// rounding are clamped to zero; clearly negative ones are rejected.
    pub fn from_symmetric(m: &Matrix) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(GeoAvgError::DimensionMismatch {
                expected: m.nrows(),
                found: m.ncols(),
            });
        }
        let sym = (m + m.transpose()) * 0.5;
        let eig = SymmetricEigen::new(sym);
        let scale = eig.eigenvalues.amax().max(1.0);
        let mut order: Vec<usize> = (0..m.nrows()).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let mut values = Vector::zeros(m.nrows());
        let mut basis = Matrix::zeros(m.nrows(), m.nrows());
        for (k, &i) in order.iter().enumerate() {
            let s = eig.eigenvalues[i];
            if s < -1e-12 * scale {
                return Err(GeoAvgError::InvalidSpectrum(format!(
                    "matrix is not positive semidefinite (eigenvalue {s:e})"
                )));
            }
            values[k] = s.max(0.0);
            basis.set_column(k, &eig.eigenvectors.column(i));
        }
        Ok(Self {
            eigenvalues: values,
            basis,
        })
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &Vector {
        &self.eigenvalues
    }

    pub fn basis(&self) -> &Matrix {
        &self.basis
    }

    pub fn largest(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn smallest(&self) -> f64 {
        self.eigenvalues[self.dim() - 1]
    }

    pub fn trace(&self) -> f64 {
        self.eigenvalues.sum()
    }

    /// The assembled dense matrix.
    pub fn dense(&self) -> Matrix {
        let scaled = Matrix::from_fn(self.dim(), self.dim(), |i, j| {
            self.basis[(i, j)] * self.eigenvalues[j]
        });
        scaled * self.basis.transpose()
    }

    /// Coordinates of `v` in the eigenbasis, `Bᵀv`.
    pub fn to_eigen(&self, v: &Vector) -> Vector {
        self.basis.tr_mul(v)
    }

    pub fn from_eigen(&self, coords: &Vector) -> Vector {
        &self.basis * coords
    }

    /// `f(Σ) v` for a scalar function `f` applied to the eigenvalues.
    pub fn apply_fn(&self, v: &Vector, f: impl Fn(f64) -> f64) -> Vector {
        let mut coords = self.to_eigen(v);
        for (c, &s) in coords.iter_mut().zip(self.eigenvalues.iter()) {
            *c *= f(s);
        }
        self.from_eigen(&coords)
    }

    /// `tr f(Σ)`.
    pub fn trace_fn(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.eigenvalues.iter().map(|&s| f(s)).sum()
    }

    /// `vᵀ f(Σ) v`.
    pub fn quad_form_fn(&self, v: &Vector, f: impl Fn(f64) -> f64) -> f64 {
        self.to_eigen(v)
            .iter()
            .zip(self.eigenvalues.iter())
            .map(|(&c, &s)| c * c * f(s))
            .sum()
    }

    /// `Σ v` without forming the dense matrix.
    pub fn mul_vec(&self, v: &Vector) -> Vector {
        self.apply_fn(v, |s| s)
    }
}
