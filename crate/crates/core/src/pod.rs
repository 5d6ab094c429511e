//! Mean-centred proper orthogonal decomposition of a snapshot set.

use log::warn;
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::geometry::SnapshotSet;
use crate::linalg::{gram_schmidt, left_svd};

const ORTHONORMAL_TOL: f64 = 1e-10;

/// Mean pressure, orthonormal modes and the full singular spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedBasis {
    mean: DVector<f64>,
    basis: DMatrix<f64>,
    singular_values: Vec<f64>,
}

impl ReducedBasis {
    /// Assemble a basis from stored parts, checking its invariants.
    pub fn from_parts(
        mean: DVector<f64>,
        basis: DMatrix<f64>,
        singular_values: Vec<f64>,
    ) -> Result<Self> {
        if basis.nrows() != mean.len() {
            return Err(Error::dimension(
                "basis rows vs mean length",
                mean.len(),
                basis.nrows(),
            ));
        }
        if basis.ncols() == 0 || basis.ncols() > singular_values.len() {
            return Err(Error::Invalid(format!(
                "basis width {} must be in 1..={}",
                basis.ncols(),
                singular_values.len()
            )));
        }
        if singular_values
            .iter()
            .any(|s| !(s.is_finite() && *s >= 0.0))
            || singular_values.windows(2).any(|w| w[1] > w[0])
        {
            return Err(Error::Invalid(
                "singular values must be finite, nonnegative and nonincreasing".into(),
            ));
        }
        let gram = basis.transpose() * &basis;
        let defect = (gram - DMatrix::identity(basis.ncols(), basis.ncols()))
            .abs()
            .max();
        if defect > ORTHONORMAL_TOL {
            return Err(Error::Invalid(format!(
                "basis is not orthonormal (defect {defect:e})"
            )));
        }
        Ok(Self {
            mean,
            basis,
            singular_values,
        })
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    /// The N×n_b mode matrix U.
    pub fn modes(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn singular_values(&self) -> &[f64] {
        &self.singular_values
    }

    pub fn n_locations(&self) -> usize {
        self.mean.len()
    }

    pub fn width(&self) -> usize {
        self.basis.ncols()
    }

    /// The nested basis made of the leading `n_b` modes.
    pub fn truncated(&self, n_b: usize) -> Result<Self> {
        if n_b == 0 || n_b > self.width() {
            return Err(Error::Invalid(format!(
                "cannot truncate a {}-mode basis to {n_b} modes",
                self.width()
            )));
        }
        Ok(Self {
            mean: self.mean.clone(),
            basis: self.basis.columns(0, n_b).into_owned(),
            singular_values: self.singular_values.clone(),
        })
    }
}

/// Row-wise arithmetic mean of the snapshot matrix.
pub fn compute_mean(snapshots: &SnapshotSet) -> Result<DVector<f64>> {
    mean_of_columns(snapshots.values())
}

fn mean_of_columns(values: &DMatrix<f64>) -> Result<DVector<f64>> {
    if values.ncols() == 0 {
        return Err(Error::Invalid("mean of an empty snapshot set".into()));
    }
    Ok(values.column_mean())
}

pub fn pod_basis(snapshots: &SnapshotSet, n_b: usize) -> Result<ReducedBasis> {
    pod_basis_from_matrix(snapshots.values(), n_b)
}

pub fn pod_basis_from_matrix(values: &DMatrix<f64>, n_b: usize) -> Result<ReducedBasis> {
    let (n, m) = values.shape();
    let r = n.min(m);
    if n_b == 0 || n_b > r {
        return Err(Error::Invalid(format!("n_b = {n_b} must be in 1..={r}")));
    }
    let mean = mean_of_columns(values)?;
    let mut centred = values.clone();
    for mut col in centred.column_iter_mut() {
        col -= &mean;
    }
    let svd = left_svd(&centred)?;
    let basis = svd.u.columns(0, n_b).into_owned();
    Ok(ReducedBasis {
        mean,
        basis,
        singular_values: svd.singular_values,
    })
}

/// Average relative residual of candidate-restricted probe columns after
/// projection onto the candidate-restricted reduced space.
///
/// `probe` holds one column per measured snapshot, with rows ordered like
/// `candidates`. The m×n_b block `U(candidates, :)` is orthonormalised first;
/// columns whose centred norm is zero are skipped with a warning.
pub fn projection_error(
    basis: &ReducedBasis,
    candidates: &[usize],
    probe: &DMatrix<f64>,
) -> Result<f64> {
    let m = candidates.len();
    if probe.nrows() != m {
        return Err(Error::dimension(
            "probe rows vs candidate count",
            m,
            probe.nrows(),
        ));
    }
    if let Some(&bad) = candidates.iter().find(|&&i| i >= basis.n_locations()) {
        return Err(Error::Invalid(format!(
            "candidate index {bad} out of range"
        )));
    }
    let restricted = DMatrix::from_fn(m, basis.width(), |r, c| basis.basis[(candidates[r], c)]);
    let q = gram_schmidt(&restricted, 1e-10).map_err(|e| {
        Error::Numerical(format!("candidate-restricted basis is rank deficient: {e}"))
    })?;
    let mean_c = DVector::from_iterator(m, candidates.iter().map(|&i| basis.mean[i]));

    let mut total = 0.0;
    let mut used = 0usize;
    for (j, col) in probe.column_iter().enumerate() {
        let x = col - &mean_c;
        let nx = x.norm();
        if nx == 0.0 {
            warn!("probe column {j} coincides with the mean; excluded from the projection error");
            continue;
        }
        let residual = &x - &q * (q.transpose() * &x);
        total += residual.norm() / nx;
        used += 1;
    }
    if used == 0 {
        return Err(Error::Invalid(
            "every probe column coincides with the mean".into(),
        ));
    }
    Ok(total / used as f64)
}

/// `σ_k / σ_1` for the full spectrum.
pub fn singular_spectrum(basis: &ReducedBasis) -> Result<Vec<f64>> {
    let s1 = basis.singular_values[0];
    if s1 <= 0.0 {
        return Err(Error::Invalid(
            "singular spectrum is identically zero".into(),
        ));
    }
    Ok(basis.singular_values.iter().map(|s| s / s1).collect())
}
