//! The precomputed affine force operator `F = M_s · C_p^s + M_0`.

use nalgebra::{DMatrix, DVector, Matrix3xX, Vector3};

use crate::deim::{reconstruction_matrix, SensorSelection};
use crate::error::{Error, Result};
use crate::geometry::{scaled_normal_matrix, SurfaceGeometry};
use crate::pod::ReducedBasis;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearForceModel {
    pub(crate) m_s: Matrix3xX<f64>,
    pub(crate) m_0: Vector3<f64>,
    pub(crate) selection: SensorSelection,
    pub(crate) mean_at_sensors: Vec<f64>,
    pub(crate) recon: Option<DMatrix<f64>>,
    pub(crate) mean: Option<DVector<f64>>,
    pub(crate) geometry_hash: String,
}

impl LinearForceModel {
    /// Offline assembly of `M_s = S R` and `M_0 = S C̄_p − S R C̄_p(𝓘)`.
    pub fn assemble(
        geom: &SurfaceGeometry,
        basis: &ReducedBasis,
        selection: &SensorSelection,
    ) -> Result<Self> {
        if basis.n_locations() != geom.len() {
            return Err(Error::dimension(
                "basis rows vs geometry locations",
                geom.len(),
                basis.n_locations(),
            ));
        }
        let r = reconstruction_matrix(basis.modes(), selection)?;
        let s = scaled_normal_matrix(geom);
        let m_s: Matrix3xX<f64> = s.matrix() * &r;
        let mean = basis.mean().clone();
        let mean_at_sensors: Vec<f64> = selection.indices.iter().map(|&i| mean[i]).collect();
        let m_0 = s.matrix() * &mean - &m_s * DVector::from_column_slice(&mean_at_sensors);
        Ok(Self {
            m_s,
            m_0,
            selection: selection.clone(),
            mean_at_sensors,
            recon: Some(r),
            mean: Some(mean),
            geometry_hash: geom.content_hash(),
        })
    }

    pub fn n_sensors(&self) -> usize {
        self.selection.len()
    }

    pub fn sensor_indices(&self) -> &[usize] {
        &self.selection.indices
    }

    pub fn selection(&self) -> &SensorSelection {
        &self.selection
    }

    pub fn m_s(&self) -> &Matrix3xX<f64> {
        &self.m_s
    }

    pub fn m_0(&self) -> &Vector3<f64> {
        &self.m_0
    }

    pub fn mean_at_sensors(&self) -> &[f64] {
        &self.mean_at_sensors
    }

    pub fn geometry_hash(&self) -> &str {
        &self.geometry_hash
    }

    pub fn has_full_field(&self) -> bool {
        self.recon.is_some() && self.mean.is_some()
    }

    /// Online force prediction from sensor readings: 3·n_s multiply-adds.
    pub fn predict_force(&self, cp_s: &[f64]) -> Result<Vector3<f64>> {
        if cp_s.len() != self.n_sensors() {
            return Err(Error::dimension(
                "sensor vector",
                self.n_sensors(),
                cp_s.len(),
            ));
        }
        Ok(self.predict_force_unchecked(cp_s))
    }

    #[inline]
    pub(crate) fn predict_force_unchecked(&self, cp_s: &[f64]) -> Vector3<f64> {
        let mut f = self.m_0;
        for (col, &p) in self.m_s.column_iter().zip(cp_s) {
            f.x += col[0] * p;
            f.y += col[1] * p;
            f.z += col[2] * p;
        }
        f
    }

    /// Full-surface pressure `C̄_p + R (C_p^s − C̄_p(𝓘))`.
    pub fn reconstruct_pressure(&self, cp_s: &[f64]) -> Result<DVector<f64>> {
        if cp_s.len() != self.n_sensors() {
            return Err(Error::dimension(
                "sensor vector",
                self.n_sensors(),
                cp_s.len(),
            ));
        }
        let (r, mean) = match (&self.recon, &self.mean) {
            (Some(r), Some(m)) => (r, m),
            _ => {
                return Err(Error::Invalid(
                    "model was stored without the reconstruction matrix".into(),
                ))
            }
        };
        let delta = DVector::from_iterator(
            cp_s.len(),
            cp_s.iter().zip(&self.mean_at_sensors).map(|(x, m)| x - m),
        );
        Ok(mean + r * delta)
    }
}
