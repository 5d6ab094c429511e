//! Surface geometry, pressure snapshots and the pressure-force integration.
//!
//! Forces are body-frame pressure force coefficients `F = S · C_p` where the
//! columns of `S` are the area-weighted unit normals divided by the reference
//! area. Normals point *into* the body so that a positive pressure coefficient
//! pushes on the surface along its normal.
//!
//! Wind-frame convention used by [`lift_drag`]: body x along the chord, pitch
//! about z, freestream along wind-frame +x, so
//! `n_d = (cos α, sin α, 0)` and `n_l = (−sin α, cos α, 0)`. A dataset built
//! with different body axes needs its own rotation.

use nalgebra::{DMatrix, Matrix3xX, Vector3};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

const NORMAL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceGeometry {
    normals: Vec<Vector3<f64>>,
    areas: Vec<f64>,
    ref_area: f64,
    dim: usize,
}

impl SurfaceGeometry {
    pub fn new(
        normals: Vec<Vector3<f64>>,
        areas: Vec<f64>,
        ref_area: f64,
        dim: usize,
    ) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(Error::Invalid(format!(
                "geometry dim must be 2 or 3, got {dim}"
            )));
        }
        if normals.len() != areas.len() {
            return Err(Error::dimension(
                "geometry areas",
                normals.len(),
                areas.len(),
            ));
        }
        if normals.is_empty() {
            return Err(Error::Invalid("geometry has no surface locations".into()));
        }
        if !(ref_area.is_finite() && ref_area > 0.0) {
            return Err(Error::Invalid(format!(
                "reference area must be positive, got {ref_area}"
            )));
        }
        for (i, (n, &a)) in normals.iter().zip(&areas).enumerate() {
            if let Some(c) = (0..3).find(|&c| !n[c].is_finite()) {
                return Err(Error::NonFinite {
                    context: "geometry normals".into(),
                    row: i,
                    col: c,
                });
            }
            if (n.norm() - 1.0).abs() > NORMAL_TOL {
                return Err(Error::Invalid(format!(
                    "normal {i} is not unit length (norm {})",
                    n.norm()
                )));
            }
            if dim == 2 && n[2] != 0.0 {
                return Err(Error::Invalid(format!(
                    "normal {i} has nonzero z component in a 2D geometry"
                )));
            }
            if !(a.is_finite() && a > 0.0) {
                return Err(Error::Invalid(format!(
                    "face area {i} must be positive, got {a}"
                )));
            }
        }
        Ok(Self {
            normals,
            areas,
            ref_area,
            dim,
        })
    }

    pub fn len(&self) -> usize {
        self.normals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.normals.is_empty()
    }

    pub fn normals(&self) -> &[Vector3<f64>] {
        &self.normals
    }

    pub fn areas(&self) -> &[f64] {
        &self.areas
    }

    pub fn ref_area(&self) -> f64 {
        self.ref_area
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// SHA-256 of the exact bit patterns of the geometry, hex encoded.
    ///
    /// Artifacts record this so that models built on one surface are never
    /// evaluated against data on another.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.dim as u64).to_le_bytes());
        h.update(self.ref_area.to_le_bytes());
        for (n, a) in self.normals.iter().zip(&self.areas) {
            for c in 0..3 {
                h.update(n[c].to_le_bytes());
            }
            h.update(a.to_le_bytes());
        }
        hex::encode(h.finalize())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Training,
    Validation,
    Testing,
}

impl std::str::FromStr for Role {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "training" => Ok(Role::Training),
            "validation" => Ok(Role::Validation),
            "testing" => Ok(Role::Testing),
            other => Err(Error::Invalid(format!("unknown dataset role `{other}`"))),
        }
    }
}

/// Time (s), pitching frequency (Hz) and angle of attack (deg) of one snapshot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleLabel {
    pub t: f64,
    pub f: f64,
    pub alpha: f64,
}

/// Pressure-coefficient snapshots, one column per instant.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotSet {
    name: String,
    role: Role,
    values: DMatrix<f64>,
    labels: Vec<SampleLabel>,
    forces: Option<Vec<Vector3<f64>>>,
}

impl SnapshotSet {
    pub fn new(
        name: impl Into<String>,
        role: Role,
        values: DMatrix<f64>,
        labels: Vec<SampleLabel>,
        forces: Option<Vec<Vector3<f64>>>,
    ) -> Result<Self> {
        let name = name.into();
        if labels.len() != values.ncols() {
            return Err(Error::dimension(
                format!("dataset `{name}` labels"),
                values.ncols(),
                labels.len(),
            ));
        }
        if let Some(f) = &forces {
            if f.len() != values.ncols() {
                return Err(Error::dimension(
                    format!("dataset `{name}` forces"),
                    values.ncols(),
                    f.len(),
                ));
            }
        }
        check_finite(&values, &format!("dataset `{name}` snapshots"))?;
        Ok(Self {
            name,
            role,
            values,
            labels,
            forces,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn labels(&self) -> &[SampleLabel] {
        &self.labels
    }

    pub fn forces(&self) -> Option<&[Vector3<f64>]> {
        self.forces.as_deref()
    }

    /// Number of surface locations N.
    pub fn n_locations(&self) -> usize {
        self.values.nrows()
    }

    /// Number of snapshots M.
    pub fn len(&self) -> usize {
        self.values.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.values.ncols() == 0
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.values.column(j).iter().copied().collect()
    }

    /// Values of snapshot `j` at the given locations, in the given order.
    pub fn sample(&self, j: usize, indices: &[usize]) -> Vec<f64> {
        indices.iter().map(|&i| self.values[(i, j)]).collect()
    }

    /// Row-restriction of the whole snapshot matrix to `indices`.
    pub fn restrict_rows(&self, indices: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(indices.len(), self.len(), |r, c| {
            self.values[(indices[r], c)]
        })
    }

    pub fn check_geometry(&self, geom: &SurfaceGeometry) -> Result<()> {
        if self.n_locations() != geom.len() {
            return Err(Error::dimension(
                format!("dataset `{}` rows vs geometry locations", self.name),
                geom.len(),
                self.n_locations(),
            ));
        }
        Ok(())
    }

    /// Column-wise concatenation, in the order given.
    pub fn concat(name: impl Into<String>, role: Role, sets: &[&SnapshotSet]) -> Result<Self> {
        let first = sets
            .first()
            .ok_or_else(|| Error::Invalid("cannot concatenate zero datasets".into()))?;
        let n = first.n_locations();
        let m: usize = sets.iter().map(|s| s.len()).sum();
        let mut values = DMatrix::zeros(n, m);
        let mut labels = Vec::with_capacity(m);
        let mut forces = Some(Vec::with_capacity(m));
        let mut col = 0;
        for s in sets {
            if s.n_locations() != n {
                return Err(Error::dimension(
                    format!("concatenating `{}`", s.name),
                    n,
                    s.n_locations(),
                ));
            }
            values.columns_mut(col, s.len()).copy_from(&s.values);
            col += s.len();
            labels.extend_from_slice(&s.labels);
            forces = match (forces, &s.forces) {
                (Some(mut acc), Some(f)) => {
                    acc.extend_from_slice(f);
                    Some(acc)
                }
                _ => None,
            };
        }
        Self::new(name, role, values, labels, forces)
    }
}

pub(crate) fn check_finite(values: &DMatrix<f64>, context: &str) -> Result<()> {
    for c in 0..values.ncols() {
        for r in 0..values.nrows() {
            if !values[(r, c)].is_finite() {
                return Err(Error::NonFinite {
                    context: context.to_string(),
                    row: r,
                    col: c,
                });
            }
        }
    }
    Ok(())
}

/// The 3×N matrix `S` whose column i is `n_i S_i / A_ref`.
#[derive(Debug, Clone, PartialEq)]
pub struct ForceIntegrationMatrix {
    s: Matrix3xX<f64>,
}

impl ForceIntegrationMatrix {
    pub fn matrix(&self) -> &Matrix3xX<f64> {
        &self.s
    }

    pub fn len(&self) -> usize {
        self.s.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.s.ncols() == 0
    }
}

pub fn scaled_normal_matrix(geom: &SurfaceGeometry) -> ForceIntegrationMatrix {
    let mut s = Matrix3xX::zeros(geom.len());
    for (i, (n, &a)) in geom.normals.iter().zip(&geom.areas).enumerate() {
        s.set_column(i, &(n * (a / geom.ref_area)));
    }
    ForceIntegrationMatrix { s }
}

/// `F = S · C_p`.
pub fn integrate_force(smat: &ForceIntegrationMatrix, cp: &[f64]) -> Result<Vector3<f64>> {
    if cp.len() != smat.len() {
        return Err(Error::dimension("pressure vector", smat.len(), cp.len()));
    }
    let mut f = Vector3::zeros();
    for (col, &p) in smat.s.column_iter().zip(cp) {
        f += col * p;
    }
    Ok(f)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LiftDrag {
    pub cl: f64,
    pub cd: f64,
}

pub fn lift_drag(force: &Vector3<f64>, alpha_deg: f64) -> LiftDrag {
    let (s, c) = alpha_deg.to_radians().sin_cos();
    LiftDrag {
        cl: -force.x * s + force.y * c,
        cd: force.x * c + force.y * s,
    }
}
