//! JSON artifacts persisted between pipeline stages.
//!
//! Every artifact is an [`Envelope`] recording its schema tag, the geometry
//! hash of the data it was built from, the producing configuration and seed.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector, Matrix3xX, Vector3};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::deim::SensorSelection;
use crate::error::{Error, Result};
use crate::force_model::LinearForceModel;
use crate::nn::{Corrector, Dense, MlpParams, Normalization};
use crate::pod::ReducedBasis;

pub const BASIS_SCHEMA: &str = "deim-aero/reduced-basis/v1";
pub const SELECTION_SCHEMA: &str = "deim-aero/sensor-selection/v1";
pub const MODEL_SCHEMA: &str = "deim-aero/linear-force-model/v1";
pub const NETWORK_SCHEMA: &str = "deim-aero/correction-network/v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Envelope<T> {
    pub schema: String,
    pub geometry_hash: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub data: T,
}

impl<T: Serialize + DeserializeOwned> Envelope<T> {
    pub fn new(
        schema: &str,
        geometry_hash: &str,
        seed: u64,
        config: serde_json::Value,
        data: T,
    ) -> Self {
        Self {
            schema: schema.to_string(),
            geometry_hash: geometry_hash.to_string(),
            seed,
            config,
            data,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("artifact serialises") + "\n";
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// Load and check the schema tag.
    pub fn load(path: &Path, schema: &str) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let env: Self =
            serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
        if env.schema != schema {
            return Err(Error::format(
                path,
                format!("schema `{}` where `{schema}` was expected", env.schema),
            ));
        }
        Ok(env)
    }
}

/// Fail unless every hash equals the first.
pub fn check_same_geometry(items: &[(&str, &str)]) -> Result<()> {
    if let Some((first_name, first)) = items.first() {
        for (name, h) in &items[1..] {
            if h != first {
                return Err(Error::Mismatch(format!(
                    "{name} was built for geometry {h}, but {first_name} for {first}"
                )));
            }
        }
    }
    Ok(())
}

fn columns(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.column_iter()
        .map(|c| c.iter().copied().collect())
        .collect()
}

fn from_columns(cols: &[Vec<f64>], nrows: usize, what: &str) -> Result<DMatrix<f64>> {
    if let Some(c) = cols.iter().find(|c| c.len() != nrows) {
        return Err(Error::dimension(
            format!("{what} column length"),
            nrows,
            c.len(),
        ));
    }
    Ok(DMatrix::from_fn(nrows, cols.len(), |r, c| cols[c][r]))
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn from_rows(rows: &[Vec<f64>], ncols: usize, what: &str) -> Result<DMatrix<f64>> {
    if let Some(r) = rows.iter().find(|r| r.len() != ncols) {
        return Err(Error::dimension(
            format!("{what} row length"),
            ncols,
            r.len(),
        ));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |r, c| rows[r][c]))
}

fn finite(values: impl IntoIterator<Item = f64>, what: &str) -> Result<()> {
    if values.into_iter().all(f64::is_finite) {
        Ok(())
    } else {
        Err(Error::Invalid(format!("{what} contains non-finite values")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisData {
    pub mean: Vec<f64>,
    /// Basis columns U(:, k).
    pub modes: Vec<Vec<f64>>,
    pub singular_values: Vec<f64>,
}

impl From<&ReducedBasis> for BasisData {
    fn from(b: &ReducedBasis) -> Self {
        Self {
            mean: b.mean().iter().copied().collect(),
            modes: columns(b.modes()),
            singular_values: b.singular_values().to_vec(),
        }
    }
}

impl BasisData {
    pub fn to_basis(&self) -> Result<ReducedBasis> {
        finite(self.mean.iter().copied(), "basis mean")?;
        let u = from_columns(&self.modes, self.mean.len(), "basis")?;
        ReducedBasis::from_parts(
            DVector::from_column_slice(&self.mean),
            u,
            self.singular_values.clone(),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelData {
    pub indices: Vec<usize>,
    pub candidates: Vec<usize>,
    /// Rows of the 3×n_s matrix M_s.
    pub m_s: Vec<Vec<f64>>,
    pub m_0: [f64; 3],
    pub mean_at_sensors: Vec<f64>,
    /// Columns of R (N × n_s), kept for full-field reconstruction.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recon: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean: Option<Vec<f64>>,
}

impl From<&LinearForceModel> for ModelData {
    fn from(m: &LinearForceModel) -> Self {
        let ms = DMatrix::from_fn(3, m.n_sensors(), |r, c| m.m_s[(r, c)]);
        Self {
            indices: m.selection.indices.clone(),
            candidates: m.selection.candidates.clone(),
            m_s: rows(&ms),
            m_0: [m.m_0.x, m.m_0.y, m.m_0.z],
            mean_at_sensors: m.mean_at_sensors.clone(),
            recon: m.recon.as_ref().map(columns),
            mean: m.mean.as_ref().map(|v| v.iter().copied().collect()),
        }
    }
}

impl ModelData {
    pub fn to_model(&self, geometry_hash: &str) -> Result<LinearForceModel> {
        let n_s = self.indices.len();
        if n_s == 0 {
            return Err(Error::Invalid("model has no sensors".into()));
        }
        if self.m_s.len() != 3 {
            return Err(Error::dimension("M_s rows", 3, self.m_s.len()));
        }
        let ms = from_rows(&self.m_s, n_s, "M_s")?;
        if self.mean_at_sensors.len() != n_s {
            return Err(Error::dimension(
                "mean_at_sensors",
                n_s,
                self.mean_at_sensors.len(),
            ));
        }
        finite(
            ms.iter()
                .copied()
                .chain(self.m_0)
                .chain(self.mean_at_sensors.iter().copied()),
            "model",
        )?;
        let (recon, mean) = match (&self.recon, &self.mean) {
            (Some(r), Some(m)) => {
                let r = from_columns(r, m.len(), "reconstruction matrix")?;
                if r.ncols() != n_s {
                    return Err(Error::dimension(
                        "reconstruction matrix columns",
                        n_s,
                        r.ncols(),
                    ));
                }
                (Some(r), Some(DVector::from_column_slice(m)))
            }
            (None, None) => (None, None),
            _ => {
                return Err(Error::Invalid(
                    "model has only one of `recon` and `mean`".into(),
                ))
            }
        };
        Ok(LinearForceModel {
            m_s: Matrix3xX::from_fn(n_s, |r, c| ms[(r, c)]),
            m_0: Vector3::from(self.m_0),
            selection: SensorSelection {
                indices: self.indices.clone(),
                candidates: self.candidates.clone(),
            },
            mean_at_sensors: self.mean_at_sensors.clone(),
            recon,
            mean,
            geometry_hash: geometry_hash.to_string(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerData {
    /// Rows of the (out × in) weight matrix.
    pub w: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkData {
    pub widths: Vec<usize>,
    pub layers: Vec<LayerData>,
    pub normalization: Normalization,
    #[serde(default)]
    pub training: serde_json::Value,
}

impl NetworkData {
    pub fn new(c: &Corrector, training: serde_json::Value) -> Self {
        Self {
            widths: c.params.widths(),
            layers: c
                .params
                .layers()
                .iter()
                .map(|l| LayerData {
                    w: rows(&l.w),
                    b: l.b.iter().copied().collect(),
                })
                .collect(),
            normalization: c.normalization.clone(),
            training,
        }
    }

    pub fn to_corrector(&self) -> Result<Corrector> {
        if self.widths.len() != self.layers.len() + 1 {
            return Err(Error::dimension(
                "network widths",
                self.layers.len() + 1,
                self.widths.len(),
            ));
        }
        let layers = self
            .layers
            .iter()
            .enumerate()
            .map(|(k, l)| {
                Ok(Dense {
                    w: from_rows(&l.w, self.widths[k], &format!("layer {k} weights"))?,
                    b: DVector::from_column_slice(&l.b),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let params = MlpParams::from_layers(layers)?;
        if params.widths() != self.widths {
            return Err(Error::Invalid(format!(
                "layer shapes {:?} disagree with widths {:?}",
                params.widths(),
                self.widths
            )));
        }
        let n_in = params.input_width();
        let norm = &self.normalization;
        if norm.mean.len() != n_in || norm.std.len() != n_in {
            return Err(Error::dimension("normalization", n_in, norm.mean.len()));
        }
        if norm.std.iter().any(|&s| !(s > 0.0 && s.is_finite()))
            || norm.mean.iter().any(|m| !m.is_finite())
        {
            return Err(Error::Invalid(
                "normalization scales must be positive and finite".into(),
            ));
        }
        if params.output_width() != 3 {
            return Err(Error::dimension("network output", 3, params.output_width()));
        }
        Ok(Corrector {
            normalization: self.normalization.clone(),
            params,
        })
    }
}
