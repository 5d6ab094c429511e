//! Lift/drag error metrics, sensor noise injection and model comparison tables.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::force_model::LinearForceModel;
use crate::geometry::{lift_drag, SnapshotSet};
use crate::nn::Corrector;
use crate::seed::derive_seed;

/// One labelled scalar (Cl or Cd) at a given instant of a given run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub f: f64,
    pub alpha: f64,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub t: f64,
    pub f: f64,
    pub alpha: f64,
    pub truth: f64,
    pub prediction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub l2: f64,
    pub linf: f64,
    pub alpha_at_linf: f64,
    pub per_sample: Vec<SampleRecord>,
}

fn same_label(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * (1.0 + a.abs().max(b.abs()))
}

/// Flat RMS and max-abs error over all aligned samples.
///
/// The first sample attaining the maximum supplies `alpha_at_linf`.
pub fn error_metrics(truth: &[Sample], pred: &[Sample]) -> Result<ErrorReport> {
    if truth.len() != pred.len() {
        return Err(Error::Mismatch(format!(
            "truth has {} samples, prediction has {}",
            truth.len(),
            pred.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::Invalid(
            "error metrics of an empty sample list".into(),
        ));
    }
    let mut per_sample = Vec::with_capacity(truth.len());
    let mut sq = 0.0;
    let mut linf = -1.0;
    let mut alpha_at_linf = f64::NAN;
    for (k, (a, b)) in truth.iter().zip(pred).enumerate() {
        if !(same_label(a.t, b.t) && same_label(a.f, b.f)) {
            return Err(Error::Mismatch(format!(
                "sample {k}: labels (t={}, f={}) and (t={}, f={}) are not aligned",
                a.t, a.f, b.t, b.f
            )));
        }
        let d = (a.value - b.value).abs();
        sq += d * d;
        if d > linf {
            linf = d;
            alpha_at_linf = a.alpha;
        }
        per_sample.push(SampleRecord {
            t: a.t,
            f: a.f,
            alpha: a.alpha,
            truth: a.value,
            prediction: b.value,
        });
    }
    Ok(ErrorReport {
        l2: (sq / truth.len() as f64).sqrt(),
        linf,
        alpha_at_linf,
        per_sample,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    /// η ~ U(−level, +level)
    #[default]
    Uniform,
    /// η ~ N(0, level²)
    Gaussian,
}

/// Relative uniform sensor noise: each entry `x` becomes `x·(1 + η)`, `η ~ U(−level, level)`.
pub fn add_noise(cp_s: &[f64], level: f64, seed: u64) -> Vec<f64> {
    add_noise_with(cp_s, level, NoiseKind::Uniform, seed)
}

pub fn add_noise_with(cp_s: &[f64], level: f64, kind: NoiseKind, seed: u64) -> Vec<f64> {
    if level <= 0.0 {
        return cp_s.to_vec();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match kind {
        NoiseKind::Uniform => cp_s
            .iter()
            .map(|&x| x * (1.0 + rng.random_range(-level..=level)))
            .collect(),
        NoiseKind::Gaussian => {
            let normal = Normal::new(0.0, level).expect("finite positive level");
            cp_s.iter()
                .map(|&x| x * (1.0 + normal.sample(&mut rng)))
                .collect()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlotRow {
    pub t: f64,
    pub f: f64,
    pub alpha: f64,
    pub cl_truth: f64,
    pub cd_truth: f64,
    pub cl_deim: f64,
    pub cd_deim: f64,
    pub cl_nn: f64,
    pub cd_nn: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub noise_level: f64,
    pub noise_kind: NoiseKind,
    pub seed: u64,
    pub cl_deim: ErrorReport,
    pub cl_nn: ErrorReport,
    pub cd_deim: ErrorReport,
    pub cd_nn: ErrorReport,
}

impl Comparison {
    /// `(quantity, model, report)` in table order.
    pub fn rows(&self) -> [(&'static str, &'static str, &ErrorReport); 4] {
        [
            ("Cl", "DEIM", &self.cl_deim),
            ("Cl", "DEIM+NN", &self.cl_nn),
            ("Cd", "DEIM", &self.cd_deim),
            ("Cd", "DEIM+NN", &self.cd_nn),
        ]
    }

    /// ℓ², ℓ∞ and argmax-α per quantity and model.
    pub fn table_csv(&self) -> String {
        let mut s = String::from("quantity,model,l2,linf,alpha_at_linf\n");
        for (q, m, r) in self.rows() {
            s.push_str(&format!(
                "{q},{m},{:e},{:e},{}\n",
                r.l2, r.linf, r.alpha_at_linf
            ));
        }
        s
    }

    /// Summary without the per-sample series.
    pub fn summary_json(&self) -> serde_json::Value {
        let rows: Vec<_> = self
            .rows()
            .iter()
            .map(|(q, m, r)| {
                serde_json::json!({
                    "quantity": q,
                    "model": m,
                    "l2": r.l2,
                    "linf": r.linf,
                    "alpha_at_linf": r.alpha_at_linf,
                })
            })
            .collect();
        serde_json::json!({
            "noise_level": self.noise_level,
            "noise_kind": self.noise_kind,
            "seed": self.seed,
            "errors": rows,
        })
    }

    /// (α, Cl, Cd) series for truth, DEIM and DEIM+NN.
    pub fn plot_rows(&self) -> Vec<PlotRow> {
        (0..self.cl_deim.per_sample.len())
            .map(|k| {
                let l = &self.cl_deim.per_sample[k];
                PlotRow {
                    t: l.t,
                    f: l.f,
                    alpha: l.alpha,
                    cl_truth: l.truth,
                    cd_truth: self.cd_deim.per_sample[k].truth,
                    cl_deim: l.prediction,
                    cd_deim: self.cd_deim.per_sample[k].prediction,
                    cl_nn: self.cl_nn.per_sample[k].prediction,
                    cd_nn: self.cd_nn.per_sample[k].prediction,
                }
            })
            .collect()
    }
}

/// Evaluate DEIM and DEIM+NN lift/drag on a labelled test set.
///
/// Both models see the same (optionally noisy) sensor readings; the noise for
/// sample `j` is seeded by `derive_seed(seed, j)`.
pub fn compare_models(
    model: &LinearForceModel,
    corrector: &Corrector,
    test_set: &SnapshotSet,
    noise_level: f64,
    noise_kind: NoiseKind,
    seed: u64,
) -> Result<Comparison> {
    if !(noise_level >= 0.0 && noise_level.is_finite()) {
        return Err(Error::Invalid(format!(
            "noise level must be ≥ 0, got {noise_level}"
        )));
    }
    let forces = test_set.forces().ok_or_else(|| {
        Error::Invalid(format!(
            "test set `{}` has no ground-truth forces",
            test_set.name()
        ))
    })?;
    if corrector.n_inputs() != model.n_sensors() {
        return Err(Error::dimension(
            "network inputs vs sensors",
            model.n_sensors(),
            corrector.n_inputs(),
        ));
    }
    if let Some(&bad) = model
        .sensor_indices()
        .iter()
        .find(|&&i| i >= test_set.n_locations())
    {
        return Err(Error::Invalid(format!(
            "sensor index {bad} outside the test set"
        )));
    }
    let m = test_set.len();
    let mut cols: [Vec<Sample>; 6] = Default::default();
    for (j, label) in test_set.labels().iter().enumerate() {
        let clean = test_set.sample(j, model.sensor_indices());
        let cp_s = add_noise_with(&clean, noise_level, noise_kind, derive_seed(seed, j as u64));
        let f_deim = model.predict_force(&cp_s)?;
        let f_nn = f_deim + corrector.correction(&cp_s)?;
        let truth = lift_drag(&forces[j], label.alpha);
        let deim = lift_drag(&f_deim, label.alpha);
        let nn = lift_drag(&f_nn, label.alpha);
        let values = [truth.cl, truth.cd, deim.cl, deim.cd, nn.cl, nn.cd];
        for (c, &value) in cols.iter_mut().zip(&values) {
            c.reserve(m);
            c.push(Sample {
                t: label.t,
                f: label.f,
                alpha: label.alpha,
                value,
            });
        }
    }
    let [cl_t, cd_t, cl_d, cd_d, cl_n, cd_n] = cols;
    Ok(Comparison {
        noise_level,
        noise_kind,
        seed,
        cl_deim: error_metrics(&cl_t, &cl_d)?,
        cl_nn: error_metrics(&cl_t, &cl_n)?,
        cd_deim: error_metrics(&cd_t, &cd_d)?,
        cd_nn: error_metrics(&cd_t, &cd_n)?,
    })
}
