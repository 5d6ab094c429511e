use nalgebra::{DMatrix, Vector3};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::force_model::LinearForceModel;
use crate::geometry::{lift_drag, LiftDrag, SnapshotSet};
use crate::seed::derive_seed;

use super::adam::{adam_step, AdamState};
use super::mlp::MlpParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub initial_lr: f64,
    pub lr_step: usize,
    pub lr_decay: f64,
    pub batch_size: usize,
    pub weight_decay: f64,
    pub patience: usize,
    pub max_epochs: usize,
    pub seed: u64,
    pub hidden_layers: usize,
    pub hidden_width: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            initial_lr: 1e-3,
            lr_step: 50,
            lr_decay: 0.95,
            batch_size: 64,
            weight_decay: 1e-5,
            patience: 100,
            max_epochs: 5000,
            seed: 0,
            hidden_layers: 2,
            hidden_width: 10,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = self.initial_lr > 0.0
            && self.lr_step > 0
            && self.lr_decay > 0.0
            && self.batch_size > 0
            && self.weight_decay >= 0.0
            && self.patience >= 1
            && self.max_epochs > 0
            && (self.hidden_layers == 0 || self.hidden_width > 0);
        if positive && self.initial_lr.is_finite() && self.lr_decay.is_finite() {
            Ok(())
        } else {
            Err(Error::Invalid(format!(
                "invalid training configuration {self:?}"
            )))
        }
    }

    /// `[n_in, h, …, h, 3]` with `hidden_layers` hidden layers.
    pub fn widths(&self, n_in: usize) -> Vec<usize> {
        let mut w = vec![n_in];
        w.extend(std::iter::repeat_n(self.hidden_width, self.hidden_layers));
        w.push(3);
        w
    }
}

/// Step-decay learning rate `λ = λ₀ · γ^⌊epoch / step⌋`.
pub fn lr_schedule(epoch: usize, cfg: &TrainConfig) -> f64 {
    cfg.initial_lr * cfg.lr_decay.powi((epoch / cfg.lr_step) as i32)
}

/// Per-channel standardisation fitted on the training inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalization {
    pub fn identity(n: usize) -> Self {
        Self {
            mean: vec![0.0; n],
            std: vec![1.0; n],
        }
    }

    /// Fit on inputs stored column-wise; zero-variance channels keep unit scale.
    pub fn fit(x: &DMatrix<f64>) -> Self {
        let m = x.ncols() as f64;
        let mut mean = Vec::with_capacity(x.nrows());
        let mut std = Vec::with_capacity(x.nrows());
        for row in x.row_iter() {
            let mu = row.sum() / m;
            let var = row.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / m;
            let sd = var.sqrt();
            mean.push(mu);
            std.push(if sd > 1e-12 * (1.0 + mu.abs()) {
                sd
            } else {
                1.0
            });
        }
        Self { mean, std }
    }

    pub fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(x.nrows(), x.ncols(), |r, c| {
            (x[(r, c)] - self.mean[r]) / self.std[r]
        })
    }
}

/// A trained correction network together with its input scaling.
#[derive(Debug, Clone, PartialEq)]
pub struct Corrector {
    pub normalization: Normalization,
    pub params: MlpParams,
}

impl Corrector {
    /// A network that always outputs zero.
    pub fn zero(widths: &[usize]) -> Result<Self> {
        Ok(Self {
            normalization: Normalization::identity(widths[0]),
            params: MlpParams::zeros(widths)?,
        })
    }

    pub fn n_inputs(&self) -> usize {
        self.params.input_width()
    }

    pub fn correction(&self, cp_s: &[f64]) -> Result<Vector3<f64>> {
        if cp_s.len() != self.n_inputs() {
            return Err(Error::dimension(
                "corrector input",
                self.n_inputs(),
                cp_s.len(),
            ));
        }
        let x = DMatrix::from_fn(cp_s.len(), 1, |r, _| {
            (cp_s[r] - self.normalization.mean[r]) / self.normalization.std[r]
        });
        let out = self.params.forward_batch(&x)?;
        Ok(Vector3::new(out[(0, 0)], out[(1, 0)], out[(2, 0)]))
    }

    pub fn correction_batch(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.params.forward_batch(&self.normalization.apply(x))
    }
}

/// `(F^DEIM + NN(C_p^s)) · (n_l, n_d)`.
pub fn predict_corrected(
    model: &LinearForceModel,
    corrector: &Corrector,
    cp_s: &[f64],
    alpha_deg: f64,
) -> Result<LiftDrag> {
    let f = model.predict_force(cp_s)? + corrector.correction(cp_s)?;
    Ok(lift_drag(&f, alpha_deg))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub initial_train_loss: f64,
    pub initial_val_loss: f64,
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were kept; `None` means no epoch beat the initialisation.
    pub best_epoch: Option<usize>,
    pub best_val_loss: f64,
    pub early_stopped: bool,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub corrector: Corrector,
    pub log: TrainingLog,
    pub config: TrainConfig,
}

/// Design matrices for the correction: sensor inputs (n_s × M) and body-frame
/// force gaps `F − F^DEIM` (3 × M).
pub fn correction_targets(
    model: &LinearForceModel,
    set: &SnapshotSet,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let forces = set.forces().ok_or_else(|| {
        Error::Invalid(format!(
            "dataset `{}` has no ground-truth forces",
            set.name()
        ))
    })?;
    if set.is_empty() {
        return Err(Error::Invalid(format!("dataset `{}` is empty", set.name())));
    }
    let idx = model.sensor_indices();
    if let Some(&bad) = idx.iter().find(|&&i| i >= set.n_locations()) {
        return Err(Error::Invalid(format!(
            "sensor index {bad} outside dataset `{}` with {} locations",
            set.name(),
            set.n_locations()
        )));
    }
    let x = set.restrict_rows(idx);
    let mut y = DMatrix::zeros(3, set.len());
    for (j, f) in forces.iter().enumerate() {
        let cp_s: Vec<f64> = x.column(j).iter().copied().collect();
        let gap = f - model.predict_force_unchecked(&cp_s);
        y.set_column(j, &gap);
    }
    Ok((x, y))
}

fn mse(params: &MlpParams, x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<f64> {
    let out = params.forward_batch(x)?;
    Ok((out - y).norm_squared() / x.ncols() as f64)
}

/// Mini-batch ADAM with step decay and early stopping on the validation loss.
///
/// Returns the parameters with the lowest validation loss seen, the
/// initialisation included. Improvement means strictly lower loss.
pub fn train(
    model: &LinearForceModel,
    train_set: &SnapshotSet,
    val_set: &SnapshotSet,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let (x_train, y_train) = correction_targets(model, train_set)?;
    let (x_val, y_val) = correction_targets(model, val_set)?;
    let normalization = Normalization::fit(&x_train);
    let xt = normalization.apply(&x_train);
    let xv = normalization.apply(&x_val);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = MlpParams::he_init(&cfg.widths(model.n_sensors()), &mut rng)?;
    let mut adam = AdamState::new(&params);

    let initial_train_loss = mse(&params, &xt, &y_train)?;
    let initial_val_loss = mse(&params, &xv, &y_val)?;
    if !(initial_train_loss.is_finite() && initial_val_loss.is_finite()) {
        return Err(Error::Numerical("initial loss is not finite".into()));
    }

    let mut best = params.clone();
    let mut best_val = initial_val_loss;
    let mut best_epoch = None;
    let mut since_best = 0usize;
    let mut early_stopped = false;
    let mut epochs = Vec::new();
    let m = xt.ncols();
    let mut order: Vec<usize> = (0..m).collect();
    let n_in = xt.nrows();

    for epoch in 0..cfg.max_epochs {
        let lr = lr_schedule(epoch, cfg);
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let xb = DMatrix::from_fn(n_in, chunk.len(), |r, c| xt[(r, chunk[c])]);
            let yb = DMatrix::from_fn(3, chunk.len(), |r, c| y_train[(r, chunk[c])]);
            let (loss, grads) = params.loss_and_gradient(&xb, &yb)?;
            if !loss.is_finite() {
                return Err(diverged(epoch, "training loss is not finite", best));
            }
            if let Err(e) = adam_step(&mut params, &mut adam, &grads, lr, cfg.weight_decay) {
                return Err(diverged(epoch, &e.to_string(), best));
            }
            epoch_loss += loss * chunk.len() as f64;
        }
        let train_loss = epoch_loss / m as f64;
        let val_loss = mse(&params, &xv, &y_val)?;
        if !(val_loss.is_finite() && params.is_finite()) {
            return Err(diverged(epoch, "validation loss is not finite", best));
        }
        epochs.push(EpochRecord {
            epoch,
            lr,
            train_loss,
            val_loss,
        });
        if val_loss < best_val {
            best_val = val_loss;
            best = params.clone();
            best_epoch = Some(epoch);
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                early_stopped = true;
                break;
            }
        }
    }

    Ok(TrainOutcome {
        corrector: Corrector {
            normalization,
            params: best,
        },
        log: TrainingLog {
            initial_train_loss,
            initial_val_loss,
            epochs,
            best_epoch,
            best_val_loss: best_val,
            early_stopped,
        },
        config: cfg.clone(),
    })
}

fn diverged(epoch: usize, message: &str, checkpoint: MlpParams) -> Error {
    Error::Diverged {
        epoch,
        message: message.to_string(),
        checkpoint: Box::new(checkpoint),
    }
}

/// Architecture and regularisation axes searched by [`grid_search`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub hidden_layers: Vec<usize>,
    pub hidden_widths: Vec<usize>,
    pub weight_decays: Vec<f64>,
}

impl Default for GridSpec {
    /// 2–4 hidden layers, 10–40 neurons, weight decay 1e-5…1e-7.
    fn default() -> Self {
        Self {
            hidden_layers: vec![2, 3, 4],
            hidden_widths: vec![10, 20, 30, 40],
            weight_decays: vec![1e-5, 1e-6, 1e-7],
        }
    }
}

impl GridSpec {
    /// Trial configurations in layers-major, weight-decay-minor order.
    pub fn configs(&self, base: &TrainConfig) -> Vec<TrainConfig> {
        let mut out = Vec::new();
        for &hidden_layers in &self.hidden_layers {
            for &hidden_width in &self.hidden_widths {
                for &weight_decay in &self.weight_decays {
                    let index = out.len() as u64;
                    out.push(TrainConfig {
                        hidden_layers,
                        hidden_width,
                        weight_decay,
                        seed: derive_seed(base.seed, index),
                        ..base.clone()
                    });
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub index: usize,
    pub hidden_layers: usize,
    pub hidden_width: usize,
    pub weight_decay: f64,
    pub seed: u64,
    pub best_val_loss: f64,
    pub best_epoch: Option<usize>,
    pub epochs_run: usize,
}

#[derive(Debug, Clone)]
pub struct GridOutcome {
    pub best_index: usize,
    pub best: TrainOutcome,
    pub trials: Vec<TrialRecord>,
}

/// Train every grid combination (in parallel) and keep the lowest validation loss.
///
/// Trial seeds derive from `(base.seed, trial index)`, so the result does not
/// depend on thread scheduling. Ties go to the earliest trial.
pub fn grid_search(
    model: &LinearForceModel,
    train_set: &SnapshotSet,
    val_set: &SnapshotSet,
    grid: &GridSpec,
    base: &TrainConfig,
) -> Result<GridOutcome> {
    let configs = grid.configs(base);
    if configs.is_empty() {
        return Err(Error::Invalid(
            "grid search needs at least one configuration".into(),
        ));
    }
    let outcomes: Vec<TrainOutcome> = configs
        .par_iter()
        .map(|cfg| train(model, train_set, val_set, cfg))
        .collect::<Result<_>>()?;

    let trials: Vec<TrialRecord> = outcomes
        .iter()
        .enumerate()
        .map(|(index, o)| TrialRecord {
            index,
            hidden_layers: o.config.hidden_layers,
            hidden_width: o.config.hidden_width,
            weight_decay: o.config.weight_decay,
            seed: o.config.seed,
            best_val_loss: o.log.best_val_loss,
            best_epoch: o.log.best_epoch,
            epochs_run: o.log.epochs.len(),
        })
        .collect();
    let best_index = trials.iter().fold(0, |b, t| {
        if t.best_val_loss < trials[b].best_val_loss {
            t.index
        } else {
            b
        }
    });
    let best = outcomes
        .into_iter()
        .nth(best_index)
        .expect("index in range");
    Ok(GridOutcome {
        best_index,
        best,
        trials,
    })
}
