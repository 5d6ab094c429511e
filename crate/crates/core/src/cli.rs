//! Command-line pipeline: every subcommand reads and writes artifacts in one
//! working directory (`--dir`, default `data`).

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::artifact::{
    check_same_geometry, BasisData, Envelope, ModelData, NetworkData, BASIS_SCHEMA, MODEL_SCHEMA,
    NETWORK_SCHEMA, SELECTION_SCHEMA,
};
use crate::deim::{deim_select, SensorSelection};
use crate::error::{Error, Result};
use crate::evaluation::{compare_models, NoiseKind};
use crate::force_model::LinearForceModel;
use crate::geometry::{lift_drag, SnapshotSet, SurfaceGeometry};
use crate::io::{self, fmt_f64, MANIFEST_FILE};
use crate::nn::{
    grid_search, predict_corrected, train, Corrector, GridSpec, TrainConfig, TrainOutcome,
};
use crate::pod::pod_basis;
use crate::seed::derive_seed;
use crate::synth::{write_paper_2d, PresetConfig};

pub const BASIS_FILE: &str = "basis.json";
pub const SELECTION_FILE: &str = "selection.json";
pub const MODEL_FILE: &str = "model.json";
pub const NETWORK_FILE: &str = "network.json";
pub const TRAINING_LOG_FILE: &str = "training_log.csv";
pub const GRID_FILE: &str = "grid_search.csv";
pub const EVAL_CSV_FILE: &str = "eval.csv";
pub const EVAL_JSON_FILE: &str = "eval.json";

// derived-seed streams
const SYNTH_STREAM: u64 = 1;
const TRAIN_STREAM: u64 = 2;
const EVAL_STREAM: u64 = 3;

const EXIT_CODES: &str = "\
Exit codes:
  0  success
  2  usage error (unknown flag, bad value)
  3  file could not be read or written
  4  malformed input: bad format, dimension mismatch or non-finite value
  5  invalid argument or configuration
  6  numerical failure (singular or ill-conditioned system)
  7  training diverged
  8  artifacts built from different geometries";

/// Everything a run depends on. Loaded from `--config`; flags override fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub basis_dataset: String,
    pub train_dataset: String,
    pub val_dataset: String,
    pub test_dataset: String,
    pub n_b: usize,
    /// Defaults to `n_b`.
    pub n_s: Option<usize>,
    /// Allow `n_s < n_b`.
    pub decouple: bool,
    /// Explicit candidate locations; all locations when absent.
    pub candidates: Option<Vec<usize>>,
    pub candidate_stride: Option<usize>,
    pub train: TrainConfig,
    pub grid: GridSpec,
    pub noise_level: f64,
    pub noise_kind: NoiseKind,
    pub synth: PresetConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            basis_dataset: "lowfi_train".into(),
            train_dataset: "truth_train".into(),
            val_dataset: "truth_val".into(),
            test_dataset: "truth_test".into(),
            n_b: 10,
            n_s: None,
            decouple: false,
            candidates: None,
            candidate_stride: None,
            train: TrainConfig::default(),
            grid: GridSpec::default(),
            noise_level: 0.0,
            noise_kind: NoiseKind::Uniform,
            synth: PresetConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
    }

    /// Training configuration with its seed derived from the top-level seed.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: derive_seed(self.seed, TRAIN_STREAM),
            ..self.train.clone()
        }
    }

    fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serialises")
    }
}

#[derive(Debug, Parser)]
#[command(name = "deim-aero", version, about = "Lift/drag estimation from sparse surface-pressure sensors", after_help = EXIT_CODES)]
pub struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Working directory holding the manifest and artifacts.
    #[arg(long, default_value = "data")]
    pub dir: PathBuf,
    /// JSON pipeline configuration; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Top-level seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    #[value(name = "paper-2d")]
    Paper2d,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Args)]
pub struct TrainFlags {
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub hidden_layers: Option<usize>,
    #[arg(long)]
    pub hidden_width: Option<usize>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic two-fidelity dataset and its manifest.
    Synth {
        #[arg(long, value_enum, default_value = "paper-2d")]
        preset: Preset,
        /// Output directory (defaults to --dir).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        n_points: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Build the mean-centred POD basis.
    Pod {
        #[arg(long)]
        n_b: Option<usize>,
        /// Dataset the basis is built from.
        #[arg(long)]
        dataset: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Select sensor locations with the greedy DEIM rule.
    Select {
        #[arg(long)]
        n_s: Option<usize>,
        /// Comma-separated 0-based candidate locations.
        #[arg(long, value_delimiter = ',', conflicts_with = "candidate_stride")]
        candidates: Option<Vec<usize>>,
        /// Use every k-th location as a candidate.
        #[arg(long)]
        candidate_stride: Option<usize>,
        /// Allow fewer sensors than basis modes.
        #[arg(long)]
        decouple: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Assemble the linear force operator.
    Assemble {
        #[command(flatten)]
        common: Common,
    },
    /// Train the correction network with the configured architecture.
    Train {
        #[command(flatten)]
        flags: TrainFlags,
        #[command(flatten)]
        common: Common,
    },
    /// Train every grid configuration and keep the best on validation.
    GridSearch {
        #[arg(long)]
        max_epochs: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Predict lift and drag from one sensor reading.
    Predict {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        network: Option<PathBuf>,
        /// Linear model only.
        #[arg(long, conflicts_with = "network")]
        no_network: bool,
        /// Comma-separated sensor pressure coefficients, in selection order.
        #[arg(
            long,
            value_delimiter = ',',
            required = true,
            allow_hyphen_values = true
        )]
        sensors: Vec<f64>,
        /// Angle of attack, degrees.
        #[arg(long, allow_hyphen_values = true, default_value_t = 0.0)]
        alpha: f64,
        #[command(flatten)]
        common: Common,
    },
    /// Compare DEIM and DEIM+NN on the test set.
    Eval {
        /// Relative sensor noise level (0.015 = 1.5%).
        #[arg(long)]
        noise: Option<f64>,
        #[arg(long, value_enum)]
        noise_kind: Option<NoiseKind>,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
        /// Write (t, f, α, Cl, Cd) series per model to this CSV.
        #[arg(long)]
        plot_data: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
}

impl ValueEnum for NoiseKind {
    fn value_variants<'a>() -> &'a [Self] {
        &[NoiseKind::Uniform, NoiseKind::Gaussian]
    }

    fn to_possible_value(&self) -> Option<clap::builder::PossibleValue> {
        Some(clap::builder::PossibleValue::new(match self {
            NoiseKind::Uniform => "uniform",
            NoiseKind::Gaussian => "gaussian",
        }))
    }
}

fn base_config(common: &Common) -> Result<PipelineConfig> {
    let mut cfg = match &common.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn load_data(dir: &Path) -> Result<(SurfaceGeometry, Vec<SnapshotSet>)> {
    io::load_snapshots(&dir.join(MANIFEST_FILE))
}

fn save_csv(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn load_model(path: &Path) -> Result<(LinearForceModel, Envelope<ModelData>)> {
    let env: Envelope<ModelData> = Envelope::load(path, MODEL_SCHEMA)?;
    Ok((env.data.to_model(&env.geometry_hash)?, env))
}

fn load_network(path: &Path) -> Result<(Corrector, Envelope<NetworkData>)> {
    let env: Envelope<NetworkData> = Envelope::load(path, NETWORK_SCHEMA)?;
    Ok((env.data.to_corrector()?, env))
}

/// Run one parsed command; returns the one-line summary.
pub fn run(cli: Cli) -> Result<String> {
    match cli.command {
        Command::Synth {
            preset: Preset::Paper2d,
            out,
            n_points,
            common,
        } => {
            let mut cfg = base_config(&common)?;
            if let Some(n) = n_points {
                cfg.synth.n_points = n;
            }
            let synth = PresetConfig {
                seed: derive_seed(cfg.seed, SYNTH_STREAM),
                ..cfg.synth.clone()
            };
            let dir = out.unwrap_or(common.dir);
            let path = write_paper_2d(&synth, &dir)?;
            Ok(format!(
                "synth: wrote {} ({} locations, seed {})",
                path.display(),
                synth.n_points,
                cfg.seed
            ))
        }

        Command::Pod {
            n_b,
            dataset,
            common,
        } => {
            let mut cfg = base_config(&common)?;
            if let Some(n) = n_b {
                cfg.n_b = n;
            }
            if let Some(d) = dataset {
                cfg.basis_dataset = d;
            }
            let (geom, sets) = load_data(&common.dir)?;
            let set = io::find(&sets, &cfg.basis_dataset)?;
            let basis = pod_basis(set, cfg.n_b)?;
            let energy: f64 = basis.singular_values().iter().map(|s| s * s).sum();
            let kept: f64 = basis.singular_values()[..basis.width()]
                .iter()
                .map(|s| s * s)
                .sum();
            Envelope::new(
                BASIS_SCHEMA,
                &geom.content_hash(),
                cfg.seed,
                cfg.to_json(),
                BasisData::from(&basis),
            )
            .save(&common.dir.join(BASIS_FILE))?;
            Ok(format!(
                "pod: n_b = {} modes from `{}` ({} snapshots), energy fraction {:.6}",
                basis.width(),
                cfg.basis_dataset,
                set.len(),
                if energy > 0.0 { kept / energy } else { 1.0 }
            ))
        }

        Command::Select {
            n_s,
            candidates,
            candidate_stride,
            decouple,
            common,
        } => {
            let mut cfg = base_config(&common)?;
            if n_s.is_some() {
                cfg.n_s = n_s;
            }
            if candidates.is_some() {
                cfg.candidates = candidates;
                cfg.candidate_stride = None;
            }
            if candidate_stride.is_some() {
                cfg.candidate_stride = candidate_stride;
                cfg.candidates = None;
            }
            cfg.decouple |= decouple;
            let basis_env: Envelope<BasisData> =
                Envelope::load(&common.dir.join(BASIS_FILE), BASIS_SCHEMA)?;
            let basis = basis_env.data.to_basis()?;
            let n_b = basis.width();
            let n_s = cfg.n_s.unwrap_or(n_b);
            if n_s > n_b {
                return Err(Error::Invalid(format!("n_s = {n_s} exceeds n_b = {n_b}")));
            }
            if n_s != n_b {
                if !cfg.decouple {
                    return Err(Error::Invalid(format!(
                        "n_s = {n_s} differs from n_b = {n_b}; pass --decouple to allow it"
                    )));
                }
                log::warn!("decoupled selection: n_s = {n_s} < n_b = {n_b}, only the leading {n_s} modes are used");
            }
            let n = basis.n_locations();
            let cand: Vec<usize> = match (&cfg.candidates, cfg.candidate_stride) {
                (Some(c), _) => c.clone(),
                (None, Some(0)) => {
                    return Err(Error::Invalid("candidate stride must be ≥ 1".into()))
                }
                (None, Some(k)) => (0..n).step_by(k).collect(),
                (None, None) => (0..n).collect(),
            };
            let sel = deim_select(basis.modes(), &cand, n_s)?;
            Envelope::new(
                SELECTION_SCHEMA,
                &basis_env.geometry_hash,
                cfg.seed,
                cfg.to_json(),
                sel.clone(),
            )
            .save(&common.dir.join(SELECTION_FILE))?;
            Ok(format!(
                "select: {} sensors from {} candidates: {:?}",
                sel.len(),
                sel.candidates.len(),
                sel.indices
            ))
        }

        Command::Assemble { common } => {
            let cfg = base_config(&common)?;
            let (geom, _) = load_data(&common.dir)?;
            let basis_env: Envelope<BasisData> =
                Envelope::load(&common.dir.join(BASIS_FILE), BASIS_SCHEMA)?;
            let sel_env: Envelope<SensorSelection> =
                Envelope::load(&common.dir.join(SELECTION_FILE), SELECTION_SCHEMA)?;
            let hash = geom.content_hash();
            check_same_geometry(&[
                ("manifest", &hash),
                (BASIS_FILE, &basis_env.geometry_hash),
                (SELECTION_FILE, &sel_env.geometry_hash),
            ])?;
            let model =
                LinearForceModel::assemble(&geom, &basis_env.data.to_basis()?, &sel_env.data)?;
            Envelope::new(
                MODEL_SCHEMA,
                &hash,
                cfg.seed,
                cfg.to_json(),
                ModelData::from(&model),
            )
            .save(&common.dir.join(MODEL_FILE))?;
            Ok(format!(
                "assemble: linear force model with {} sensors, M_0 = ({:.6e}, {:.6e}, {:.6e})",
                model.n_sensors(),
                model.m_0().x,
                model.m_0().y,
                model.m_0().z
            ))
        }

        Command::Train { flags, common } => {
            let mut cfg = base_config(&common)?;
            let t = &mut cfg.train;
            t.max_epochs = flags.max_epochs.unwrap_or(t.max_epochs);
            t.hidden_layers = flags.hidden_layers.unwrap_or(t.hidden_layers);
            t.hidden_width = flags.hidden_width.unwrap_or(t.hidden_width);
            t.weight_decay = flags.weight_decay.unwrap_or(t.weight_decay);
            t.batch_size = flags.batch_size.unwrap_or(t.batch_size);
            t.patience = flags.patience.unwrap_or(t.patience);
            let (model, train_set, val_set) = training_inputs(&common.dir, &cfg)?;
            let outcome = train(&model, &train_set, &val_set, &cfg.train_config())?;
            save_network(
                &common.dir,
                &cfg,
                model.geometry_hash(),
                &outcome,
                serde_json::Value::Null,
            )?;
            Ok(format!(
                "train: {:?} network, best validation loss {:.6e} at epoch {}, {} epochs run",
                outcome.corrector.params.widths(),
                outcome.log.best_val_loss,
                epoch_label(outcome.log.best_epoch),
                outcome.log.epochs.len()
            ))
        }

        Command::GridSearch { max_epochs, common } => {
            let mut cfg = base_config(&common)?;
            if let Some(m) = max_epochs {
                cfg.train.max_epochs = m;
            }
            let (model, train_set, val_set) = training_inputs(&common.dir, &cfg)?;
            let grid = grid_search(&model, &train_set, &val_set, &cfg.grid, &cfg.train_config())?;
            let mut csv = String::from(
                "index,hidden_layers,hidden_width,weight_decay,seed,best_val_loss,best_epoch,epochs_run\n",
            );
            for t in &grid.trials {
                csv.push_str(&format!(
                    "{},{},{},{:e},{},{},{},{}\n",
                    t.index,
                    t.hidden_layers,
                    t.hidden_width,
                    t.weight_decay,
                    t.seed,
                    fmt_f64(t.best_val_loss),
                    epoch_label(t.best_epoch),
                    t.epochs_run
                ));
            }
            save_csv(&common.dir.join(GRID_FILE), &csv)?;
            let trials = serde_json::to_value(&grid.trials).expect("trials serialise");
            save_network(
                &common.dir,
                &cfg,
                model.geometry_hash(),
                &grid.best,
                serde_json::json!({
                    "best_index": grid.best_index,
                    "trials": trials,
                }),
            )?;
            let b = &grid.best.config;
            Ok(format!(
                "grid-search: {} trials, best #{} ({} x {}, weight decay {:e}) validation loss {:.6e}",
                grid.trials.len(),
                grid.best_index,
                b.hidden_layers,
                b.hidden_width,
                b.weight_decay,
                grid.best.log.best_val_loss
            ))
        }

        Command::Predict {
            model,
            network,
            no_network,
            sensors,
            alpha,
            common,
        } => {
            let (model, _) = load_model(&model.unwrap_or_else(|| common.dir.join(MODEL_FILE)))?;
            let f_deim = model.predict_force(&sensors)?;
            let deim = lift_drag(&f_deim, alpha);
            let (cl, cd) = if no_network {
                (deim.cl, deim.cd)
            } else {
                let (net, env) =
                    load_network(&network.unwrap_or_else(|| common.dir.join(NETWORK_FILE)))?;
                check_same_geometry(&[
                    ("model", model.geometry_hash()),
                    ("network", &env.geometry_hash),
                ])?;
                let ld = predict_corrected(&model, &net, &sensors, alpha)?;
                (ld.cl, ld.cd)
            };
            Ok(serde_json::json!({
                "alpha": alpha,
                "cl": cl,
                "cd": cd,
                "cl_deim": deim.cl,
                "cd_deim": deim.cd,
            })
            .to_string())
        }

        Command::Eval {
            noise,
            noise_kind,
            format,
            plot_data,
            common,
        } => {
            let mut cfg = base_config(&common)?;
            if let Some(n) = noise {
                cfg.noise_level = n;
            }
            if let Some(k) = noise_kind {
                cfg.noise_kind = k;
            }
            let (geom, sets) = load_data(&common.dir)?;
            let (model, _) = load_model(&common.dir.join(MODEL_FILE))?;
            let (net, net_env) = load_network(&common.dir.join(NETWORK_FILE))?;
            let hash = geom.content_hash();
            check_same_geometry(&[
                ("manifest", &hash),
                (MODEL_FILE, model.geometry_hash()),
                (NETWORK_FILE, &net_env.geometry_hash),
            ])?;
            let test = io::find(&sets, &cfg.test_dataset)?;
            let cmp = compare_models(
                &model,
                &net,
                test,
                cfg.noise_level,
                cfg.noise_kind,
                derive_seed(cfg.seed, EVAL_STREAM),
            )?;
            let out = match format {
                Format::Csv => {
                    let p = common.dir.join(EVAL_CSV_FILE);
                    save_csv(&p, &cmp.table_csv())?;
                    p
                }
                Format::Json => {
                    let p = common.dir.join(EVAL_JSON_FILE);
                    let mut v = cmp.summary_json();
                    v["config"] = cfg.to_json();
                    let text = serde_json::to_string_pretty(&v).expect("summary serialises") + "\n";
                    save_csv(&p, &text)?;
                    p
                }
            };
            if let Some(p) = plot_data {
                let mut csv =
                    String::from("t,f,alpha,cl_truth,cd_truth,cl_deim,cd_deim,cl_nn,cd_nn\n");
                for r in cmp.plot_rows() {
                    let cells = [
                        r.t, r.f, r.alpha, r.cl_truth, r.cd_truth, r.cl_deim, r.cd_deim, r.cl_nn,
                        r.cd_nn,
                    ];
                    csv.push_str(&cells.map(fmt_f64).join(","));
                    csv.push('\n');
                }
                save_csv(&p, &csv)?;
            }
            Ok(format!(
                "eval: wrote {}; l2 Cl DEIM {:.4e} NN {:.4e}, Cd DEIM {:.4e} NN {:.4e} (noise {})",
                out.display(),
                cmp.cl_deim.l2,
                cmp.cl_nn.l2,
                cmp.cd_deim.l2,
                cmp.cd_nn.l2,
                cfg.noise_level
            ))
        }
    }
}

fn epoch_label(e: Option<usize>) -> String {
    e.map_or_else(|| "init".to_string(), |e| e.to_string())
}

fn training_inputs(
    dir: &Path,
    cfg: &PipelineConfig,
) -> Result<(LinearForceModel, SnapshotSet, SnapshotSet)> {
    let (geom, sets) = load_data(dir)?;
    let (model, _) = load_model(&dir.join(MODEL_FILE))?;
    check_same_geometry(&[
        ("manifest", &geom.content_hash()),
        (MODEL_FILE, model.geometry_hash()),
    ])?;
    let train_set = io::find(&sets, &cfg.train_dataset)?.clone();
    let val_set = io::find(&sets, &cfg.val_dataset)?.clone();
    Ok((model, train_set, val_set))
}

fn save_network(
    dir: &Path,
    cfg: &PipelineConfig,
    hash: &str,
    outcome: &TrainOutcome,
    extra: serde_json::Value,
) -> Result<()> {
    let log = &outcome.log;
    let training = serde_json::json!({
        "train_config": outcome.config,
        "initial_train_loss": log.initial_train_loss,
        "initial_val_loss": log.initial_val_loss,
        "best_epoch": log.best_epoch,
        "best_val_loss": log.best_val_loss,
        "epochs_run": log.epochs.len(),
        "early_stopped": log.early_stopped,
        "grid": extra,
    });
    Envelope::new(
        NETWORK_SCHEMA,
        hash,
        cfg.seed,
        cfg.to_json(),
        NetworkData::new(&outcome.corrector, training),
    )
    .save(&dir.join(NETWORK_FILE))?;
    let mut csv = String::from("epoch,lr,train_loss,val_loss\n");
    for e in &log.epochs {
        csv.push_str(&format!(
            "{},{},{},{}\n",
            e.epoch,
            fmt_f64(e.lr),
            fmt_f64(e.train_loss),
            fmt_f64(e.val_loss)
        ));
    }
    save_csv(&dir.join(TRAINING_LOG_FILE), &csv)
}
