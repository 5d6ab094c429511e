//! Acceptance suite. Each criterion prints one PASS/FAIL line; the process
//! exits nonzero if any criterion fails.

mod common;

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{Duration, Instant};

use clap::Parser;
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use deim_aero::cli::{run, Cli};
use deim_aero::evaluation::{compare_models, NoiseKind};
use deim_aero::linalg::left_svd;
use deim_aero::nn::{
    grid_search, lr_schedule, mlp_forward, mlp_gradient, mlp_loss, GridSpec, MlpParams, TrainConfig,
};
use deim_aero::{deim_select, integrate_force, pod_basis, projection_error, scaled_normal_matrix};

type Outcome = Result<String, String>;

fn check(cond: bool, ok: String, fail: String) -> Outcome {
    if cond {
        Ok(ok)
    } else {
        Err(fail)
    }
}

fn random_orthonormal(n: usize, k: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, k, |_, _| rng.random_range(-1.0..1.0));
    a.qr().q()
}

fn c1_interpolation_exactness() -> Outcome {
    let start = Instant::now();
    let bench = common::benchmark();
    let (basis, model) = common::lowfi_model(&bench, 10);
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let b = DVector::from_fn(basis.width(), |_, _| rng.random_range(-2.0..2.0));
        let p = basis.mean() + basis.modes() * b;
        let cp_s: Vec<f64> = model.sensor_indices().iter().map(|&i| p[i]).collect();
        let rec = model
            .reconstruct_pressure(&cp_s)
            .map_err(|e| e.to_string())?;
        let rel = (&rec - &p).amax() / p.amax();
        worst = worst.max(rel);
    }
    let elapsed = start.elapsed();
    check(
        worst <= 1e-9 && elapsed < Duration::from_secs(1),
        format!("max relative error {worst:.2e} over 100 vectors in {elapsed:.2?}"),
        format!("max relative error {worst:.2e} (limit 1e-9), {elapsed:.2?} (limit 1 s)"),
    )
}

fn c2_operator_equivalence() -> Outcome {
    let bench = common::benchmark();
    let (_, model) = common::lowfi_model(&bench, 10);
    let s = scaled_normal_matrix(&bench.geometry);
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let start = Instant::now();
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let x: Vec<f64> = (0..model.n_sensors())
            .map(|_| rng.random_range(-3.0..1.5))
            .collect();
        let direct = model.predict_force(&x).map_err(|e| e.to_string())?;
        let field = model.reconstruct_pressure(&x).map_err(|e| e.to_string())?;
        let via = integrate_force(&s, field.as_slice()).map_err(|e| e.to_string())?;
        for c in 0..3 {
            worst = worst.max((direct[c] - via[c]).abs() / direct[c].abs().max(1.0));
        }
    }
    let elapsed = start.elapsed();
    check(
        worst <= 1e-12 && elapsed < Duration::from_secs(1),
        format!("max componentwise deviation {worst:.2e} over 1000 inputs in {elapsed:.2?}"),
        format!("max componentwise deviation {worst:.2e} (limit 1e-12), {elapsed:.2?}"),
    )
}

/// Solve a 1×1 or 2×2 system by Cramer's rule.
fn cramer(a: &[[f64; 2]; 2], b: &[f64; 2], l: usize) -> Vec<f64> {
    match l {
        1 => vec![b[0] / a[0][0]],
        2 => {
            let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
            vec![
                (b[0] * a[1][1] - a[0][1] * b[1]) / det,
                (a[0][0] * b[1] - b[0] * a[1][0]) / det,
            ]
        }
        _ => unreachable!(),
    }
}

/// Straight re-reading of the greedy rule for a 6×3 basis.
fn oracle_deim(u: &[[f64; 3]; 6], cand: &[usize]) -> Vec<usize> {
    let pick = |r: &dyn Fn(usize) -> f64, taken: &[usize]| {
        let mut best: Option<(usize, f64)> = None;
        for i in 0..6 {
            if !cand.contains(&i) || taken.contains(&i) {
                continue;
            }
            let v = r(i).abs();
            if best.is_none_or(|(_, bv)| v > bv) {
                best = Some((i, v));
            }
        }
        best.unwrap().0
    };
    let mut sel = vec![pick(&|i| u[i][0], &[])];
    for l in 1..3 {
        let mut a = [[0.0; 2]; 2];
        let mut b = [0.0; 2];
        for r in 0..l {
            for c in 0..l {
                a[r][c] = u[sel[r]][c];
            }
            b[r] = u[sel[r]][l];
        }
        let coef = cramer(&a, &b, l);
        let residual = |i: usize| u[i][l] - (0..l).map(|c| u[i][c] * coef[c]).sum::<f64>();
        let next = pick(&residual, &sel);
        sel.push(next);
    }
    sel
}

fn c3_deim_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    for trial in 0..20 {
        let u = DMatrix::from_fn(6, 3, |_, _| rng.random_range(-1.0..1.0));
        let mut all: Vec<usize> = (0..6).collect();
        all.shuffle(&mut rng);
        let k = rng.random_range(3..=6);
        let cand: Vec<usize> = all[..k].to_vec();
        let mut arr = [[0.0; 3]; 6];
        for i in 0..6 {
            for j in 0..3 {
                arr[i][j] = u[(i, j)];
            }
        }
        let expected = oracle_deim(&arr, &cand);
        let got = deim_select(&u, &cand, 3)
            .map_err(|e| e.to_string())?
            .indices;
        if got != expected {
            return Err(format!(
                "trial {trial}: candidates {cand:?}, got {got:?}, oracle {expected:?}"
            ));
        }
    }
    Ok("20 random 6×3 bases match the brute-force oracle exactly".into())
}

fn c4_svd_properties() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut worst_orth = 0.0f64;
    let mut worst_energy = 0.0f64;
    let bench = common::benchmark();
    let mut cases: Vec<DMatrix<f64>> = vec![
        bench.lowfi_train.values().clone(),
        bench.truth_train.values().clone(),
    ];
    for (n, m) in [(40, 15), (15, 40), (30, 30)] {
        cases.push(DMatrix::from_fn(n, m, |_, _| rng.random_range(-1.0..1.0)));
    }
    for a in &cases {
        let svd = left_svd(a).map_err(|e| e.to_string())?;
        let g = svd.u.transpose() * &svd.u;
        worst_orth = worst_orth.max((g - DMatrix::identity(svd.u.ncols(), svd.u.ncols())).amax());
        let energy: f64 = svd.singular_values.iter().map(|s| s * s).sum();
        let fro = a.norm_squared();
        worst_energy = worst_energy.max((energy - fro).abs() / fro);
    }

    // A = Q₁ diag(s) Q₂ᵀ with a prescribed spectrum
    let spectrum = [50.0, 20.0, 7.5, 3.0, 1.0, 0.25, 1e-2, 1e-3];
    let mut worst_sigma = 0.0f64;
    for (n, m) in [(30, 8), (8, 30), (8, 8)] {
        let q1 = random_orthonormal(n, 8, &mut rng);
        let q2 = random_orthonormal(m, 8, &mut rng);
        let a =
            &q1 * DMatrix::from_diagonal(&DVector::from_column_slice(&spectrum)) * q2.transpose();
        let svd = left_svd(&a).map_err(|e| e.to_string())?;
        for (k, s) in spectrum.iter().enumerate() {
            worst_sigma = worst_sigma.max((svd.singular_values[k] - s).abs() / s);
        }
    }
    check(
        worst_orth <= 1e-10 && worst_energy <= 1e-10 && worst_sigma <= 1e-10,
        format!("orthonormality {worst_orth:.1e}, energy {worst_energy:.1e}, spectrum {worst_sigma:.1e}"),
        format!("orthonormality {worst_orth:.1e}, energy {worst_energy:.1e}, spectrum {worst_sigma:.1e} (limits 1e-10)"),
    )
}

fn c5_projection_monotonicity() -> Outcome {
    let bench = common::benchmark();
    let full = pod_basis(&bench.lowfi_train, 10).map_err(|e| e.to_string())?;
    let mut lines = Vec::new();
    for stride in [1usize, 7] {
        let cand: Vec<usize> = (0..full.n_locations()).step_by(stride).collect();
        let probe = bench.truth_test.restrict_rows(&cand);
        let mut errs = Vec::new();
        for n_b in 1..=10 {
            let b = full.truncated(n_b).map_err(|e| e.to_string())?;
            errs.push(projection_error(&b, &cand, &probe).map_err(|e| e.to_string())?);
        }
        if let Some(k) = (1..errs.len()).find(|&k| errs[k] > errs[k - 1]) {
            return Err(format!(
                "stride {stride}: ε_proj rises from n_b={} to {}: {errs:?}",
                k,
                k + 1
            ));
        }
        lines.push(format!(
            "stride {stride}: {:.3e} → {:.3e}",
            errs[0], errs[9]
        ));
    }
    Ok(format!(
        "ε_proj nonincreasing for n_b = 1..10 ({})",
        lines.join("; ")
    ))
}

/// Pre-activations of every hidden layer, computed independently of the library.
fn hidden_preactivations(p: &MlpParams, x: &[f64]) -> Vec<f64> {
    let mut a = DVector::from_column_slice(x);
    let mut out = Vec::new();
    let n = p.layers().len();
    for l in &p.layers()[..n - 1] {
        let z = &l.w * &a + &l.b;
        out.extend(z.iter().copied());
        a = z.map(|v| v.max(0.0));
    }
    out
}

fn c6_gradient_check() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let archs: Vec<(usize, usize)> = [2, 3, 4]
        .iter()
        .flat_map(|&l| [10, 20, 30, 40].map(|w| (l, w)))
        .collect();
    let h = 1e-5;
    let mut worst = 0.0f64;
    let mut points = 0;
    let mut attempts = 0;
    while points < 20 {
        attempts += 1;
        let (layers, width) = archs[points % archs.len()];
        let cfg = TrainConfig {
            hidden_layers: layers,
            hidden_width: width,
            ..TrainConfig::default()
        };
        let p = MlpParams::he_init(&cfg.widths(10), &mut rng).unwrap();
        // random biases so every parameter's gradient is exercised
        let mut layers_v = p.layers().to_vec();
        for l in &mut layers_v {
            l.b.iter_mut()
                .for_each(|b| *b = rng.random_range(-0.5..0.5));
        }
        let p = MlpParams::from_layers(layers_v).unwrap();
        let batch: Vec<(Vec<f64>, nalgebra::Vector3<f64>)> = (0..3)
            .map(|_| {
                let x: Vec<f64> = (0..10).map(|_| rng.random_range(-1.0..1.0)).collect();
                let y = nalgebra::Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0));
                (x, y)
            })
            .collect();
        if batch
            .iter()
            .any(|(x, _)| hidden_preactivations(&p, x).iter().any(|z| z.abs() < 1e-3))
        {
            continue;
        }
        let g = mlp_gradient(&p, &batch).map_err(|e| e.to_string())?;
        for k in 0..p.layers().len() {
            let (rows, cols) = p.layers()[k].w.shape();
            let mut entries: Vec<(bool, usize, usize)> = Vec::new();
            for r in 0..rows {
                for c in 0..cols {
                    entries.push((true, r, c));
                }
                entries.push((false, r, 0));
            }
            for (is_w, r, c) in entries {
                let bumped = |d: f64| {
                    let mut ls = p.layers().to_vec();
                    if is_w {
                        ls[k].w[(r, c)] += d;
                    } else {
                        ls[k].b[r] += d;
                    }
                    mlp_loss(&MlpParams::from_layers(ls).unwrap(), &batch).unwrap()
                };
                let numeric = (bumped(h) - bumped(-h)) / (2.0 * h);
                let analytic = if is_w {
                    g.layers()[k].w[(r, c)]
                } else {
                    g.layers()[k].b[r]
                };
                let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-4);
                worst = worst.max(rel);
            }
        }
        points += 1;
    }
    let elapsed = start.elapsed();
    check(
        worst < 1e-5 && elapsed < Duration::from_secs(10),
        format!("max relative error {worst:.2e} at 20 points ({attempts} drawn) in {elapsed:.2?}"),
        format!("max relative error {worst:.2e} (limit 1e-5), {elapsed:.2?} (limit 10 s)"),
    )
}

fn c7_lr_schedule() -> Outcome {
    let cfg = TrainConfig::default();
    let got = [
        lr_schedule(0, &cfg),
        lr_schedule(50, &cfg),
        lr_schedule(125, &cfg),
    ];
    check(
        got == [1e-3, 9.5e-4, 9.025e-4],
        format!("λ(0), λ(50), λ(125) = {got:?}"),
        format!("λ(0), λ(50), λ(125) = {got:?}, expected [0.001, 0.00095, 0.0009025]"),
    )
}

struct Benchmarked {
    deim: (f64, f64),
    nn: (f64, f64),
    nn_noisy: (f64, f64),
    winner: String,
    elapsed: Duration,
    corrector: deim_aero::Corrector,
    model: deim_aero::LinearForceModel,
}

fn run_benchmark() -> Result<Benchmarked, String> {
    let start = Instant::now();
    let bench = common::benchmark();
    let (_, model) = common::lowfi_model(&bench, 10);
    let grid = grid_search(
        &model,
        &bench.truth_train,
        &bench.truth_val,
        &GridSpec::default(),
        &TrainConfig::default(),
    )
    .map_err(|e| e.to_string())?;
    let corrector = grid.best.corrector.clone();
    let clean = compare_models(
        &model,
        &corrector,
        &bench.truth_test,
        0.0,
        NoiseKind::Uniform,
        7,
    )
    .map_err(|e| e.to_string())?;
    let noisy = compare_models(
        &model,
        &corrector,
        &bench.truth_test,
        0.015,
        NoiseKind::Uniform,
        7,
    )
    .map_err(|e| e.to_string())?;
    let c = &grid.best.config;
    Ok(Benchmarked {
        deim: (clean.cl_deim.l2, clean.cd_deim.l2),
        nn: (clean.cl_nn.l2, clean.cd_nn.l2),
        nn_noisy: (noisy.cl_nn.l2, noisy.cd_nn.l2),
        winner: format!(
            "{}×{} wd {:e}",
            c.hidden_layers, c.hidden_width, c.weight_decay
        ),
        elapsed: start.elapsed(),
        corrector,
        model,
    })
}

fn c8_correction_gain(b: &Benchmarked) -> Outcome {
    let rl = b.nn.0 / b.deim.0;
    let rd = b.nn.1 / b.deim.1;
    check(
        rl <= 0.5 && rd <= 0.5 && b.elapsed < Duration::from_secs(600),
        format!(
            "winner {}: Cl {:.3e} → {:.3e} (×{rl:.3}), Cd {:.3e} → {:.3e} (×{rd:.3}) in {:.1?}",
            b.winner, b.deim.0, b.nn.0, b.deim.1, b.nn.1, b.elapsed
        ),
        format!(
            "ratios Cl {rl:.3}, Cd {rd:.3} (limit 0.5), runtime {:.1?}",
            b.elapsed
        ),
    )
}

fn c9_noise_robustness(b: &Benchmarked) -> Outcome {
    let cl = (b.nn_noisy.0 - b.nn.0).abs() / b.nn.0;
    let cd = (b.nn_noisy.1 - b.nn.1).abs() / b.nn.1;
    check(
        cl <= 0.2 && cd <= 0.2,
        format!(
            "1.5% noise changes DEIM+NN ℓ² by {:.1}% (Cl), {:.1}% (Cd)",
            100.0 * cl,
            100.0 * cd
        ),
        format!(
            "changes {:.1}% (Cl), {:.1}% (Cd), limit 20%",
            100.0 * cl,
            100.0 * cd
        ),
    )
}

fn mean_latency(model: &deim_aero::LinearForceModel, corrector: &deim_aero::Corrector) -> Duration {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let inputs: Vec<Vec<f64>> = (0..256)
        .map(|_| {
            (0..model.n_sensors())
                .map(|_| rng.random_range(-2.0..1.0))
                .collect()
        })
        .collect();
    let calls = 20_000;
    let mut sink = 0.0;
    let start = Instant::now();
    for k in 0..calls {
        let x = &inputs[k % inputs.len()];
        let f = model.predict_force(x).unwrap();
        let c = corrector.correction(x).unwrap();
        sink += f.x + c.y;
    }
    let elapsed = start.elapsed();
    std::hint::black_box(sink);
    elapsed / calls as u32
}

fn c10_latency(b: &Benchmarked) -> Outcome {
    let winner = mean_latency(&b.model, &b.corrector);
    // worst case of the search space: 15 sensors into 4 layers of 40
    let bench = common::benchmark();
    let (_, model15) = common::lowfi_model(&bench, 15);
    let widths = TrainConfig {
        hidden_layers: 4,
        hidden_width: 40,
        ..TrainConfig::default()
    }
    .widths(15);
    let big = deim_aero::Corrector {
        normalization: deim_aero::nn::Normalization::identity(15),
        params: MlpParams::he_init(&widths, &mut ChaCha8Rng::seed_from_u64(1)).unwrap(),
    };
    let largest = mean_latency(&model15, &big);
    let _ = mlp_forward(&big.params, &[0.0; 15]);
    let limit = Duration::from_millis(1);
    check(
        winner < limit && largest < limit,
        format!("mean per call {winner:.2?} (winner, n_s=10), {largest:.2?} (n_s=15, 4×40)"),
        format!("mean per call {winner:.2?} / {largest:.2?}, limit 1 ms"),
    )
}

fn snapshot_dir(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let p = entry.unwrap().path();
        out.insert(
            p.file_name().unwrap().to_string_lossy().into_owned(),
            std::fs::read(&p).unwrap(),
        );
    }
    out
}

fn c11_determinism() -> Outcome {
    let steps: Vec<Vec<&str>> = vec![
        vec!["synth", "--preset", "paper-2d", "--seed", "11"],
        vec!["pod", "--n-b", "10", "--seed", "11"],
        vec!["select", "--n-s", "10", "--seed", "11"],
        vec!["assemble", "--seed", "11"],
        vec!["train", "--seed", "11"],
        vec!["grid-search", "--seed", "11"],
        vec!["eval", "--seed", "11", "--format", "csv"],
        vec![
            "eval",
            "--seed",
            "11",
            "--noise",
            "0.015",
            "--format",
            "json",
            "--plot-data",
        ],
    ];
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let mut history: [Vec<BTreeMap<String, Vec<u8>>>; 2] = [Vec::new(), Vec::new()];
    for (r, dir) in dirs.iter().enumerate() {
        for step in &steps {
            let mut argv: Vec<String> = vec!["deim-aero".into()];
            argv.extend(step.iter().map(|s| s.to_string()));
            if step.last() == Some(&"--plot-data") {
                argv.push(dir.path().join("plot.csv").display().to_string());
            }
            argv.push("--dir".into());
            argv.push(dir.path().display().to_string());
            let cli = Cli::try_parse_from(&argv).map_err(|e| e.to_string())?;
            run(cli).map_err(|e| format!("{}: {e}", step[0]))?;
            history[r].push(snapshot_dir(dir.path()));
        }
    }
    for (k, step) in steps.iter().enumerate() {
        let (a, b) = (&history[0][k], &history[1][k]);
        if a != b {
            let differing: Vec<&String> = a.keys().filter(|f| a.get(*f) != b.get(*f)).collect();
            return Err(format!(
                "after `{}` artifacts differ: {differing:?}",
                step[0]
            ));
        }
    }
    let files = history[0].last().unwrap().len();
    Ok(format!(
        "{} pipeline steps, {files} artifacts byte-identical across two runs",
        steps.len()
    ))
}

fn report(n: usize, title: &str, outcome: &Outcome) -> bool {
    match outcome {
        Ok(msg) => {
            println!("criterion {n:>2} PASS  {title}: {msg}");
            true
        }
        Err(msg) => {
            println!("criterion {n:>2} FAIL  {title}: {msg}");
            false
        }
    }
}

fn main() {
    let mut all = true;
    all &= report(
        1,
        "DEIM interpolation exactness",
        &c1_interpolation_exactness(),
    );
    all &= report(
        2,
        "reconstruction/operator equivalence",
        &c2_operator_equivalence(),
    );
    all &= report(3, "DEIM greedy oracle", &c3_deim_oracle());
    all &= report(4, "SVD properties", &c4_svd_properties());
    all &= report(
        5,
        "projection-error monotonicity",
        &c5_projection_monotonicity(),
    );
    all &= report(6, "MLP gradient check", &c6_gradient_check());
    all &= report(7, "learning-rate schedule", &c7_lr_schedule());
    match run_benchmark() {
        Ok(b) => {
            all &= report(8, "end-to-end correction gain", &c8_correction_gain(&b));
            all &= report(9, "noise robustness", &c9_noise_robustness(&b));
            all &= report(10, "online latency", &c10_latency(&b));
        }
        Err(e) => {
            for (n, t) in [
                (8, "end-to-end correction gain"),
                (9, "noise robustness"),
                (10, "online latency"),
            ] {
                all &= report(n, t, &Err(format!("benchmark failed: {e}")));
            }
        }
    }
    all &= report(11, "determinism", &c11_determinism());
    if !all {
        std::process::exit(1);
    }
}
