//! Two-fidelity synthetic dynamic-stall data on a thin elliptic section.
//!
//! The surrogate is phenomenological. Its pressure field has a mean part, a
//! linear and a quadratic dependence on α, a logistic stall term whose onset is
//! delayed by the pitch rate (hence hysteresis), and, for the "truth" preset
//! only, a travelling vortex and a patch of per-snapshot unsteadiness near the
//! trailing edge that a basis built from the low-fidelity data cannot represent.

use std::f64::consts::TAU;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    integrate_force, scaled_normal_matrix, Role, SampleLabel, SnapshotSet, SurfaceGeometry,
};
use crate::seed::derive_seed;

/// Half-thickness of the section, in chords.
pub const HALF_THICKNESS: f64 = 0.05;
/// Chordwise distance the stall front travels from the trailing edge at full stall.
const STALL_FRONT_TRAVEL: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PitchConfig {
    pub alpha0: f64,
    pub amplitude: f64,
    pub freq: f64,
    pub t_samples: Vec<f64>,
}

impl PitchConfig {
    /// One period sampled at `n` equispaced instants `k / (n f)`.
    pub fn one_period(alpha0: f64, amplitude: f64, freq: f64, n: usize) -> Self {
        Self {
            alpha0,
            amplitude,
            freq,
            t_samples: (0..n).map(|k| k as f64 / (n as f64 * freq)).collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.amplitude >= 0.0 && self.freq > 0.0 && self.alpha0.is_finite()) {
            return Err(Error::Invalid(format!(
                "pitch needs A ≥ 0 and f > 0 (A = {}, f = {})",
                self.amplitude, self.freq
            )));
        }
        if self.t_samples.is_empty() || self.t_samples.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Invalid(
                "t_samples must be nonempty and strictly increasing".into(),
            ));
        }
        Ok(())
    }

    /// dα/dt in deg/s.
    pub fn alpha_rate(&self, t: f64) -> f64 {
        self.amplitude * TAU * self.freq * (TAU * self.freq * t).cos()
    }
}

/// `α(t) = α₀ + A sin(2π f t)`, degrees.
pub fn pitching_alpha(t: f64, cfg: &PitchConfig) -> f64 {
    cfg.alpha0 + cfg.amplitude * (TAU * cfg.freq * t).sin()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FidelityConfig {
    /// Stall lag (s): the stall terms see `α − tau·dα/dt`.
    pub tau: f64,
    pub stall_gain: f64,
    pub stall_alpha: f64,
    pub stall_width: f64,
    pub c1: f64,
    pub c2: f64,
    /// Amplitude of the leading-edge vortex convecting downstream during stall.
    pub vortex_gain: f64,
    /// Steady pressure offset near the trailing edge.
    pub offset: f64,
    /// Amplitude of the per-snapshot random part of that patch.
    pub unsteady: f64,
}

impl Default for FidelityConfig {
    fn default() -> Self {
        Self::truth()
    }
}

impl FidelityConfig {
    pub fn truth() -> Self {
        Self {
            tau: 0.01,
            stall_gain: 3.0,
            stall_alpha: 25.0,
            stall_width: 2.0,
            c1: TAU,
            c2: 1.0,
            vortex_gain: 3.0,
            offset: -1.4,
            unsteady: 1.0,
        }
    }

    /// No lag, 0.7× stall gain and none of the truth-only terms.
    pub fn low_fidelity() -> Self {
        Self {
            tau: 0.0,
            stall_gain: 0.7 * 3.0,
            vortex_gain: 0.0,
            offset: 0.0,
            unsteady: 0.0,
            ..Self::truth()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.tau,
            self.stall_gain,
            self.stall_alpha,
            self.stall_width,
            self.c1,
            self.c2,
            self.vortex_gain,
            self.offset,
            self.unsteady,
        ];
        if !(self.stall_width > 0.0) || all.iter().any(|x| !x.is_finite()) {
            return Err(Error::Invalid(format!(
                "invalid fidelity configuration {self:?}"
            )));
        }
        Ok(())
    }
}

fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Surface points of the sampled section: parameter angle θ and chordwise x.
#[derive(Debug, Clone)]
pub struct Section {
    pub theta: Vec<f64>,
    pub x: Vec<f64>,
    pub geometry: SurfaceGeometry,
}

/// Closed thin ellipse `x = ½ − ½cos φ`, `y = −h sin φ`, discretised into
/// `n` straight edges. θ runs from the leading edge along the lower surface.
pub fn section(n_points: usize) -> Result<Section> {
    if n_points < 8 {
        return Err(Error::Invalid(format!(
            "n_points = {n_points} is below the minimum of 8"
        )));
    }
    let n = n_points;
    let vert = |k: usize| {
        let phi = TAU * k as f64 / n as f64;
        (phi, 0.5 - 0.5 * phi.cos(), -HALF_THICKNESS * phi.sin())
    };
    let mut theta = Vec::with_capacity(n);
    let mut xs = Vec::with_capacity(n);
    let mut normals = Vec::with_capacity(n);
    let mut areas = Vec::with_capacity(n);
    for k in 0..n {
        let (p0, x0, y0) = vert(k);
        let (p1, x1, y1) = vert(k + 1);
        let (dx, dy) = (x1 - x0, y1 - y0);
        let len = dx.hypot(dy);
        // vertices run counter-clockwise, so (−dy, dx) points into the body
        normals.push(Vector3::new(-dy / len, dx / len, 0.0));
        areas.push(len);
        theta.push(0.5 * (p0 + p1));
        xs.push(0.5 * (x0 + x1));
    }
    Ok(Section {
        theta,
        x: xs,
        geometry: SurfaceGeometry::new(normals, areas, 1.0, 2)?,
    })
}

/// Pressure coefficient at one surface point.
///
/// `xi ∈ [−1, 1]` drives the unsteady patch.
pub fn pressure(
    theta: f64,
    x: f64,
    alpha: f64,
    alpha_rate: f64,
    xi: f64,
    fid: &FidelityConfig,
) -> f64 {
    let ar = alpha.to_radians();
    let a_eff = alpha - fid.tau * alpha_rate;
    let s = logistic((a_eff - fid.stall_alpha) / fid.stall_width);
    let half = (theta / 2.0).sin();
    let c0 = 1.0 - 4.0 * half * half;
    let side = theta.sin().max(0.0);
    let far_side = (-theta.sin()).max(0.0);

    let front = 1.0 - STALL_FRONT_TRAVEL * s;
    let stall = fid.stall_gain * s * side * side * logistic((x - front) / 0.05);

    let x_v = 0.1 + 0.8 * logistic((a_eff - fid.stall_alpha) / 3.0);
    let vortex = -fid.vortex_gain
        * logistic((a_eff - fid.stall_alpha + 4.0) / fid.stall_width)
        * (-((x - x_v) / 0.1).powi(2)).exp()
        * side;
    let patch = (fid.offset + fid.unsteady * xi) * (-((x - 0.75) / 0.1).powi(2)).exp() * far_side;

    c0 + fid.c1 * ar * theta.sin() + fid.c2 * ar * ar * (2.0 * theta).sin() + stall + vortex + patch
}

/// Geometry plus one snapshot per `t_samples` entry, with forces `S · C_p`.
pub fn generate_dataset(
    pitch: &PitchConfig,
    fidelity: &FidelityConfig,
    n_points: usize,
    seed: u64,
) -> Result<(SurfaceGeometry, SnapshotSet)> {
    pitch.validate()?;
    fidelity.validate()?;
    let sec = section(n_points)?;
    let smat = scaled_normal_matrix(&sec.geometry);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = pitch.t_samples.len();
    let mut values = DMatrix::zeros(n_points, m);
    let mut labels = Vec::with_capacity(m);
    let mut forces = Vec::with_capacity(m);
    for (j, &t) in pitch.t_samples.iter().enumerate() {
        let alpha = pitching_alpha(t, pitch);
        let rate = pitch.alpha_rate(t);
        let xi: f64 = rng.random_range(-1.0..=1.0);
        let col: Vec<f64> = (0..n_points)
            .map(|i| pressure(sec.theta[i], sec.x[i], alpha, rate, xi, fidelity))
            .collect();
        forces.push(integrate_force(&smat, &col)?);
        values.set_column(j, &nalgebra::DVector::from_vec(col));
        labels.push(SampleLabel {
            t,
            f: pitch.freq,
            alpha,
        });
    }
    let set = SnapshotSet::new("synthetic", Role::Training, values, labels, Some(forces))?;
    Ok((sec.geometry, set))
}

/// Settings of the `paper-2d` preset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PresetConfig {
    pub n_points: usize,
    pub samples_per_period: usize,
    pub alpha0: f64,
    pub amplitude: f64,
    pub train_freqs: Vec<f64>,
    pub val_freq: f64,
    pub test_freq: f64,
    pub low_fidelity: FidelityConfig,
    pub truth: FidelityConfig,
    pub seed: u64,
}

impl Default for PresetConfig {
    fn default() -> Self {
        Self {
            n_points: 200,
            samples_per_period: 100,
            alpha0: 20.0,
            amplitude: 8.0,
            train_freqs: vec![0.8, 2.4, 3.2, 4.8],
            val_freq: 1.6,
            test_freq: 4.0,
            low_fidelity: FidelityConfig::low_fidelity(),
            truth: FidelityConfig::truth(),
            seed: 0,
        }
    }
}

/// The four datasets of the benchmark.
#[derive(Debug, Clone)]
pub struct Benchmark {
    pub geometry: SurfaceGeometry,
    pub lowfi_train: SnapshotSet,
    pub truth_train: SnapshotSet,
    pub truth_val: SnapshotSet,
    pub truth_test: SnapshotSet,
}

impl Benchmark {
    pub fn datasets(&self) -> [&SnapshotSet; 4] {
        [
            &self.lowfi_train,
            &self.truth_train,
            &self.truth_val,
            &self.truth_test,
        ]
    }
}

/// Low-fidelity and truth runs over the training frequencies, truth runs at
/// the validation and test frequencies.
pub fn paper_2d(cfg: &PresetConfig) -> Result<Benchmark> {
    if cfg.train_freqs.is_empty() || cfg.samples_per_period == 0 {
        return Err(Error::Invalid(
            "preset needs training frequencies and samples".into(),
        ));
    }
    let mut stream = 0u64;
    let mut run = |f: f64, fid: &FidelityConfig| {
        let pitch = PitchConfig::one_period(cfg.alpha0, cfg.amplitude, f, cfg.samples_per_period);
        stream += 1;
        generate_dataset(&pitch, fid, cfg.n_points, derive_seed(cfg.seed, stream))
    };
    let mut geometry = None;
    let mut low = Vec::new();
    let mut truth = Vec::new();
    for &f in &cfg.train_freqs {
        let (g, s) = run(f, &cfg.low_fidelity)?;
        geometry.get_or_insert(g);
        low.push(s);
        truth.push(run(f, &cfg.truth)?.1);
    }
    let val = run(cfg.val_freq, &cfg.truth)?.1;
    let test = run(cfg.test_freq, &cfg.truth)?.1;
    Ok(Benchmark {
        geometry: geometry.expect("at least one frequency"),
        lowfi_train: SnapshotSet::concat(
            "lowfi_train",
            Role::Training,
            &low.iter().collect::<Vec<_>>(),
        )?,
        truth_train: SnapshotSet::concat(
            "truth_train",
            Role::Training,
            &truth.iter().collect::<Vec<_>>(),
        )?,
        truth_val: SnapshotSet::concat("truth_val", Role::Validation, &[&val])?,
        truth_test: SnapshotSet::concat("truth_test", Role::Testing, &[&test])?,
    })
}

/// Generate the preset and write it as a manifest directory.
pub fn write_paper_2d(cfg: &PresetConfig, out_dir: &Path) -> Result<PathBuf> {
    let bench = paper_2d(cfg)?;
    crate::io::write_manifest(out_dir, &bench.geometry, &bench.datasets())
}

/// Signed area enclosed by the closed polyline `(x_k, y_k)`.
pub fn loop_area(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len();
    0.5 * (0..n)
        .map(|k| {
            let j = (k + 1) % n;
            x[k] * y[j] - x[j] * y[k]
        })
        .sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::lift_drag;
    use crate::pod::pod_basis;

    #[test]
    fn pitching_examples() {
        let p = PitchConfig::one_period(20.0, 8.0, 2.0, 10);
        assert_eq!(pitching_alpha(0.0, &p), 20.0);
        assert!((pitching_alpha(1.0 / 8.0, &p) - 28.0).abs() < 1e-12);
        for k in 0..20 {
            let t = k as f64 * 0.037;
            assert!((pitching_alpha(t, &p) - pitching_alpha(t + 0.5, &p)).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_inputs() {
        let p = PitchConfig::one_period(20.0, 8.0, 2.0, 10);
        assert!(generate_dataset(&p, &FidelityConfig::truth(), 7, 0).is_err());
        let bad = PitchConfig {
            t_samples: vec![0.0, 0.0],
            ..p.clone()
        };
        assert!(bad.validate().is_err());
        let fid = FidelityConfig {
            stall_width: 0.0,
            ..FidelityConfig::truth()
        };
        assert!(generate_dataset(&p, &fid, 16, 0).is_err());
    }

    #[test]
    fn closed_section_has_zero_net_normal() {
        let sec = section(200).unwrap();
        let f = integrate_force(&scaled_normal_matrix(&sec.geometry), &vec![1.0; 200]).unwrap();
        assert!(f.norm() < 1e-12);
    }

    #[test]
    fn static_pitch_gives_rank_zero_fluctuation() {
        let p = PitchConfig::one_period(20.0, 0.0, 2.0, 20);
        let (_, set) = generate_dataset(&p, &FidelityConfig::low_fidelity(), 64, 1).unwrap();
        let first = set.column(0);
        for j in 1..set.len() {
            assert_eq!(set.column(j), first);
        }
        let basis = pod_basis(&set, 2).unwrap();
        assert!(basis.singular_values()[1] < 1e-12);
    }

    fn cl_loop(fid: &FidelityConfig, f: f64) -> f64 {
        let p = PitchConfig::one_period(20.0, 8.0, f, 200);
        let (_, set) = generate_dataset(&p, fid, 100, 2).unwrap();
        let alpha: Vec<f64> = set.labels().iter().map(|l| l.alpha).collect();
        let cl: Vec<f64> = set
            .forces()
            .unwrap()
            .iter()
            .zip(&alpha)
            .map(|(f, &a)| lift_drag(f, a).cl)
            .collect();
        loop_area(&alpha, &cl)
    }

    #[test]
    fn hysteresis_needs_lag() {
        let quasi_static = FidelityConfig {
            tau: 0.0,
            stall_gain: 0.0,
            ..FidelityConfig::low_fidelity()
        };
        assert!(cl_loop(&quasi_static, 2.0).abs() < 1e-10);
        assert!(cl_loop(&FidelityConfig::low_fidelity(), 2.0).abs() < 1e-10);
        let lagged = FidelityConfig {
            unsteady: 0.0,
            ..FidelityConfig::truth()
        };
        assert!(cl_loop(&lagged, 2.0).abs() > 1e-2);
    }

    #[test]
    fn forces_match_integration() {
        let p = PitchConfig::one_period(20.0, 8.0, 3.2, 30);
        let (g, set) = generate_dataset(&p, &FidelityConfig::truth(), 50, 3).unwrap();
        let s = scaled_normal_matrix(&g);
        for (j, f) in set.forces().unwrap().iter().enumerate() {
            let direct = integrate_force(&s, &set.column(j)).unwrap();
            assert!((f - direct).abs().max() <= 1e-12);
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let p = PitchConfig::one_period(20.0, 8.0, 3.2, 30);
        let a = generate_dataset(&p, &FidelityConfig::truth(), 40, 9).unwrap();
        let b = generate_dataset(&p, &FidelityConfig::truth(), 40, 9).unwrap();
        assert_eq!(a.1, b.1);
        assert_eq!(a.0, b.0);
    }
}
