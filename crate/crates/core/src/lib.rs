//! Real-time aerodynamic force estimation from a handful of surface-pressure sensors.
//!
//! The pipeline has an offline and an online half:
//!
//! - offline: build a mean-centred POD basis from pressure snapshots ([`pod`]),
//!   pick sensor locations with the DEIM greedy rule ([`deim`]), fold the
//!   reconstruction and the surface integration into a 3×n_s affine operator
//!   ([`force_model`]) and train a small ReLU network that corrects the gap
//!   between that linear prediction and ground-truth forces ([`nn`]);
//! - online: one affine map plus one network evaluation per sensor reading,
//!   followed by the rotation into lift and drag ([`geometry::lift_drag`]).
//!
//! [`synth`] generates two-fidelity dynamic-stall datasets in the manifest
//! format read by [`io`], and [`evaluation`] computes the ℓ²/ℓ∞ error tables.

pub mod artifact;
pub mod cli;
pub mod deim;
pub mod error;
pub mod evaluation;
pub mod force_model;
pub mod geometry;
pub mod io;
pub mod linalg;
pub mod nn;
pub mod pod;
pub mod seed;
pub mod synth;

pub use deim::{deim_select, reconstruction_matrix, SensorSelection};
pub use error::{Error, Result};
pub use evaluation::{add_noise, compare_models, error_metrics, ErrorReport};
pub use force_model::LinearForceModel;
pub use geometry::{
    integrate_force, lift_drag, scaled_normal_matrix, ForceIntegrationMatrix, Role, SampleLabel,
    SnapshotSet, SurfaceGeometry,
};
pub use nn::{Corrector, MlpParams, TrainConfig};
pub use pod::{compute_mean, pod_basis, projection_error, singular_spectrum, ReducedBasis};
