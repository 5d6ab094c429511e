#![allow(dead_code)]

use deim_aero::synth::{paper_2d, Benchmark, PresetConfig};
use deim_aero::{deim_select, pod_basis, LinearForceModel, ReducedBasis};

pub fn benchmark() -> Benchmark {
    paper_2d(&PresetConfig::default()).unwrap()
}

/// Low-fidelity basis of width `n_b` and the DEIM model on all candidates.
pub fn lowfi_model(bench: &Benchmark, n_b: usize) -> (ReducedBasis, LinearForceModel) {
    let basis = pod_basis(&bench.lowfi_train, n_b).unwrap();
    let all: Vec<usize> = (0..basis.n_locations()).collect();
    let sel = deim_select(basis.modes(), &all, n_b).unwrap();
    let model = LinearForceModel::assemble(&bench.geometry, &basis, &sel).unwrap();
    (basis, model)
}
