//! Benchmark fixtures built from the synthetic generator.

use nalgebra::DMatrix;
use taskbasis::synth::{self, SynthKind};
use taskbasis::{init_l, train_stl, MultiTaskDataset};

pub struct Fixture {
    pub data: MultiTaskDataset,
    pub basis: DMatrix<f64>,
    pub codes: DMatrix<f64>,
}

/// Overlap training data with a starting basis of `k` columns taken from the
/// single-task solution and least-squares codes for it.
pub fn overlap_fixture(seed: u64, k: usize) -> Fixture {
    let data = synth::generate(SynthKind::Overlap, seed).train;
    let w0 = train_stl(&data, 0.1).expect("synthetic data is valid").weights;
    let basis = init_l(&w0, k).expect("k fits the data");
    let codes = basis
        .clone()
        .svd(true, true)
        .solve(&w0, 1e-12)
        .expect("svd with both factors");
    Fixture { data, basis, codes }
}
