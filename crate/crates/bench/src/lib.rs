//! Fixtures shared by the benchmarks: a default-shape network and encoded
//! test patterns.

use pulsenet::scenes::DEFAULT_TEST_PER_CLASS;
use pulsenet::{generate_split, init_weights_with, Model, Sample, Split, TrainConfig};

pub const SEED: u64 = 7;

/// Untrained 256-400-30 network with the training kernel.
pub fn default_model() -> Model {
    let cfg = TrainConfig::default();
    init_weights_with(&cfg.dims, SEED, &cfg.init, cfg.kernel).expect("default dims are valid")
}

/// The 600 test patterns at `noise`, encoded for `model`.
pub fn test_samples(model: &Model, noise: f64) -> Vec<Sample> {
    generate_split(Split::Test, DEFAULT_TEST_PER_CLASS, noise, SEED)
        .expect("valid generation parameters")
        .samples(model.kernel())
}
