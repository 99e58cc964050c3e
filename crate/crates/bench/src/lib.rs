//! Shared fixtures for the benchmarks.

use markermap_core::data::{preprocess, synthesize, SyntheticSpec};
use markermap_core::model::{MarkerModel, Method, StepNoise, TrainConfig};
use markermap_core::{Matrix, PreprocessMode, Rng};

pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut rng = Rng::new(seed);
    Matrix::from_fn(rows, cols, |_, _| rng.normal())
}

/// Standardized planted-marker data with labels.
pub fn planted(n: usize, d: usize) -> (Matrix, Vec<usize>) {
    let syn = synthesize(&SyntheticSpec {
        n,
        d,
        ..Default::default()
    })
    .expect("valid spec");
    let ds = preprocess(&syn.dataset, PreprocessMode::Classification, false).expect("finite data");
    let labels = ds.labels.clone().expect("synthetic data is labeled");
    (ds.x, labels)
}

/// One batch worth of inputs for a single training step.
pub struct StepFixture {
    pub model: MarkerModel,
    pub x: Matrix,
    pub y: Vec<usize>,
    pub noise: StepNoise,
}

pub fn step_fixture(method: Method, batch: usize, d: usize) -> StepFixture {
    let (x, y) = planted(batch, d);
    let model = MarkerModel::new(method, d, 4, &TrainConfig::default()).expect("valid config");
    let noise = model.draw_noise(batch, &mut Rng::new(1));
    StepFixture { model, x, y, noise }
}
