//! Fixed inputs for the benchmarks in `benches/`.

use denshift::losses::{DahConfig, HeadObjective, LossKind};
use denshift::nn::{init_mlp, MlpShape};
use denshift::{ModelParams, ScoredSet};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const INPUT_DIM: usize = 20;
pub const BATCH: usize = 64;

/// The default network on the benchmark's input width, plus one batch.
pub fn network_fixture() -> (ModelParams, Array2<f64>, Vec<usize>) {
    let params = init_mlp(MlpShape::new(INPUT_DIM, 2), 0).expect("valid shape");
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = Array2::from_shape_simple_fn((BATCH, INPUT_DIM), || rng.random_range(-2.0..2.0));
    let y = (0..BATCH).map(|i| usize::from(i % 10 == 0)).collect();
    (params, x, y)
}

/// The density-aware objective for a 9:1 binary task.
pub fn dah_objective() -> HeadObjective {
    let dah = DahConfig::from_counts(&[900, 100], None).expect("positive counts");
    HeadObjective {
        base: LossKind::DahSoftmax { deltas: dah.deltas },
        cost_weight: Some(1.0),
    }
}

/// `n` random probabilities with about 10% positives.
pub fn scored_set(n: usize) -> ScoredSet {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let scores = (0..n).map(|_| rng.random::<f64>()).collect();
    let labels = (0..n).map(|_| u8::from(rng.random_bool(0.1))).collect();
    ScoredSet::new(scores, labels).expect("valid scores")
}
