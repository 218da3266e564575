//! Density-exponent class sampling.
//!
//! A class `j` with `n_j` training instances is drawn with probability
//! `n_j^q / Σ_c n_c^q`; the instance is then drawn uniformly within the class,
//! with replacement. `q = 1` reproduces regular random sampling and `q = 0`
//! class-balanced sampling. Training pairs one batch of each stream per step.

use ndarray::{Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};

/// Class probabilities for density exponent `q`.
pub fn class_probs(class_counts: &[usize], q: f64) -> Result<Vec<f64>> {
    if class_counts.is_empty() {
        return Err(Error::Validation("empty class count vector".into()));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::Validation(format!("q must lie in [0, 1], got {q}")));
    }
    if class_counts.contains(&0) {
        return Err(Error::Validation("class counts must be positive".into()));
    }
    let weights: Vec<f64> = class_counts.iter().map(|&n| (n as f64).powf(q)).collect();
    let total: f64 = weights.iter().sum();
    Ok(weights.into_iter().map(|w| w / total).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub batch_size: usize,
    pub seed: u64,
    /// Density exponent of the regular stream.
    pub q_regular: f64,
    /// Density exponent of the balanced stream.
    pub q_balanced: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            batch_size: 64,
            seed: 0,
            q_regular: 1.0,
            q_balanced: 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Batch {
    pub indices: Vec<usize>,
    pub features: Array2<f64>,
    pub labels: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct BatchPair {
    pub regular: Batch,
    pub balanced: Batch,
}

/// Sampler bound to one (training) dataset. Owns its random generator.
#[derive(Debug, Clone)]
pub struct SamplerState {
    cfg: SamplerConfig,
    rng: ChaCha8Rng,
    members: Vec<Vec<usize>>,
    n_samples: usize,
    cdf_regular: Vec<f64>,
    cdf_balanced: Vec<f64>,
}

impl SamplerState {
    pub fn new(cfg: SamplerConfig, ds: &Dataset) -> Result<Self> {
        if cfg.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        let mut members = vec![Vec::new(); ds.n_classes()];
        for (i, &y) in ds.labels().iter().enumerate() {
            members[y].push(i);
        }
        let cdf = |q| -> Result<Vec<f64>> {
            let p = class_probs(ds.class_counts(), q)?;
            Ok(cumulative(&p))
        };
        Ok(Self {
            cdf_regular: cdf(cfg.q_regular)?,
            cdf_balanced: cdf(cfg.q_balanced)?,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            members,
            n_samples: ds.n_samples(),
            cfg,
        })
    }

    pub fn config(&self) -> &SamplerConfig {
        &self.cfg
    }

    /// Number of batch pairs in one epoch: `ceil(N / batch_size)`.
    pub fn steps_per_epoch(&self) -> usize {
        self.n_samples.div_ceil(self.cfg.batch_size)
    }

    fn check_bound(&self, ds: &Dataset) -> Result<()> {
        if ds.n_samples() != self.n_samples || ds.n_classes() != self.members.len() {
            return Err(Error::Shape(format!(
                "sampler bound to {} rows / {} classes, got {} / {}",
                self.n_samples,
                self.members.len(),
                ds.n_samples(),
                ds.n_classes()
            )));
        }
        Ok(())
    }

    fn draw_indices(&mut self, balanced: bool) -> Vec<usize> {
        let cdf = if balanced { &self.cdf_balanced } else { &self.cdf_regular };
        let mut out = Vec::with_capacity(self.cfg.batch_size);
        for _ in 0..self.cfg.batch_size {
            let u: f64 = self.rng.random();
            // last class absorbs any rounding shortfall of the cumulative sum
            let class = cdf.iter().position(|&c| u < c).unwrap_or(cdf.len() - 1);
            let pool = &self.members[class];
            out.push(pool[self.rng.random_range(0..pool.len())]);
        }
        out
    }

    fn gather(ds: &Dataset, indices: Vec<usize>) -> Batch {
        Batch {
            features: ds.features().select(Axis(0), &indices),
            labels: indices.iter().map(|&i| ds.labels()[i]).collect(),
            indices,
        }
    }

    /// One batch from the regular stream only.
    pub fn next_regular(&mut self, ds: &Dataset) -> Result<Batch> {
        self.check_bound(ds)?;
        let idx = self.draw_indices(false);
        Ok(Self::gather(ds, idx))
    }

    /// One regular batch followed by one balanced batch.
    pub fn next_batch_pair(&mut self, ds: &Dataset) -> Result<BatchPair> {
        self.check_bound(ds)?;
        let regular = self.draw_indices(false);
        let balanced = self.draw_indices(true);
        Ok(BatchPair {
            regular: Self::gather(ds, regular),
            balanced: Self::gather(ds, balanced),
        })
    }

    /// The batch pairs of one epoch.
    pub fn epoch_batches<'a>(&'a mut self, ds: &'a Dataset) -> EpochBatches<'a> {
        let remaining = self.steps_per_epoch();
        EpochBatches {
            sampler: self,
            ds,
            remaining,
        }
    }
}

fn cumulative(p: &[f64]) -> Vec<f64> {
    p.iter()
        .scan(0.0, |acc, &x| {
            *acc += x;
            Some(*acc)
        })
        .collect()
}

pub struct EpochBatches<'a> {
    sampler: &'a mut SamplerState,
    ds: &'a Dataset,
    remaining: usize,
}

impl Iterator for EpochBatches<'_> {
    type Item = Result<BatchPair>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.remaining == 0 {
            return None;
        }
        self.remaining -= 1;
        Some(self.sampler.next_batch_pair(self.ds))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        (self.remaining, Some(self.remaining))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ds_with_counts(counts: &[usize]) -> Dataset {
        let labels: Vec<usize> = counts
            .iter()
            .enumerate()
            .flat_map(|(c, &k)| std::iter::repeat_n(c, k))
            .collect();
        let n = labels.len();
        Dataset::new(
            Array2::from_shape_fn((n, 1), |(i, _)| i as f64),
            labels,
            vec!["x".into()],
            (0..counts.len()).map(|c| c.to_string()).collect(),
        )
        .unwrap()
    }

    #[test]
    fn analytic_class_probs() {
        assert_eq!(class_probs(&[90, 10], 1.0).unwrap(), vec![0.9, 0.1]);
        assert_eq!(class_probs(&[90, 10], 0.0).unwrap(), vec![0.5, 0.5]);
        let p = class_probs(&[100, 25], 0.5).unwrap();
        assert!((p[0] - 10.0 / 15.0).abs() < 1e-15);
        assert!((p[1] - 5.0 / 15.0).abs() < 1e-15);
    }

    #[test]
    fn class_probs_errors() {
        assert!(class_probs(&[], 0.5).is_err());
        assert!(class_probs(&[1, 2], -0.1).is_err());
        assert!(class_probs(&[1, 2], 1.5).is_err());
    }

    #[test]
    fn steps_per_epoch() {
        let ds = ds_with_counts(&[900, 100]);
        let cfg = SamplerConfig { batch_size: 128, ..Default::default() };
        let mut s = SamplerState::new(cfg, &ds).unwrap();
        assert_eq!(s.steps_per_epoch(), 8);
        assert_eq!(s.epoch_batches(&ds).count(), 8);

        let small = ds_with_counts(&[100, 28]);
        let s = SamplerState::new(cfg, &small).unwrap();
        assert_eq!(s.steps_per_epoch(), 1);
    }

    #[test]
    fn same_seed_same_sequence() {
        let ds = ds_with_counts(&[90, 10]);
        let cfg = SamplerConfig { batch_size: 16, seed: 11, ..Default::default() };
        let collect = || {
            let mut s = SamplerState::new(cfg, &ds).unwrap();
            let mut out = Vec::new();
            for _ in 0..2 {
                for pair in s.epoch_batches(&ds) {
                    let pair = pair.unwrap();
                    out.push((pair.regular.indices, pair.balanced.indices));
                }
            }
            out
        };
        assert_eq!(collect(), collect());
    }

    #[test]
    fn batches_match_rows() {
        let ds = ds_with_counts(&[30, 5]);
        let mut s = SamplerState::new(SamplerConfig { batch_size: 8, ..Default::default() }, &ds).unwrap();
        let pair = s.next_batch_pair(&ds).unwrap();
        for b in [&pair.regular, &pair.balanced] {
            assert_eq!(b.features.nrows(), 8);
            for (k, &i) in b.indices.iter().enumerate() {
                assert_eq!(b.features[[k, 0]], i as f64);
                assert_eq!(b.labels[k], ds.labels()[i]);
            }
        }
    }

    #[test]
    fn rejects_foreign_dataset() {
        let ds = ds_with_counts(&[30, 5]);
        let other = ds_with_counts(&[31, 5]);
        let mut s = SamplerState::new(SamplerConfig::default(), &ds).unwrap();
        assert!(s.next_batch_pair(&other).is_err());
    }

    #[test]
    fn stream_class_fractions() {
        let ds = ds_with_counts(&[900, 100]);
        let cfg = SamplerConfig { batch_size: 10_000, seed: 5, ..Default::default() };
        let mut s = SamplerState::new(cfg, &ds).unwrap();
        let pair = s.next_batch_pair(&ds).unwrap();
        let frac = |b: &Batch| b.labels.iter().filter(|&&y| y == 1).count() as f64 / 10_000.0;
        assert!((frac(&pair.balanced) - 0.5).abs() < 0.015);
        assert!((frac(&pair.regular) - 0.1).abs() < 0.009);
    }

    #[test]
    fn within_class_uniform() {
        let ds = ds_with_counts(&[10, 10]);
        let cfg = SamplerConfig { batch_size: 20_000, seed: 9, ..Default::default() };
        let mut s = SamplerState::new(cfg, &ds).unwrap();
        let batch = s.next_batch_pair(&ds).unwrap().balanced;
        let mut hits = [0usize; 10];
        let mut draws = 0;
        for &i in &batch.indices {
            if i < 10 {
                hits[i] += 1;
                draws += 1;
            }
        }
        // condition on ~10 000 draws of class 0
        let expect = draws as f64 / 10.0;
        for h in hits {
            assert!((h as f64 - expect).abs() < 150.0, "{h} vs {expect}");
        }
    }

    proptest! {
        #[test]
        fn probs_sum_to_one_and_monotone(
            counts in prop::collection::vec(1usize..10_000, 1..8),
            q in 0.0f64..=1.0,
            bump in 1usize..100,
            which in any::<prop::sample::Index>(),
        ) {
            let p = class_probs(&counts, q).unwrap();
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(p.iter().all(|&x| x > 0.0));
            let j = which.index(counts.len());
            let mut bigger = counts.clone();
            bigger[j] += bump;
            let p2 = class_probs(&bigger, q).unwrap();
            prop_assert!(p2[j] >= p[j] - 1e-15);
        }

        #[test]
        fn extreme_exponents_exact(counts in prop::collection::vec(1usize..10_000, 1..8)) {
            let uniform = class_probs(&counts, 0.0).unwrap();
            let k = counts.len() as f64;
            prop_assert!(uniform.iter().all(|&x| x == 1.0 / k));
            let prop = class_probs(&counts, 1.0).unwrap();
            let n: usize = counts.iter().sum();
            for (p, &c) in prop.iter().zip(&counts) {
                prop_assert_eq!(*p, c as f64 / n as f64);
            }
        }
    }
}
