//! Synthetic imbalanced data: one dense majority cluster and a minority class
//! spread over several separate modes.

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_majority: usize,
    pub n_minority: usize,
    pub n_minority_modes: usize,
    pub dim: usize,
    /// Distance of each minority mode center from the majority center, in
    /// units of the cluster standard deviation.
    pub mode_spread: f64,
    /// Standard deviation of every cluster, per coordinate.
    pub noise_scale: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_majority: 900,
            n_minority: 100,
            n_minority_modes: 3,
            dim: 20,
            mode_spread: 4.0,
            noise_scale: 1.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_minority_modes < 1 {
            return Err(Error::Config("n_minority_modes must be at least 1".into()));
        }
        if !(self.n_majority >= self.n_minority && self.n_minority >= self.n_minority_modes) {
            return Err(Error::Config(format!(
                "need n_majority >= n_minority >= n_minority_modes, got {} / {} / {}",
                self.n_majority, self.n_minority, self.n_minority_modes
            )));
        }
        if self.dim < 1 {
            return Err(Error::Config("dim must be at least 1".into()));
        }
        if !(self.mode_spread > 0.0 && self.mode_spread.is_finite()) {
            return Err(Error::Config("mode_spread must be positive".into()));
        }
        if !(self.noise_scale > 0.0 && self.noise_scale.is_finite()) {
            return Err(Error::Config("noise_scale must be positive".into()));
        }
        Ok(())
    }

    pub fn imbalance_ratio(&self) -> f64 {
        self.n_majority as f64 / self.n_minority as f64
    }

    /// Unit directions of the minority mode centers. Drawn first from the seeded
    /// generator and orthonormalized while `modes <= dim`.
    pub fn mode_directions(&self) -> Vec<Array1<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        self.draw_directions(&mut rng)
    }

    fn draw_directions(&self, rng: &mut ChaCha8Rng) -> Vec<Array1<f64>> {
        let mut dirs: Vec<Array1<f64>> = Vec::with_capacity(self.n_minority_modes);
        for m in 0..self.n_minority_modes {
            loop {
                let mut v: Array1<f64> =
                    Array1::from_shape_fn(self.dim, |_| StandardNormal.sample(&mut *rng));
                if m < self.dim {
                    for u in &dirs {
                        let proj = v.dot(u);
                        v.scaled_add(-proj, u);
                    }
                }
                let norm = v.dot(&v).sqrt();
                if norm > 1e-8 {
                    dirs.push(v / norm);
                    break;
                }
            }
        }
        dirs
    }

    /// Mode centers in feature space; the majority center is the origin.
    pub fn mode_centers(&self) -> Vec<Array1<f64>> {
        self.mode_directions()
            .into_iter()
            .map(|d| d * (self.mode_spread * self.noise_scale))
            .collect()
    }
}

/// Draws a dataset: majority rows (label 0) first, then minority rows (label 1)
/// assigned to modes in contiguous blocks of near-equal size.
pub fn gen_synthetic(cfg: &SynthConfig) -> Result<Dataset> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let centers: Vec<Array1<f64>> = cfg
        .draw_directions(&mut rng)
        .into_iter()
        .map(|d| d * (cfg.mode_spread * cfg.noise_scale))
        .collect();

    let n = cfg.n_majority + cfg.n_minority;
    let mut features = Array2::<f64>::zeros((n, cfg.dim));
    let mut labels = Vec::with_capacity(n);

    for i in 0..cfg.n_majority {
        for v in features.row_mut(i).iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v = cfg.noise_scale * z;
        }
        labels.push(0);
    }

    let base = cfg.n_minority / cfg.n_minority_modes;
    let extra = cfg.n_minority % cfg.n_minority_modes;
    let mut row = cfg.n_majority;
    for (m, center) in centers.iter().enumerate() {
        let size = base + usize::from(m < extra);
        for _ in 0..size {
            for (v, c) in features.row_mut(row).iter_mut().zip(center.iter()) {
                let z: f64 = StandardNormal.sample(&mut rng);
                *v = c + cfg.noise_scale * z;
            }
            labels.push(1);
            row += 1;
        }
    }

    Dataset::new(
        features,
        labels,
        (0..cfg.dim).map(|j| format!("x{j}")).collect(),
        vec!["0".to_string(), "1".to_string()],
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_and_ratio() {
        let cfg = SynthConfig {
            n_majority: 900,
            n_minority: 100,
            n_minority_modes: 3,
            ..Default::default()
        };
        let ds = gen_synthetic(&cfg).unwrap();
        assert_eq!(ds.class_counts(), &[900, 100]);
        assert_eq!(crate::data::imbalance_ratio(&ds), 9.0);
    }

    #[test]
    fn deterministic() {
        let cfg = SynthConfig::default();
        let a = gen_synthetic(&cfg).unwrap();
        let b = gen_synthetic(&cfg).unwrap();
        assert_eq!(a.features(), b.features());
        let c = gen_synthetic(&SynthConfig { seed: 1, ..cfg }).unwrap();
        assert_ne!(a.features(), c.features());
    }

    #[test]
    fn directions_orthonormal() {
        let cfg = SynthConfig {
            n_minority_modes: 4,
            dim: 6,
            ..Default::default()
        };
        let d = cfg.mode_directions();
        for i in 0..d.len() {
            assert!((d[i].dot(&d[i]) - 1.0).abs() < 1e-12);
            for j in 0..i {
                assert!(d[i].dot(&d[j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn more_modes_than_dims_still_unit() {
        let cfg = SynthConfig {
            n_minority: 10,
            n_minority_modes: 5,
            dim: 2,
            ..Default::default()
        };
        let ds = gen_synthetic(&cfg).unwrap();
        assert_eq!(ds.class_counts(), &[900, 10]);
        for d in cfg.mode_directions() {
            assert!((d.dot(&d) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn majority_mean_near_origin() {
        let cfg = SynthConfig {
            noise_scale: 2.0,
            ..Default::default()
        };
        let ds = gen_synthetic(&cfg).unwrap();
        let tol = 3.0 * cfg.noise_scale / (cfg.n_majority as f64).sqrt();
        let maj = ds.features().slice(ndarray::s![..cfg.n_majority, ..]);
        for col in maj.columns() {
            let m = col.mean().unwrap();
            assert!(m.abs() < tol, "{m} vs {tol}");
        }
    }

    #[test]
    fn invalid_configs() {
        let bad = [
            SynthConfig { n_minority_modes: 0, ..Default::default() },
            SynthConfig { n_majority: 10, n_minority: 20, ..Default::default() },
            SynthConfig { n_minority: 2, n_minority_modes: 3, ..Default::default() },
            SynthConfig { mode_spread: 0.0, ..Default::default() },
            SynthConfig { noise_scale: -1.0, ..Default::default() },
        ];
        for cfg in bad {
            assert!(gen_synthetic(&cfg).is_err(), "{cfg:?}");
        }
    }
}
