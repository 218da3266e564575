use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::Dataset;
use crate::error::{Error, Result};

/// Row indices of each split into the source dataset, each sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl SplitIndices {
    /// Stable fingerprint of the partition, used to show that runs shared a split.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for part in [&self.train, &self.val, &self.test] {
            h.update((part.len() as u64).to_le_bytes());
            for &i in part {
                h.update((i as u64).to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }
}

#[derive(Debug, Clone)]
pub struct Splits {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
    pub indices: SplitIndices,
}

/// Per-class stratified train/validation/test split.
///
/// For a class of size `n`, train gets `round(f_train·n)` and validation
/// `round(f_val·n)` rows; test gets the remainder. Each split receives at least
/// one row of every class, which requires classes of at least 3 instances.
pub fn stratified_split(ds: &Dataset, fractions: (f64, f64, f64), seed: u64) -> Result<Splits> {
    let (ft, fv, fs) = fractions;
    if [ft, fv, fs].iter().any(|f| !(f.is_finite() && *f > 0.0)) || ((ft + fv + fs) - 1.0).abs() > 1e-9 {
        return Err(Error::Validation(format!(
            "split fractions must be positive and sum to 1, got {fractions:?}"
        )));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); ds.n_classes()];
    for (i, &y) in ds.labels().iter().enumerate() {
        by_class[y].push(i);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut indices = SplitIndices {
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
    };
    for (c, mut members) in by_class.into_iter().enumerate() {
        let n = members.len();
        if n < 3 {
            return Err(Error::Validation(format!(
                "class '{}' has {n} instance(s); stratified splitting needs at least 3",
                ds.class_names()[c]
            )));
        }
        members.shuffle(&mut rng);
        let (n_train, n_val) = class_allocation(n, ft, fv);
        indices.train.extend_from_slice(&members[..n_train]);
        indices.val.extend_from_slice(&members[n_train..n_train + n_val]);
        indices.test.extend_from_slice(&members[n_train + n_val..]);
    }
    indices.train.sort_unstable();
    indices.val.sort_unstable();
    indices.test.sort_unstable();

    Ok(Splits {
        train: ds.subset(&indices.train)?,
        val: ds.subset(&indices.val)?,
        test: ds.subset(&indices.test)?,
        indices,
    })
}

fn class_allocation(n: usize, ft: f64, fv: f64) -> (usize, usize) {
    let mut n_train = ((ft * n as f64).round() as usize).clamp(1, n - 2);
    let n_val = ((fv * n as f64).round() as usize).clamp(1, n - n_train - 1);
    if n_train + n_val >= n {
        n_train = n - n_val - 1;
    }
    (n_train, n_val)
}
