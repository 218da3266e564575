//! Mean imputation followed by z-score normalization, fitted on the training split.
//!
//! Standard deviations use the population convention (denominator `N`, over
//! the present values only). Zero-variance columns are kept with a standard
//! deviation of 1 and flagged, so column indexing never changes.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub feature_names: Vec<String>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Value substituted for missing cells before normalization.
    pub impute: Vec<f64>,
    pub zero_variance: Vec<bool>,
}

impl NormStats {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

pub fn fit_preprocess(train: &Dataset) -> Result<NormStats> {
    if train.n_samples() == 0 {
        return Err(Error::Validation("cannot fit preprocessing on an empty dataset".into()));
    }
    let d = train.n_features();
    let mut mean = Vec::with_capacity(d);
    let mut std = Vec::with_capacity(d);
    let mut zero_variance = Vec::with_capacity(d);

    for (j, col) in train.features().columns().into_iter().enumerate() {
        let present: Vec<f64> = col.iter().copied().filter(|v| !v.is_nan()).collect();
        if present.is_empty() {
            return Err(Error::Validation(format!(
                "feature column '{}' has no present values",
                train.feature_names()[j]
            )));
        }
        let n = present.len() as f64;
        let m = present.iter().sum::<f64>() / n;
        let var = present.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
        let s = var.sqrt();
        if s > 0.0 && s.is_finite() {
            std.push(s);
            zero_variance.push(false);
        } else {
            std.push(1.0);
            zero_variance.push(true);
        }
        mean.push(m);
    }

    Ok(NormStats {
        feature_names: train.feature_names().to_vec(),
        impute: mean.clone(),
        mean,
        std,
        zero_variance,
    })
}

pub fn apply_preprocess(ds: &Dataset, stats: &NormStats) -> Result<Dataset> {
    if ds.n_features() != stats.dim() {
        return Err(Error::Shape(format!(
            "dataset has {} features, statistics were fitted on {}",
            ds.n_features(),
            stats.dim()
        )));
    }
    let mut out: Array2<f64> = ds.features().clone();
    for (j, mut col) in out.columns_mut().into_iter().enumerate() {
        let (m, s, fill) = (stats.mean[j], stats.std[j], stats.impute[j]);
        col.mapv_inplace(|v| {
            let v = if v.is_nan() { fill } else { v };
            (v - m) / s
        });
    }
    ds.with_features(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn ds(features: Array2<f64>) -> Dataset {
        let n = features.nrows();
        let d = features.ncols();
        let labels = (0..n).map(|i| i % 2).collect();
        Dataset::new(
            features,
            labels,
            (0..d).map(|j| format!("f{j}")).collect(),
            vec!["a".into(), "b".into()],
        )
        .unwrap()
    }

    #[test]
    fn population_std() {
        let stats = fit_preprocess(&ds(array![[1.0], [2.0], [3.0]])).unwrap();
        assert_eq!(stats.mean, vec![2.0]);
        assert!((stats.std[0] - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!(!stats.zero_variance[0]);
    }

    #[test]
    fn constant_column_flagged() {
        let stats = fit_preprocess(&ds(array![[5.0], [5.0], [5.0]])).unwrap();
        assert_eq!(stats.std, vec![1.0]);
        assert!(stats.zero_variance[0]);
    }

    #[test]
    fn missing_values_ignored_then_imputed() {
        let train = ds(array![[1.0], [f64::NAN], [3.0]]);
        let stats = fit_preprocess(&train).unwrap();
        assert_eq!(stats.mean, vec![2.0]);
        assert_eq!(stats.impute, vec![2.0]);
        let out = apply_preprocess(&train, &stats).unwrap();
        assert_eq!(out.features()[[1, 0]], 0.0);
        assert!(!out.has_missing());
    }

    #[test]
    fn all_missing_column_named() {
        let train = ds(array![[1.0, f64::NAN], [2.0, f64::NAN]]);
        match fit_preprocess(&train) {
            Err(Error::Validation(msg)) => assert!(msg.contains("f1")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn uses_stored_statistics_only() {
        let stats = NormStats {
            feature_names: vec!["f0".into()],
            mean: vec![2.0],
            std: vec![1.0],
            impute: vec![2.0],
            zero_variance: vec![false],
        };
        let test = ds(array![[2.0], [10.0]]);
        let out = apply_preprocess(&test, &stats).unwrap();
        assert_eq!(out.features()[[0, 0]], 0.0);
        assert_eq!(out.features()[[1, 0]], 8.0);
    }

    #[test]
    fn dimension_mismatch() {
        let stats = fit_preprocess(&ds(array![[1.0], [2.0]])).unwrap();
        let other = ds(array![[1.0, 2.0], [3.0, 4.0]]);
        assert!(matches!(apply_preprocess(&other, &stats), Err(Error::Shape(_))));
    }
}
