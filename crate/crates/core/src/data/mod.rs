//! Tabular datasets and everything that produces them.
//!
//! A [`Dataset`] holds an `N × D` feature matrix and contiguous class indices.
//! Raw datasets may carry missing cells (stored as `NaN`); after
//! [`apply_preprocess`] every value is finite.

mod csv_io;
mod preprocess;
mod split;
mod synth;

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use csv_io::{load_csv, load_csv_with_classes, write_csv, DEFAULT_LABEL_COLUMN, MAX_CLASSES};
pub use preprocess::{apply_preprocess, fit_preprocess, NormStats};
pub use split::{stratified_split, SplitIndices, Splits};
pub use synth::{gen_synthetic, SynthConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Array2<f64>,
    labels: Vec<usize>,
    feature_names: Vec<String>,
    class_names: Vec<String>,
    class_counts: Vec<usize>,
}

impl Dataset {
    /// Builds a dataset, computing class counts and checking invariants.
    ///
    /// `class_names` fixes the number of classes; every class must occur at least once.
    /// Feature cells may be `NaN` (missing) but never infinite.
    pub fn new(
        features: Array2<f64>,
        labels: Vec<usize>,
        feature_names: Vec<String>,
        class_names: Vec<String>,
    ) -> Result<Self> {
        let (n, d) = features.dim();
        if labels.len() != n {
            return Err(Error::Shape(format!(
                "{} label(s) for {} feature row(s)",
                labels.len(),
                n
            )));
        }
        if feature_names.len() != d {
            return Err(Error::Shape(format!(
                "{} feature name(s) for {} column(s)",
                feature_names.len(),
                d
            )));
        }
        if class_names.len() < 2 {
            return Err(Error::Validation(format!(
                "need at least 2 classes, got {}",
                class_names.len()
            )));
        }
        let mut class_counts = vec![0usize; class_names.len()];
        for &y in &labels {
            if y >= class_names.len() {
                return Err(Error::Validation(format!(
                    "label {y} out of range for {} classes",
                    class_names.len()
                )));
            }
            class_counts[y] += 1;
        }
        if let Some(c) = class_counts.iter().position(|&k| k == 0) {
            return Err(Error::Validation(format!(
                "class '{}' has no instances",
                class_names[c]
            )));
        }
        if features.iter().any(|v| v.is_infinite()) {
            return Err(Error::Validation("infinite feature value".into()));
        }
        Ok(Self {
            features,
            labels,
            feature_names,
            class_names,
            class_counts,
        })
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    /// Label mapping: `class_names()[c]` is the raw label of class index `c`.
    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn class_counts(&self) -> &[usize] {
        &self.class_counts
    }

    pub fn n_samples(&self) -> usize {
        self.labels.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn has_missing(&self) -> bool {
        self.features.iter().any(|v| v.is_nan())
    }

    /// Rows `indices` (in that order) as a new dataset with the same label mapping.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.n_samples()) {
            return Err(Error::Shape(format!(
                "row index {bad} out of range for {} rows",
                self.n_samples()
            )));
        }
        let features = self.features.select(Axis(0), indices);
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        Self::new(
            features,
            labels,
            self.feature_names.clone(),
            self.class_names.clone(),
        )
    }

    /// Indicator of class 1, the positive class for binary metrics.
    pub fn binary_outcomes(&self) -> Result<Vec<u8>> {
        if self.n_classes() != 2 {
            return Err(Error::UnsupportedTask(format!(
                "binary outcomes requested for {} classes",
                self.n_classes()
            )));
        }
        Ok(self.labels.iter().map(|&y| y as u8).collect())
    }

    pub(crate) fn with_features(&self, features: Array2<f64>) -> Result<Self> {
        Self::new(
            features,
            self.labels.clone(),
            self.feature_names.clone(),
            self.class_names.clone(),
        )
    }
}

/// Ratio between the largest and the smallest class count.
pub fn imbalance_ratio(ds: &Dataset) -> f64 {
    counts_imbalance_ratio(ds.class_counts())
}

pub(crate) fn counts_imbalance_ratio(counts: &[usize]) -> f64 {
    let max = counts.iter().copied().max().unwrap_or(0);
    let min = counts.iter().copied().min().unwrap_or(0);
    max as f64 / min as f64
}

/// Label mapping persisted alongside reports and checkpoints.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelMapping {
    pub label_column: String,
    pub classes: Vec<String>,
}
