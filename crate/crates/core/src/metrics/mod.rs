//! Imbalance-aware evaluation.
//!
//! Binary metrics take a [`ScoredSet`]: the predicted probability `f_t` of the
//! positive class (class index 1) and the outcome `o_t ∈ {0, 1}`.

mod brier;
mod calibration;
mod ranking;
mod temperature;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use brier::{brier, bss, prevalence};
pub use calibration::{calibration_bins, CalibrationRow, CalibrationTable, DEFAULT_BINS};
pub use ranking::{auc_prc, auc_roc, macro_micro_auc};
pub use temperature::{nll_at_temperature, temperature_apply, temperature_fit, TEMPERATURE_RANGE};

/// Scores paired with binary outcomes.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredSet {
    scores: Vec<f64>,
    labels: Vec<u8>,
}

impl ScoredSet {
    /// Probabilities in `[0, 1]` with outcomes in `{0, 1}`.
    pub fn new(scores: Vec<f64>, labels: Vec<u8>) -> Result<Self> {
        if let Some(s) = scores.iter().find(|s| !(0.0..=1.0).contains(*s)) {
            return Err(Error::Validation(format!("score {s} is not a probability")));
        }
        Self::ranking(scores, labels)
    }

    /// Arbitrary finite scores; valid for the ranking metrics only.
    pub fn ranking(scores: Vec<f64>, labels: Vec<u8>) -> Result<Self> {
        if scores.len() != labels.len() {
            return Err(Error::Shape(format!(
                "{} scores for {} labels",
                scores.len(),
                labels.len()
            )));
        }
        if scores.is_empty() {
            return Err(Error::Validation("empty scored set".into()));
        }
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::Validation("non-finite score".into()));
        }
        if labels.iter().any(|&o| o > 1) {
            return Err(Error::Validation("outcomes must be 0 or 1".into()));
        }
        Ok(Self { scores, labels })
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub(crate) fn check_probabilities(&self) -> Result<()> {
        if self.scores.iter().any(|s| !(0.0..=1.0).contains(s)) {
            return Err(Error::Validation("scores must be probabilities in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Headline metrics of one evaluated split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub auc_roc: f64,
    pub auc_prc: f64,
    pub brier: f64,
    pub bss: f64,
    pub n: usize,
    pub prevalence: f64,
    /// Pooled one-vs-rest AUC-ROC; only for more than two classes, where the
    /// other fields are macro averages of one-vs-rest scores.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub micro_auc_roc: Option<f64>,
}

impl MetricsReport {
    pub fn evaluate(s: &ScoredSet) -> Result<Self> {
        Ok(Self {
            auc_roc: auc_roc(s)?,
            auc_prc: auc_prc(s)?,
            brier: brier(s)?,
            bss: bss(s)?,
            n: s.len(),
            prevalence: prevalence(s),
            micro_auc_roc: None,
        })
    }
}
