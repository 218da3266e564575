use ndarray::Array2;

use crate::error::{Error, Result};
use crate::metrics::{macro_micro_auc, MetricsReport, ScoredSet};

/// Probability of class 1 from a two-column probability matrix.
pub fn positive_scores(probs: &Array2<f64>) -> Result<Vec<f64>> {
    if probs.ncols() != 2 {
        return Err(Error::UnsupportedTask(format!(
            "positive-class scores need 2 classes, got {}",
            probs.ncols()
        )));
    }
    // guard against rounding just outside [0, 1]
    Ok(probs.column(1).iter().map(|p| p.clamp(0.0, 1.0)).collect())
}

/// Metrics from a probability matrix. Binary tasks score class 1; with more
/// classes every field is the macro average of one-vs-rest scores and
/// `micro_auc_roc` is filled in.
pub fn evaluate_probs(probs: &Array2<f64>, labels: &[usize]) -> Result<MetricsReport> {
    if probs.nrows() != labels.len() {
        return Err(Error::Shape(format!("{} probability rows for {} labels", probs.nrows(), labels.len())));
    }
    let k = probs.ncols();
    if k == 2 {
        let outcomes = labels.iter().map(|&y| u8::from(y == 1)).collect();
        return MetricsReport::evaluate(&ScoredSet::new(positive_scores(probs)?, outcomes)?);
    }
    let mut per_class = Vec::with_capacity(k);
    for c in 0..k {
        let scores = probs.column(c).iter().map(|p| p.clamp(0.0, 1.0)).collect();
        let outcomes = labels.iter().map(|&y| u8::from(y == c)).collect();
        per_class.push(MetricsReport::evaluate(&ScoredSet::new(scores, outcomes)?)?);
    }
    let (macro_auc, micro_auc) = macro_micro_auc(probs, labels)?;
    let mean = |f: fn(&MetricsReport) -> f64| per_class.iter().map(f).sum::<f64>() / k as f64;
    Ok(MetricsReport {
        auc_roc: macro_auc,
        auc_prc: mean(|r| r.auc_prc),
        brier: mean(|r| r.brier),
        bss: mean(|r| r.bss),
        n: labels.len(),
        prevalence: mean(|r| r.prevalence),
        micro_auc_roc: Some(micro_auc),
    })
}
