use ndarray::Array2;

use super::ScoredSet;
use crate::error::{Error, Result};

/// Mann–Whitney AUC: `P(s_pos > s_neg) + ½·P(s_pos = s_neg)`, from mid-rank sums.
pub fn auc_roc(s: &ScoredSet) -> Result<f64> {
    auc_from_pairs(s.scores(), s.labels())
}

pub(crate) fn auc_from_pairs(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let n_pos = labels.iter().filter(|&&o| o == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Validation(
            "AUC-ROC needs at least one positive and one negative".into(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // ranks are 1-based; tied runs share their average rank
    let mut pos_rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let mid_rank = (i + j + 2) as f64 / 2.0;
        let pos_in_run = order[i..=j].iter().filter(|&&k| labels[k] == 1).count();
        pos_rank_sum += mid_rank * pos_in_run as f64;
        i = j + 1;
    }
    let (np, nn) = (n_pos as f64, n_neg as f64);
    let u = pos_rank_sum - np * (np + 1.0) / 2.0;
    Ok(u / (np * nn))
}

/// Non-interpolated average precision. Scores are visited in descending order
/// with tied scores forming a single cutoff; each cutoff contributes its
/// precision times the recall it adds.
pub fn auc_prc(s: &ScoredSet) -> Result<f64> {
    let scores = s.scores();
    let labels = s.labels();
    let n_pos = labels.iter().filter(|&&o| o == 1).count();
    if n_pos == 0 {
        return Err(Error::Validation("AUC-PRC needs at least one positive".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let (mut tp, mut seen) = (0usize, 0usize);
    let mut ap = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let pos_in_run = order[i..=j].iter().filter(|&&k| labels[k] == 1).count();
        tp += pos_in_run;
        seen += j - i + 1;
        if pos_in_run > 0 {
            ap += (pos_in_run as f64 / n_pos as f64) * (tp as f64 / seen as f64);
        }
        i = j + 1;
    }
    Ok(ap)
}

/// One-vs-rest AUC-ROC for a single-label multi-class problem.
///
/// Returns `(macro, micro)`: the unweighted mean of per-class AUCs, and the
/// AUC over all `(score, indicator)` pairs pooled across classes.
pub fn macro_micro_auc(scores: &Array2<f64>, labels: &[usize]) -> Result<(f64, f64)> {
    let (n, k) = scores.dim();
    if labels.len() != n {
        return Err(Error::Shape(format!("{} labels for {n} score rows", labels.len())));
    }
    if k < 2 {
        return Err(Error::Validation("need at least 2 classes".into()));
    }
    let mut per_class = Vec::with_capacity(k);
    let mut pooled_scores = Vec::with_capacity(n * k);
    let mut pooled_labels = Vec::with_capacity(n * k);
    for c in 0..k {
        let indicator: Vec<u8> = labels.iter().map(|&y| u8::from(y == c)).collect();
        if !indicator.contains(&1) {
            return Err(Error::Validation(format!("class {c} absent from labels")));
        }
        let col: Vec<f64> = scores.column(c).to_vec();
        per_class.push(auc_from_pairs(&col, &indicator)?);
        pooled_scores.extend_from_slice(&col);
        pooled_labels.extend_from_slice(&indicator);
    }
    let macro_auc = per_class.iter().sum::<f64>() / k as f64;
    let micro_auc = auc_from_pairs(&pooled_scores, &pooled_labels)?;
    Ok((macro_auc, micro_auc))
}
