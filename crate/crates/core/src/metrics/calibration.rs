use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ScoredSet;
use crate::error::{Error, Result};

pub const DEFAULT_BINS: usize = 10;

/// One equal-width probability bin. Means are `None` for empty bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRow {
    pub bin_lo: f64,
    pub bin_hi: f64,
    pub mean_pred: Option<f64>,
    pub frac_pos: Option<f64>,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationTable {
    pub rows: Vec<CalibrationRow>,
}

/// Bins predictions into `n_bins` equal-width bins over `[0, 1]`. Bin `i` covers
/// `[i/n, (i+1)/n)`, except the last, which also holds 1.
pub fn calibration_bins(s: &ScoredSet, n_bins: usize) -> Result<CalibrationTable> {
    if n_bins < 1 {
        return Err(Error::Config("need at least one calibration bin".into()));
    }
    s.check_probabilities()?;
    let mut sum_pred = vec![0.0; n_bins];
    let mut positives = vec![0usize; n_bins];
    let mut counts = vec![0usize; n_bins];
    for (&f, &o) in s.scores().iter().zip(s.labels()) {
        let b = ((f * n_bins as f64).floor() as usize).min(n_bins - 1);
        sum_pred[b] += f;
        positives[b] += usize::from(o);
        counts[b] += 1;
    }
    let rows = (0..n_bins)
        .map(|b| {
            let c = counts[b];
            CalibrationRow {
                bin_lo: b as f64 / n_bins as f64,
                bin_hi: (b + 1) as f64 / n_bins as f64,
                mean_pred: (c > 0).then(|| sum_pred[b] / c as f64),
                frac_pos: (c > 0).then(|| positives[b] as f64 / c as f64),
                count: c,
            }
        })
        .collect();
    Ok(CalibrationTable { rows })
}

impl CalibrationTable {
    pub fn total(&self) -> usize {
        self.rows.iter().map(|r| r.count).sum()
    }

    /// CSV with columns `bin_lo,bin_hi,mean_pred,frac_pos,count`; empty bins
    /// leave the two mean columns blank.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_lo,bin_hi,mean_pred,frac_pos,count\n");
        let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.bin_lo,
                r.bin_hi,
                cell(r.mean_pred),
                cell(r.frac_pos),
                r.count
            ));
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_csv().as_bytes()).map_err(|e| Error::io(path, e))
    }
}
