//! Temperature scaling: a single positive scalar `T` dividing the logits,
//! fitted by minimizing validation negative log-likelihood.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::losses::mean_nll;
use crate::math::softmax_rows;

/// Search interval for `T`.
pub const TEMPERATURE_RANGE: (f64, f64) = (0.05, 20.0);
const TOLERANCE: f64 = 1e-4;

/// Mean softmax NLL of `logits / t`.
pub fn nll_at_temperature(logits: &Array2<f64>, labels: &[usize], t: f64) -> Result<f64> {
    mean_nll(&(logits / t), labels)
}

/// Golden-section search for the NLL-minimizing temperature on
/// [`TEMPERATURE_RANGE`]. NLL is convex in `1/T`, hence unimodal in `T`. The
/// identity `T = 1` is kept when the search does not beat it.
pub fn temperature_fit(logits: &Array2<f64>, labels: &[usize]) -> Result<f64> {
    if logits.nrows() == 0 || logits.nrows() != labels.len() {
        return Err(Error::Validation("temperature fit needs matching, non-empty logits and labels".into()));
    }
    let mut seen = vec![false; logits.ncols()];
    for &y in labels {
        if y >= seen.len() {
            return Err(Error::Validation(format!("label {y} out of range")));
        }
        seen[y] = true;
    }
    if seen.iter().filter(|&&s| s).count() < 2 {
        return Err(Error::Validation("temperature fit needs at least two classes present".into()));
    }

    let f = |t: f64| nll_at_temperature(logits, labels, t);
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = TEMPERATURE_RANGE;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c)?, f(d)?);
    while b - a > TOLERANCE {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d)?;
        }
    }
    let t = 0.5 * (a + b);
    if f(t)? <= f(1.0)? {
        Ok(t)
    } else {
        Ok(1.0)
    }
}

/// Class probabilities `softmax(z / T)`.
pub fn temperature_apply(logits: &Array2<f64>, t: f64) -> Result<Array2<f64>> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::Validation(format!("temperature must be positive, got {t}")));
    }
    Ok(softmax_rows(&(logits / t)))
}
