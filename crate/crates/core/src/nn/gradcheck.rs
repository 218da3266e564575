use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Default number of coordinates probed by [`grad_check`].
pub const DEFAULT_PROBES: usize = 200;

/// Smallest denominator of the relative error. Central differences at
/// `eps = 1e-5` carry about `1e-11·|loss|` of rounding noise, so components
/// below this size are effectively held to an absolute error instead.
pub const GRAD_FLOOR: f64 = 1e-6;

/// Outcome of a finite-difference comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Coordinate where the maximum was attained.
    pub worst_index: usize,
    pub probed: usize,
}

/// Compares an analytic gradient with central differences.
///
/// `loss_fn` maps a flat parameter vector to `(loss, gradient)`. Up to
/// `probes` coordinates (all of them when fewer exist) are perturbed by `±eps`;
/// the error at a coordinate is `|g - g_fd| / max(|g_fd|, GRAD_FLOOR)`.
pub fn grad_check<F>(mut loss_fn: F, theta: &[f64], eps: f64, probes: usize, seed: u64) -> Result<GradCheckReport>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let (loss, analytic) = loss_fn(theta)?;
    if !loss.is_finite() {
        return Err(Error::Numeric(format!("loss is not finite: {loss}")));
    }
    if analytic.len() != theta.len() {
        return Err(Error::Shape(format!(
            "gradient of length {} for {} parameters",
            analytic.len(),
            theta.len()
        )));
    }
    let coords: Vec<usize> = if theta.len() <= probes {
        (0..theta.len()).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut v = sample(&mut rng, theta.len(), probes).into_vec();
        v.sort_unstable();
        v
    };

    let mut work = theta.to_vec();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_index: 0,
        probed: coords.len(),
    };
    for &i in &coords {
        let orig = work[i];
        work[i] = orig + eps;
        let (plus, _) = loss_fn(&work)?;
        work[i] = orig - eps;
        let (minus, _) = loss_fn(&work)?;
        work[i] = orig;
        if !(plus.is_finite() && minus.is_finite()) {
            return Err(Error::Numeric(format!("loss not finite while probing coordinate {i}")));
        }
        let fd = (plus - minus) / (2.0 * eps);
        let err = (analytic[i] - fd).abs() / fd.abs().max(GRAD_FLOOR);
        if err > report.max_rel_error {
            report.max_rel_error = err;
            report.worst_index = i;
        }
    }
    Ok(report)
}
