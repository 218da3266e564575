//! Small numerically careful scalar helpers shared by losses, metrics and the network.

use ndarray::{Array2, ArrayView1, Axis};

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
pub(crate) fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub(crate) fn log_sum_exp(z: &[f64]) -> f64 {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + z.iter().map(|&v| (v - m).exp()).sum::<f64>().ln()
}

/// Softmax into `out`, returning log-sum-exp of `z`.
pub(crate) fn softmax_into(z: &[f64], out: &mut [f64]) -> f64 {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (o, &v) in out.iter_mut().zip(z) {
        *o = (v - m).exp();
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
    m + total.ln()
}

pub(crate) fn softmax(z: ArrayView1<'_, f64>) -> Vec<f64> {
    let z: Vec<f64> = z.to_vec();
    let mut out = vec![0.0; z.len()];
    softmax_into(&z, &mut out);
    out
}

pub(crate) fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.axis_iter_mut(Axis(0)) {
        let p = softmax(row.view());
        row.iter_mut().zip(p).for_each(|(o, v)| *o = v);
    }
    out
}

/// Index of the first maximal entry.
pub(crate) fn argmax(z: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in z.iter().enumerate() {
        if v > z[best] {
            best = i;
        }
    }
    best
}
