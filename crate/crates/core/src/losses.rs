//! Objective functions over logit vectors, each returning its value together
//! with the exact gradient with respect to the logits.
//!
//! - [`cross_entropy`] and [`focal`]: baselines.
//! - [`dah_hinge`] / [`dah_softmax`]: density-aware margins `Δ_c = K / N_c^{1/4}`,
//!   larger for smaller classes. The softmax form subtracts `Δ_c` from the
//!   true-class logit before a cross-entropy.
//! - [`cost_loss`]: binary loss on the largest logit with a trainable
//!   false-positive cost `C_FP = exp(log_cfp)` and `C_FN = θ·C_FP + D`.
//!
//! Batch reductions are arithmetic means over rows.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{argmax, log_sum_exp, sigmoid, softmax_into, softplus};

fn check_class(logits: &[f64], y: usize) -> Result<()> {
    if logits.len() < 2 {
        return Err(Error::Validation(format!("need at least 2 logits, got {}", logits.len())));
    }
    if y >= logits.len() {
        return Err(Error::Validation(format!(
            "class {y} out of range for {} logits",
            logits.len()
        )));
    }
    Ok(())
}

/// Per-class margins `K / n_c^{1/4}`.
pub fn delta_margins(class_counts: &[usize], k: f64) -> Result<Vec<f64>> {
    if !(k > 0.0 && k.is_finite()) {
        return Err(Error::Config(format!("margin scale K must be positive, got {k}")));
    }
    if class_counts.contains(&0) {
        return Err(Error::Validation("class counts must be at least 1".into()));
    }
    Ok(class_counts.iter().map(|&n| k / (n as f64).powf(0.25)).collect())
}

/// Margin scale and the resulting per-class margins, from training counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DahConfig {
    pub k: f64,
    pub deltas: Vec<f64>,
}

/// Largest margin produced by the default `K`.
pub const DEFAULT_MAX_MARGIN: f64 = 0.5;

impl DahConfig {
    /// Uses `k` when given; otherwise picks `K` so that the smallest class gets
    /// a margin of [`DEFAULT_MAX_MARGIN`].
    pub fn from_counts(class_counts: &[usize], k: Option<f64>) -> Result<Self> {
        let min = class_counts
            .iter()
            .copied()
            .min()
            .ok_or_else(|| Error::Validation("empty class counts".into()))?;
        let k = k.unwrap_or_else(|| DEFAULT_MAX_MARGIN * (min as f64).powf(0.25));
        Ok(Self {
            deltas: delta_margins(class_counts, k)?,
            k,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FocalConfig {
    pub gamma: f64,
}

impl Default for FocalConfig {
    fn default() -> Self {
        Self { gamma: 2.0 }
    }
}

/// `max(max_{j≠y} z_j − z_y + Δ_y, 0)`.
pub fn dah_hinge(logits: &[f64], y: usize, deltas: &[f64]) -> Result<f64> {
    check_class(logits, y)?;
    if deltas.len() != logits.len() {
        return Err(Error::Shape(format!("{} margins for {} logits", deltas.len(), logits.len())));
    }
    let rival = logits
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != y)
        .map(|(_, &v)| v)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok((rival - logits[y] + deltas[y]).max(0.0))
}

/// Batch mean of [`dah_hinge`].
pub fn dah_hinge_batch(logits: &Array2<f64>, labels: &[usize], deltas: &[f64]) -> Result<f64> {
    check_rows(logits, labels)?;
    let mut total = 0.0;
    for (row, &y) in logits.rows().into_iter().zip(labels) {
        total += dah_hinge(&row.to_vec(), y, deltas)?;
    }
    Ok(total / labels.len() as f64)
}

/// Softmax cross-entropy with the true-class logit lowered by its margin:
/// `−log( e^{z_y−Δ_y} / (e^{z_y−Δ_y} + Σ_{j≠y} e^{z_j}) )`.
pub fn dah_softmax(logits: &[f64], y: usize, deltas: &[f64]) -> Result<(f64, Vec<f64>)> {
    check_class(logits, y)?;
    if deltas.len() != logits.len() {
        return Err(Error::Shape(format!("{} margins for {} logits", deltas.len(), logits.len())));
    }
    let mut shifted = logits.to_vec();
    shifted[y] -= deltas[y];
    Ok(softmax_ce(&shifted, y))
}

fn softmax_ce(z: &[f64], y: usize) -> (f64, Vec<f64>) {
    let mut grad = vec![0.0; z.len()];
    let lse = softmax_into(z, &mut grad);
    grad[y] -= 1.0;
    (lse - z[y], grad)
}

/// `−log softmax(z)_y`.
pub fn cross_entropy(logits: &[f64], y: usize) -> Result<(f64, Vec<f64>)> {
    check_class(logits, y)?;
    Ok(softmax_ce(logits, y))
}

/// `(1 − p_y)^γ · (−log p_y)` with `p = softmax(z)`.
pub fn focal(logits: &[f64], y: usize, gamma: f64) -> Result<(f64, Vec<f64>)> {
    check_class(logits, y)?;
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return Err(Error::Config(format!("focal gamma must be non-negative, got {gamma}")));
    }
    let mut p = vec![0.0; logits.len()];
    let lse = softmax_into(logits, &mut p);
    let ce = lse - logits[y];
    if gamma == 0.0 {
        p[y] -= 1.0;
        return Ok((ce, p));
    }
    // 1 − p_y from the other classes, which stays accurate as p_y → 1
    let rest: f64 = p.iter().enumerate().filter(|&(j, _)| j != y).map(|(_, v)| v).sum();
    let weight = rest.powf(gamma);
    // d(1−p_y)^γ / d(1−p_y); zero at rest = 0 since ce vanishes there too
    let weight_slope = if rest > 0.0 { gamma * rest.powf(gamma - 1.0) } else { 0.0 };
    let py = p[y];
    let grad = p
        .iter()
        .enumerate()
        .map(|(k, &pk)| {
            let onehot = if k == y { 1.0 } else { 0.0 };
            // d(1−p_y)/dz_k = −p_y (δ_yk − p_k); dce/dz_k = p_k − δ_yk
            let d_rest = -py * (onehot - pk);
            weight_slope * d_rest * ce + weight * (pk - onehot)
        })
        .collect();
    Ok((weight * ce, grad))
}

/// Trainable cost-matrix parameters. Only `log_cfp` is learned.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostParams {
    pub log_cfp: f64,
    /// Minimum ratio between false-negative and false-positive cost.
    pub theta: f64,
    /// Non-negative offset `D` making `C_FN > θ·C_FP` strict.
    pub offset: f64,
}

impl CostParams {
    pub fn new(theta: f64, offset: f64) -> Result<Self> {
        if !(theta > 0.0 && theta.is_finite()) {
            return Err(Error::Config(format!("theta must be positive, got {theta}")));
        }
        if !(offset >= 0.0 && offset.is_finite()) {
            return Err(Error::Config(format!("cost offset must be non-negative, got {offset}")));
        }
        Ok(Self {
            log_cfp: 0.0,
            theta,
            offset,
        })
    }

    /// `(C_FP, C_FN)`.
    pub fn current_costs(&self) -> (f64, f64) {
        current_costs(self)
    }
}

/// `(exp(log_cfp), θ·exp(log_cfp) + D)`.
pub fn current_costs(cp: &CostParams) -> (f64, f64) {
    let c_fp = cp.log_cfp.exp();
    (c_fp, cp.theta * c_fp + cp.offset)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostLoss {
    pub loss: f64,
    pub d_logits: Vec<f64>,
    pub d_log_cfp: f64,
}

/// `−y·log σ(C_FN·z_max) − (1−y)·log(1 − σ(C_FP·z_max))` for a binary task,
/// where `z_max` is the largest logit (first one on ties) and class 1 is positive.
pub fn cost_loss(logits: &[f64], y: usize, cp: &CostParams) -> Result<CostLoss> {
    if logits.len() != 2 {
        return Err(Error::UnsupportedTask(format!(
            "the cost-matrix loss is binary only, got {} classes",
            logits.len()
        )));
    }
    check_class(logits, y)?;
    let (c_fp, c_fn) = current_costs(cp);
    let top = argmax(logits);
    let z = logits[top];
    let mut d_logits = vec![0.0; 2];
    let (loss, d_log_cfp) = if y == 1 {
        let a = c_fn * z;
        // dL/da = σ(a) − 1 = −σ(−a)
        let dl_da = -sigmoid(-a);
        d_logits[top] = dl_da * c_fn;
        // dC_FN / dlog_cfp = θ·C_FP
        (softplus(-a), dl_da * z * cp.theta * c_fp)
    } else {
        let a = c_fp * z;
        let dl_da = sigmoid(a);
        d_logits[top] = dl_da * c_fp;
        (softplus(a), dl_da * z * c_fp)
    };
    Ok(CostLoss {
        loss,
        d_logits,
        d_log_cfp,
    })
}

/// Base objective of one classifier head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LossKind {
    CrossEntropy,
    Focal { gamma: f64 },
    DahSoftmax { deltas: Vec<f64> },
}

/// Head objective: a base loss plus an optional `λ·cost_loss` term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadObjective {
    pub base: LossKind,
    pub cost_weight: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchLoss {
    pub loss: f64,
    pub d_logits: Array2<f64>,
    pub d_log_cfp: f64,
}

fn check_rows(logits: &Array2<f64>, labels: &[usize]) -> Result<()> {
    if logits.nrows() != labels.len() || labels.is_empty() {
        return Err(Error::Shape(format!(
            "{} logit rows for {} labels",
            logits.nrows(),
            labels.len()
        )));
    }
    Ok(())
}

/// Mean objective over a batch with gradients for the logits and `log_cfp`.
pub fn batch_loss(
    objective: &HeadObjective,
    logits: &Array2<f64>,
    labels: &[usize],
    cost: Option<&CostParams>,
) -> Result<BatchLoss> {
    check_rows(logits, labels)?;
    let n = labels.len() as f64;
    let mut d_logits = Array2::zeros(logits.dim());
    let mut loss = 0.0;
    let mut d_log_cfp = 0.0;
    let cost_term = match (objective.cost_weight, cost) {
        (Some(w), Some(cp)) => Some((w, cp)),
        (Some(_), None) => return Err(Error::Config("objective needs cost parameters".into())),
        (None, _) => None,
    };

    for (i, &y) in labels.iter().enumerate() {
        let z = logits.row(i).to_vec();
        let (l, g) = match &objective.base {
            LossKind::CrossEntropy => cross_entropy(&z, y)?,
            LossKind::Focal { gamma } => focal(&z, y, *gamma)?,
            LossKind::DahSoftmax { deltas } => dah_softmax(&z, y, deltas)?,
        };
        loss += l;
        let mut row = d_logits.row_mut(i);
        row.iter_mut().zip(&g).for_each(|(d, v)| *d = v / n);
        if let Some((w, cp)) = cost_term {
            let c = cost_loss(&z, y, cp)?;
            loss += w * c.loss;
            row.iter_mut().zip(&c.d_logits).for_each(|(d, v)| *d += w * v / n);
            d_log_cfp += w * c.d_log_cfp / n;
        }
    }
    Ok(BatchLoss {
        loss: loss / n,
        d_logits,
        d_log_cfp,
    })
}

/// Mean log-sum-exp minus true logit, i.e. softmax negative log-likelihood.
pub fn mean_nll(logits: &Array2<f64>, labels: &[usize]) -> Result<f64> {
    check_rows(logits, labels)?;
    let mut total = 0.0;
    for (row, &y) in logits.rows().into_iter().zip(labels) {
        let z = row.to_vec();
        check_class(&z, y)?;
        total += log_sum_exp(&z) - z[y];
    }
    Ok(total / labels.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Independent oracles written from the textbook definitions.
    mod oracle {
        pub fn softmax(z: &[f64]) -> Vec<f64> {
            let e: Vec<f64> = z.iter().map(|v| v.exp()).collect();
            let s: f64 = e.iter().sum();
            e.iter().map(|v| v / s).collect()
        }

        pub fn ce(z: &[f64], y: usize) -> f64 {
            -softmax(z)[y].ln()
        }

        pub fn binary_ce(z_max: f64, y: usize) -> f64 {
            let s = 1.0 / (1.0 + (-z_max).exp());
            if y == 1 {
                -s.ln()
            } else {
                -(1.0 - s).ln()
            }
        }
    }

    fn fd_logits(f: impl Fn(&[f64]) -> f64, z: &[f64]) -> Vec<f64> {
        let eps = 1e-6;
        (0..z.len())
            .map(|k| {
                let mut a = z.to_vec();
                let mut b = z.to_vec();
                a[k] += eps;
                b[k] -= eps;
                (f(&a) - f(&b)) / (2.0 * eps)
            })
            .collect()
    }

    fn assert_close(a: &[f64], b: &[f64], tol: f64) {
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() <= tol * (1.0 + y.abs()), "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn margins() {
        assert_eq!(delta_margins(&[16], 1.0).unwrap(), vec![0.5]);
        assert_eq!(delta_margins(&[1], 1.0).unwrap(), vec![1.0]);
        assert_eq!(delta_margins(&[625, 16], 0.5).unwrap(), vec![0.1, 0.25]);
        assert!(delta_margins(&[4], 0.0).is_err());
        let cfg = DahConfig::from_counts(&[720, 80], None).unwrap();
        assert!((cfg.deltas[1] - 0.5).abs() < 1e-15);
        assert!(cfg.deltas[0] < cfg.deltas[1]);
    }

    #[test]
    fn hinge_values() {
        assert_eq!(dah_hinge(&[2.0, 1.0], 0, &[0.5, 0.5]).unwrap(), 0.0);
        assert_eq!(dah_hinge(&[1.0, 2.0], 0, &[0.5, 0.5]).unwrap(), 1.5);
        assert!((dah_hinge(&[0.0, 0.0, 0.0], 2, &[0.1, 0.2, 0.3]).unwrap() - 0.3).abs() < 1e-15);
        assert!(dah_hinge(&[0.0, 0.0], 2, &[0.1, 0.2]).is_err());
    }

    #[test]
    fn softmax_margin_hand_value() {
        let (l, _) = dah_softmax(&[0.0, 0.0], 0, &[2f64.ln(), 0.0]).unwrap();
        assert!((l - 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn ce_and_focal_values() {
        let (l, g) = cross_entropy(&[0.0, 0.0], 0).unwrap();
        assert!((l - 2f64.ln()).abs() < 1e-15);
        assert_close(&g, &[-0.5, 0.5], 1e-15);
        let (f, _) = focal(&[10.0, -10.0], 0, 2.0).unwrap();
        assert!(f < 1e-8);
        assert!(focal(&[0.0, 1.0], 0, -1.0).is_err());
    }

    #[test]
    fn translation_invariance() {
        let z = [0.3, -1.2, 2.0];
        let d = [0.1, 0.4, 0.2];
        let (a, _) = dah_softmax(&z, 1, &d).unwrap();
        let shifted: Vec<f64> = z.iter().map(|v| v + 17.5).collect();
        let (b, _) = dah_softmax(&shifted, 1, &d).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn costs_respect_constraints() {
        let cp = CostParams { log_cfp: 0.0, theta: 5.0, offset: 0.01 };
        assert_eq!(current_costs(&cp), (1.0, 5.01));
        let tiny = CostParams { log_cfp: -100.0, ..cp };
        let (fp, fnc) = current_costs(&tiny);
        assert!(fp > 0.0 && fnc > 0.0 && fnc >= 5.0 * fp);
        assert!(CostParams::new(0.0, 0.1).is_err());
        assert!(CostParams::new(1.0, -0.1).is_err());
    }

    #[test]
    fn cost_loss_special_cases() {
        let unit = CostParams { log_cfp: 0.0, theta: 1.0, offset: 0.0 };
        for (z, y) in [([0.3, -0.2], 1), ([-1.0, 2.5], 0), ([4.0, 4.0], 1)] {
            let c = cost_loss(&z, y, &unit).unwrap();
            let zmax = z[0].max(z[1]);
            assert!((c.loss - oracle::binary_ce(zmax, y)).abs() < 1e-12);
        }
        let big = CostParams { log_cfp: 1.3, theta: 25.0, offset: 0.5 };
        let c = cost_loss(&[0.0, -3.0], 1, &big).unwrap();
        assert!((c.loss - 2f64.ln()).abs() < 1e-15);
        assert!(matches!(
            cost_loss(&[0.0, 1.0, 2.0], 1, &big),
            Err(Error::UnsupportedTask(_))
        ));
    }

    #[test]
    fn cost_gradient_routes_to_first_max() {
        let cp = CostParams { log_cfp: 0.2, theta: 5.0, offset: 0.01 };
        let c = cost_loss(&[1.0, 1.0], 0, &cp).unwrap();
        assert!(c.d_logits[0] != 0.0);
        assert_eq!(c.d_logits[1], 0.0);
    }

    #[test]
    fn batch_mean_and_cost_term() {
        let logits = ndarray::array![[0.5, -0.5], [1.0, 2.0], [-0.3, 0.1]];
        let labels = [0, 1, 1];
        let cp = CostParams { log_cfp: -0.4, theta: 5.0, offset: 0.01 };
        let obj = HeadObjective { base: LossKind::CrossEntropy, cost_weight: Some(0.7) };
        let b = batch_loss(&obj, &logits, &labels, Some(&cp)).unwrap();
        let mut expect = 0.0;
        for (i, &y) in labels.iter().enumerate() {
            let z = logits.row(i).to_vec();
            expect += oracle::ce(&z, y) + 0.7 * cost_loss(&z, y, &cp).unwrap().loss;
        }
        assert!((b.loss - expect / 3.0).abs() < 1e-12);
        assert!(batch_loss(&obj, &logits, &labels, None).is_err());
        assert!(batch_loss(&obj, &logits, &labels[..2], Some(&cp)).is_err());
    }

    proptest! {
        #[test]
        fn gradients_match_finite_differences(
            z in prop::collection::vec(-4.0f64..4.0, 2..5),
            yi in any::<prop::sample::Index>(),
            gamma in 0.0f64..4.0,
            d in prop::collection::vec(0.0f64..1.5, 5),
        ) {
            let y = yi.index(z.len());
            let deltas = &d[..z.len()];
            let (_, g) = cross_entropy(&z, y).unwrap();
            assert_close(&g, &fd_logits(|v| cross_entropy(v, y).unwrap().0, &z), 1e-6);
            let (_, g) = focal(&z, y, gamma).unwrap();
            assert_close(&g, &fd_logits(|v| focal(v, y, gamma).unwrap().0, &z), 1e-6);
            let (_, g) = dah_softmax(&z, y, deltas).unwrap();
            assert_close(&g, &fd_logits(|v| dah_softmax(v, y, deltas).unwrap().0, &z), 1e-6);
        }

        #[test]
        fn cost_gradients_match_finite_differences(
            z0 in -3.0f64..3.0,
            gap in 0.01f64..3.0,
            flip in any::<bool>(),
            y in 0usize..2,
            log_cfp in -2.0f64..2.0,
            theta in prop::sample::select(vec![1.0, 5.0, 10.0, 25.0, 50.0, 100.0]),
        ) {
            let z = if flip { [z0, z0 - gap] } else { [z0 - gap, z0] };
            let cp = CostParams { log_cfp, theta, offset: 0.01 };
            let c = cost_loss(&z, y, &cp).unwrap();
            assert_close(&c.d_logits, &fd_logits(|v| cost_loss(v, y, &cp).unwrap().loss, &z), 1e-6);
            let eps = 1e-6;
            let plus = cost_loss(&z, y, &CostParams { log_cfp: log_cfp + eps, ..cp }).unwrap().loss;
            let minus = cost_loss(&z, y, &CostParams { log_cfp: log_cfp - eps, ..cp }).unwrap().loss;
            let fd = (plus - minus) / (2.0 * eps);
            prop_assert!((c.d_log_cfp - fd).abs() / fd.abs().max(1e-8) < 1e-6 || (c.d_log_cfp - fd).abs() < 1e-12);
        }

        #[test]
        fn reductions_to_cross_entropy(z in prop::collection::vec(-10.0f64..10.0, 2..6), yi in any::<prop::sample::Index>()) {
            let y = yi.index(z.len());
            let zeros = vec![0.0; z.len()];
            let ce = oracle::ce(&z, y);
            prop_assert!((dah_softmax(&z, y, &zeros).unwrap().0 - ce).abs() < 1e-12);
            prop_assert!((focal(&z, y, 0.0).unwrap().0 - ce).abs() < 1e-12);
            prop_assert!((cross_entropy(&z, y).unwrap().0 - ce).abs() < 1e-12);
        }

        #[test]
        fn margin_strictly_increases_loss(
            z in prop::collection::vec(-5.0f64..5.0, 2..5),
            yi in any::<prop::sample::Index>(),
            lo in 0.0f64..2.0,
            step in 0.01f64..1.0,
        ) {
            let y = yi.index(z.len());
            let mut d = vec![0.0; z.len()];
            d[y] = lo;
            let a = dah_softmax(&z, y, &d).unwrap().0;
            d[y] = lo + step;
            let b = dah_softmax(&z, y, &d).unwrap().0;
            prop_assert!(b > a);
        }

        #[test]
        fn smaller_class_gets_larger_margin(a in 1usize..100_000, b in 1usize..100_000, k in 0.01f64..5.0) {
            prop_assume!(a != b);
            let d = delta_margins(&[a, b], k).unwrap();
            prop_assert_eq!(a < b, d[0] > d[1]);
        }

        #[test]
        fn softmax_form_approaches_hinge(
            z in prop::collection::vec(-2.0f64..2.0, 2..4),
            yi in any::<prop::sample::Index>(),
            d in prop::collection::vec(0.05f64..1.0, 4),
        ) {
            let y = yi.index(z.len());
            let deltas = &d[..z.len()];
            let hinge = dah_hinge(&z, y, deltas).unwrap();
            // the gap is at most ln|C|/t, so compare where the hinge is active
            prop_assume!(hinge > 0.3);
            let t = 100.0;
            let zt: Vec<f64> = z.iter().map(|v| v * t).collect();
            let dt: Vec<f64> = deltas.iter().map(|v| v * t).collect();
            let soft = dah_softmax(&zt, y, &dt).unwrap().0 / t;
            prop_assert!((soft - hinge).abs() <= 0.05 * hinge, "{} vs {}", soft, hinge);
        }
    }
}
