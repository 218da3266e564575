use serde::{Deserialize, Serialize};

use super::mlp::{Gradients, ModelParams, ParamGroup};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Optimizer state for the network parameters and, optionally, the scalar
/// log false-positive cost.
#[derive(Debug, Clone)]
pub struct OptState {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    backbone: bool,
    head_regular: bool,
    head_balanced: bool,
    cost: bool,
}

impl OptState {
    pub fn new(kind: OptimizerKind, learning_rate: f64) -> Self {
        Self {
            kind,
            learning_rate,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
            backbone: true,
            head_regular: true,
            head_balanced: true,
            cost: true,
        }
    }

    /// Enables or freezes a parameter group. Frozen groups are never updated.
    pub fn set_group(&mut self, group: ParamGroup, enabled: bool) {
        match group {
            ParamGroup::Backbone => self.backbone = enabled,
            ParamGroup::HeadRegular => self.head_regular = enabled,
            ParamGroup::HeadBalanced => self.head_balanced = enabled,
            ParamGroup::Cost => self.cost = enabled,
        }
    }

    pub fn is_enabled(&self, group: ParamGroup) -> bool {
        match group {
            ParamGroup::Backbone => self.backbone,
            ParamGroup::HeadRegular => self.head_regular,
            ParamGroup::HeadBalanced => self.head_balanced,
            ParamGroup::Cost => self.cost,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Applies one update. `cost` pairs the trainable `log C_FP` with its gradient.
    pub fn opt_step(
        &mut self,
        params: &mut ModelParams,
        grads: &Gradients,
        cost: Option<(&mut f64, f64)>,
    ) -> Result<()> {
        let grad_tensors = grads.tensors();
        let mut slots: Vec<(ParamGroup, &mut [f64], &[f64])> = params
            .tensors_mut()
            .into_iter()
            .zip(grad_tensors)
            .map(|((g, p), (_, d))| (g, p, d))
            .collect();
        let cost_grad;
        if let Some((log_cfp, g)) = cost {
            cost_grad = [g];
            slots.push((ParamGroup::Cost, std::slice::from_mut(log_cfp), &cost_grad));
        }
        self.apply(slots)
    }

    /// Generic update over `(group, parameters, gradients)` slots. The slot
    /// layout must stay the same across calls.
    pub fn apply(&mut self, slots: Vec<(ParamGroup, &mut [f64], &[f64])>) -> Result<()> {
        for (_, p, g) in &slots {
            if p.len() != g.len() {
                return Err(Error::Shape(format!(
                    "parameter slot of {} with gradient of {}",
                    p.len(),
                    g.len()
                )));
            }
        }
        self.step += 1;
        if self.kind == OptimizerKind::Adam && self.first.len() != slots.len() {
            if !self.first.is_empty() {
                return Err(Error::Shape("optimizer slot layout changed".into()));
            }
            self.first = slots.iter().map(|(_, p, _)| vec![0.0; p.len()]).collect();
            self.second = self.first.clone();
        }
        let lr = self.learning_rate;
        let t = self.step as i32;
        let bias1 = 1.0 - ADAM_BETA1.powi(t);
        let bias2 = 1.0 - ADAM_BETA2.powi(t);

        for (k, (group, params, grads)) in slots.into_iter().enumerate() {
            if !self.is_enabled(group) {
                continue;
            }
            match self.kind {
                OptimizerKind::Sgd => {
                    for (p, g) in params.iter_mut().zip(grads) {
                        *p -= lr * g;
                    }
                }
                OptimizerKind::Adam => {
                    let (m, v) = (&mut self.first[k], &mut self.second[k]);
                    if m.len() != params.len() {
                        return Err(Error::Shape("optimizer slot layout changed".into()));
                    }
                    for i in 0..params.len() {
                        let g = grads[i];
                        m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g;
                        v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g * g;
                        let m_hat = m[i] / bias1;
                        let v_hat = v[i] / bias2;
                        params[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sgd_scalar() {
        let mut opt = OptState::new(OptimizerKind::Sgd, 0.1);
        let mut p = [1.0];
        opt.apply(vec![(ParamGroup::Backbone, &mut p, &[2.0])]).unwrap();
        assert!((p[0] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn adam_first_step_is_learning_rate() {
        for g in [1e-3, 1.0, 250.0, -7.0] {
            let mut opt = OptState::new(OptimizerKind::Adam, 0.001);
            let mut p = [0.0];
            opt.apply(vec![(ParamGroup::Backbone, &mut p, &[g])]).unwrap();
            // lr * g / (|g| + eps)
            let expect = -0.001 * g / (g.abs() + ADAM_EPS);
            assert!((p[0] - expect).abs() < 1e-15, "{g}: {}", p[0]);
            assert!((p[0].abs() - 0.001).abs() < 1e-8);
        }
    }

    #[test]
    fn adam_constant_gradient_keeps_unit_ratio() {
        let mut opt = OptState::new(OptimizerKind::Adam, 0.01);
        let mut p = [0.0];
        for _ in 0..10 {
            let before = p[0];
            opt.apply(vec![(ParamGroup::Backbone, &mut p, &[3.0])]).unwrap();
            assert!(((before - p[0]) - 0.01).abs() < 1e-9);
        }
        assert_eq!(opt.steps_taken(), 10);
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        for kind in [OptimizerKind::Sgd, OptimizerKind::Adam] {
            let mut opt = OptState::new(kind, 0.1);
            let mut p = [1.5, -2.0];
            opt.apply(vec![(ParamGroup::Backbone, &mut p, &[0.0, 0.0])]).unwrap();
            assert_eq!(p, [1.5, -2.0]);
        }
    }

    #[test]
    fn frozen_group_untouched() {
        let mut opt = OptState::new(OptimizerKind::Sgd, 0.1);
        opt.set_group(ParamGroup::HeadBalanced, false);
        let mut a = [1.0];
        let mut b = [1.0];
        opt.apply(vec![
            (ParamGroup::HeadRegular, &mut a, &[1.0]),
            (ParamGroup::HeadBalanced, &mut b, &[1.0]),
        ])
        .unwrap();
        assert_eq!(a, [0.9]);
        assert_eq!(b, [1.0]);
    }

    #[test]
    fn mismatched_slot() {
        let mut opt = OptState::new(OptimizerKind::Sgd, 0.1);
        let mut p = [1.0, 2.0];
        assert!(opt.apply(vec![(ParamGroup::Backbone, &mut p, &[1.0])]).is_err());
    }
}
