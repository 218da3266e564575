//! Decoupled training.
//!
//! Each step draws a regular batch (`q = 1`) and a class-balanced batch
//! (`q = 0`) and runs both through the shared backbone. The regular head is
//! optimized on the regular batch, the balanced head on the balanced batch, and
//! the backbone on the sum of both. The balanced head is used for inference.
//! Single-stream variants skip the balanced stream and train the regular head.

mod evaluate;
mod fit;
mod objective;
mod runs;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::{CostParams, DahConfig, HeadObjective, LossKind};
use crate::nn::OptimizerKind;

pub use evaluate::{evaluate_probs, positive_scores};
pub use objective::{BatchData, StepObjective};
pub use fit::{train, train_with_probe, EpochRecord, GradProbe, TrainHistory, TrainOutcome, TrainedModel};
pub use runs::{
    run_ablation, sweep_theta, AblationReport, AblationRow, MeanCi, RunResult, ThetaRow, THETA_GRID,
};

/// Ablation variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Cross-entropy, regular stream only.
    Base,
    /// Cross-entropy on both heads, dual stream.
    Decoupling,
    /// Density-aware softmax margin loss, regular stream only.
    Dah,
    /// Focal loss, regular stream only.
    Focal,
    /// Cross-entropy plus the trainable cost-matrix term, regular stream only.
    Cost,
    /// Dual stream, density-aware loss on both heads, cost term on the balanced head.
    Full,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::Base,
        Variant::Cost,
        Variant::Decoupling,
        Variant::Focal,
        Variant::Dah,
        Variant::Full,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Base => "base",
            Variant::Decoupling => "decoupling",
            Variant::Dah => "dah",
            Variant::Focal => "focal",
            Variant::Cost => "cost",
            Variant::Full => "full",
        }
    }

    pub fn is_dual_stream(self) -> bool {
        matches!(self, Variant::Decoupling | Variant::Full)
    }

    pub fn uses_cost(self) -> bool {
        let spec = variant_losses(self);
        spec.regular.cost || spec.balanced.is_some_and(|b| b.cost)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown variant '{s}'; expected one of base, decoupling, dah, focal, cost, full"
                ))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseLoss {
    CrossEntropy,
    Focal,
    DahSoftmax,
}

/// Abstract loss of one head, before hyperparameters are attached.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LossSpec {
    pub base: BaseLoss,
    pub cost: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariantSpec {
    pub regular: LossSpec,
    /// `None` for single-stream variants.
    pub balanced: Option<LossSpec>,
}

/// Loss assignment per head for each variant.
pub fn variant_losses(variant: Variant) -> VariantSpec {
    let spec = |base, cost| LossSpec { base, cost };
    use BaseLoss::*;
    match variant {
        Variant::Base => VariantSpec { regular: spec(CrossEntropy, false), balanced: None },
        Variant::Focal => VariantSpec { regular: spec(Focal, false), balanced: None },
        Variant::Dah => VariantSpec { regular: spec(DahSoftmax, false), balanced: None },
        Variant::Cost => VariantSpec { regular: spec(CrossEntropy, true), balanced: None },
        Variant::Decoupling => VariantSpec {
            regular: spec(CrossEntropy, false),
            balanced: Some(spec(CrossEntropy, false)),
        },
        Variant::Full => VariantSpec {
            regular: spec(DahSoftmax, false),
            balanced: Some(spec(DahSoftmax, true)),
        },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub variant: Variant,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub seed: u64,
    /// Epochs without a validation AUC-ROC gain tolerated before stopping.
    pub early_stop_patience: usize,
    /// Margin scale `K`; by default chosen so the smallest class gets margin 0.5.
    pub margin_k: Option<f64>,
    pub focal_gamma: f64,
    pub theta: f64,
    /// Offset `D` in `C_FN = θ·C_FP + D`.
    pub cost_offset: f64,
    /// Weight of the cost-matrix term added to its head's loss.
    pub cost_weight: f64,
    pub q_regular: f64,
    pub q_balanced: f64,
    pub hidden: usize,
    pub depth: usize,
    /// Unit-normalize the hidden vector and balanced-head weights, scaling
    /// the resulting cosines by this factor.
    pub balanced_cosine_scale: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            variant: Variant::Full,
            epochs: 200,
            batch_size: 64,
            learning_rate: 0.001,
            optimizer: OptimizerKind::Adam,
            seed: 0,
            early_stop_patience: 5,
            margin_k: None,
            focal_gamma: 2.0,
            theta: 5.0,
            cost_offset: 0.01,
            cost_weight: 1.0,
            q_regular: 1.0,
            q_balanced: 0.0,
            hidden: 28,
            depth: 4,
            balanced_cosine_scale: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.batch_size < 1 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        for q in [self.q_regular, self.q_balanced] {
            if !(0.0..=1.0).contains(&q) {
                return Err(Error::Config(format!("q must lie in [0, 1], got {q}")));
            }
        }
        if self.focal_gamma.is_nan() || self.focal_gamma < 0.0 {
            return Err(Error::Config("focal_gamma must be non-negative".into()));
        }
        if !(self.cost_weight >= 0.0 && self.cost_weight.is_finite()) {
            return Err(Error::Config("cost_weight must be non-negative".into()));
        }
        if let Some(s) = self.balanced_cosine_scale {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::Config("balanced_cosine_scale must be positive".into()));
            }
        }
        CostParams::new(self.theta, self.cost_offset)?;
        if let Some(k) = self.margin_k {
            if !(k > 0.0 && k.is_finite()) {
                return Err(Error::Config("margin_k must be positive".into()));
            }
        }
        Ok(())
    }

    pub(crate) fn objective(&self, spec: LossSpec, dah: Option<&DahConfig>) -> Result<HeadObjective> {
        let base = match spec.base {
            BaseLoss::CrossEntropy => LossKind::CrossEntropy,
            BaseLoss::Focal => LossKind::Focal { gamma: self.focal_gamma },
            BaseLoss::DahSoftmax => LossKind::DahSoftmax {
                deltas: dah
                    .ok_or_else(|| Error::Config("margin loss needs class counts".into()))?
                    .deltas
                    .clone(),
            },
        };
        Ok(HeadObjective {
            base,
            cost_weight: spec.cost.then_some(self.cost_weight),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variant_table() {
        let dah = variant_losses(Variant::Dah);
        assert_eq!(dah.regular, LossSpec { base: BaseLoss::DahSoftmax, cost: false });
        assert!(dah.balanced.is_none());

        let full = variant_losses(Variant::Full);
        assert_eq!(full.balanced, Some(LossSpec { base: BaseLoss::DahSoftmax, cost: true }));
        assert!(Variant::Full.is_dual_stream() && Variant::Full.uses_cost());

        let dec = variant_losses(Variant::Decoupling);
        assert_eq!(dec.regular.base, BaseLoss::CrossEntropy);
        assert_eq!(dec.balanced, Some(LossSpec { base: BaseLoss::CrossEntropy, cost: false }));

        assert!(variant_losses(Variant::Base).balanced.is_none());
        assert!(Variant::Cost.uses_cost() && !Variant::Cost.is_dual_stream());
        assert!(!Variant::Focal.uses_cost());
    }

    #[test]
    fn parse_variants() {
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
        }
        assert!(matches!("ours".parse::<Variant>(), Err(Error::Config(_))));
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = [
            TrainConfig { epochs: 0, ..Default::default() },
            TrainConfig { q_balanced: -0.5, ..Default::default() },
            TrainConfig { theta: 0.0, ..Default::default() },
            TrainConfig { cost_offset: -1.0, ..Default::default() },
            TrainConfig { margin_k: Some(0.0), ..Default::default() },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
    }
}
