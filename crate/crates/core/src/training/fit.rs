use std::time::Instant;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::evaluate::evaluate_probs;
use super::{variant_losses, TrainConfig, Variant};
use crate::data::Dataset;
use crate::error::{Error, Result};
use super::objective::{step_eval, BatchData};
use crate::losses::{CostParams, DahConfig, HeadObjective, LossKind};
use crate::math::softmax_rows;
use crate::nn::{forward, init_mlp, Gradients, Head, MlpShape, ModelParams, OptState, ParamGroup};
use crate::sampling::{SamplerConfig, SamplerState};

/// Offsets the sampler stream from the weight initialization stream.
const SAMPLER_SEED_SALT: u64 = 0x5DEE_CE66_D1CE_4E5B;

/// Parameters plus everything needed to use them for prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub variant: Variant,
    pub params: ModelParams,
    pub cost: Option<CostParams>,
    pub dah: Option<DahConfig>,
}

impl TrainedModel {
    /// The balanced head for dual-stream variants, otherwise the regular head.
    pub fn inference_head(&self) -> Head {
        if self.variant.is_dual_stream() {
            Head::Balanced
        } else {
            Head::Regular
        }
    }

    pub fn logits(&self, x: &Array2<f64>, head: Option<Head>) -> Result<Array2<f64>> {
        let head = self.resolve_head(head)?;
        Ok(forward(&self.params, x)?.logits(head).clone())
    }

    /// Softmax probabilities of the chosen head (default: the inference head).
    pub fn predict(&self, x: &Array2<f64>, head: Option<Head>) -> Result<Array2<f64>> {
        Ok(softmax_rows(&self.logits(x, head)?))
    }

    fn resolve_head(&self, head: Option<Head>) -> Result<Head> {
        match head {
            None => Ok(self.inference_head()),
            Some(Head::Balanced) if !self.variant.is_dual_stream() => Err(Error::Config(format!(
                "variant '{}' has no trained balanced head",
                self.variant
            ))),
            Some(h) => Ok(h),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub loss_regular: f64,
    pub loss_balanced: Option<f64>,
    pub val_auc_roc: f64,
    pub val_auc_prc: f64,
    pub c_fp: Option<f64>,
    pub c_fn: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
    #[serde(skip)]
    pub wall_time_secs: f64,
}

impl TrainHistory {
    pub fn best(&self) -> &EpochRecord {
        &self.epochs[self.best_epoch - 1]
    }

    /// CSV: `epoch,loss_regular,loss_balanced,val_auc_roc,val_auc_prc,c_fp,c_fn`.
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut out = String::from("epoch,loss_regular,loss_balanced,val_auc_roc,val_auc_prc,c_fp,c_fn\n");
        for r in &self.epochs {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.epoch,
                r.loss_regular,
                opt(r.loss_balanced),
                r.val_auc_roc,
                r.val_auc_prc,
                opt(r.c_fp),
                opt(r.c_fn)
            ));
        }
        out
    }
}

/// Callback receiving the regular-batch and balanced-batch gradients of one step.
pub type GradProbe<'a> = &'a mut dyn FnMut(&Gradients, &Gradients);

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: TrainedModel,
    pub history: TrainHistory,
}

struct StepLosses {
    regular: f64,
    balanced: Option<f64>,
}

struct Trainer<'a> {
    cfg: &'a TrainConfig,
    regular: HeadObjective,
    balanced: Option<HeadObjective>,
    params: ModelParams,
    cost: Option<CostParams>,
    opt: OptState,
    /// Observes every step's per-head gradients; used to probe head isolation.
    probe: Option<GradProbe<'a>>,
}

impl Trainer<'_> {
    fn step(&mut self, regular: BatchData<'_>, balanced: Option<BatchData<'_>>) -> Result<StepLosses> {
        let eval = step_eval(
            &self.params,
            self.cost.as_ref(),
            &self.regular,
            self.balanced.as_ref(),
            regular,
            balanced,
        )?;
        let losses = StepLosses {
            regular: eval.loss_regular,
            balanced: eval.loss_balanced,
        };
        if !losses.regular.is_finite() || losses.balanced.is_some_and(|l| !l.is_finite()) {
            return Err(Error::NonFinite {
                epoch: 0,
                step: 0,
                loss_regular: losses.regular,
                loss_balanced: losses.balanced.unwrap_or(f64::NAN),
                costs: self.cost.map(|c| c.current_costs()),
            });
        }
        let mut grads = eval.grads_regular;
        if let Some(bal) = &eval.grads_balanced {
            if let Some(probe) = self.probe.as_mut() {
                probe(&grads, bal);
            }
            grads.accumulate(bal);
        }
        let cost_slot = self.cost.as_mut().map(|c| (&mut c.log_cfp, eval.d_log_cfp));
        self.opt.opt_step(&mut self.params, &grads, cost_slot)?;
        Ok(losses)
    }
}

/// Trains `cfg.variant` on `train`, selecting the epoch with the best
/// validation AUC-ROC of the inference head. Stops once
/// `early_stop_patience` consecutive epochs fail to improve it.
pub fn train(cfg: &TrainConfig, train: &Dataset, val: &Dataset) -> Result<TrainOutcome> {
    train_with_probe(cfg, train, val, None)
}

/// [`train`] with a callback receiving, for every dual-stream step, the
/// gradients of the regular-batch loss and of the balanced-batch loss.
pub fn train_with_probe<'a>(
    cfg: &'a TrainConfig,
    train: &Dataset,
    val: &Dataset,
    probe: Option<GradProbe<'a>>,
) -> Result<TrainOutcome> {
    let started = Instant::now();
    cfg.validate()?;
    if train.has_missing() || val.has_missing() {
        return Err(Error::Validation("training data must be preprocessed (missing values found)".into()));
    }
    if train.n_features() != val.n_features() || train.n_classes() != val.n_classes() {
        return Err(Error::Shape("training and validation splits disagree in shape".into()));
    }
    let spec = variant_losses(cfg.variant);
    if cfg.variant.uses_cost() && train.n_classes() != 2 {
        return Err(Error::UnsupportedTask(format!(
            "variant '{}' uses the cost matrix, which needs a binary task",
            cfg.variant
        )));
    }

    let dah = DahConfig::from_counts(train.class_counts(), cfg.margin_k)?;
    let regular = cfg.objective(spec.regular, Some(&dah))?;
    let balanced = spec.balanced.map(|s| cfg.objective(s, Some(&dah))).transpose()?;
    let uses_margin = matches!(regular.base, LossKind::DahSoftmax { .. })
        || balanced
            .as_ref()
            .is_some_and(|b| matches!(b.base, LossKind::DahSoftmax { .. }));

    let shape = MlpShape {
        input_dim: train.n_features(),
        hidden: cfg.hidden,
        depth: cfg.depth,
        n_classes: train.n_classes(),
    };
    let mut params = init_mlp(shape, cfg.seed)?;
    params.balanced_cosine_scale = cfg.balanced_cosine_scale;
    let cost = cfg
        .variant
        .uses_cost()
        .then(|| CostParams::new(cfg.theta, cfg.cost_offset))
        .transpose()?;

    let mut opt = OptState::new(cfg.optimizer, cfg.learning_rate);
    let dual = cfg.variant.is_dual_stream();
    opt.set_group(ParamGroup::HeadBalanced, dual);
    opt.set_group(ParamGroup::Cost, cost.is_some());

    let mut sampler = SamplerState::new(
        SamplerConfig {
            batch_size: cfg.batch_size,
            seed: cfg.seed ^ SAMPLER_SEED_SALT,
            q_regular: cfg.q_regular,
            q_balanced: cfg.q_balanced,
        },
        train,
    )?;

    let mut trainer = Trainer {
        cfg,
        regular,
        balanced,
        params,
        cost,
        opt,
        probe,
    };
    let inference_head = if dual { Head::Balanced } else { Head::Regular };

    let mut history = TrainHistory {
        epochs: Vec::new(),
        best_epoch: 0,
        wall_time_secs: 0.0,
    };
    let mut best: Option<(f64, ModelParams, Option<CostParams>)> = None;
    let mut stale = 0usize;

    for epoch in 1..=trainer.cfg.epochs {
        let steps = sampler.steps_per_epoch();
        let (mut sum_reg, mut sum_bal) = (0.0, 0.0);
        for step in 1..=steps {
            let losses = if dual {
                let pair = sampler.next_batch_pair(train)?;
                trainer.step(
                    (&pair.regular.features, &pair.regular.labels[..]),
                    Some((&pair.balanced.features, &pair.balanced.labels[..])),
                )
            } else {
                let batch = sampler.next_regular(train)?;
                trainer.step((&batch.features, &batch.labels[..]), None)
            };
            let losses = losses.map_err(|e| match e {
                Error::NonFinite { loss_regular, loss_balanced, costs, .. } => Error::NonFinite {
                    epoch,
                    step,
                    loss_regular,
                    loss_balanced,
                    costs,
                },
                other => other,
            })?;
            sum_reg += losses.regular;
            sum_bal += losses.balanced.unwrap_or(0.0);
        }

        let probs = softmax_rows(forward(&trainer.params, val.features())?.logits(inference_head));
        let val_metrics = evaluate_probs(&probs, val.labels())?;
        let costs = trainer.cost.map(|c| c.current_costs());
        history.epochs.push(EpochRecord {
            epoch,
            loss_regular: sum_reg / steps as f64,
            loss_balanced: dual.then(|| sum_bal / steps as f64),
            val_auc_roc: val_metrics.auc_roc,
            val_auc_prc: val_metrics.auc_prc,
            c_fp: costs.map(|c| c.0),
            c_fn: costs.map(|c| c.1),
        });

        let previous = best.as_ref().map(|(score, _, _)| *score);
        if previous.is_none_or(|score| val_metrics.auc_roc >= score) {
            best = Some((val_metrics.auc_roc, trainer.params.clone(), trainer.cost));
            history.best_epoch = epoch;
        }
        if previous.is_none_or(|score| val_metrics.auc_roc > score) {
            stale = 0;
        } else {
            stale += 1;
            if stale > trainer.cfg.early_stop_patience {
                break;
            }
        }
    }

    let (_, params, cost) = best.expect("at least one epoch ran");
    history.wall_time_secs = started.elapsed().as_secs_f64();
    log::debug!(
        "{}: best epoch {} of {} (val AUC-ROC {:.4})",
        cfg.variant,
        history.best_epoch,
        history.epochs.len(),
        history.best().val_auc_roc
    );
    Ok(TrainOutcome {
        model: TrainedModel {
            variant: cfg.variant,
            params,
            cost,
            dah: uses_margin.then_some(dah),
        },
        history,
    })
}
