use ndarray::Array2;

use super::{variant_losses, TrainConfig};
use crate::error::{Error, Result};
use crate::losses::{batch_loss, CostParams, DahConfig, HeadObjective};
use crate::nn::{backward, forward, Gradients, HeadMask, ModelParams};

/// Rows and class indices of one batch.
pub type BatchData<'a> = (&'a Array2<f64>, &'a [usize]);

pub(crate) struct StepEval {
    pub loss_regular: f64,
    pub loss_balanced: Option<f64>,
    pub grads_regular: Gradients,
    pub grads_balanced: Option<Gradients>,
    pub d_log_cfp: f64,
}

/// Losses and gradients of one training step. The regular head sees only the
/// regular batch and the balanced head only the balanced batch; the backbone
/// receives both.
pub(crate) fn step_eval(
    params: &ModelParams,
    cost: Option<&CostParams>,
    regular: &HeadObjective,
    balanced: Option<&HeadObjective>,
    reg_batch: BatchData<'_>,
    bal_batch: Option<BatchData<'_>>,
) -> Result<StepEval> {
    let k = params.n_classes();
    let trace = forward(params, reg_batch.0)?;
    let reg = batch_loss(regular, &trace.logits_regular, reg_batch.1, cost)?;
    let zeros = Array2::zeros((reg_batch.1.len(), k));
    let grads_regular = backward(params, &trace, &reg.d_logits, &zeros, HeadMask::REGULAR)?;
    let mut eval = StepEval {
        loss_regular: reg.loss,
        loss_balanced: None,
        grads_regular,
        grads_balanced: None,
        d_log_cfp: reg.d_log_cfp,
    };
    match (balanced, bal_batch) {
        (Some(objective), Some((x, y))) => {
            let trace = forward(params, x)?;
            let bal = batch_loss(objective, &trace.logits_balanced, y, cost)?;
            let zeros = Array2::zeros((y.len(), k));
            eval.grads_balanced = Some(backward(params, &trace, &zeros, &bal.d_logits, HeadMask::BALANCED)?);
            eval.loss_balanced = Some(bal.loss);
            eval.d_log_cfp += bal.d_log_cfp;
        }
        (None, None) => {}
        _ => return Err(Error::Config("balanced batch and balanced objective must come together".into())),
    }
    Ok(eval)
}

/// The summed objective of one training step as a function of a flat vector
/// holding every network parameter followed, for cost variants, by `log_cfp`.
#[derive(Debug, Clone)]
pub struct StepObjective {
    template: ModelParams,
    cost: Option<CostParams>,
    regular: HeadObjective,
    balanced: Option<HeadObjective>,
    reg_batch: (Array2<f64>, Vec<usize>),
    bal_batch: Option<(Array2<f64>, Vec<usize>)>,
}

impl StepObjective {
    /// `balanced` must be given exactly when `cfg.variant` is dual-stream.
    pub fn new(
        cfg: &TrainConfig,
        class_counts: &[usize],
        params: ModelParams,
        regular: (Array2<f64>, Vec<usize>),
        balanced: Option<(Array2<f64>, Vec<usize>)>,
    ) -> Result<Self> {
        cfg.validate()?;
        params.validate()?;
        let spec = variant_losses(cfg.variant);
        if spec.balanced.is_some() != balanced.is_some() {
            return Err(Error::Config(format!(
                "variant '{}' {} a balanced batch",
                cfg.variant,
                if spec.balanced.is_some() { "needs" } else { "takes no" }
            )));
        }
        if cfg.variant.uses_cost() && params.n_classes() != 2 {
            return Err(Error::UnsupportedTask("cost-matrix loss needs a binary task".into()));
        }
        let dah = DahConfig::from_counts(class_counts, cfg.margin_k)?;
        Ok(Self {
            regular: cfg.objective(spec.regular, Some(&dah))?,
            balanced: spec.balanced.map(|s| cfg.objective(s, Some(&dah))).transpose()?,
            cost: cfg
                .variant
                .uses_cost()
                .then(|| CostParams::new(cfg.theta, cfg.cost_offset))
                .transpose()?,
            template: params,
            reg_batch: regular,
            bal_batch: balanced,
        })
    }

    /// Starts `log_cfp` somewhere other than 0; ignored without a cost term.
    pub fn with_log_cfp(mut self, log_cfp: f64) -> Self {
        if let Some(c) = self.cost.as_mut() {
            c.log_cfp = log_cfp;
        }
        self
    }

    pub fn theta(&self) -> Vec<f64> {
        let mut v = self.template.to_flat();
        v.extend(self.cost.map(|c| c.log_cfp));
        v
    }

    pub fn evaluate(&self, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
        let n = self.template.n_params();
        let expected = n + usize::from(self.cost.is_some());
        if theta.len() != expected {
            return Err(Error::Shape(format!("expected {expected} parameters, got {}", theta.len())));
        }
        let mut params = self.template.clone();
        params.set_flat(&theta[..n])?;
        let cost = self.cost.map(|c| CostParams { log_cfp: theta[n], ..c });
        let eval = step_eval(
            &params,
            cost.as_ref(),
            &self.regular,
            self.balanced.as_ref(),
            (&self.reg_batch.0, &self.reg_batch.1),
            self.bal_batch.as_ref().map(|(x, y)| (x, y.as_slice())),
        )?;
        let mut grads = eval.grads_regular;
        if let Some(g) = &eval.grads_balanced {
            grads.accumulate(g);
        }
        let mut flat = grads.0.to_flat();
        if cost.is_some() {
            flat.push(eval.d_log_cfp);
        }
        Ok((eval.loss_regular + eval.loss_balanced.unwrap_or(0.0), flat))
    }
}
