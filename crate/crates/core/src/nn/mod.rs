//! Minimal dense network: a residual MLP backbone shared by two classifier
//! heads, hand-written reverse-mode gradients, SGD/Adam and a finite-difference
//! gradient checker. All arithmetic is `f64`.

mod embed;
mod gradcheck;
mod mlp;
mod optim;

pub use embed::{embeddings, export_embeddings};
pub use gradcheck::{grad_check, GradCheckReport, DEFAULT_PROBES, GRAD_FLOOR};
pub use mlp::{
    backward, forward, init_mlp, predict_proba, Block, Dense, ForwardTrace, Gradients, Head, HeadMask,
    MlpShape, ModelParams, ParamGroup,
};
pub use optim::{OptState, OptimizerKind, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
