use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::softmax_rows;

/// Keeps the cosine head defined when a hidden vector or weight column is all zeros.
const NORM_FLOOR: f64 = 1e-12;

/// Fully connected layer computing `x · weight + bias`; `weight` is `in × out`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            weight: Array2::zeros((fan_in, fan_out)),
            bias: Array1::zeros(fan_out),
        }
    }

    fn uniform(fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = 1.0 / (fan_in as f64).sqrt();
        Self {
            weight: Array2::from_shape_simple_fn((fan_in, fan_out), || rng.random_range(-bound..bound)),
            bias: Array1::zeros(fan_out),
        }
    }

    pub fn fan_in(&self) -> usize {
        self.weight.nrows()
    }

    pub fn fan_out(&self) -> usize {
        self.weight.ncols()
    }

    fn affine(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.weight) + &self.bias
    }
}

/// Backbone stage. Every stage ends in a ReLU.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Block {
    Dense(Dense),
    /// `h ↦ ReLU(outer(ReLU(inner(h))) + h)`.
    Residual { inner: Dense, outer: Dense },
}

impl Block {
    fn out_dim(&self) -> usize {
        match self {
            Block::Dense(d) => d.fan_out(),
            Block::Residual { outer, .. } => outer.fan_out(),
        }
    }
}

/// Which classifier head(s) a backward pass routes gradient through.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HeadMask {
    pub regular: bool,
    pub balanced: bool,
}

impl HeadMask {
    pub const REGULAR: Self = Self { regular: true, balanced: false };
    pub const BALANCED: Self = Self { regular: false, balanced: true };
    pub const BOTH: Self = Self { regular: true, balanced: true };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Head {
    Regular,
    Balanced,
}

/// Parameter group, used by optimizers to enable or freeze parts of the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamGroup {
    Backbone,
    HeadRegular,
    HeadBalanced,
    Cost,
}

/// Shared residual backbone with a regular and a balanced classifier head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub blocks: Vec<Block>,
    pub head_regular: Dense,
    pub head_balanced: Dense,
    /// When set, the balanced head computes `scale · cos(h, w_j)` from the
    /// unit-normalized hidden vector and weight columns (its bias is unused).
    #[serde(default)]
    pub balanced_cosine_scale: Option<f64>,
}

/// Layer sizes for [`init_mlp`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MlpShape {
    pub input_dim: usize,
    pub hidden: usize,
    /// Weight matrices along the input → logits path of one head.
    pub depth: usize,
    pub n_classes: usize,
}

impl MlpShape {
    pub fn new(input_dim: usize, n_classes: usize) -> Self {
        Self {
            input_dim,
            hidden: 28,
            depth: 4,
            n_classes,
        }
    }
}

/// Builds the network with weights drawn from `U(-1/√fan_in, 1/√fan_in)` and
/// zero biases. The backbone has `depth - 1` layers: an input layer followed by
/// hidden layers, one pair of which (in the middle) forms the residual block.
pub fn init_mlp(shape: MlpShape, seed: u64) -> Result<ModelParams> {
    let MlpShape { input_dim, hidden, depth, n_classes } = shape;
    if input_dim == 0 || hidden == 0 || n_classes < 2 {
        return Err(Error::Config(format!("invalid network shape {shape:?}")));
    }
    if depth < 2 {
        return Err(Error::Config(format!("depth must be at least 2, got {depth}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut blocks = vec![Block::Dense(Dense::uniform(input_dim, hidden, &mut rng))];
    let rest = depth - 2;
    let residual_at = (rest >= 2).then(|| (rest - 2) / 2);
    let mut layer = 0;
    while layer < rest {
        if Some(layer) == residual_at {
            let inner = Dense::uniform(hidden, hidden, &mut rng);
            let outer = Dense::uniform(hidden, hidden, &mut rng);
            blocks.push(Block::Residual { inner, outer });
            layer += 2;
        } else {
            blocks.push(Block::Dense(Dense::uniform(hidden, hidden, &mut rng)));
            layer += 1;
        }
    }
    Ok(ModelParams {
        blocks,
        head_regular: Dense::uniform(hidden, n_classes, &mut rng),
        head_balanced: Dense::uniform(hidden, n_classes, &mut rng),
        balanced_cosine_scale: None,
    })
}

#[derive(Debug, Clone)]
enum BlockCache {
    Dense {
        input: Array2<f64>,
        pre: Array2<f64>,
    },
    Residual {
        input: Array2<f64>,
        inner_pre: Array2<f64>,
        inner_act: Array2<f64>,
        pre: Array2<f64>,
    },
}

#[derive(Debug, Clone)]
struct CosineCache {
    unit_hidden: Array2<f64>,
    hidden_norm: Array1<f64>,
    unit_weight: Array2<f64>,
    weight_norm: Array1<f64>,
    scale: f64,
}

/// Activations cached by [`forward`] for an exact backward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    caches: Vec<BlockCache>,
    cosine: Option<CosineCache>,
    /// Last hidden representation, the input of both heads.
    pub hidden: Array2<f64>,
    pub logits_regular: Array2<f64>,
    pub logits_balanced: Array2<f64>,
}

impl ForwardTrace {
    pub fn logits(&self, head: Head) -> &Array2<f64> {
        match head {
            Head::Regular => &self.logits_regular,
            Head::Balanced => &self.logits_balanced,
        }
    }

    /// Per row, the distance to the nearest non-differentiable point: the
    /// smallest `|preactivation|` of any ReLU, or the gap between the two
    /// largest logits of either head, whichever is smaller.
    pub fn kink_distance(&self) -> Vec<f64> {
        let n = self.hidden.nrows();
        let mut dist = vec![f64::INFINITY; n];
        let mut fold = |m: &Array2<f64>| {
            for (d, row) in dist.iter_mut().zip(m.rows()) {
                *d = row.iter().fold(*d, |acc, v| acc.min(v.abs()));
            }
        };
        for cache in &self.caches {
            match cache {
                BlockCache::Dense { pre, .. } => fold(pre),
                BlockCache::Residual { inner_pre, pre, .. } => {
                    fold(inner_pre);
                    fold(pre);
                }
            }
        }
        for logits in [&self.logits_regular, &self.logits_balanced] {
            for (d, row) in dist.iter_mut().zip(logits.rows()) {
                let (mut first, mut second) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
                for &v in row {
                    if v > first {
                        second = first;
                        first = v;
                    } else if v > second {
                        second = v;
                    }
                }
                *d = d.min(first - second);
            }
        }
        dist
    }
}

fn relu(a: &Array2<f64>) -> Array2<f64> {
    a.mapv(|v| v.max(0.0))
}

fn relu_grad(upstream: &Array2<f64>, pre: &Array2<f64>) -> Array2<f64> {
    let mut out = upstream.clone();
    out.zip_mut_with(pre, |g, &a| {
        if a <= 0.0 {
            *g = 0.0;
        }
    });
    out
}

fn l2_norms(m: &Array2<f64>, axis: Axis) -> Array1<f64> {
    m.map_axis(axis, |v| (v.dot(&v) + NORM_FLOOR).sqrt())
}

impl ModelParams {
    pub fn input_dim(&self) -> usize {
        match &self.blocks[0] {
            Block::Dense(d) => d.fan_in(),
            Block::Residual { inner, .. } => inner.fan_in(),
        }
    }

    pub fn hidden_dim(&self) -> usize {
        self.head_regular.fan_in()
    }

    pub fn n_classes(&self) -> usize {
        self.head_regular.fan_out()
    }

    /// Checks that layer shapes chain and both heads agree.
    pub fn validate(&self) -> Result<()> {
        if self.blocks.is_empty() {
            return Err(Error::Shape("network has no backbone layers".into()));
        }
        let mut width = self.input_dim();
        for (i, block) in self.blocks.iter().enumerate() {
            let layers: Vec<&Dense> = match block {
                Block::Dense(d) => vec![d],
                Block::Residual { inner, outer } => {
                    if inner.fan_in() != outer.fan_out() {
                        return Err(Error::Shape(format!("residual block {i} does not preserve width")));
                    }
                    vec![inner, outer]
                }
            };
            for d in layers {
                if d.fan_in() != width || d.bias.len() != d.fan_out() {
                    return Err(Error::Shape(format!("block {i} does not chain from width {width}")));
                }
                width = d.fan_out();
            }
        }
        for head in [&self.head_regular, &self.head_balanced] {
            if head.fan_in() != width || head.bias.len() != head.fan_out() {
                return Err(Error::Shape("head does not match backbone width".into()));
            }
        }
        if self.head_regular.weight.dim() != self.head_balanced.weight.dim() {
            return Err(Error::Shape("heads differ in shape".into()));
        }
        Ok(())
    }

    /// Same architecture with every parameter set to zero.
    pub fn zeros_like(&self) -> Self {
        let z = |d: &Dense| Dense::zeros(d.fan_in(), d.fan_out());
        Self {
            blocks: self
                .blocks
                .iter()
                .map(|b| match b {
                    Block::Dense(d) => Block::Dense(z(d)),
                    Block::Residual { inner, outer } => Block::Residual {
                        inner: z(inner),
                        outer: z(outer),
                    },
                })
                .collect(),
            head_regular: z(&self.head_regular),
            head_balanced: z(&self.head_balanced),
            balanced_cosine_scale: self.balanced_cosine_scale,
        }
    }

    fn dense_layers(&self) -> Vec<(ParamGroup, &Dense)> {
        let mut out = Vec::new();
        for b in &self.blocks {
            match b {
                Block::Dense(d) => out.push((ParamGroup::Backbone, d)),
                Block::Residual { inner, outer } => {
                    out.push((ParamGroup::Backbone, inner));
                    out.push((ParamGroup::Backbone, outer));
                }
            }
        }
        out.push((ParamGroup::HeadRegular, &self.head_regular));
        out.push((ParamGroup::HeadBalanced, &self.head_balanced));
        out
    }

    fn dense_layers_mut(&mut self) -> Vec<(ParamGroup, &mut Dense)> {
        let mut out = Vec::new();
        for b in &mut self.blocks {
            match b {
                Block::Dense(d) => out.push((ParamGroup::Backbone, d)),
                Block::Residual { inner, outer } => {
                    out.push((ParamGroup::Backbone, inner));
                    out.push((ParamGroup::Backbone, outer));
                }
            }
        }
        out.push((ParamGroup::HeadRegular, &mut self.head_regular));
        out.push((ParamGroup::HeadBalanced, &mut self.head_balanced));
        out
    }

    /// Every parameter tensor as a flat slice, in a fixed order.
    pub fn tensors(&self) -> Vec<(ParamGroup, &[f64])> {
        self.dense_layers()
            .into_iter()
            .flat_map(|(g, d)| {
                [
                    (g, d.weight.as_slice().expect("standard layout")),
                    (g, d.bias.as_slice().expect("standard layout")),
                ]
            })
            .collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<(ParamGroup, &mut [f64])> {
        self.dense_layers_mut()
            .into_iter()
            .flat_map(|(g, d)| {
                let Dense { weight, bias } = d;
                [
                    (g, weight.as_slice_mut().expect("standard layout")),
                    (g, bias.as_slice_mut().expect("standard layout")),
                ]
            })
            .collect()
    }

    pub fn n_params(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.tensors().into_iter().flat_map(|(_, t)| t.iter().copied()).collect()
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.n_params() {
            return Err(Error::Shape(format!(
                "{} values for {} parameters",
                flat.len(),
                self.n_params()
            )));
        }
        let mut offset = 0;
        for (_, t) in self.tensors_mut() {
            t.copy_from_slice(&flat[offset..offset + t.len()]);
            offset += t.len();
        }
        Ok(())
    }

    /// Group of each entry of [`Self::to_flat`].
    pub fn flat_groups(&self) -> Vec<ParamGroup> {
        self.tensors()
            .into_iter()
            .flat_map(|(g, t)| std::iter::repeat_n(g, t.len()))
            .collect()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.iter().all(|v| v.is_finite()))
    }
}

/// Runs the backbone and both heads on the rows of `x`.
pub fn forward(params: &ModelParams, x: &Array2<f64>) -> Result<ForwardTrace> {
    if x.ncols() != params.input_dim() {
        return Err(Error::Shape(format!(
            "input has {} columns, network expects {}",
            x.ncols(),
            params.input_dim()
        )));
    }
    let mut h = x.to_owned();
    let mut caches = Vec::with_capacity(params.blocks.len());
    for block in &params.blocks {
        match block {
            Block::Dense(d) => {
                let pre = d.affine(&h);
                let next = relu(&pre);
                caches.push(BlockCache::Dense { input: h, pre });
                h = next;
            }
            Block::Residual { inner, outer } => {
                let inner_pre = inner.affine(&h);
                let inner_act = relu(&inner_pre);
                let pre = outer.affine(&inner_act) + &h;
                let next = relu(&pre);
                caches.push(BlockCache::Residual {
                    input: h,
                    inner_pre,
                    inner_act,
                    pre,
                });
                h = next;
            }
        }
    }
    debug_assert_eq!(h.ncols(), params.blocks.last().map_or(0, Block::out_dim));

    let logits_regular = params.head_regular.affine(&h);
    let (logits_balanced, cosine) = match params.balanced_cosine_scale {
        None => (params.head_balanced.affine(&h), None),
        Some(scale) => {
            let hidden_norm = l2_norms(&h, Axis(1));
            let unit_hidden = &h / &hidden_norm.view().insert_axis(Axis(1));
            let w = &params.head_balanced.weight;
            let weight_norm = l2_norms(w, Axis(0));
            let unit_weight = w / &weight_norm.view().insert_axis(Axis(0));
            let logits = unit_hidden.dot(&unit_weight) * scale;
            (
                logits,
                Some(CosineCache {
                    unit_hidden,
                    hidden_norm,
                    unit_weight,
                    weight_norm,
                    scale,
                }),
            )
        }
    };

    Ok(ForwardTrace {
        caches,
        cosine,
        hidden: h,
        logits_regular,
        logits_balanced,
    })
}

/// Gradient of a row-normalized vector `v / ‖v‖` mapped back to `v`.
fn unit_backward(d_unit: &Array2<f64>, unit: &Array2<f64>, norms: &Array1<f64>, axis: Axis) -> Array2<f64> {
    // d v = (d u - u (u · d u)) / ‖v‖, with ‖v‖ including the floor
    let dots = (d_unit * unit).sum_axis(axis);
    let (dots, norms) = (dots.insert_axis(axis), norms.view().insert_axis(axis));
    (d_unit - unit * &dots) / norms
}

/// Parameter gradients, shaped exactly like [`ModelParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients(pub ModelParams);

impl std::ops::Deref for Gradients {
    type Target = ModelParams;
    fn deref(&self) -> &ModelParams {
        &self.0
    }
}

impl Gradients {
    pub fn zeros_for(params: &ModelParams) -> Self {
        Gradients(params.zeros_like())
    }

    /// `self += other`.
    pub fn accumulate(&mut self, other: &Gradients) {
        let src = other.0.tensors();
        for ((_, dst), (_, s)) in self.0.tensors_mut().into_iter().zip(src) {
            dst.iter_mut().zip(s).for_each(|(d, v)| *d += v);
        }
    }

    pub fn group_is_zero(&self, group: ParamGroup) -> bool {
        self.0
            .tensors()
            .iter()
            .filter(|(g, _)| *g == group)
            .all(|(_, t)| t.iter().all(|&v| v == 0.0))
    }

    pub fn max_abs(&self) -> f64 {
        self.0
            .tensors()
            .iter()
            .flat_map(|(_, t)| t.iter())
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// Exact reverse-mode gradients given `dL/dlogits` for each head.
///
/// Only heads enabled in `mask` contribute; a masked head receives a zero
/// gradient and sends nothing into the backbone. The backbone receives the sum
/// of what flows from the enabled heads.
pub fn backward(
    params: &ModelParams,
    trace: &ForwardTrace,
    d_regular: &Array2<f64>,
    d_balanced: &Array2<f64>,
    mask: HeadMask,
) -> Result<Gradients> {
    let shape = trace.logits_regular.dim();
    if d_regular.dim() != shape || d_balanced.dim() != shape {
        return Err(Error::Shape(format!(
            "upstream gradients {:?} / {:?} do not match logits {:?}",
            d_regular.dim(),
            d_balanced.dim(),
            shape
        )));
    }
    let mut grads = Gradients::zeros_for(params);
    let g = &mut grads.0;
    let h = &trace.hidden;
    let mut d_hidden = Array2::<f64>::zeros(h.dim());

    if mask.regular {
        g.head_regular.weight = h.t().dot(d_regular);
        g.head_regular.bias = d_regular.sum_axis(Axis(0));
        d_hidden += &d_regular.dot(&params.head_regular.weight.t());
    }
    if mask.balanced {
        match &trace.cosine {
            None => {
                g.head_balanced.weight = h.t().dot(d_balanced);
                g.head_balanced.bias = d_balanced.sum_axis(Axis(0));
                d_hidden += &d_balanced.dot(&params.head_balanced.weight.t());
            }
            Some(c) => {
                let d_logits = d_balanced * c.scale;
                let d_unit_w = c.unit_hidden.t().dot(&d_logits);
                let d_unit_h = d_logits.dot(&c.unit_weight.t());
                g.head_balanced.weight = unit_backward(&d_unit_w, &c.unit_weight, &c.weight_norm, Axis(0));
                d_hidden += &unit_backward(&d_unit_h, &c.unit_hidden, &c.hidden_norm, Axis(1));
            }
        }
    }

    let mut upstream = d_hidden;
    let n_blocks = params.blocks.len();
    for (i, (block, cache)) in params.blocks.iter().zip(&trace.caches).enumerate().rev() {
        let need_input_grad = i > 0;
        match (block, cache, &mut g.blocks[i]) {
            (Block::Dense(d), BlockCache::Dense { input, pre }, Block::Dense(gd)) => {
                let da = relu_grad(&upstream, pre);
                gd.weight = input.t().dot(&da);
                gd.bias = da.sum_axis(Axis(0));
                if need_input_grad {
                    upstream = da.dot(&d.weight.t());
                }
            }
            (
                Block::Residual { inner, outer },
                BlockCache::Residual {
                    input,
                    inner_pre,
                    inner_act,
                    pre,
                },
                Block::Residual {
                    inner: g_inner,
                    outer: g_outer,
                },
            ) => {
                let da = relu_grad(&upstream, pre);
                g_outer.weight = inner_act.t().dot(&da);
                g_outer.bias = da.sum_axis(Axis(0));
                let d_inner_act = da.dot(&outer.weight.t());
                let d_inner = relu_grad(&d_inner_act, inner_pre);
                g_inner.weight = input.t().dot(&d_inner);
                g_inner.bias = d_inner.sum_axis(Axis(0));
                if need_input_grad {
                    upstream = d_inner.dot(&inner.weight.t()) + &da;
                }
            }
            _ => {
                return Err(Error::Shape(format!(
                    "trace does not match network at block {i} of {n_blocks}"
                )))
            }
        }
    }
    Ok(grads)
}

/// Class probabilities from one head: softmax of its logits, row by row.
pub fn predict_proba(params: &ModelParams, x: &Array2<f64>, head: Head) -> Result<Array2<f64>> {
    let trace = forward(params, x)?;
    Ok(softmax_rows(trace.logits(head)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn rand_matrix(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-2.0..2.0))
    }

    #[test]
    fn topcat_shapes() {
        let p = init_mlp(MlpShape::new(86, 2), 0).unwrap();
        match &p.blocks[0] {
            Block::Dense(d) => assert_eq!(d.weight.dim(), (86, 28)),
            _ => panic!("first block should be dense"),
        }
        assert_eq!(p.head_regular.weight.dim(), (28, 2));
        assert_eq!(p.head_balanced.weight.dim(), (28, 2));
        // one input layer plus a two-layer residual block, then a head
        let backbone_mats: usize = p
            .blocks
            .iter()
            .map(|b| match b {
                Block::Dense(_) => 1,
                Block::Residual { .. } => 2,
            })
            .sum();
        assert_eq!(backbone_mats + 1, 4);
        assert!(matches!(p.blocks[1], Block::Residual { .. }));
        p.validate().unwrap();
    }

    #[test]
    fn other_depths_chain() {
        for depth in 2..8 {
            let p = init_mlp(MlpShape { input_dim: 5, hidden: 7, depth, n_classes: 3 }, 1).unwrap();
            p.validate().unwrap();
            let t = forward(&p, &rand_matrix(4, 5, 2)).unwrap();
            assert_eq!(t.logits_regular.dim(), (4, 3));
        }
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let a = init_mlp(MlpShape::new(10, 2), 3).unwrap();
        let b = init_mlp(MlpShape::new(10, 2), 3).unwrap();
        assert_eq!(a, b);
        let c = init_mlp(MlpShape::new(10, 2), 4).unwrap();
        assert_ne!(a, c);
        if let Block::Dense(d) = &a.blocks[0] {
            let bound = 1.0 / 10f64.sqrt();
            assert!(d.weight.iter().all(|w| w.abs() <= bound));
            assert!(d.bias.iter().all(|&b| b == 0.0));
        }
    }

    #[test]
    fn zero_model_gives_zero_logits() {
        let p = init_mlp(MlpShape::new(3, 2), 0).unwrap().zeros_like();
        let t = forward(&p, &rand_matrix(6, 3, 1)).unwrap();
        assert!(t.logits_regular.iter().all(|&v| v == 0.0));
        assert!(t.logits_balanced.iter().all(|&v| v == 0.0));
        let probs = predict_proba(&p, &rand_matrix(6, 3, 1), Head::Balanced).unwrap();
        assert!(probs.iter().all(|&v| v == 0.5));
    }

    #[test]
    fn hand_computed_logits() {
        // one dense layer 2 -> 2 followed by heads; ReLU kills the negative unit
        let p = ModelParams {
            blocks: vec![Block::Dense(Dense {
                weight: array![[1.0, -1.0], [2.0, 0.5]],
                bias: array![0.5, 0.0],
            })],
            head_regular: Dense {
                weight: array![[1.0, 0.0], [0.0, 1.0]],
                bias: array![0.0, 0.25],
            },
            head_balanced: Dense {
                weight: array![[2.0, -1.0], [1.0, 3.0]],
                bias: array![-1.0, 0.0],
            },
            balanced_cosine_scale: None,
        };
        p.validate().unwrap();
        let x = array![[1.0, 1.0], [3.0, -1.0]];
        let t = forward(&p, &x).unwrap();
        // row 0: pre = [1+2+0.5, -1+0.5] = [3.5, -0.5] -> h = [3.5, 0]
        // row 1: pre = [3-2+0.5, -3-0.5] = [1.5, -3.5] -> h = [1.5, 0]
        assert_eq!(t.hidden, array![[3.5, 0.0], [1.5, 0.0]]);
        assert_eq!(t.logits_regular, array![[3.5, 0.25], [1.5, 0.25]]);
        assert_eq!(t.logits_balanced, array![[6.0, -3.5], [2.0, -1.5]]);
    }

    #[test]
    fn residual_with_zero_inner_weights_is_identity() {
        let mut p = init_mlp(MlpShape::new(4, 2), 9).unwrap();
        let x = rand_matrix(5, 4, 3);
        let before = relu(&match &p.blocks[0] {
            Block::Dense(d) => d.affine(&x),
            _ => unreachable!(),
        });
        if let Block::Residual { inner, outer } = &mut p.blocks[1] {
            inner.weight.fill(0.0);
            outer.weight.fill(0.0);
        }
        let t = forward(&p, &x).unwrap();
        assert_eq!(t.hidden, before);
    }

    #[test]
    fn shape_errors() {
        let p = init_mlp(MlpShape::new(4, 2), 0).unwrap();
        assert!(matches!(forward(&p, &rand_matrix(2, 3, 0)), Err(Error::Shape(_))));
        let t = forward(&p, &rand_matrix(2, 4, 0)).unwrap();
        let bad = Array2::zeros((3, 2));
        let ok = Array2::zeros((2, 2));
        assert!(backward(&p, &t, &bad, &ok, HeadMask::BOTH).is_err());
    }

    #[test]
    fn zero_upstream_zero_gradient() {
        let p = init_mlp(MlpShape::new(4, 3), 0).unwrap();
        let t = forward(&p, &rand_matrix(8, 4, 0)).unwrap();
        let z = Array2::zeros((8, 3));
        let g = backward(&p, &t, &z, &z, HeadMask::BOTH).unwrap();
        assert_eq!(g.max_abs(), 0.0);
    }

    #[test]
    fn head_isolation_and_additivity() {
        let mut p = init_mlp(MlpShape::new(4, 3), 5).unwrap();
        for cosine in [None, Some(4.0)] {
            p.balanced_cosine_scale = cosine;
            let t = forward(&p, &rand_matrix(8, 4, 1)).unwrap();
            let dr = rand_matrix(8, 3, 2);
            let db = rand_matrix(8, 3, 3);
            let only_bal = backward(&p, &t, &dr, &db, HeadMask::BALANCED).unwrap();
            assert!(only_bal.group_is_zero(ParamGroup::HeadRegular));
            assert!(!only_bal.group_is_zero(ParamGroup::HeadBalanced));
            let only_reg = backward(&p, &t, &dr, &db, HeadMask::REGULAR).unwrap();
            assert!(only_reg.group_is_zero(ParamGroup::HeadBalanced));
            let both = backward(&p, &t, &dr, &db, HeadMask::BOTH).unwrap();
            let mut sum = only_reg.clone();
            sum.accumulate(&only_bal);
            let (a, b) = (both.to_flat(), sum.to_flat());
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() <= 1e-12 * (1.0 + x.abs()));
            }
        }
    }

    #[test]
    fn flat_round_trip() {
        let p = init_mlp(MlpShape::new(6, 2), 2).unwrap();
        let flat = p.to_flat();
        assert_eq!(flat.len(), p.n_params());
        assert_eq!(p.flat_groups().len(), flat.len());
        let mut q = p.zeros_like();
        q.set_flat(&flat).unwrap();
        assert_eq!(p, q);
        assert!(q.set_flat(&flat[1..]).is_err());
    }

    #[test]
    fn forward_is_reproducible() {
        let p = init_mlp(MlpShape::new(5, 2), 8).unwrap();
        let x = rand_matrix(128, 5, 4);
        let a = forward(&p, &x).unwrap();
        let b = forward(&p, &x).unwrap();
        assert_eq!(a.logits_regular, b.logits_regular);
        assert_eq!(a.logits_regular.dim(), (128, 2));
    }
}
