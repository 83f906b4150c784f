//! The shared sub-autoencoder stack and the three experts built from it.
//!
//! Level `l` encodes `prev_dim → K_l` with a per-user embedding row added
//! before the sigmoid, and decodes `K_l → prev_dim` without one. `prev_dim`
//! is `D` for Large and the previous level's width otherwise. An expert of
//! depth `d` encodes through levels `0..d` and decodes back through
//! `d-1..=0`, so all three experts read and write the same parameters.

pub mod checkpoint;

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::numerics::{sigmoid_scalar, DenseLayer, Rng};

pub const NUM_LEVELS: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Level {
    Large,
    Medium,
    Small,
}

impl Level {
    pub const ALL: [Level; NUM_LEVELS] = [Level::Large, Level::Medium, Level::Small];

    pub fn index(self) -> usize {
        self as usize
    }
}

/// An expert: a prefix of the sub-AE stack plus its mirrored decode path.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Parent {
    Mild,
    Moderate,
    Strong,
}

impl Parent {
    pub const ALL: [Parent; NUM_LEVELS] = [Parent::Mild, Parent::Moderate, Parent::Strong];

    /// Number of sub-AE levels traversed before decoding.
    pub fn depth(self) -> usize {
        self as usize + 1
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Parent> {
        Parent::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Parent::Mild => "mild",
            Parent::Moderate => "moderate",
            Parent::Strong => "strong",
        }
    }
}

impl fmt::Display for Parent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Parent {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mild" => Ok(Parent::Mild),
            "moderate" => Ok(Parent::Moderate),
            "strong" => Ok(Parent::Strong),
            other => Err(Error::invalid(format!("unknown expert `{other}`"))),
        }
    }
}

/// Hidden widths of the Large, Medium and Small levels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct HiddenDims(pub [usize; NUM_LEVELS]);

impl Default for HiddenDims {
    fn default() -> Self {
        HiddenDims([128, 48, 12])
    }
}

impl HiddenDims {
    pub fn new(dims: [usize; NUM_LEVELS]) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::invalid("hidden dimensions must be positive"));
        }
        if !(dims[0] > dims[1] && dims[1] > dims[2]) {
            return Err(Error::invalid(format!(
                "hidden dimensions must be strictly decreasing, got {dims:?}"
            )));
        }
        Ok(HiddenDims(dims))
    }
}

impl FromStr for HiddenDims {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parsed: Vec<usize> = s
            .split(',')
            .map(|p| p.trim().parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::invalid(format!("bad hidden dims `{s}`: {e}")))?;
        let dims: [usize; NUM_LEVELS] = parsed
            .try_into()
            .map_err(|_| Error::invalid(format!("expected three hidden dims, got `{s}`")))?;
        HiddenDims::new(dims)
    }
}

/// One level of the stack.
#[derive(Clone, Debug, PartialEq)]
pub struct SubAe {
    pub level: Level,
    pub encoder: DenseLayer,
    /// `U × K`, row-major; the user's row is added to the encoder pre-activation.
    pub user_embedding: Vec<f64>,
    pub decoder: DenseLayer,
}

impl SubAe {
    pub fn hidden_dim(&self) -> usize {
        self.encoder.out_dim()
    }

    pub fn input_dim(&self) -> usize {
        self.encoder.in_dim()
    }

    pub fn num_users(&self) -> usize {
        self.user_embedding.len() / self.hidden_dim()
    }

    pub fn num_parameters(&self) -> usize {
        self.encoder.num_parameters() + self.user_embedding.len() + self.decoder.num_parameters()
    }

    /// `σ(inputᵀ·W + b + V[user])`.
    pub fn encode(&self, user: usize, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.input_dim() {
            return Err(Error::dim("encoder input", self.input_dim(), input.len()));
        }
        self.check_user(user)?;
        let mut code = vec![0.0; self.hidden_dim()];
        self.encode_into(user, input, &mut code);
        Ok(code)
    }

    /// `σ(codeᵀ·W_d + b_d)`.
    pub fn decode(&self, code: &[f64]) -> Result<Vec<f64>> {
        if code.len() != self.hidden_dim() {
            return Err(Error::dim("decoder input", self.hidden_dim(), code.len()));
        }
        let mut out = vec![0.0; self.input_dim()];
        self.decode_into(code, &mut out);
        Ok(out)
    }

    fn check_user(&self, user: usize) -> Result<()> {
        if user >= self.num_users() {
            return Err(Error::OutOfRange {
                context: "user index",
                index: user,
                len: self.num_users(),
            });
        }
        Ok(())
    }

    fn embedding_row(&self, user: usize) -> &[f64] {
        let k = self.hidden_dim();
        &self.user_embedding[user * k..(user + 1) * k]
    }

    fn encode_into(&self, user: usize, input: &[f64], code: &mut [f64]) {
        self.encoder.forward_into(input, code);
        for (c, &e) in code.iter_mut().zip(self.embedding_row(user)) {
            *c = sigmoid_scalar(*c + e);
        }
    }

    fn decode_into(&self, code: &[f64], out: &mut [f64]) {
        self.decoder.forward_into(code, out);
        for o in out.iter_mut() {
            *o = sigmoid_scalar(*o);
        }
    }
}

/// Gradient buffers shaped like one [`SubAe`].
#[derive(Clone, Debug, PartialEq)]
pub struct SubAeGrads {
    pub encoder_weight: Vec<f64>,
    pub encoder_bias: Vec<f64>,
    pub user_embedding: Vec<f64>,
    pub decoder_weight: Vec<f64>,
    pub decoder_bias: Vec<f64>,
}

/// Gradient buffers shaped like an [`AelModel`], in [`AelModel::tensors`] order.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelGrads {
    pub levels: Vec<SubAeGrads>,
}

impl ModelGrads {
    pub fn zeros_like(model: &AelModel) -> Self {
        let levels = model
            .levels
            .iter()
            .map(|l| SubAeGrads {
                encoder_weight: vec![0.0; l.encoder.weight.len()],
                encoder_bias: vec![0.0; l.encoder.bias.len()],
                user_embedding: vec![0.0; l.user_embedding.len()],
                decoder_weight: vec![0.0; l.decoder.weight.len()],
                decoder_bias: vec![0.0; l.decoder.bias.len()],
            })
            .collect();
        Self { levels }
    }

    pub fn tensors(&self) -> Vec<&[f64]> {
        self.levels
            .iter()
            .flat_map(|g| {
                [
                    g.encoder_weight.as_slice(),
                    g.encoder_bias.as_slice(),
                    g.user_embedding.as_slice(),
                    g.decoder_weight.as_slice(),
                    g.decoder_bias.as_slice(),
                ]
            })
            .collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.levels
            .iter_mut()
            .flat_map(|g| {
                [
                    g.encoder_weight.as_mut_slice(),
                    g.encoder_bias.as_mut_slice(),
                    g.user_embedding.as_mut_slice(),
                    g.decoder_weight.as_mut_slice(),
                    g.decoder_bias.as_mut_slice(),
                ]
            })
            .collect()
    }

    pub fn level(&self, level: Level) -> Vec<&[f64]> {
        let g = &self.levels[level.index()];
        vec![
            &g.encoder_weight,
            &g.encoder_bias,
            &g.user_embedding,
            &g.decoder_weight,
            &g.decoder_bias,
        ]
    }

    pub fn clear(&mut self) {
        for t in self.tensors_mut() {
            t.fill(0.0);
        }
    }

    pub fn is_zero(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|&x| x == 0.0))
    }
}

/// Activations recorded by [`AelModel::parent_trace`]; doubles as the
/// instrumentation of which levels an expert visits.
#[derive(Clone, Debug, PartialEq)]
pub struct ParentTrace {
    pub parent: Parent,
    pub user: usize,
    /// `codes[l]` is the level-`l` encoder output; `len() == depth`.
    pub codes: Vec<Vec<f64>>,
    /// `decoded[l]` is the level-`l` decoder output; `decoded[0]` is the
    /// reconstruction of the item vector. `len() == depth`.
    pub decoded: Vec<Vec<f64>>,
}

impl ParentTrace {
    pub fn output(&self) -> &[f64] {
        &self.decoded[0]
    }

    pub fn bottleneck_width(&self) -> usize {
        self.codes.last().map_or(0, Vec::len)
    }
}

/// The three-level stack shared by every expert.
#[derive(Clone, Debug, PartialEq)]
pub struct AelModel {
    num_users: usize,
    num_items: usize,
    levels: Vec<SubAe>,
}

impl AelModel {
    /// Glorot-uniform layers, embeddings uniform in `±0.01`, zero biases.
    pub fn new(num_users: usize, num_items: usize, dims: HiddenDims, rng: &mut Rng) -> Result<Self> {
        let mut model = Self::build(num_users, num_items, dims, |i, o| DenseLayer::glorot(i, o, rng))?;
        for level in &mut model.levels {
            for e in &mut level.user_embedding {
                *e = rng.uniform(-0.01, 0.01);
            }
        }
        Ok(model)
    }

    /// All parameters zero.
    pub fn zeros(num_users: usize, num_items: usize, dims: HiddenDims) -> Result<Self> {
        Self::build(num_users, num_items, dims, DenseLayer::zeros)
    }

    fn build<F>(num_users: usize, num_items: usize, dims: HiddenDims, mut layer: F) -> Result<Self>
    where
        F: FnMut(usize, usize) -> DenseLayer,
    {
        if num_users == 0 || num_items == 0 {
            return Err(Error::invalid("model needs at least one user and one item"));
        }
        let mut prev = num_items;
        let mut levels = Vec::with_capacity(NUM_LEVELS);
        for (level, &k) in Level::ALL.iter().zip(&dims.0) {
            let encoder = layer(prev, k);
            let decoder = layer(k, prev);
            levels.push(SubAe {
                level: *level,
                encoder,
                user_embedding: vec![0.0; num_users * k],
                decoder,
            });
            prev = k;
        }
        Ok(Self {
            num_users,
            num_items,
            levels,
        })
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn hidden_dims(&self) -> HiddenDims {
        HiddenDims([
            self.levels[0].hidden_dim(),
            self.levels[1].hidden_dim(),
            self.levels[2].hidden_dim(),
        ])
    }

    pub fn level(&self, level: Level) -> &SubAe {
        &self.levels[level.index()]
    }

    pub fn level_mut(&mut self, level: Level) -> &mut SubAe {
        &mut self.levels[level.index()]
    }

    /// Number of scalars actually allocated.
    pub fn num_parameters(&self) -> usize {
        self.levels.iter().map(SubAe::num_parameters).sum()
    }

    /// Every parameter tensor in checkpoint order: per level encoder weight,
    /// encoder bias, user embedding, decoder weight, decoder bias.
    pub fn tensors(&self) -> Vec<&[f64]> {
        self.levels
            .iter()
            .flat_map(|l| {
                [
                    l.encoder.weight.as_slice(),
                    l.encoder.bias.as_slice(),
                    l.user_embedding.as_slice(),
                    l.decoder.weight.as_slice(),
                    l.decoder.bias.as_slice(),
                ]
            })
            .collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.levels
            .iter_mut()
            .flat_map(|l| {
                [
                    l.encoder.weight.as_mut_slice(),
                    l.encoder.bias.as_mut_slice(),
                    l.user_embedding.as_mut_slice(),
                    l.decoder.weight.as_mut_slice(),
                    l.decoder.bias.as_mut_slice(),
                ]
            })
            .collect()
    }

    pub fn level_tensors_mut(&mut self, level: Level) -> Vec<&mut [f64]> {
        let l = &mut self.levels[level.index()];
        vec![
            &mut l.encoder.weight,
            &mut l.encoder.bias,
            &mut l.user_embedding,
            &mut l.decoder.weight,
            &mut l.decoder.bias,
        ]
    }

    pub fn parent_forward(&self, parent: Parent, user: usize, input: &[f64]) -> Result<Vec<f64>> {
        Ok(self.parent_trace(parent, user, input)?.decoded.swap_remove(0))
    }

    /// Forward pass keeping every intermediate activation.
    pub fn parent_trace(&self, parent: Parent, user: usize, input: &[f64]) -> Result<ParentTrace> {
        self.check_input(user, input)?;
        Ok(self.trace_unchecked(parent, user, input))
    }

    pub(crate) fn trace_unchecked(&self, parent: Parent, user: usize, input: &[f64]) -> ParentTrace {
        let depth = parent.depth();
        let mut codes: Vec<Vec<f64>> = Vec::with_capacity(depth);
        for l in 0..depth {
            let level = &self.levels[l];
            let mut code = vec![0.0; level.hidden_dim()];
            let below = if l == 0 { input } else { codes[l - 1].as_slice() };
            level.encode_into(user, below, &mut code);
            codes.push(code);
        }
        let mut decoded: Vec<Vec<f64>> = vec![Vec::new(); depth];
        for l in (0..depth).rev() {
            let level = &self.levels[l];
            let mut out = vec![0.0; level.input_dim()];
            let code = if l + 1 == depth { &codes[l] } else { &decoded[l + 1] };
            level.decode_into(code, &mut out);
            decoded[l] = out;
        }
        ParentTrace {
            parent,
            user,
            codes,
            decoded,
        }
    }

    /// Gradients of `grad_output · parent(user, input)` with respect to every
    /// parameter. Levels off the expert's path get zero.
    pub fn parent_backward(
        &self,
        parent: Parent,
        user: usize,
        input: &[f64],
        grad_output: &[f64],
    ) -> Result<ModelGrads> {
        self.check_input(user, input)?;
        if grad_output.len() != self.num_items {
            return Err(Error::dim("expert output gradient", self.num_items, grad_output.len()));
        }
        let trace = self.trace_unchecked(parent, user, input);
        let mut grads = ModelGrads::zeros_like(self);
        self.accumulate_backward(&trace, input, grad_output, &mut grads);
        Ok(grads)
    }

    /// Backpropagates `grad_output` (w.r.t. the expert output) through a
    /// recorded trace, adding into `grads`.
    pub(crate) fn accumulate_backward(
        &self,
        trace: &ParentTrace,
        input: &[f64],
        grad_output: &[f64],
        grads: &mut ModelGrads,
    ) {
        let depth = trace.parent.depth();
        let mut upstream = grad_output.to_vec();

        for l in 0..depth {
            let level = &self.levels[l];
            let g = &mut grads.levels[l];
            let y = &trace.decoded[l];
            let pre: Vec<f64> = upstream.iter().zip(y).map(|(g, y)| g * y * (1.0 - y)).collect();
            let below = if l + 1 == depth { &trace.codes[l] } else { &trace.decoded[l + 1] };
            let mut grad_in = vec![0.0; below.len()];
            level
                .decoder
                .accumulate_backward(below, &pre, &mut g.decoder_weight, &mut g.decoder_bias, Some(&mut grad_in));
            upstream = grad_in;
        }

        for l in (0..depth).rev() {
            let level = &self.levels[l];
            let g = &mut grads.levels[l];
            let z = &trace.codes[l];
            let pre: Vec<f64> = upstream.iter().zip(z).map(|(g, z)| g * z * (1.0 - z)).collect();
            let k = level.hidden_dim();
            let row = &mut g.user_embedding[trace.user * k..(trace.user + 1) * k];
            for (r, p) in row.iter_mut().zip(&pre) {
                *r += p;
            }
            if l == 0 {
                level
                    .encoder
                    .accumulate_backward(input, &pre, &mut g.encoder_weight, &mut g.encoder_bias, None);
            } else {
                let below = &trace.codes[l - 1];
                let mut grad_in = vec![0.0; below.len()];
                level.encoder.accumulate_backward(
                    below,
                    &pre,
                    &mut g.encoder_weight,
                    &mut g.encoder_bias,
                    Some(&mut grad_in),
                );
                upstream = grad_in;
            }
        }
    }

    fn check_input(&self, user: usize, input: &[f64]) -> Result<()> {
        if input.len() != self.num_items {
            return Err(Error::dim("expert input", self.num_items, input.len()));
        }
        if user >= self.num_users {
            return Err(Error::OutOfRange {
                context: "user index",
                index: user,
                len: self.num_users,
            });
        }
        Ok(())
    }
}

/// Closed-form parameter count: per level `prev·K + U·K + K + K·prev + prev`
/// with `prev` running over `D, K1, K2`, plus `2·D·E` gate weights when
/// `include_gating` is set.
pub fn count_parameters(num_users: usize, num_items: usize, dims: HiddenDims, include_gating: bool) -> usize {
    let breakdown = parameter_breakdown(num_users, num_items, dims);
    let levels: usize = breakdown.levels.iter().sum();
    if include_gating {
        levels + breakdown.gating
    } else {
        levels
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParameterBreakdown {
    pub levels: [usize; NUM_LEVELS],
    pub gating: usize,
}

pub fn parameter_breakdown(num_users: usize, num_items: usize, dims: HiddenDims) -> ParameterBreakdown {
    let mut prev = num_items;
    let mut levels = [0; NUM_LEVELS];
    for (slot, &k) in levels.iter_mut().zip(&dims.0) {
        *slot = prev * k + num_users * k + k + k * prev + prev;
        prev = k;
    }
    ParameterBreakdown {
        levels,
        gating: 2 * num_items * crate::gating::NUM_EXPERTS,
    }
}
