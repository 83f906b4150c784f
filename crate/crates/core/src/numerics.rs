//! Small dense-math kernel: affine layers with hand-written gradients,
//! activations, seeded sampling, Adam and a finite-difference checker.
//!
//! Everything is `f64`. Matrices are row-major `Vec<f64>`.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Affine map `y = xᵀ·W + b` with `W` stored row-major as `in_dim × out_dim`.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseLayer {
    in_dim: usize,
    out_dim: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Gradients returned by [`DenseLayer::backward`].
#[derive(Clone, Debug, PartialEq)]
pub struct DenseGrads {
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
    pub input: Vec<f64>,
}

impl DenseLayer {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            in_dim,
            out_dim,
            weight: vec![0.0; in_dim * out_dim],
            bias: vec![0.0; out_dim],
        }
    }

    /// Uniform Glorot init in `±sqrt(6 / (in + out))`, zero bias.
    pub fn glorot(in_dim: usize, out_dim: usize, rng: &mut Rng) -> Self {
        let bound = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let mut layer = Self::zeros(in_dim, out_dim);
        for w in &mut layer.weight {
            *w = rng.uniform(-bound, bound);
        }
        layer
    }

    pub fn from_parts(in_dim: usize, out_dim: usize, weight: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if weight.len() != in_dim * out_dim {
            return Err(Error::dim("dense weight", in_dim * out_dim, weight.len()));
        }
        if bias.len() != out_dim {
            return Err(Error::dim("dense bias", out_dim, bias.len()));
        }
        Ok(Self {
            in_dim,
            out_dim,
            weight,
            bias,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn num_parameters(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.in_dim {
            return Err(Error::dim("dense input", self.in_dim, input.len()));
        }
        let mut out = vec![0.0; self.out_dim];
        self.forward_into(input, &mut out);
        Ok(out)
    }

    /// Unchecked forward. Zero inputs are skipped, so sparse binary rows only
    /// touch the weight rows of their positives.
    pub(crate) fn forward_into(&self, input: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.bias);
        for (i, &x) in input.iter().enumerate() {
            if x != 0.0 {
                axpy(x, self.row(i), out);
            }
        }
    }

    pub fn backward(&self, input: &[f64], upstream: &[f64]) -> Result<DenseGrads> {
        if input.len() != self.in_dim {
            return Err(Error::dim("dense input", self.in_dim, input.len()));
        }
        if upstream.len() != self.out_dim {
            return Err(Error::dim("dense upstream gradient", self.out_dim, upstream.len()));
        }
        let mut grads = DenseGrads {
            weight: vec![0.0; self.weight.len()],
            bias: vec![0.0; self.out_dim],
            input: vec![0.0; self.in_dim],
        };
        self.accumulate_backward(
            input,
            upstream,
            &mut grads.weight,
            &mut grads.bias,
            Some(&mut grads.input),
        );
        Ok(grads)
    }

    /// Adds this sample's gradients into the given buffers. `grad_input` is
    /// overwritten, not accumulated.
    pub(crate) fn accumulate_backward(
        &self,
        input: &[f64],
        upstream: &[f64],
        grad_weight: &mut [f64],
        grad_bias: &mut [f64],
        grad_input: Option<&mut [f64]>,
    ) {
        for (gb, &g) in grad_bias.iter_mut().zip(upstream) {
            *gb += g;
        }
        for (i, &x) in input.iter().enumerate() {
            if x != 0.0 {
                let start = i * self.out_dim;
                axpy(x, upstream, &mut grad_weight[start..start + self.out_dim]);
            }
        }
        if let Some(grad_input) = grad_input {
            for (i, gi) in grad_input.iter_mut().enumerate() {
                *gi = dot(self.row(i), upstream);
            }
        }
    }

    #[inline]
    fn row(&self, i: usize) -> &[f64] {
        &self.weight[i * self.out_dim..(i + 1) * self.out_dim]
    }
}

#[inline]
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
#[inline]
pub fn softplus_scalar(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub fn sigmoid(v: &[f64]) -> Vec<f64> {
    v.iter().map(|&x| sigmoid_scalar(x)).collect()
}

pub fn softplus(v: &[f64]) -> Vec<f64> {
    v.iter().map(|&x| softplus_scalar(x)).collect()
}

/// Max-shifted softmax. `-inf` entries map to exactly zero.
pub fn softmax(v: &[f64]) -> Result<Vec<f64>> {
    if v.iter().any(|x| x.is_nan() || *x == f64::INFINITY) {
        return Err(Error::NonFinite("softmax input".into()));
    }
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::invalid("softmax of a vector with no finite entry"));
    }
    let mut out: Vec<f64> = v.iter().map(|&x| (x - max).exp()).collect();
    let total: f64 = out.iter().sum();
    for o in &mut out {
        *o /= total;
    }
    Ok(out)
}

pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

pub fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Population standard deviation over mean. Zero for an all-zero vector.
pub fn coefficient_of_variation(v: &[f64]) -> Result<f64> {
    if v.is_empty() {
        return Err(Error::invalid("coefficient of variation of an empty vector"));
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if mean == 0.0 {
        return Ok(0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    Ok(var.sqrt() / mean)
}

/// Gradient of `CV(v)²` with respect to each entry (zero where CV is defined as 0).
pub(crate) fn cv_squared_grad(v: &[f64]) -> Vec<f64> {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if mean == 0.0 {
        return vec![0.0; v.len()];
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    v.iter()
        .map(|x| 2.0 * (x - mean) / (n * mean * mean) - 2.0 * var / (n * mean.powi(3)))
        .collect()
}

pub fn mse(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::dim("mse operands", a.len(), b.len()));
    }
    if a.is_empty() {
        return Ok(0.0);
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64)
}

/// Seeded ChaCha8 generator. [`Rng::fork`] derives independent streams from
/// the same seed, so separate concerns (init, shuffling, corruption) never
/// perturb each other's sequences.
#[derive(Clone, Debug)]
pub struct Rng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn fork(&self, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(self.seed);
        inner.set_stream(stream + 1);
        Self {
            seed: self.seed,
            inner,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn std_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    /// Uniform in `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.unit()
    }

    pub fn unit(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn below(&mut self, n: usize) -> usize {
        rand::Rng::gen_range(&mut self.inner, 0..n)
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        rand::seq::SliceRandom::shuffle(items, &mut self.inner);
    }
}

impl RngCore for Rng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.inner.fill_bytes(dest)
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> std::result::Result<(), rand::Error> {
        self.inner.try_fill_bytes(dest)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adam with bias correction. Moment buffers are allocated on the first step
/// from the shapes of the parameter tensors and checked on every later step.
#[derive(Clone, Debug)]
pub struct Adam {
    config: AdamConfig,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::dim("optimizer tensor count", params.len(), grads.len()));
        }
        for (p, g) in params.iter().zip(grads) {
            if p.len() != g.len() {
                return Err(Error::dim("optimizer gradient", p.len(), g.len()));
            }
            if g.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite("gradient".into()));
            }
        }
        if self.first.is_empty() {
            self.first = params.iter().map(|p| vec![0.0; p.len()]).collect();
            self.second = self.first.clone();
        } else if self.first.len() != params.len()
            || self.first.iter().zip(params.iter()).any(|(m, p)| m.len() != p.len())
        {
            return Err(Error::invalid("parameter shapes changed between optimizer steps"));
        }

        self.step += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let correction1 = 1.0 - beta1.powi(self.step as i32);
        let correction2 = 1.0 - beta2.powi(self.step as i32);
        let step_size = learning_rate / correction1;

        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(&mut self.first)
            .zip(&mut self.second)
        {
            for (((pi, &gi), mi), vi) in p.iter_mut().zip(g.iter()).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = beta1 * *mi + (1.0 - beta1) * gi;
                *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
                *pi -= step_size * *mi / ((*vi / correction2).sqrt() + epsilon);
            }
        }
        Ok(())
    }
}

/// Central finite differences of `f` at `x`.
pub fn finite_difference<F>(mut f: F, x: &[f64], h: f64) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + h;
            let plus = f(&probe);
            probe[i] = orig - h;
            let minus = f(&probe);
            probe[i] = orig;
            (plus - minus) / (2.0 * h)
        })
        .collect()
}

/// Largest `|a - n| / max(|a|, |n|, 1e-6)` over the pair. The floor keeps
/// entries whose true gradient is ~0 from turning round-off into huge ratios.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-6))
        .fold(0.0, f64::max)
}
