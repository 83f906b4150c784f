//! Noisy top-k gating over the experts, the weighted combination of their
//! outputs, and the importance/load balancing penalties.
//!
//! Scores are `H = x·W_g + ε ⊙ softplus(x·W_noise)` with `ε ~ N(0, 1)` while
//! training and `ε = 0` at inference. The top `k` scores survive, the rest
//! become `-inf`, and a softmax turns them into mixing weights.

use crate::error::{Error, Result};
use crate::numerics::{
    coefficient_of_variation, cv_squared_grad, sigmoid_scalar, softmax, softplus_scalar,
    std_normal_cdf, std_normal_pdf, Rng,
};

pub const NUM_EXPERTS: usize = 3;

#[derive(Clone, Debug, PartialEq)]
pub struct GatingNetwork {
    num_items: usize,
    num_experts: usize,
    k: usize,
    /// `D × E`, row-major.
    pub w_gate: Vec<f64>,
    /// `D × E`, row-major.
    pub w_noise: Vec<f64>,
}

/// Everything the gate computed for one input.
#[derive(Clone, Debug, PartialEq)]
pub struct GateDecision {
    pub k: usize,
    /// `G(x)`: zero off `selected`, sums to one.
    pub weights: Vec<f64>,
    pub clean_scores: Vec<f64>,
    /// `x·W_noise` before the softplus.
    pub noise_logits: Vec<f64>,
    pub noise_scales: Vec<f64>,
    /// The standard-normal draws; all zero at inference.
    pub noise: Vec<f64>,
    pub noisy_scores: Vec<f64>,
    /// Indices of the kept experts, ascending.
    pub selected: Vec<usize>,
}

impl GateDecision {
    pub fn num_experts(&self) -> usize {
        self.weights.len()
    }

    pub fn is_selected(&self, expert: usize) -> bool {
        self.selected.contains(&expert)
    }
}

/// Gradient buffers for a [`GatingNetwork`].
#[derive(Clone, Debug, PartialEq)]
pub struct GatingGrads {
    pub w_gate: Vec<f64>,
    pub w_noise: Vec<f64>,
}

impl GatingGrads {
    pub fn zeros_like(g: &GatingNetwork) -> Self {
        Self {
            w_gate: vec![0.0; g.w_gate.len()],
            w_noise: vec![0.0; g.w_noise.len()],
        }
    }

    pub fn tensors(&self) -> Vec<&[f64]> {
        vec![&self.w_gate, &self.w_noise]
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![&mut self.w_gate, &mut self.w_noise]
    }

    pub fn clear(&mut self) {
        self.w_gate.fill(0.0);
        self.w_noise.fill(0.0);
    }
}

/// Indices of the `k` largest scores; ties go to the lower index.
fn top_k_indices(scores: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order.truncate(k);
    order
}

/// Keeps the `k` largest entries and sets the rest to `-inf`.
pub fn keep_top_k(scores: &[f64], k: usize) -> Result<Vec<f64>> {
    if k == 0 || k > scores.len() {
        return Err(Error::invalid(format!("k = {k} outside 1..={}", scores.len())));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("gate scores".into()));
    }
    let keep = top_k_indices(scores, k);
    Ok(scores
        .iter()
        .enumerate()
        .map(|(i, &s)| if keep.contains(&i) { s } else { f64::NEG_INFINITY })
        .collect())
}

/// The k-th highest noisy score among the experts other than `expert`, with
/// the index it came from.
fn kth_excluding(noisy: &[f64], expert: usize, k: usize) -> (f64, usize) {
    let mut others: Vec<usize> = (0..noisy.len()).filter(|&j| j != expert).collect();
    others.sort_by(|&a, &b| noisy[b].total_cmp(&noisy[a]).then(a.cmp(&b)));
    let j = others[k - 1];
    (noisy[j], j)
}

impl GatingNetwork {
    /// Zero-initialised gate: every expert starts with the same score.
    pub fn new(num_items: usize, num_experts: usize, k: usize) -> Result<Self> {
        if num_experts == 0 || k == 0 || k > num_experts {
            return Err(Error::invalid(format!("k = {k} must lie in 1..={num_experts}")));
        }
        Ok(Self {
            num_items,
            num_experts,
            k,
            w_gate: vec![0.0; num_items * num_experts],
            w_noise: vec![0.0; num_items * num_experts],
        })
    }

    pub fn from_parts(num_items: usize, num_experts: usize, k: usize, w_gate: Vec<f64>, w_noise: Vec<f64>) -> Result<Self> {
        let mut g = Self::new(num_items, num_experts, k)?;
        if w_gate.len() != g.w_gate.len() {
            return Err(Error::dim("gate weights", g.w_gate.len(), w_gate.len()));
        }
        if w_noise.len() != g.w_noise.len() {
            return Err(Error::dim("noise weights", g.w_noise.len(), w_noise.len()));
        }
        g.w_gate = w_gate;
        g.w_noise = w_noise;
        Ok(g)
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn num_experts(&self) -> usize {
        self.num_experts
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn set_k(&mut self, k: usize) -> Result<()> {
        if k == 0 || k > self.num_experts {
            return Err(Error::invalid(format!("k = {k} must lie in 1..={}", self.num_experts)));
        }
        self.k = k;
        Ok(())
    }

    pub fn num_parameters(&self) -> usize {
        self.w_gate.len() + self.w_noise.len()
    }

    pub fn tensors(&self) -> Vec<&[f64]> {
        vec![&self.w_gate, &self.w_noise]
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![&mut self.w_gate, &mut self.w_noise]
    }

    fn project(&self, weights: &[f64], x: &[f64]) -> Vec<f64> {
        let e = self.num_experts;
        let mut out = vec![0.0; e];
        for (d, &xd) in x.iter().enumerate() {
            if xd != 0.0 {
                for (o, w) in out.iter_mut().zip(&weights[d * e..(d + 1) * e]) {
                    *o += xd * w;
                }
            }
        }
        out
    }

    /// Gate decision for `x`. Passing an RNG samples the training-time noise;
    /// `None` gives the deterministic inference decision.
    pub fn forward(&self, x: &[f64], rng: Option<&mut Rng>) -> Result<GateDecision> {
        if x.len() != self.num_items {
            return Err(Error::dim("gate input", self.num_items, x.len()));
        }
        let clean_scores = self.project(&self.w_gate, x);
        let noise_logits = self.project(&self.w_noise, x);
        let noise_scales: Vec<f64> = noise_logits.iter().map(|&n| softplus_scalar(n)).collect();
        let noise: Vec<f64> = match rng {
            Some(rng) => (0..self.num_experts).map(|_| rng.std_normal()).collect(),
            None => vec![0.0; self.num_experts],
        };
        let noisy_scores: Vec<f64> = clean_scores
            .iter()
            .zip(&noise)
            .zip(&noise_scales)
            .map(|((c, e), s)| c + e * s)
            .collect();
        let kept = keep_top_k(&noisy_scores, self.k)?;
        let weights = softmax(&kept)?;
        let mut selected = top_k_indices(&noisy_scores, self.k);
        selected.sort_unstable();
        Ok(GateDecision {
            k: self.k,
            weights,
            clean_scores,
            noise_logits,
            noise_scales,
            noise,
            noisy_scores,
            selected,
        })
    }

    /// Adds the gradient of a loss into `grads`, given the loss gradient with
    /// respect to this decision's weights (`grad_weights`, only selected
    /// entries matter) and with respect to its selection probabilities
    /// (`grad_load`, see [`load_probability`]).
    pub(crate) fn accumulate_backward(
        &self,
        x: &[f64],
        decision: &GateDecision,
        grad_weights: &[f64],
        grad_load: &[f64],
        grads: &mut GatingGrads,
    ) {
        let e = self.num_experts;
        let g = &decision.weights;
        let inner: f64 = decision.selected.iter().map(|&i| g[i] * grad_weights[i]).sum();
        let mut d_noisy = vec![0.0; e];
        for &i in &decision.selected {
            d_noisy[i] = g[i] * (grad_weights[i] - inner);
        }

        let mut d_clean = d_noisy.clone();
        let mut d_scale: Vec<f64> = d_noisy.iter().zip(&decision.noise).map(|(d, n)| d * n).collect();

        if decision.k < e {
            for i in 0..e {
                if grad_load[i] == 0.0 {
                    continue;
                }
                let (threshold, j) = kth_excluding(&decision.noisy_scores, i, decision.k);
                let s = decision.noise_scales[i];
                let z = (decision.clean_scores[i] - threshold) / s;
                let coef = grad_load[i] * std_normal_pdf(z) / s;
                d_clean[i] += coef;
                d_scale[i] -= coef * z;
                // threshold = clean_j + ε_j·scale_j
                d_clean[j] -= coef;
                d_scale[j] -= coef * decision.noise[j];
            }
        }

        let d_logit: Vec<f64> = d_scale
            .iter()
            .zip(&decision.noise_logits)
            .map(|(d, &n)| d * sigmoid_scalar(n))
            .collect();

        for (dx, &xd) in x.iter().enumerate() {
            if xd != 0.0 {
                let row = dx * e..(dx + 1) * e;
                for ((gw, gn), (dc, dl)) in grads.w_gate[row.clone()]
                    .iter_mut()
                    .zip(&mut grads.w_noise[row])
                    .zip(d_clean.iter().zip(&d_logit))
                {
                    *gw += xd * dc;
                    *gn += xd * dl;
                }
            }
        }
    }
}

/// Probability that `expert` stays in the top k when only its own noise is
/// redrawn: `Φ((clean_i − kth_excluding_i(H)) / scale_i)`. Identically one
/// when every expert is kept.
pub fn load_probability(decision: &GateDecision, expert: usize) -> f64 {
    if decision.k >= decision.num_experts() {
        return 1.0;
    }
    let (threshold, _) = kth_excluding(&decision.noisy_scores, expert, decision.k);
    let z = (decision.clean_scores[expert] - threshold) / decision.noise_scales[expert];
    std_normal_cdf(z)
}

/// `x̂ = Σ G_i·E_i` over the selected experts. Outputs of unselected experts
/// may be `None`; a missing selected output is an error.
pub fn combine(decision: &GateDecision, expert_outputs: &[Option<&[f64]>]) -> Result<Vec<f64>> {
    combine_with(decision, |i| {
        expert_outputs
            .get(i)
            .copied()
            .flatten()
            .map(<[f64]>::to_vec)
            .ok_or_else(|| Error::invalid(format!("missing output for selected expert {i}")))
    })
}

/// Like [`combine`], computing expert outputs on demand. `expert` is only
/// called for selected experts.
pub fn combine_with<F>(decision: &GateDecision, mut expert: F) -> Result<Vec<f64>>
where
    F: FnMut(usize) -> Result<Vec<f64>>,
{
    let mut out: Option<Vec<f64>> = None;
    for &i in &decision.selected {
        let y = expert(i)?;
        let w = decision.weights[i];
        match out.as_mut() {
            None => out = Some(y.iter().map(|v| w * v).collect()),
            Some(acc) => {
                if acc.len() != y.len() {
                    return Err(Error::dim("expert output", acc.len(), y.len()));
                }
                for (a, v) in acc.iter_mut().zip(&y) {
                    *a += w * v;
                }
            }
        }
    }
    out.ok_or_else(|| Error::invalid("gate selected no experts"))
}

/// Per-expert sum of gate weights over a batch.
pub fn importance(decisions: &[GateDecision]) -> Result<Vec<f64>> {
    let first = decisions.first().ok_or_else(|| Error::invalid("empty batch"))?;
    let mut acc = vec![0.0; first.num_experts()];
    for d in decisions {
        for (a, w) in acc.iter_mut().zip(&d.weights) {
            *a += w;
        }
    }
    Ok(acc)
}

/// Per-expert sum of selection probabilities over a batch.
pub fn load(decisions: &[GateDecision]) -> Result<Vec<f64>> {
    let first = decisions.first().ok_or_else(|| Error::invalid("empty batch"))?;
    let mut acc = vec![0.0; first.num_experts()];
    for d in decisions {
        for (e, a) in acc.iter_mut().enumerate() {
            *a += load_probability(d, e);
        }
    }
    Ok(acc)
}

/// `w_i · CV(importance)²`.
pub fn importance_loss(decisions: &[GateDecision], w_importance: f64) -> Result<f64> {
    Ok(w_importance * coefficient_of_variation(&importance(decisions)?)?.powi(2))
}

/// `w_l · CV(load)²`.
pub fn load_loss(decisions: &[GateDecision], w_load: f64) -> Result<f64> {
    Ok(w_load * coefficient_of_variation(&load(decisions)?)?.powi(2))
}

/// Gradients of the two balancing losses with respect to each decision's
/// weights and selection probabilities. The per-expert coefficients are the
/// same for every element of the batch.
pub(crate) fn balancing_grads(
    importance: &[f64],
    load: &[f64],
    w_importance: f64,
    w_load: f64,
) -> (Vec<f64>, Vec<f64>) {
    let gi = cv_squared_grad(importance).into_iter().map(|g| g * w_importance).collect();
    let gl = cv_squared_grad(load).into_iter().map(|g| g * w_load).collect();
    (gi, gl)
}
