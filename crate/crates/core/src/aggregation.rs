//! Ways to turn the three experts into one ranker: the learned sparse gate,
//! plain averaging, static Bayesian-model-averaging weights, or a single
//! expert on its own.

use std::fmt;
use std::str::FromStr;

use crate::dataset::SplitDataset;
use crate::error::{Error, Result};
use crate::evaluation::Ranker;
use crate::gating::{combine_with, GatingNetwork, NUM_EXPERTS};
use crate::model::{AelModel, Parent};
use crate::numerics::{mse, softmax};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AggregatorKind {
    SparseGate,
    Average,
    Bma,
}

impl AggregatorKind {
    pub const ALL: [AggregatorKind; 3] = [AggregatorKind::SparseGate, AggregatorKind::Average, AggregatorKind::Bma];

    pub fn name(self) -> &'static str {
        match self {
            AggregatorKind::SparseGate => "gate",
            AggregatorKind::Average => "average",
            AggregatorKind::Bma => "bma",
        }
    }
}

impl fmt::Display for AggregatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AggregatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gate" | "sparse-gate" | "sparsegate" => Ok(AggregatorKind::SparseGate),
            "average" | "avg" => Ok(AggregatorKind::Average),
            "bma" => Ok(AggregatorKind::Bma),
            other => Err(Error::invalid(format!("unknown aggregator `{other}` (expected gate, average or bma)"))),
        }
    }
}

/// Elementwise mean of equal-length expert outputs.
pub fn average_combine(outputs: &[&[f64]]) -> Result<Vec<f64>> {
    let first = outputs.first().ok_or_else(|| Error::invalid("no expert outputs"))?;
    let mut acc = vec![0.0; first.len()];
    for out in outputs {
        if out.len() != acc.len() {
            return Err(Error::dim("expert output", acc.len(), out.len()));
        }
        for (a, v) in acc.iter_mut().zip(out.iter()) {
            *a += v;
        }
    }
    let n = outputs.len() as f64;
    Ok(acc.into_iter().map(|a| a / n).collect())
}

/// `w_i ∝ exp(−loss_i / temperature)`.
pub fn bma_weights(validation_losses: &[f64], temperature: f64) -> Result<Vec<f64>> {
    if !temperature.is_finite() || temperature <= 0.0 {
        return Err(Error::invalid(format!("BMA temperature must be positive, got {temperature}")));
    }
    if validation_losses.iter().any(|l| !l.is_finite()) {
        return Err(Error::NonFinite("validation losses".into()));
    }
    let logits: Vec<f64> = validation_losses.iter().map(|l| -l / temperature).collect();
    softmax(&logits)
}

/// Mean reconstruction MSE of each expert alone over users with held-out
/// validation items. Input is the user's `train` row; the target is the
/// union of their `train` and `test` rows.
pub fn expert_validation_losses(model: &AelModel, validation: &SplitDataset) -> Result<[f64; NUM_EXPERTS]> {
    let users = validation.evaluable_users();
    if users.is_empty() {
        return Err(Error::invalid("validation split has no held-out items"));
    }
    let mut losses = [0.0; NUM_EXPERTS];
    for &u in &users {
        let input = validation.train.dense_row(u);
        let mut target = input.clone();
        for &i in validation.test.row(u) {
            target[i] = 1.0;
        }
        for p in Parent::ALL {
            losses[p.index()] += mse(&model.parent_forward(p, u, &input)?, &target)?;
        }
    }
    for l in &mut losses {
        *l /= users.len() as f64;
    }
    Ok(losses)
}

/// The trained gate at inference: clean scores, top-k, softmax, and only
/// the selected experts evaluated.
#[derive(Clone, Copy, Debug)]
pub struct GatedRanker<'a> {
    pub model: &'a AelModel,
    pub gating: &'a GatingNetwork,
}

impl Ranker for GatedRanker<'_> {
    fn score(&self, user: usize, input: &[f64]) -> Result<Vec<f64>> {
        let decision = self.gating.forward(input, None)?;
        combine_with(&decision, |i| {
            let parent = Parent::from_index(i).ok_or_else(|| Error::invalid(format!("no expert {i}")))?;
            self.model.parent_forward(parent, user, input)
        })
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SingleExpertRanker<'a> {
    pub model: &'a AelModel,
    pub parent: Parent,
}

impl Ranker for SingleExpertRanker<'_> {
    fn score(&self, user: usize, input: &[f64]) -> Result<Vec<f64>> {
        self.model.parent_forward(self.parent, user, input)
    }
}

pub fn single_expert_ranker<'a>(model: &'a AelModel, parent_name: &str) -> Result<SingleExpertRanker<'a>> {
    Ok(SingleExpertRanker {
        model,
        parent: parent_name.parse()?,
    })
}

/// Fixed convex weights over the three experts (averaging or BMA).
#[derive(Clone, Copy, Debug)]
pub struct ExpertMix<'a> {
    pub model: &'a AelModel,
    pub weights: [f64; NUM_EXPERTS],
}

impl<'a> ExpertMix<'a> {
    pub fn average(model: &'a AelModel) -> Self {
        Self {
            model,
            weights: [1.0 / NUM_EXPERTS as f64; NUM_EXPERTS],
        }
    }

    pub fn bma(model: &'a AelModel, validation_losses: &[f64; NUM_EXPERTS], temperature: f64) -> Result<Self> {
        let w = bma_weights(validation_losses, temperature)?;
        Ok(Self {
            model,
            weights: [w[0], w[1], w[2]],
        })
    }
}

impl Ranker for ExpertMix<'_> {
    fn score(&self, user: usize, input: &[f64]) -> Result<Vec<f64>> {
        let mut acc = vec![0.0; self.model.num_items()];
        for p in Parent::ALL {
            let w = self.weights[p.index()];
            if w == 0.0 {
                continue;
            }
            let y = self.model.parent_forward(p, user, input)?;
            for (a, v) in acc.iter_mut().zip(&y) {
                *a += w * v;
            }
        }
        Ok(acc)
    }
}

/// Builds the ranker for `kind`. BMA needs the validation split its weights
/// are fitted on.
pub fn build_ranker<'a>(
    kind: AggregatorKind,
    model: &'a AelModel,
    gating: &'a GatingNetwork,
    validation: Option<&SplitDataset>,
    temperature: f64,
) -> Result<Box<dyn Ranker + 'a>> {
    Ok(match kind {
        AggregatorKind::SparseGate => Box::new(GatedRanker { model, gating }),
        AggregatorKind::Average => Box::new(ExpertMix::average(model)),
        AggregatorKind::Bma => {
            let validation = validation.ok_or_else(|| Error::invalid("BMA needs a validation split"))?;
            let losses = expert_validation_losses(model, validation)?;
            Box::new(ExpertMix::bma(model, &losses, temperature)?)
        }
    })
}
