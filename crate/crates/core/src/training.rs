//! Mask-out corruption, the batch objective and its gradients, optional
//! greedy layerwise pretraining, and the joint training loop with early
//! stopping on validation Recall@5.
//!
//! The batch objective is
//!
//! ```text
//! L = mean_u mse(x̂_u, x_u) + w_i·CV(importance)² + w_l·CV(load)² + λ/2·‖θ‖²
//! ```
//!
//! where `x̂_u` mixes the selected experts' reconstructions of the corrupted
//! row `x̃_u` and the target is the clean row `x_u`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use crate::aggregation::GatedRanker;
use crate::dataset::{InteractionMatrix, SplitDataset};
use crate::error::{Error, Result};
use crate::evaluation::evaluate;
use crate::gating::{self, GateDecision, GatingGrads, GatingNetwork, NUM_EXPERTS};
use crate::model::{AelModel, HiddenDims, Level, ModelGrads, Parent, ParentTrace, SubAe, SubAeGrads};
use crate::numerics::{coefficient_of_variation, dot, mse, Adam, AdamConfig, Rng};

// independent RNG streams derived from the training seed
const STREAM_INIT: u64 = 0;
const STREAM_SHUFFLE: u64 = 1;
const STREAM_NOISE: u64 = 2;
const STREAM_PRETRAIN: u64 = 3;
const VALIDATION_SALT: u64 = 0x05ee_d0f0_a11d;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    /// Joint-phase Adam rate for the gating network.
    pub learning_rate: f64,
    /// Joint-phase Adam rate for the sub-autoencoders.
    pub expert_learning_rate: f64,
    /// Users per mini-batch.
    pub batch_size: usize,
    pub epochs: usize,
    /// Mask-out probability `q` for each positive entry.
    pub corruption: f64,
    pub l2_lambda: f64,
    pub w_importance: f64,
    pub w_load: f64,
    pub k: usize,
    pub seed: u64,
    /// Epochs per pretraining stage; 0 skips pretraining.
    pub pretrain_epochs: usize,
    pub pretrain_learning_rate: f64,
    pub pretrain_batch_size: usize,
    /// Epochs without a new best validation Recall@5 before stopping; 0 disables.
    pub early_stop_patience: usize,
    pub hidden_dims: HiddenDims,
    /// Share of each user's training row held out for early stopping.
    pub validation_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-2,
            expert_learning_rate: 1e-4,
            batch_size: 256,
            epochs: 200,
            corruption: 0.3,
            l2_lambda: 1e-5,
            w_importance: 1e-2,
            w_load: 1e-2,
            k: 2,
            seed: 0,
            pretrain_epochs: 40,
            pretrain_learning_rate: 3e-3,
            pretrain_batch_size: 32,
            early_stop_patience: 10,
            hidden_dims: HiddenDims::default(),
            validation_fraction: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let nonneg = [
            ("learning_rate", self.learning_rate),
            ("expert_learning_rate", self.expert_learning_rate),
            ("pretrain_learning_rate", self.pretrain_learning_rate),
            ("l2_lambda", self.l2_lambda),
            ("w_importance", self.w_importance),
            ("w_load", self.w_load),
        ];
        for (name, v) in nonneg {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::invalid(format!("{name} must be a finite value >= 0, got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&self.corruption) {
            return Err(Error::invalid(format!("corruption must lie in [0, 1], got {}", self.corruption)));
        }
        if !(1..=NUM_EXPERTS).contains(&self.k) {
            return Err(Error::invalid(format!("k must lie in 1..={NUM_EXPERTS}, got {}", self.k)));
        }
        if self.batch_size == 0 || self.pretrain_batch_size == 0 {
            return Err(Error::invalid("batch sizes must be positive"));
        }
        if !(self.validation_fraction >= 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::invalid("validation_fraction must lie in [0, 1)"));
        }
        HiddenDims::new(self.hidden_dims.0)?;
        Ok(())
    }
}

/// Zeroes each positive entry independently with probability `q`. Zeros
/// stay zero and survivors are not rescaled.
pub fn corrupt(x: &[f64], q: f64, rng: &mut Rng) -> Vec<f64> {
    x.iter()
        .map(|&v| if v != 0.0 && rng.unit() < q { 0.0 } else { v })
        .collect()
}

/// `λ/2 · Σ θ²` over every weight, bias and embedding, gate included.
pub fn l2_regularizer(model: &AelModel, gating: Option<&GatingNetwork>, lambda: f64) -> f64 {
    if lambda == 0.0 {
        return 0.0;
    }
    let gate = gating.map(GatingNetwork::tensors).unwrap_or_default();
    let sq: f64 = model
        .tensors()
        .into_iter()
        .chain(gate)
        .map(|t| t.iter().map(|v| v * v).sum::<f64>())
        .sum();
    0.5 * lambda * sq
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossComponents {
    pub reconstruction: f64,
    pub importance: f64,
    pub load: f64,
    pub regularizer: f64,
}

impl LossComponents {
    pub fn total(&self) -> f64 {
        self.reconstruction + self.importance + self.load + self.regularizer
    }

    fn is_finite(&self) -> bool {
        self.total().is_finite()
    }
}

/// Loss of one batch plus the gate's per-expert importance sums.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchOutcome {
    pub components: LossComponents,
    pub importance: Vec<f64>,
}

/// Gradients of the full batch objective.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub model: ModelGrads,
    pub gating: GatingGrads,
}

impl Gradients {
    pub fn zeros_like(model: &AelModel, gating: &GatingNetwork) -> Self {
        Self {
            model: ModelGrads::zeros_like(model),
            gating: GatingGrads::zeros_like(gating),
        }
    }

    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut t = self.model.tensors();
        t.extend(self.gating.tensors());
        t
    }

    fn clear(&mut self) {
        self.model.clear();
        self.gating.clear();
    }
}

/// The batch objective. `rng` supplies the corruption masks and gate noise.
pub fn batch_loss(
    model: &AelModel,
    gating: &GatingNetwork,
    batch: &[usize],
    data: &InteractionMatrix,
    cfg: &TrainConfig,
    rng: &mut Rng,
) -> Result<(f64, LossComponents)> {
    let outcome = run_batch(model, gating, batch, data, cfg, rng, None)?;
    Ok((outcome.components.total(), outcome.components))
}

/// The batch objective and its gradient with respect to every parameter.
pub fn batch_loss_and_grads(
    model: &AelModel,
    gating: &GatingNetwork,
    batch: &[usize],
    data: &InteractionMatrix,
    cfg: &TrainConfig,
    rng: &mut Rng,
) -> Result<(BatchOutcome, Gradients)> {
    let mut grads = Gradients::zeros_like(model, gating);
    let outcome = run_batch(model, gating, batch, data, cfg, rng, Some(&mut grads))?;
    Ok((outcome, grads))
}

struct Sample {
    user: usize,
    clean: Vec<f64>,
    corrupted: Vec<f64>,
    traces: Vec<ParentTrace>,
    output: Vec<f64>,
}

fn run_batch(
    model: &AelModel,
    gating: &GatingNetwork,
    batch: &[usize],
    data: &InteractionMatrix,
    cfg: &TrainConfig,
    rng: &mut Rng,
    grads: Option<&mut Gradients>,
) -> Result<BatchOutcome> {
    if batch.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    if data.num_items() != model.num_items() || data.num_users() != model.num_users() {
        return Err(Error::invalid("dataset shape does not match the model"));
    }
    let items = data.num_items() as f64;
    let size = batch.len() as f64;

    let mut samples = Vec::with_capacity(batch.len());
    let mut decisions: Vec<GateDecision> = Vec::with_capacity(batch.len());
    let mut reconstruction = 0.0;
    for &user in batch {
        if user >= data.num_users() {
            return Err(Error::OutOfRange {
                context: "batch user",
                index: user,
                len: data.num_users(),
            });
        }
        let clean = data.dense_row(user);
        let corrupted = corrupt(&clean, cfg.corruption, rng);
        let decision = gating.forward(&corrupted, Some(rng))?;
        let traces: Vec<ParentTrace> = decision
            .selected
            .iter()
            .map(|&i| model.trace_unchecked(Parent::ALL[i], user, &corrupted))
            .collect();
        let mut output = vec![0.0; clean.len()];
        for trace in &traces {
            let w = decision.weights[trace.parent.index()];
            for (o, v) in output.iter_mut().zip(trace.output()) {
                *o += w * v;
            }
        }
        reconstruction += mse(&output, &clean)?;
        samples.push(Sample {
            user,
            clean,
            corrupted,
            traces,
            output,
        });
        decisions.push(decision);
    }
    reconstruction /= size;

    let importance = gating::importance(&decisions)?;
    let load = gating::load(&decisions)?;
    let components = LossComponents {
        reconstruction,
        importance: cfg.w_importance * coefficient_of_variation(&importance)?.powi(2),
        load: cfg.w_load * coefficient_of_variation(&load)?.powi(2),
        regularizer: l2_regularizer(model, Some(gating), cfg.l2_lambda),
    };

    if let Some(grads) = grads {
        let (grad_importance, grad_load) =
            gating::balancing_grads(&importance, &load, cfg.w_importance, cfg.w_load);
        for (sample, decision) in samples.iter().zip(&decisions) {
            let grad_output: Vec<f64> = sample
                .output
                .iter()
                .zip(&sample.clean)
                .map(|(y, x)| 2.0 * (y - x) / (items * size))
                .collect();
            let mut grad_weights = grad_importance.clone();
            for trace in &sample.traces {
                grad_weights[trace.parent.index()] += dot(&grad_output, trace.output());
            }
            gating.accumulate_backward(&sample.corrupted, decision, &grad_weights, &grad_load, &mut grads.gating);
            for trace in &sample.traces {
                let w = decision.weights[trace.parent.index()];
                let scaled: Vec<f64> = grad_output.iter().map(|g| w * g).collect();
                debug_assert_eq!(trace.user, sample.user);
                model.accumulate_backward(trace, &sample.corrupted, &scaled, &mut grads.model);
            }
        }
        if cfg.l2_lambda != 0.0 {
            let params = model.tensors().into_iter().chain(gating.tensors());
            let slots = grads.model.tensors_mut().into_iter().chain(grads.gating.tensors_mut());
            for (p, g) in params.zip(slots) {
                for (gi, pi) in g.iter_mut().zip(p) {
                    *gi += cfg.l2_lambda * pi;
                }
            }
        }
    }

    Ok(BatchOutcome { components, importance })
}

/// Per-epoch means of the loss components (weighted by batch size) and the
/// gate's expert usage.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub components: LossComponents,
    /// Share of total gate weight each expert received this epoch.
    pub importance_share: [f64; NUM_EXPERTS],
    /// CV of the epoch-summed importance vector.
    pub importance_cv: f64,
    pub val_recall_at_5: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PretrainStage {
    pub level: Level,
    /// Mean per-epoch stage loss (reconstruction + level regulariser).
    pub losses: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    pub pretrain: Vec<PretrainStage>,
    pub epochs: Vec<EpochStats>,
    /// Validation Recall@5 before the first joint epoch.
    pub initial_val_recall: Option<f64>,
    /// Epoch whose parameters were kept (0 means the initial ones).
    pub best_epoch: usize,
    pub best_val_recall: Option<f64>,
    pub stopped_early: bool,
    pub wall_clock: Duration,
    pub checkpoint: Option<PathBuf>,
}

impl TrainReport {
    pub const LOG_HEADER: &'static str = "epoch,recon_loss,importance_loss,load_loss,reg,val_recall@5,importance_share_mild,importance_share_moderate,importance_share_strong";

    /// The training log as CSV, one row per joint epoch.
    pub fn log_csv(&self) -> String {
        let mut out = String::from(Self::LOG_HEADER);
        out.push('\n');
        for e in &self.epochs {
            let c = &e.components;
            let recall = e.val_recall_at_5.map(|r| r.to_string()).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                e.epoch,
                c.reconstruction,
                c.importance,
                c.load,
                c.regularizer,
                recall,
                e.importance_share[0],
                e.importance_share[1],
                e.importance_share[2]
            );
        }
        out
    }

    pub fn write_log_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.log_csv()).map_err(|source| Error::Io {
            path: path.to_owned(),
            source,
        })
    }
}

/// Parameters after training together with the report.
#[derive(Clone, Debug)]
pub struct TrainedModel {
    pub model: AelModel,
    pub gating: GatingNetwork,
    pub report: TrainReport,
}

/// The per-user carve-out of a training matrix used for early stopping.
/// `train` holds the rows the model fits, `test` the held-out validation
/// items: `max(1, floor(fraction·len))` of every row with at least two items.
pub fn validation_split(train: &InteractionMatrix, cfg: &TrainConfig) -> Result<SplitDataset> {
    let mut rng = Rng::new(cfg.seed ^ VALIDATION_SALT);
    let mut fit_rows = Vec::with_capacity(train.num_users());
    let mut held_rows = Vec::with_capacity(train.num_users());
    for row in train.rows() {
        let mut items = row.clone();
        let held = if cfg.validation_fraction > 0.0 && items.len() >= 2 {
            ((cfg.validation_fraction * items.len() as f64).floor() as usize).max(1)
        } else {
            0
        };
        rng.shuffle(&mut items);
        let kept = items.len() - held;
        held_rows.push(items.split_off(kept));
        fit_rows.push(items);
    }
    Ok(SplitDataset {
        train: InteractionMatrix::from_rows(train.num_users(), train.num_items(), fit_rows)?,
        test: InteractionMatrix::from_rows(train.num_users(), train.num_items(), held_rows)?,
    })
}

/// Initialises a model and gate from `cfg.seed` and trains them.
pub fn fit(split: &SplitDataset, cfg: &TrainConfig) -> Result<TrainedModel> {
    cfg.validate()?;
    let mut init_rng = Rng::new(cfg.seed).fork(STREAM_INIT);
    let mut model = AelModel::new(split.num_users(), split.num_items(), cfg.hidden_dims, &mut init_rng)?;
    let mut gating = GatingNetwork::new(split.num_items(), NUM_EXPERTS, cfg.k)?;
    let report = train(&mut model, &mut gating, split, cfg)?;
    Ok(TrainedModel { model, gating, report })
}

fn validation_recall(model: &AelModel, gating: &GatingNetwork, validation: &SplitDataset) -> Result<Option<f64>> {
    if validation.evaluable_users().is_empty() {
        return Ok(None);
    }
    let report = evaluate(&GatedRanker { model, gating }, validation, &[5])?;
    Ok(Some(report.recall[0]))
}

/// Joint training on `split.train` (the test rows are never read). On return
/// the model and gate hold the parameters of the best validation epoch.
pub fn train(
    model: &mut AelModel,
    gating: &mut GatingNetwork,
    split: &SplitDataset,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    cfg.validate()?;
    if split.train.num_interactions() == 0 {
        return Err(Error::EmptyDataset);
    }
    if gating.k() != cfg.k {
        gating.set_k(cfg.k)?;
    }
    let started = Instant::now();
    let validation = validation_split(&split.train, cfg)?;
    let fit_rows = &validation.train;

    let base = Rng::new(cfg.seed);
    let pretrain = if cfg.pretrain_epochs > 0 {
        pretrain_layerwise(model, fit_rows, cfg)?
    } else {
        Vec::new()
    };

    let mut shuffle_rng = base.fork(STREAM_SHUFFLE);
    let mut noise_rng = base.fork(STREAM_NOISE);
    let mut expert_adam = Adam::new(AdamConfig {
        learning_rate: cfg.expert_learning_rate,
        ..AdamConfig::default()
    });
    let mut gate_adam = Adam::new(AdamConfig {
        learning_rate: cfg.learning_rate,
        ..AdamConfig::default()
    });
    let mut users: Vec<usize> = (0..fit_rows.num_users())
        .filter(|&u| !fit_rows.row(u).is_empty())
        .collect();
    let mut grads = Gradients::zeros_like(model, gating);

    let initial_val_recall = validation_recall(model, gating, &validation)?;
    let mut best_val_recall = initial_val_recall;
    let mut best_epoch = 0;
    let mut best_params = initial_val_recall.map(|_| (model.clone(), gating.clone()));
    let mut since_best = 0;
    let mut stopped_early = false;
    let mut epochs = Vec::new();

    for epoch in 1..=cfg.epochs {
        shuffle_rng.shuffle(&mut users);
        let mut sums = LossComponents::default();
        let mut importance = [0.0; NUM_EXPERTS];
        for (b, batch) in users.chunks(cfg.batch_size).enumerate() {
            grads.clear();
            let outcome = run_batch(model, gating, batch, fit_rows, cfg, &mut noise_rng, Some(&mut grads))?;
            let c = outcome.components;
            if !c.is_finite() {
                return Err(Error::NonFinite(format!("loss at epoch {epoch}, batch {b}: {c:?}")));
            }
            let w = batch.len() as f64;
            sums.reconstruction += w * c.reconstruction;
            sums.importance += w * c.importance;
            sums.load += w * c.load;
            sums.regularizer += w * c.regularizer;
            for (acc, v) in importance.iter_mut().zip(&outcome.importance) {
                *acc += v;
            }
            expert_adam.step(&mut model.tensors_mut(), &grads.model.tensors())?;
            gate_adam.step(&mut gating.tensors_mut(), &grads.gating.tensors())?;
        }
        let n = users.len() as f64;
        let components = LossComponents {
            reconstruction: sums.reconstruction / n,
            importance: sums.importance / n,
            load: sums.load / n,
            regularizer: sums.regularizer / n,
        };
        let total: f64 = importance.iter().sum();
        let importance_share = importance.map(|v| v / total);
        let val_recall_at_5 = validation_recall(model, gating, &validation)?;
        epochs.push(EpochStats {
            epoch,
            components,
            importance_share,
            importance_cv: coefficient_of_variation(&importance)?,
            val_recall_at_5,
        });

        if let (Some(current), Some(best)) = (val_recall_at_5, best_val_recall) {
            if current > best {
                best_val_recall = Some(current);
                best_epoch = epoch;
                best_params = Some((model.clone(), gating.clone()));
                since_best = 0;
            } else {
                since_best += 1;
                if cfg.early_stop_patience > 0 && since_best >= cfg.early_stop_patience {
                    stopped_early = true;
                    break;
                }
            }
        } else {
            best_epoch = epoch;
        }
    }

    if let Some((m, g)) = best_params {
        if best_epoch != epochs.len() {
            *model = m;
            *gating = g;
        }
    }

    Ok(TrainReport {
        pretrain,
        epochs,
        initial_val_recall,
        best_epoch,
        best_val_recall,
        stopped_early,
        wall_clock: started.elapsed(),
        checkpoint: None,
    })
}

/// Greedy stage-wise pretraining: Large reconstructs the clean row from the
/// corrupted one, then Medium reconstructs Large's code, then Small
/// reconstructs Medium's code. Earlier levels are frozen during later stages.
pub fn pretrain_layerwise(model: &mut AelModel, data: &InteractionMatrix, cfg: &TrainConfig) -> Result<Vec<PretrainStage>> {
    if cfg.pretrain_epochs == 0 {
        return Ok(Vec::new());
    }
    let mut rng = Rng::new(cfg.seed).fork(STREAM_PRETRAIN);
    Level::ALL
        .iter()
        .map(|&level| {
            let losses = pretrain_level(model, data, level, cfg, &mut rng)?;
            Ok(PretrainStage { level, losses })
        })
        .collect()
}

/// One pretraining stage: `cfg.pretrain_epochs` epochs updating only `level`.
/// Returns the mean loss of each epoch.
pub fn pretrain_level(
    model: &mut AelModel,
    data: &InteractionMatrix,
    level: Level,
    cfg: &TrainConfig,
    rng: &mut Rng,
) -> Result<Vec<f64>> {
    let mut users: Vec<usize> = (0..data.num_users()).filter(|&u| !data.row(u).is_empty()).collect();
    if users.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut adam = Adam::new(AdamConfig {
        learning_rate: cfg.pretrain_learning_rate,
        ..AdamConfig::default()
    });
    let mut grads = ModelGrads::zeros_like(model);
    let mut losses = Vec::with_capacity(cfg.pretrain_epochs);
    for _ in 0..cfg.pretrain_epochs {
        rng.shuffle(&mut users);
        let mut epoch_loss = 0.0;
        for batch in users.chunks(cfg.pretrain_batch_size) {
            grads.clear();
            let g = &mut grads.levels[level.index()];
            let mut batch_loss = 0.0;
            for &u in batch {
                let clean = data.dense_row(u);
                let corrupted = corrupt(&clean, cfg.corruption, rng);
                // frozen lower levels produce this level's input and target
                let (input, target) = match level {
                    Level::Large => (corrupted, clean),
                    _ => {
                        let mut code = corrupted;
                        for lower in &Level::ALL[..level.index()] {
                            code = model.level(*lower).encode(u, &code)?;
                        }
                        (code.clone(), code)
                    }
                };
                let sub = model.level(level);
                let code = sub.encode(u, &input)?;
                let out = sub.decode(&code)?;
                batch_loss += mse(&out, &target)?;
                let scale = 2.0 / (out.len() as f64 * batch.len() as f64);
                let grad_out: Vec<f64> = out.iter().zip(&target).map(|(y, t)| scale * (y - t)).collect();
                level_backward(sub, u, &input, &code, &out, &grad_out, g);
            }
            batch_loss /= batch.len() as f64;
            let sub = model.level(level);
            let params: [&[f64]; 5] = [
                &sub.encoder.weight,
                &sub.encoder.bias,
                &sub.user_embedding,
                &sub.decoder.weight,
                &sub.decoder.bias,
            ];
            let reg = 0.5 * cfg.l2_lambda * params.iter().map(|t| t.iter().map(|v| v * v).sum::<f64>()).sum::<f64>();
            let slots: [&mut Vec<f64>; 5] = [
                &mut g.encoder_weight,
                &mut g.encoder_bias,
                &mut g.user_embedding,
                &mut g.decoder_weight,
                &mut g.decoder_bias,
            ];
            for (slot, p) in slots.into_iter().zip(params) {
                for (gi, pi) in slot.iter_mut().zip(p) {
                    *gi += cfg.l2_lambda * pi;
                }
            }
            let total = batch_loss + reg;
            if !total.is_finite() {
                return Err(Error::NonFinite(format!("pretraining loss for {level:?}")));
            }
            epoch_loss += total * batch.len() as f64;
            adam.step(&mut model.level_tensors_mut(level), &grads.level(level))?;
        }
        losses.push(epoch_loss / users.len() as f64);
    }
    Ok(losses)
}

fn level_backward(
    sub: &SubAe,
    user: usize,
    input: &[f64],
    code: &[f64],
    out: &[f64],
    grad_out: &[f64],
    g: &mut SubAeGrads,
) {
    let pre: Vec<f64> = grad_out.iter().zip(out).map(|(g, y)| g * y * (1.0 - y)).collect();
    let mut grad_code = vec![0.0; code.len()];
    sub.decoder
        .accumulate_backward(code, &pre, &mut g.decoder_weight, &mut g.decoder_bias, Some(&mut grad_code));
    let pre: Vec<f64> = grad_code.iter().zip(code).map(|(g, z)| g * z * (1.0 - z)).collect();
    let k = code.len();
    for (r, p) in g.user_embedding[user * k..(user + 1) * k].iter_mut().zip(&pre) {
        *r += p;
    }
    sub.encoder
        .accumulate_backward(input, &pre, &mut g.encoder_weight, &mut g.encoder_bias, None);
}

#[cfg(test)]
mod tests;
