//! One training run per (seed, noise rate), shared by every command.
//!
//! Every run uses the same train/test split, fixed by the split seed; the run
//! seed drives initialisation, shuffling, corruption and injected noise. A run
//! optionally adds false positives to the training side, trains on that, and
//! evaluates against the clean split.
//! Rankers read the (possibly noisy) training history as input while ranking
//! still excludes only the genuine training items.

use std::fmt;
use std::time::Instant;

use ael_core::aggregation::{build_ranker, SingleExpertRanker};
use ael_core::dataset::{inject_noise_avoiding, split_train_test};
use ael_core::evaluation::{evaluate, WithHistory};
use ael_core::training::{fit, validation_split};
use ael_core::{
    AelModel, AggregatorKind, GatingNetwork, InteractionMatrix, MetricsReport, Parent, Ranker, SplitDataset,
    TrainConfig, TrainedModel,
};

use crate::error::CliResult;

const NOISE_SALT: u64 = 0x006e_6f69_7365;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RankerChoice {
    Aggregate(AggregatorKind),
    Expert(Parent),
}

impl RankerChoice {
    /// The rankers compared by the noise ablation.
    pub const ABLATION: [RankerChoice; 4] = [
        RankerChoice::Expert(Parent::Mild),
        RankerChoice::Expert(Parent::Moderate),
        RankerChoice::Expert(Parent::Strong),
        RankerChoice::Aggregate(AggregatorKind::Average),
    ];

    pub const AGGREGATORS: [RankerChoice; 3] = [
        RankerChoice::Aggregate(AggregatorKind::SparseGate),
        RankerChoice::Aggregate(AggregatorKind::Average),
        RankerChoice::Aggregate(AggregatorKind::Bma),
    ];

    pub fn name(self) -> &'static str {
        match self {
            RankerChoice::Aggregate(kind) => kind.name(),
            RankerChoice::Expert(parent) => parent.name(),
        }
    }
}

impl fmt::Display for RankerChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// How the dataset is divided into train and test.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitSpec {
    pub ratio: f64,
    pub seed: u64,
}

/// The clean split and the training history a run with `seed` will see.
pub fn prepare(
    data: &InteractionMatrix,
    spec: SplitSpec,
    seed: u64,
    noise_rate: f64,
) -> CliResult<(SplitDataset, InteractionMatrix)> {
    let split = split_train_test(data, spec.ratio, spec.seed)?;
    let history = if noise_rate == 0.0 {
        split.train.clone()
    } else {
        inject_noise_avoiding(&split.train, Some(&split.test), noise_rate, seed ^ NOISE_SALT)?
    };
    Ok((split, history))
}

pub struct Run {
    pub seed: u64,
    pub noise_rate: f64,
    pub config: TrainConfig,
    pub split: SplitDataset,
    pub history: InteractionMatrix,
    pub trained: TrainedModel,
}

impl Run {
    /// Trains with `cfg` (its seed replaced by `seed`).
    pub fn train(
        data: &InteractionMatrix,
        cfg: &TrainConfig,
        seed: u64,
        spec: SplitSpec,
        noise_rate: f64,
    ) -> CliResult<Run> {
        let (split, history) = prepare(data, spec, seed, noise_rate)?;
        let config = TrainConfig { seed, ..cfg.clone() };
        let started = Instant::now();
        let noisy = SplitDataset {
            train: history.clone(),
            test: split.test.clone(),
        };
        let trained = fit(&noisy, &config)?;
        let r = &trained.report;
        eprintln!(
            "seed {seed} k {} noise {noise_rate}: {} epochs, best {} ({:.1}s)",
            config.k,
            r.epochs.len(),
            r.best_epoch,
            started.elapsed().as_secs_f64()
        );
        Ok(Run {
            seed,
            noise_rate,
            config,
            split,
            history,
            trained,
        })
    }

    pub fn evaluate(&self, choice: RankerChoice, cutoffs: &[usize], bma_temperature: f64) -> CliResult<MetricsReport> {
        let scoring = Scoring {
            model: &self.trained.model,
            gating: &self.trained.gating,
            split: &self.split,
            history: &self.history,
            config: &self.config,
        };
        let mut report = scoring.evaluate(choice, cutoffs, bma_temperature)?;
        report.seed = Some(self.seed);
        Ok(report)
    }
}

/// Everything needed to evaluate a frozen model on one split.
pub struct Scoring<'a> {
    pub model: &'a AelModel,
    pub gating: &'a GatingNetwork,
    pub split: &'a SplitDataset,
    /// Model input rows; ranking still excludes `split.train`.
    pub history: &'a InteractionMatrix,
    /// Supplies the validation carve-out used to fit BMA weights.
    pub config: &'a TrainConfig,
}

impl Scoring<'_> {
    pub fn evaluate(&self, choice: RankerChoice, cutoffs: &[usize], bma_temperature: f64) -> CliResult<MetricsReport> {
        match choice {
            RankerChoice::Expert(parent) => self.score(SingleExpertRanker {
                model: self.model,
                parent,
            }, cutoffs),
            RankerChoice::Aggregate(kind) => {
                let validation = match kind {
                    AggregatorKind::Bma => Some(validation_split(self.history, self.config)?),
                    _ => None,
                };
                let ranker = build_ranker(kind, self.model, self.gating, validation.as_ref(), bma_temperature)?;
                self.score(ranker, cutoffs)
            }
        }
    }

    fn score<R: Ranker>(&self, ranker: R, cutoffs: &[usize]) -> CliResult<MetricsReport> {
        let ranker = WithHistory {
            ranker,
            history: self.history,
        };
        Ok(evaluate(&ranker, self.split, cutoffs)?)
    }
}
