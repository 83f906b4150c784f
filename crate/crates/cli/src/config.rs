//! Run configuration. Values are layered: built-in defaults, then a flat
//! `key = value` file, then command-line flags. Every layer goes through
//! [`Config::set`], so a key means the same thing wherever it appears.

use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ael_core::dataset::{self, Format};
use ael_core::{AggregatorKind, InteractionMatrix, TrainConfig};

use crate::error::{CliError, CliResult};
use crate::experiment::SplitSpec;

#[derive(Clone, Debug, PartialEq)]
pub struct Config {
    pub train: TrainConfig,
    /// A file path, or `synthetic:UxD[:SEED]` for generated data.
    pub dataset: Option<String>,
    pub format: Option<Format>,
    pub out: PathBuf,
    pub cutoffs: Vec<usize>,
    pub seeds: Vec<u64>,
    pub aggregator: AggregatorKind,
    pub rates: Vec<f64>,
    pub split_ratio: f64,
    pub split_seed: u64,
    pub bma_temperature: f64,
    pub checkpoint: Option<PathBuf>,
    pub users: Option<usize>,
    pub items: Option<usize>,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            dataset: None,
            format: None,
            out: PathBuf::from("out"),
            cutoffs: vec![5, 20],
            seeds: vec![0, 1, 2, 3, 4],
            aggregator: AggregatorKind::SparseGate,
            rates: vec![0.0, 0.25, 0.5, 1.0],
            split_ratio: 0.8,
            split_seed: 0,
            bma_temperature: 1.0,
            checkpoint: None,
            users: None,
            items: None,
        }
    }
}

fn parse<T>(key: &str, value: &str) -> CliResult<T>
where
    T: FromStr,
    T::Err: Display,
{
    value
        .trim()
        .parse()
        .map_err(|e| CliError::Config(format!("invalid value `{value}` for {key}: {e}")))
}

fn parse_list<T>(key: &str, value: &str) -> CliResult<Vec<T>>
where
    T: FromStr,
    T::Err: Display,
{
    let items: Vec<T> = value
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| parse(key, s))
        .collect::<CliResult<_>>()?;
    if items.is_empty() {
        return Err(CliError::Config(format!("{key} needs at least one value")));
    }
    Ok(items)
}

impl Config {
    pub const KEYS: &'static [&'static str] = &[
        "learning_rate",
        "expert_learning_rate",
        "batch_size",
        "epochs",
        "corruption",
        "l2_lambda",
        "w_importance",
        "w_load",
        "k",
        "seed",
        "pretrain_epochs",
        "pretrain_learning_rate",
        "pretrain_batch_size",
        "early_stop_patience",
        "hidden_dims",
        "validation_fraction",
        "dataset",
        "format",
        "out",
        "cutoffs",
        "seeds",
        "aggregator",
        "rates",
        "split_ratio",
        "split_seed",
        "bma_temperature",
        "checkpoint",
        "users",
        "items",
    ];

    pub fn set(&mut self, key: &str, value: &str) -> CliResult<()> {
        let t = &mut self.train;
        let value = value.trim();
        match key.trim() {
            "learning_rate" => t.learning_rate = parse(key, value)?,
            "expert_learning_rate" => t.expert_learning_rate = parse(key, value)?,
            "batch_size" => t.batch_size = parse(key, value)?,
            "epochs" => t.epochs = parse(key, value)?,
            "corruption" => t.corruption = parse(key, value)?,
            "l2_lambda" => t.l2_lambda = parse(key, value)?,
            "w_importance" => t.w_importance = parse(key, value)?,
            "w_load" => t.w_load = parse(key, value)?,
            "k" => t.k = parse(key, value)?,
            "seed" => t.seed = parse(key, value)?,
            "pretrain_epochs" => t.pretrain_epochs = parse(key, value)?,
            "pretrain_learning_rate" => t.pretrain_learning_rate = parse(key, value)?,
            "pretrain_batch_size" => t.pretrain_batch_size = parse(key, value)?,
            "early_stop_patience" => t.early_stop_patience = parse(key, value)?,
            "hidden_dims" => t.hidden_dims = parse(key, value)?,
            "validation_fraction" => t.validation_fraction = parse(key, value)?,
            "dataset" => self.dataset = Some(value.to_owned()),
            "format" => self.format = Some(parse(key, value)?),
            "out" => self.out = PathBuf::from(value),
            "cutoffs" => self.cutoffs = parse_list(key, value)?,
            "seeds" => self.seeds = parse_list(key, value)?,
            "aggregator" => self.aggregator = parse(key, value)?,
            "rates" => self.rates = parse_list(key, value)?,
            "split_ratio" => self.split_ratio = parse(key, value)?,
            "split_seed" => self.split_seed = parse(key, value)?,
            "bma_temperature" => self.bma_temperature = parse(key, value)?,
            "checkpoint" => self.checkpoint = Some(PathBuf::from(value)),
            "users" => self.users = Some(parse(key, value)?),
            "items" => self.items = Some(parse(key, value)?),
            other => return Err(CliError::Config(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines; blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str) -> CliResult<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {}: expected key = value", n + 1)))?;
            self.set(key, value)
                .map_err(|e| CliError::Config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> CliResult<()> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        self.apply_text(&text)
    }

    /// Applies a `KEY=VALUE` override as given on the command line.
    pub fn apply_override(&mut self, pair: &str) -> CliResult<()> {
        let (key, value) = pair
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("expected KEY=VALUE, got `{pair}`")))?;
        self.set(key, value)
    }

    pub fn validate(&self) -> CliResult<()> {
        self.train.validate()?;
        if self.cutoffs.contains(&0) {
            return Err(CliError::Config("cutoffs must be positive".into()));
        }
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return Err(CliError::Config(format!("split_ratio must lie in (0, 1), got {}", self.split_ratio)));
        }
        if !self.bma_temperature.is_finite() || self.bma_temperature <= 0.0 {
            return Err(CliError::Config("bma_temperature must be positive".into()));
        }
        if self.rates.iter().any(|r| !r.is_finite() || *r < 0.0) {
            return Err(CliError::Config("noise rates must be finite and >= 0".into()));
        }
        Ok(())
    }

    pub fn split_spec(&self) -> SplitSpec {
        SplitSpec {
            ratio: self.split_ratio,
            seed: self.split_seed,
        }
    }

    /// Loads the configured dataset.
    pub fn load_dataset(&self) -> CliResult<InteractionMatrix> {
        let spec = self
            .dataset
            .as_deref()
            .ok_or_else(|| CliError::Data("no dataset given (use --dataset PATH)".into()))?;
        match DataSource::from_str(spec)? {
            DataSource::File(path) => {
                if !path.exists() {
                    return Err(CliError::Data(format!("dataset {} does not exist", path.display())));
                }
                Ok(dataset::load_interactions(&path, self.format)?.0)
            }
            DataSource::Synthetic { users, items, seed } => Ok(dataset::synthetic(users, items, seed)?),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum DataSource {
    File(PathBuf),
    Synthetic { users: usize, items: usize, seed: u64 },
}

impl FromStr for DataSource {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        let Some(rest) = s.strip_prefix("synthetic:") else {
            return Ok(DataSource::File(PathBuf::from(s)));
        };
        let bad = || CliError::Config(format!("expected synthetic:UxD[:SEED], got `{s}`"));
        let (shape, seed) = match rest.split_once(':') {
            Some((shape, seed)) => (shape, seed.parse().map_err(|_| bad())?),
            None => (rest, 0),
        };
        let (users, items) = shape.split_once('x').ok_or_else(bad)?;
        Ok(DataSource::Synthetic {
            users: users.parse().map_err(|_| bad())?,
            items: items.parse().map_err(|_| bad())?,
            seed,
        })
    }
}
