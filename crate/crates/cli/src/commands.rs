use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ael_core::evaluation::aggregate_seeds;
use ael_core::model::{checkpoint, count_parameters, parameter_breakdown};
use ael_core::{AggregatorKind, Level, MetricsReport, NUM_EXPERTS};
use serde_json::{Map, Value};

use crate::config::Config;
use crate::error::{CliError, CliResult};
use crate::experiment::{prepare, RankerChoice, Run, Scoring};

pub const CHECKPOINT_FILE: &str = "model.ael";
pub const TRAIN_LOG_FILE: &str = "train_log.csv";
pub const METRICS_FILE: &str = "metrics.json";
pub const SWEEP_K_FILE: &str = "sweep_k.csv";
pub const ABLATE_NOISE_FILE: &str = "ablate_noise.csv";
pub const COMPARE_AGGREGATORS_FILE: &str = "compare_aggregators.csv";

/// The metrics JSON object, keys in a fixed order, newline-terminated.
pub fn metrics_json(dataset: &str, model: &str, seed: u64, k: usize, report: &MetricsReport) -> String {
    let mut obj = Map::new();
    obj.insert("dataset".into(), Value::from(dataset));
    obj.insert("model".into(), Value::from(model));
    obj.insert("seed".into(), Value::from(seed));
    obj.insert("k".into(), Value::from(k));
    for (key, value) in report.entries() {
        obj.insert(key, Value::from(value));
    }
    obj.insert("users_evaluated".into(), Value::from(report.users_evaluated));
    let mut text = serde_json::to_string_pretty(&Value::Object(obj)).expect("metrics serialize");
    text.push('\n');
    text
}

fn model_name(kind: AggregatorKind) -> String {
    format!("ael-{}", kind.name())
}

fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::Data(format!("cannot create {}: {e}", dir.display())))
}

fn write(path: PathBuf, contents: &str) -> CliResult<PathBuf> {
    fs::write(&path, contents).map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))?;
    Ok(path)
}

fn dataset_label(cfg: &Config) -> &str {
    cfg.dataset.as_deref().unwrap_or("")
}

pub fn train(cfg: &Config) -> CliResult<()> {
    let data = cfg.load_dataset()?;
    let run = Run::train(&data, &cfg.train, cfg.train.seed, cfg.split_spec(), 0.0)?;
    ensure_dir(&cfg.out)?;
    let checkpoint_path = cfg.out.join(CHECKPOINT_FILE);
    checkpoint::save(&checkpoint_path, &run.trained.model, Some(&run.trained.gating))?;
    write(cfg.out.join(TRAIN_LOG_FILE), &run.trained.report.log_csv())?;
    let report = run.evaluate(RankerChoice::Aggregate(cfg.aggregator), &cfg.cutoffs, cfg.bma_temperature)?;
    let json = metrics_json(dataset_label(cfg), &model_name(cfg.aggregator), run.seed, run.config.k, &report);
    write(cfg.out.join(METRICS_FILE), &json)?;
    print!("{json}");
    Ok(())
}

pub fn evaluate(cfg: &Config) -> CliResult<()> {
    let path = cfg
        .checkpoint
        .as_ref()
        .ok_or_else(|| CliError::Config("evaluate needs --checkpoint PATH".into()))?;
    let (model, gating) = checkpoint::load(path)?;
    let gating = gating.ok_or_else(|| CliError::Data(format!("{} holds no gating network", path.display())))?;
    let data = cfg.load_dataset()?;
    if (data.num_users(), data.num_items()) != (model.num_users(), model.num_items()) {
        return Err(CliError::Data(format!(
            "checkpoint is {}x{} but the dataset is {}x{}",
            model.num_users(),
            model.num_items(),
            data.num_users(),
            data.num_items()
        )));
    }
    let seed = cfg.train.seed;
    let (split, history) = prepare(&data, cfg.split_spec(), seed, 0.0)?;
    let scoring = Scoring {
        model: &model,
        gating: &gating,
        split: &split,
        history: &history,
        config: &cfg.train,
    };
    let mut report = scoring.evaluate(RankerChoice::Aggregate(cfg.aggregator), &cfg.cutoffs, cfg.bma_temperature)?;
    report.seed = Some(seed);
    let json = metrics_json(dataset_label(cfg), &model_name(cfg.aggregator), seed, gating.k(), &report);
    ensure_dir(&cfg.out)?;
    write(cfg.out.join(METRICS_FILE), &json)?;
    print!("{json}");
    Ok(())
}

fn push_stats(out: &mut String, label: &str, reports: &[MetricsReport]) -> CliResult<()> {
    let agg = aggregate_seeds(reports)?;
    for ((key, mean), (_, std)) in agg.mean.entries().into_iter().zip(agg.std.entries()) {
        let _ = writeln!(out, "{label},{key},{mean},{std}");
    }
    Ok(())
}

pub fn sweep_k(cfg: &Config) -> CliResult<()> {
    let data = cfg.load_dataset()?;
    let mut csv = String::from("k,metric,mean,std\n");
    for k in 1..=NUM_EXPERTS {
        let train = ael_core::TrainConfig { k, ..cfg.train.clone() };
        let mut reports = Vec::with_capacity(cfg.seeds.len());
        for &seed in &cfg.seeds {
            let run = Run::train(&data, &train, seed, cfg.split_spec(), 0.0)?;
            reports.push(run.evaluate(RankerChoice::Aggregate(cfg.aggregator), &cfg.cutoffs, cfg.bma_temperature)?);
        }
        push_stats(&mut csv, &k.to_string(), &reports)?;
    }
    ensure_dir(&cfg.out)?;
    write(cfg.out.join(SWEEP_K_FILE), &csv)?;
    print!("{csv}");
    Ok(())
}

pub fn ablate_noise(cfg: &Config) -> CliResult<()> {
    let data = cfg.load_dataset()?;
    let mut csv = String::from("rate,ranker,metric,mean\n");
    for &rate in &cfg.rates {
        let mut per_ranker: Vec<Vec<MetricsReport>> = vec![Vec::new(); RankerChoice::ABLATION.len()];
        for &seed in &cfg.seeds {
            let run = Run::train(&data, &cfg.train, seed, cfg.split_spec(), rate)?;
            for (slot, choice) in per_ranker.iter_mut().zip(RankerChoice::ABLATION) {
                slot.push(run.evaluate(choice, &cfg.cutoffs, cfg.bma_temperature)?);
            }
        }
        for (reports, choice) in per_ranker.iter().zip(RankerChoice::ABLATION) {
            let agg = aggregate_seeds(reports)?;
            for (key, mean) in agg.mean.entries() {
                let _ = writeln!(csv, "{rate},{choice},{key},{mean}");
            }
        }
    }
    ensure_dir(&cfg.out)?;
    write(cfg.out.join(ABLATE_NOISE_FILE), &csv)?;
    print!("{csv}");
    Ok(())
}

pub fn compare_aggregators(cfg: &Config) -> CliResult<()> {
    let data = cfg.load_dataset()?;
    let mut per_kind: Vec<Vec<MetricsReport>> = vec![Vec::new(); RankerChoice::AGGREGATORS.len()];
    for &seed in &cfg.seeds {
        let run = Run::train(&data, &cfg.train, seed, cfg.split_spec(), 0.0)?;
        for (slot, choice) in per_kind.iter_mut().zip(RankerChoice::AGGREGATORS) {
            slot.push(run.evaluate(choice, &cfg.cutoffs, cfg.bma_temperature)?);
        }
    }
    let mut csv = String::from("aggregator,metric,mean,std\n");
    for (reports, choice) in per_kind.iter().zip(RankerChoice::AGGREGATORS) {
        push_stats(&mut csv, choice.name(), reports)?;
    }
    ensure_dir(&cfg.out)?;
    write(cfg.out.join(COMPARE_AGGREGATORS_FILE), &csv)?;
    print!("{csv}");
    Ok(())
}

/// Groups digits in threes: `8695336` → `8,695,336`.
pub fn thousands(n: usize) -> String {
    let digits = n.to_string();
    let mut out = String::with_capacity(digits.len() + digits.len() / 3);
    for (i, c) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(c);
    }
    out
}

pub fn count_params_report(users: usize, items: usize, cfg: &Config) -> String {
    let dims = cfg.train.hidden_dims;
    let b = parameter_breakdown(users, items, dims);
    let mut out = String::new();
    let _ = writeln!(out, "users {users}, items {items}, hidden dims {:?}", dims.0);
    for level in Level::ALL {
        let _ = writeln!(out, "{:<8} {:>12}", format!("{level:?}").to_lowercase(), thousands(b.levels[level.index()]));
    }
    let _ = writeln!(out, "{:<8} {:>12}", "gating", thousands(b.gating));
    let _ = writeln!(
        out,
        "total without gating: {}",
        thousands(count_parameters(users, items, dims, false))
    );
    let _ = writeln!(out, "total with gating: {}", thousands(count_parameters(users, items, dims, true)));
    out
}

pub fn count_params(cfg: &Config) -> CliResult<()> {
    let (users, items) = match (cfg.users, cfg.items) {
        (Some(u), Some(d)) => (u, d),
        (None, None) => {
            let data = cfg.load_dataset()?;
            (data.num_users(), data.num_items())
        }
        _ => return Err(CliError::Config("give both --users and --items, or a dataset".into())),
    };
    print!("{}", count_params_report(users, items, cfg));
    Ok(())
}
