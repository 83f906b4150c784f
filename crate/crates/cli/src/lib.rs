//! Command-line front end for the AEL recommender.
//!
//! [`run`] parses arguments, layers the configuration and dispatches to one
//! of the commands in [`commands`]. Exit codes: 0 success, 1 configuration
//! error, 2 data error, 3 numerical failure.

pub mod commands;
pub mod config;
pub mod error;
pub mod experiment;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use config::Config;
use error::CliResult;

#[derive(Parser, Debug)]
#[command(name = "ael", version, about = "Adaptive ensemble of denoising autoencoders for top-N recommendation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Train one model and report its test metrics.
    Train,
    /// Score a saved checkpoint on the split rebuilt from the split seed.
    Evaluate,
    /// Train with k = 1, 2, 3 over several seeds.
    SweepK,
    /// Train on histories with injected false positives.
    AblateNoise,
    /// Compare the gate with averaging and BMA on the same models.
    CompareAggregators,
    /// Print the parameter count per level.
    CountParams,
}

#[derive(Args, Debug)]
struct Flags {
    /// Flat `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Interaction file, or `synthetic:UxD[:SEED]`.
    #[arg(long, global = true)]
    dataset: Option<String>,
    /// Input format: csv, tsv or movielens.
    #[arg(long, global = true)]
    format: Option<String>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<String>,
    #[arg(long, global = true)]
    seed: Option<String>,
    /// Comma-separated seeds for multi-run commands.
    #[arg(long, global = true)]
    seeds: Option<String>,
    #[arg(long, global = true)]
    k: Option<String>,
    /// gate, average or bma.
    #[arg(long, global = true)]
    aggregator: Option<String>,
    /// Comma-separated noise rates.
    #[arg(long, global = true)]
    rates: Option<String>,
    #[arg(long, global = true)]
    checkpoint: Option<String>,
    #[arg(long, global = true)]
    users: Option<String>,
    #[arg(long, global = true)]
    items: Option<String>,
    /// Override any configuration key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
}

impl Flags {
    fn into_config(self) -> CliResult<Config> {
        let mut cfg = Config::default();
        if let Some(path) = &self.config {
            cfg.apply_file(path)?;
        }
        for pair in &self.overrides {
            cfg.apply_override(pair)?;
        }
        let named = [
            ("dataset", self.dataset),
            ("format", self.format),
            ("out", self.out),
            ("seed", self.seed),
            ("seeds", self.seeds),
            ("k", self.k),
            ("aggregator", self.aggregator),
            ("rates", self.rates),
            ("checkpoint", self.checkpoint),
            ("users", self.users),
            ("items", self.items),
        ];
        for (key, value) in named {
            if let Some(value) = value {
                cfg.set(key, &value)?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn dispatch(command: Command, cfg: &Config) -> CliResult<()> {
    match command {
        Command::Train => commands::train(cfg),
        Command::Evaluate => commands::evaluate(cfg),
        Command::SweepK => commands::sweep_k(cfg),
        Command::AblateNoise => commands::ablate_noise(cfg),
        Command::CompareAggregators => commands::compare_aggregators(cfg),
        Command::CountParams => commands::count_params(cfg),
    }
}

/// Runs the CLI and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let result = cli.flags.into_config().and_then(|cfg| dispatch(cli.command, &cfg));
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("ael: {e}");
            e.exit_code()
        }
    }
}
