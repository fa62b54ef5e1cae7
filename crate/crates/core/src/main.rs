use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};

use rulerank::agg::Strategy;
use rulerank::config::Config;
use rulerank::eval::TiePolicy;
use rulerank::kg::Split;
use rulerank::pipeline;
use rulerank::pipeline::SearchStrategy;

/// Rule application and aggregation for knowledge-graph link prediction.
#[derive(Parser)]
#[command(name = "rulerank", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Mine a rule set from the training split.
    Mine {
        #[arg(short, long)]
        config: PathBuf,
    },
    /// Compute MinHash signatures of every rule's inferred set.
    CalcSims {
        #[arg(short, long)]
        config: PathBuf,
    },
    /// Learn per-relation, per-direction clustering thresholds.
    Search {
        #[arg(short, long)]
        config: PathBuf,
        /// grid or random
        #[arg(long, default_value = "random")]
        strategy: String,
    },
    /// Write ranked predictions for a split.
    Apply {
        #[arg(short, long)]
        config: PathBuf,
        /// max, noisyor, nrno, or vs
        #[arg(long, default_value = "nrno")]
        aggregation: String,
        /// test or valid; defaults to the config's apply_split
        #[arg(long)]
        split: Option<String>,
    },
    /// Score a prediction file: filtered MRR and Hits@k.
    Eval {
        #[arg(short, long)]
        config: PathBuf,
        /// top, bottom, average, ordinal, or random
        #[arg(long, default_value = "average")]
        policy: String,
    },
}

fn run() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Mine { config } => {
            let cfg = Config::load(&config)?;
            pipeline::stage_mine(&cfg).context("mine failed")?;
        }
        Command::CalcSims { config } => {
            let cfg = Config::load(&config)?;
            pipeline::stage_calc_sims(&cfg).context("calc-sims failed")?;
        }
        Command::Search { config, strategy } => {
            let cfg = Config::load(&config)?;
            let strategy = SearchStrategy::parse(&strategy)?;
            pipeline::stage_search(&cfg, strategy).context("search failed")?;
        }
        Command::Apply {
            config,
            aggregation,
            split,
        } => {
            let cfg = Config::load(&config)?;
            let strategy = Strategy::parse(&aggregation)?;
            let split = match split.as_deref() {
                None => None,
                Some("test") => Some(Split::Test),
                Some("valid") => Some(Split::Valid),
                Some(other) => anyhow::bail!("bad --split `{other}`"),
            };
            pipeline::stage_apply(&cfg, strategy, split).context("apply failed")?;
        }
        Command::Eval { config, policy } => {
            let cfg = Config::load(&config)?;
            let policy = TiePolicy::parse(&policy)?;
            pipeline::stage_eval(&cfg, policy).context("eval failed")?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
