use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use pcan::harness::{self, AllocateInput, ExperimentConfig};
use pcan::models::Method;

#[derive(Parser)]
#[command(
    name = "pcan",
    version,
    about = "Synthetic incentive campaigns, debiased response models and budgeted allocation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML experiment config; every field is optional.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (data, models, reports).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Write D_u, D_b and the random test set with a hash manifest.
    Generate(Common),
    /// Train one method on the generated dataset.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        method: Method,
    },
    /// Evaluate saved checkpoints of the configured methods.
    Evaluate(Common),
    /// Allocate incentives under a per-capita budget.
    Allocate {
        #[command(flatten)]
        common: Common,
        /// Model checkpoint (default: <out>/models/pcan.ckpt).
        #[arg(long, conflicts_with = "scores")]
        checkpoint: Option<PathBuf>,
        /// Users in dataset CSV format (default: the test set).
        #[arg(long, conflicts_with = "scores")]
        users: Option<PathBuf>,
        /// Precomputed scores file with a `# treatments:` first line.
        #[arg(long)]
        scores: Option<PathBuf>,
        #[arg(long)]
        budget: Option<f64>,
    },
    /// Train, evaluate and allocate every configured method.
    Experiment(Common),
    /// Retrain every method across unbiased fractions.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated fractions, overriding the config.
        #[arg(long, value_delimiter = ',')]
        fractions: Option<Vec<f64>>,
    },
}

fn load_config(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.out_dir = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate(common) => {
            let cfg = load_config(&common)?;
            let m = harness::cmd_generate(&cfg)?;
            for (name, f) in &m.files {
                println!("{name}\t{} rows\tsha256 {}", f.rows, f.sha256);
            }
        }
        Command::Train { common, method } => {
            let cfg = load_config(&common)?;
            let log = harness::cmd_train(&cfg, method)?;
            println!(
                "{method}: best validation AUC {:.4} at cycle {} ({} cycles, {} steps)",
                log.best_auc,
                log.best_cycle,
                log.cycles.len(),
                log.steps.len()
            );
        }
        Command::Evaluate(common) => {
            let cfg = load_config(&common)?;
            print!("{}", harness::cmd_evaluate(&cfg)?.text_table()?);
        }
        Command::Allocate {
            common,
            checkpoint,
            users,
            scores,
            budget,
        } => {
            let cfg = load_config(&common)?;
            let input = match scores {
                Some(path) => AllocateInput::Scores(path),
                None => AllocateInput::Model {
                    checkpoint: checkpoint
                        .unwrap_or_else(|| harness::model_path(&cfg, Method::Pcan)),
                    users,
                },
            };
            let run = harness::cmd_allocate(&cfg, &input, budget)?;
            println!("{}", pcan::allocator::summary_line(&run.result));
            if let Some(e) = run.expected_payments {
                println!("# expected_payments={e:.4} over {} users", run.users);
            }
        }
        Command::Experiment(common) => {
            let cfg = load_config(&common)?;
            let out = harness::cmd_experiment(&cfg)?;
            print!("{}", out.report.text_table()?);
            for a in &out.allocations {
                println!(
                    "{:<14} expected payments {:.1} at spend {:.4}",
                    a.method,
                    a.expected_payments.unwrap_or(f64::NAN),
                    a.result.per_capita_spend
                );
            }
        }
        Command::Sweep { common, fractions } => {
            let mut cfg = load_config(&common)?;
            if let Some(f) = fractions {
                cfg.fractions = f;
                cfg.validate()?;
            }
            let out = harness::cmd_sweep(&cfg)?;
            for t in &out.trends {
                println!(
                    "{:<14} spearman {:+.2} range {:.4} mean AUC {:.4?}",
                    t.method.name(),
                    t.spearman,
                    t.auc_range,
                    t.mean_auc
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            let msg = e.kind().to_string();
            eprintln!(
                "{}",
                serde_json::json!({ "error": "usage", "message": msg })
            );
            return ExitCode::from(2);
        }
    };
    match run(cli).context("pcan failed") {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let kind = err
                .chain()
                .find_map(|e| e.downcast_ref::<pcan::Error>())
                .map_or("internal", |e| e.kind());
            let line = serde_json::json!({
                "error": kind,
                "message": format!("{err:#}"),
            });
            eprintln!("{line}");
            ExitCode::FAILURE
        }
    }
}
