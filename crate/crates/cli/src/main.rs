//! `viewgate`: generate synthetic data, train, evaluate, ablate and
//! gradient-check view-gated attribute models.
//!
//! Exit codes: 0 success, 1 check or evaluation failure, 2 usage or config
//! error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use viewgate::experiment::{
    run_ablate, run_eval, run_generate, run_train, ExperimentConfig, TrainOptions,
};
use viewgate::gradcheck::{check, CheckOptions, Problem};
use viewgate::model::ParamGroup;
use viewgate::{Error, Execution};

#[derive(Parser)]
#[command(
    name = "viewgate",
    version,
    about = "View-gated multi-label attribute models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML); defaults apply to anything missing.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset with train/val/test splits.
    Generate {
        #[command(flatten)]
        common: Common,
        /// Overrides generate.seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train a model and write a checkpoint plus training log.
    Train {
        #[command(flatten)]
        common: Common,
        /// Training dataset file.
        #[arg(long)]
        data: PathBuf,
        /// Overrides train.seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Freeze the view branch and accept unlabeled views (needs --init).
        #[arg(long)]
        transfer: bool,
        /// Start from this checkpoint.
        #[arg(long)]
        init: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on a dataset.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// View-unit specialization grid: each view subset through each expert.
    Ablate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Finite-difference check of every parameter gradient.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Test fixture: corrupt the analytic gradient of one group
        /// (trunk, view_branch or expertN).
        #[arg(long, hide = true)]
        corrupt_group: Option<String>,
    },
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig, Error> {
    match path {
        Some(p) => ExperimentConfig::load(p),
        None => Ok(ExperimentConfig::default()),
    }
}

fn parse_group(name: &str) -> Result<ParamGroup, Error> {
    match name {
        "trunk" => Ok(ParamGroup::Trunk),
        "view_branch" => Ok(ParamGroup::ViewBranch),
        other => other
            .strip_prefix("expert")
            .and_then(|n| n.parse().ok())
            .map(ParamGroup::Expert)
            .ok_or_else(|| Error::Config {
                field: "corrupt-group".into(),
                message: format!("unknown parameter group `{other}`"),
            }),
    }
}

fn run(cli: Cli) -> Result<bool, Error> {
    match cli.command {
        Command::Generate { common, seed } => {
            let mut cfg = load_config(common.config.as_deref())?;
            if let Some(s) = seed {
                cfg.generate.seed = s;
            }
            for path in run_generate(&cfg, &common.out)? {
                println!("wrote {}", path.display());
            }
            Ok(true)
        }
        Command::Train {
            common,
            data,
            seed,
            transfer,
            init,
        } => {
            let mut cfg = load_config(common.config.as_deref())?;
            if let Some(s) = seed {
                cfg.train.seed = s;
            }
            let opts = TrainOptions { transfer, init };
            let outcome = run_train(&cfg, &data, &common.out, &opts)?;
            for e in &outcome.epochs {
                println!(
                    "epoch {:>3}  joint {:.5}  attr {:.5}  view {:.5}",
                    e.epoch, e.mean_joint, e.mean_attr, e.mean_view
                );
            }
            println!("wrote {}", outcome.checkpoint_path.display());
            Ok(true)
        }
        Command::Eval {
            common,
            checkpoint,
            data,
        } => {
            let cfg = load_config(common.config.as_deref())?;
            let report = run_eval(&cfg, &checkpoint, &data, &common.out)?;
            print!("{}", report.to_table());
            Ok(true)
        }
        Command::Ablate {
            common,
            checkpoint,
            data,
        } => {
            let cfg = load_config(common.config.as_deref())?;
            let grid = run_ablate(&cfg, &checkpoint, &data, &common.out)?;
            print!("{}", grid.to_table());
            println!(
                "diagonal is the row maximum for every view: {}",
                if grid.diagonal_dominant() {
                    "yes"
                } else {
                    "no"
                }
            );
            Ok(true)
        }
        Command::Gradcheck {
            seed,
            corrupt_group,
        } => {
            let opts = CheckOptions {
                corrupt: corrupt_group.as_deref().map(parse_group).transpose()?,
                ..CheckOptions::default()
            };
            let report = check(&Problem::random(seed)?, opts, Execution::default())?;
            print!("{}", report.to_text());
            Ok(report.passed())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_usage() { 2 } else { 1 })
        }
    }
}
