//! Command-line driver for scripted experiments and CI.
//!
//! Exit codes: 0 success, 1 validation error, 2 runtime/numerical failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use densedet::commands;
use densedet::config::load_run_config;
use densedet::data::Split;
use densedet::gradsuite::render_rows;
use densedet::Error;

#[derive(Parser)]
#[command(name = "densedet", about = "dense multi-label action detection on token sequences")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Split {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Test => Split::Test,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset from a generator spec file.
    GenData {
        /// Generator spec (TOML).
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train a model; writes checkpoint.dadc and train_log.jsonl.
    Train {
        /// Run configuration (TOML).
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Dimension preset the config overrides apply to.
        #[arg(long)]
        profile: Option<String>,
        /// Overrides the seed in the config file.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Evaluate a checkpoint; writes metrics.txt and metrics.json.
    Eval {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Overrides the manifest named in the config.
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = SplitArg::Test)]
        split: SplitArg,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        profile: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Finite-difference checks of every op and composed branch.
    Gradcheck {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        profile: Option<String>,
    },
    /// Train and score every variant along one ablation axis.
    Ablate {
        #[arg(long)]
        config: PathBuf,
        /// One of: branches, modules, structure, assistant, positional, loss.
        #[arg(long)]
        axis: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        profile: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn config_dir(path: &std::path::Path) -> PathBuf {
    path.parent().map(PathBuf::from).unwrap_or_else(|| PathBuf::from("."))
}

fn run(cli: Cli) -> Result<ExitCode, Error> {
    match cli.command {
        Command::GenData { config, out, seed } => {
            let manifest = commands::cmd_gen_data(&config, &out, seed)?;
            println!("wrote {}", manifest.display());
        }
        Command::Train { config, out, profile, seed } => {
            let cfg = load_run_config(&config, profile.as_deref(), seed)?;
            let outputs = commands::cmd_train(&cfg, &config_dir(&config), &out)?;
            if outputs.resumed {
                println!("resumed from existing checkpoint");
            }
            println!(
                "trained {} steps, final core loss {:.5}",
                outputs.steps, outputs.final_core_loss
            );
            println!("checkpoint: {}", outputs.checkpoint.display());
            println!("log: {}", outputs.log.display());
        }
        Command::Eval { config, checkpoint, manifest, split, out, profile, seed } => {
            let cfg = load_run_config(&config, profile.as_deref(), seed)?;
            let report = commands::cmd_eval(
                &cfg,
                &config_dir(&config),
                &checkpoint,
                manifest.as_deref(),
                split.into(),
                &out,
            )?;
            print!("{}", report.render_text());
        }
        Command::Gradcheck { config, seed, profile } => {
            let cfg = load_run_config(&config, profile.as_deref(), None)?;
            let rows = commands::cmd_gradcheck(&cfg, seed)?;
            print!("{}", render_rows(&rows));
            if rows.iter().any(|r| !r.pass) {
                return Ok(ExitCode::from(2));
            }
        }
        Command::Ablate { config, axis, out, profile, seed } => {
            let cfg = load_run_config(&config, profile.as_deref(), seed)?;
            let table = commands::cmd_ablate(&cfg, &config_dir(&config), &axis, &out)?;
            print!("{}", table.render_text());
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
