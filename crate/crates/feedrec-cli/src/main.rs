//! `feedrec` — generate synthetic feedback corpora, train and evaluate the
//! multi-feedback recommendation model, check gradients, rank candidates,
//! and run ablation sweeps.

mod commands;
mod config;
mod plot;

use std::path::PathBuf;

use anyhow::Result;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "feedrec",
    version,
    about = "Multi-feedback news recommendation: synthetic corpora, training, evaluation"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic behavior-log corpus and its statistics.
    Generate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the generator seed from the config file.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train a model on a corpus directory.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the training seed from the config file.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Score the chronological test split and write metrics.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Verify analytic gradients against finite differences (exit 0 on pass).
    Gradcheck {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Rank candidate news for a user at the end of their history.
    Rank {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        user: String,
        /// Comma-separated news ids.
        #[arg(long, value_delimiter = ',')]
        candidates: Vec<String>,
    },
    /// Train and evaluate a matrix of model variants.
    Ablate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Comma-separated subset of feedback,loss,component,embedding,tsweep
        /// (or `all`).
        #[arg(long, default_value = "feedback,loss")]
        families: String,
    },
}

fn init_threads() {
    if let Ok(v) = std::env::var("FEEDREC_THREADS") {
        if let Ok(n) = v.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build_global();
        }
    }
}

fn main() {
    init_threads();
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    };
    std::process::exit(code);
}

fn run(cli: Cli) -> Result<i32> {
    match cli.cmd {
        Cmd::Generate { config, out, seed } => {
            commands::generate::run(config.as_deref(), &out, seed)?;
            Ok(0)
        }
        Cmd::Train {
            config,
            corpus,
            out,
            seed,
        } => {
            commands::train::run(config.as_deref(), &corpus, &out, seed)?;
            Ok(0)
        }
        Cmd::Evaluate {
            checkpoint,
            corpus,
            out,
        } => {
            commands::evaluate::run(&checkpoint, &corpus, &out)?;
            Ok(0)
        }
        Cmd::Gradcheck { config, seed } => commands::gradcheck::run(config.as_deref(), seed),
        Cmd::Rank {
            checkpoint,
            corpus,
            user,
            candidates,
        } => {
            commands::rank::run(&checkpoint, &corpus, &user, &candidates)?;
            Ok(0)
        }
        Cmd::Ablate {
            config,
            corpus,
            out,
            seed,
            families,
        } => {
            commands::ablate::run(config.as_deref(), &corpus, &out, seed, &families)?;
            Ok(0)
        }
    }
}
