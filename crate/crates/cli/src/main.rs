mod commands;
mod config;

use std::io::IsTerminal;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::config::Config;

#[derive(Debug, Parser)]
#[command(name = "warmline", version, about = "Safety-gated support chat: data prep, training, evaluation, serving")]
struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Seed for every random choice the command makes.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Classifier bundle directory (overrides `dialogue.bundle`).
    #[arg(long, global = true)]
    bundle: Option<PathBuf>,

    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum StageArg {
    Stage1,
    Stage2,
    Both,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write synthetic corpora, labelled data and a reference set.
    Synth {
        #[arg(long, default_value_t = 200)]
        pairs: usize,
        #[arg(long, default_value_t = 60)]
        per_task: usize,
        #[arg(long, default_value_t = 30)]
        reference: usize,
    },
    /// Parse, de-identify and filter a corpus.
    Prep {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        min_turns: Option<usize>,
        #[arg(long)]
        min_words: Option<usize>,
        /// Also curate a reference set of this many pairs.
        #[arg(long)]
        reference: Option<usize>,
        #[arg(long, default_value = "average")]
        reference_kind: String,
    },
    /// Train detectors: task names (e.g. `severe`, `state:anxiety`) or `all`.
    Train {
        #[arg(required = true)]
        tasks: Vec<String>,
        /// Directory holding `<task>.jsonl` files of `{text, positive}`.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        folds: Option<usize>,
        #[arg(long)]
        trees: Option<usize>,
        #[arg(long)]
        balance: bool,
    },
    /// Fine-tune the generative model.
    Finetune {
        #[arg(long, value_enum)]
        stage: StageArg,
        /// Length-filtered corpus (stage 1).
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Logistics-stripped corpus (stage 2); derived from `--corpus` when absent.
        #[arg(long)]
        filtered: Option<PathBuf>,
        /// Stage-1 checkpoint directory, required for `--stage stage2`.
        #[arg(long)]
        base_checkpoint: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Score engines against a reference set.
    Eval {
        /// Comma-separated engines.
        #[arg(long, value_delimiter = ',', default_value = "baseline,rule_based")]
        engines: Vec<String>,
        #[arg(long)]
        refset: PathBuf,
        #[arg(long, default_value = "gold")]
        refset_kind: String,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        rescale_baseline: Option<f64>,
    },
    /// Run the HTTP service.
    Serve {
        #[arg(long)]
        bind: Option<String>,
        #[arg(long)]
        data_dir: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Answer one message in a fresh session and print the reply as JSON.
    Chat {
        #[arg(long)]
        engine: String,
        #[arg(long)]
        text: String,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
}

fn init_logging(verbose: u8) {
    let default = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let filter = tracing_subscriber::EnvFilter::try_from_default_env()
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new(default));
    tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_ansi(std::io::stderr().is_terminal())
        .with_writer(std::io::stderr)
        .init();
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut cfg = Config::load(cli.config.as_deref())?;
    if cli.seed.is_some() {
        cfg.seed = cli.seed;
    }
    if cli.out.is_some() {
        cfg.out = cli.out;
    }
    if cli.bundle.is_some() {
        cfg.dialogue.bundle = cli.bundle;
    }
    match cli.command {
        Command::Synth { pairs, per_task, reference } => commands::synth(&cfg, pairs, per_task, reference),
        Command::Prep {
            corpus,
            min_turns,
            min_words,
            reference,
            reference_kind,
        } => {
            if let Some(t) = min_turns {
                cfg.data.min_turns = t;
            }
            if let Some(w) = min_words {
                cfg.data.min_words = w;
            }
            commands::prep(&cfg, &corpus, reference, &reference_kind)
        }
        Command::Train {
            tasks,
            data,
            folds,
            trees,
            balance,
        } => {
            if let Some(f) = folds {
                cfg.train.folds = f;
            }
            if let Some(t) = trees {
                cfg.train.trees = t;
            }
            cfg.train.balance |= balance;
            commands::train(&cfg, &tasks, &data)
        }
        Command::Finetune {
            stage,
            corpus,
            filtered,
            base_checkpoint,
            epochs,
        } => {
            if let Some(e) = epochs {
                cfg.generative.epochs = e;
            }
            commands::finetune(&cfg, stage, corpus.as_deref(), filtered.as_deref(), base_checkpoint.as_deref())
        }
        Command::Eval {
            engines,
            refset,
            refset_kind,
            checkpoint,
            rescale_baseline,
        } => {
            if checkpoint.is_some() {
                cfg.generative.checkpoint = checkpoint;
            }
            if rescale_baseline.is_some() {
                cfg.eval.rescale_baseline = rescale_baseline;
            }
            commands::eval(&cfg, &engines, &refset, &refset_kind)
        }
        Command::Serve {
            bind,
            data_dir,
            checkpoint,
        } => {
            if let Some(b) = bind {
                cfg.service.bind = b;
            }
            if let Some(d) = data_dir {
                cfg.service.data_dir = d;
            }
            if checkpoint.is_some() {
                cfg.generative.checkpoint = checkpoint;
            }
            commands::serve(&cfg)
        }
        Command::Chat {
            engine,
            text,
            checkpoint,
        } => {
            if checkpoint.is_some() {
                cfg.generative.checkpoint = checkpoint;
            }
            commands::chat(&cfg, &engine, &text)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(cli.verbose);
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let detail: Vec<String> = e.chain().skip(1).map(|c| c.to_string()).collect();
            eprintln!("{}", json!({ "error": e.to_string(), "detail": detail }));
            ExitCode::FAILURE
        }
    }
}
