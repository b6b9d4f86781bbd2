//! Command-line front end for the self-training parser pipeline.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

mod commands;

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;

/// Self-training constituency parsing toolkit.
#[derive(Parser)]
#[command(name = "bootparse", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a grammar on a treebank and save the model.
    Train {
        /// Bracketed treebank file.
        #[arg(long)]
        treebank: PathBuf,
        /// Output model path (JSON).
        #[arg(long)]
        out: PathBuf,
    },
    /// Parse raw sentences (one per line, whitespace-tokenized).
    Parse {
        /// Trained model file.
        #[arg(long)]
        model: PathBuf,
        /// Input sentence file.
        #[arg(long)]
        input: PathBuf,
        /// Output treebank of parses (failed parses are skipped).
        #[arg(long)]
        out: PathBuf,
        /// Optional JSONL with per-sentence scores, consumed by `select`.
        #[arg(long)]
        scores: Option<PathBuf>,
    },
    /// Generate a raw candidate corpus from grammar rules via a backend.
    Generate {
        /// Treebank whose rules and average length drive the prompts.
        #[arg(long)]
        rules_from: PathBuf,
        /// Number of surviving sentences to generate.
        #[arg(long, default_value_t = 100)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Target-domain example sentences, one per line.
        #[arg(long)]
        target_samples: Option<PathBuf>,
        #[command(flatten)]
        backend: BackendArgs,
        /// Output JSONL corpus.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 3)]
        min_len: usize,
        #[arg(long, default_value_t = 100)]
        max_len: usize,
        /// Domain name used when no target samples are given.
        #[arg(long, default_value = "target")]
        domain_name: String,
        /// Sampling temperature sent to the backend.
        #[arg(long, default_value_t = 0.0)]
        temperature: f64,
    },
    /// Select the top-K pseudo trees from parsed candidates.
    Select {
        /// Candidate JSONL produced by `parse --scores`.
        #[arg(long)]
        candidates: PathBuf,
        /// Source treebank providing the reference distributions.
        #[arg(long)]
        source: PathBuf,
        #[arg(long, default_value = "grsconf")]
        criterion: String,
        #[arg(long, default_value_t = 2000)]
        top_k: usize,
        #[arg(long, default_value_t = 2.0)]
        pool_factor: f64,
        /// Output treebank of selected trees.
        #[arg(long)]
        out: PathBuf,
        /// Optional per-candidate report JSONL.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Run the full iterative self-training loop.
    SelfTrain {
        /// TOML config file; flags below override its keys.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        mode: Option<String>,
        #[arg(long)]
        iterations: Option<u32>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        source_treebank: Option<PathBuf>,
        #[arg(long)]
        target_samples: Option<PathBuf>,
        #[arg(long)]
        target_reference: Option<PathBuf>,
        #[arg(long)]
        eval_treebank: Option<PathBuf>,
        #[arg(long)]
        vanilla_pool: Option<PathBuf>,
        #[arg(long)]
        pool_size: Option<usize>,
        /// Run/checkpoint directory.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        criterion: Option<String>,
        #[arg(long)]
        top_k: Option<usize>,
        #[arg(long)]
        pool_factor: Option<f64>,
        #[arg(long)]
        corpus_size: Option<usize>,
        #[arg(long)]
        domain_name: Option<String>,
        #[command(flatten)]
        backend: BackendArgs,
    },
    /// Score predicted trees against gold trees (labeled bracket F1).
    Score {
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        /// Emit machine-readable JSON instead of the text summary.
        #[arg(long)]
        json: bool,
    },
    /// Render the per-iteration metrics of a run as a table and CSV.
    Report {
        #[arg(long)]
        run_dir: PathBuf,
        /// CSV output path (default: <run_dir>/report.csv).
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Validate a treebank file and report the first violation.
    Validate {
        #[arg(long)]
        treebank: PathBuf,
    },
}

/// Backend selection shared by `generate` and `self-train`.
#[derive(Args)]
struct BackendArgs {
    /// `mock` or a chat-completions URL.
    #[arg(long)]
    backend: Option<String>,
    /// Weighted grammar file for the mock backend.
    #[arg(long)]
    mock_grammar: Option<PathBuf>,
    /// Second grammar: the mock interpolates from this one toward
    /// --mock-grammar across iterations.
    #[arg(long)]
    mock_mix_from: Option<PathBuf>,
    /// Per-iteration mixture weights, e.g. 0.25,0.5,0.75,1.0.
    #[arg(long, value_delimiter = ',')]
    mock_schedule: Vec<f64>,
    /// Model name sent to an HTTP backend.
    #[arg(long)]
    model: Option<String>,
    /// Environment variable holding the API key.
    #[arg(long, default_value = "OPENAI_API_KEY")]
    api_key_env: String,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(commands::CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(commands::CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
