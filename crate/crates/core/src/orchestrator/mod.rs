//! The self-training loop: generate, train, parse, select, update, extract,
//! with per-iteration checkpoints and metrics.

mod checkpoint;
mod config;
mod metrics;
mod run;

pub use config::{BackendSpec, Mode, RunConfig};
pub use metrics::{metrics_to_csv, metrics_to_table, IterationMetrics};
pub use run::{
    build_backend, load_run_metrics, measure_domain_distance, run_iteration, run_self_training,
    DomainReference, IterationArtifacts, IterationState, RunContext, RunOutput,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum OrchestratorError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Treebank(#[from] crate::bracketed::BracketError),
    #[error(transparent)]
    Grammar(#[from] crate::grammar::GrammarError),
    #[error(transparent)]
    Pcfg(#[from] crate::pcfg::PcfgError),
    #[error(transparent)]
    Selection(#[from] crate::selection::SelectionError),
    #[error(transparent)]
    Generation(#[from] crate::generation::GenerationError),
    #[error(transparent)]
    Sample(#[from] crate::sampling::SampleError),
    #[error(transparent)]
    Eval(#[from] crate::evaluation::EvalError),
    #[error(transparent)]
    Divergence(#[from] crate::divergence::DivergenceError),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

pub(crate) fn io_err(path: &std::path::Path, source: std::io::Error) -> OrchestratorError {
    OrchestratorError::Io {
        path: path.display().to_string(),
        source,
    }
}
