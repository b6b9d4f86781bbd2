//! Run configuration: a TOML file mirroring the struct below, with every
//! key overridable from the command line (CLI > file > defaults).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::generation::GenerationConfig;
use crate::selection::SelectionConfig;
use crate::Scalar;

use super::OrchestratorError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Candidates are generated by the backend each iteration.
    Llm,
    /// Candidates come from a fixed raw-sentence pool.
    Vanilla,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Mode::Llm => f.write_str("llm"),
            Mode::Vanilla => f.write_str("vanilla"),
        }
    }
}

impl Mode {
    pub fn parse(text: &str) -> Result<Mode, OrchestratorError> {
        match text.to_ascii_lowercase().as_str() {
            "llm" | "llm-enhanced" => Ok(Mode::Llm),
            "vanilla" => Ok(Mode::Vanilla),
            other => Err(OrchestratorError::Config(format!(
                "unknown mode '{other}' (expected llm or vanilla)"
            ))),
        }
    }
}

/// Which completion provider to run against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BackendSpec {
    /// Offline grammar sampler; `mix_from` plus `schedule` interpolates
    /// between two grammars across iterations.
    Mock {
        grammar: PathBuf,
        #[serde(default)]
        mix_from: Option<PathBuf>,
        #[serde(default)]
        schedule: Vec<Scalar>,
    },
    /// Chat-completions endpoint; the key is read from `api_key_env`.
    Http {
        url: String,
        #[serde(default = "default_api_key_env")]
        api_key_env: String,
    },
}

fn default_api_key_env() -> String {
    "OPENAI_API_KEY".to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub mode: Mode,
    pub iterations: u32,
    pub seed: u64,
    pub source_treebank: PathBuf,
    /// Small target-domain sample sentences for the prompt (one per line).
    pub target_samples: Option<PathBuf>,
    /// Reference used for the per-iteration distance to the target domain:
    /// a treebank (rule-level JS) or raw sentences (token-level JS).
    pub target_reference: Option<PathBuf>,
    /// Held-out gold trees scored after each iteration.
    pub eval_treebank: Option<PathBuf>,
    /// Raw-sentence pool file for vanilla mode.
    pub vanilla_pool: Option<PathBuf>,
    /// Sentences sampled from the vanilla pool file.
    pub pool_size: usize,
    pub checkpoint_dir: PathBuf,
    pub domain_name: String,
    pub selection: SelectionConfig,
    pub generation: GenerationConfig,
    pub backend: Option<BackendSpec>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            mode: Mode::Llm,
            iterations: 4,
            seed: 0,
            source_treebank: PathBuf::new(),
            target_samples: None,
            target_reference: None,
            eval_treebank: None,
            vanilla_pool: None,
            pool_size: 40_000,
            checkpoint_dir: PathBuf::from("run"),
            domain_name: "target".to_string(),
            selection: SelectionConfig::default(),
            generation: GenerationConfig::default(),
            backend: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig, OrchestratorError> {
        let text = std::fs::read_to_string(path).map_err(|e| OrchestratorError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        let cfg: RunConfig = toml::from_str(&text)
            .map_err(|e| OrchestratorError::Config(format!("{}: {e}", path.display())))?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), OrchestratorError> {
        let fail = |msg: String| Err(OrchestratorError::Config(msg));
        if self.iterations < 1 {
            return fail("iterations must be >= 1".to_string());
        }
        if self.source_treebank.as_os_str().is_empty() {
            return fail("source_treebank is required".to_string());
        }
        if self.selection.top_k < 1 {
            return fail("selection.top_k must be >= 1".to_string());
        }
        if !(self.selection.grsconf_pool_factor > 1.0) {
            return fail("selection.grsconf_pool_factor must be > 1".to_string());
        }
        if self.generation.corpus_size < 1 {
            return fail("generation.corpus_size must be >= 1".to_string());
        }
        if self.generation.min_len >= self.generation.max_len {
            return fail("generation.min_len must be < generation.max_len".to_string());
        }
        match self.mode {
            Mode::Llm => {
                if self.backend.is_none() {
                    return fail("llm mode requires a [backend] section".to_string());
                }
            }
            Mode::Vanilla => {
                if self.vanilla_pool.is_none() {
                    return fail("vanilla mode requires vanilla_pool".to_string());
                }
            }
        }
        Ok(())
    }
}
