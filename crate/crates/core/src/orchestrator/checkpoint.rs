//! Per-iteration checkpoints: the treebank, remaining pool, RNG position,
//! and metrics, written atomically (temp dir + rename) so an interrupted
//! run resumes from the last completed iteration.

use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bracketed::{load_treebank, save_treebank, Treebank};

use super::metrics::IterationMetrics;
use super::{io_err, OrchestratorError};

#[derive(Debug, Serialize, Deserialize)]
struct RngState {
    seed: u64,
    word_pos: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct StateFile {
    iteration: u32,
}

pub(crate) fn iter_dir(root: &Path, iteration: u32) -> PathBuf {
    root.join(format!("iter_{iteration:04}"))
}

pub(crate) struct CheckpointData<'a> {
    pub iteration: u32,
    pub treebank: &'a Treebank,
    pub pool: &'a [String],
    pub seed: u64,
    pub rng: &'a ChaCha8Rng,
    pub metrics: Option<&'a IterationMetrics>,
    pub selection_report: Option<String>,
    pub corpus_report: Option<String>,
}

pub(crate) fn write_checkpoint(
    root: &Path,
    data: &CheckpointData,
) -> Result<(), OrchestratorError> {
    let final_dir = iter_dir(root, data.iteration);
    let tmp_dir = root.join(format!("iter_{:04}.tmp", data.iteration));
    if tmp_dir.exists() {
        fs::remove_dir_all(&tmp_dir).map_err(|e| io_err(&tmp_dir, e))?;
    }
    fs::create_dir_all(&tmp_dir).map_err(|e| io_err(&tmp_dir, e))?;

    save_treebank(data.treebank, &tmp_dir.join("treebank.mrg"))?;
    if !data.pool.is_empty() {
        let text = data.pool.join("\n") + "\n";
        fs::write(tmp_dir.join("pool.txt"), text).map_err(|e| io_err(&tmp_dir, e))?;
    }
    let rng_state = RngState {
        seed: data.seed,
        word_pos: data.rng.get_word_pos().to_string(),
    };
    fs::write(
        tmp_dir.join("rng.json"),
        serde_json::to_string_pretty(&rng_state)?,
    )
    .map_err(|e| io_err(&tmp_dir, e))?;
    fs::write(
        tmp_dir.join("state.json"),
        serde_json::to_string_pretty(&StateFile {
            iteration: data.iteration,
        })?,
    )
    .map_err(|e| io_err(&tmp_dir, e))?;
    if let Some(metrics) = data.metrics {
        fs::write(
            tmp_dir.join("metrics.json"),
            serde_json::to_string_pretty(metrics)?,
        )
        .map_err(|e| io_err(&tmp_dir, e))?;
    }
    if let Some(report) = &data.selection_report {
        fs::write(tmp_dir.join("selection.jsonl"), report).map_err(|e| io_err(&tmp_dir, e))?;
    }
    if let Some(report) = &data.corpus_report {
        fs::write(tmp_dir.join("corpus.jsonl"), report).map_err(|e| io_err(&tmp_dir, e))?;
    }

    if final_dir.exists() {
        fs::remove_dir_all(&final_dir).map_err(|e| io_err(&final_dir, e))?;
    }
    fs::rename(&tmp_dir, &final_dir).map_err(|e| io_err(&final_dir, e))?;
    Ok(())
}

/// Highest iteration with a completed checkpoint directory, if any.
pub(crate) fn latest_checkpoint(root: &Path) -> Option<u32> {
    let entries = fs::read_dir(root).ok()?;
    let mut best: Option<u32> = None;
    for entry in entries.flatten() {
        let name = entry.file_name();
        let name = name.to_string_lossy();
        if let Some(num) = name.strip_prefix("iter_") {
            if name.ends_with(".tmp") {
                continue;
            }
            if let Ok(iteration) = num.parse::<u32>() {
                if entry.path().join("state.json").exists()
                    && best.is_none_or(|b| iteration > b)
                {
                    best = Some(iteration);
                }
            }
        }
    }
    best
}

pub(crate) struct LoadedCheckpoint {
    pub iteration: u32,
    pub treebank: Treebank,
    pub pool: Vec<String>,
    pub rng: ChaCha8Rng,
}

pub(crate) fn load_checkpoint(
    root: &Path,
    iteration: u32,
) -> Result<LoadedCheckpoint, OrchestratorError> {
    let dir = iter_dir(root, iteration);
    let state_text = fs::read_to_string(dir.join("state.json"))
        .map_err(|e| io_err(&dir.join("state.json"), e))?;
    let state: StateFile = serde_json::from_str(&state_text)?;
    if state.iteration != iteration {
        return Err(OrchestratorError::Checkpoint(format!(
            "state.json in {} claims iteration {}",
            dir.display(),
            state.iteration
        )));
    }
    let treebank = load_treebank(&dir.join("treebank.mrg"))?;
    let pool_path = dir.join("pool.txt");
    let pool = if pool_path.exists() {
        fs::read_to_string(&pool_path)
            .map_err(|e| io_err(&pool_path, e))?
            .lines()
            .map(|l| l.to_string())
            .collect()
    } else {
        Vec::new()
    };
    let rng_text =
        fs::read_to_string(dir.join("rng.json")).map_err(|e| io_err(&dir.join("rng.json"), e))?;
    let rng_state: RngState = serde_json::from_str(&rng_text)?;
    let word_pos: u128 = rng_state
        .word_pos
        .parse()
        .map_err(|_| OrchestratorError::Checkpoint("bad rng word_pos".to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_state.seed);
    rng.set_word_pos(word_pos);
    Ok(LoadedCheckpoint {
        iteration,
        treebank,
        pool,
        rng,
    })
}

/// Read back the metrics of iterations `1..=upto` from their checkpoints.
pub(crate) fn load_metrics_history(
    root: &Path,
    upto: u32,
) -> Result<Vec<IterationMetrics>, OrchestratorError> {
    let mut history = Vec::new();
    for iteration in 1..=upto {
        let path = iter_dir(root, iteration).join("metrics.json");
        let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
        history.push(serde_json::from_str(&text)?);
    }
    Ok(history)
}
