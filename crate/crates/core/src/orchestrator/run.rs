//! The iteration engine and the full self-training driver.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::bracketed::{load_treebank, save_treebank, Provenance, Treebank};
use crate::divergence::js_counts;
use crate::generation::{generate_corpus, ChatBackend, GeneratedSentence, HttpBackend, MockBackend};
use crate::grammar::{
    avg_sentence_length, build_rule_distribution, build_token_distribution, RuleDistribution,
    TokenDistribution,
};
use crate::parser::{train, ChartParser};
use crate::pcfg::Pcfg;
use crate::sampling::ToyGrammar;
use crate::selection::{rank_and_select, score_instance, PseudoInstance, SelectionRecord};
use crate::tree::ConstTree;
use crate::Scalar;

use super::checkpoint::{
    latest_checkpoint, load_checkpoint, load_metrics_history, write_checkpoint,
    CheckpointData,
};
use super::config::{BackendSpec, Mode, RunConfig};
use super::metrics::IterationMetrics;
use super::{io_err, OrchestratorError};

/// The loop variables of one self-training turn.
#[derive(Debug, Clone)]
pub struct IterationState {
    pub iteration: u32,
    /// Current training treebank: source plus accumulated pseudo trees.
    pub treebank: Treebank,
    /// Always re-derived from `treebank`, never patched incrementally.
    pub rule_dist: RuleDistribution,
    /// Remaining raw sentences (vanilla mode only).
    pub pool: Vec<String>,
    /// Cumulative selected pseudo treebank.
    pub selected: Treebank,
    pub metrics: Option<IterationMetrics>,
}

impl IterationState {
    pub fn initial(treebank: Treebank, pool: Vec<String>) -> Result<Self, OrchestratorError> {
        let rule_dist = build_rule_distribution(&treebank)?;
        let mut selected = Treebank::new();
        for (tree, prov) in treebank.iter() {
            if let Provenance::Pseudo { .. } = prov {
                selected.push(tree.clone(), prov);
            }
        }
        Ok(IterationState {
            iteration: 0,
            treebank,
            rule_dist,
            pool,
            selected,
            metrics: None,
        })
    }

    fn resumed(iteration: u32, treebank: Treebank, pool: Vec<String>) -> Result<Self, OrchestratorError> {
        let mut state = IterationState::initial(treebank, pool)?;
        state.iteration = iteration;
        Ok(state)
    }
}

/// Reference data for the target-domain distance metric.
#[derive(Debug, Clone)]
pub enum DomainReference {
    Trees(Treebank),
    Sentences(Vec<String>),
}

impl DomainReference {
    /// Load from a file, sniffing the format: bracketed trees if the first
    /// content line opens a parenthesis, raw sentences otherwise.
    pub fn load(path: &Path) -> Result<DomainReference, OrchestratorError> {
        let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        let first = text
            .lines()
            .map(str::trim)
            .find(|l| !l.is_empty() && !l.starts_with('#'));
        match first {
            Some(line) if line.starts_with('(') => {
                Ok(DomainReference::Trees(load_treebank(path)?))
            }
            _ => Ok(DomainReference::Sentences(read_sentences(&text))),
        }
    }

    fn token_counts(sentences: &[String]) -> TokenDistribution {
        let mut dist = TokenDistribution::default();
        for s in sentences {
            dist.add_tokens(s.split_whitespace());
        }
        dist
    }
}

fn read_sentences(text: &str) -> Vec<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| l.split_whitespace().collect::<Vec<_>>().join(" "))
        .collect()
}

/// JS divergence between a pseudo treebank and a reference: rule
/// distributions against tree references, token distributions against raw
/// sentences.
pub fn measure_domain_distance(
    pseudo: &Treebank,
    reference: &DomainReference,
) -> Result<Scalar, OrchestratorError> {
    match reference {
        DomainReference::Trees(bank) => {
            let a = build_rule_distribution(pseudo)?;
            let b = build_rule_distribution(bank)?;
            Ok(js_counts(a.counts(), b.counts())?)
        }
        DomainReference::Sentences(sentences) => {
            let a = build_token_distribution(pseudo)?;
            let b = DomainReference::token_counts(sentences);
            Ok(js_counts(a.counts(), b.counts())?)
        }
    }
}

/// Construct the configured backend. The run seed keeps mock sampling
/// deterministic per request.
pub fn build_backend(
    spec: &BackendSpec,
    seed: u64,
) -> Result<Box<dyn ChatBackend>, OrchestratorError> {
    match spec {
        BackendSpec::Mock {
            grammar,
            mix_from,
            schedule,
        } => {
            let to_text = fs::read_to_string(grammar).map_err(|e| io_err(grammar, e))?;
            let to = ToyGrammar::parse_text(&to_text)?;
            match mix_from {
                Some(from_path) => {
                    let from_text =
                        fs::read_to_string(from_path).map_err(|e| io_err(from_path, e))?;
                    let from = ToyGrammar::parse_text(&from_text)?;
                    let schedule = if schedule.is_empty() {
                        vec![0.25, 0.5, 0.75, 1.0]
                    } else {
                        schedule.clone()
                    };
                    Ok(Box::new(MockBackend::mixture(from, to, schedule, seed)))
                }
                None => Ok(Box::new(MockBackend::new(to, seed))),
            }
        }
        BackendSpec::Http { url, api_key_env } => {
            let api_key = std::env::var(api_key_env).ok();
            if api_key.is_none() {
                log::warn!("environment variable {api_key_env} not set; sending no API key");
            }
            Ok(Box::new(HttpBackend::new(url.clone(), api_key)))
        }
    }
}

/// Immutable context shared by every iteration of one run.
pub struct RunContext<'a> {
    pub cfg: &'a RunConfig,
    pub backend: Option<&'a dyn ChatBackend>,
    pub target_samples: Vec<String>,
    pub target_reference: Option<DomainReference>,
    pub eval: Option<Treebank>,
    /// Distributions of the original source treebank, fixed across
    /// iterations for reporting.
    pub source_rules: RuleDistribution,
    pub source_tokens: TokenDistribution,
}

/// Everything an iteration produces besides the new state.
#[derive(Debug, Clone)]
pub struct IterationArtifacts {
    pub metrics: IterationMetrics,
    pub records: Vec<SelectionRecord>,
    pub corpus: Option<Vec<GeneratedSentence>>,
}

/// Run one loop turn: obtain candidates, train, parse, score, select,
/// update the treebank, and re-extract grammar rules. The input state is
/// untouched.
pub fn run_iteration(
    ctx: &RunContext,
    state: &IterationState,
    rng: &mut ChaCha8Rng,
) -> Result<(IterationState, IterationArtifacts), OrchestratorError> {
    let cfg = ctx.cfg;
    let iteration = state.iteration + 1;

    // (1) candidate sentences
    let (candidates, corpus, generation_stats) = match cfg.mode {
        Mode::Llm => {
            let backend = ctx
                .backend
                .ok_or_else(|| OrchestratorError::Config("llm mode without backend".into()))?;
            let avg_len = avg_sentence_length(&state.treebank)?;
            log::info!("iter={iteration} stage=generate corpus_size={}", cfg.generation.corpus_size);
            let generated = generate_corpus(
                backend,
                &cfg.generation,
                &state.rule_dist,
                avg_len,
                &ctx.target_samples,
                iteration,
                rng,
            )?;
            let candidates: Vec<Vec<String>> =
                generated.sentences.iter().map(|s| s.tokens()).collect();
            let stats = generated.stats.clone();
            (candidates, Some(generated.sentences), Some(stats))
        }
        Mode::Vanilla => {
            let candidates: Vec<Vec<String>> = state
                .pool
                .iter()
                .map(|s| s.split_whitespace().map(|t| t.to_string()).collect())
                .collect();
            (candidates, None, None)
        }
    };
    let pool_size = candidates.len();

    // (2) train on the current treebank
    log::info!("iter={iteration} stage=train treebank={}", state.treebank.len());
    let model = train(&state.treebank)?;
    let parser = ChartParser::new(&model);

    // (3) parse the candidate pool
    let parsed_pool = parser.parse_pool(&candidates);
    let parsed = parsed_pool.parses.len();
    let no_parse = parsed_pool.no_parse.len();
    log::info!("iter={iteration} stage=parse pool={pool_size} parsed={parsed} no_parse={no_parse}");

    // (4) score candidates against the current treebank's distributions
    let current_tokens = build_token_distribution(&state.treebank)?;
    let scored: Result<Vec<(usize, PseudoInstance, Scalar, Scalar)>, OrchestratorError> =
        parsed_pool
            .parses
            .par_iter()
            .map(|(origin, parse)| {
                let sentence = candidates[*origin].clone();
                let instance =
                    score_instance(sentence, parse, &current_tokens, &state.rule_dist)?;
                let cand_tokens = {
                    let mut d = TokenDistribution::default();
                    d.add_tokens(instance.sentence.iter().map(|t| t.as_str()));
                    d
                };
                let cand_rules = RuleDistribution::from_tree(&instance.tree);
                let token_d0 = crate::divergence::distance_to_source(
                    cand_tokens.counts(),
                    ctx.source_tokens.counts(),
                )?;
                let grs_d0 = crate::divergence::distance_to_source(
                    cand_rules.counts(),
                    ctx.source_rules.counts(),
                )?;
                Ok((*origin, instance, token_d0, grs_d0))
            })
            .collect();
    let scored = scored?;

    // (5) rank and select
    let mut origins = Vec::with_capacity(scored.len());
    let mut instances = Vec::with_capacity(scored.len());
    let mut originals = Vec::with_capacity(scored.len());
    let mut score_snapshot = Vec::with_capacity(scored.len());
    for (origin, instance, token_d0, grs_d0) in scored {
        origins.push(origin);
        score_snapshot.push((
            instance.confidence,
            instance.token_distance,
            instance.grs_distance,
        ));
        originals.push((token_d0, grs_d0));
        instances.push(instance);
    }

    let (selection, selected_set) = if instances.is_empty() {
        log::warn!("iter={iteration} stage=select no parseable candidates");
        (None, HashSet::new())
    } else {
        let selection = rank_and_select(instances, &cfg.selection)?;
        let set: HashSet<usize> = selection.selected_indices.iter().copied().collect();
        (Some(selection), set)
    };

    let records: Vec<SelectionRecord> = score_snapshot
        .iter()
        .enumerate()
        .map(|(i, (confidence, token_d, grs_d))| SelectionRecord {
            id: i,
            iteration,
            criterion: cfg.selection.criterion,
            confidence: *confidence,
            token_distance: *token_d,
            grs_distance: *grs_d,
            token_distance_original: originals[i].0,
            grs_distance_original: originals[i].1,
            selected: selected_set.contains(&i),
        })
        .collect();

    // (6) update treebank and pool, re-extract rules
    let mut treebank = state.treebank.clone();
    let mut cumulative = state.selected.clone();
    let mut batch = Treebank::new();
    let mut selected_count = 0usize;
    let mut mean_confidence = 0.0;
    let mut mean_token_distance = 0.0;
    let mut mean_grs_distance = 0.0;
    let mut pool = state.pool.clone();
    if let Some(selection) = &selection {
        selected_count = selection.selected.len();
        for instance in &selection.selected {
            let prov = Provenance::Pseudo { iteration };
            treebank.push(instance.tree.clone(), prov);
            cumulative.push(instance.tree.clone(), prov);
            batch.push(instance.tree.clone(), prov);
            mean_confidence += instance.confidence;
            mean_token_distance += instance.token_distance;
            mean_grs_distance += instance.grs_distance;
        }
        if selected_count > 0 {
            mean_confidence /= selected_count as Scalar;
            mean_token_distance /= selected_count as Scalar;
            mean_grs_distance /= selected_count as Scalar;
        }
        if cfg.mode == Mode::Vanilla {
            let removed: HashSet<usize> = selection
                .selected_indices
                .iter()
                .map(|&i| origins[i])
                .collect();
            pool = pool
                .into_iter()
                .enumerate()
                .filter(|(i, _)| !removed.contains(i))
                .map(|(_, s)| s)
                .collect();
        }
    }
    let rule_dist = build_rule_distribution(&treebank)?;
    log::info!(
        "iter={iteration} stage=update selected={selected_count} treebank={}",
        treebank.len()
    );

    // (7) distances of the selected batch, and optional evaluation
    let js_to_source = if batch.is_empty() {
        None
    } else {
        let batch_rules = build_rule_distribution(&batch)?;
        Some(js_counts(batch_rules.counts(), ctx.source_rules.counts())?)
    };
    let js_to_target = match (&ctx.target_reference, batch.is_empty()) {
        (Some(reference), false) => Some(measure_domain_distance(&batch, reference)?),
        _ => None,
    };
    let f1 = match &ctx.eval {
        Some(eval_bank) => Some(evaluate_parser(&parser, eval_bank)?),
        None => None,
    };
    if let Some(f1) = f1 {
        log::info!("iter={iteration} stage=eval f1={f1:.2}");
    }

    let metrics = IterationMetrics {
        iteration,
        pool_size,
        parsed,
        no_parse,
        selected: selected_count,
        treebank_size: treebank.len(),
        mean_confidence,
        mean_token_distance,
        mean_grs_distance,
        js_to_source,
        js_to_target,
        f1,
        generation: generation_stats,
    };

    let new_state = IterationState {
        iteration,
        treebank,
        rule_dist,
        pool,
        selected: cumulative,
        metrics: Some(metrics.clone()),
    };
    Ok((
        new_state,
        IterationArtifacts {
            metrics,
            records,
            corpus,
        },
    ))
}

/// Parse the gold yields and score labeled brackets, counting failed parses
/// against recall.
fn evaluate_parser(parser: &ChartParser, gold: &Treebank) -> Result<Scalar, OrchestratorError> {
    let yields: Vec<Vec<String>> = gold.trees().iter().map(|t| t.tokens().to_vec()).collect();
    let outcome = parser.parse_pool(&yields);
    let mut aligned: Vec<Option<ConstTree>> = vec![None; gold.len()];
    for (index, parse) in outcome.parses {
        aligned[index] = Some(parse.tree);
    }
    let options: Vec<Option<&ConstTree>> = aligned.iter().map(|o| o.as_ref()).collect();
    let score = crate::evaluation::score_trees_with_gaps(gold.trees(), &options)?;
    Ok(score.f1)
}

/// The final outputs of a run.
pub struct RunOutput {
    pub model: Pcfg,
    pub pseudo_treebank: Treebank,
    pub metrics: Vec<IterationMetrics>,
    pub final_f1: Option<Scalar>,
    pub run_dir: PathBuf,
}

/// Drive the full loop from a config: set up inputs, fold `run_iteration`
/// over the iteration budget with a checkpoint after each turn, then train
/// once more on the final treebank and write the run artifacts.
///
/// If the checkpoint directory already holds completed iterations the run
/// resumes after the last one.
pub fn run_self_training(cfg: &RunConfig) -> Result<RunOutput, OrchestratorError> {
    cfg.validate()?;
    let run_dir = cfg.checkpoint_dir.clone();
    fs::create_dir_all(&run_dir).map_err(|e| io_err(&run_dir, e))?;

    let source = load_treebank(&cfg.source_treebank)?;
    if source.is_empty() {
        return Err(OrchestratorError::Config(format!(
            "source treebank {} is empty",
            cfg.source_treebank.display()
        )));
    }
    let source_rules = build_rule_distribution(&source)?;
    let source_tokens = build_token_distribution(&source)?;

    let target_samples = match &cfg.target_samples {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
            read_sentences(&text)
        }
        None => Vec::new(),
    };
    let target_reference = match &cfg.target_reference {
        Some(path) => Some(DomainReference::load(path)?),
        None => None,
    };
    let eval = match &cfg.eval_treebank {
        Some(path) => Some(load_treebank(path)?),
        None => None,
    };
    let backend = match (cfg.mode, &cfg.backend) {
        (Mode::Llm, Some(spec)) => Some(build_backend(spec, cfg.seed)?),
        _ => None,
    };

    let ctx = RunContext {
        cfg,
        backend: backend.as_deref(),
        target_samples,
        target_reference,
        eval,
        source_rules,
        source_tokens,
    };

    // resume or initialize
    let (mut state, mut rng, mut metrics_trail) = match latest_checkpoint(&run_dir) {
        Some(iteration) => {
            log::info!("resuming from checkpoint iter_{iteration:04}");
            let loaded = load_checkpoint(&run_dir, iteration)?;
            let state = IterationState::resumed(loaded.iteration, loaded.treebank, loaded.pool)?;
            let trail = load_metrics_history(&run_dir, iteration)?;
            (state, loaded.rng, trail)
        }
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let pool = match cfg.mode {
                Mode::Vanilla => {
                    let path = cfg.vanilla_pool.as_ref().expect("validated");
                    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
                    build_vanilla_pool(&text, cfg, &mut rng)
                }
                Mode::Llm => Vec::new(),
            };
            let state = IterationState::initial(source.clone(), pool)?;
            let resolved = toml::to_string_pretty(cfg)
                .map_err(|e| OrchestratorError::Config(e.to_string()))?;
            fs::write(run_dir.join("config.toml"), resolved)
                .map_err(|e| io_err(&run_dir, e))?;
            write_checkpoint(
                &run_dir,
                &CheckpointData {
                    iteration: 0,
                    treebank: &state.treebank,
                    pool: &state.pool,
                    seed: cfg.seed,
                    rng: &rng,
                    metrics: None,
                    selection_report: None,
                    corpus_report: None,
                },
            )?;
            (state, rng, Vec::new())
        }
    };

    while state.iteration < cfg.iterations {
        let (next, artifacts) = run_iteration(&ctx, &state, &mut rng)?;
        let selection_report = jsonl(&artifacts.records)?;
        let corpus_report = match &artifacts.corpus {
            Some(corpus) => Some(jsonl(corpus)?),
            None => None,
        };
        write_checkpoint(
            &run_dir,
            &CheckpointData {
                iteration: next.iteration,
                treebank: &next.treebank,
                pool: &next.pool,
                seed: cfg.seed,
                rng: &rng,
                metrics: Some(&artifacts.metrics),
                selection_report: Some(selection_report),
                corpus_report,
            },
        )?;
        metrics_trail.push(artifacts.metrics);
        state = next;
    }

    // one more training pass so the returned parser reflects the final update
    let model = train(&state.treebank)?;
    let final_f1 = match &ctx.eval {
        Some(eval_bank) => {
            let parser = ChartParser::new(&model);
            Some(evaluate_parser(&parser, eval_bank)?)
        }
        None => None,
    };

    model.save(&run_dir.join("model.json"))?;
    save_treebank(&state.selected, &run_dir.join("pseudo_treebank.mrg"))?;
    fs::write(run_dir.join("metrics.jsonl"), jsonl(&metrics_trail)?)
        .map_err(|e| io_err(&run_dir, e))?;
    let summary = serde_json::json!({
        "mode": cfg.mode.to_string(),
        "criterion": cfg.selection.criterion.to_string(),
        "iterations": state.iteration,
        "seed": cfg.seed,
        "treebank_size": state.treebank.len(),
        "pseudo_size": state.selected.len(),
        "final_f1": final_f1,
    });
    fs::write(
        run_dir.join("summary.json"),
        serde_json::to_string_pretty(&summary)?,
    )
    .map_err(|e| io_err(&run_dir, e))?;

    Ok(RunOutput {
        model,
        pseudo_treebank: state.selected,
        metrics: metrics_trail,
        final_f1,
        run_dir,
    })
}

/// Load, length-filter, deduplicate, and uniformly subsample the vanilla
/// raw pool.
fn build_vanilla_pool(text: &str, cfg: &RunConfig, rng: &mut ChaCha8Rng) -> Vec<String> {
    let mut seen = HashSet::new();
    let all: Vec<String> = read_sentences(text)
        .into_iter()
        .filter(|s| {
            let n = s.split_whitespace().count();
            n >= cfg.generation.min_len && n <= cfg.generation.max_len
        })
        .filter(|s| seen.insert(s.clone()))
        .collect();
    if all.len() <= cfg.pool_size {
        return all;
    }
    let mut picked: Vec<usize> =
        rand::seq::index::sample(rng, all.len(), cfg.pool_size).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|i| all[i].clone()).collect()
}

fn jsonl<T: serde::Serialize>(items: &[T]) -> Result<String, OrchestratorError> {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item)?);
        out.push('\n');
    }
    Ok(out)
}

/// Read metrics back from a run directory, for the report command.
pub fn load_run_metrics(run_dir: &Path) -> Result<Vec<IterationMetrics>, OrchestratorError> {
    let path = run_dir.join("metrics.jsonl");
    if path.exists() {
        let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
        let mut metrics = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            metrics.push(serde_json::from_str(line).map_err(|e| {
                OrchestratorError::Checkpoint(format!(
                    "{} line {}: {e}",
                    path.display(),
                    lineno + 1
                ))
            })?);
        }
        return Ok(metrics);
    }
    // fall back to per-iteration checkpoints of an unfinished run
    match latest_checkpoint(run_dir) {
        Some(latest) if latest >= 1 => Ok(load_metrics_history(run_dir, latest)?),
        _ => Err(OrchestratorError::Checkpoint(format!(
            "{} contains neither metrics.jsonl nor completed iteration checkpoints",
            run_dir.display()
        ))),
    }
}
