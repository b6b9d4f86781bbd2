use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use bootparse::bracketed::{load_treebank, save_treebank, tree_to_string, Treebank};
use bootparse::generation::{generate_corpus, ChatBackend, GenerationConfig};
use bootparse::grammar::{avg_sentence_length, build_rule_distribution, build_token_distribution};
use bootparse::orchestrator::{
    build_backend, load_run_metrics, metrics_to_csv, metrics_to_table, run_self_training,
    BackendSpec, Mode, OrchestratorError, RunConfig,
};
use bootparse::parser::{parse_pool, train, ParseResult};
use bootparse::pcfg::Pcfg;
use bootparse::selection::{rank_and_select, score_instance, Criterion, SelectionConfig, SelectionRecord};
use bootparse::{parse_bracketed, Scalar};

use crate::{BackendArgs, Command};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl From<OrchestratorError> for CliError {
    fn from(err: OrchestratorError) -> CliError {
        match err {
            OrchestratorError::Config(msg) => CliError::Usage(msg),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

macro_rules! runtime_from {
    ($($ty:ty),*) => {$(
        impl From<$ty> for CliError {
            fn from(err: $ty) -> CliError {
                CliError::Runtime(err.to_string())
            }
        }
    )*};
}
runtime_from!(
    bootparse::bracketed::BracketError,
    bootparse::grammar::GrammarError,
    bootparse::pcfg::PcfgError,
    bootparse::selection::SelectionError,
    bootparse::generation::GenerationError,
    bootparse::evaluation::EvalError,
    bootparse::tree::TreeError,
    serde_json::Error,
    std::io::Error
);

fn require_file(path: &Path, what: &str) -> Result<(), CliError> {
    if !path.exists() {
        return Err(CliError::Usage(format!(
            "{what} not found: {}",
            path.display()
        )));
    }
    Ok(())
}

/// One line of the score file written by `parse --scores` and read back by
/// `select`.
#[derive(Serialize, Deserialize)]
struct CandidateRecord {
    index: usize,
    sentence: String,
    tree: String,
    log_prob: Scalar,
    confidence: Scalar,
}

pub fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Train { treebank, out } => cmd_train(&treebank, &out),
        Command::Parse {
            model,
            input,
            out,
            scores,
        } => cmd_parse(&model, &input, &out, scores.as_deref()),
        Command::Generate {
            rules_from,
            count,
            seed,
            target_samples,
            backend,
            out,
            min_len,
            max_len,
            domain_name,
            temperature,
        } => cmd_generate(
            &rules_from,
            count,
            seed,
            target_samples.as_deref(),
            &backend,
            &out,
            min_len,
            max_len,
            domain_name,
            temperature,
        ),
        Command::Select {
            candidates,
            source,
            criterion,
            top_k,
            pool_factor,
            out,
            report,
        } => cmd_select(
            &candidates,
            &source,
            &criterion,
            top_k,
            pool_factor,
            &out,
            report.as_deref(),
        ),
        Command::SelfTrain { .. } => cmd_self_train(command),
        Command::Score { gold, pred, json } => cmd_score(&gold, &pred, json),
        Command::Report { run_dir, csv } => cmd_report(&run_dir, csv),
        Command::Validate { treebank } => cmd_validate(&treebank),
    }
}

fn cmd_train(treebank: &Path, out: &Path) -> Result<(), CliError> {
    require_file(treebank, "treebank")?;
    let bank = load_treebank(treebank)?;
    let model = train(&bank)?;
    model.save(out)?;
    log::info!(
        "trained on {} trees; model written to {}",
        bank.len(),
        out.display()
    );
    Ok(())
}

fn read_sentences(path: &Path) -> Result<Vec<String>, CliError> {
    Ok(fs::read_to_string(path)?
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| l.split_whitespace().collect::<Vec<_>>().join(" "))
        .collect())
}

fn cmd_parse(
    model_path: &Path,
    input: &Path,
    out: &Path,
    scores: Option<&Path>,
) -> Result<(), CliError> {
    require_file(model_path, "model")?;
    require_file(input, "input")?;
    let model = Pcfg::load(model_path)?;
    let sentences = read_sentences(input)?;
    let tokenized: Vec<Vec<String>> = sentences
        .iter()
        .map(|s| s.split_whitespace().map(|t| t.to_string()).collect())
        .collect();
    let outcome = parse_pool(&model, &tokenized);
    log::info!(
        "parsed {} of {} sentences ({} failures)",
        outcome.parses.len(),
        sentences.len(),
        outcome.no_parse.len()
    );
    for index in &outcome.no_parse {
        log::debug!("no parse for sentence {index}: {}", sentences[*index]);
    }
    let trees: Vec<_> = outcome.parses.iter().map(|(_, r)| r.tree.clone()).collect();
    save_treebank(&Treebank::from_trees(trees), out)?;
    if let Some(scores_path) = scores {
        let mut text = String::new();
        for (index, result) in &outcome.parses {
            let record = CandidateRecord {
                index: *index,
                sentence: sentences[*index].clone(),
                tree: tree_to_string(&result.tree),
                log_prob: result.log_prob,
                confidence: result.confidence,
            };
            text.push_str(&serde_json::to_string(&record)?);
            text.push('\n');
        }
        fs::write(scores_path, text)?;
    }
    Ok(())
}

fn backend_from_args(args: &BackendArgs, seed: u64) -> Result<Box<dyn ChatBackend>, CliError> {
    let spec = backend_spec_from_args(args)?.ok_or_else(|| {
        CliError::Usage("no backend given: pass --backend mock|URL".to_string())
    })?;
    Ok(build_backend(&spec, seed)?)
}

fn backend_spec_from_args(args: &BackendArgs) -> Result<Option<BackendSpec>, CliError> {
    match args.backend.as_deref() {
        None => Ok(None),
        Some("mock") => {
            let grammar = args.mock_grammar.clone().ok_or_else(|| {
                CliError::Usage("--backend mock requires --mock-grammar".to_string())
            })?;
            require_file(&grammar, "mock grammar")?;
            if let Some(from) = &args.mock_mix_from {
                require_file(from, "mock mix-from grammar")?;
            }
            Ok(Some(BackendSpec::Mock {
                grammar,
                mix_from: args.mock_mix_from.clone(),
                schedule: args.mock_schedule.clone(),
            }))
        }
        Some(url) => Ok(Some(BackendSpec::Http {
            url: url.to_string(),
            api_key_env: args.api_key_env.clone(),
        })),
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_generate(
    rules_from: &Path,
    count: usize,
    seed: u64,
    target_samples: Option<&Path>,
    backend_args: &BackendArgs,
    out: &Path,
    min_len: usize,
    max_len: usize,
    domain_name: String,
    temperature: Scalar,
) -> Result<(), CliError> {
    require_file(rules_from, "rules treebank")?;
    let bank = load_treebank(rules_from)?;
    let rules = build_rule_distribution(&bank)?;
    let avg_len = avg_sentence_length(&bank)?;
    let samples = match target_samples {
        Some(path) => {
            require_file(path, "target samples")?;
            read_sentences(path)?
        }
        None => Vec::new(),
    };
    let backend = backend_from_args(backend_args, seed)?;
    let cfg = GenerationConfig {
        model: backend_args.model.clone().unwrap_or_else(|| "mock".to_string()),
        temperature,
        corpus_size: count,
        min_len,
        max_len,
        seed,
        domain_name,
        ..Default::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let corpus = generate_corpus(&*backend, &cfg, &rules, avg_len, &samples, 1, &mut rng)?;
    let mut text = String::new();
    for sentence in &corpus.sentences {
        text.push_str(&serde_json::to_string(sentence)?);
        text.push('\n');
    }
    fs::write(out, text)?;
    log::info!(
        "generated {} sentences in {} attempts ({} filtered, {} duplicates)",
        corpus.sentences.len(),
        corpus.stats.attempts,
        corpus.stats.length_filtered,
        corpus.stats.duplicates
    );
    Ok(())
}

fn cmd_select(
    candidates: &Path,
    source: &Path,
    criterion: &str,
    top_k: usize,
    pool_factor: Scalar,
    out: &Path,
    report: Option<&Path>,
) -> Result<(), CliError> {
    require_file(candidates, "candidates")?;
    require_file(source, "source treebank")?;
    let criterion = Criterion::parse(criterion).map_err(|e| CliError::Usage(e.to_string()))?;
    let source_bank = load_treebank(source)?;
    let source_rules = build_rule_distribution(&source_bank)?;
    let source_tokens = build_token_distribution(&source_bank)?;

    let mut instances = Vec::new();
    for (lineno, line) in fs::read_to_string(candidates)?.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: CandidateRecord = serde_json::from_str(line).map_err(|e| {
            CliError::Runtime(format!("{} line {}: {e}", candidates.display(), lineno + 1))
        })?;
        let mut trees = parse_bracketed(&record.tree)?;
        if trees.len() != 1 {
            return Err(CliError::Runtime(format!(
                "{} line {}: expected one tree",
                candidates.display(),
                lineno + 1
            )));
        }
        let parse = ParseResult {
            tree: trees.remove(0),
            log_prob: record.log_prob,
            confidence: record.confidence,
        };
        let sentence = record
            .sentence
            .split_whitespace()
            .map(|t| t.to_string())
            .collect();
        instances.push(score_instance(sentence, &parse, &source_tokens, &source_rules)?);
    }
    let cfg = SelectionConfig {
        criterion,
        top_k,
        grsconf_pool_factor: pool_factor,
    };
    let snapshot: Vec<(Scalar, Scalar, Scalar)> = instances
        .iter()
        .map(|i| (i.confidence, i.token_distance, i.grs_distance))
        .collect();
    let selection = rank_and_select(instances, &cfg)?;
    let selected_set: std::collections::HashSet<usize> =
        selection.selected_indices.iter().copied().collect();
    let trees: Vec<_> = selection.selected.iter().map(|i| i.tree.clone()).collect();
    save_treebank(&Treebank::from_trees(trees), out)?;
    if let Some(report_path) = report {
        let mut text = String::new();
        for (id, (confidence, token_d, grs_d)) in snapshot.iter().enumerate() {
            let record = SelectionRecord {
                id,
                iteration: 0,
                criterion,
                confidence: *confidence,
                token_distance: *token_d,
                grs_distance: *grs_d,
                token_distance_original: *token_d,
                grs_distance_original: *grs_d,
                selected: selected_set.contains(&id),
            };
            text.push_str(&serde_json::to_string(&record)?);
            text.push('\n');
        }
        fs::write(report_path, text)?;
    }
    log::info!(
        "selected {} of {} candidates by {}",
        selection.selected.len(),
        snapshot.len(),
        criterion
    );
    Ok(())
}

fn cmd_self_train(command: Command) -> Result<(), CliError> {
    let Command::SelfTrain {
        config,
        mode,
        iterations,
        seed,
        source_treebank,
        target_samples,
        target_reference,
        eval_treebank,
        vanilla_pool,
        pool_size,
        out,
        criterion,
        top_k,
        pool_factor,
        corpus_size,
        domain_name,
        backend,
    } = command
    else {
        unreachable!("dispatched on SelfTrain");
    };
    let mut cfg = match config {
        Some(path) => {
            require_file(&path, "config")?;
            RunConfig::load(&path)?
        }
        None => RunConfig::default(),
    };
    if let Some(mode) = mode {
        cfg.mode = Mode::parse(&mode)?;
    }
    if let Some(v) = iterations {
        cfg.iterations = v;
    }
    if let Some(v) = seed {
        cfg.seed = v;
        cfg.generation.seed = v;
    }
    if let Some(v) = source_treebank {
        cfg.source_treebank = v;
    }
    if let Some(v) = target_samples {
        cfg.target_samples = Some(v);
    }
    if let Some(v) = target_reference {
        cfg.target_reference = Some(v);
    }
    if let Some(v) = eval_treebank {
        cfg.eval_treebank = Some(v);
    }
    if let Some(v) = vanilla_pool {
        cfg.vanilla_pool = Some(v);
    }
    if let Some(v) = pool_size {
        cfg.pool_size = v;
    }
    if let Some(v) = out {
        cfg.checkpoint_dir = v;
    }
    if let Some(v) = criterion {
        cfg.selection.criterion =
            Criterion::parse(&v).map_err(|e| CliError::Usage(e.to_string()))?;
    }
    if let Some(v) = top_k {
        cfg.selection.top_k = v;
    }
    if let Some(v) = pool_factor {
        cfg.selection.grsconf_pool_factor = v;
    }
    if let Some(v) = corpus_size {
        cfg.generation.corpus_size = v;
    }
    if let Some(v) = domain_name {
        cfg.domain_name = v.clone();
        cfg.generation.domain_name = v;
    }
    if let Some(spec) = backend_spec_from_args(&backend)? {
        cfg.backend = Some(spec);
    }
    if let Some(model) = backend.model {
        cfg.generation.model = model;
    }
    cfg.generation.seed = cfg.seed;
    cfg.generation.domain_name = cfg.domain_name.clone();

    cfg.validate()?;
    if cfg.source_treebank.as_os_str().is_empty() || !cfg.source_treebank.exists() {
        return Err(CliError::Usage(format!(
            "source_treebank not found: '{}'",
            cfg.source_treebank.display()
        )));
    }
    let output = run_self_training(&cfg)?;
    log::info!(
        "run complete: {} pseudo trees, artifacts in {}",
        output.pseudo_treebank.len(),
        output.run_dir.display()
    );
    if let Some(f1) = output.final_f1 {
        log::info!("final F1 = {f1:.2}");
    }
    Ok(())
}

fn cmd_score(gold: &Path, pred: &Path, json: bool) -> Result<(), CliError> {
    require_file(gold, "gold treebank")?;
    require_file(pred, "predicted treebank")?;
    let gold_bank = load_treebank(gold)?;
    let pred_bank = load_treebank(pred)?;
    let score = bootparse::evaluation::score_trees(gold_bank.trees(), pred_bank.trees())?;
    if json {
        println!("{}", serde_json::to_string_pretty(&score)?);
    } else {
        println!(
            "matched {} | gold {} | predicted {}",
            score.matched, score.gold_total, score.pred_total
        );
        println!(
            "P = {:.2}  R = {:.2}  F1 = {:.2}",
            score.precision, score.recall, score.f1
        );
    }
    Ok(())
}

fn cmd_report(run_dir: &Path, csv: Option<PathBuf>) -> Result<(), CliError> {
    if !run_dir.is_dir() {
        return Err(CliError::Usage(format!(
            "run directory not found: {}",
            run_dir.display()
        )));
    }
    let metrics = load_run_metrics(run_dir)?;
    let csv_path = csv.unwrap_or_else(|| run_dir.join("report.csv"));
    fs::write(&csv_path, metrics_to_csv(&metrics))?;
    print!("{}", metrics_to_table(&metrics));
    log::info!("csv written to {}", csv_path.display());
    Ok(())
}

fn cmd_validate(treebank: &Path) -> Result<(), CliError> {
    require_file(treebank, "treebank")?;
    let bank = load_treebank(treebank)?;
    for (index, (tree, _)) in bank.iter().enumerate() {
        tree.validate().map_err(|e| {
            CliError::Runtime(format!("tree {index} invalid: {e}"))
        })?;
    }
    println!("OK: {} trees", bank.len());
    Ok(())
}
