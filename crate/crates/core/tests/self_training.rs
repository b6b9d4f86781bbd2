//! End-to-end runs of the self-training loop against the mock backend:
//! bookkeeping, determinism, pool handling, and checkpoint resume.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use bootparse::bracketed::{load_treebank, save_treebank, Provenance, Treebank};
use bootparse::fixtures::{source_grammar, target_grammar, SOURCE_GRAMMAR, TARGET_GRAMMAR};
use bootparse::grammar::build_rule_distribution;
use bootparse::orchestrator::{
    load_run_metrics, measure_domain_distance, run_self_training, BackendSpec, DomainReference,
    Mode, RunConfig,
};
use bootparse::sampling::ToyGrammar;
use bootparse::selection::{Criterion, SelectionConfig};

fn sample_bank(grammar: &ToyGrammar, n: usize, seed: u64) -> Treebank {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trees = Vec::with_capacity(n);
    while trees.len() < n {
        match grammar.sample_tree(&mut rng) {
            Ok(tree) if tree.len() <= 40 => trees.push(tree),
            _ => continue,
        }
    }
    Treebank::from_trees(trees)
}

struct Workspace {
    #[allow(dead_code)]
    dir: tempfile::TempDir,
    root: PathBuf,
}

impl Workspace {
    fn new() -> Workspace {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        Workspace { dir, root }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    fn write_source(&self, n: usize, seed: u64) -> PathBuf {
        let bank = sample_bank(&source_grammar(), n, seed);
        let path = self.path("source.mrg");
        save_treebank(&bank, &path).unwrap();
        path
    }

    fn write_grammars(&self) -> (PathBuf, PathBuf) {
        let src = self.path("source_grammar.txt");
        let tgt = self.path("target_grammar.txt");
        fs::write(&src, SOURCE_GRAMMAR).unwrap();
        fs::write(&tgt, TARGET_GRAMMAR).unwrap();
        (src, tgt)
    }
}

fn base_config(ws: &Workspace, run_name: &str) -> RunConfig {
    let source = ws.write_source(60, 11);
    let (_, tgt_grammar) = ws.write_grammars();
    let mut cfg = RunConfig {
        mode: Mode::Llm,
        iterations: 2,
        seed: 7,
        source_treebank: source,
        checkpoint_dir: ws.path(run_name),
        selection: SelectionConfig {
            criterion: Criterion::GrsConf,
            top_k: 10,
            grsconf_pool_factor: 2.0,
        },
        backend: Some(BackendSpec::Mock {
            grammar: tgt_grammar,
            mix_from: None,
            schedule: Vec::new(),
        }),
        ..Default::default()
    };
    cfg.generation.corpus_size = 80;
    cfg.generation.max_len = 30;
    cfg
}

#[test]
fn llm_mock_run_grows_the_treebank_by_top_k() {
    let ws = Workspace::new();
    let cfg = base_config(&ws, "run");
    let out = run_self_training(&cfg).unwrap();

    assert_eq!(out.metrics.len(), 2);
    assert_eq!(out.metrics[0].treebank_size, 70);
    assert_eq!(out.metrics[1].treebank_size, 80);
    assert_eq!(out.pseudo_treebank.len(), 20);
    for (_, prov) in out.pseudo_treebank.iter() {
        assert!(matches!(prov, Provenance::Pseudo { .. }));
    }
    // artifacts on disk
    assert!(out.run_dir.join("model.json").exists());
    assert!(out.run_dir.join("pseudo_treebank.mrg").exists());
    assert!(out.run_dir.join("metrics.jsonl").exists());
    assert!(out.run_dir.join("summary.json").exists());
    assert!(out.run_dir.join("iter_0002/selection.jsonl").exists());
    assert!(out.run_dir.join("iter_0002/corpus.jsonl").exists());

    // grammar-rule superset property: rules of the grown treebank contain
    // every source rule
    let source = load_treebank(&cfg.source_treebank).unwrap();
    let source_rules = build_rule_distribution(&source).unwrap();
    let final_bank = load_treebank(&out.run_dir.join("iter_0002/treebank.mrg")).unwrap();
    let final_rules = build_rule_distribution(&final_bank).unwrap();
    for (rule, _) in source_rules.support() {
        assert!(
            final_rules.counts().contains_key(rule),
            "source rule {rule} missing after update"
        );
    }
}

#[test]
fn identical_seeds_give_bit_identical_metrics() {
    let ws = Workspace::new();
    let mut cfg_a = base_config(&ws, "run_a");
    let mut cfg_b = base_config(&ws, "run_b");
    // the two configs share the source treebank written by base_config
    cfg_a.source_treebank = ws.path("source.mrg");
    cfg_b.source_treebank = ws.path("source.mrg");
    run_self_training(&cfg_a).unwrap();
    run_self_training(&cfg_b).unwrap();
    let a = fs::read(ws.path("run_a/metrics.jsonl")).unwrap();
    let b = fs::read(ws.path("run_b/metrics.jsonl")).unwrap();
    assert!(!a.is_empty());
    assert_eq!(a, b);
    let a_model = fs::read(ws.path("run_a/model.json")).unwrap();
    let b_model = fs::read(ws.path("run_b/model.json")).unwrap();
    assert_eq!(a_model, b_model);
}

#[test]
fn resume_from_checkpoint_matches_uninterrupted_run() {
    let ws = Workspace::new();
    let mut full = base_config(&ws, "full");
    full.iterations = 3;
    run_self_training(&full).unwrap();

    // interrupted: run two iterations, then ask for three; the run resumes
    // from the iter_0002 checkpoint
    let mut twostep = base_config(&ws, "twostep");
    twostep.iterations = 2;
    run_self_training(&twostep).unwrap();
    let mut resumed = base_config(&ws, "twostep");
    resumed.iterations = 3;
    let out = run_self_training(&resumed).unwrap();
    assert_eq!(out.metrics.len(), 3);

    for file in [
        "iter_0003/treebank.mrg",
        "iter_0003/treebank.mrg.prov.jsonl",
        "iter_0003/metrics.json",
        "metrics.jsonl",
        "model.json",
        "pseudo_treebank.mrg",
    ] {
        let a = fs::read(ws.path("full").join(file)).unwrap();
        let b = fs::read(ws.path("twostep").join(file)).unwrap();
        assert_eq!(a, b, "{file} differs between full and resumed runs");
    }
}

fn write_pool(ws: &Workspace, n: usize, seed: u64) -> PathBuf {
    let grammar = target_grammar();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = HashSet::new();
    let mut lines = Vec::new();
    while lines.len() < n {
        if let Ok(tokens) = grammar.sample_sentence(&mut rng) {
            if tokens.len() <= 30 {
                let line = tokens.join(" ");
                if seen.insert(line.clone()) {
                    lines.push(line);
                }
            }
        }
    }
    let path = ws.path("pool.txt");
    fs::write(&path, lines.join("\n") + "\n").unwrap();
    path
}

#[test]
fn vanilla_run_removes_selected_sentences_from_the_pool() {
    let ws = Workspace::new();
    let source = ws.write_source(60, 13);
    let pool_path = write_pool(&ws, 120, 17);
    let mut cfg = RunConfig {
        mode: Mode::Vanilla,
        iterations: 2,
        seed: 3,
        source_treebank: source,
        vanilla_pool: Some(pool_path),
        pool_size: 100,
        checkpoint_dir: ws.path("vrun"),
        selection: SelectionConfig {
            criterion: Criterion::Conf,
            top_k: 8,
            grsconf_pool_factor: 2.0,
        },
        ..Default::default()
    };
    cfg.generation.max_len = 40;
    let out = run_self_training(&cfg).unwrap();
    assert_eq!(out.pseudo_treebank.len(), 16);

    let pool_at = |iter: &str| -> Vec<String> {
        fs::read_to_string(ws.path("vrun").join(iter).join("pool.txt"))
            .unwrap()
            .lines()
            .map(|l| l.to_string())
            .collect()
    };
    let initial = pool_at("iter_0000");
    let after_1 = pool_at("iter_0001");
    let after_2 = pool_at("iter_0002");
    assert_eq!(initial.len(), 100);
    assert_eq!(after_1.len(), 92);
    assert_eq!(after_2.len(), 84);

    // the selected yields are exactly the sentences that left the pool
    let after_1_set: HashSet<&String> = after_1.iter().collect();
    let after_2_set: HashSet<&String> = after_2.iter().collect();
    for (tree, prov) in out.pseudo_treebank.iter() {
        let sentence = tree.tokens().join(" ");
        match prov {
            Provenance::Pseudo { iteration: 1 } => {
                assert!(!after_1_set.contains(&sentence));
                assert!(!after_2_set.contains(&sentence));
            }
            Provenance::Pseudo { iteration: 2 } => {
                assert!(after_1_set.contains(&sentence));
                assert!(!after_2_set.contains(&sentence));
            }
            other => panic!("unexpected provenance {other:?}"),
        }
    }
}

#[test]
fn eval_treebank_produces_per_iteration_f1() {
    let ws = Workspace::new();
    let mut cfg = base_config(&ws, "eval_run");
    let eval_bank = sample_bank(&target_grammar(), 30, 23);
    let eval_path = ws.path("eval.mrg");
    save_treebank(&eval_bank, &eval_path).unwrap();
    cfg.eval_treebank = Some(eval_path);
    cfg.iterations = 1;
    let out = run_self_training(&cfg).unwrap();
    let f1 = out.metrics[0].f1.expect("per-iteration f1 recorded");
    assert!((0.0..=100.0).contains(&f1));
    assert!(out.final_f1.is_some());
}

#[test]
fn domain_distance_identity_and_disjoint_cases() {
    let bank = sample_bank(&source_grammar(), 40, 31);
    let same = measure_domain_distance(&bank, &DomainReference::Trees(bank.clone())).unwrap();
    assert_eq!(same, 0.0);

    let disjoint = ToyGrammar::parse_text("Z -> ZA ZB\nZA -> \"qq\"\nZB -> \"ww\"").unwrap();
    let other = sample_bank(&disjoint, 10, 5);
    let far = measure_domain_distance(&bank, &DomainReference::Trees(other)).unwrap();
    assert!((far - 1.0).abs() < 1e-12);

    let sents = DomainReference::Sentences(vec!["qq ww".to_string()]);
    let token_far = measure_domain_distance(&bank, &sents).unwrap();
    assert!((token_far - 1.0).abs() < 1e-12);
}

#[test]
fn report_loader_reads_back_what_the_run_wrote() {
    let ws = Workspace::new();
    let cfg = base_config(&ws, "report_run");
    let out = run_self_training(&cfg).unwrap();
    let loaded = load_run_metrics(Path::new(&out.run_dir)).unwrap();
    assert_eq!(loaded, out.metrics);
}
