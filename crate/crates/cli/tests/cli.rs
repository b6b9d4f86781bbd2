//! Black-box tests of the binary: exit codes, artifact layout, and
//! determinism of mock-backend runs.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use bootparse::bracketed::{save_treebank, Treebank};
use bootparse::fixtures::{source_grammar, SOURCE_GRAMMAR, TARGET_GRAMMAR};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_bootparse"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn assert_exit(output: &Output, code: i32) {
    assert_eq!(
        output.status.code(),
        Some(code),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
}

struct Setup {
    #[allow(dead_code)]
    dir: tempfile::TempDir,
    root: PathBuf,
    source: PathBuf,
}

fn setup() -> Setup {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_path_buf();
    let grammar = source_grammar();
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let mut trees = Vec::new();
    while trees.len() < 50 {
        match grammar.sample_tree(&mut rng) {
            Ok(t) if t.len() <= 30 => trees.push(t),
            _ => continue,
        }
    }
    let source = root.join("source.mrg");
    save_treebank(&Treebank::from_trees(trees), &source).unwrap();
    fs::write(root.join("source_grammar.txt"), SOURCE_GRAMMAR).unwrap();
    fs::write(root.join("target_grammar.txt"), TARGET_GRAMMAR).unwrap();
    Setup { dir, root, source }
}

fn write_config(setup: &Setup, out_dir: &Path, seed: u64) -> PathBuf {
    let text = format!(
        r#"
mode = "llm"
iterations = 2
seed = {seed}
source_treebank = "{source}"
checkpoint_dir = "{out}"

[selection]
criterion = "grsconf"
top_k = 8

[generation]
corpus_size = 50
max_len = 30

[backend]
kind = "mock"
grammar = "{grammar}"
"#,
        source = setup.source.display(),
        out = out_dir.display(),
        grammar = setup.root.join("target_grammar.txt").display(),
    );
    let path = setup.root.join(format!("cfg_{seed}_{}.toml", out_dir.file_name().unwrap().to_string_lossy()));
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn train_parse_score_round_trip() {
    let s = setup();
    let model = s.root.join("model.json");
    let output = run(&[
        "train",
        "--treebank",
        s.source.to_str().unwrap(),
        "--out",
        model.to_str().unwrap(),
    ]);
    assert_exit(&output, 0);

    let sents = s.root.join("sents.txt");
    fs::write(&sents, "the dog sees a cat\nit sleeps\n").unwrap();
    let parsed = s.root.join("parsed.mrg");
    let output = run(&[
        "parse",
        "--model",
        model.to_str().unwrap(),
        "--input",
        sents.to_str().unwrap(),
        "--out",
        parsed.to_str().unwrap(),
    ]);
    assert_exit(&output, 0);

    // scoring parses against themselves gives a perfect score
    let output = run(&[
        "score",
        "--gold",
        parsed.to_str().unwrap(),
        "--pred",
        parsed.to_str().unwrap(),
        "--json",
    ]);
    assert_exit(&output, 0);
    let score: serde_json::Value =
        serde_json::from_slice(&output.stdout).expect("score emits json");
    assert_eq!(score["f1"], 100.0);
}

#[test]
fn self_train_run_is_deterministic_per_seed() {
    let s = setup();
    let dir_a = s.root.join("run_a");
    let dir_b = s.root.join("run_b");
    let cfg_a = write_config(&s, &dir_a, 7);
    let cfg_b = write_config(&s, &dir_b, 7);
    assert_exit(&run(&["self-train", "--config", cfg_a.to_str().unwrap()]), 0);
    assert_exit(&run(&["self-train", "--config", cfg_b.to_str().unwrap()]), 0);

    for file in ["metrics.jsonl", "model.json", "pseudo_treebank.mrg", "summary.json"] {
        let a = fs::read(dir_a.join(file)).unwrap();
        let b = fs::read(dir_b.join(file)).unwrap();
        assert!(!a.is_empty());
        assert_eq!(a, b, "{file} differs across identical runs");
    }

    // report over the run is idempotent
    let r1 = run(&["report", "--run-dir", dir_a.to_str().unwrap()]);
    assert_exit(&r1, 0);
    let csv1 = fs::read(dir_a.join("report.csv")).unwrap();
    let r2 = run(&["report", "--run-dir", dir_a.to_str().unwrap()]);
    assert_exit(&r2, 0);
    let csv2 = fs::read(dir_a.join("report.csv")).unwrap();
    assert_eq!(csv1, csv2);
    assert_eq!(r1.stdout, r2.stdout);
}

#[test]
fn cli_overrides_take_precedence_over_config() {
    let s = setup();
    let dir = s.root.join("run_override");
    let cfg = write_config(&s, &dir, 7);
    let output = run(&[
        "self-train",
        "--config",
        cfg.to_str().unwrap(),
        "--iterations",
        "1",
        "--top-k",
        "3",
    ]);
    assert_exit(&output, 0);
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["iterations"], 1);
    assert_eq!(summary["pseudo_size"], 3);
}

#[test]
fn missing_source_treebank_exits_2() {
    let s = setup();
    let cfg = s.root.join("broken.toml");
    fs::write(
        &cfg,
        "mode = \"llm\"\nsource_treebank = \"/nonexistent/nope.mrg\"\n[backend]\nkind = \"mock\"\ngrammar = \"/also/missing.txt\"\n",
    )
    .unwrap();
    let output = run(&["self-train", "--config", cfg.to_str().unwrap()]);
    assert_exit(&output, 2);
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("source_treebank"), "stderr: {stderr}");
}

#[test]
fn zero_iterations_is_a_config_error() {
    let s = setup();
    let dir = s.root.join("run_zero");
    let cfg = write_config(&s, &dir, 7);
    let output = run(&[
        "self-train",
        "--config",
        cfg.to_str().unwrap(),
        "--iterations",
        "0",
    ]);
    assert_exit(&output, 2);
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("iterations"), "stderr: {stderr}");
}

#[test]
fn unknown_criterion_exits_2() {
    let s = setup();
    let dir = s.root.join("run_crit");
    let cfg = write_config(&s, &dir, 7);
    let output = run(&[
        "self-train",
        "--config",
        cfg.to_str().unwrap(),
        "--criterion",
        "best",
    ]);
    assert_exit(&output, 2);
}

#[test]
fn validate_accepts_good_and_rejects_bad() {
    let s = setup();
    let output = run(&["validate", "--treebank", s.source.to_str().unwrap()]);
    assert_exit(&output, 0);
    assert!(String::from_utf8_lossy(&output.stdout).contains("OK"));

    let bad = s.root.join("bad.mrg");
    fs::write(&bad, "(S (NP (DT the)\n").unwrap();
    let output = run(&["validate", "--treebank", bad.to_str().unwrap()]);
    assert_exit(&output, 1);
    assert!(String::from_utf8_lossy(&output.stderr).contains("unbalanced"));
}

#[test]
fn empty_run_dir_report_errors_with_expectations() {
    let s = setup();
    let empty = s.root.join("empty_dir");
    fs::create_dir_all(&empty).unwrap();
    let output = run(&["report", "--run-dir", empty.to_str().unwrap()]);
    assert_exit(&output, 1);
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("metrics.jsonl"), "stderr: {stderr}");
}

#[test]
fn generate_select_pipeline_via_files() {
    let s = setup();
    let corpus = s.root.join("corpus.jsonl");
    let output = run(&[
        "generate",
        "--rules-from",
        s.source.to_str().unwrap(),
        "--count",
        "30",
        "--seed",
        "5",
        "--backend",
        "mock",
        "--mock-grammar",
        s.root.join("target_grammar.txt").to_str().unwrap(),
        "--out",
        corpus.to_str().unwrap(),
        "--max-len",
        "30",
    ]);
    assert_exit(&output, 0);
    let lines: Vec<serde_json::Value> = fs::read_to_string(&corpus)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert!(!lines.is_empty());
    for line in &lines {
        let n = line["text"].as_str().unwrap().split_whitespace().count();
        assert!((3..=30).contains(&n));
    }

    // train, parse the generated corpus, select
    let model = s.root.join("model.json");
    assert_exit(
        &run(&[
            "train",
            "--treebank",
            s.source.to_str().unwrap(),
            "--out",
            model.to_str().unwrap(),
        ]),
        0,
    );
    let sents = s.root.join("gen_sents.txt");
    let text: String = lines
        .iter()
        .map(|l| l["text"].as_str().unwrap())
        .collect::<Vec<_>>()
        .join("\n");
    fs::write(&sents, text + "\n").unwrap();
    let parsed = s.root.join("gen_parsed.mrg");
    let scores = s.root.join("gen_scores.jsonl");
    assert_exit(
        &run(&[
            "parse",
            "--model",
            model.to_str().unwrap(),
            "--input",
            sents.to_str().unwrap(),
            "--out",
            parsed.to_str().unwrap(),
            "--scores",
            scores.to_str().unwrap(),
        ]),
        0,
    );
    let selected = s.root.join("selected.mrg");
    let report = s.root.join("sel.jsonl");
    assert_exit(
        &run(&[
            "select",
            "--candidates",
            scores.to_str().unwrap(),
            "--source",
            s.source.to_str().unwrap(),
            "--criterion",
            "conf",
            "--top-k",
            "5",
            "--out",
            selected.to_str().unwrap(),
            "--report",
            report.to_str().unwrap(),
        ]),
        0,
    );
    let selected_trees = fs::read_to_string(&selected).unwrap();
    assert_eq!(selected_trees.lines().count(), 5);
    let report_lines = fs::read_to_string(&report).unwrap();
    let selected_flags = report_lines
        .lines()
        .filter(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["selected"] == true)
        .count();
    assert_eq!(selected_flags, 5);
}
