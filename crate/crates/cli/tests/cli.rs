use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_report-kg")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn generate(dir: &Path, n: usize) -> std::path::PathBuf {
    let path = dir.join("corpus.tsv");
    let out = run(&["generate", "--n-reports", &n.to_string(), "--seed", "3", "--out", s(&path)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    path
}

#[test]
fn help_and_version_succeed() {
    let out = run(&["--help"]);
    assert_eq!(code(&out), 0);
    assert!(String::from_utf8_lossy(&out.stdout).contains("Usage"));
    assert_eq!(code(&run(&["train", "--help"])), 0);
    assert_eq!(code(&run(&["--version"])), 0);
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&run(&["frobnicate"])), 1);
    assert_eq!(code(&run(&[])), 1);
    assert_eq!(code(&run(&["train", "--corpus"])), 1);
    assert_eq!(code(&run(&["classify", "--checkpoint", "x.ckpt"])), 1);
}

#[test]
fn missing_ontology_exits_two_and_names_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = generate(dir.path(), 20);
    let missing = dir.path().join("no-such-ontology.tsv");
    let out = run(&["train", "--corpus", s(&corpus), "--ontology", s(&missing), "--out", s(&dir.path().join("run"))]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains(s(&missing)), "{}", stderr(&out));
}

#[test]
fn bad_configuration_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = generate(dir.path(), 20);
    let out = run(&["train", "--corpus", s(&corpus), "--set", "no_such_key=1", "--out", s(&dir.path().join("run"))]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("no_such_key"));
}

#[test]
fn diverging_training_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = generate(dir.path(), 60);
    let out = run(&[
        "train", "--corpus", s(&corpus), "--set", "lr=1e200", "--set", "hidden=8", "--set", "max_epochs=2",
        "--out", s(&dir.path().join("run")),
    ]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));
    assert!(stderr(&out).contains("non-finite"));
}

#[test]
fn train_evaluate_classify_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = generate(dir.path(), 120);
    let run_dir = dir.path().join("run");
    let out = run(&[
        "train", "--corpus", s(&corpus), "--set", "hidden=16", "--set", "max_epochs=2", "--seed", "1",
        "--out", s(&run_dir),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    for f in ["config.txt", "metrics.tsv", "timing.tsv", "model.ckpt", "eval.tsv", "summary.tsv"] {
        assert!(run_dir.join(f).exists(), "{f} missing");
    }
    let ckpt = run_dir.join("model.ckpt");

    let eval = run(&["evaluate", "--checkpoint", s(&ckpt), "--corpus", s(&corpus), "--split", "test"]);
    assert_eq!(code(&eval), 0, "{}", stderr(&eval));
    assert!(String::from_utf8_lossy(&eval.stdout).contains("Average AUC"));

    let cls = run(&["classify", "--checkpoint", s(&ckpt), "--text", "The heart is enlarged. No pleural effusion."]);
    assert_eq!(code(&cls), 0, "{}", stderr(&cls));
    let rows: Vec<String> = String::from_utf8_lossy(&cls.stdout).lines().map(str::to_owned).collect();
    assert_eq!(rows.len(), 14);
    for row in &rows {
        let p: f64 = row.split('\t').nth(1).unwrap().parse().unwrap();
        assert!((0.0..=1.0).contains(&p));
    }
    let es = run(&["classify", "--checkpoint", s(&ckpt), "--lang", "es", "--text", "El corazón está aumentado. No hay derrame pleural."]);
    assert_eq!(code(&es), 0, "{}", stderr(&es));

    let plot = run(&["plot-data", s(&run_dir)]);
    assert_eq!(code(&plot), 0, "{}", stderr(&plot));
    assert_eq!(String::from_utf8_lossy(&plot.stdout).lines().count(), 2);
}

#[test]
fn graph_exports() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = generate(dir.path(), 10);
    let graphs = dir.path().join("graphs");
    let out = run(&["build-graph", "--corpus", s(&corpus), "--out", s(&graphs)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(graphs.join("index.tsv").exists());
    assert_eq!(std::fs::read_dir(&graphs).unwrap().count(), 21);

    let dot = run(&["export-graph", "--text", "The heart is enlarged.", "--format", "dot"]);
    assert_eq!(code(&dot), 0, "{}", stderr(&dot));
    assert!(String::from_utf8_lossy(&dot.stdout).starts_with("digraph"));
    let json = run(&["export-graph", "--text", "The heart is enlarged.", "--format", "json", "--ablation", "no_g"]);
    assert_eq!(code(&json), 0, "{}", stderr(&json));
    assert!(!String::from_utf8_lossy(&json.stdout).contains("Global"));
    assert_eq!(code(&run(&["export-graph", "--text", "x", "--format", "svg"])), 1);
}
