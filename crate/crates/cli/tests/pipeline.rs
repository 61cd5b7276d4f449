use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn drugvec(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_drugvec")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = drugvec(args);
    assert!(
        out.status.success(),
        "drugvec {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn first_stderr_line(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).lines().next().unwrap_or_default().to_string()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Small synthetic dataset written by `synth`; returns its pipeline.toml.
fn small_dataset(dir: &Path) -> std::path::PathBuf {
    let cfg = dir.join("synth.toml");
    fs::write(
        &cfg,
        "seed = 5\n[synth]\nn_drugs = 24\nn_diseases = 16\ndim = 8\nn_blocks = 2\n",
    )
    .unwrap();
    let data = dir.join("data");
    ok(&["synth", "--config", s(&cfg), "--out", s(&data)]);
    let pipeline = data.join("pipeline.toml");
    // fewer folds and a smaller model keep these runs short
    let mut text = fs::read_to_string(&pipeline).unwrap();
    text.push_str("\n[imc]\nrank = 6\n\n[eval]\nfolds = 4\ncase_study_top = 5\n");
    fs::write(&pipeline, text).unwrap();
    pipeline
}

#[test]
fn synth_then_validate_drops_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_dataset(dir.path());
    let stdout = ok(&["validate", "--config", s(&cfg)]);
    assert!(stdout.contains("drugs 24 -> 24, diseases 16 -> 16, dropped 0"), "{stdout}");
    let report: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("data/run/alignment_report.json")).unwrap()).unwrap();
    assert_eq!(report["dropped"].as_array().unwrap().len(), 0);
    assert_eq!(report["partial"].as_array().unwrap().len(), 0);
}

#[test]
fn default_synthetic_cv_meets_auc() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    ok(&["synth", "--seed", "42", "--out", s(&data)]);
    let cfg = data.join("pipeline.toml");
    ok(&["cv", "--config", s(&cfg)]);
    let report: serde_json::Value = serde_json::from_slice(&fs::read(data.join("run/report.json")).unwrap()).unwrap();
    assert!(report["mean_auc"].as_f64().unwrap() >= 0.90, "{}", report["mean_auc"]);
    let roc = fs::read_to_string(data.join("run/roc.csv")).unwrap();
    assert!(roc.starts_with("fpr,tpr\n0,0\n"));
    assert!(roc.ends_with("1,1\n"));
    let topk = fs::read_to_string(data.join("run/topk.csv")).unwrap();
    assert!(topk.starts_with("threshold,hits\n1,"));
}

#[test]
fn staged_score_equals_in_process_score() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_dataset(dir.path());
    let staged = dir.path().join("staged");
    for cmd in ["similarity", "refine", "fit", "score"] {
        ok(&[cmd, "--config", s(&cfg), "--out", s(&staged)]);
    }
    assert!(staged.join("model.bin").is_file());
    assert!(staged.join("refined/drug.vec").is_file());
    let fresh = dir.path().join("fresh");
    ok(&["score", "--config", s(&cfg), "--out", s(&fresh)]);
    let a = fs::read(staged.join("scores.csv")).unwrap();
    assert_eq!(a, fs::read(fresh.join("scores.csv")).unwrap());
    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with("drug_id,disease_id,score\n"));
    assert_eq!(text.lines().count(), 1 + 24 * 16);
}

#[test]
fn reruns_and_thread_counts_give_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_dataset(dir.path());
    let run = |name: &str, threads: &str| {
        let out = dir.path().join(name);
        ok(&["cv", "--config", s(&cfg), "--out", s(&out), "--threads", threads]);
        ok(&["case-study", "--disease", "disease_003", "--config", s(&cfg), "--out", s(&out), "--threads", threads]);
        ["report.json", "roc.csv", "topk.csv", "case_study.csv"].map(|f| fs::read(out.join(f)).unwrap())
    };
    let a = run("a", "1");
    assert_eq!(a, run("b", "1"));
    assert_eq!(a, run("c", "3"));
    let cs = String::from_utf8(a[3].clone()).unwrap();
    assert!(cs.starts_with("rank,drug_id,score,mean_score\n1,drug_"));
    assert_eq!(cs.lines().count(), 6);
}

#[test]
fn seed_override_changes_synthetic_data() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["synth", "--seed", "1", "--out", s(&dir.path().join("a"))]);
    ok(&["synth", "--seed", "2", "--out", s(&dir.path().join("b"))]);
    ok(&["synth", "--seed", "1", "--out", s(&dir.path().join("c"))]);
    let read = |d: &str| fs::read(dir.path().join(d).join("drug.vec")).unwrap();
    assert_ne!(read("a"), read("b"));
    assert_eq!(read("a"), read("c"));
}

#[test]
fn errors_are_one_machine_readable_line() {
    let dir = tempfile::tempdir().unwrap();

    let out = drugvec(&["validate", "--config", s(&dir.path().join("missing.toml"))]);
    assert!(!out.status.success());
    assert!(first_stderr_line(&out).starts_with("error kind=io msg=\""), "{}", first_stderr_line(&out));

    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "seed = 1\n[imc]\nrnak = 3\n").unwrap();
    let out = drugvec(&["validate", "--config", s(&bad)]);
    assert!(first_stderr_line(&out).starts_with("error kind=config "), "{}", first_stderr_line(&out));

    let noseed = dir.path().join("noseed.toml");
    fs::write(&noseed, "output_dir = \"o\"\n").unwrap();
    let out = drugvec(&["validate", "--config", s(&noseed)]);
    assert!(first_stderr_line(&out).contains("seed"));

    let cfg = small_dataset(dir.path());
    let out = drugvec(&["case-study", "--disease", "nope", "--config", s(&cfg)]);
    assert!(first_stderr_line(&out).starts_with("error kind=unknown "), "{}", first_stderr_line(&out));

    // corrupt a vector row: the parse error names the file line
    let vec = dir.path().join("data/drug.vec");
    let mut lines: Vec<String> = fs::read_to_string(&vec).unwrap().lines().map(String::from).collect();
    lines[3] = "drug_002 1.0 oops".into();
    fs::write(&vec, lines.join("\n") + "\n").unwrap();
    let out = drugvec(&["validate", "--config", s(&cfg)]);
    let line = first_stderr_line(&out);
    assert!(line.starts_with("error kind=parse "), "{line}");
    assert!(line.contains(":4"), "{line}");
    assert_eq!(String::from_utf8_lossy(&out.stderr).lines().count(), 2);
}
