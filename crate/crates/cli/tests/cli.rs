use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

/// The binary with no inherited `GLOSSFORGE_*` overrides.
fn glossforge(args: &[&str]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_glossforge"));
    for (k, _) in std::env::vars() {
        if k.starts_with("GLOSSFORGE_") {
            cmd.env_remove(k);
        }
    }
    cmd.arg("--quiet").args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("glossforge.conf");
    fs::write(&path, body).unwrap();
    path.display().to_string()
}

fn stderr_json(out: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().last().unwrap_or_default();
    serde_json::from_str(line).unwrap_or_else(|e| panic!("{e}: {text}"))
}

#[test]
fn split_is_reproducible_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let input = fixture("corpus_1000.jsonl");
    let mut outputs = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        let res = glossforge(&["split", "--input", input.to_str().unwrap(), "--out-dir", out.to_str().unwrap()]);
        assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
        outputs.push(out);
    }
    for name in ["train.jsonl", "dev.jsonl", "test.jsonl", "split.tsv"] {
        let a = fs::read(outputs[0].join(name)).unwrap();
        let b = fs::read(outputs[1].join(name)).unwrap();
        assert_eq!(a, b, "{name}");
    }
    let lines = |name: &str| fs::read_to_string(outputs[0].join(name)).unwrap().lines().count();
    assert_eq!((lines("train.jsonl"), lines("dev.jsonl"), lines("test.jsonl")), (800, 100, 100));
}

#[test]
fn kappa_report_prints_agreement_rows() {
    let journal = fixture("table1_journal.jsonl");
    let out = glossforge(&["kappa-report", "--journal", journal.to_str().unwrap()]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("| Validation rate (%) | 74.7 | 76.0 | 75.3 |"), "{text}");
    assert!(text.contains("| Understandability agreement | 0.7489 | Substantial |"), "{text}");
    assert!(text.contains("| Quality agreement (unweighted) | 0.3496 | Fair |"), "{text}");
}

#[test]
fn missing_config_key_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "backend.mode = mock\n");
    let out = glossforge(&["--config", &config, "split"]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr_json(&out);
    assert_eq!(err["error"], "config");
    assert!(err["message"].as_str().unwrap().contains("corpus.manual"), "{err}");
}

#[test]
fn malformed_corpus_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.jsonl");
    fs::write(&bad, "{\"id\": \"p1\", \"sentence\": \"আমি\"\n").unwrap();
    let out = glossforge(&["split", "--input", bad.to_str().unwrap(), "--out-dir", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4));
    assert_eq!(stderr_json(&out)["error"], "data");
}

#[test]
fn unreachable_backend_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "backend.mode = http\nbackend.embed_url = http://127.0.0.1:9/embed\nbackend.timeout_secs = 2\n",
    );
    let input = fixture("corpus_100.jsonl");
    let index = dir.path().join("index.gfi");
    let out = glossforge(&[
        "--config",
        &config,
        "index-build",
        "--input",
        input.to_str().unwrap(),
        "--output",
        index.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(stderr_json(&out)["error"], "backend");
    assert!(!index.exists());
}

#[test]
fn eval_on_identical_files_scores_100() {
    let r = fixture("eval_ref.txt");
    let out = glossforge(&["eval", "--hyp", r.to_str().unwrap(), "--ref", r.to_str().unwrap()]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("| system | 100.00 | 100.00 | 100.00 | 100.00 |"), "{text}");
}

#[test]
fn eval_fixture_table() {
    let out = glossforge(&[
        "eval",
        "--hyp",
        fixture("eval_hyp.txt").to_str().unwrap(),
        "--ref",
        fixture("eval_ref.txt").to_str().unwrap(),
        "--name",
        "perturbed",
    ]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("| perturbed | 93.02 | 81.48 | 72.30 | 64.02 |"), "{text}");
}
