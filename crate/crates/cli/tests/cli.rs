use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_chronofaith");

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

const SMALL: &str = r#"
name = "tiny"
seeds = [0]
methods = ["scaled_attention", "input_x_grad"]
max_eval_examples = 6

[corpus.synthetic]
vocab_size = 40
n_examples = 240
n_classes = 2
swap_fraction = 0.5
drift_date = "2014-01-01"
seed = 4

[model]
epochs = 1
embedding_dim = 8
hidden_dim = 8
max_length = 16

[hardkuma]
enabled = false

[spectra.model]
epochs = 1
embedding_dim = 8
hidden_dim = 8
max_length = 16
"#;

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("c.toml");
    std::fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn init_writes_a_loadable_config() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("e.toml");
    let out = run(&["init", "--path", path.to_str().unwrap(), "--examples", "300"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let raw = std::fs::read_to_string(&path).unwrap();
    assert!(raw.contains("n_examples = 300"));
}

#[test]
fn run_succeeds_and_writes_tables() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out_dir = dir.path().join("out");
    let out = run(&["run", "--config", &cfg, "--out", out_dir.to_str().unwrap(), "--ratios", "0.1,0.5"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["results.csv", "performance.csv", "agreement.csv", "token_frequency.csv", "manifest.json"] {
        assert!(out_dir.join(f).exists(), "{f}");
    }
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("config_hash="));
}

#[test]
fn single_stage_runs_only_its_prerequisites() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out_dir = dir.path().join("out");
    let out = run(&["train", "--config", &cfg, "--out", out_dir.to_str().unwrap(), "--seed", "3"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out_dir.join("models/fulltext_seed3.json").exists());
    assert!(!out_dir.join("results.csv").exists());
}

#[test]
fn validation_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = run(&["attribute", "--config", &cfg, "--method", "not_a_method"]);
    assert_eq!(out.status.code(), Some(1));
    let bad = write_config(dir.path(), "[corpus]\npath = \"missing.jsonl\"\n");
    assert_eq!(run(&["split", "--config", &bad]).status.code(), Some(1));
}

#[test]
fn stage_failures_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("broken.jsonl"), "{not json\n").unwrap();
    let cfg = write_config(
        dir.path(),
        &format!("output_dir = \"{}\"\n\n[corpus]\npath = \"broken.jsonl\"\n", dir.path().join("o").display()),
    );
    let out = run(&["split", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest = std::fs::read_to_string(dir.path().join("o/manifest.json")).unwrap();
    assert!(manifest.contains("\"failed\""));
}
