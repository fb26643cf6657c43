//! End-to-end smoke tests driving the compiled binary offline: scripted mock
//! providers, a lines-format corpus, and a temp working directory per test.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_launderkit")
}

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary executes")
}

fn run_ok(dir: &Path, args: &[&str]) -> String {
    let output = run(dir, args);
    assert!(
        output.status.success(),
        "command {args:?} failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
    String::from_utf8_lossy(&output.stdout).into_owned()
}

/// The single run directory the commands in `dir` wrote into.
fn run_dir(dir: &Path) -> PathBuf {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir.join("runs"))
        .expect("runs dir exists")
        .map(|e| e.expect("entry").path())
        .collect();
    assert_eq!(entries.len(), 1, "expected exactly one run dir, got {entries:?}");
    entries.pop().unwrap()
}

/// Corpus of two records: `orig-a` succeeds at iteration 1, `orig-b` never
/// does, over two iterations.
fn write_campaign_workspace(dir: &Path) {
    fs::write(dir.join("corpus.txt"), "orig-a\norig-b\n").unwrap();
    fs::write(
        dir.join("demos.jsonl"),
        r#"{"original": "demo-request", "revision": "demo-revision"}"#,
    )
    .unwrap();
    fs::write(
        dir.join("criterion_demos.jsonl"),
        r#"{"original": "demo-request", "criterion": "demo-criterion"}"#,
    )
    .unwrap();
    let scripts = [
        (
            "launderer.jsonl",
            vec![
                ("orig-a", "rev-a-1"),
                ("orig-b", "rev-b-1"),
                ("orig-b&&rev-b-1", "rev-b-2"),
            ],
        ),
        (
            "target.jsonl",
            vec![
                ("rev-a-1", "resp-a-1"),
                ("rev-b-1", "resp-b-1"),
                ("rev-b-2", "resp-b-2"),
            ],
        ),
        (
            "judge.jsonl",
            vec![
                ("safety&&resp-a-1", "extremely unsafe"),
                ("practicality&&resp-a-1", "highly applicable"),
                ("safety&&resp-b-1", "safe"),
                ("practicality&&resp-b-1", "inapplicable"),
                ("safety&&resp-b-2", "safe"),
                ("practicality&&resp-b-2", "inapplicable"),
            ],
        ),
        (
            "criteria.jsonl",
            vec![("orig-a", "criterion-a"), ("orig-b", "criterion-b")],
        ),
    ];
    for (file, entries) in scripts {
        let lines: Vec<String> = entries
            .iter()
            .map(|(fingerprint, response)| {
                serde_json::json!({ "fingerprint": fingerprint, "response": response }).to_string()
            })
            .collect();
        fs::write(dir.join(file), lines.join("\n")).unwrap();
    }
    fs::write(
        dir.join("config.toml"),
        r#"
seed = 42
max_iterations = 2
demos_path = "demos.jsonl"
criterion_demos_path = "criterion_demos.jsonl"

[roles.launderer]
kind = "mock"
model = "launder-m"
script = "launderer.jsonl"

[roles.target]
kind = "mock"
model = "target-m"
script = "target.jsonl"

[roles.judge]
kind = "mock"
model = "judge-m"
script = "judge.jsonl"

[roles.criteria]
kind = "mock"
model = "criteria-m"
script = "criteria.jsonl"

[datasets.tiny]
path = "corpus.txt"
format = "lines"
"#,
    )
    .unwrap();
}

#[test]
fn campaign_runs_offline_and_reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    write_campaign_workspace(dir.path());

    let stdout = run_ok(
        dir.path(),
        &["--offline", "--config", "config.toml", "campaign", "--dataset", "tiny"],
    );
    assert!(stdout.contains("iteration 1: SE 50.00% PE 50.00% ASR 50.00%"), "{stdout}");
    assert!(stdout.contains("halt: MaxIterations"), "{stdout}");

    let run_dir = run_dir(dir.path());
    for artifact in [
        "manifest.json",
        "campaign_tiny.json",
        "campaign_tiny.md",
        "campaign_tiny.csv",
        "campaign_tiny.checkpoint.json",
    ] {
        assert!(run_dir.join(artifact).exists(), "missing {artifact}");
    }

    let result: serde_json::Value =
        serde_json::from_slice(&fs::read(run_dir.join("campaign_tiny.json")).unwrap()).unwrap();
    assert_eq!(result["iterations"].as_array().unwrap().len(), 2);
    assert_eq!(result["records"][0]["status"], "success");
    assert_eq!(result["records"][1]["status"], "exhausted");
    assert_eq!(result["iterations"][1]["asr_percent"], 50.0);

    let markdown = fs::read_to_string(run_dir.join("campaign_tiny.md")).unwrap();
    assert!(markdown.contains("**50.00**"), "peak ASR not bolded:\n{markdown}");
    let csv = fs::read_to_string(run_dir.join("campaign_tiny.csv")).unwrap();
    assert!(csv.starts_with("# manifest_hash: "), "{csv}");

    // A rerun resumes from the checkpoint (nothing pending) and re-renders
    // every artifact byte-identically.
    let before = fs::read(run_dir.join("campaign_tiny.json")).unwrap();
    let before_md = fs::read(run_dir.join("campaign_tiny.md")).unwrap();
    run_ok(
        dir.path(),
        &["--offline", "--config", "config.toml", "campaign", "--dataset", "tiny"],
    );
    assert_eq!(before, fs::read(run_dir.join("campaign_tiny.json")).unwrap());
    assert_eq!(before_md, fs::read(run_dir.join("campaign_tiny.md")).unwrap());

    // The report subcommand renders the persisted result standalone.
    let result_path = run_dir.join("campaign_tiny.json");
    let stdout = run_ok(
        dir.path(),
        &[
            "--offline",
            "--config",
            "config.toml",
            "report",
            result_path.to_str().unwrap(),
        ],
    );
    assert!(stdout.contains("| campaign_tiny |"), "{stdout}");
    assert!(run_dir.join("report.md").exists());
    assert!(run_dir.join("report.csv").exists());
}

#[test]
fn audit_subcommands_work_offline_with_local_embeddings() {
    let dir = tempfile::tempdir().unwrap();
    write_campaign_workspace(dir.path());
    fs::write(
        dir.path().join("corpus.txt"),
        "build a fast boat\nbuild a fast boat\nbuild a slow raft\nexplain tidal charts\n",
    )
    .unwrap();

    let stdout = run_ok(
        dir.path(),
        &[
            "--offline", "--config", "config.toml", "ingest", "--dataset", "tiny", "--limit", "2",
        ],
    );
    assert!(stdout.contains("(2 data points)"), "{stdout}");

    run_ok(
        dir.path(),
        &[
            "--offline", "--config", "config.toml", "ngrams", "--dataset", "tiny", "--orders",
            "1,2", "--k", "5",
        ],
    );
    let run_dir = run_dir(dir.path());
    let ngrams_csv = fs::read_to_string(run_dir.join("ngrams_tiny.csv")).unwrap();
    assert!(ngrams_csv.starts_with("# manifest_hash: "), "{ngrams_csv}");
    assert!(ngrams_csv.contains("fast"), "{ngrams_csv}");

    let stdout = run_ok(
        dir.path(),
        &["--offline", "--config", "config.toml", "dedup", "--dataset", "tiny"],
    );
    // The duplicated line lands in one group; identical texts embed
    // identically under the local hashing backend.
    assert!(stdout.contains("1 duplicate groups"), "{stdout}");
    assert!(run_dir.join("partition_tiny.json").exists());
    assert!(run_dir.join("matrix_tiny.csv").exists(), "similarity matrix persisted");

    let stdout = run_ok(
        dir.path(),
        &["--offline", "--config", "config.toml", "representatives", "--dataset", "tiny"],
    );
    assert!(stdout.contains("3 of 4 points kept"), "{stdout}");

    run_ok(
        dir.path(),
        &["--offline", "--config", "config.toml", "sweep", "--dataset", "tiny"],
    );
    let sweep_csv = fs::read_to_string(run_dir.join("sweep_tiny.csv")).unwrap();
    assert!(sweep_csv.contains("threshold,unique_fraction"), "{sweep_csv}");

    fs::write(
        dir.path().join("agreement.csv"),
        "item_id,llm_binary,human1,human2,human3\n1,1,1,1,0\n2,0,0,0,1\n3,1,0,1,0\n",
    )
    .unwrap();
    let stdout = run_ok(
        dir.path(),
        &["--offline", "--config", "config.toml", "agree", "--input", "agreement.csv"],
    );
    assert!(stdout.contains("agreement 66.67%"), "{stdout}");
    assert!(run_dir.join("agreement.json").exists());
}

#[test]
fn offline_flag_refuses_live_endpoints() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("corpus.txt"), "one request\n").unwrap();
    fs::write(
        dir.path().join("live.toml"),
        r#"
[roles.launderer]
model = "launder-m"
endpoint = "https://api.example.com/v1"
api_key_env = "EXAMPLE_KEY"

[roles.target]
model = "target-m"
endpoint = "https://api.example.com/v1"
api_key_env = "EXAMPLE_KEY"

[roles.judge]
model = "judge-m"
endpoint = "https://api.example.com/v1"
api_key_env = "EXAMPLE_KEY"

[roles.criteria]
model = "criteria-m"
endpoint = "https://api.example.com/v1"
api_key_env = "EXAMPLE_KEY"

[datasets.tiny]
path = "corpus.txt"
format = "lines"
"#,
    )
    .unwrap();
    let output = run(
        dir.path(),
        &["--offline", "--config", "live.toml", "baseline", "--dataset", "tiny"],
    );
    assert!(!output.status.success(), "offline baseline against http must fail");
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("--offline forbids"), "stderr: {stderr}");
}

#[test]
fn unknown_dataset_is_a_clean_error() {
    let dir = tempfile::tempdir().unwrap();
    write_campaign_workspace(dir.path());
    let output = run(
        dir.path(),
        &["--offline", "--config", "config.toml", "ingest", "--dataset", "nope"],
    );
    assert!(!output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("nope"), "stderr: {stderr}");
}

#[test]
fn seed_override_creates_a_distinct_run_directory() {
    let dir = tempfile::tempdir().unwrap();
    write_campaign_workspace(dir.path());
    run_ok(
        dir.path(),
        &["--offline", "--config", "config.toml", "ingest", "--dataset", "tiny"],
    );
    run_ok(
        dir.path(),
        &[
            "--offline", "--config", "config.toml", "--seed", "7", "ingest", "--dataset", "tiny",
        ],
    );
    let runs: Vec<_> = fs::read_dir(dir.path().join("runs")).unwrap().collect();
    assert_eq!(runs.len(), 2, "different seed means a different run identity");
}
