use std::collections::BTreeSet;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use clap::CommandFactory;
use serde_json::Value;
use valuelens::simulation::SimConfig;
use valuelens_cli::commands::calibrate::{
    BuildVcqSettings, PredictSettings, TrainPersonalSettings,
};
use valuelens_cli::commands::corpus::{
    FilterSettings, IngestSettings, PrescoreSettings, SampleSettings,
};
use valuelens_cli::commands::evaluate::EvaluateSettings;
use valuelens_cli::commands::labels::{ConsensusSettings, ExportFinetuneSettings};
use valuelens_cli::commands::serve::ServeSettings;
use valuelens_cli::settings::{keys_of, SECTIONS};
use valuelens_cli::Cli;

const BIN: &str = env!("CARGO_BIN_EXE_valuelens");

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/corpus_200.jsonl")
}

fn run(out: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .arg("--out")
        .arg(out)
        .args(args)
        .env_remove("RUST_LOG")
        .output()
        .expect("binary runs")
}

fn ok(out: &Path, args: &[&str]) -> Value {
    let o = run(out, args);
    assert!(
        o.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    serde_json::from_slice(&o.stdout).expect("json summary")
}

fn err(out: &Path, args: &[&str]) -> (i32, Value) {
    let o = run(out, args);
    let stderr = String::from_utf8_lossy(&o.stderr);
    let last = stderr.lines().last().unwrap_or_default();
    (
        o.status.code().unwrap(),
        serde_json::from_str(last).expect("json error"),
    )
}

#[test]
fn help_lists_subcommands_and_global_flags() {
    let o = Command::new(BIN).arg("--help").output().unwrap();
    assert!(o.status.success());
    let text = String::from_utf8_lossy(&o.stdout);
    for sub in SECTIONS {
        assert!(text.contains(&sub.replace('_', "-")), "help misses {sub}");
    }
    for flag in ["--config", "--out", "--jobs"] {
        assert!(text.contains(flag));
    }
    let o = Command::new(BIN)
        .args(["train-personal", "--help"])
        .output()
        .unwrap();
    let text = String::from_utf8_lossy(&o.stdout);
    for flag in [
        "--n-trees",
        "--min-samples-leaf",
        "--holdout-fraction",
        "--split-seed",
    ] {
        assert!(text.contains(flag), "train-personal help misses {flag}");
    }
}

#[test]
fn every_flag_is_a_config_key_and_back() {
    let cmd = Cli::command();
    let expected: Vec<(&str, BTreeSet<String>)> = vec![
        ("ingest", keys_of::<IngestSettings>()),
        ("filter", keys_of::<FilterSettings>()),
        ("prescore", keys_of::<PrescoreSettings>()),
        ("sample", keys_of::<SampleSettings>()),
        ("serve", keys_of::<ServeSettings>()),
        ("consensus", keys_of::<ConsensusSettings>()),
        ("export-finetune", keys_of::<ExportFinetuneSettings>()),
        ("build-vcq", keys_of::<BuildVcqSettings>()),
        ("train-personal", keys_of::<TrainPersonalSettings>()),
        ("predict", keys_of::<PredictSettings>()),
        ("evaluate", keys_of::<EvaluateSettings>()),
        ("simulate", keys_of::<SimConfig>()),
    ];
    assert_eq!(expected.len(), SECTIONS.len());
    for (name, keys) in expected {
        let sub = cmd
            .find_subcommand(name)
            .unwrap_or_else(|| panic!("no subcommand {name}"));
        let flags: BTreeSet<String> = sub
            .get_arguments()
            .filter(|a| !a.is_global_set())
            .map(|a| a.get_id().as_str().to_string())
            .filter(|id| !["help", "config", "out", "jobs"].contains(&id.as_str()))
            .collect();
        assert_eq!(flags, keys, "flags and config keys differ for {name}");
        assert!(SECTIONS.contains(&name.replace('-', "_").as_str()));
    }
}

#[test]
fn config_file_then_flags() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "[simulate]\nn_raters = 12\nn_posts = 40\nposts_per_rater = 10\nprestudy_raters = 6\nprestudy_posts = 4\n").unwrap();
    let s = ok(&out, &["--config", cfg.to_str().unwrap(), "simulate"]);
    assert_eq!(s["raters"], 12);
    assert_eq!(s["posts"], 40);
    let s = ok(
        &out,
        &[
            "--config",
            cfg.to_str().unwrap(),
            "simulate",
            "--n-raters",
            "15",
        ],
    );
    assert_eq!(s["raters"], 15);
    let manifest: Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["commands"]["simulate"]["settings"]["n_raters"], 15);
    assert_eq!(manifest["commands"]["simulate"]["seeds"]["seed"], 0);

    std::fs::write(&cfg, "[simulate]\nn_rater = 12\n").unwrap();
    let (code, e) = err(&out, &["--config", cfg.to_str().unwrap(), "simulate"]);
    assert_eq!(code, 2);
    assert_eq!(e["error"]["code"], "unknown_config_key");
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");

    // Validation: missing and malformed input.
    let (code, e) = err(&out, &["ingest", "/nonexistent/corpus.jsonl"]);
    assert_eq!(
        (code, e["error"]["code"].as_str()),
        (2, Some("unreadable_input"))
    );
    let bad = dir.path().join("bad.jsonl");
    std::fs::write(
        &bad,
        "{\"id\": \"a\", \"text\": \"x\", \"source\": \"fyp\", \"owner\": \"u\"}\nnot json\n",
    )
    .unwrap();
    let (code, e) = err(&out, &["ingest", bad.to_str().unwrap()]);
    assert_eq!(code, 2);
    assert!(
        e["error"]["message"].as_str().unwrap().contains(":2:"),
        "{e}"
    );

    // Empty records: nothing to evaluate.
    std::fs::create_dir_all(&out).unwrap();
    std::fs::write(out.join("records.jsonl"), "").unwrap();
    let (code, e) = err(&out, &["evaluate"]);
    assert_eq!(code, 2);
    assert_eq!(e["error"]["message"], "no evaluable posts");

    // Backend: credential variable unset.
    let backend = dir.path().join("remote.toml");
    std::fs::write(
        &backend,
        "kind = \"remote\"\nendpoint = \"http://127.0.0.1:9/v1/chat\"\nmodel = \"m\"\ncredential_env = \"VALUELENS_TEST_UNSET_KEY\"\n",
    )
    .unwrap();
    ok(&out, &["ingest", fixture().to_str().unwrap()]);
    let o = Command::new(BIN)
        .arg("--out")
        .arg(&out)
        .args(["filter", "--backend", backend.to_str().unwrap()])
        .env_remove("VALUELENS_TEST_UNSET_KEY")
        .output()
        .unwrap();
    assert_eq!(
        o.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );

    // Internal: the output directory is a regular file.
    let file_out = dir.path().join("plain-file");
    std::fs::write(&file_out, "x").unwrap();
    let (code, e) = err(&file_out, &["ingest", fixture().to_str().unwrap()]);
    assert_eq!(
        (code, e["error"]["code"].as_str()),
        (4, Some("write_failed"))
    );
}

fn read_dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(&p).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

fn full_pipeline(out: &Path, jobs: &str) {
    let sim = [
        "simulate",
        "--n-raters",
        "30",
        "--n-posts",
        "80",
        "--posts-per-rater",
        "20",
        "--seed",
        "5",
    ];
    ok(out, &[&["--jobs", jobs][..], &sim].concat());
    let answers = out.join("calibration_answers.jsonl");
    ok(
        out,
        &[
            "--jobs",
            jobs,
            "build-vcq",
            "--answers",
            answers.to_str().unwrap(),
        ],
    );
    ok(out, &["--jobs", jobs, "train-personal", "--n-trees", "20"]);
    ok(
        out,
        &[
            "--jobs",
            jobs,
            "predict",
            "--model",
            out.join("personal_models.bundle").to_str().unwrap(),
        ],
    );
    ok(out, &["--jobs", jobs, "consensus"]);
    ok(
        out,
        &[
            "--jobs",
            jobs,
            "export-finetune",
            "--pool",
            "40",
            "--keep",
            "20",
            "--min-raters",
            "3",
        ],
    );
    ok(out, &["--jobs", jobs, "evaluate"]);
}

#[test]
fn pipeline_is_byte_deterministic_across_runs_and_jobs() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    full_pipeline(&a, "1");
    full_pipeline(&b, "4");
    let (fa, fb) = (read_dir_bytes(&a), read_dir_bytes(&b));
    let names: Vec<&str> = fa.iter().map(|(n, _)| n.as_str()).collect();
    for want in [
        "report.json",
        "conditions.csv",
        "mae.csv",
        "finetune.jsonl",
        "manifest.json",
    ] {
        assert!(names.contains(&want), "missing {want}: {names:?}");
    }
    assert_eq!(fa.len(), fb.len());
    for ((na, ba), (nb, bb)) in fa.iter().zip(&fb) {
        assert_eq!(na, nb);
        assert!(ba == bb, "{na} differs between runs");
    }
    let conditions = std::fs::read_to_string(a.join("conditions.csv")).unwrap();
    assert_eq!(conditions.lines().count(), 6);
    let mae = std::fs::read_to_string(a.join("mae.csv")).unwrap();
    assert_eq!(mae.lines().count(), 1 + 19 + 1);
    for line in std::fs::read_to_string(a.join("finetune.jsonl"))
        .unwrap()
        .lines()
    {
        valuelens::llm::validate_finetune_line(line).unwrap();
    }
}

#[test]
fn text_pipeline_on_fixture_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let s = ok(&out, &["ingest", fixture().to_str().unwrap()]);
    assert_eq!(s["posts"], 200);
    let s = ok(&out, &["filter"]);
    assert_eq!(s["quarantined"], 0);
    let s = ok(&out, &["prescore"]);
    assert_eq!(s["quarantined"], 0);
    let s = ok(&out, &["sample", "--seed", "11"]);
    assert!(s["entries"].as_u64().unwrap() > 0);
    let pool = std::fs::read_to_string(out.join("pool.jsonl")).unwrap();
    assert_eq!(pool.lines().count() as u64, s["pool"].as_u64().unwrap());
}

#[test]
fn ingest_rejects_conflicting_duplicates_and_drops_identical_ones() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let p = dir.path().join("c.jsonl");
    let line = r#"{"id": "a", "text": "hello\r\nworld  ", "source": "fyp", "owner": "u"}"#;
    std::fs::write(&p, format!("{line}\n{line}\n")).unwrap();
    let s = ok(&out, &["ingest", p.to_str().unwrap()]);
    assert_eq!(
        (s["posts"].as_u64(), s["duplicates_dropped"].as_u64()),
        (Some(1), Some(1))
    );
    let text = std::fs::read_to_string(out.join("posts.jsonl")).unwrap();
    assert!(text.contains(r#""text":"hello\nworld""#), "{text}");
    std::fs::write(&p, format!("{line}\n{}\n", line.replace("hello", "bye"))).unwrap();
    let (code, e) = err(&out, &["ingest", p.to_str().unwrap()]);
    assert_eq!(
        (code, e["error"]["code"].as_str()),
        (2, Some("conflicting_duplicate"))
    );
}

#[test]
fn serve_answers_http() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    ok(&out, &["ingest", fixture().to_str().unwrap()]);
    ok(&out, &["filter"]);
    ok(&out, &["prescore"]);
    ok(&out, &["sample"]);
    let mut child = Command::new(BIN)
        .arg("--out")
        .arg(&out)
        .args(["serve", "--port", "0", "--posts-per-session", "5"])
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap())
        .read_line(&mut line)
        .unwrap();
    let addr = serde_json::from_str::<Value>(&line).unwrap()["listening"]
        .as_str()
        .unwrap()
        .to_string();

    let client = reqwest::blocking::Client::new();
    let r = client
        .post(format!("http://{addr}/sessions"))
        .json(&serde_json::json!({"rater_id": "r1"}))
        .send()
        .unwrap();
    assert_eq!(r.status().as_u16(), 201);
    let session: Value = r.json().unwrap();
    let id = session["id"].as_str().unwrap();
    let next: Value = client
        .get(format!("http://{addr}/sessions/{id}/next"))
        .send()
        .unwrap()
        .json()
        .unwrap();
    assert_eq!(next["phase"], "attention");
    let r = client
        .get(format!("http://{addr}/sessions/nope"))
        .send()
        .unwrap();
    assert_eq!(r.status().as_u16(), 404);
    let export: Value = client
        .get(format!("http://{addr}/export"))
        .send()
        .unwrap()
        .json()
        .unwrap();
    assert_eq!(export["records"].as_array().unwrap().len(), 0);
    child.kill().unwrap();
    child.wait().unwrap();
    assert!(out.join("study/events.jsonl").exists());
}
