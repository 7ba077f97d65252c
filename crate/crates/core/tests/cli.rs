//! Runs the `elab` binary end to end on small synthetic configurations.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_elab");

fn small_config(dir: &Path, extra: &str) -> PathBuf {
    let text = format!(
        r#"seed = 7
output_dir = "{out}"
mode = "elabor"

[trainer]
epochs = 2
learning_rate = 10.0
predictor_learning_rate = 1.0
alternation_block = 20

[data]
source = "synthetic"
n_instances = 6
n_dev = 4
fact_vocabulary = 10
{extra}
"#,
        out = dir.join("run").display()
    );
    let path = dir.join("config.toml");
    fs::write(&path, text).unwrap();
    path
}

fn elab(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn cache_teacher_reports_sampled_and_is_idempotent() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), "");
    let c = cfg.to_str().unwrap();
    let first = elab(&["cache-teacher", "-c", c]);
    assert!(first.status.success(), "{}", stderr(&first));
    // 10 instances with 20 distinct scripted texts each.
    assert!(stdout(&first).starts_with("200 sampled, 0 deduped"), "{}", stdout(&first));
    let second = elab(&["cache-teacher", "-c", c]);
    assert!(second.status.success());
    assert!(stdout(&second).starts_with("0 sampled"), "{}", stdout(&second));
}

#[test]
fn train_is_deterministic_and_echoes_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), "");
    let c = cfg.to_str().unwrap();
    let mut logs = Vec::new();
    for name in ["a", "b"] {
        let out = tmp.path().join(name);
        let o = elab(&["train", "-c", c, "--output-dir", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", stderr(&o));
        assert_eq!(fs::read(out.join("config.toml")).unwrap(), fs::read(&cfg).unwrap());
        let resolved = fs::read_to_string(out.join("config.resolved.toml")).unwrap();
        assert!(resolved.contains("seed = 7"));
        assert!(out.join("checkpoints/final.json").exists());
        logs.push(fs::read(out.join("metrics.jsonl")).unwrap());
    }
    assert!(!logs[0].is_empty());
    assert_eq!(logs[0], logs[1]);
}

#[test]
fn eval_reports_integration_and_chosen_elaborations() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), "");
    let c = cfg.to_str().unwrap();
    assert!(elab(&["train", "-c", c]).status.success());
    let o = elab(&["eval", "-c", c, "--integration", "probability"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("integration: probability"), "{}", stdout(&o));
    let run = tmp.path().join("run");
    let records = fs::read_to_string(run.join("eval_records.jsonl")).unwrap();
    assert_eq!(records.lines().count(), 4);
    for line in records.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["integration"], "probability");
        assert!(v.get("chosen_elaboration").is_some());
    }
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(run.join("eval_report.json")).unwrap()).unwrap();
    assert_eq!(report["integration"], "probability");
}

#[test]
fn missing_checkpoint_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), "");
    let o = elab(&["eval", "-c", cfg.to_str().unwrap(), "--checkpoint", "/nonexistent/final.json"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn usage_and_config_errors_exit_1() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), "");
    let c = cfg.to_str().unwrap();
    assert_eq!(elab(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(elab(&["train"]).status.code(), Some(1));
    assert_eq!(elab(&["train", "-c", "/nonexistent.toml"]).status.code(), Some(1));
    assert_eq!(elab(&["ablate", "-c", c, "--axis", "depth"]).status.code(), Some(1));
    assert_eq!(elab(&["train", "-c", c, "--filter", "best"]).status.code(), Some(1));
    assert_eq!(elab(&["train", "-c", c, "--k", "0"]).status.code(), Some(1));

    let bad = tmp.path().join("bad.toml");
    fs::write(&bad, "mode = \"elabor\"\n").unwrap();
    let o = elab(&["train", "-c", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("seed"), "{}", stderr(&o));

    assert_eq!(elab(&["--help"]).status.code(), Some(0));
    assert_eq!(elab(&["--version"]).status.code(), Some(0));
}

#[test]
fn unreachable_teacher_exits_2_with_resume_hint() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(
        tmp.path(),
        r#"
[teacher]
client = "http"

[teacher.http]
endpoint = "http://127.0.0.1:9/v1/completions"
requests_per_minute = 100000.0
timeout_secs = 2
"#,
    );
    let o = elab(&["train", "-c", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let err = stderr(&o);
    assert!(err.contains("teacher unavailable"), "{err}");
    assert!(err.contains("--resume"), "{err}");
    let hint = err.lines().find_map(|l| l.strip_prefix("resume with: --resume ")).unwrap();
    assert!(Path::new(hint.trim()).exists());
}

#[test]
fn ablate_filter_axis_writes_four_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), "");
    let o = elab(&["ablate", "-c", cfg.to_str().unwrap(), "--axis", "filter", "--epochs", "1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = fs::read_to_string(tmp.path().join("run/ablation_filter.jsonl")).unwrap();
    let settings: Vec<String> = rows
        .lines()
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["setting"].as_str().unwrap().to_string())
        .collect();
    assert_eq!(settings, ["random", "correct", "pos_neg", "pos"]);
    // Header plus one line per row.
    assert_eq!(stdout(&o).lines().count(), 5);
}

#[test]
fn adapter_backend_matches_in_process_toy_models() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), "");
    let c = cfg.to_str().unwrap();
    fs::create_dir_all(tmp.path().join("adapter")).unwrap();
    let adapter_cfg = small_config(
        &tmp.path().join("adapter"),
        &format!(
            r#"
[backend]
kind = "adapter"
program = "{BIN}"
args = ["serve-backend", "-c", "{c}"]
"#
        ),
    );
    let local = elab(&["train", "-c", c]);
    assert!(local.status.success(), "{}", stderr(&local));
    let remote = elab(&["train", "-c", adapter_cfg.to_str().unwrap()]);
    assert!(remote.status.success(), "{}", stderr(&remote));
    assert_eq!(
        fs::read(tmp.path().join("run/metrics.jsonl")).unwrap(),
        fs::read(tmp.path().join("adapter/run/metrics.jsonl")).unwrap()
    );
}

#[test]
fn serve_backend_answers_protocol_requests() {
    use std::io::Write;
    use std::process::Stdio;

    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), "");
    let mut child = Command::new(BIN)
        .args(["serve-backend", "-c", cfg.to_str().unwrap()])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    {
        let stdin = child.stdin.as_mut().unwrap();
        writeln!(stdin, r#"{{"op":"score","question":"what does k1 map to ?","candidates":["v1","v2"],"elaboration":null}}"#).unwrap();
        writeln!(stdin, r#"{{"op":"digest","model":"generator"}}"#).unwrap();
        writeln!(stdin, r#"{{"op":"nonsense"}}"#).unwrap();
    }
    drop(child.stdin.take());
    let out = child.wait_with_output().unwrap();
    let lines: Vec<serde_json::Value> = String::from_utf8(out.stdout)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[0]["ok"], true);
    assert_eq!(lines[0]["scores"].as_array().unwrap().len(), 2);
    assert_eq!(lines[1]["digest"].as_str().unwrap().len(), 64);
    assert_eq!(lines[2]["ok"], false);
}
