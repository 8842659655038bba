use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn oblivious(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_oblivious"))
        .args(args)
        .current_dir(dir)
        .env("OBLIVIOUS_OUTPUT_DIR", dir.join("out"))
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn json_lines(s: &str) -> Vec<Value> {
    s.lines().map(|l| serde_json::from_str(l).expect("each line is JSON")).collect()
}

#[test]
fn run_bundled_scenario_writes_trace() {
    let dir = tempfile::tempdir().unwrap();
    let o = oblivious(dir.path(), &["run", "--scenario", "reward_hacking", "--agent", "oblivious", "--seed", "1"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let summary = &json_lines(&stdout(&o))[0];
    assert_eq!(summary["passed"], true);
    assert_eq!(summary["final_state"], "s_m");
    let trace = dir.path().join("out/reward_hacking-oblivious-seed1.ndjson");
    let records = json_lines(&fs::read_to_string(&trace).unwrap());
    assert_eq!(records.last().unwrap()["record"], "summary");
    for r in &records[..records.len() - 1] {
        for key in ["tick", "state", "action", "ev_table", "corrected", "ledger_size", "penalty", "stop"] {
            assert!(r.get(key).is_some(), "tick record lacks {key}");
        }
    }
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["a.ndjson", "b.ndjson"] {
        let o = oblivious(dir.path(), &["run", "--scenario", "misgeneralization", "--seed", "5", "--output", name]);
        assert_eq!(o.status.code(), Some(0));
    }
    assert_eq!(fs::read(dir.path().join("a.ndjson")).unwrap(), fs::read(dir.path().join("b.ndjson")).unwrap());
}

#[test]
fn missing_scenario_file_is_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = oblivious(dir.path(), &["run", "--scenario", "missing.file"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("missing.file"));
}

#[test]
fn usage_and_validation_errors_are_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(oblivious(dir.path(), &["run"]).status.code(), Some(2));
    assert_eq!(oblivious(dir.path(), &["run", "--scenario", "pruning", "--agent", "sloth"]).status.code(), Some(2));
    assert_eq!(oblivious(dir.path(), &["run", "--scenario", "pruning", "--lambda", "-1"]).status.code(), Some(2));
    fs::write(dir.path().join("bad.toml"), "[meta]\nname = \"x\"\n[agent]\nlambda = 1.0\ncolour = 3\n").unwrap();
    assert_eq!(oblivious(dir.path(), &["run", "--scenario", "bad.toml"]).status.code(), Some(2));
    assert_eq!(oblivious(dir.path(), &["--help"]).status.code(), Some(0));
    assert_eq!(oblivious(dir.path(), &["--version"]).status.code(), Some(0));
}

#[test]
fn failing_assertion_is_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    // Without a penalty the oblivious agent hacks, against its assertions.
    let o = oblivious(dir.path(), &["run", "--scenario", "reward_hacking", "--lambda", "0"]);
    assert_eq!(o.status.code(), Some(1));
    let summary = &json_lines(&stdout(&o))[0];
    assert_eq!(summary["passed"], false);
    assert!(summary["verdicts"].as_array().unwrap().iter().any(|v| v["passed"] == false));
}

#[test]
fn custom_scenario_file_runs() {
    let dir = tempfile::tempdir().unwrap();
    let doc = r#"
[meta]
name = "two step"

[[states]]
id = "a"
u_hidden = 0.0
i_true = 0.5
i_model = 0.5

[[states]]
id = "b"
flags = ["terminal"]
u_hidden = 1.0
i_true = 1.0
i_model = 1.0

[[actions]]
id = "go"
from = "a"
success = "b"

[agent]
lambda = 1.0

[[assertions]]
kind = "final-state-in"
states = ["b"]
"#;
    fs::write(dir.path().join("two.toml"), doc).unwrap();
    let o = oblivious(dir.path(), &["run", "--scenario", "two.toml"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.path().join("out/two_step-oblivious-seed0.ndjson").exists());
}

#[test]
fn batch_covers_bundled_suite() {
    let dir = tempfile::tempdir().unwrap();
    let o = oblivious(dir.path(), &["batch", "--jobs", "3", "--seed", "1", "--seed", "2"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let lines = json_lines(&stdout(&o));
    assert_eq!(lines.len(), 6 * 2 * 2);
    let summary = fs::read_to_string(dir.path().join("out/summary.jsonl")).unwrap();
    assert_eq!(summary, stdout(&o));
    for l in &lines {
        assert!(Path::new(l["trace"].as_str().unwrap()).exists());
    }
    // Same work with one worker gives the same summary.
    let serial = tempfile::tempdir().unwrap();
    let o1 = oblivious(serial.path(), &["batch", "--jobs", "1", "--seed", "1", "--seed", "2"]);
    let strip = |v: &Value| {
        let mut v = v.clone();
        v.as_object_mut().unwrap().remove("trace");
        v
    };
    let a: Vec<_> = lines.iter().map(strip).collect();
    let b: Vec<_> = json_lines(&stdout(&o1)).iter().map(strip).collect();
    assert_eq!(a, b);
}

#[test]
fn verify_reports_full_agreement() {
    let dir = tempfile::tempdir().unwrap();
    let o = oblivious(dir.path(), &["verify", "--count", "100", "--seed", "9"]);
    assert_eq!(o.status.code(), Some(0));
    let report = &json_lines(&stdout(&o))[0];
    assert_eq!(report["summary"], "100/100 oracle agreements");
    assert_eq!(oblivious(dir.path(), &["verify", "--max-depth", "9"]).status.code(), Some(2));
}

#[test]
fn sweep_finds_reward_hacking_flip() {
    let dir = tempfile::tempdir().unwrap();
    let o = oblivious(
        dir.path(),
        &["sweep", "--scenario", "reward_hacking", "--param", "lambda", "--from", "6", "--to", "8", "--step", "0.5"],
    );
    assert_eq!(o.status.code(), Some(0));
    let rows: Vec<(String, String)> = stdout(&o)
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| {
            let (a, b) = l.split_once('\t').unwrap();
            (a.to_string(), b.to_string())
        })
        .collect();
    let expected = [("6", "hack"), ("6.5", "hack"), ("7", "comply"), ("7.5", "comply"), ("8", "comply")];
    assert_eq!(rows, expected.map(|(a, b)| (a.to_string(), b.to_string())));
    let bad = oblivious(
        dir.path(),
        &["sweep", "--scenario", "pruning", "--param", "deception-p", "--from", "0", "--to", "1", "--step", "0.5"],
    );
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn multiagent_runs_bundled_ensemble() {
    let dir = tempfile::tempdir().unwrap();
    let o = oblivious(dir.path(), &["multiagent"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let s = &json_lines(&stdout(&o))[0];
    assert_eq!(s["final_state"], "done");
    assert_eq!(s["vetoes"], 1);
    assert!(dir.path().join("out/ensemble-ensemble-seed7.ndjson").exists());
}

#[test]
fn export_reproduces_bundled_files() {
    let dir = tempfile::tempdir().unwrap();
    let o = oblivious(dir.path(), &["export", "--dir", "scen"]);
    assert_eq!(o.status.code(), Some(0));
    let bundled = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/scenarios");
    for name in ["reward_hacking", "instrumental", "misgeneralization", "tampering", "deception", "pruning"] {
        let f = format!("{name}.toml");
        assert_eq!(
            fs::read_to_string(dir.path().join("scen").join(&f)).unwrap(),
            fs::read_to_string(bundled.join(&f)).unwrap()
        );
    }
}
