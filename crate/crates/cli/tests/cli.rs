use std::process::{Command, Output};

fn lowdeg(args: &[&str], dir: &std::path::Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lowdeg")).args(args).current_dir(dir).output().unwrap()
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn cutoff_example() {
    let d = tempfile::tempdir().unwrap();
    let o = lowdeg(&["cutoff", "--n", "16", "--x", "0.5", "--eps", "0.1", "--delta", "0.1"], d.path());
    assert_eq!(stdout(&o).trim(), "7");
}

#[test]
fn zero_noise_parameter_gives_uniform() {
    let d = tempfile::tempdir().unwrap();
    stdout(&lowdeg(&["unitary", "gen", "--m", "7", "--seed", "1", "--out", "u.json"], d.path()));
    let o = lowdeg(&["prob", "noisy", "--unitary", "u.json", "--outcome", "1 4 6", "--x", "0"], d.path());
    let p: f64 = stdout(&o).trim().parse().unwrap();
    assert!((p - 6.0 / 343.0).abs() < 1e-15);
}

#[test]
fn config_file_supplies_defaults_and_flags_override() {
    let d = tempfile::tempdir().unwrap();
    std::fs::write(d.path().join("c.json"), r#"{"n": 16, "x": 0.5, "eps": 0.1, "delta": 0.1}"#).unwrap();
    assert_eq!(stdout(&lowdeg(&["--config", "c.json", "cutoff"], d.path())).trim(), "7");
    assert_eq!(stdout(&lowdeg(&["--config", "c.json", "cutoff", "--x", "0"], d.path())).trim(), "0");
}

#[test]
fn validate_writes_report_and_table() {
    let d = tempfile::tempdir().unwrap();
    let o = lowdeg(&["validate", "loss-barrier", "--out", "loss.json"], d.path());
    let report: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(report["pass"], true);
    assert_eq!(report["experiment"], "loss-barrier");
    let file: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.path().join("loss.json")).unwrap()).unwrap();
    assert_eq!(file, report);
    let csv = std::fs::read_to_string(d.path().join("loss.csv")).unwrap();
    assert!(csv.starts_with("l,discarded_enumerated,"));
}

#[test]
fn sample_csv_shape() {
    let d = tempfile::tempdir().unwrap();
    stdout(&lowdeg(&["unitary", "gen", "--m", "6", "--seed", "2", "--out", "u.json"], d.path()));
    let o = lowdeg(
        &["sample", "--unitary", "u.json", "--n", "2", "--x", "0.5", "-l", "1", "--count", "20", "--seed", "3"],
        d.path(),
    );
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "sample_id,outcome");
    assert_eq!(lines.len(), 21);
    for (i, line) in lines[1..].iter().enumerate() {
        let (id, outcome) = line.split_once(',').unwrap();
        assert_eq!(id, i.to_string());
        assert!(outcome == "c" || outcome.split(' ').count() == 2);
    }
}

#[test]
fn errors_exit_nonzero_with_message() {
    let d = tempfile::tempdir().unwrap();
    stdout(&lowdeg(&["unitary", "gen", "--m", "4", "--seed", "1", "--out", "u.json"], d.path()));
    for args in [
        &["prob", "exact", "--unitary", "u.json", "--outcome", "0 x"][..],
        &["prob", "exact", "--unitary", "missing.json", "--outcome", "0 1"][..],
        &["prob", "noisy", "--unitary", "u.json", "--outcome", "0 1"][..],
        &["cutoff", "--n", "3", "--unknown-flag"][..],
        &["prob", "exact", "--unitary", "u.json", "--outcome", "0 9"][..],
    ] {
        let o = lowdeg(args, d.path());
        assert!(!o.status.success(), "{args:?} should fail");
        assert!(!o.stderr.is_empty());
        assert!(o.stdout.is_empty());
    }
}

#[test]
fn audit_writes_json_lines_next_to_samples() {
    let d = tempfile::tempdir().unwrap();
    stdout(&lowdeg(&["unitary", "gen", "--m", "5", "--seed", "4", "--out", "u.json"], d.path()));
    let args = ["sample", "--unitary", "u.json", "--n", "2", "--x", "0.5", "-l", "1", "--count", "4", "--seed", "1", "--audit"];
    assert!(!lowdeg(&args, d.path()).status.success());
    stdout(&lowdeg(&[&args[..], &["--out", "s.csv"][..]].concat(), d.path()));
    let csv = std::fs::read_to_string(d.path().join("s.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
    let audit = std::fs::read_to_string(d.path().join("s.audit.jsonl")).unwrap();
    for (i, line) in audit.lines().enumerate() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["sample_id"], i);
        assert!(v["oracle_calls"].as_u64().unwrap() <= 10);
        for step in v["steps"].as_array().unwrap() {
            let total: f64 = step["probabilities"].as_array().unwrap().iter().map(|p| p.as_f64().unwrap()).sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
    }
    assert_eq!(audit.lines().count(), 4);
}
