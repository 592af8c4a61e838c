use std::fs;

use eraser_qkd::harness::{cmd_oracle, cmd_run, cmd_sweep, execute, HarnessError, RunConfig, SweepResult};
use eraser_qkd::protocol::{parse_transcript, SessionReport};

fn write_config(dir: &std::path::Path, body: &str) -> std::path::PathBuf {
    let p = dir.join("config.json");
    fs::write(&p, body).unwrap();
    p
}

#[test]
fn run_writes_outputs_next_to_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"rounds": 1000, "backend": "CIRCUIT", "attack": "NONE", "seed": 42}"#);
    let out = cmd_run(&cfg).unwrap();
    assert_eq!(out.lines.len(), 1);
    assert!(out.lines[0].contains("qber=0.000000"), "{}", out.lines[0]);
    let report = SessionReport::from_json(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report.qber_overall, 0.0);
    let transcript = parse_transcript(&fs::read_to_string(dir.path().join("transcript.jsonl")).unwrap()).unwrap();
    assert_eq!(transcript.len(), 1000);
}

#[test]
fn cli_and_library_agree() {
    let dir = tempfile::tempdir().unwrap();
    let body = r#"{"rounds": 800, "attack": "INTERCEPT_ERASER(B)", "seed": 9, "transcript_path": "out/t.jsonl", "report_path": "out/r.json"}"#;
    let cfg = write_config(dir.path(), body);
    cmd_run(&cfg).unwrap();
    let direct = execute(&RunConfig::from_json(body).unwrap(), 0).unwrap();
    assert_eq!(fs::read_to_string(dir.path().join("out/t.jsonl")).unwrap(), direct.transcript);
    assert_eq!(fs::read_to_string(dir.path().join("out/r.json")).unwrap(), direct.report.to_json());
}

#[test]
fn repetitions_and_embedded_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"protocol": "bb84", "rounds": 400, "seed": 1, "repetitions": 3,
            "sweep": {"layout": "ERASER_PBS", "points": 8, "path": "sweep.json"}}"#,
    );
    let out = cmd_run(&cfg).unwrap();
    assert_eq!(out.runs.len(), 3);
    for i in 0..3 {
        assert!(dir.path().join(format!("report.rep{i}.json")).exists());
        assert!(dir.path().join(format!("transcript.rep{i}.jsonl")).exists());
    }
    assert_ne!(out.runs[0].2, out.runs[1].2);
    assert!(out.lines.iter().any(|l| l.starts_with("pooled")));
    let sweep: SweepResult = serde_json::from_str(&fs::read_to_string(dir.path().join("sweep.json")).unwrap()).unwrap();
    assert_eq!(sweep.points, 8);
}

#[test]
fn config_errors_exit_with_usage_code() {
    let dir = tempfile::tempdir().unwrap();
    for body in [
        r#"{"rounds": 10}"#,
        r#"{"rounds": 10, "seed": 1, "backend": "PHOTONIC", "attack": "INTERCEPT_Z(Q)"}"#,
        r#"{"rounds": 10, "seed": 1, "bob_eraser_policy": {"PHOTONIC_PBS": 1}}"#,
        r#"{"rounds": 10, "seed": 1, "disclose_fraction": 1.5}"#,
        r#"{"rounds": 10, "seed": 1, "sweep": {"layout": "NOPE", "points": 8, "path": "s.json"}}"#,
        r#"{"rounds": 10, "seed": 1, "sweep": {"layout": "BARE_MZI", "points": 1, "path": "s.json"}}"#,
        "{\"rounds\": 10,\n \"seed\": -1}",
        "not json",
    ] {
        let e = cmd_run(&write_config(dir.path(), body)).unwrap_err();
        assert_eq!(e.exit_code(), 2, "{body}: {e}");
    }
    let e = cmd_run(&dir.path().join("missing.json")).unwrap_err();
    assert!(matches!(e, HarnessError::Io { .. }));
    assert_eq!(e.exit_code(), 2);
}

#[test]
fn unwritable_output_fails() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"rounds": 50, "seed": 1, "report_path": "file/report.json"}"#,
    );
    let e = cmd_run(&cfg).unwrap_err();
    assert!(matches!(e, HarnessError::Io { .. }), "{e}");
}

#[test]
fn sweep_and_oracle_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("sweep.json");
    let s = cmd_sweep("bare_mzi", 32, &p).unwrap();
    let text = fs::read_to_string(&p).unwrap();
    let back: SweepResult = serde_json::from_str(&text).unwrap();
    assert_eq!(back.to_json(), text);
    assert_eq!(back.series["D1"].len(), s.points);
    assert!(cmd_sweep("nope", 32, &p).is_err());

    let o = dir.path().join("oracle.json");
    let report = cmd_oracle(&o).unwrap();
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&o).unwrap()).unwrap();
    assert_eq!(v["channel_state_overlap"]["fraction"], "1/4");
    assert_eq!(v["bb84_basis_overlap"]["fraction"], "1/2");
    assert_eq!(v["per_mode"].as_array().unwrap().len(), 36);
    assert!(v["per_mode"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|r| r["strategy"] == "NONE")
        .all(|r| r["qber"]["value"] == 0.0));
    assert!(report.findings.iter().any(|f| f.contains("INTERCEPT_Z(Q)")));
}
