use std::fs;
use std::process::{Command, Output};

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_eraser-qkd"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn run_prints_summary_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    fs::write(&cfg, r#"{"rounds": 1000, "backend": "CIRCUIT", "attack": "NONE", "seed": 42}"#).unwrap();
    let first = bin(&["run", cfg.to_str().unwrap()]);
    assert_eq!(first.status.code(), Some(0));
    assert!(stdout(&first).contains("verdict=clean"), "{}", stdout(&first));
    let t1 = fs::read(dir.path().join("transcript.jsonl")).unwrap();
    let second = bin(&["run", cfg.to_str().unwrap()]);
    assert_eq!(second.status.code(), Some(0));
    assert_eq!(fs::read(dir.path().join("transcript.jsonl")).unwrap(), t1);
}

#[test]
fn attacked_run_reports_detection() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    fs::write(&cfg, r#"{"rounds": 20000, "attack": "INTERCEPT_Z(BOTH)", "seed": 42}"#).unwrap();
    let o = bin(&["run", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    let q = report["qber_overall"].as_f64().unwrap();
    assert!((q - 0.25).abs() <= 0.02, "{q}");
    assert_eq!(report["eve_detected"], true);
    assert!(stdout(&o).contains("EAVESDROPPER DETECTED"));
}

#[test]
fn config_errors_exit_2_with_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, "{\n  \"rounds\": 10,\n  \"seed\": 1,\n  \"backend\": \"QUANTUM\"\n}").unwrap();
    let o = bin(&["run", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("backend") && err.contains("line 4"), "{err}");
    assert_eq!(bin(&["run", "/nonexistent/c.json"]).status.code(), Some(2));
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(bin(&[]).status.code(), Some(2));
    assert_eq!(bin(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(bin(&["sweep", "BARE_MZI", "many", "x.json"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s.json");
    assert_eq!(bin(&["sweep", "NOPE", "8", out.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(bin(&["sweep", "BARE_MZI", "1", out.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn sweep_and_oracle_write_files() {
    let dir = tempfile::tempdir().unwrap();
    let s = dir.path().join("s.json");
    let o = bin(&["sweep", "MZI_POL_WPI", "32", s.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&s).unwrap()).unwrap();
    assert_eq!(v["series"]["D1"].as_array().unwrap().len(), 32);
    assert!(v["visibility"]["D1"].as_f64().unwrap() < 1e-6);

    let out = dir.path().join("o.json");
    let o = bin(&["oracle", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("INTERCEPT_Z(Q)"));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v["channel_state_overlap"]["value"], 0.25);
}

#[test]
fn selftest_passes() {
    let o = bin(&["selftest"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let text = stdout(&o);
    assert!(text.lines().all(|l| l.starts_with("PASS")), "{text}");
    assert!(text.contains("decode_correctness"));
}
