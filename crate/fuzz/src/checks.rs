//! Parser round-trip checks shared by the fuzz targets and the corpus replay
//! test. Each takes raw bytes, must never panic on rejected input, and
//! asserts that anything accepted survives a write/read cycle unchanged.

use eraser_qkd::adversary::AttackStrategy;
use eraser_qkd::harness::{RunConfig, SweepResult};
use eraser_qkd::photonic::LayoutKind;
use eraser_qkd::protocol::{parse_transcript, transcript_to_jsonl, Backend, Eraser, SessionReport};

fn text(data: &[u8]) -> Option<&str> {
    std::str::from_utf8(data).ok()
}

pub fn run_config(data: &[u8]) {
    let Some(s) = text(data) else { return };
    if let Ok(cfg) = RunConfig::from_json(s) {
        let out = cfg.to_json();
        let back = RunConfig::from_json(&out).expect("written config parses");
        assert_eq!(back, cfg);
        assert_eq!(back.to_json(), out);
    }
}

pub fn transcript(data: &[u8]) {
    let Some(s) = text(data) else { return };
    if let Ok(records) = parse_transcript(s) {
        let out = transcript_to_jsonl(&records);
        let back = parse_transcript(&out).expect("written transcript parses");
        assert_eq!(back, records);
        assert_eq!(transcript_to_jsonl(&back), out);
    }
}

pub fn session_report(data: &[u8]) {
    let Some(s) = text(data) else { return };
    if let Ok(report) = SessionReport::from_json(s) {
        let once = report.to_json();
        let back = SessionReport::from_json(&once).expect("written report parses");
        assert_eq!(back.to_json(), once);
    }
}

pub fn sweep_result(data: &[u8]) {
    let Some(s) = text(data) else { return };
    if let Ok(sweep) = serde_json::from_str::<SweepResult>(s) {
        let once = sweep.to_json();
        let back: SweepResult = serde_json::from_str(&once).expect("written sweep parses");
        assert_eq!(back.to_json(), once);
    }
}

pub fn attack_strategy(data: &[u8]) {
    let Some(s) = text(data) else { return };
    if let Ok(a) = s.parse::<AttackStrategy>() {
        assert_eq!(a.to_string().parse::<AttackStrategy>().unwrap(), a);
        let json = serde_json::to_string(&a).unwrap();
        assert_eq!(serde_json::from_str::<AttackStrategy>(&json).unwrap(), a);
    }
}

pub fn setting_names(data: &[u8]) {
    let Some(s) = text(data) else { return };
    if let Ok(k) = s.parse::<LayoutKind>() {
        assert_eq!(k.name().parse::<LayoutKind>().unwrap(), k);
    }
    if let Ok(e) = s.parse::<Eraser>() {
        assert_eq!(e.name().parse::<Eraser>().unwrap(), e);
    }
    if let Ok(b) = s.parse::<Backend>() {
        assert_eq!(b.name().parse::<Backend>().unwrap(), b);
    }
}
