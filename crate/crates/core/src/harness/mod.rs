//! Configuration loading, session execution and artifact output.
//!
//! Everything the command-line tool does is a call into this module, so the
//! same inputs give the same files whether run from the shell or a test.

mod oracle;
mod selftest;
mod sweep;

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adversary::AttackStrategy;
use crate::json;
use crate::photonic::OpticsError;
use crate::protocol::bb84::{bb84_session, Bb84Record};
use crate::protocol::{
    run_session, transcript_to_jsonl, Backend, EraserPolicy, ProtocolError, QberTally,
    SessionConfig, SessionReport, DEFAULT_DISCLOSE_FRACTION, DEFAULT_QBER_THRESHOLD,
};

pub use oracle::{cmd_oracle, oracle_report, OracleReport};
pub use selftest::{cmd_selftest, Check, SelftestReport};
pub use sweep::{cmd_sweep, phi_grid, sweep, SweepResult, SweepSpec};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{path}: {message}")]
    Config { path: String, message: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Optics(#[from] OpticsError),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("{0}")]
    Usage(String),
}

impl HarnessError {
    /// 1 for invariant failures, 2 for anything the caller can fix by
    /// changing the input.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Invariant(_) => 1,
            HarnessError::Protocol(ProtocolError::State(_)) => 1,
            HarnessError::Optics(OpticsError::UnknownLayout(_) | OpticsError::NonFinitePhase(..)) => 2,
            HarnessError::Optics(_) => 1,
            _ => 2,
        }
    }

    fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProtocolKind {
    #[default]
    Eraser,
    Bb84,
}

fn default_backend() -> Backend {
    Backend::Circuit
}
fn default_disclose() -> f64 {
    DEFAULT_DISCLOSE_FRACTION
}
fn default_threshold() -> f64 {
    DEFAULT_QBER_THRESHOLD
}
fn default_transcript() -> PathBuf {
    PathBuf::from("transcript.jsonl")
}
fn default_report() -> PathBuf {
    PathBuf::from("report.json")
}
fn one() -> u32 {
    1
}

/// Contents of a `run` configuration file.
///
/// Relative output paths are resolved against the directory holding the
/// config file. Repetition `i` uses seed `seed + i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub protocol: ProtocolKind,
    pub rounds: u64,
    #[serde(default = "default_backend")]
    pub backend: Backend,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bob_eraser_policy: Option<EraserPolicy>,
    #[serde(default)]
    pub attack: AttackStrategy,
    pub seed: u64,
    #[serde(default = "default_disclose")]
    pub disclose_fraction: f64,
    #[serde(default = "default_threshold")]
    pub qber_threshold: f64,
    #[serde(default = "default_transcript")]
    pub transcript_path: PathBuf,
    #[serde(default = "default_report")]
    pub report_path: PathBuf,
    #[serde(default = "one")]
    pub repetitions: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
}

impl RunConfig {
    /// Parses a config; errors name the offending field and line.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let field = e.path().to_string();
            let inner = e.inner();
            HarnessError::Config {
                path: if field == "." { "config".into() } else { format!("field `{field}`") },
                message: format!("{inner}"),
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let mut cfg = Self::from_json(&text).map_err(|e| match e {
            HarnessError::Config { path: field, message } => HarnessError::Config {
                path: format!("{} ({field})", path.display()),
                message,
            },
            other => other,
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.transcript_path = base.join(&cfg.transcript_path);
        cfg.report_path = base.join(&cfg.report_path);
        if let Some(s) = cfg.sweep.as_mut() {
            s.path = base.join(&s.path);
        }
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        json::to_pretty(self).expect("config serializes")
    }

    pub fn session_config(&self, repetition: u32) -> SessionConfig {
        SessionConfig {
            rounds: self.rounds,
            backend: self.backend,
            bob_eraser_policy: self
                .bob_eraser_policy
                .clone()
                .unwrap_or_else(|| EraserPolicy::default_for(self.backend)),
            attack: self.attack,
            seed: self.seed.wrapping_add(repetition as u64),
            disclose_fraction: self.disclose_fraction,
            qber_threshold: self.qber_threshold,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.repetitions == 0 {
            return Err(HarnessError::Config {
                path: "field `repetitions`".into(),
                message: "must be at least 1".into(),
            });
        }
        if let Some(s) = &self.sweep {
            s.validate()?;
        }
        let session = self.session_config(0);
        match self.protocol {
            ProtocolKind::Eraser => {
                session.validate()?;
            }
            ProtocolKind::Bb84 => {
                session.validate_common()?;
            }
        }
        Ok(())
    }

    /// Output paths for repetition `i`; `.rep{i}` is inserted before the
    /// extension when there is more than one repetition.
    pub fn output_paths(&self, i: u32) -> (PathBuf, PathBuf) {
        if self.repetitions == 1 {
            return (self.transcript_path.clone(), self.report_path.clone());
        }
        (tagged(&self.transcript_path, i), tagged(&self.report_path, i))
    }
}

fn tagged(path: &Path, i: u32) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    let name = match path.extension().and_then(|e| e.to_str()) {
        Some(ext) => format!("{stem}.rep{i}.{ext}"),
        None => format!("{stem}.rep{i}"),
    };
    path.with_file_name(name)
}

/// Transcript text and report for one session.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionArtifacts {
    pub transcript: String,
    pub report: SessionReport,
}

/// Runs one session of the configured protocol in memory.
pub fn execute(config: &RunConfig, repetition: u32) -> Result<SessionArtifacts> {
    let session = config.session_config(repetition);
    match config.protocol {
        ProtocolKind::Eraser => {
            let out = run_session(&session)?;
            Ok(SessionArtifacts {
                transcript: transcript_to_jsonl(&out.transcript),
                report: out.report,
            })
        }
        ProtocolKind::Bb84 => {
            let out = bb84_session(&session)?;
            Ok(SessionArtifacts {
                transcript: bb84_jsonl(&out.transcript),
                report: out.report,
            })
        }
    }
}

fn bb84_jsonl(records: &[Bb84Record]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("record serializes"));
        out.push('\n');
    }
    out
}

/// Checks the structural guarantees every report must meet.
pub fn check_report(report: &SessionReport, threshold: f64) -> Result<()> {
    let fail = |m: String| Err(HarnessError::Invariant(m));
    if !(0.0..=1.0).contains(&report.qber_overall) {
        return fail(format!("qber_overall {} outside [0, 1]", report.qber_overall));
    }
    if report.final_key.len() + report.disclosed_count != report.sifted_length {
        return fail(format!(
            "final key has {} bits, expected {} - {}",
            report.final_key.len(),
            report.sifted_length,
            report.disclosed_count
        ));
    }
    if report.eve_detected != (report.qber_overall > threshold) {
        return fail("eve_detected disagrees with the threshold".into());
    }
    let text = report.to_json();
    let reparsed = SessionReport::from_json(&text)
        .map_err(|e| HarnessError::Invariant(format!("report does not parse back: {e}")))?;
    if reparsed.to_json() != text {
        return fail("report JSON is not byte-stable".into());
    }
    Ok(())
}

pub(crate) fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| HarnessError::io(path, e))
}

/// What `run` produced.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub runs: Vec<(PathBuf, PathBuf, SessionReport)>,
    pub sweep: Option<PathBuf>,
    /// Pooled disclosed-bit tally over all repetitions.
    pub pooled: QberTally,
    pub lines: Vec<String>,
}

pub fn run_config(config: &RunConfig) -> Result<RunOutcome> {
    let results: Vec<SessionArtifacts> = (0..config.repetitions)
        .into_par_iter()
        .map(|i| execute(config, i))
        .collect::<Result<_>>()?;

    let mut outcome = RunOutcome {
        runs: Vec::new(),
        sweep: None,
        pooled: QberTally::default(),
        lines: Vec::new(),
    };
    for (i, art) in (0u32..).zip(results) {
        check_report(&art.report, config.qber_threshold)?;
        let (tp, rp) = config.output_paths(i);
        write_file(&tp, &art.transcript)?;
        write_file(&rp, &art.report.to_json())?;
        let r = &art.report;
        outcome.pooled = outcome.pooled.merge(QberTally {
            disclosed: r.disclosed_count,
            errors: (r.qber_overall * r.disclosed_count as f64).round() as usize,
        });
        outcome.lines.push(if config.repetitions == 1 {
            r.summary()
        } else {
            format!("rep {i}: {}", r.summary())
        });
        outcome.runs.push((tp, rp, art.report));
    }
    if config.repetitions > 1 {
        outcome.lines.push(format!(
            "pooled: disclosed={} qber={:.6}",
            outcome.pooled.disclosed,
            outcome.pooled.rate().unwrap_or(0.0)
        ));
    }
    if let Some(spec) = &config.sweep {
        let result = cmd_sweep(&spec.layout, spec.points, &spec.path)?;
        outcome.lines.push(format!(
            "sweep {} ({} points) -> {}",
            result.layout,
            result.points,
            spec.path.display()
        ));
        outcome.sweep = Some(spec.path.clone());
    }
    Ok(outcome)
}

/// Loads the config at `path`, runs it and writes every output file.
pub fn cmd_run(path: &Path) -> Result<RunOutcome> {
    run_config(&RunConfig::load(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_defaults() {
        let c = RunConfig::from_json(r#"{"rounds": 1000, "backend": "CIRCUIT", "attack": "NONE", "seed": 42}"#)
            .unwrap();
        assert_eq!(c.protocol, ProtocolKind::Eraser);
        assert_eq!(c.disclose_fraction, DEFAULT_DISCLOSE_FRACTION);
        assert_eq!(c.repetitions, 1);
        assert_eq!(c.session_config(0).bob_eraser_policy, EraserPolicy::uniform_circuit());
    }

    #[test]
    fn config_errors_name_the_field() {
        let e = RunConfig::from_json(r#"{"rounds": 10, "seed": 1, "attack": "INTERCEPT_Q"}"#).unwrap_err();
        assert!(e.to_string().contains("attack"), "{e}");
        assert_eq!(e.exit_code(), 2);
        let e = RunConfig::from_json(r#"{"rounds": 10, "seed": 1, "colour": 3}"#).unwrap_err();
        assert!(e.to_string().contains("colour"), "{e}");
        let e = RunConfig::from_json("{\n  \"rounds\": \"many\",\n  \"seed\": 1\n}").unwrap_err();
        assert!(e.to_string().contains("rounds") && e.to_string().contains("line 2"), "{e}");
        let e = RunConfig::from_json(r#"{"rounds": 10, "seed": 1, "repetitions": 0}"#).unwrap_err();
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn config_round_trips() {
        let c = RunConfig::from_json(
            r#"{"protocol":"bb84","rounds":50,"seed":3,"attack":"intercept_z(q)","sweep":{"layout":"bare_mzi","points":4,"path":"s.json"}}"#,
        )
        .unwrap();
        let back = RunConfig::from_json(&c.to_json()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_json(), c.to_json());
    }

    #[test]
    fn repetition_paths() {
        let mut c = RunConfig::from_json(r#"{"rounds": 10, "seed": 1}"#).unwrap();
        assert_eq!(c.output_paths(3).1, PathBuf::from("report.json"));
        c.repetitions = 2;
        assert_eq!(c.output_paths(1).1, PathBuf::from("report.rep1.json"));
        assert_eq!(c.output_paths(0).0, PathBuf::from("transcript.rep0.jsonl"));
    }
}
