//! Alice and Bob: state preparation, eraser measurement, decoding, sifting and
//! error-rate estimation.
//!
//! On the circuit backend Alice sends the path qubit `Q` (qubit 0) and the flag
//! qubit `F` (qubit 1). On the photonic backend she sends the two outputs of
//! her second beam splitter and Bob appends his optics.

pub mod bb84;
mod session;

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::photonic::{self, BobOptics, OpticsError, PolTag, WpiKind};
use crate::statevec::{self, Gate, PureState, StateError};

pub use session::{
    run_session, sifting_announcements, Backend, EraserPolicy, QberTally, SessionConfig,
    SessionOutput, SessionReport, DEFAULT_DISCLOSE_FRACTION, DEFAULT_QBER_THRESHOLD,
};

/// Path qubit.
pub const Q: usize = 0;
/// Flag qubit carrying which-path information.
pub const F: usize = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error(transparent)]
    State(#[from] StateError),
    #[error(transparent)]
    Optics(#[from] OpticsError),
    #[error("eraser {eraser} cannot be used with the {backend} backend")]
    BackendMismatch { eraser: Eraser, backend: &'static str },
    #[error("announcement lists differ: {alice} Alice entries, {bob} Bob entries")]
    LengthMismatch { alice: usize, bob: usize },
    #[error("announcements for round {alice} and {bob} are paired at the same position")]
    RoundMismatch { alice: u64, bob: u64 },
    #[error("no disclosed positions to estimate the error rate from")]
    EmptyDisclosure,
    #[error("disclosed round {0} is not a sifted round")]
    UnknownRound(u64),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("no rounds survived sifting, nothing to disclose")]
    NothingSifted,
    #[error("unknown eraser `{0}`")]
    UnknownEraser(String),
}

pub type Result<T> = std::result::Result<T, ProtocolError>;

/// Alice's private choices for one round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AliceSettings {
    /// Logical bit: Z gate (φ = π) iff 1.
    pub bit: u8,
    /// Which-path information inserted.
    pub wpi: bool,
    /// Value of `F` when `wpi` is off; ignored otherwise.
    pub flag_fill: u8,
}

impl AliceSettings {
    pub fn new(bit: u8, wpi: bool, flag_fill: u8) -> Self {
        Self {
            bit: bit & 1,
            wpi,
            flag_fill: flag_fill & 1,
        }
    }

    /// Interferometer phase encoding the bit.
    pub fn phi(&self) -> f64 {
        if self.bit == 1 {
            PI
        } else {
            0.0
        }
    }
}

/// Bob's measurement setting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(into = "String")]
pub enum Eraser {
    None,
    CircuitA,
    CircuitB,
    PhotonicTimebin,
    PhotonicPbs,
    PhotonicAbsorb,
}

impl Eraser {
    pub const ALL: [Eraser; 6] = [
        Eraser::None,
        Eraser::CircuitA,
        Eraser::CircuitB,
        Eraser::PhotonicTimebin,
        Eraser::PhotonicPbs,
        Eraser::PhotonicAbsorb,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Eraser::None => "NONE",
            Eraser::CircuitA => "CIRCUIT_A",
            Eraser::CircuitB => "CIRCUIT_B",
            Eraser::PhotonicTimebin => "PHOTONIC_TIMEBIN",
            Eraser::PhotonicPbs => "PHOTONIC_PBS",
            Eraser::PhotonicAbsorb => "PHOTONIC_ABSORB",
        }
    }

    pub fn is_circuit(self) -> bool {
        matches!(self, Eraser::None | Eraser::CircuitA | Eraser::CircuitB)
    }

    pub fn is_photonic(self) -> bool {
        !matches!(self, Eraser::CircuitA | Eraser::CircuitB)
    }

    /// Gates Bob applies before measuring both qubits.
    pub fn circuit_gates(self) -> Result<Vec<Gate>> {
        match self {
            Eraser::None => Ok(vec![]),
            Eraser::CircuitA => Ok(vec![Gate::H(F)]),
            Eraser::CircuitB => Ok(vec![Gate::cnot(Q, F), Gate::H(Q)]),
            other => Err(ProtocolError::BackendMismatch {
                eraser: other,
                backend: "circuit",
            }),
        }
    }

    pub fn optics(self) -> Result<BobOptics> {
        match self {
            Eraser::None => Ok(BobOptics::Direct),
            Eraser::PhotonicTimebin => Ok(BobOptics::TimeBinEraser),
            Eraser::PhotonicPbs => Ok(BobOptics::PbsEraser),
            Eraser::PhotonicAbsorb => Ok(BobOptics::AbsorbEraser),
            other => Err(ProtocolError::BackendMismatch {
                eraser: other,
                backend: "photonic",
            }),
        }
    }

    /// Which-path tagging this eraser undoes, if it is a photonic eraser.
    pub fn wpi_kind(self) -> Option<WpiKind> {
        match self {
            Eraser::PhotonicTimebin => Some(WpiKind::TimeBin),
            Eraser::PhotonicPbs | Eraser::PhotonicAbsorb => Some(WpiKind::Polarization),
            _ => None,
        }
    }
}

impl fmt::Display for Eraser {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Eraser {
    type Err = ProtocolError;

    fn from_str(s: &str) -> Result<Self> {
        let wanted = s.trim();
        Eraser::ALL
            .into_iter()
            .find(|e| e.name().eq_ignore_ascii_case(wanted))
            .ok_or_else(|| ProtocolError::UnknownEraser(s.to_string()))
    }
}

impl<'de> Deserialize<'de> for Eraser {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        crate::json::deserialize_from_str(d)
    }
}

impl From<Eraser> for String {
    fn from(e: Eraser) -> String {
        e.name().to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BobSettings {
    pub eraser: Eraser,
}

/// What Bob's detectors reported.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Outcomes {
    /// Z-basis results for `(Q, F)`.
    Qubits([u8; 2]),
    /// Detector click and arrival bin; both `None` when the photon was absorbed.
    Photon {
        detector: Option<String>,
        time_bin: Option<u32>,
    },
}

impl Outcomes {
    pub fn click(detector: &str, time_bin: u32) -> Self {
        Outcomes::Photon {
            detector: Some(detector.to_string()),
            time_bin: Some(time_bin),
        }
    }

    pub fn absorbed() -> Self {
        Outcomes::Photon {
            detector: None,
            time_bin: None,
        }
    }
}

/// One round as written to the transcript.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoundRecord {
    pub round_id: u64,
    pub alice_bit: u8,
    pub alice_wpi: bool,
    /// `None` when WPI was on and the flag carried no chosen value.
    pub flag_fill: Option<u8>,
    pub bob_eraser: Eraser,
    pub outcomes: Outcomes,
    pub registered: bool,
    /// Bob's bit, present exactly for sifted rounds.
    pub decoded: Option<u8>,
    pub sifted: bool,
    pub disclosed: bool,
}

impl RoundRecord {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("round record serializes")
    }

    pub fn from_json_line(line: &str) -> serde_json::Result<Self> {
        serde_json::from_str(line)
    }
}

/// Renders a transcript as line-delimited JSON, one record per line.
pub fn transcript_to_jsonl(records: &[RoundRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&r.to_json_line());
        out.push('\n');
    }
    out
}

/// Parses line-delimited JSON, skipping blank lines. Errors carry the 1-based
/// line number.
pub fn parse_transcript(text: &str) -> std::result::Result<Vec<RoundRecord>, (usize, serde_json::Error)> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| RoundRecord::from_json_line(l).map_err(|e| (i + 1, e)))
        .collect()
}

/// Alice's two-qubit state:
/// `|00⟩ → [X(F) if wpi off ∧ fill] → H(Q) → [CNOT(Q→F) if wpi] → [Z(Q) if bit] → H(Q)`.
pub fn alice_prepare_circuit(settings: AliceSettings) -> Result<PureState> {
    let mut state = PureState::zero(2)?;
    state.apply_all(&alice_gates(settings))?;
    Ok(state)
}

/// The gate sequence behind [`alice_prepare_circuit`].
pub fn alice_gates(settings: AliceSettings) -> Vec<Gate> {
    let mut gates = Vec::with_capacity(5);
    if !settings.wpi && settings.flag_fill == 1 {
        gates.push(Gate::X(F));
    }
    gates.push(Gate::H(Q));
    if settings.wpi {
        gates.push(Gate::cnot(Q, F));
    }
    if settings.bit == 1 {
        gates.push(Gate::Z(Q));
    }
    gates.push(Gate::H(Q));
    gates
}

/// The state directly before Bob's Z-basis measurements.
pub fn bob_pre_measurement(state: &PureState, eraser: Eraser) -> Result<PureState> {
    let mut s = state.clone();
    s.apply_all(&eraser.circuit_gates()?)?;
    Ok(s)
}

/// Bob's detector readings for one round.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Measurement {
    pub outcomes: Outcomes,
    pub registered: bool,
}

/// Applies Bob's eraser circuit and measures `Q` then `F`.
pub fn bob_measure_circuit<R: Rng + ?Sized>(
    state: &PureState,
    settings: BobSettings,
    rng: &mut R,
) -> Result<Measurement> {
    let pre = bob_pre_measurement(state, settings.eraser)?;
    let (bits, _) = statevec::measure_all(&pre, &[Q, F], rng)?;
    Ok(Measurement {
        outcomes: Outcomes::Qubits([bits[0], bits[1]]),
        registered: true,
    })
}

/// Source polarization used for a photonic session with the given tagging.
pub fn photonic_source(kind: WpiKind) -> PolTag {
    match kind {
        WpiKind::Polarization => PolTag::H,
        WpiKind::TimeBin => PolTag::None,
    }
}

/// Exact detection statistics for one photonic round.
pub fn photonic_distribution(
    alice: AliceSettings,
    bob: BobSettings,
    kind: WpiKind,
) -> Result<photonic::DetectionDistribution> {
    let mut elements = photonic::alice_optics(alice.wpi.then_some(kind), alice.phi());
    elements.extend(photonic::bob_optics(bob.eraser.optics()?));
    let state = elements.iter().try_fold(
        photonic::PhotonState::source(photonic_source(kind)),
        |s, e| photonic::propagate(&s, e),
    )?;
    Ok(photonic::detect(&state))
}

/// Samples one photon detection for the round.
pub fn bob_measure_photonic<R: Rng + ?Sized>(
    alice: AliceSettings,
    bob: BobSettings,
    kind: WpiKind,
    rng: &mut R,
) -> Result<Measurement> {
    let dist = photonic_distribution(alice, bob, kind)?;
    let r: f64 = rng.random();
    let mut acc = 0.0;
    let mut outcomes = Outcomes::absorbed();
    for ((detector, t), p) in &dist.entries {
        acc += p;
        if r < acc {
            outcomes = Outcomes::click(detector, *t);
            break;
        }
    }
    let registered = photonic_registered(bob.eraser, &outcomes);
    Ok(Measurement {
        outcomes,
        registered,
    })
}

/// Whether Bob announces the photon as successfully registered: it clicked
/// and, for the time-bin eraser, arrived in the interfering bin `t = T`.
pub fn photonic_registered(eraser: Eraser, outcomes: &Outcomes) -> bool {
    match outcomes {
        Outcomes::Photon {
            detector: Some(_),
            time_bin: Some(t),
        } => eraser != Eraser::PhotonicTimebin || *t == 1,
        Outcomes::Photon { .. } => false,
        Outcomes::Qubits(_) => true,
    }
}

/// Bob's bit for the round, or `None` if the readings carry no bit.
///
/// `CIRCUIT_A` reads 1 when `Q` and `F` differ, `CIRCUIT_B` when they agree.
/// With the polarizing-splitter eraser D1/D4 mean 0 and D2/D3 mean 1; other
/// photonic settings read D1 as 0 and D2 as 1.
pub fn bob_decode(settings: BobSettings, outcomes: &Outcomes, registered: bool) -> Option<u8> {
    if !registered {
        return None;
    }
    match (settings.eraser, outcomes) {
        (Eraser::None, Outcomes::Qubits([q, _])) => Some(*q),
        (Eraser::CircuitA, Outcomes::Qubits([q, f])) => Some((q != f) as u8),
        (Eraser::CircuitB, Outcomes::Qubits([q, f])) => Some((q == f) as u8),
        (eraser, Outcomes::Photon { detector: Some(d), .. }) => match (eraser, d.as_str()) {
            (Eraser::PhotonicPbs, "D1" | "D4") => Some(0),
            (Eraser::PhotonicPbs, "D2" | "D3") => Some(1),
            (Eraser::PhotonicPbs, _) => None,
            (_, "D1") => Some(0),
            (_, "D2") => Some(1),
            _ => None,
        },
        _ => None,
    }
}

/// What Alice reveals after the exchange.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AliceAnnouncement {
    pub round_id: u64,
    pub wpi: bool,
}

/// What Bob reveals after the exchange.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BobAnnouncement {
    pub round_id: u64,
    pub eraser: Eraser,
    pub registered: bool,
}

/// True for the two valid modes: WPI with a registered erasure, or neither.
pub fn is_valid_mode(wpi: bool, eraser: Eraser, registered: bool) -> bool {
    (wpi && eraser != Eraser::None && registered) || (!wpi && eraser == Eraser::None)
}

/// Round ids kept after comparing public announcements, in input order.
pub fn sift(alice: &[AliceAnnouncement], bob: &[BobAnnouncement]) -> Result<Vec<u64>> {
    if alice.len() != bob.len() {
        return Err(ProtocolError::LengthMismatch {
            alice: alice.len(),
            bob: bob.len(),
        });
    }
    let mut kept = Vec::new();
    for (a, b) in alice.iter().zip(bob) {
        if a.round_id != b.round_id {
            return Err(ProtocolError::RoundMismatch {
                alice: a.round_id,
                bob: b.round_id,
            });
        }
        if is_valid_mode(a.wpi, b.eraser, b.registered) {
            kept.push(a.round_id);
        }
    }
    Ok(kept)
}

/// Fraction of disclosed rounds where Alice's and Bob's bits differ.
pub fn estimate_qber(
    alice_bits: &BTreeMap<u64, u8>,
    bob_bits: &BTreeMap<u64, u8>,
    disclosed: &[u64],
) -> Result<f64> {
    if disclosed.is_empty() {
        return Err(ProtocolError::EmptyDisclosure);
    }
    let mut errors = 0usize;
    for id in disclosed {
        let a = alice_bits.get(id).ok_or(ProtocolError::UnknownRound(*id))?;
        let b = bob_bits.get(id).ok_or(ProtocolError::UnknownRound(*id))?;
        if a != b {
            errors += 1;
        }
    }
    Ok(errors as f64 / disclosed.len() as f64)
}
