//! Single-qubit BB84 baseline with the same sifting, disclosure and report
//! pipeline as the eraser protocol.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::session::{choose_disclosed, QberTally};
use super::{estimate_qber, ProtocolError, Result, SessionConfig, SessionReport};
use crate::adversary::{apply_attack, AttackStrategy, InterceptTarget};
use crate::rng::substream;
use crate::statevec::{measure, overlap, Gate, PureState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Basis {
    Rectilinear,
    Diagonal,
}

impl Basis {
    pub fn name(self) -> &'static str {
        match self {
            Basis::Rectilinear => "rectilinear",
            Basis::Diagonal => "diagonal",
        }
    }

    fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        if rng.random_bool(0.5) {
            Basis::Diagonal
        } else {
            Basis::Rectilinear
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bb84Record {
    pub round_id: u64,
    pub alice_bit: u8,
    pub alice_basis: Basis,
    pub bob_basis: Basis,
    pub outcome: u8,
    pub sifted: bool,
    pub disclosed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bb84Output {
    pub report: SessionReport,
    pub transcript: Vec<Bb84Record>,
}

/// `|0⟩`/`|1⟩` for the rectilinear basis, `|+⟩`/`|−⟩` for the diagonal one.
pub fn bb84_state(bit: u8, basis: Basis) -> PureState {
    let mut s = PureState::basis(1, (bit & 1) as usize).expect("one-qubit basis state");
    if basis == Basis::Diagonal {
        s.apply(&Gate::H(0)).expect("valid gate");
    }
    s
}

/// `|⟨0|+⟩|²`, the overlap between states of the two bases.
pub fn basis_overlap() -> f64 {
    overlap(&bb84_state(0, Basis::Rectilinear), &bb84_state(0, Basis::Diagonal))
        .expect("same register")
}

fn check_attack(attack: AttackStrategy) -> Result<()> {
    match attack {
        AttackStrategy::None | AttackStrategy::InterceptZ(InterceptTarget::Q) => Ok(()),
        other => Err(ProtocolError::Config(format!(
            "BB84 has a single qubit; supported attacks are NONE and INTERCEPT_Z(Q), got {other}"
        ))),
    }
}

/// Runs BB84 rounds and reports on the basis-matched key.
///
/// Only `rounds`, `attack`, `seed`, `disclose_fraction` and `qber_threshold`
/// are read from the config.
pub fn bb84_session(config: &SessionConfig) -> Result<Bb84Output> {
    config.validate_common()?;
    check_attack(config.attack)?;

    let mut rows = Vec::with_capacity(config.rounds as usize);
    for round_id in 0..config.rounds {
        let mut rng = substream(config.seed, round_id);
        let bit = rng.random_range(0..2u8);
        let alice_basis = Basis::random(&mut rng);
        let bob_basis = Basis::random(&mut rng);
        let sent = bb84_state(bit, alice_basis);
        let mut received = apply_attack(&sent, config.attack, &mut rng)?.disturbed_state;
        if bob_basis == Basis::Diagonal {
            received.apply(&Gate::H(0))?;
        }
        let (outcome, _) = measure(&received, 0, &mut rng)?;
        rows.push(Bb84Record {
            round_id,
            alice_bit: bit,
            alice_basis,
            bob_basis,
            outcome,
            sifted: alice_basis == bob_basis,
            disclosed: false,
        });
    }

    let sifted: Vec<u64> = rows.iter().filter(|r| r.sifted).map(|r| r.round_id).collect();
    if sifted.is_empty() {
        return Err(ProtocolError::NothingSifted);
    }
    let positions = choose_disclosed(config.seed, sifted.len(), config.disclose_fraction);
    let disclosed: Vec<u64> = positions.iter().map(|&i| sifted[i]).collect();
    for id in &disclosed {
        rows[*id as usize].disclosed = true;
    }

    let alice_bits: BTreeMap<u64, u8> = sifted.iter().map(|&id| (id, rows[id as usize].alice_bit)).collect();
    let bob_bits: BTreeMap<u64, u8> = sifted.iter().map(|&id| (id, rows[id as usize].outcome)).collect();
    let qber_overall = estimate_qber(&alice_bits, &bob_bits, &disclosed)?;

    let mut by_mode: BTreeMap<String, QberTally> = BTreeMap::new();
    for &id in &disclosed {
        let r = &rows[id as usize];
        by_mode
            .entry(r.alice_basis.name().to_string())
            .or_default()
            .record(r.alice_bit != r.outcome);
    }

    let final_key = sifted
        .iter()
        .map(|&id| &rows[id as usize])
        .filter(|r| !r.disclosed)
        .map(|r| if r.alice_bit == 1 { '1' } else { '0' })
        .collect();

    let report = SessionReport {
        sifted_length: sifted.len(),
        sift_ratio: sifted.len() as f64 / config.rounds as f64,
        disclosed_count: disclosed.len(),
        qber_overall,
        qber_by_mode: by_mode
            .into_iter()
            .filter_map(|(k, t)| t.rate().map(|r| (k, r)))
            .collect(),
        eve_detected: qber_overall > config.qber_threshold,
        final_key,
    };
    Ok(Bb84Output {
        report,
        transcript: rows,
    })
}
