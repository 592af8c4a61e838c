//! Intercept-resend eavesdroppers on the circuit channel, and an exact oracle
//! for the error rate each one induces.
//!
//! The oracle never samples. It expands Evan's measurement into its Born
//! branches, pushes each branch through Bob's eraser and enumerates Bob's
//! outcomes. The sampling path ([`apply_attack`] inside a session) shares only
//! the gate definitions with it.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use num_rational::Ratio;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::json;
use crate::protocol::{
    self, alice_prepare_circuit, bob_decode, bob_pre_measurement, AliceSettings, BobSettings,
    Eraser, EraserPolicy, Outcomes, ProtocolError, F, Q,
};
use crate::statevec::{self, branch_enumerate, PureState};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("unknown attack strategy `{0}` (expected NONE, INTERCEPT_Z(Q|F|BOTH) or INTERCEPT_ERASER(A|B))")]
pub struct ParseAttackError(pub String);

/// Qubits Evan measures in the Z basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum InterceptTarget {
    Q,
    F,
    Both,
}

impl InterceptTarget {
    pub fn qubits(self) -> &'static [usize] {
        match self {
            InterceptTarget::Q => &[Q],
            InterceptTarget::F => &[F],
            InterceptTarget::Both => &[Q, F],
        }
    }
}

/// Which of Bob's eraser circuits Evan borrows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EraserVariant {
    A,
    B,
}

impl EraserVariant {
    pub fn eraser(self) -> Eraser {
        match self {
            EraserVariant::A => Eraser::CircuitA,
            EraserVariant::B => Eraser::CircuitB,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize)]
#[serde(into = "String")]
pub enum AttackStrategy {
    #[default]
    None,
    /// Measure the targeted qubits in Z and forward the collapsed state.
    InterceptZ(InterceptTarget),
    /// Run Bob's eraser, decode a guess, then resend Alice's WPI state for it.
    InterceptEraser(EraserVariant),
}

impl AttackStrategy {
    pub const ALL: [AttackStrategy; 6] = [
        AttackStrategy::None,
        AttackStrategy::InterceptZ(InterceptTarget::Q),
        AttackStrategy::InterceptZ(InterceptTarget::F),
        AttackStrategy::InterceptZ(InterceptTarget::Both),
        AttackStrategy::InterceptEraser(EraserVariant::A),
        AttackStrategy::InterceptEraser(EraserVariant::B),
    ];
}

impl fmt::Display for AttackStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AttackStrategy::None => f.write_str("NONE"),
            AttackStrategy::InterceptZ(t) => {
                let t = match t {
                    InterceptTarget::Q => "Q",
                    InterceptTarget::F => "F",
                    InterceptTarget::Both => "BOTH",
                };
                write!(f, "INTERCEPT_Z({t})")
            }
            AttackStrategy::InterceptEraser(v) => {
                let v = match v {
                    EraserVariant::A => "A",
                    EraserVariant::B => "B",
                };
                write!(f, "INTERCEPT_ERASER({v})")
            }
        }
    }
}

impl FromStr for AttackStrategy {
    type Err = ParseAttackError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm: String = s
            .chars()
            .filter(|c| !c.is_whitespace())
            .collect::<String>()
            .to_ascii_uppercase();
        let strategy = match norm.as_str() {
            "NONE" => AttackStrategy::None,
            "INTERCEPT_Z(Q)" => AttackStrategy::InterceptZ(InterceptTarget::Q),
            "INTERCEPT_Z(F)" => AttackStrategy::InterceptZ(InterceptTarget::F),
            "INTERCEPT_Z(BOTH)" => AttackStrategy::InterceptZ(InterceptTarget::Both),
            "INTERCEPT_ERASER(A)" => AttackStrategy::InterceptEraser(EraserVariant::A),
            "INTERCEPT_ERASER(B)" => AttackStrategy::InterceptEraser(EraserVariant::B),
            _ => return Err(ParseAttackError(s.to_string())),
        };
        Ok(strategy)
    }
}

impl<'de> Deserialize<'de> for AttackStrategy {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        crate::json::deserialize_from_str(d)
    }
}

impl From<AttackStrategy> for String {
    fn from(a: AttackStrategy) -> String {
        a.to_string()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackOutcome {
    /// Evan's reading of Alice's bit, when his measurement yields one.
    pub evan_guess: Option<u8>,
    /// What Evan forwards to Bob.
    pub disturbed_state: PureState,
}

fn eraser_guess(eraser: Eraser, outcome: &[u8]) -> Option<u8> {
    bob_decode(
        BobSettings { eraser },
        &Outcomes::Qubits([outcome[0], outcome[1]]),
        true,
    )
}

fn resend(guess: u8) -> protocol::Result<PureState> {
    alice_prepare_circuit(AliceSettings::new(guess, true, 0))
}

/// Samples Evan's action on one in-flight two-qubit state.
pub fn apply_attack<R: Rng + ?Sized>(
    state: &PureState,
    strategy: AttackStrategy,
    rng: &mut R,
) -> protocol::Result<AttackOutcome> {
    match strategy {
        AttackStrategy::None => Ok(AttackOutcome {
            evan_guess: None,
            disturbed_state: state.clone(),
        }),
        AttackStrategy::InterceptZ(target) => {
            let qubits = target.qubits();
            let (bits, collapsed) = statevec::measure_all(state, qubits, rng)?;
            Ok(AttackOutcome {
                evan_guess: (qubits[0] == Q).then_some(bits[0]),
                disturbed_state: collapsed,
            })
        }
        AttackStrategy::InterceptEraser(variant) => {
            let pre = bob_pre_measurement(state, variant.eraser())?;
            let (bits, _) = statevec::measure_all(&pre, &[Q, F], rng)?;
            let guess = eraser_guess(variant.eraser(), &bits).expect("circuit eraser decodes");
            Ok(AttackOutcome {
                evan_guess: Some(guess),
                disturbed_state: resend(guess)?,
            })
        }
    }
}

/// Every outcome of Evan's action with its exact probability.
pub fn attack_branches(
    state: &PureState,
    strategy: AttackStrategy,
) -> protocol::Result<Vec<(f64, AttackOutcome)>> {
    match strategy {
        AttackStrategy::None => Ok(vec![(
            1.0,
            AttackOutcome {
                evan_guess: None,
                disturbed_state: state.clone(),
            },
        )]),
        AttackStrategy::InterceptZ(target) => {
            let qubits = target.qubits();
            Ok(branch_enumerate(state, qubits)?
                .into_iter()
                .map(|b| {
                    (
                        b.probability,
                        AttackOutcome {
                            evan_guess: (qubits[0] == Q).then_some(b.outcome[0]),
                            disturbed_state: b.collapsed,
                        },
                    )
                })
                .collect())
        }
        AttackStrategy::InterceptEraser(variant) => {
            let pre = bob_pre_measurement(state, variant.eraser())?;
            branch_enumerate(&pre, &[Q, F])?
                .into_iter()
                .map(|b| {
                    let guess = eraser_guess(variant.eraser(), &b.outcome).expect("circuit eraser decodes");
                    Ok((
                        b.probability,
                        AttackOutcome {
                            evan_guess: Some(guess),
                            disturbed_state: resend(guess)?,
                        },
                    ))
                })
                .collect()
        }
    }
}

/// A probability computed by exhaustive enumeration, with the small-denominator
/// fraction it equals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExactProbability {
    pub value: f64,
    pub fraction: Ratio<u64>,
}

impl ExactProbability {
    pub fn new(value: f64) -> Self {
        Self {
            value,
            fraction: snap_fraction(value),
        }
    }
}

impl Serialize for ExactProbability {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Repr {
            #[serde(serialize_with = "json::f64_12")]
            value: f64,
            fraction: String,
        }
        Repr {
            value: self.value,
            fraction: self.fraction.to_string(),
        }
        .serialize(s)
    }
}

/// Nearest fraction with denominator up to 2¹⁶ that matches `x` to 1e-9.
pub fn snap_fraction(x: f64) -> Ratio<u64> {
    let x = x.clamp(0.0, 1.0);
    for d in 1u64..=(1 << 16) {
        let n = (x * d as f64).round();
        if (x - n / d as f64).abs() < 1e-9 {
            return Ratio::new(n as u64, d);
        }
    }
    Ratio::new((x * 1e9).round() as u64, 1_000_000_000)
}

/// Sifted-mode label: `wpi_eraser` when Bob erased, `no_wpi_no_eraser` otherwise.
pub fn mode_name(eraser: Eraser) -> &'static str {
    if eraser == Eraser::None {
        "no_wpi_no_eraser"
    } else {
        "wpi_eraser"
    }
}

/// Exact probability that Bob's decoded bit differs from Alice's in a sifted
/// round of the mode selected by `eraser`, given Alice's bit.
///
/// With `eraser = NONE` the round is in the no-WPI mode and the flag fill is
/// averaged over both values.
pub fn exact_mode_qber(
    strategy: AttackStrategy,
    alice_bit: u8,
    eraser: Eraser,
) -> protocol::Result<ExactProbability> {
    if !matches!(eraser, Eraser::None | Eraser::CircuitA | Eraser::CircuitB) {
        return Err(ProtocolError::BackendMismatch {
            eraser,
            backend: "circuit",
        });
    }
    let wpi = eraser != Eraser::None;
    let fills: &[u8] = if wpi { &[0] } else { &[0, 1] };
    let bob = BobSettings { eraser };
    let mut valid = 0.0;
    let mut wrong = 0.0;
    for &fill in fills {
        let weight = 1.0 / fills.len() as f64;
        let sent = alice_prepare_circuit(AliceSettings::new(alice_bit, wpi, fill))?;
        for (p_evan, outcome) in attack_branches(&sent, strategy)? {
            let pre = bob_pre_measurement(&outcome.disturbed_state, eraser)?;
            for b in branch_enumerate(&pre, &[Q, F])? {
                let registered = true;
                if !protocol::is_valid_mode(wpi, eraser, registered) {
                    continue;
                }
                let p = weight * p_evan * b.probability;
                valid += p;
                let decoded = bob_decode(bob, &Outcomes::Qubits([b.outcome[0], b.outcome[1]]), registered);
                if decoded != Some(alice_bit) {
                    wrong += p;
                }
            }
        }
    }
    Ok(ExactProbability::new(if valid > 0.0 { wrong / valid } else { 0.0 }))
}

/// Exact error rate over the whole sifted key: half from the no-WPI mode, half
/// from the WPI/eraser mode split by `policy`, Alice's bit uniform.
pub fn overall_qber(
    strategy: AttackStrategy,
    policy: &EraserPolicy,
) -> protocol::Result<ExactProbability> {
    let bit_avg = |eraser| -> protocol::Result<f64> {
        Ok(0.5 * (exact_mode_qber(strategy, 0, eraser)?.value + exact_mode_qber(strategy, 1, eraser)?.value))
    };
    let total: f64 = policy.weights().values().sum();
    let mut erased = 0.0;
    for (eraser, w) in policy.weights() {
        erased += w / total * bit_avg(*eraser)?;
    }
    Ok(ExactProbability::new(0.5 * bit_avg(Eraser::None)? + 0.5 * erased))
}

/// One `(strategy, eraser, bit)` cell of the oracle table.
#[derive(Debug, Clone, Serialize)]
pub struct ModeQberRow {
    pub strategy: AttackStrategy,
    pub eraser_variant: Eraser,
    pub mode: &'static str,
    pub alice_bit: u8,
    pub qber: ExactProbability,
}

#[derive(Debug, Clone, Serialize)]
pub struct OverallQberRow {
    pub strategy: AttackStrategy,
    pub policy: String,
    pub qber: ExactProbability,
    /// The overall rate equals one quarter.
    pub matches_quarter: bool,
}

/// The complete exact table for every strategy on the circuit backend.
#[derive(Debug, Clone, Serialize)]
pub struct QberTable {
    pub per_mode: Vec<ModeQberRow>,
    pub overall: Vec<OverallQberRow>,
}

/// Eraser policies the table reports overall rates for.
pub fn table_policies() -> Vec<(&'static str, EraserPolicy)> {
    vec![
        ("CIRCUIT_A", EraserPolicy::single(Eraser::CircuitA)),
        ("CIRCUIT_B", EraserPolicy::single(Eraser::CircuitB)),
        ("UNIFORM(CIRCUIT_A,CIRCUIT_B)", EraserPolicy::uniform_circuit()),
    ]
}

pub fn qber_table() -> protocol::Result<QberTable> {
    let mut per_mode = Vec::new();
    let mut overall = Vec::new();
    for strategy in AttackStrategy::ALL {
        for eraser in [Eraser::None, Eraser::CircuitA, Eraser::CircuitB] {
            for bit in 0..2 {
                per_mode.push(ModeQberRow {
                    strategy,
                    eraser_variant: eraser,
                    mode: mode_name(eraser),
                    alice_bit: bit,
                    qber: exact_mode_qber(strategy, bit, eraser)?,
                });
            }
        }
        for (name, policy) in table_policies() {
            let qber = overall_qber(strategy, &policy)?;
            overall.push(OverallQberRow {
                strategy,
                policy: name.to_string(),
                matches_quarter: qber.fraction == Ratio::new(1, 4),
                qber,
            });
        }
    }
    Ok(QberTable { per_mode, overall })
}

impl QberTable {
    /// Lookup by strategy and eraser, averaged over Alice's bit.
    pub fn mode_average(&self, strategy: AttackStrategy, eraser: Eraser) -> Option<f64> {
        let rows: Vec<f64> = self
            .per_mode
            .iter()
            .filter(|r| r.strategy == strategy && r.eraser_variant == eraser)
            .map(|r| r.qber.value)
            .collect();
        (!rows.is_empty()).then(|| rows.iter().sum::<f64>() / rows.len() as f64)
    }

    pub fn overall_for(&self, strategy: AttackStrategy, policy: &str) -> Option<ExactProbability> {
        self.overall
            .iter()
            .find(|r| r.strategy == strategy && r.policy == policy)
            .map(|r| r.qber)
    }

    /// Strategies whose overall rate under the uniform policy is one quarter.
    pub fn quarter_strategies(&self) -> BTreeMap<AttackStrategy, bool> {
        self.overall
            .iter()
            .filter(|r| r.policy.starts_with("UNIFORM"))
            .map(|r| (r.strategy, r.matches_quarter))
            .collect()
    }
}
