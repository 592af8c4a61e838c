use std::path::Path;

use num_rational::Ratio;
use serde::Serialize;

use super::{write_file, Result};
use crate::adversary::{qber_table, AttackStrategy, ExactProbability, ModeQberRow, OverallQberRow};
use crate::json;
use crate::protocol::bb84::basis_overlap;
use crate::protocol::{alice_prepare_circuit, AliceSettings, Eraser};
use crate::statevec::{overlap, PureState};

/// Exact error-rate table plus the two state-overlap figures.
#[derive(Debug, Clone, Serialize)]
pub struct OracleReport {
    pub per_mode: Vec<ModeQberRow>,
    pub overall: Vec<OverallQberRow>,
    /// `|⟨00|ψ⟩|²` for the bit-0 WPI channel state.
    pub channel_state_overlap: ExactProbability,
    /// `|⟨0|+⟩|²` between the two BB84 bases.
    pub bb84_basis_overlap: ExactProbability,
    /// Attack cells that depart from a flat one-quarter error rate.
    pub findings: Vec<String>,
}

impl OracleReport {
    pub fn to_json(&self) -> String {
        json::to_pretty(self).expect("oracle serializes")
    }
}

pub fn oracle_report() -> Result<OracleReport> {
    let table = qber_table()?;
    let wpi0 = alice_prepare_circuit(AliceSettings::new(0, true, 0))?;
    let zero = PureState::zero(2).expect("two qubits");
    let channel = overlap(&zero, &wpi0).expect("same register");

    let mut findings = Vec::new();
    for row in &table.overall {
        if row.strategy != AttackStrategy::None && !row.matches_quarter {
            findings.push(format!(
                "{} under {}: overall error rate {} ({}), not 1/4",
                row.strategy,
                row.policy,
                row.qber.fraction,
                json::round12(row.qber.value)
            ));
        }
    }
    for strategy in AttackStrategy::ALL.into_iter().filter(|s| *s != AttackStrategy::None) {
        for eraser in [Eraser::CircuitA, Eraser::CircuitB] {
            if table.mode_average(strategy, eraser) == Some(0.0) {
                findings.push(format!("{strategy} is invisible to {eraser} in the erased mode"));
            }
        }
    }
    for row in &table.per_mode {
        if row.strategy != AttackStrategy::None && row.qber.fraction > Ratio::new(1, 2) {
            findings.push(format!(
                "{} with {} and bit {} errs with rate {}",
                row.strategy, row.eraser_variant, row.alice_bit, row.qber.fraction
            ));
        }
    }

    Ok(OracleReport {
        per_mode: table.per_mode,
        overall: table.overall,
        channel_state_overlap: ExactProbability::new(channel),
        bb84_basis_overlap: ExactProbability::new(basis_overlap()),
        findings,
    })
}

/// Computes the oracle table and writes it to `out`.
pub fn cmd_oracle(out: &Path) -> Result<OracleReport> {
    let report = oracle_report()?;
    write_file(out, &report.to_json())?;
    Ok(report)
}
