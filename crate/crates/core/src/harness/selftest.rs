use std::f64::consts::{FRAC_1_SQRT_2, PI};

use num_complex::Complex64;
use serde::Serialize;

use super::Result;
use crate::adversary::{overall_qber, AttackStrategy, EraserVariant, InterceptTarget};
use crate::photonic::{build_layout, LayoutKind};
use crate::protocol::bb84::basis_overlap;
use crate::protocol::{
    alice_prepare_circuit, bob_decode, bob_pre_measurement, run_session, sift,
    sifting_announcements, transcript_to_jsonl, AliceSettings, Backend, BobSettings, Eraser,
    EraserPolicy, Outcomes, SessionConfig, F, Q,
};
use crate::statevec::{branch_enumerate, overlap, Gate, PureState};

use super::sweep::phi_grid;

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct SelftestReport {
    pub checks: Vec<Check>,
}

impl SelftestReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn lines(&self) -> Vec<String> {
        self.checks
            .iter()
            .map(|c| {
                format!(
                    "{} {}: {}",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.name,
                    c.detail
                )
            })
            .collect()
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

type Outcome = std::result::Result<String, String>;

fn ensure(cond: bool, ok: String, err: String) -> Outcome {
    if cond {
        Ok(ok)
    } else {
        Err(err)
    }
}

fn inner(a: &PureState, b: &PureState) -> Complex64 {
    a.amplitudes()
        .iter()
        .zip(b.amplitudes())
        .map(|(x, y)| x.conj() * y)
        .sum()
}

fn gate_unitarity() -> Outcome {
    let gates = [
        Gate::H(0),
        Gate::H(1),
        Gate::X(0),
        Gate::X(1),
        Gate::Z(0),
        Gate::Z(1),
        Gate::Phase(0, 0.37),
        Gate::Phase(1, -2.1),
        Gate::cnot(0, 1),
        Gate::cnot(1, 0),
    ];
    let mut worst: f64 = 0.0;
    for g in &gates {
        let cols: Vec<PureState> = (0..4)
            .map(|i| {
                let mut s = PureState::basis(2, i).map_err(|e| e.to_string())?;
                s.apply(g).map_err(|e| format!("{g}: {e}"))?;
                Ok(s)
            })
            .collect::<std::result::Result<_, String>>()?;
        for i in 0..4 {
            for j in 0..4 {
                let want = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((inner(&cols[i], &cols[j]) - want).norm());
            }
        }
    }
    ensure(
        worst <= 1e-12,
        format!("{} gates, max |U†U − I| = {worst:.1e}", gates.len()),
        format!("max |U†U − I| = {worst:.3e} exceeds 1e-12"),
    )
}

fn channel_states() -> Outcome {
    let h = FRAC_1_SQRT_2;
    let cases = [
        (1, Eraser::CircuitA, [0.0, h, h, 0.0], "(|01⟩+|10⟩)/√2"),
        (0, Eraser::CircuitA, [h, 0.0, 0.0, h], "(|00⟩+|11⟩)/√2"),
        (1, Eraser::CircuitB, [h, 0.0, 0.0, -h], "(|00⟩−|11⟩)/√2"),
        (0, Eraser::CircuitB, [0.0, h, h, 0.0], "(|10⟩+|01⟩)/√2"),
    ];
    let mut worst: f64 = 0.0;
    for (bit, eraser, amps, label) in cases {
        let sent = alice_prepare_circuit(AliceSettings::new(bit, true, 0)).map_err(|e| e.to_string())?;
        let pre = bob_pre_measurement(&sent, eraser).map_err(|e| e.to_string())?;
        let want = PureState::from_real(2, &amps).map_err(|e| e.to_string())?;
        let d = pre.distance_up_to_phase(&want).map_err(|e| e.to_string())?;
        if d > 1e-12 {
            return Err(format!("bit {bit} with {eraser}: got {pre}, want {label}"));
        }
        worst = worst.max(d);
    }
    Ok(format!("4 pre-measurement states, max distance {worst:.1e}"))
}

fn z_cnot_commute() -> Outcome {
    let raw = [0.1, 0.7, -0.5, 0.5];
    let n = raw.iter().map(|a| a * a).sum::<f64>().sqrt();
    let amps: Vec<f64> = raw.iter().map(|a| a / n).collect();
    let start = PureState::from_real(2, &amps).map_err(|e| e.to_string())?;
    let mut a = start.clone();
    a.apply_all(&[Gate::cnot(Q, F), Gate::Z(Q)]).map_err(|e| e.to_string())?;
    let mut b = start;
    b.apply_all(&[Gate::Z(Q), Gate::cnot(Q, F)]).map_err(|e| e.to_string())?;
    let d = a.distance(&b).map_err(|e| e.to_string())?;
    ensure(d <= 1e-12, format!("distance {d:.1e}"), format!("Z and CNOT differ by {d:.3e}"))
}

fn all_round_states() -> std::result::Result<Vec<(AliceSettings, Eraser, PureState)>, String> {
    let mut out = Vec::new();
    for bit in 0..2 {
        for wpi in [false, true] {
            for fill in 0..2 {
                let alice = AliceSettings::new(bit, wpi, fill);
                let sent = alice_prepare_circuit(alice).map_err(|e| e.to_string())?;
                for eraser in [Eraser::None, Eraser::CircuitA, Eraser::CircuitB] {
                    let pre = bob_pre_measurement(&sent, eraser).map_err(|e| e.to_string())?;
                    out.push((alice, eraser, pre));
                }
            }
        }
    }
    Ok(out)
}

fn branch_completeness() -> Outcome {
    let mut worst: f64 = 0.0;
    let states = all_round_states()?;
    for (_, _, pre) in &states {
        for qubits in [&[Q][..], &[F], &[Q, F]] {
            let total: f64 = branch_enumerate(pre, qubits)
                .map_err(|e| e.to_string())?
                .iter()
                .map(|b| b.probability)
                .sum();
            worst = worst.max((total - 1.0).abs());
        }
    }
    ensure(
        worst <= 1e-9,
        format!("{} states, max |Σp − 1| = {worst:.1e}", states.len()),
        format!("branch probabilities miss 1 by {worst:.3e}"),
    )
}

fn decode_correctness() -> Outcome {
    let mut cases = 0;
    for (alice, eraser, pre) in all_round_states()? {
        if !crate::protocol::is_valid_mode(alice.wpi, eraser, true) {
            continue;
        }
        cases += 1;
        for b in branch_enumerate(&pre, &[Q, F]).map_err(|e| e.to_string())? {
            let got = bob_decode(
                BobSettings { eraser },
                &Outcomes::Qubits([b.outcome[0], b.outcome[1]]),
                true,
            );
            if got != Some(alice.bit) {
                return Err(format!(
                    "bit {} wpi {} with {eraser}: outcome {:?} (p = {}) decodes to {got:?}",
                    alice.bit, alice.wpi, b.outcome, b.probability
                ));
            }
        }
    }
    Ok(format!("{cases} sifted circuit cases, every nonzero branch decodes to Alice's bit"))
}

fn discarded_mode_is_blind() -> Outcome {
    for bit in 0..2 {
        let sent = alice_prepare_circuit(AliceSettings::new(bit, true, 0)).map_err(|e| e.to_string())?;
        let p1 = sent.prob_one(Q).map_err(|e| e.to_string())?;
        if (p1 - 0.5).abs() > 1e-12 {
            return Err(format!("bit {bit}: P(Q = 1) = {p1} with WPI and no eraser"));
        }
    }
    Ok("P(Q = 1) = 1/2 for both bits".into())
}

fn overlaps() -> Outcome {
    let wpi0 = alice_prepare_circuit(AliceSettings::new(0, true, 0)).map_err(|e| e.to_string())?;
    let ch = overlap(&PureState::zero(2).map_err(|e| e.to_string())?, &wpi0).map_err(|e| e.to_string())?;
    let bb = basis_overlap();
    ensure(
        (ch - 0.25).abs() <= 1e-12 && (bb - 0.5).abs() <= 1e-12,
        format!("channel {ch}, BB84 {bb}"),
        format!("channel overlap {ch} (want 0.25), BB84 overlap {bb} (want 0.5)"),
    )
}

fn sift_purity() -> Outcome {
    let cfg = SessionConfig::new(2000, Backend::Circuit, 77)
        .with_attack(AttackStrategy::InterceptZ(InterceptTarget::Both));
    let out = run_session(&cfg).map_err(|e| e.to_string())?;
    let (alice, bob) = sifting_announcements(&out.transcript);
    let kept = sift(&alice, &bob).map_err(|e| e.to_string())?;
    let flagged: Vec<u64> = out.transcript.iter().filter(|r| r.sifted).map(|r| r.round_id).collect();
    ensure(
        kept == flagged,
        format!("{} sifted rounds recomputed from announcements", kept.len()),
        format!("announcements give {} rounds, transcript flags {}", kept.len(), flagged.len()),
    )
}

fn determinism() -> Outcome {
    let cfg = SessionConfig::new(1500, Backend::Circuit, 5)
        .with_attack(AttackStrategy::InterceptEraser(EraserVariant::B));
    let a = run_session(&cfg).map_err(|e| e.to_string())?;
    let b = run_session(&cfg).map_err(|e| e.to_string())?;
    ensure(
        transcript_to_jsonl(&a.transcript) == transcript_to_jsonl(&b.transcript)
            && a.report.to_json() == b.report.to_json(),
        "transcript and report bytes identical".into(),
        "two runs with one seed differ".into(),
    )
}

fn clean_channel() -> Outcome {
    for (backend, policy) in [
        (Backend::Circuit, EraserPolicy::uniform_circuit()),
        (Backend::Photonic, EraserPolicy::single(Eraser::PhotonicPbs)),
        (Backend::Photonic, EraserPolicy::single(Eraser::PhotonicTimebin)),
    ] {
        let cfg = SessionConfig::new(4000, backend, 11).with_policy(policy);
        let r = run_session(&cfg).map_err(|e| e.to_string())?.report;
        if r.qber_overall != 0.0 {
            return Err(format!("{backend}: qber {} without an attack", r.qber_overall));
        }
    }
    Ok("zero errors on both backends".into())
}

fn oracle_vs_sampling() -> Outcome {
    let rounds = 20_000;
    let mut parts = Vec::new();
    for (i, attack) in [
        AttackStrategy::InterceptZ(InterceptTarget::Both),
        AttackStrategy::InterceptEraser(EraserVariant::A),
        AttackStrategy::InterceptZ(InterceptTarget::Q),
    ]
    .into_iter()
    .enumerate()
    {
        let policy = EraserPolicy::uniform_circuit();
        let exact = overall_qber(attack, &policy).map_err(|e| e.to_string())?.value;
        let cfg = SessionConfig::new(rounds, Backend::Circuit, 1000 + i as u64)
            .with_attack(attack)
            .with_policy(policy);
        let r = run_session(&cfg).map_err(|e| e.to_string())?.report;
        let n = r.disclosed_count as f64;
        let sigma = (exact * (1.0 - exact) / n).sqrt();
        let z = (r.qber_overall - exact).abs() / sigma;
        if z > 5.0 {
            return Err(format!(
                "{attack}: sampled {} vs exact {exact} ({z:.2}σ, n = {n})",
                r.qber_overall
            ));
        }
        parts.push(format!("{attack} {:.4}/{exact} ({z:.1}σ)", r.qber_overall));
    }
    Ok(parts.join(", "))
}

fn interference_curve() -> Outcome {
    let mut worst: f64 = 0.0;
    for phi in phi_grid(32) {
        let d = build_layout(LayoutKind::BareMzi, phi).run().map_err(|e| e.to_string())?;
        let c = (phi / 2.0).cos().powi(2);
        worst = worst
            .max((d.detector_total("D1") - c).abs())
            .max((d.detector_total("D2") - (1.0 - c)).abs());
    }
    let at_pi = build_layout(LayoutKind::BareMzi, PI).run().map_err(|e| e.to_string())?;
    ensure(
        worst <= 1e-9 && at_pi.detector_total("D2") > 1.0 - 1e-9,
        format!("32 points, max deviation {worst:.1e}"),
        format!("BARE_MZI deviates from cos²(φ/2) by {worst:.3e}"),
    )
}

/// Runs every invariant check; never stops at the first failure.
pub fn cmd_selftest() -> Result<SelftestReport> {
    type Named = (&'static str, fn() -> Outcome);
    let checks: [Named; 12] = [
        ("gate_unitarity", gate_unitarity),
        ("channel_states", channel_states),
        ("z_cnot_commute", z_cnot_commute),
        ("branch_completeness", branch_completeness),
        ("decode_correctness", decode_correctness),
        ("discarded_mode_blind", discarded_mode_is_blind),
        ("overlaps", overlaps),
        ("sift_purity", sift_purity),
        ("determinism", determinism),
        ("clean_channel", clean_channel),
        ("oracle_vs_sampling", oracle_vs_sampling),
        ("interference_curve", interference_curve),
    ];
    Ok(SelftestReport {
        checks: checks
            .into_iter()
            .map(|(name, f)| {
                let (passed, detail) = match f() {
                    Ok(d) => (true, d),
                    Err(d) => (false, d),
                };
                Check { name, passed, detail }
            })
            .collect(),
    })
}
