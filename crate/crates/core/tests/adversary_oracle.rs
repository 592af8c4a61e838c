//! The attack oracle checked three ways: against a separate real-arithmetic
//! enumeration written here, against frozen fractions, and against sampled
//! sessions.

use eraser_qkd::adversary::{
    exact_mode_qber, overall_qber, qber_table, AttackStrategy, EraserVariant, InterceptTarget,
};
use eraser_qkd::protocol::{run_session, Backend, Eraser, EraserPolicy, SessionConfig};

type Vec4 = [f64; 4];
const S: f64 = std::f64::consts::FRAC_1_SQRT_2;

// index = 2q + f
fn alice(bit: u8, wpi: bool, fill: u8) -> Vec4 {
    let mut v = [0.0; 4];
    match (wpi, bit) {
        (false, _) => v[2 * bit as usize + fill as usize] = 1.0,
        (true, 0) => v = [0.5, 0.5, 0.5, -0.5],
        (true, _) => v = [0.5, -0.5, 0.5, 0.5],
    }
    v
}

fn h_f(v: Vec4) -> Vec4 {
    [S * (v[0] + v[1]), S * (v[0] - v[1]), S * (v[2] + v[3]), S * (v[2] - v[3])]
}

fn h_q(v: Vec4) -> Vec4 {
    [S * (v[0] + v[2]), S * (v[1] + v[3]), S * (v[0] - v[2]), S * (v[1] - v[3])]
}

fn cnot(v: Vec4) -> Vec4 {
    [v[0], v[1], v[3], v[2]]
}

fn bob_circuit(eraser: Eraser, v: Vec4) -> Vec4 {
    match eraser {
        Eraser::None => v,
        Eraser::CircuitA => h_f(v),
        Eraser::CircuitB => h_q(cnot(v)),
        _ => unreachable!(),
    }
}

fn decode(eraser: Eraser, idx: usize) -> u8 {
    let (q, f) = ((idx >> 1) as u8, (idx & 1) as u8);
    match eraser {
        Eraser::None => q,
        Eraser::CircuitA => (q != f) as u8,
        Eraser::CircuitB => (q == f) as u8,
        _ => unreachable!(),
    }
}

/// Weighted states Evan forwards.
fn evan(strategy: AttackStrategy, v: Vec4) -> Vec<(f64, Vec4)> {
    let collapse = |keep: &dyn Fn(usize) -> usize| {
        let mut groups: Vec<(f64, Vec4)> = Vec::new();
        for key in 0..4 {
            let mut w = [0.0; 4];
            for i in 0..4 {
                if keep(i) == key {
                    w[i] = v[i];
                }
            }
            let p: f64 = w.iter().map(|a| a * a).sum();
            if p > 1e-15 {
                let n = p.sqrt();
                groups.push((p, w.map(|a| a / n)));
            }
        }
        groups
    };
    match strategy {
        AttackStrategy::None => vec![(1.0, v)],
        AttackStrategy::InterceptZ(InterceptTarget::Q) => collapse(&|i| i >> 1),
        AttackStrategy::InterceptZ(InterceptTarget::F) => collapse(&|i| i & 1),
        AttackStrategy::InterceptZ(InterceptTarget::Both) => collapse(&|i| i),
        AttackStrategy::InterceptEraser(variant) => {
            let e = match variant {
                EraserVariant::A => Eraser::CircuitA,
                EraserVariant::B => Eraser::CircuitB,
            };
            let pre = bob_circuit(e, v);
            (0..4)
                .filter(|&i| pre[i] * pre[i] > 1e-15)
                .map(|i| (pre[i] * pre[i], alice(decode(e, i), true, 0)))
                .collect()
        }
    }
}

fn independent_mode_qber(strategy: AttackStrategy, bit: u8, eraser: Eraser) -> f64 {
    let wpi = eraser != Eraser::None;
    let fills: &[u8] = if wpi { &[0] } else { &[0, 1] };
    let mut wrong = 0.0;
    for &fill in fills {
        for (pe, fwd) in evan(strategy, alice(bit, wpi, fill)) {
            let out = bob_circuit(eraser, fwd);
            for (i, a) in out.iter().enumerate() {
                if decode(eraser, i) != bit {
                    wrong += pe * a * a / fills.len() as f64;
                }
            }
        }
    }
    wrong
}

const CIRCUIT: [Eraser; 3] = [Eraser::None, Eraser::CircuitA, Eraser::CircuitB];

#[test]
fn library_oracle_matches_independent_enumeration() {
    for strategy in AttackStrategy::ALL {
        for eraser in CIRCUIT {
            for bit in 0..2 {
                let lib = exact_mode_qber(strategy, bit, eraser).unwrap().value;
                let ind = independent_mode_qber(strategy, bit, eraser);
                assert!((lib - ind).abs() < 1e-12, "{strategy} {eraser} bit {bit}: {lib} vs {ind}");
            }
        }
    }
}

// Rows: strategy; columns: NONE mode, erased with A, erased with B. Frozen from
// the independent enumeration; every cell is the same for both of Alice's bits.
const FROZEN: [(AttackStrategy, [f64; 3]); 6] = [
    (AttackStrategy::None, [0.0, 0.0, 0.0]),
    (AttackStrategy::InterceptZ(InterceptTarget::Q), [0.0, 0.0, 0.5]),
    (AttackStrategy::InterceptZ(InterceptTarget::F), [0.0, 0.5, 0.5]),
    (AttackStrategy::InterceptZ(InterceptTarget::Both), [0.0, 0.5, 0.5]),
    (AttackStrategy::InterceptEraser(EraserVariant::A), [0.5, 0.0, 0.0]),
    (AttackStrategy::InterceptEraser(EraserVariant::B), [0.5, 0.0, 0.0]),
];

#[test]
fn frozen_mode_table() {
    for (strategy, row) in FROZEN {
        for (eraser, want) in CIRCUIT.into_iter().zip(row) {
            for bit in 0..2 {
                let got = independent_mode_qber(strategy, bit, eraser);
                assert!((got - want).abs() < 1e-12, "{strategy} {eraser} bit {bit}: {got}");
                assert_eq!(
                    exact_mode_qber(strategy, bit, eraser).unwrap().value,
                    exact_mode_qber(strategy, 1 - bit, eraser).unwrap().value,
                    "bit symmetry {strategy} {eraser}"
                );
            }
        }
    }
}

#[test]
fn overall_rates_and_the_quarter() {
    let uniform = EraserPolicy::uniform_circuit();
    let expect = [
        (AttackStrategy::None, "0"),
        (AttackStrategy::InterceptZ(InterceptTarget::Q), "1/8"),
        (AttackStrategy::InterceptZ(InterceptTarget::F), "1/4"),
        (AttackStrategy::InterceptZ(InterceptTarget::Both), "1/4"),
        (AttackStrategy::InterceptEraser(EraserVariant::A), "1/4"),
        (AttackStrategy::InterceptEraser(EraserVariant::B), "1/4"),
    ];
    for (s, frac) in expect {
        assert_eq!(overall_qber(s, &uniform).unwrap().fraction.to_string(), frac, "{s}");
    }
    for s in [
        AttackStrategy::InterceptEraser(EraserVariant::A),
        AttackStrategy::InterceptEraser(EraserVariant::B),
    ] {
        for p in [EraserPolicy::single(Eraser::CircuitA), EraserPolicy::single(Eraser::CircuitB)] {
            assert!(overall_qber(s, &p).unwrap().value > 0.0);
        }
    }
    let table = qber_table().unwrap();
    let quarter = table.quarter_strategies();
    assert!(quarter[&AttackStrategy::InterceptZ(InterceptTarget::Both)]);
    assert!(!quarter[&AttackStrategy::InterceptZ(InterceptTarget::Q)]);
    assert_eq!(table.per_mode.len(), 6 * 3 * 2);
}

#[test]
fn z_attacks_leave_unerased_mode_clean() {
    for t in [InterceptTarget::Q, InterceptTarget::F, InterceptTarget::Both] {
        for bit in 0..2 {
            assert_eq!(exact_mode_qber(AttackStrategy::InterceptZ(t), bit, Eraser::None).unwrap().value, 0.0);
        }
    }
}

fn within_5_sigma(sampled: f64, exact: f64, n: usize, ctx: &str) {
    if exact == 0.0 || exact == 1.0 {
        assert_eq!(sampled, exact, "{ctx}");
        return;
    }
    let sigma = (exact * (1.0 - exact) / n as f64).sqrt();
    assert!(
        (sampled - exact).abs() <= 5.0 * sigma,
        "{ctx}: sampled {sampled} vs exact {exact} (n = {n}, σ = {sigma})"
    );
}

#[test]
fn sampled_sessions_converge_to_oracle() {
    for (i, strategy) in AttackStrategy::ALL.into_iter().enumerate() {
        for (j, eraser) in [Eraser::CircuitA, Eraser::CircuitB].into_iter().enumerate() {
            let policy = EraserPolicy::single(eraser);
            let cfg = SessionConfig::new(20_000, Backend::Circuit, 500 + 10 * i as u64 + j as u64)
                .with_attack(strategy)
                .with_policy(policy.clone());
            let out = run_session(&cfg).unwrap();
            let r = &out.report;
            within_5_sigma(
                r.qber_overall,
                overall_qber(strategy, &policy).unwrap().value,
                r.disclosed_count,
                &format!("{strategy} with {eraser} overall"),
            );
            for mode in [Eraser::None, eraser] {
                let n = out
                    .transcript
                    .iter()
                    .filter(|t| t.disclosed && t.bob_eraser == mode)
                    .count();
                let exact = 0.5
                    * (exact_mode_qber(strategy, 0, mode).unwrap().value
                        + exact_mode_qber(strategy, 1, mode).unwrap().value);
                within_5_sigma(
                    r.qber_by_mode[mode.name()],
                    exact,
                    n,
                    &format!("{strategy} with {eraser}, mode {mode}"),
                );
            }
        }
    }
}
