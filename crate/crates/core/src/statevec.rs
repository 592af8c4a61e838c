//! Dense pure-state simulation of small qubit registers.
//!
//! Qubit 0 is the most significant bit of the basis index. For the two-qubit
//! register `|QF⟩` used by the protocol this gives `index = 2·q + f`.

use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt;

use num_complex::Complex64;
use rand::Rng;
use thiserror::Error;

/// Complex probability amplitude.
pub type Amplitude = Complex64;

/// Largest register the simulator accepts.
pub const MAX_QUBITS: usize = 4;

/// Tolerance on `Σ|amp|² = 1` when a state is constructed or validated.
pub const NORM_TOLERANCE: f64 = 1e-9;

/// Tolerance on norm preservation across a single gate.
pub const UNITARITY_TOLERANCE: f64 = 1e-12;

/// Outcome probabilities below this are treated as rounding dust.
pub const PROB_EPSILON: f64 = 1e-20;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StateError {
    #[error("register of {0} qubits is outside 1..={MAX_QUBITS}")]
    RegisterSize(usize),
    #[error("expected {expected} amplitudes, got {got}")]
    AmplitudeCount { expected: usize, got: usize },
    #[error("amplitude {index} is not finite")]
    NonFinite { index: usize },
    #[error("state is not normalized (norm² = {0})")]
    NotNormalized(f64),
    #[error("qubit index {index} out of range for a {n_qubits}-qubit register")]
    InvalidQubit { index: usize, n_qubits: usize },
    #[error("CNOT control and target are both qubit {0}")]
    ControlIsTarget(usize),
    #[error("qubit {0} listed twice")]
    DuplicateQubit(usize),
    #[error("dimension mismatch: {0} vs {1} qubits")]
    DimensionMismatch(usize, usize),
    #[error("gate {gate} changed the norm by {drift:e}")]
    NormViolation { gate: Gate, drift: f64 },
    #[error("measurement on a state with zero total probability")]
    ZeroProbability,
}

pub type Result<T> = std::result::Result<T, StateError>;

/// A gate from the protocol's gate set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Gate {
    H(usize),
    X(usize),
    Z(usize),
    /// `diag(1, e^{iφ})` on the target.
    Phase(usize, f64),
    Cnot { control: usize, target: usize },
}

impl Gate {
    pub fn cnot(control: usize, target: usize) -> Self {
        Gate::Cnot { control, target }
    }

    fn validate(&self, n_qubits: usize) -> Result<()> {
        let check = |index: usize| {
            if index < n_qubits {
                Ok(())
            } else {
                Err(StateError::InvalidQubit { index, n_qubits })
            }
        };
        match *self {
            Gate::H(t) | Gate::X(t) | Gate::Z(t) | Gate::Phase(t, _) => check(t),
            Gate::Cnot { control, target } => {
                check(control)?;
                check(target)?;
                if control == target {
                    return Err(StateError::ControlIsTarget(control));
                }
                Ok(())
            }
        }
    }
}

impl fmt::Display for Gate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Gate::H(t) => write!(f, "H({t})"),
            Gate::X(t) => write!(f, "X({t})"),
            Gate::Z(t) => write!(f, "Z({t})"),
            Gate::Phase(t, phi) => write!(f, "PHASE({t}, {phi})"),
            Gate::Cnot { control, target } => write!(f, "CNOT({control}->{target})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PureState {
    n_qubits: usize,
    amps: Vec<Amplitude>,
}

impl PureState {
    /// `|0…0⟩` on `n_qubits` qubits.
    pub fn zero(n_qubits: usize) -> Result<Self> {
        Self::basis(n_qubits, 0)
    }

    pub fn basis(n_qubits: usize, index: usize) -> Result<Self> {
        check_size(n_qubits)?;
        let dim = 1 << n_qubits;
        if index >= dim {
            return Err(StateError::InvalidQubit { index, n_qubits });
        }
        let mut amps = vec![Amplitude::new(0.0, 0.0); dim];
        amps[index] = Amplitude::new(1.0, 0.0);
        Ok(Self { n_qubits, amps })
    }

    /// Builds a state from explicit amplitudes, rejecting anything that is not
    /// finite and normalized within [`NORM_TOLERANCE`].
    pub fn from_amplitudes(n_qubits: usize, amps: Vec<Amplitude>) -> Result<Self> {
        check_size(n_qubits)?;
        let expected = 1 << n_qubits;
        if amps.len() != expected {
            return Err(StateError::AmplitudeCount {
                expected,
                got: amps.len(),
            });
        }
        if let Some(index) = amps.iter().position(|a| !a.re.is_finite() || !a.im.is_finite()) {
            return Err(StateError::NonFinite { index });
        }
        let state = Self { n_qubits, amps };
        let norm = state.norm_sqr();
        if (norm - 1.0).abs() > NORM_TOLERANCE {
            return Err(StateError::NotNormalized(norm));
        }
        Ok(state)
    }

    /// Convenience constructor from real amplitudes.
    pub fn from_real(n_qubits: usize, amps: &[f64]) -> Result<Self> {
        Self::from_amplitudes(
            n_qubits,
            amps.iter().map(|&re| Amplitude::new(re, 0.0)).collect(),
        )
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn amplitudes(&self) -> &[Amplitude] {
        &self.amps
    }

    pub fn amplitude(&self, index: usize) -> Amplitude {
        self.amps[index]
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    fn mask(&self, qubit: usize) -> usize {
        1 << (self.n_qubits - 1 - qubit)
    }

    fn check_qubit(&self, index: usize) -> Result<()> {
        if index < self.n_qubits {
            Ok(())
        } else {
            Err(StateError::InvalidQubit {
                index,
                n_qubits: self.n_qubits,
            })
        }
    }

    /// Applies `gate` in place. The norm is checked, never corrected.
    pub fn apply(&mut self, gate: &Gate) -> Result<()> {
        gate.validate(self.n_qubits)?;
        let before = self.norm_sqr();
        match *gate {
            Gate::H(t) => {
                let m = self.mask(t);
                for i in (0..self.amps.len()).filter(|i| i & m == 0) {
                    let a = self.amps[i];
                    let b = self.amps[i | m];
                    self.amps[i] = (a + b) * FRAC_1_SQRT_2;
                    self.amps[i | m] = (a - b) * FRAC_1_SQRT_2;
                }
            }
            Gate::X(t) => {
                let m = self.mask(t);
                for i in (0..self.amps.len()).filter(|i| i & m == 0) {
                    self.amps.swap(i, i | m);
                }
            }
            Gate::Z(t) => {
                let m = self.mask(t);
                for (i, a) in self.amps.iter_mut().enumerate() {
                    if i & m != 0 {
                        *a = -*a;
                    }
                }
            }
            Gate::Phase(t, phi) => {
                let m = self.mask(t);
                let w = Amplitude::from_polar(1.0, phi);
                for (i, a) in self.amps.iter_mut().enumerate() {
                    if i & m != 0 {
                        *a *= w;
                    }
                }
            }
            Gate::Cnot { control, target } => {
                let cm = self.mask(control);
                let tm = self.mask(target);
                for i in (0..self.amps.len()).filter(|i| i & cm != 0 && i & tm == 0) {
                    self.amps.swap(i, i | tm);
                }
            }
        }
        let drift = (self.norm_sqr() - before).abs();
        if drift > UNITARITY_TOLERANCE || self.amps.iter().any(|a| !a.re.is_finite() || !a.im.is_finite()) {
            return Err(StateError::NormViolation { gate: *gate, drift });
        }
        Ok(())
    }

    /// Applies a gate sequence in order.
    pub fn apply_all<'a>(&mut self, gates: impl IntoIterator<Item = &'a Gate>) -> Result<()> {
        gates.into_iter().try_for_each(|g| self.apply(g))
    }

    /// Probability that `qubit` reads 1.
    pub fn prob_one(&self, qubit: usize) -> Result<f64> {
        self.check_qubit(qubit)?;
        let m = self.mask(qubit);
        Ok(self
            .amps
            .iter()
            .enumerate()
            .filter(|(i, _)| i & m != 0)
            .map(|(_, a)| a.norm_sqr())
            .sum())
    }

    /// Projects onto the given outcomes and renormalizes. Returns the
    /// probability of the projection together with the collapsed state.
    fn project(&self, qubits: &[usize], bits: &[u8]) -> (f64, Option<PureState>) {
        let masks: Vec<usize> = qubits.iter().map(|&q| self.mask(q)).collect();
        let keep = |i: usize| {
            masks
                .iter()
                .zip(bits)
                .all(|(&m, &b)| ((i & m != 0) as u8) == b)
        };
        let mut amps = self.amps.clone();
        let mut prob = 0.0;
        for (i, a) in amps.iter_mut().enumerate() {
            if keep(i) {
                prob += a.norm_sqr();
            } else {
                *a = Amplitude::new(0.0, 0.0);
            }
        }
        if prob <= PROB_EPSILON {
            return (prob, None);
        }
        let scale = 1.0 / prob.sqrt();
        amps.iter_mut().for_each(|a| *a *= scale);
        (
            prob,
            Some(PureState {
                n_qubits: self.n_qubits,
                amps,
            }),
        )
    }

    /// Global-phase-insensitive comparison: largest amplitude difference after
    /// aligning the phase of `other` to `self`.
    pub fn distance_up_to_phase(&self, other: &PureState) -> Result<f64> {
        if self.n_qubits != other.n_qubits {
            return Err(StateError::DimensionMismatch(self.n_qubits, other.n_qubits));
        }
        let inner: Amplitude = self
            .amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| b.conj() * a)
            .sum();
        let phase = if inner.norm() > 0.0 {
            inner / inner.norm()
        } else {
            Amplitude::new(1.0, 0.0)
        };
        Ok(self
            .amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| (a - b * phase).norm())
            .fold(0.0, f64::max))
    }

    /// Largest amplitude-wise difference, phase included.
    pub fn distance(&self, other: &PureState) -> Result<f64> {
        if self.n_qubits != other.n_qubits {
            return Err(StateError::DimensionMismatch(self.n_qubits, other.n_qubits));
        }
        Ok(self
            .amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max))
    }
}

fn check_size(n_qubits: usize) -> Result<()> {
    if (1..=MAX_QUBITS).contains(&n_qubits) {
        Ok(())
    } else {
        Err(StateError::RegisterSize(n_qubits))
    }
}

impl fmt::Display for PureState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (i, a) in self.amps.iter().enumerate() {
            if a.norm_sqr() <= PROB_EPSILON {
                continue;
            }
            if !first {
                f.write_str(" + ")?;
            }
            first = false;
            if a.im.abs() < 1e-15 {
                write!(f, "{:.6}", a.re)?;
            } else {
                write!(f, "({:.6}{:+.6}i)", a.re, a.im)?;
            }
            write!(f, "|{:0width$b}⟩", i, width = self.n_qubits)?;
        }
        if first {
            f.write_str("0")?;
        }
        Ok(())
    }
}

/// Returns the image of `state` under `gate`.
pub fn apply_gate(state: &PureState, gate: &Gate) -> Result<PureState> {
    let mut out = state.clone();
    out.apply(gate)?;
    Ok(out)
}

/// Projective Z-basis measurement of one qubit.
///
/// Returns the outcome bit and the renormalized post-measurement state.
pub fn measure<R: Rng + ?Sized>(
    state: &PureState,
    qubit: usize,
    rng: &mut R,
) -> Result<(u8, PureState)> {
    let p1 = state.prob_one(qubit)?;
    let total = state.norm_sqr();
    if total <= PROB_EPSILON {
        return Err(StateError::ZeroProbability);
    }
    let p0 = total - p1;
    let r: f64 = rng.random();
    let bit = if r * total < p0 { 0 } else { 1 };
    match state.project(&[qubit], &[bit]) {
        (_, Some(collapsed)) => Ok((bit, collapsed)),
        (_, None) => Err(StateError::ZeroProbability),
    }
}

/// Measures several qubits in sequence, returning the bits in the given order.
pub fn measure_all<R: Rng + ?Sized>(
    state: &PureState,
    qubits: &[usize],
    rng: &mut R,
) -> Result<(Vec<u8>, PureState)> {
    let mut current = state.clone();
    let mut bits = Vec::with_capacity(qubits.len());
    for &q in qubits {
        let (b, next) = measure(&current, q, rng)?;
        bits.push(b);
        current = next;
    }
    Ok((bits, current))
}

/// One outcome of a joint measurement, with its exact Born weight.
#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub outcome: Vec<u8>,
    pub probability: f64,
    pub collapsed: PureState,
}

/// Lists every outcome of measuring `qubits` that has nonzero probability.
///
/// Outcome tuples follow the order of `qubits` and are emitted in ascending
/// binary order.
pub fn branch_enumerate(state: &PureState, qubits: &[usize]) -> Result<Vec<Branch>> {
    for (i, &q) in qubits.iter().enumerate() {
        state.check_qubit(q)?;
        if qubits[..i].contains(&q) {
            return Err(StateError::DuplicateQubit(q));
        }
    }
    let k = qubits.len();
    let mut branches = Vec::new();
    for code in 0..(1usize << k) {
        let bits: Vec<u8> = (0..k).map(|j| ((code >> (k - 1 - j)) & 1) as u8).collect();
        if let (probability, Some(collapsed)) = state.project(qubits, &bits) {
            branches.push(Branch {
                outcome: bits,
                probability,
                collapsed,
            });
        }
    }
    Ok(branches)
}

/// Fidelity `|⟨a|b⟩|²` between two pure states.
pub fn overlap(a: &PureState, b: &PureState) -> Result<f64> {
    if a.n_qubits != b.n_qubits {
        return Err(StateError::DimensionMismatch(a.n_qubits, b.n_qubits));
    }
    let inner: Amplitude = a.amps.iter().zip(&b.amps).map(|(x, y)| x.conj() * y).sum();
    Ok(inner.norm_sqr())
}
