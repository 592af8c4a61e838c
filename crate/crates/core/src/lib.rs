//! Simulator for quantum-eraser key distribution.
//!
//! Modules, bottom up:
//! - [`statevec`]: exact pure-state simulation of the two-qubit circuit backend.
//! - [`photonic`]: single-photon amplitudes through Mach-Zehnder layouts and erasers.
//! - [`protocol`]: Alice/Bob round logic, sifting, QBER estimation and the BB84 baseline.
//! - [`adversary`]: intercept-resend eavesdroppers and the exact QBER oracle.
//! - [`harness`]: configuration, sweeps, oracle tables, self-test and file output.

pub mod adversary;
pub mod harness;
pub mod json;
pub mod photonic;
pub mod protocol;
pub mod rng;
pub mod statevec;
