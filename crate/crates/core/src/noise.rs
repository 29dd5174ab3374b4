//! Success-probability estimates from gate counts and error rates.

use crate::sim::{GateCounts, GateKind};

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
#[error("error rate {0} outside [0, 1)")]
pub struct InvalidRate(pub f64);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorRates {
    pub one_qubit_gate: f64,
    pub two_qubit_gate: f64,
    /// Per measured qubit.
    pub measurement: f64,
}

impl ErrorRates {
    /// Typical superconducting hardware.
    pub const IBMQ: ErrorRates = ErrorRates {
        one_qubit_gate: 1e-3,
        two_qubit_gate: 1e-2,
        measurement: 0.0812,
    };
    /// Best reported laboratory gate fidelities (no measurement figure).
    pub const EXPERIMENTAL: ErrorRates = ErrorRates {
        one_qubit_gate: 1e-5,
        two_qubit_gate: 5e-3,
        measurement: 0.0,
    };
    pub const NOISELESS: ErrorRates = ErrorRates {
        one_qubit_gate: 0.0,
        two_qubit_gate: 0.0,
        measurement: 0.0,
    };

    pub fn new(
        one_qubit_gate: f64,
        two_qubit_gate: f64,
        measurement: f64,
    ) -> Result<Self, InvalidRate> {
        let rates = Self {
            one_qubit_gate,
            two_qubit_gate,
            measurement,
        };
        rates.validate()?;
        Ok(rates)
    }

    pub fn validate(&self) -> Result<(), InvalidRate> {
        for r in [self.one_qubit_gate, self.two_qubit_gate, self.measurement] {
            if !(0.0..1.0).contains(&r) {
                return Err(InvalidRate(r));
            }
        }
        Ok(())
    }
}

/// Elementary gate tally of the reference two-camera, ten-point HHL
/// circuit: X 24, U 30, H 6, CU 42, CX 76.
pub fn reference_counts() -> GateCounts {
    let mut c = GateCounts::default();
    c.record(GateKind::X, 24);
    c.record(GateKind::U, 30);
    c.record(GateKind::H, 6);
    c.record(GateKind::CU, 42);
    c.record(GateKind::CX, 76);
    c
}

/// `(1−p1)^n1 · (1−p2)^n2 · (1−pm)^m`.
pub fn success_probability(
    one_qubit: u64,
    two_qubit: u64,
    measured_qubits: u64,
    rates: &ErrorRates,
) -> f64 {
    let pow = |p: f64, n: u64| (1.0 - p).powf(n as f64);
    pow(rates.one_qubit_gate, one_qubit)
        * pow(rates.two_qubit_gate, two_qubit)
        * pow(rates.measurement, measured_qubits)
}

pub fn circuit_success_probability(
    counts: &GateCounts,
    measured_qubits: u64,
    rates: &ErrorRates,
) -> f64 {
    success_probability(counts.one_qubit, counts.two_qubit, measured_qubits, rates)
}

/// Probability that `iterations` independent runs all succeed.
pub fn repeated_success(p_single: f64, iterations: u32) -> f64 {
    p_single.powi(iterations as i32)
}
