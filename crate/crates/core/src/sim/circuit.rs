use std::collections::BTreeMap;
use std::ops::AddAssign;

use nalgebra::DMatrix;

use super::{GateKind, GateOp, SimError, StateVector, C64};

/// Ordered gate list over a fixed number of qubits, plus a global phase
/// `e^{i·global_phase}`. The phase is unobservable on its own but becomes a
/// relative phase once the circuit is controlled, so it is tracked exactly.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Circuit {
    n_qubits: usize,
    ops: Vec<GateOp>,
    global_phase: f64,
}

/// One-/two-qubit totals and a per-kind tally.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GateCounts {
    pub one_qubit: u64,
    pub two_qubit: u64,
    pub per_kind: BTreeMap<GateKind, u64>,
}

impl GateCounts {
    pub fn total(&self) -> u64 {
        self.one_qubit + self.two_qubit
    }

    pub fn get(&self, kind: GateKind) -> u64 {
        self.per_kind.get(&kind).copied().unwrap_or(0)
    }

    pub fn record(&mut self, kind: GateKind, n: u64) {
        if n == 0 {
            return;
        }
        if kind.is_multi_qubit() {
            self.two_qubit += n;
        } else {
            self.one_qubit += n;
        }
        *self.per_kind.entry(kind).or_insert(0) += n;
    }

    pub fn times(&self, factor: u64) -> GateCounts {
        GateCounts {
            one_qubit: self.one_qubit * factor,
            two_qubit: self.two_qubit * factor,
            per_kind: self
                .per_kind
                .iter()
                .map(|(k, v)| (*k, v * factor))
                .collect(),
        }
    }
}

impl AddAssign<&GateCounts> for GateCounts {
    fn add_assign(&mut self, rhs: &GateCounts) {
        for (k, v) in &rhs.per_kind {
            self.record(*k, *v);
        }
    }
}

impl Circuit {
    pub fn new(n_qubits: usize) -> Self {
        Self {
            n_qubits,
            ops: Vec::new(),
            global_phase: 0.0,
        }
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn ops(&self) -> &[GateOp] {
        &self.ops
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn global_phase(&self) -> f64 {
        self.global_phase
    }

    pub fn add_global_phase(&mut self, phase: f64) {
        self.global_phase += phase;
    }

    pub fn push(&mut self, op: GateOp) -> Result<&mut Self, SimError> {
        op.validate(self.n_qubits)?;
        self.ops.push(op);
        Ok(self)
    }

    /// Appends `other` after `self`.
    pub fn append(&mut self, other: &Circuit) -> Result<&mut Self, SimError> {
        if other.n_qubits != self.n_qubits {
            return Err(SimError::QubitCountMismatch {
                state: self.n_qubits,
                circuit: other.n_qubits,
            });
        }
        self.ops.extend_from_slice(&other.ops);
        self.global_phase += other.global_phase;
        Ok(self)
    }

    /// The adjoint circuit: reversed order, every gate inverted.
    pub fn inverse(&self) -> Circuit {
        Circuit {
            n_qubits: self.n_qubits,
            ops: self.ops.iter().rev().map(GateOp::inverse).collect(),
            global_phase: -self.global_phase,
        }
    }

    pub fn gate_counts(&self) -> GateCounts {
        let mut counts = GateCounts::default();
        for op in &self.ops {
            counts.record(op.kind(), 1);
        }
        counts
    }

    /// Dense `2^n × 2^n` matrix of the whole circuit, built column by column
    /// from basis states.
    pub fn unitary(&self) -> DMatrix<C64> {
        let dim = 1usize << self.n_qubits;
        let mut m = DMatrix::zeros(dim, dim);
        for col in 0..dim {
            let mut s = StateVector::basis(self.n_qubits, col);
            s.apply_circuit(self).expect("ops validated on push");
            for (row, a) in s.amplitudes().iter().enumerate() {
                m[(row, col)] = *a;
            }
        }
        m
    }
}
