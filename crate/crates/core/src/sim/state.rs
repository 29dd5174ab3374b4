use std::collections::BTreeMap;

use nalgebra::{DMatrix, Matrix2};

use super::{Circuit, Control, GateOp, SimError, C64};

/// Dense vector of `2^n` complex amplitudes. Qubit 0 is the least
/// significant bit of the amplitude index.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    n_qubits: usize,
    amps: Vec<C64>,
}

impl StateVector {
    /// `|0...0>` on `n_qubits` qubits.
    pub fn zero(n_qubits: usize) -> Self {
        Self::basis(n_qubits, 0)
    }

    pub fn basis(n_qubits: usize, index: usize) -> Self {
        let mut amps = vec![C64::new(0.0, 0.0); 1 << n_qubits];
        amps[index] = C64::new(1.0, 0.0);
        Self { n_qubits, amps }
    }

    /// Wraps raw amplitudes. The length must be a power of two; no
    /// normalization is applied.
    pub fn from_amplitudes(amps: Vec<C64>) -> Result<Self, SimError> {
        let len = amps.len();
        if len == 0 || !len.is_power_of_two() {
            return Err(SimError::NotPowerOfTwo(len));
        }
        Ok(Self {
            n_qubits: len.trailing_zeros() as usize,
            amps,
        })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn into_amplitudes(self) -> Vec<C64> {
        self.amps
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn scale(&mut self, factor: C64) {
        for a in &mut self.amps {
            *a *= factor;
        }
    }

    fn check_qubit(&self, qubit: usize) -> Result<(), SimError> {
        if qubit >= self.n_qubits {
            return Err(SimError::QubitOutOfRange {
                qubit,
                n_qubits: self.n_qubits,
            });
        }
        Ok(())
    }

    pub fn apply(&mut self, op: &GateOp) -> Result<(), SimError> {
        op.validate(self.n_qubits)?;
        match op {
            GateOp::X(t) | GateOp::H(t) | GateOp::U { target: t, .. } => {
                let m = op.target_matrix().expect("single-target gate");
                self.apply_single(*t, None, &m);
            }
            GateOp::CX { control, target }
            | GateOp::CU {
                control, target, ..
            } => {
                let m = op.target_matrix().expect("single-target gate");
                self.apply_single(*target, Some(*control), &m);
            }
            GateOp::InversionRotation {
                register,
                ancilla,
                angles,
            } => self.apply_uniform_ry(register, *ancilla, angles),
        }
        Ok(())
    }

    pub fn apply_circuit(&mut self, circuit: &Circuit) -> Result<(), SimError> {
        if circuit.n_qubits() != self.n_qubits {
            return Err(SimError::QubitCountMismatch {
                state: self.n_qubits,
                circuit: circuit.n_qubits(),
            });
        }
        for op in circuit.ops() {
            self.apply(op)?;
        }
        if circuit.global_phase() != 0.0 {
            self.scale(C64::from_polar(1.0, circuit.global_phase()));
        }
        Ok(())
    }

    fn apply_single(&mut self, target: usize, control: Option<Control>, m: &Matrix2<C64>) {
        let bit = 1usize << target;
        for i in 0..self.amps.len() {
            if i & bit != 0 {
                continue;
            }
            if let Some(c) = control {
                if !c.fires(i) {
                    continue;
                }
            }
            let j = i | bit;
            let (a, b) = (self.amps[i], self.amps[j]);
            self.amps[i] = m[(0, 0)] * a + m[(0, 1)] * b;
            self.amps[j] = m[(1, 0)] * a + m[(1, 1)] * b;
        }
    }

    fn apply_uniform_ry(&mut self, register: &[usize], ancilla: usize, angles: &[f64]) {
        let bit = 1usize << ancilla;
        for i in 0..self.amps.len() {
            if i & bit != 0 {
                continue;
            }
            let k = register_value(i, register);
            let (s, c) = (angles[k] / 2.0).sin_cos();
            let j = i | bit;
            let (a, b) = (self.amps[i], self.amps[j]);
            self.amps[i] = a * c - b * s;
            self.amps[j] = a * s + b * c;
        }
    }

    /// Applies a dense unitary to `targets` (with `targets[0]` as the least
    /// significant bit of the block index), optionally conditioned on a
    /// control qubit. This is the execution path for compiled sub-circuits.
    pub fn apply_block(
        &mut self,
        control: Option<Control>,
        targets: &[usize],
        unitary: &DMatrix<C64>,
    ) -> Result<(), SimError> {
        let dim = 1usize << targets.len();
        if unitary.nrows() != dim || unitary.ncols() != dim {
            return Err(SimError::BlockShape {
                expected: dim,
                rows: unitary.nrows(),
                cols: unitary.ncols(),
            });
        }
        let mut touched: Vec<usize> = targets.to_vec();
        if let Some(c) = control {
            touched.push(c.qubit);
        }
        for (i, &q) in touched.iter().enumerate() {
            self.check_qubit(q)?;
            if touched[i + 1..].contains(&q) {
                return Err(SimError::OverlappingQubits(q));
            }
        }
        let mask: usize = targets.iter().map(|&q| 1usize << q).sum();
        let offsets: Vec<usize> = (0..dim).map(|k| scatter(k, targets)).collect();
        let mut gathered = vec![C64::new(0.0, 0.0); dim];
        for base in 0..self.amps.len() {
            if base & mask != 0 {
                continue;
            }
            if let Some(c) = control {
                if !c.fires(base) {
                    continue;
                }
            }
            for (g, off) in gathered.iter_mut().zip(&offsets) {
                *g = self.amps[base | off];
            }
            for (row, off) in offsets.iter().enumerate() {
                let mut acc = C64::new(0.0, 0.0);
                for (col, g) in gathered.iter().enumerate() {
                    acc += unitary[(row, col)] * g;
                }
                self.amps[base | off] = acc;
            }
        }
        Ok(())
    }

    /// Probability of reading `outcome` on `qubit`.
    pub fn probability(&self, qubit: usize, outcome: bool) -> Result<f64, SimError> {
        self.check_qubit(qubit)?;
        Ok(self
            .amps
            .iter()
            .enumerate()
            .filter(|(i, _)| ((i >> qubit) & 1 == 1) == outcome)
            .map(|(_, a)| a.norm_sqr())
            .sum())
    }

    /// Zeroes every amplitude inconsistent with `qubit == outcome` without
    /// renormalizing. Returns the discarded-free norm squared.
    pub fn project(&mut self, qubit: usize, outcome: bool) -> Result<f64, SimError> {
        self.check_qubit(qubit)?;
        let mut kept = 0.0;
        for (i, a) in self.amps.iter_mut().enumerate() {
            if ((i >> qubit) & 1 == 1) == outcome {
                kept += a.norm_sqr();
            } else {
                *a = C64::new(0.0, 0.0);
            }
        }
        Ok(kept)
    }

    /// Conditions the state on measuring `outcome` on `qubit`. Returns the
    /// renormalized conditional state and the probability of the outcome.
    pub fn post_select(&self, qubit: usize, outcome: bool) -> Result<(StateVector, f64), SimError> {
        let mut next = self.clone();
        let p = next.project(qubit, outcome)?;
        if p <= 0.0 {
            return Err(SimError::ZeroProbability { qubit, outcome });
        }
        next.scale(C64::new(1.0 / p.sqrt(), 0.0));
        Ok((next, p))
    }

    /// Born-rule marginal over `qubits`; the key packs the outcome with
    /// `qubits[0]` as least significant bit. Zero-probability outcomes are
    /// omitted.
    pub fn measure_distribution(&self, qubits: &[usize]) -> Result<BTreeMap<usize, f64>, SimError> {
        for &q in qubits {
            self.check_qubit(q)?;
        }
        let mut dist = BTreeMap::new();
        for (i, a) in self.amps.iter().enumerate() {
            let p = a.norm_sqr();
            if p > 0.0 {
                *dist.entry(register_value(i, qubits)).or_insert(0.0) += p;
            }
        }
        Ok(dist)
    }
}

/// Integer held by `register` (first entry least significant) in basis index `i`.
#[inline]
pub(crate) fn register_value(index: usize, register: &[usize]) -> usize {
    register
        .iter()
        .enumerate()
        .fold(0, |k, (b, &q)| k | (((index >> q) & 1) << b))
}

/// Inverse of [`register_value`]: places the bits of `k` on `register`.
#[inline]
pub(crate) fn scatter(k: usize, register: &[usize]) -> usize {
    register
        .iter()
        .enumerate()
        .fold(0, |acc, (b, &q)| acc | (((k >> b) & 1) << q))
}
