//! Hermitian Pauli decomposition, Trotter–Suzuki product formulas and
//! quantum phase estimation.
//!
//! Every evolution built here is `U = e^{-iAt}`. QPE reads the eigenphase
//! `φ ∈ [0, 1)` defined by `U|u> = e^{2πiφ}|u>`, i.e. `φ = -λt/2π mod 1`.

use std::f64::consts::PI;
use std::fmt;

use nalgebra::DMatrix;

use crate::sim::{Circuit, Control, Euler, GateOp, SimError, C64};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrotterError {
    #[error("matrix is not Hermitian (deviation {0:.3e})")]
    NotHermitian(f64),
    #[error("matrix dimension {0} is not a power of two")]
    NotPowerOfTwo(usize),
    #[error("matrix is not square ({0}x{1})")]
    NotSquare(usize, usize),
    #[error("Trotter slice count must be at least 1")]
    ZeroSlices,
    #[error("evolution time {0} is not finite")]
    NonFiniteTime(f64),
    #[error("decomposition acts on {expected} qubits but {got} were mapped")]
    QubitMapping { expected: usize, got: usize },
    #[error("phase and data registers share qubit {0}")]
    LayoutOverlap(usize),
    #[error("phase register is empty")]
    EmptyRegister,
    #[error(transparent)]
    Sim(#[from] SimError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

/// Tensor product of single-qubit Paulis stored as X and Z bit masks
/// (`Y` sets both). Bit `q` refers to qubit `q`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PauliString {
    n_qubits: usize,
    x_mask: usize,
    z_mask: usize,
}

impl PauliString {
    pub fn new(n_qubits: usize, x_mask: usize, z_mask: usize) -> Self {
        Self {
            n_qubits,
            x_mask,
            z_mask,
        }
    }

    /// Parses labels written with the highest qubit first, e.g. `"XZ"` is
    /// `X` on qubit 1 and `Z` on qubit 0.
    pub fn parse(label: &str) -> Option<Self> {
        let n = label.len();
        let (mut x, mut z) = (0, 0);
        for (i, ch) in label.chars().enumerate() {
            let bit = 1 << (n - 1 - i);
            match ch {
                'I' => {}
                'X' => x |= bit,
                'Y' => {
                    x |= bit;
                    z |= bit;
                }
                'Z' => z |= bit,
                _ => return None,
            }
        }
        Some(Self::new(n, x, z))
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn get(&self, qubit: usize) -> Pauli {
        match ((self.x_mask >> qubit) & 1, (self.z_mask >> qubit) & 1) {
            (0, 0) => Pauli::I,
            (1, 0) => Pauli::X,
            (1, 1) => Pauli::Y,
            _ => Pauli::Z,
        }
    }

    pub fn is_identity(&self) -> bool {
        self.x_mask == 0 && self.z_mask == 0
    }

    /// Qubits carrying a non-identity factor, ascending.
    pub fn support(&self) -> Vec<usize> {
        (0..self.n_qubits)
            .filter(|&q| (self.x_mask | self.z_mask) >> q & 1 == 1)
            .collect()
    }

    fn y_phase(&self) -> C64 {
        match (self.x_mask & self.z_mask).count_ones() % 4 {
            0 => C64::new(1.0, 0.0),
            1 => C64::new(0.0, 1.0),
            2 => C64::new(-1.0, 0.0),
            _ => C64::new(0.0, -1.0),
        }
    }

    /// Nonzero entry of column `col`: `P|col> = value · |col ⊕ x>`.
    #[inline]
    pub fn column_entry(&self, col: usize) -> (usize, C64) {
        let sign = if (col & self.z_mask).count_ones().is_multiple_of(2) {
            1.0
        } else {
            -1.0
        };
        (col ^ self.x_mask, self.y_phase() * sign)
    }

    pub fn matrix(&self) -> DMatrix<C64> {
        let dim = 1 << self.n_qubits;
        let mut m = DMatrix::zeros(dim, dim);
        for col in 0..dim {
            let (row, v) = self.column_entry(col);
            m[(row, col)] = v;
        }
        m
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for q in (0..self.n_qubits).rev() {
            let c = match self.get(q) {
                Pauli::I => 'I',
                Pauli::X => 'X',
                Pauli::Y => 'Y',
                Pauli::Z => 'Z',
            };
            write!(f, "{c}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PauliTerm {
    pub coefficient: f64,
    pub pauli: PauliString,
}

/// `A = Σ_j c_j P_j` with real coefficients. Terms are kept in descending
/// `|c_j|` order, which is also the order used inside a Trotter slice.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianDecomposition {
    n_qubits: usize,
    terms: Vec<PauliTerm>,
}

impl HermitianDecomposition {
    pub fn from_terms(n_qubits: usize, mut terms: Vec<PauliTerm>) -> Self {
        terms.sort_by(|a, b| {
            b.coefficient
                .abs()
                .total_cmp(&a.coefficient.abs())
                .then((a.pauli.x_mask, a.pauli.z_mask).cmp(&(b.pauli.x_mask, b.pauli.z_mask)))
        });
        Self { n_qubits, terms }
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn terms(&self) -> &[PauliTerm] {
        &self.terms
    }

    pub fn matrix(&self) -> DMatrix<C64> {
        let dim = 1 << self.n_qubits;
        let mut m = DMatrix::zeros(dim, dim);
        for t in &self.terms {
            for col in 0..dim {
                let (row, v) = t.pauli.column_entry(col);
                m[(row, col)] += v * t.coefficient;
            }
        }
        m
    }
}

pub fn hermitian_deviation(m: &DMatrix<C64>) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// Expands a Hermitian `2^k × 2^k` matrix in the Pauli basis with
/// coefficients `tr(P·M)/2^k`. Coefficients below `1e-14·max|c|` are dropped.
pub fn decompose_hermitian(matrix: &DMatrix<C64>) -> Result<HermitianDecomposition, TrotterError> {
    let (rows, cols) = matrix.shape();
    if rows != cols {
        return Err(TrotterError::NotSquare(rows, cols));
    }
    if rows == 0 || !rows.is_power_of_two() {
        return Err(TrotterError::NotPowerOfTwo(rows));
    }
    let dev = hermitian_deviation(matrix);
    if dev > 1e-10 {
        return Err(TrotterError::NotHermitian(dev));
    }
    let k = rows.trailing_zeros() as usize;
    let dim = rows;
    let mut terms = Vec::new();
    for x in 0..dim {
        for z in 0..dim {
            let p = PauliString::new(k, x, z);
            let mut tr = C64::new(0.0, 0.0);
            for col in 0..dim {
                let (row, v) = p.column_entry(col);
                // (P M)_{row,row} picks M[col, row] through P[row, col].
                tr += v * matrix[(col, row)];
            }
            let c = tr.re / dim as f64;
            if c != 0.0 {
                terms.push(PauliTerm {
                    coefficient: c,
                    pauli: p,
                });
            }
        }
    }
    let max = terms.iter().fold(0.0f64, |m, t| m.max(t.coefficient.abs()));
    terms.retain(|t| t.coefficient.abs() > 1e-14 * max);
    Ok(HermitianDecomposition::from_terms(k, terms))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TrotterOrder {
    First,
    #[default]
    Second,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvolutionSpec {
    pub decomposition: HermitianDecomposition,
    pub time: f64,
    pub slices: usize,
    pub order: TrotterOrder,
}

impl EvolutionSpec {
    pub const DEFAULT_SLICES: usize = 50;

    pub fn new(decomposition: HermitianDecomposition, time: f64) -> Self {
        Self {
            decomposition,
            time,
            slices: Self::DEFAULT_SLICES,
            order: TrotterOrder::Second,
        }
    }

    pub fn with_slices(mut self, slices: usize) -> Self {
        self.slices = slices;
        self
    }

    pub fn with_order(mut self, order: TrotterOrder) -> Self {
        self.order = order;
        self
    }

    pub fn validate(&self) -> Result<(), TrotterError> {
        if self.slices == 0 {
            return Err(TrotterError::ZeroSlices);
        }
        if !self.time.is_finite() {
            return Err(TrotterError::NonFiniteTime(self.time));
        }
        Ok(())
    }
}

/// Appends `e^{-i c τ P}` using basis change, a CX parity ladder and a
/// single phase rotation. With a control, only the central rotation (and the
/// identity-term phase) is conditioned: the basis change and ladder cancel
/// on the control-off branch. Phases that land on the control qubit are
/// accumulated into `control_phase` so the caller can emit one gate.
fn append_pauli_exponential(
    circuit: &mut Circuit,
    term: &PauliTerm,
    tau: f64,
    qubits: &[usize],
    control: Option<usize>,
    control_phase: &mut f64,
) -> Result<(), SimError> {
    let angle = term.coefficient * tau;
    let support = term.pauli.support();
    if support.is_empty() {
        match control {
            Some(_) => *control_phase -= angle,
            None => circuit.add_global_phase(-angle),
        }
        return Ok(());
    }
    let wires: Vec<usize> = support.iter().map(|&q| qubits[q]).collect();
    for (&q, &w) in support.iter().zip(&wires) {
        match term.pauli.get(q) {
            Pauli::X => {
                circuit.push(GateOp::H(w))?;
            }
            Pauli::Y => {
                circuit.push(GateOp::phase(w, -PI / 2.0))?;
                circuit.push(GateOp::H(w))?;
            }
            _ => {}
        }
    }
    for pair in wires.windows(2) {
        circuit.push(GateOp::cx(pair[0], pair[1]))?;
    }
    // Rz(θ) = e^{-iθ/2} · diag(1, e^{iθ}) with θ = 2cτ.
    let theta = 2.0 * angle;
    let last = *wires.last().expect("non-empty support");
    match control {
        Some(c) => {
            circuit.push(GateOp::CU {
                control: Control::on_one(c),
                target: last,
                angles: Euler::phase(theta),
            })?;
            *control_phase -= theta / 2.0;
        }
        None => {
            circuit.push(GateOp::phase(last, theta))?;
            circuit.add_global_phase(-theta / 2.0);
        }
    }
    for pair in wires.windows(2).rev() {
        circuit.push(GateOp::cx(pair[0], pair[1]))?;
    }
    for (&q, &w) in support.iter().zip(&wires) {
        match term.pauli.get(q) {
            Pauli::X => {
                circuit.push(GateOp::H(w))?;
            }
            Pauli::Y => {
                circuit.push(GateOp::H(w))?;
                circuit.push(GateOp::phase(w, PI / 2.0))?;
            }
            _ => {}
        }
    }
    Ok(())
}

fn check_mapping(spec: &EvolutionSpec, qubits: &[usize]) -> Result<(), TrotterError> {
    spec.validate()?;
    let expected = spec.decomposition.n_qubits();
    if qubits.len() != expected {
        return Err(TrotterError::QubitMapping {
            expected,
            got: qubits.len(),
        });
    }
    Ok(())
}

/// One Trotter slice `S(t/r)` on `qubits` (decomposition qubit `i` is wired
/// to `qubits[i]`), optionally controlled.
pub fn slice_circuit(
    spec: &EvolutionSpec,
    qubits: &[usize],
    n_qubits: usize,
    control: Option<usize>,
) -> Result<Circuit, TrotterError> {
    check_mapping(spec, qubits)?;
    let mut circuit = Circuit::new(n_qubits);
    let mut control_phase = 0.0;
    let step = spec.time / spec.slices as f64;
    let terms = spec.decomposition.terms();
    match spec.order {
        TrotterOrder::First => {
            for t in terms {
                append_pauli_exponential(
                    &mut circuit,
                    t,
                    step,
                    qubits,
                    control,
                    &mut control_phase,
                )?;
            }
        }
        TrotterOrder::Second => {
            let half = step / 2.0;
            for t in terms.iter().chain(terms.iter().rev()) {
                append_pauli_exponential(
                    &mut circuit,
                    t,
                    half,
                    qubits,
                    control,
                    &mut control_phase,
                )?;
            }
        }
    }
    if let Some(c) = control {
        if control_phase != 0.0 {
            circuit.push(GateOp::phase(c, control_phase))?;
        }
    }
    Ok(circuit)
}

/// Product-formula circuit for `e^{-iAt}`: `r` slices for order 1, `r`
/// symmetric forward/backward slices for order 2. With
/// `controlled_by = Some((q, j))` the circuit is the `q`-controlled
/// `U^{2^j}`, i.e. `r·2^j` controlled slices.
pub fn trotter_circuit(
    spec: &EvolutionSpec,
    qubits: &[usize],
    n_qubits: usize,
    controlled_by: Option<(usize, u32)>,
) -> Result<Circuit, TrotterError> {
    let (control, power) = match controlled_by {
        Some((q, j)) => (Some(q), 1usize << j),
        None => (None, 1),
    };
    let slice = slice_circuit(spec, qubits, n_qubits, control)?;
    let mut circuit = Circuit::new(n_qubits);
    for _ in 0..spec.slices * power {
        circuit.append(&slice)?;
    }
    Ok(circuit)
}

fn matrix_power(base: &DMatrix<C64>, mut exp: usize) -> DMatrix<C64> {
    let mut result = DMatrix::identity(base.nrows(), base.ncols());
    let mut square = base.clone();
    while exp > 0 {
        if exp & 1 == 1 {
            result = &result * &square;
        }
        exp >>= 1;
        if exp > 0 {
            square = &square * &square;
        }
    }
    result
}

/// Dense unitaries `U^{2^j}` for `j = 0..count`, where `U` is the
/// Trotterized evolution. The slice is compiled by simulating its gate
/// circuit on every basis state, then raised to the `r`-th power; the
/// result is the same operator as the gate-level product, evaluated with
/// `O(log r)` matrix products instead of `r` slice replays.
pub fn compiled_powers(
    spec: &EvolutionSpec,
    count: usize,
) -> Result<Vec<DMatrix<C64>>, TrotterError> {
    let k = spec.decomposition.n_qubits();
    let local: Vec<usize> = (0..k).collect();
    let slice = slice_circuit(spec, &local, k, None)?.unitary();
    let mut powers = Vec::with_capacity(count);
    let mut u = matrix_power(&slice, spec.slices);
    for _ in 0..count {
        let next = &u * &u;
        powers.push(u);
        u = next;
    }
    Ok(powers)
}

/// Qubit assignment for phase estimation. `phase_qubits[j]` controls
/// `U^{2^j}` and is bit `j` of the phase readout.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QpeLayout {
    pub data_qubits: Vec<usize>,
    pub phase_qubits: Vec<usize>,
}

impl QpeLayout {
    pub fn n_phase_qubits(&self) -> usize {
        self.phase_qubits.len()
    }

    pub fn validate(&self) -> Result<(), TrotterError> {
        if self.phase_qubits.is_empty() {
            return Err(TrotterError::EmptyRegister);
        }
        for q in &self.phase_qubits {
            if self.data_qubits.contains(q) {
                return Err(TrotterError::LayoutOverlap(*q));
            }
        }
        Ok(())
    }
}

fn controlled_phase(control: usize, target: usize, lambda: f64) -> GateOp {
    GateOp::CU {
        control: Control::on_one(control),
        target,
        angles: Euler::phase(lambda),
    }
}

/// Quantum Fourier transform `|l> → 2^{-m/2} Σ_k e^{2πi kl/2^m} |k>` on
/// `qubits` (first entry least significant). Final bit reversal uses three
/// CX per swap.
pub fn qft_circuit(qubits: &[usize], n_qubits: usize) -> Result<Circuit, SimError> {
    let m = qubits.len();
    let mut circuit = Circuit::new(n_qubits);
    for a in (0..m).rev() {
        circuit.push(GateOp::H(qubits[a]))?;
        for b in (0..a).rev() {
            let lambda = 2.0 * PI / (1u64 << (a - b + 1)) as f64;
            circuit.push(controlled_phase(qubits[b], qubits[a], lambda))?;
        }
    }
    for i in 0..m / 2 {
        let (p, q) = (qubits[i], qubits[m - 1 - i]);
        circuit.push(GateOp::cx(p, q))?;
        circuit.push(GateOp::cx(q, p))?;
        circuit.push(GateOp::cx(p, q))?;
    }
    Ok(circuit)
}

pub fn inverse_qft_circuit(qubits: &[usize], n_qubits: usize) -> Result<Circuit, SimError> {
    Ok(qft_circuit(qubits, n_qubits)?.inverse())
}

/// Gate-level QPE: Hadamards on the phase register, the controlled
/// `U^{2^j}` ladder, then the inverse QFT.
pub fn qpe_circuit(
    spec: &EvolutionSpec,
    layout: &QpeLayout,
    n_qubits: usize,
) -> Result<Circuit, TrotterError> {
    layout.validate()?;
    let mut circuit = Circuit::new(n_qubits);
    for &q in &layout.phase_qubits {
        circuit.push(GateOp::H(q))?;
    }
    for (j, &q) in layout.phase_qubits.iter().enumerate() {
        let cu = trotter_circuit(spec, &layout.data_qubits, n_qubits, Some((q, j as u32)))?;
        circuit.append(&cu)?;
    }
    circuit.append(&inverse_qft_circuit(&layout.phase_qubits, n_qubits)?)?;
    Ok(circuit)
}

#[cfg(test)]
mod tests {
    use std::f64::consts::FRAC_1_SQRT_2;

    use super::*;
    use crate::sim::StateVector;

    fn real(rows: usize, data: &[f64]) -> DMatrix<C64> {
        DMatrix::from_row_slice(
            rows,
            rows,
            &data.iter().map(|&x| C64::new(x, 0.0)).collect::<Vec<_>>(),
        )
    }

    fn labels(d: &HermitianDecomposition) -> Vec<(String, f64)> {
        d.terms()
            .iter()
            .map(|t| (t.pauli.to_string(), t.coefficient))
            .collect()
    }

    #[test]
    fn decomposes_basis_elements() {
        let x = decompose_hermitian(&real(2, &[0.0, 1.0, 1.0, 0.0])).unwrap();
        assert_eq!(labels(&x), vec![("X".to_string(), 1.0)]);
        let id = decompose_hermitian(&real(2, &[1.0, 0.0, 0.0, 1.0])).unwrap();
        assert_eq!(labels(&id), vec![("I".to_string(), 1.0)]);
    }

    #[test]
    fn decomposes_hadamard_like_matrix() {
        let s = FRAC_1_SQRT_2;
        let m = real(2, &[s, s, s, -s]);
        let d = decompose_hermitian(&m).unwrap();
        let got = labels(&d);
        assert_eq!(got.len(), 2);
        for (label, c) in &got {
            assert!(label == "X" || label == "Z");
            assert!((c - s).abs() < 1e-15);
        }
        assert!((d.matrix() - m).norm() < 1e-12);
    }

    #[test]
    fn y_and_labels_round_trip() {
        let p = PauliString::parse("YX").unwrap();
        assert_eq!(p.get(1), Pauli::Y);
        assert_eq!(p.get(0), Pauli::X);
        assert_eq!(p.to_string(), "YX");
        let y = PauliString::parse("Y").unwrap().matrix();
        assert_eq!(y[(0, 1)], C64::new(0.0, -1.0));
        assert_eq!(y[(1, 0)], C64::new(0.0, 1.0));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            decompose_hermitian(&real(2, &[0.0, 1.0, 2.0, 0.0])),
            Err(TrotterError::NotHermitian(_))
        ));
        assert_eq!(
            decompose_hermitian(&DMatrix::zeros(3, 3)),
            Err(TrotterError::NotPowerOfTwo(3))
        );
        let spec = EvolutionSpec::new(
            decompose_hermitian(&real(2, &[1.0, 0.0, 0.0, 1.0])).unwrap(),
            1.0,
        )
        .with_slices(0);
        assert_eq!(
            trotter_circuit(&spec, &[0], 1, None),
            Err(TrotterError::ZeroSlices)
        );
    }

    #[test]
    fn pauli_x_evolution_is_x_gate() {
        let d = decompose_hermitian(&real(2, &[0.0, 1.0, 1.0, 0.0])).unwrap();
        let spec = EvolutionSpec::new(d, PI / 2.0);
        let u = trotter_circuit(&spec, &[0], 1, None).unwrap().unitary();
        // e^{-iXπ/2} = -i X
        let expected = real(2, &[0.0, 1.0, 1.0, 0.0]) * C64::new(0.0, -1.0);
        assert!((u - expected).norm() < 1e-12);
    }

    #[test]
    fn qft_matches_dft() {
        for m in 1..=3usize {
            let qubits: Vec<usize> = (0..m).collect();
            let u = qft_circuit(&qubits, m).unwrap().unitary();
            let n = 1usize << m;
            for k in 0..n {
                for l in 0..n {
                    let e = C64::from_polar(
                        1.0 / (n as f64).sqrt(),
                        2.0 * PI * (k * l) as f64 / n as f64,
                    );
                    assert!((u[(k, l)] - e).norm() < 1e-12, "m={m} k={k} l={l}");
                }
            }
        }
        let h = inverse_qft_circuit(&[0], 1).unwrap();
        assert_eq!(h.ops(), &[GateOp::H(0)]);
    }

    #[test]
    fn controlled_slice_matches_block_controlled_compile() {
        let m = real(
            4,
            &[
                1.0, 0.5, 0.0, 0.2, 0.5, -1.0, 0.3, 0.0, 0.0, 0.3, 0.7, 0.1, 0.2, 0.0, 0.1, 0.4,
            ],
        );
        let spec = EvolutionSpec::new(decompose_hermitian(&m).unwrap(), 0.7).with_slices(3);
        let powers = compiled_powers(&spec, 2).unwrap();
        for j in 0..2u32 {
            let gate_level = trotter_circuit(&spec, &[0, 1], 3, Some((2, j)))
                .unwrap()
                .unitary();
            let mut expected = DMatrix::<C64>::identity(8, 8);
            let u = &powers[j as usize];
            for r in 0..4 {
                for c in 0..4 {
                    expected[(4 + r, 4 + c)] = u[(r, c)];
                }
            }
            expected[(4, 4)] = u[(0, 0)];
            assert!((gate_level - expected).norm() < 1e-11, "power {j}");
        }
    }

    #[test]
    fn qpe_reads_eigenphase_zero_for_plus_state() {
        let d = decompose_hermitian(&real(2, &[0.0, 1.0, 1.0, 0.0])).unwrap();
        let spec = EvolutionSpec::new(d, 2.0 * PI);
        let layout = QpeLayout {
            data_qubits: vec![0],
            phase_qubits: vec![1, 2, 3],
        };
        let circ = qpe_circuit(&spec, &layout, 4).unwrap();
        let mut s = StateVector::zero(4);
        s.apply(&GateOp::H(0)).unwrap();
        s.apply_circuit(&circ).unwrap();
        let dist = s.measure_distribution(&[1, 2, 3]).unwrap();
        assert!(dist[&0] > 1.0 - 1e-10);
    }
}
