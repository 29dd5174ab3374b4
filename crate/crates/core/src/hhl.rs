//! HHL linear solver on the statevector simulator.
//!
//! Register layout for a `k`-qubit data problem with `m` phase qubits:
//! data on qubits `0..k`, the phase register on `k..k+m` and the inversion
//! ancilla on qubit `k+m`.
//!
//! The matrix is rescaled to `A' = s·A` so that its spectrum lands inside
//! the signed phase grid `{-2^{m-1}, …, 2^{m-1}-1} / 2^m`, and QPE runs with
//! `U = e^{2πiA'}` (evolution time `t = -2πs`). Phase-register integer `k`
//! reads as `λ(k) = k/2^m` for `k < 2^{m-1}` and `(k-2^m)/2^m` otherwise;
//! `k = 0` is unresolvable and left out of the inverted branch.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;

use nalgebra::{DMatrix, DVector};

use crate::sim::{scatter, Circuit, Control, GateCounts, GateOp, SimError, StateVector, C64};
use crate::trotter::{
    compiled_powers, decompose_hermitian, hermitian_deviation, inverse_qft_circuit, slice_circuit,
    EvolutionSpec, QpeLayout, TrotterError, TrotterOrder,
};

/// Post-selection probabilities below this are treated as failure.
pub const MIN_SUCCESS_PROBABILITY: f64 = 1e-12;

/// Phase bins carrying less probability than this are ignored when the
/// inversion constant is chosen automatically.
pub const AUTO_C_BIN_THRESHOLD: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum HhlError {
    #[error("matrix must be square with matching rhs (matrix {rows}x{cols}, rhs {rhs})")]
    Shape {
        rows: usize,
        cols: usize,
        rhs: usize,
    },
    #[error("right-hand side is zero")]
    ZeroRhs,
    #[error("matrix is not Hermitian (deviation {0:.3e})")]
    NotHermitian(f64),
    #[error("inversion constant {0} outside (0, 1]")]
    InversionConstant(f64),
    #[error("rotation C/λ = {ratio:.4} exceeds 1 for phase bin {bin}")]
    RotationOutOfRange { bin: usize, ratio: f64 },
    #[error("at least {min} phase qubits are required, got {got}")]
    PhaseQubits { min: usize, got: usize },
    #[error("matrix is zero; no spectral scale can be derived")]
    ZeroMatrix,
    #[error("every eigencomponent of b fell into the zero-eigenvalue phase bin")]
    ZeroEigenvalueBin,
    #[error("post-selection probability {0:.3e} is below threshold")]
    PostSelectionFailed(f64),
    #[error("amplitude vector must be normalized (norm {0})")]
    NotNormalized(f64),
    #[error(transparent)]
    Trotter(#[from] TrotterError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EmbeddingMode {
    /// Pad to a power of two; dilate only if the result is not Hermitian.
    #[default]
    Auto,
    /// Always embed into the Hermitian dilation, doubling the dimension.
    AlwaysDilate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbeddingPath {
    Identity,
    Padded,
    Dilated,
}

/// `A|x> = |b>` in the form the circuit consumes: a Hermitian `2^k × 2^k`
/// matrix and a unit-norm real right-hand side, plus what is needed to map
/// the solution back to the caller's dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianProblem {
    matrix: DMatrix<C64>,
    rhs: DVector<f64>,
    rhs_norm: f64,
    scale: f64,
    original_dim: usize,
    padded_dim: usize,
    path: EmbeddingPath,
}

impl HermitianProblem {
    /// Uses `matrix` as-is; it must already be Hermitian with power-of-two size.
    pub fn new(matrix: DMatrix<C64>, rhs: DVector<f64>) -> Result<Self, HhlError> {
        let (rows, cols) = matrix.shape();
        if rows != cols || rhs.len() != rows || !rows.is_power_of_two() {
            return Err(HhlError::Shape {
                rows,
                cols,
                rhs: rhs.len(),
            });
        }
        let dev = hermitian_deviation(&matrix);
        if dev > 1e-10 {
            return Err(HhlError::NotHermitian(dev));
        }
        let rhs_norm = rhs.norm();
        if rhs_norm == 0.0 {
            return Err(HhlError::ZeroRhs);
        }
        Ok(Self {
            matrix,
            rhs: rhs / rhs_norm,
            rhs_norm,
            scale: 1.0,
            original_dim: rows,
            padded_dim: rows,
            path: EmbeddingPath::Identity,
        })
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    /// Unit-norm right-hand side.
    pub fn rhs(&self) -> &DVector<f64> {
        &self.rhs
    }

    pub fn rhs_norm(&self) -> f64 {
        self.rhs_norm
    }

    /// Multiplier applied to the caller's matrix during embedding (always 1
    /// here; spectral rescaling for QPE is reported by the solver).
    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn path(&self) -> EmbeddingPath {
        self.path
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn n_data_qubits(&self) -> usize {
        self.dim().trailing_zeros() as usize
    }

    /// Maps a solution of the embedded system back to the caller's space.
    pub fn extract(&self, embedded: &DVector<C64>) -> DVector<f64> {
        let offset = match self.path {
            EmbeddingPath::Dilated => self.padded_dim,
            _ => 0,
        };
        DVector::from_fn(self.original_dim, |i, _| {
            embedded[offset + i].re / self.scale
        })
    }
}

/// Pads a real system to the next power of two (identity on the padded
/// diagonal, zeros in the rhs) and, if needed or requested, embeds it into
/// the Hermitian dilation `[[0, M], [Mᵀ, 0]]` with rhs `(b, 0)`; the
/// solution then sits in the second half.
pub fn embed_problem(
    matrix: &DMatrix<f64>,
    rhs: &DVector<f64>,
    mode: EmbeddingMode,
) -> Result<HermitianProblem, HhlError> {
    let (rows, cols) = matrix.shape();
    if rows != cols || rhs.len() != rows || rows == 0 {
        return Err(HhlError::Shape {
            rows,
            cols,
            rhs: rhs.len(),
        });
    }
    let rhs_norm = rhs.norm();
    if rhs_norm == 0.0 || !rhs_norm.is_finite() {
        return Err(HhlError::ZeroRhs);
    }
    let padded_dim = rows.next_power_of_two();
    let mut padded = DMatrix::<f64>::identity(padded_dim, padded_dim);
    padded.view_mut((0, 0), (rows, rows)).copy_from(matrix);
    let mut padded_rhs = DVector::zeros(padded_dim);
    padded_rhs.rows_mut(0, rows).copy_from(rhs);

    let symmetric =
        (0..padded_dim).all(|i| (0..i).all(|j| (padded[(i, j)] - padded[(j, i)]).abs() <= 1e-10));
    let dilate = mode == EmbeddingMode::AlwaysDilate || !symmetric;

    let (full, full_rhs, path) = if dilate {
        let n = 2 * padded_dim;
        let mut d = DMatrix::<f64>::zeros(n, n);
        d.view_mut((0, padded_dim), (padded_dim, padded_dim))
            .copy_from(&padded);
        d.view_mut((padded_dim, 0), (padded_dim, padded_dim))
            .copy_from(&padded.transpose());
        let mut r = DVector::zeros(n);
        r.rows_mut(0, padded_dim).copy_from(&padded_rhs);
        (d, r, EmbeddingPath::Dilated)
    } else if padded_dim != rows {
        (padded, padded_rhs, EmbeddingPath::Padded)
    } else {
        (padded, padded_rhs, EmbeddingPath::Identity)
    };
    Ok(HermitianProblem {
        matrix: full.map(|v| C64::new(v, 0.0)),
        rhs: full_rhs / rhs_norm,
        rhs_norm,
        scale: 1.0,
        original_dim: rows,
        padded_dim,
        path,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InversionConstant {
    Fixed(f64),
    /// Smallest `|λ(k)|` over the nonzero phase bins that QPE actually
    /// populates (probability above [`AUTO_C_BIN_THRESHOLD`]).
    Auto,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HhlConfig {
    pub phase_qubits: usize,
    pub order: TrotterOrder,
    pub slices: usize,
    pub inversion: InversionConstant,
    /// Overrides the Gershgorin-derived spectral scale `s` in `A' = s·A`.
    pub spectral_scale: Option<f64>,
}

impl Default for HhlConfig {
    fn default() -> Self {
        Self {
            phase_qubits: 3,
            order: TrotterOrder::Second,
            slices: EvolutionSpec::DEFAULT_SLICES,
            inversion: InversionConstant::Auto,
            spectral_scale: None,
        }
    }
}

impl HhlConfig {
    pub fn with_phase_qubits(mut self, m: usize) -> Self {
        self.phase_qubits = m;
        self
    }

    pub fn with_slices(mut self, slices: usize) -> Self {
        self.slices = slices;
        self
    }

    pub fn with_spectral_scale(mut self, s: f64) -> Self {
        self.spectral_scale = Some(s);
        self
    }

    pub fn with_inversion(mut self, c: InversionConstant) -> Self {
        self.inversion = c;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HhlSolution {
    /// Estimate of `x` in the caller's dimension.
    pub solution: DVector<f64>,
    /// Probability of reading the inversion ancilla as `|1>`.
    pub success_probability: f64,
    /// Squared cosine between the ancilla-`|1>` branch and its component with
    /// the phase register uncomputed to `|0…0>`; 1 for a clean uncompute.
    pub fidelity_proxy: f64,
    pub inversion_constant: f64,
    pub spectral_scale: f64,
    /// Phase-register distribution right after QPE.
    pub phase_distribution: BTreeMap<usize, f64>,
}

/// Signed eigenvalue encoded by phase-register integer `k` on `m` qubits.
pub fn eigenvalue_for_bin(k: usize, m: usize) -> f64 {
    let n = 1usize << m;
    if k < n / 2 {
        k as f64 / n as f64
    } else {
        (k as f64 - n as f64) / n as f64
    }
}

/// Largest row absolute sum, an upper bound on `|λ|`.
pub fn gershgorin_bound(matrix: &DMatrix<C64>) -> f64 {
    matrix
        .row_iter()
        .map(|r| r.iter().map(|v| v.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Maps the Gershgorin interval onto the largest positive grid value
/// `(2^{m-1}-1)/2^m`, which keeps `+λ_max` and `-λ_max` in distinct bins.
pub fn default_spectral_scale(matrix: &DMatrix<C64>, phase_qubits: usize) -> Result<f64, HhlError> {
    if phase_qubits < 2 {
        return Err(HhlError::PhaseQubits {
            min: 2,
            got: phase_qubits,
        });
    }
    let bound = gershgorin_bound(matrix);
    if bound == 0.0 {
        return Err(HhlError::ZeroMatrix);
    }
    let top = ((1usize << (phase_qubits - 1)) - 1) as f64 / (1usize << phase_qubits) as f64;
    Ok(top / bound)
}

/// Uniformly controlled `Ry` as `2^c` single-qubit rotations interleaved with
/// `2^c` CX gates along a Gray-code walk over the controls.
pub(crate) fn uniformly_controlled_ry(
    controls: &[usize],
    target: usize,
    angles: &[f64],
) -> Vec<GateOp> {
    let n = angles.len();
    debug_assert_eq!(n, 1 << controls.len());
    if controls.is_empty() {
        return vec![GateOp::ry(target, angles[0])];
    }
    let gray = |i: usize| i ^ (i >> 1);
    let mut ops = Vec::with_capacity(2 * n);
    for i in 0..n {
        let g = gray(i);
        let theta = angles
            .iter()
            .enumerate()
            .map(|(k, a)| {
                if (k & g).count_ones() % 2 == 0 {
                    *a
                } else {
                    -*a
                }
            })
            .sum::<f64>()
            / n as f64;
        ops.push(GateOp::ry(target, theta));
        let flip = (g ^ gray((i + 1) % n)).trailing_zeros() as usize;
        ops.push(GateOp::cx(controls[flip], target));
    }
    ops
}

const ANGLE_EPS: f64 = 1e-14;

/// Amplitude encoding `|0…0> → Σ_i rhs_i |i>` for real unit-norm `rhs` by a
/// binary tree of uniformly controlled `Ry` rotations, top qubit first.
/// Layers whose angles are all equal collapse to one uncontrolled rotation,
/// and an uncontrolled `Ry(π/2)` acting on a fresh `|0>` is emitted as `H`.
pub fn state_preparation_circuit(
    rhs: &[f64],
    data_qubits: &[usize],
    n_qubits: usize,
) -> Result<Circuit, HhlError> {
    let k = data_qubits.len();
    if rhs.len() != 1 << k {
        return Err(HhlError::Shape {
            rows: 1 << k,
            cols: 1 << k,
            rhs: rhs.len(),
        });
    }
    let norm = rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > 1e-10 {
        return Err(HhlError::NotNormalized(norm));
    }
    let mut circuit = Circuit::new(n_qubits);
    for q in (0..k).rev() {
        let controls = &data_qubits[q + 1..];
        let block = 1usize << q;
        let angles: Vec<f64> = (0..1usize << controls.len())
            .map(|c| {
                let base = c << (q + 1);
                if q == 0 {
                    2.0 * rhs[base | 1].atan2(rhs[base])
                } else {
                    let half = |off: usize| {
                        rhs[base + off..base + off + block]
                            .iter()
                            .map(|v| v * v)
                            .sum::<f64>()
                            .sqrt()
                    };
                    2.0 * half(block).atan2(half(0))
                }
            })
            .collect();
        let target = data_qubits[q];
        let uniform = angles.iter().all(|a| (a - angles[0]).abs() < ANGLE_EPS);
        if uniform {
            let a = angles[0];
            if a.abs() < ANGLE_EPS {
                continue;
            }
            if (a - FRAC_PI_2).abs() < ANGLE_EPS {
                circuit.push(GateOp::H(target))?;
            } else {
                circuit.push(GateOp::ry(target, a))?;
            }
        } else {
            for op in uniformly_controlled_ry(controls, target, &angles) {
                circuit.push(op)?;
            }
        }
    }
    Ok(circuit)
}

/// Rotation angles `2·arcsin(C/λ(k))` per phase bin; bin 0 is left alone.
/// Bins flagged as unpopulated may have `|λ(k)| < C`; they are clamped to a
/// full rotation instead of failing.
fn inversion_angles(m: usize, c: f64, populated: Option<&[bool]>) -> Result<Vec<f64>, HhlError> {
    (0..1usize << m)
        .map(|k| {
            if k == 0 {
                return Ok(0.0);
            }
            let ratio = c / eigenvalue_for_bin(k, m);
            if ratio.abs() > 1.0 + 1e-12 {
                match populated {
                    Some(p) if !p[k] => return Ok(2.0 * ratio.signum() * FRAC_PI_2),
                    _ => return Err(HhlError::RotationOutOfRange { bin: k, ratio }),
                }
            }
            Ok(2.0 * ratio.clamp(-1.0, 1.0).asin())
        })
        .collect()
}

fn check_c(c: f64) -> Result<(), HhlError> {
    if !(c > 0.0 && c <= 1.0) {
        return Err(HhlError::InversionConstant(c));
    }
    Ok(())
}

/// Controlled inversion for an explicit eigenvalue table: register value
/// `k` rotates the ancilla to `√(1-C²/λ_k²)|0> + (C/λ_k)|1>`; entries equal
/// to zero leave the ancilla alone.
pub fn inversion_rotation_for_eigenvalues(
    register: &[usize],
    ancilla: usize,
    eigenvalues: &[f64],
    c: f64,
    n_qubits: usize,
) -> Result<Circuit, HhlError> {
    check_c(c)?;
    if eigenvalues.len() != 1 << register.len() {
        return Err(HhlError::Shape {
            rows: 1 << register.len(),
            cols: 1 << register.len(),
            rhs: eigenvalues.len(),
        });
    }
    let angles = eigenvalues
        .iter()
        .enumerate()
        .map(|(bin, &l)| {
            if l == 0.0 {
                return Ok(0.0);
            }
            let ratio = c / l;
            if ratio.abs() > 1.0 + 1e-12 {
                return Err(HhlError::RotationOutOfRange { bin, ratio });
            }
            Ok(2.0 * ratio.clamp(-1.0, 1.0).asin())
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut circuit = Circuit::new(n_qubits);
    for op in uniformly_controlled_ry(register, ancilla, &angles) {
        circuit.push(op)?;
    }
    Ok(circuit)
}

/// Eigenvalue-inversion rotation as elementary gates: for phase value `k`
/// the ancilla ends in `√(1-C²/λ(k)²)|0> + (C/λ(k))|1>`.
pub fn inversion_rotation_circuit(
    layout: &QpeLayout,
    ancilla: usize,
    c: f64,
    n_qubits: usize,
) -> Result<Circuit, HhlError> {
    check_c(c)?;
    let angles = inversion_angles(layout.n_phase_qubits(), c, None)?;
    let mut circuit = Circuit::new(n_qubits);
    for op in uniformly_controlled_ry(&layout.phase_qubits, ancilla, &angles) {
        circuit.push(op)?;
    }
    Ok(circuit)
}

/// The same rotation as a single compound [`GateOp::InversionRotation`].
pub fn inversion_rotation_op(
    layout: &QpeLayout,
    ancilla: usize,
    c: f64,
) -> Result<GateOp, HhlError> {
    check_c(c)?;
    Ok(GateOp::InversionRotation {
        register: layout.phase_qubits.clone(),
        ancilla,
        angles: inversion_angles(layout.n_phase_qubits(), c, None)?,
    })
}

struct Plan {
    k: usize,
    m: usize,
    n_qubits: usize,
    layout: QpeLayout,
    ancilla: usize,
    spec: EvolutionSpec,
    scale: f64,
}

fn plan(problem: &HermitianProblem, config: &HhlConfig) -> Result<Plan, HhlError> {
    let k = problem.n_data_qubits();
    let m = config.phase_qubits;
    if m == 0 {
        return Err(HhlError::PhaseQubits { min: 1, got: 0 });
    }
    if let InversionConstant::Fixed(c) = config.inversion {
        check_c(c)?;
    }
    let scale = match config.spectral_scale {
        Some(s) => s,
        None => default_spectral_scale(problem.matrix(), m)?,
    };
    let decomposition = decompose_hermitian(problem.matrix())?;
    let spec = EvolutionSpec {
        decomposition,
        time: -2.0 * std::f64::consts::PI * scale,
        slices: config.slices,
        order: config.order,
    };
    spec.validate()?;
    let layout = QpeLayout {
        data_qubits: (0..k).collect(),
        phase_qubits: (k..k + m).collect(),
    };
    Ok(Plan {
        k,
        m,
        n_qubits: k + m + 1,
        ancilla: k + m,
        layout,
        spec,
        scale,
    })
}

fn choose_c(
    config: &HhlConfig,
    dist: &BTreeMap<usize, f64>,
    m: usize,
) -> Result<(f64, Vec<bool>), HhlError> {
    let populated: Vec<bool> = (0..1usize << m)
        .map(|k| dist.get(&k).copied().unwrap_or(0.0) > AUTO_C_BIN_THRESHOLD)
        .collect();
    let c = match config.inversion {
        InversionConstant::Fixed(c) => c,
        InversionConstant::Auto => (1..1usize << m)
            .filter(|&k| populated[k])
            .map(|k| eigenvalue_for_bin(k, m).abs())
            .fold(f64::INFINITY, f64::min),
    };
    if !c.is_finite() {
        return Err(HhlError::ZeroEigenvalueBin);
    }
    Ok((c, populated))
}

/// Runs the HHL circuit on the statevector simulator: prepare `|b>`, QPE,
/// controlled inversion rotation, inverse QPE, post-select the ancilla on
/// `|1>`. The data-register amplitudes with the phase register back in
/// `|0…0>` are read exactly from the simulated state and de-normalized by
/// `‖b‖·s/C`.
///
/// Controlled `U^{2^j}` blocks execute as compiled dense unitaries (see
/// [`compiled_powers`]); every other stage runs gate by gate.
pub fn hhl_solve(problem: &HermitianProblem, config: &HhlConfig) -> Result<HhlSolution, HhlError> {
    let p = plan(problem, config)?;
    let powers = compiled_powers(&p.spec, p.m)?;
    let data = &p.layout.data_qubits;
    let phase = &p.layout.phase_qubits;

    let mut state = StateVector::zero(p.n_qubits);
    let prep = state_preparation_circuit(problem.rhs().as_slice(), data, p.n_qubits)?;
    state.apply_circuit(&prep)?;
    for &q in phase {
        state.apply(&GateOp::H(q))?;
    }
    for (j, &q) in phase.iter().enumerate() {
        state.apply_block(Some(Control::on_one(q)), data, &powers[j])?;
    }
    let iqft = inverse_qft_circuit(phase, p.n_qubits)?;
    state.apply_circuit(&iqft)?;

    let phase_distribution = state.measure_distribution(phase)?;
    if phase_distribution.get(&0).copied().unwrap_or(0.0) >= 1.0 - MIN_SUCCESS_PROBABILITY {
        return Err(HhlError::ZeroEigenvalueBin);
    }
    let (c, populated) = choose_c(config, &phase_distribution, p.m)?;
    let angles = inversion_angles(p.m, c, Some(&populated))?;
    for op in uniformly_controlled_ry(phase, p.ancilla, &angles) {
        state.apply(&op)?;
    }

    state.apply_circuit(&iqft.inverse())?;
    for (j, &q) in phase.iter().enumerate().rev() {
        state.apply_block(Some(Control::on_one(q)), data, &powers[j].adjoint())?;
    }
    for &q in phase {
        state.apply(&GateOp::H(q))?;
    }

    let success_probability = state.probability(p.ancilla, true)?;
    if success_probability < MIN_SUCCESS_PROBABILITY {
        return Err(HhlError::PostSelectionFailed(success_probability));
    }
    let anc_bit = 1usize << p.ancilla;
    let amps = state.amplitudes();
    let factor = problem.rhs_norm() * p.scale / c;
    let embedded = DVector::from_fn(1 << p.k, |i, _| amps[scatter(i, data) | anc_bit] * factor);
    let clean: f64 = (0..1usize << p.k)
        .map(|i| amps[scatter(i, data) | anc_bit].norm_sqr())
        .sum();
    Ok(HhlSolution {
        solution: problem.extract(&embedded),
        success_probability,
        fidelity_proxy: clean / success_probability,
        inversion_constant: c,
        spectral_scale: p.scale,
        phase_distribution,
    })
}

/// The full gate-level HHL circuit for a given inversion constant. This
/// materializes every Trotter slice, so it is only practical for small
/// problems and slice counts; it exists to cross-check [`hhl_solve`] and
/// [`hhl_gate_counts`].
pub fn hhl_circuit(
    problem: &HermitianProblem,
    config: &HhlConfig,
    c: f64,
) -> Result<Circuit, HhlError> {
    let p = plan(problem, config)?;
    let mut circuit =
        state_preparation_circuit(problem.rhs().as_slice(), &p.layout.data_qubits, p.n_qubits)?;
    let qpe = crate::trotter::qpe_circuit(&p.spec, &p.layout, p.n_qubits)?;
    circuit.append(&qpe)?;
    circuit.append(&inversion_rotation_circuit(
        &p.layout, p.ancilla, c, p.n_qubits,
    )?)?;
    circuit.append(&qpe.inverse())?;
    Ok(circuit)
}

/// Elementary gate tally of [`hhl_circuit`], computed from its building
/// blocks without materializing the repeated Trotter slices.
pub fn hhl_gate_counts(
    problem: &HermitianProblem,
    config: &HhlConfig,
) -> Result<GateCounts, HhlError> {
    let p = plan(problem, config)?;
    let prep =
        state_preparation_circuit(problem.rhs().as_slice(), &p.layout.data_qubits, p.n_qubits)?;
    let slice = slice_circuit(
        &p.spec,
        &p.layout.data_qubits,
        p.n_qubits,
        Some(p.layout.phase_qubits[0]),
    )?;
    let iqft = inverse_qft_circuit(&p.layout.phase_qubits, p.n_qubits)?;

    let mut qpe = GateCounts::default();
    qpe.record(crate::sim::GateKind::H, p.m as u64);
    let repetitions = p.spec.slices as u64 * ((1u64 << p.m) - 1);
    qpe += &slice.gate_counts().times(repetitions);
    qpe += &iqft.gate_counts();

    let mut total = prep.gate_counts();
    total += &qpe.times(2);
    let inversion =
        uniformly_controlled_ry(&p.layout.phase_qubits, p.ancilla, &vec![0.0; 1 << p.m]);
    let mut inv = Circuit::new(p.n_qubits);
    for op in inversion {
        inv.push(op)?;
    }
    total += &inv.gate_counts();
    Ok(total)
}

/// The three-qubit worked example: qubit 0 holds the data, qubit 1 the
/// single QPE qubit and qubit 2 the inversion ancilla. `step_ends[s]` is the
/// number of operations applied once step `s + 1` is complete.
#[derive(Debug, Clone)]
pub struct WorkedExampleCircuit {
    pub circuit: Circuit,
    pub step_ends: [usize; 5],
}

pub fn worked_example_circuit() -> WorkedExampleCircuit {
    let (data, qpe, anc) = (0, 1, 2);
    let ops = [
        GateOp::H(data),
        GateOp::H(qpe),
        GateOp::cx(qpe, data),
        GateOp::H(qpe),
        GateOp::CX {
            control: Control::on_zero(qpe),
            target: anc,
        },
        GateOp::H(qpe),
        GateOp::cx(qpe, data),
        GateOp::H(qpe),
    ];
    let mut circuit = Circuit::new(3);
    for op in ops {
        circuit.push(op).expect("static circuit");
    }
    WorkedExampleCircuit {
        circuit,
        step_ends: [1, 2, 3, 4, 5],
    }
}

/// Dense oracle: solves the caller's system with LU, for comparisons.
pub fn classical_solve(matrix: &DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    matrix.clone().lu().solve(rhs)
}

#[cfg(test)]
mod tests {
    use std::f64::consts::FRAC_1_SQRT_2;

    use super::*;
    use crate::sim::GateKind;

    fn dm(rows: usize, data: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(rows, rows, data)
    }

    #[test]
    fn embedding_paths() {
        let p = embed_problem(
            &dm(2, &[0.0, 1.0, 1.0, 0.0]),
            &DVector::from_vec(vec![FRAC_1_SQRT_2; 2]),
            EmbeddingMode::Auto,
        )
        .unwrap();
        assert_eq!(p.path(), EmbeddingPath::Identity);
        assert_eq!(p.dim(), 2);

        let p = embed_problem(
            &DMatrix::identity(3, 3),
            &DVector::from_vec(vec![1.0, 0.0, 0.0]),
            EmbeddingMode::Auto,
        )
        .unwrap();
        assert_eq!(p.path(), EmbeddingPath::Padded);
        assert_eq!(p.matrix(), &DMatrix::<C64>::identity(4, 4));
        assert_eq!(p.rhs().as_slice(), &[1.0, 0.0, 0.0, 0.0]);

        let a = DMatrix::from_fn(12, 12, |i, j| 1.0 / (1.0 + i as f64 + j as f64));
        let p = embed_problem(
            &a,
            &DVector::from_element(12, 1.0),
            EmbeddingMode::AlwaysDilate,
        )
        .unwrap();
        assert_eq!(p.dim(), 32);
        assert_eq!(p.n_data_qubits(), 5);
        assert_eq!(p.path(), EmbeddingPath::Dilated);

        let nonsym = dm(2, &[1.0, 2.0, 0.0, 1.0]);
        let p = embed_problem(
            &nonsym,
            &DVector::from_vec(vec![1.0, 1.0]),
            EmbeddingMode::Auto,
        )
        .unwrap();
        assert_eq!(p.path(), EmbeddingPath::Dilated);

        assert_eq!(
            embed_problem(&nonsym, &DVector::zeros(2), EmbeddingMode::Auto),
            Err(HhlError::ZeroRhs)
        );
    }

    #[test]
    fn dilated_nonsymmetric_system_solves() {
        let m = dm(2, &[2.0, 1.0, 0.0, 1.0]);
        let b = DVector::from_vec(vec![1.0, 2.0]);
        let p = embed_problem(&m, &b, EmbeddingMode::Auto).unwrap();
        // Classical solve of the embedded system, projected back.
        let full = p.matrix().map(|v| v.re);
        let y = full.lu().solve(&p.rhs().map(|v| v * p.rhs_norm())).unwrap();
        let x = p.extract(&y.map(|v| C64::new(v, 0.0)));
        let expected = classical_solve(&m, &b).unwrap();
        assert!((x - expected).norm() < 1e-12);
    }

    #[test]
    fn state_preparation_examples() {
        assert!(state_preparation_circuit(&[1.0, 0.0], &[0], 1)
            .unwrap()
            .is_empty());
        let h = state_preparation_circuit(&[FRAC_1_SQRT_2, FRAC_1_SQRT_2], &[0], 1).unwrap();
        assert_eq!(h.ops(), &[GateOp::H(0)]);
        let hh = state_preparation_circuit(&[0.5; 4], &[0, 1], 2).unwrap();
        assert_eq!(hh.ops(), &[GateOp::H(1), GateOp::H(0)]);
        assert!(matches!(
            state_preparation_circuit(&[1.0, 1.0], &[0], 1),
            Err(HhlError::NotNormalized(_))
        ));
    }

    #[test]
    fn state_preparation_is_exact_for_signed_vectors() {
        let raw = [0.3, -0.1, 0.0, 0.7, -0.2, 0.05, -0.4, 0.25];
        let norm = raw.iter().map(|v: &f64| v * v).sum::<f64>().sqrt();
        let rhs: Vec<f64> = raw.iter().map(|v| v / norm).collect();
        let circ = state_preparation_circuit(&rhs, &[1, 2, 3], 4).unwrap();
        let mut s = StateVector::zero(4);
        s.apply_circuit(&circ).unwrap();
        for (i, r) in rhs.iter().enumerate() {
            let a = s.amplitudes()[scatter(i, &[1, 2, 3])];
            assert!((a - C64::new(*r, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn uniformly_controlled_ry_matches_compound_gate() {
        let angles = [0.0, 0.4, -1.1, 2.0, 0.3, -0.7, 1.5, -2.9];
        let mut elementary = Circuit::new(4);
        for op in uniformly_controlled_ry(&[0, 1, 2], 3, &angles) {
            elementary.push(op).unwrap();
        }
        let mut compound = Circuit::new(4);
        compound
            .push(GateOp::InversionRotation {
                register: vec![0, 1, 2],
                ancilla: 3,
                angles: angles.to_vec(),
            })
            .unwrap();
        assert!((elementary.unitary() - compound.unitary()).norm() < 1e-12);
        let counts = elementary.gate_counts();
        assert_eq!((counts.get(GateKind::U), counts.get(GateKind::CX)), (8, 8));
    }

    #[test]
    fn inversion_rotation_examples() {
        let layout = QpeLayout {
            data_qubits: vec![],
            phase_qubits: vec![0, 1, 2],
        };
        // λ(1) = 1/8 with C = 1/8: full rotation to |1>.
        let circ = inversion_rotation_circuit(&layout, 3, 0.125, 4).unwrap();
        let mut s = StateVector::basis(4, 1);
        s.apply_circuit(&circ).unwrap();
        assert!((s.amplitudes()[1 | 8] - C64::new(1.0, 0.0)).norm() < 1e-12);

        // C/λ = 0.5: amplitudes (√0.75, 0.5) for λ(2)=1/4, C=1/8.
        let mut s = StateVector::basis(4, 2);
        s.apply_circuit(&circ).unwrap();
        assert!((s.amplitudes()[2].re - 0.75f64.sqrt()).abs() < 1e-12);
        assert!((s.amplitudes()[2 | 8].re - 0.5).abs() < 1e-12);

        // Bin 0 is untouched.
        let mut s = StateVector::basis(4, 0);
        s.apply_circuit(&circ).unwrap();
        assert_eq!(s, StateVector::basis(4, 0));

        assert!(matches!(
            inversion_rotation_circuit(&layout, 3, 0.25, 4),
            Err(HhlError::RotationOutOfRange { .. })
        ));
        assert!(matches!(
            inversion_rotation_circuit(&layout, 3, 0.0, 4),
            Err(HhlError::InversionConstant(_))
        ));
    }

    #[test]
    fn inversion_for_explicit_eigenvalues() {
        // One register qubit (q0), ancilla q1.
        let amp1 = |eigs: &[f64], c: f64, k: usize| {
            let circ = inversion_rotation_for_eigenvalues(&[0], 1, eigs, c, 2).unwrap();
            let mut s = StateVector::basis(2, k);
            s.apply_circuit(&circ).unwrap();
            (s.amplitudes()[k].re, s.amplitudes()[k | 2].re)
        };
        let (a0, a1) = amp1(&[1.0, 1.0], 1.0, 0);
        assert!(a0.abs() < 1e-12 && (a1 - 1.0).abs() < 1e-12);
        let (a0, a1) = amp1(&[1.0, 1.0], 0.5, 1);
        assert!((a0 - 0.75f64.sqrt()).abs() < 1e-12 && (a1 - 0.5).abs() < 1e-12);
        let (_, b0) = amp1(&[0.5, 1.0], 0.5, 0);
        let (_, b1) = amp1(&[0.5, 1.0], 0.5, 1);
        assert!((b0 - 1.0).abs() < 1e-12 && (b1 - 0.5).abs() < 1e-12);
    }

    #[test]
    fn bin_readout_is_twos_complement() {
        let got: Vec<f64> = (0..8).map(|k| eigenvalue_for_bin(k, 3)).collect();
        assert_eq!(
            got,
            vec![0.0, 0.125, 0.25, 0.375, -0.5, -0.375, -0.25, -0.125]
        );
    }

    #[test]
    fn identity_system_returns_rhs() {
        let b = DVector::from_vec(vec![0.3, -1.2, 0.5]);
        let p = embed_problem(&DMatrix::identity(3, 3), &b, EmbeddingMode::Auto).unwrap();
        let sol = hhl_solve(&p, &HhlConfig::default()).unwrap();
        assert!((&sol.solution - &b).norm() < 1e-8);
        assert!((sol.success_probability - 1.0).abs() < 1e-10);
    }
}
