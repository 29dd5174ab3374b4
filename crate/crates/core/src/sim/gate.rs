use std::fmt;

use nalgebra::Matrix2;

use super::{SimError, C64};

/// A control line on a gate. `on_one == false` is the open-circle control
/// that fires when the qubit is `|0>`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Control {
    pub qubit: usize,
    pub on_one: bool,
}

impl Control {
    pub fn on_one(qubit: usize) -> Self {
        Self {
            qubit,
            on_one: true,
        }
    }

    pub fn on_zero(qubit: usize) -> Self {
        Self {
            qubit,
            on_one: false,
        }
    }

    #[inline]
    pub(crate) fn fires(&self, index: usize) -> bool {
        ((index >> self.qubit) & 1 == 1) == self.on_one
    }
}

/// Euler angles of the general single-qubit gate
///
/// ```text
/// U(θ, φ, λ) = [[cos(θ/2),          -e^{iλ} sin(θ/2)],
///               [e^{iφ} sin(θ/2),  e^{i(φ+λ)} cos(θ/2)]]
/// ```
///
/// `U(θ, 0, 0)` is `Ry(θ)`, `U(0, 0, λ)` is the phase gate `diag(1, e^{iλ})`
/// and `U(π/2, 0, π)` is exactly the Hadamard.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Euler {
    pub theta: f64,
    pub phi: f64,
    pub lambda: f64,
}

impl Euler {
    pub fn new(theta: f64, phi: f64, lambda: f64) -> Self {
        Self { theta, phi, lambda }
    }

    pub fn ry(theta: f64) -> Self {
        Self::new(theta, 0.0, 0.0)
    }

    pub fn phase(lambda: f64) -> Self {
        Self::new(0.0, 0.0, lambda)
    }

    pub fn inverse(&self) -> Self {
        Self::new(-self.theta, -self.lambda, -self.phi)
    }

    pub fn matrix(&self) -> Matrix2<C64> {
        let (s, c) = (self.theta / 2.0).sin_cos();
        let e = |a: f64| C64::from_polar(1.0, a);
        Matrix2::new(
            C64::new(c, 0.0),
            -e(self.lambda) * s,
            e(self.phi) * s,
            e(self.phi + self.lambda) * c,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum GateKind {
    X,
    H,
    U,
    CX,
    CU,
    InversionRotation,
}

impl GateKind {
    pub fn name(&self) -> &'static str {
        match self {
            GateKind::X => "X",
            GateKind::H => "H",
            GateKind::U => "U",
            GateKind::CX => "CX",
            GateKind::CU => "CU",
            GateKind::InversionRotation => "INV",
        }
    }

    /// Gates acting on (or conditioned by) more than one qubit.
    pub fn is_multi_qubit(&self) -> bool {
        matches!(
            self,
            GateKind::CX | GateKind::CU | GateKind::InversionRotation
        )
    }
}

impl fmt::Display for GateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One unitary operation of a circuit.
#[derive(Debug, Clone, PartialEq)]
pub enum GateOp {
    X(usize),
    H(usize),
    U {
        target: usize,
        angles: Euler,
    },
    CX {
        control: Control,
        target: usize,
    },
    CU {
        control: Control,
        target: usize,
        angles: Euler,
    },
    /// Uniformly controlled `Ry` on `ancilla`: when the register (with
    /// `register[0]` as least-significant bit) holds the integer `k`, the
    /// ancilla is rotated by `Ry(angles[k])`.
    InversionRotation {
        register: Vec<usize>,
        ancilla: usize,
        angles: Vec<f64>,
    },
}

impl GateOp {
    pub fn ry(target: usize, theta: f64) -> Self {
        GateOp::U {
            target,
            angles: Euler::ry(theta),
        }
    }

    pub fn phase(target: usize, lambda: f64) -> Self {
        GateOp::U {
            target,
            angles: Euler::phase(lambda),
        }
    }

    pub fn cx(control: usize, target: usize) -> Self {
        GateOp::CX {
            control: Control::on_one(control),
            target,
        }
    }

    pub fn kind(&self) -> GateKind {
        match self {
            GateOp::X(_) => GateKind::X,
            GateOp::H(_) => GateKind::H,
            GateOp::U { .. } => GateKind::U,
            GateOp::CX { .. } => GateKind::CX,
            GateOp::CU { .. } => GateKind::CU,
            GateOp::InversionRotation { .. } => GateKind::InversionRotation,
        }
    }

    /// All qubits touched, targets first.
    pub fn qubits(&self) -> Vec<usize> {
        match self {
            GateOp::X(t) | GateOp::H(t) | GateOp::U { target: t, .. } => vec![*t],
            GateOp::CX { control, target }
            | GateOp::CU {
                control, target, ..
            } => vec![*target, control.qubit],
            GateOp::InversionRotation {
                register, ancilla, ..
            } => {
                let mut q = vec![*ancilla];
                q.extend_from_slice(register);
                q
            }
        }
    }

    pub fn validate(&self, n_qubits: usize) -> Result<(), SimError> {
        let qubits = self.qubits();
        for &q in &qubits {
            if q >= n_qubits {
                return Err(SimError::QubitOutOfRange { qubit: q, n_qubits });
            }
        }
        for (i, &a) in qubits.iter().enumerate() {
            if qubits[i + 1..].contains(&a) {
                return Err(SimError::OverlappingQubits(a));
            }
        }
        if let GateOp::InversionRotation {
            register, angles, ..
        } = self
        {
            let expected = 1usize << register.len();
            if angles.len() != expected {
                return Err(SimError::AngleTableLength {
                    expected,
                    got: angles.len(),
                });
            }
        }
        Ok(())
    }

    /// 2×2 matrix applied to the target for single-target kinds.
    pub fn target_matrix(&self) -> Option<Matrix2<C64>> {
        let one = C64::new(1.0, 0.0);
        let zero = C64::new(0.0, 0.0);
        match self {
            GateOp::X(_) | GateOp::CX { .. } => Some(Matrix2::new(zero, one, one, zero)),
            GateOp::H(_) => {
                let h = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
                Some(Matrix2::new(h, h, h, -h))
            }
            GateOp::U { angles, .. } | GateOp::CU { angles, .. } => Some(angles.matrix()),
            GateOp::InversionRotation { .. } => None,
        }
    }

    pub fn inverse(&self) -> GateOp {
        match self {
            GateOp::X(_) | GateOp::H(_) | GateOp::CX { .. } => self.clone(),
            GateOp::U { target, angles } => GateOp::U {
                target: *target,
                angles: angles.inverse(),
            },
            GateOp::CU {
                control,
                target,
                angles,
            } => GateOp::CU {
                control: *control,
                target: *target,
                angles: angles.inverse(),
            },
            GateOp::InversionRotation {
                register,
                ancilla,
                angles,
            } => GateOp::InversionRotation {
                register: register.clone(),
                ancilla: *ancilla,
                angles: angles.iter().map(|a| -a).collect(),
            },
        }
    }
}
