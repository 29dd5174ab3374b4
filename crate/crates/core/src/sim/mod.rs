//! Dense statevector simulator.
//!
//! Qubit 0 is the least significant bit of the amplitude index, so the
//! basis state `|q_{n-1} ... q_1 q_0>` lives at index `Σ q_k 2^k`. Every
//! register in this crate (QPE phase register, data register) follows the
//! same rule: its first listed qubit is its least significant bit.

mod circuit;
mod gate;
mod state;

pub use circuit::{Circuit, GateCounts};
pub use gate::{Control, Euler, GateKind, GateOp};
pub(crate) use state::scatter;
pub use state::StateVector;

pub use nalgebra::Complex;

pub type C64 = Complex<f64>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("qubit {qubit} out of range for {n_qubits}-qubit register")]
    QubitOutOfRange { qubit: usize, n_qubits: usize },
    #[error("qubit {0} used more than once in one operation")]
    OverlappingQubits(usize),
    #[error("state has {state} qubits but circuit has {circuit}")]
    QubitCountMismatch { state: usize, circuit: usize },
    #[error("amplitude count {0} is not a power of two")]
    NotPowerOfTwo(usize),
    #[error("angle table has {got} entries, expected {expected}")]
    AngleTableLength { expected: usize, got: usize },
    #[error("block unitary is {rows}x{cols}, expected {expected}x{expected}")]
    BlockShape {
        expected: usize,
        rows: usize,
        cols: usize,
    },
    #[error("outcome {} on qubit {qubit} has zero probability", u8::from(*outcome))]
    ZeroProbability { qubit: usize, outcome: bool },
}

#[cfg(test)]
mod tests {
    use std::f64::consts::{FRAC_1_SQRT_2, PI};

    use proptest::prelude::*;

    use super::*;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    fn max_dev_from_identity(m: &nalgebra::DMatrix<C64>) -> f64 {
        let prod = m * m.adjoint();
        let mut worst = 0.0f64;
        for i in 0..prod.nrows() {
            for j in 0..prod.ncols() {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((prod[(i, j)] - c(target)).norm());
            }
        }
        worst
    }

    fn assert_amps(s: &StateVector, expected: &[C64], tol: f64) {
        for (a, e) in s.amplitudes().iter().zip(expected) {
            assert!(
                (a - e).norm() < tol,
                "{:?} vs {:?}",
                s.amplitudes(),
                expected
            );
        }
    }

    #[test]
    fn hadamard_on_zero_gives_plus() {
        let mut s = StateVector::zero(1);
        s.apply(&GateOp::H(0)).unwrap();
        assert_amps(&s, &[c(FRAC_1_SQRT_2), c(FRAC_1_SQRT_2)], 1e-15);
    }

    #[test]
    fn cx_matches_printed_matrix() {
        // |q1 q0> = |10>: control q1 set, target q0 flips.
        let mut s = StateVector::basis(2, 0b10);
        s.apply(&GateOp::cx(1, 0)).unwrap();
        assert_eq!(s, StateVector::basis(2, 0b11));

        let mut circ = Circuit::new(2);
        circ.push(GateOp::cx(1, 0)).unwrap();
        let u = circ.unitary();
        let expected = [
            [1.0, 0.0, 0.0, 0.0],
            [0.0, 1.0, 0.0, 0.0],
            [0.0, 0.0, 0.0, 1.0],
            [0.0, 0.0, 1.0, 0.0],
        ];
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(u[(i, j)], c(expected[i][j]));
            }
        }
    }

    #[test]
    fn open_control_fires_on_zero() {
        let mut s = StateVector::zero(2);
        s.apply(&GateOp::CX {
            control: Control::on_zero(1),
            target: 0,
        })
        .unwrap();
        assert_eq!(s, StateVector::basis(2, 0b01));
    }

    #[test]
    fn u_special_cases() {
        let h = GateOp::U {
            target: 0,
            angles: Euler::new(PI / 2.0, 0.0, PI),
        };
        let (a, b) = (
            h.target_matrix().unwrap(),
            GateOp::H(0).target_matrix().unwrap(),
        );
        assert!((a - b).norm() < 1e-15);
    }

    #[test]
    fn invalid_indices_rejected() {
        let mut s = StateVector::zero(2);
        assert_eq!(
            s.apply(&GateOp::X(2)),
            Err(SimError::QubitOutOfRange {
                qubit: 2,
                n_qubits: 2
            })
        );
        assert_eq!(
            s.apply(&GateOp::cx(1, 1)),
            Err(SimError::OverlappingQubits(1))
        );
        let mut circ = Circuit::new(3);
        assert!(circ.push(GateOp::H(0)).is_ok());
        assert!(s.apply_circuit(&circ).is_err());
    }

    #[test]
    fn empty_circuit_and_hh_are_identity() {
        let mut s = StateVector::zero(1);
        s.apply_circuit(&Circuit::new(1)).unwrap();
        assert_eq!(s, StateVector::zero(1));
        let mut hh = Circuit::new(1);
        hh.push(GateOp::H(0)).unwrap().push(GateOp::H(0)).unwrap();
        s.apply_circuit(&hh).unwrap();
        assert_amps(&s, &[c(1.0), c(0.0)], 1e-15);
    }

    #[test]
    fn post_selection_examples() {
        // |1> ⊗ |ψ>: selecting qubit 1 == 1 is certain.
        let mut s = StateVector::basis(2, 0b10);
        s.apply(&GateOp::H(0)).unwrap();
        let (post, p) = s.post_select(1, true).unwrap();
        assert!((p - 1.0).abs() < 1e-15);
        assert_eq!(post, s);

        let mut plus = StateVector::zero(1);
        plus.apply(&GateOp::H(0)).unwrap();
        let (post, p) = plus.post_select(0, false).unwrap();
        assert!((p - 0.5).abs() < 1e-15);
        assert_amps(&post, &[c(1.0), c(0.0)], 1e-15);

        assert_eq!(
            StateVector::zero(1).post_select(0, true),
            Err(SimError::ZeroProbability {
                qubit: 0,
                outcome: true
            })
        );
    }

    #[test]
    fn distribution_examples() {
        let d = StateVector::zero(1).measure_distribution(&[0]).unwrap();
        assert_eq!(d.into_iter().collect::<Vec<_>>(), vec![(0, 1.0)]);
        let mut plus = StateVector::zero(1);
        plus.apply(&GateOp::H(0)).unwrap();
        let d = plus.measure_distribution(&[0]).unwrap();
        assert!((d[&0] - 0.5).abs() < 1e-15 && (d[&1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn gate_count_examples() {
        let empty = Circuit::new(2).gate_counts();
        assert_eq!((empty.one_qubit, empty.two_qubit), (0, 0));
        assert!(empty.per_kind.is_empty());

        let mut circ = Circuit::new(2);
        circ.push(GateOp::H(0)).unwrap();
        circ.push(GateOp::cx(0, 1)).unwrap();
        circ.push(GateOp::cx(0, 1)).unwrap();
        let counts = circ.gate_counts();
        assert_eq!((counts.one_qubit, counts.two_qubit), (1, 2));
        assert_eq!(counts.get(GateKind::H), 1);
        assert_eq!(counts.get(GateKind::CX), 2);
    }

    #[test]
    fn block_application_matches_gates() {
        // CX(1→0) then H(2), as a block on targets [0, 2] controlled by qubit 1,
        // versus the same gates applied directly.
        let mut local = Circuit::new(2);
        local
            .push(GateOp::X(0))
            .unwrap()
            .push(GateOp::H(1))
            .unwrap();
        let u = local.unitary();
        let mut direct = StateVector::zero(3);
        direct.apply(&GateOp::H(1)).unwrap();
        let mut blocked = direct.clone();
        direct.apply(&GateOp::cx(1, 0)).unwrap();
        direct
            .apply(&GateOp::CU {
                control: Control::on_one(1),
                target: 2,
                angles: Euler::new(PI / 2.0, 0.0, PI),
            })
            .unwrap();
        blocked
            .apply_block(Some(Control::on_one(1)), &[0, 2], &u)
            .unwrap();
        assert_amps(&blocked, direct.amplitudes(), 1e-14);
    }

    fn arb_op(n: usize) -> impl Strategy<Value = GateOp> {
        let angle = -PI..PI;
        let q = 0..n;
        prop_oneof![
            q.clone().prop_map(GateOp::X),
            q.clone().prop_map(GateOp::H),
            (q.clone(), angle.clone(), angle.clone(), angle.clone()).prop_map(|(t, a, b, l)| {
                GateOp::U {
                    target: t,
                    angles: Euler::new(a, b, l),
                }
            }),
            (q.clone(), 1..n, any::<bool>()).prop_map(move |(t, d, pol)| GateOp::CX {
                control: Control {
                    qubit: (t + d) % n,
                    on_one: pol
                },
                target: t,
            }),
            (
                q.clone(),
                1..n,
                any::<bool>(),
                angle.clone(),
                angle.clone(),
                angle.clone()
            )
                .prop_map(move |(t, d, pol, a, b, l)| GateOp::CU {
                    control: Control {
                        qubit: (t + d) % n,
                        on_one: pol
                    },
                    target: t,
                    angles: Euler::new(a, b, l),
                }),
            (q, proptest::collection::vec(-PI..PI, 4)).prop_map(move |(t, angles)| {
                GateOp::InversionRotation {
                    register: vec![(t + 1) % n, (t + 2) % n],
                    ancilla: t,
                    angles,
                }
            }),
        ]
    }

    fn arb_state(n: usize) -> impl Strategy<Value = StateVector> {
        proptest::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 1 << n).prop_filter_map(
            "nonzero",
            |v| {
                let amps: Vec<C64> = v.into_iter().map(|(r, i)| C64::new(r, i)).collect();
                let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
                (norm > 1e-3).then(|| {
                    StateVector::from_amplitudes(amps.into_iter().map(|a| a / norm).collect())
                        .unwrap()
                })
            },
        )
    }

    proptest! {
        #[test]
        fn every_gate_is_unitary(op in arb_op(3)) {
            let mut circ = Circuit::new(3);
            circ.push(op).unwrap();
            prop_assert!(max_dev_from_identity(&circ.unitary()) < 1e-12);
        }

        #[test]
        fn gates_preserve_norm(op in arb_op(3), s in arb_state(3)) {
            let mut s = s;
            s.apply(&op).unwrap();
            prop_assert!((s.norm() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn circuits_compose(a in proptest::collection::vec(arb_op(3), 0..6),
                            b in proptest::collection::vec(arb_op(3), 0..6),
                            s in arb_state(3)) {
            let mut c1 = Circuit::new(3);
            for op in a { c1.push(op).unwrap(); }
            let mut c2 = Circuit::new(3);
            for op in b { c2.push(op).unwrap(); }
            let mut joined = c1.clone();
            joined.append(&c2).unwrap();
            let mut seq = s.clone();
            seq.apply_circuit(&c1).unwrap();
            seq.apply_circuit(&c2).unwrap();
            let mut once = s;
            once.apply_circuit(&joined).unwrap();
            for (x, y) in seq.amplitudes().iter().zip(once.amplitudes()) {
                prop_assert!((x - y).norm() < 1e-12);
            }
            let counts = joined.gate_counts();
            prop_assert_eq!(counts.total() as usize, joined.len());
        }

        #[test]
        fn inverse_undoes_circuit(a in proptest::collection::vec(arb_op(3), 0..8), s in arb_state(3)) {
            let mut circ = Circuit::new(3);
            for op in a { circ.push(op).unwrap(); }
            circ.add_global_phase(0.3);
            let mut t = s.clone();
            t.apply_circuit(&circ).unwrap();
            t.apply_circuit(&circ.inverse()).unwrap();
            for (x, y) in t.amplitudes().iter().zip(s.amplitudes()) {
                prop_assert!((x - y).norm() < 1e-12);
            }
        }

        #[test]
        fn post_selection_reconstructs_unit_mass(s in arb_state(3), q in 0..3usize) {
            let mut total = 0.0;
            for outcome in [false, true] {
                if let Ok((post, p)) = s.post_select(q, outcome) {
                    prop_assert!((post.norm() - 1.0).abs() < 1e-12);
                    total += p * post.norm().powi(2);
                }
            }
            prop_assert!((total - 1.0).abs() < 1e-12);
            let dist = s.measure_distribution(&[0, 2]).unwrap();
            prop_assert!((dist.values().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
