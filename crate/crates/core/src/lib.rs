//! Levenberg–Marquardt bundle adjustment whose damped linear step can be
//! solved either classically or by a statevector simulation of the HHL
//! quantum linear-system algorithm.
//!
//! Module map:
//! - [`sim`]: dense statevector simulator and circuits
//! - [`trotter`]: Pauli decomposition, Trotter–Suzuki evolution, QPE
//! - [`hhl`]: problem embedding and the HHL solver
//! - [`ba`]: toy bundle-adjustment scenes, jets, normal equations
//! - [`optimizer`]: damped LM loop with pluggable linear backends
//! - [`noise`]: gate-count based success-probability estimates

pub mod ba;
pub mod hhl;
pub mod noise;
pub mod optimizer;
pub mod sim;
pub mod trotter;
