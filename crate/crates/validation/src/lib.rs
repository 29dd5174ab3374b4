//! Acceptance checks for the workspace. Everything lives in `tests/acceptance.rs`;
//! run it with `cargo test -p qlma-validation --test acceptance -- --nocapture`.
