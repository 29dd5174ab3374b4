//! Levenberg–Marquardt loop with Ω-driven damping, step mixing and a
//! pluggable linear solver for the damped normal equations.

use std::fmt::Write;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use crate::ba::{
    back_substitute, build_normal_equations, jacobian_scaling, join_step, residuals,
    residuals_and_jacobian, schur_reduce, total_cost, BaError, BaProblem, Estimate,
    ParameterLayout, Scene,
};
use crate::hhl::{embed_problem, hhl_solve, EmbeddingMode, HhlConfig, HhlError};

pub const CSV_HEADER: &str =
    "problem,iteration,cost,lambda1,omega,step_norm,accepted,backend,seconds";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OptimizerError {
    #[error("damped system is singular")]
    Singular,
    #[error("invalid damping configuration: {0}")]
    InvalidDamping(String),
    #[error("max_iters must be at least 1")]
    NoIterations,
    #[error("cost is not finite ({0})")]
    NonFiniteCost(f64),
    #[error("HHL step failed: {0}")]
    Hhl(#[from] HhlError),
    #[error(transparent)]
    Ba(#[from] BaError),
}

impl OptimizerError {
    /// Failures that reject the current iteration instead of aborting.
    fn is_recoverable(&self) -> bool {
        matches!(
            self,
            OptimizerError::Singular
                | OptimizerError::Hhl(HhlError::PostSelectionFailed(_))
                | OptimizerError::Hhl(HhlError::ZeroEigenvalueBin)
                | OptimizerError::Ba(BaError::SingularPointBlock(_))
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DampingConfig {
    pub lambda1_init: f64,
    pub lambda2: f64,
    pub lambda_up: f64,
    pub lambda_down: f64,
}

impl DampingConfig {
    pub const SETUP_1: DampingConfig = DampingConfig {
        lambda1_init: 0.01,
        lambda2: 0.01,
        lambda_up: 1.5,
        lambda_down: 0.7,
    };
    pub const SETUP_2: DampingConfig = DampingConfig {
        lambda1_init: 1e-4,
        lambda2: 1e-4,
        lambda_up: 1.1,
        lambda_down: 0.9,
    };

    pub fn validate(&self) -> Result<(), OptimizerError> {
        let ok = self.lambda_up > 1.0
            && self.lambda_down > 0.0
            && self.lambda_down < 1.0
            && self.lambda1_init > 0.0
            && self.lambda2 > 0.0;
        if ok {
            Ok(())
        } else {
            Err(OptimizerError::InvalidDamping(format!("{self:?}")))
        }
    }

    /// Weight of the previous step in the mixed update.
    pub fn mixing_weight(&self) -> f64 {
        self.lambda2 / (1.0 + self.lambda2)
    }
}

/// Sign convention for the Ω thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ThresholdRule {
    /// Raise if `Ω > 0` or `Δ > Ω/4`; lower if `Δ < Ω/2`. With `Ω < 0`
    /// this asks for a reduction of at least `|Ω|/4` resp. `|Ω|/2`.
    #[default]
    Signed,
    /// Thresholds taken as `−Ω/4` and `−Ω/2` verbatim.
    Literal,
}

/// Next `λ1` from Ω and the change of the squared residual norm
/// (`Δ = new − old`).
pub fn update_damping(
    lambda1: f64,
    omega: f64,
    delta_cost_sq: f64,
    cfg: &DampingConfig,
    rule: ThresholdRule,
) -> f64 {
    let (up, down) = match rule {
        ThresholdRule::Signed => (omega / 4.0, omega / 2.0),
        ThresholdRule::Literal => (-omega / 4.0, -omega / 2.0),
    };
    if omega > 0.0 || delta_cost_sq > up {
        lambda1 * cfg.lambda_up
    } else if delta_cost_sq < down {
        lambda1 * cfg.lambda_down
    } else {
        lambda1
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub enum LinearBackend {
    ClassicalDense,
    #[default]
    ClassicalSchur,
    Hhl(HhlConfig),
}

impl LinearBackend {
    pub fn id(&self) -> &'static str {
        match self {
            LinearBackend::ClassicalDense => "classical-dense",
            LinearBackend::ClassicalSchur => "classical-schur",
            LinearBackend::Hhl(_) => "hhl",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub delta: DVector<f64>,
    /// Post-selection probability when the HHL backend produced the step.
    pub success_probability: Option<f64>,
}

fn solve_dense(m: DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>, OptimizerError> {
    let x = m.lu().solve(rhs).ok_or(OptimizerError::Singular)?;
    if x.iter().all(|v| v.is_finite()) {
        Ok(x)
    } else {
        Err(OptimizerError::Singular)
    }
}

/// Solves `(JᵀJ + λ1·DᵀD + λ2·I)·δ = −Jᵀr` with `DᵀD = diag(JᵀJ)`.
pub fn lma_step(
    r: &DVector<f64>,
    jac: &DMatrix<f64>,
    lambda1: f64,
    lambda2: f64,
    layout: ParameterLayout,
    backend: &LinearBackend,
) -> Result<Step, OptimizerError> {
    let ne = build_normal_equations(r, jac, lambda1, lambda2, &jacobian_scaling(jac), layout)?;
    if ne.gradient().iter().all(|g| *g == 0.0) {
        return Ok(Step {
            delta: DVector::zeros(layout.n_params()),
            success_probability: None,
        });
    }
    match backend {
        LinearBackend::ClassicalDense => Ok(Step {
            delta: solve_dense(ne.full_matrix(), &-ne.gradient())?,
            success_probability: None,
        }),
        LinearBackend::ClassicalSchur => {
            let (s, rhs) = schur_reduce(&ne)?;
            let dc = solve_dense(s, &-rhs)?;
            let dp = back_substitute(&ne, &dc)?;
            Ok(Step {
                delta: join_step(&dc, &dp),
                success_probability: None,
            })
        }
        LinearBackend::Hhl(config) => {
            let (s, rhs) = schur_reduce(&ne)?;
            let problem = embed_problem(&s, &-rhs, EmbeddingMode::AlwaysDilate)?;
            let sol = hhl_solve(&problem, config)?;
            let dp = back_substitute(&ne, &sol.solution)?;
            Ok(Step {
                delta: join_step(&sol.solution, &dp),
                success_probability: Some(sol.success_probability),
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeOptions {
    pub damping: DampingConfig,
    pub max_iters: usize,
    pub rule: ThresholdRule,
    /// Stop, leaving θ untouched, once a step is shorter than this.
    pub step_tolerance: f64,
    /// Candidates raising the cost by more than this are rejected.
    pub reject_tolerance: f64,
    /// When set, every iteration also solves with this backend and records
    /// the relative gap between the two steps.
    pub reference: Option<LinearBackend>,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        Self {
            damping: DampingConfig::SETUP_1,
            max_iters: 40,
            rule: ThresholdRule::Signed,
            step_tolerance: 1e-12,
            reject_tolerance: 1e-12,
            reference: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Cost after the accept/reject decision.
    pub cost: f64,
    /// `λ1` after this iteration's update.
    pub lambda1: f64,
    pub omega: f64,
    pub step_norm: f64,
    pub accepted: bool,
    pub seconds: f64,
    pub success_probability: Option<f64>,
    pub reference_gap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTrace {
    pub backend: String,
    pub initial_cost: f64,
    pub initial_lambda1: f64,
    pub records: Vec<IterationRecord>,
    pub estimate: Estimate,
}

impl ConvergenceTrace {
    pub fn final_cost(&self) -> f64 {
        self.records.last().map_or(self.initial_cost, |r| r.cost)
    }

    /// Cost at iteration `k` (0 is the initial cost); runs that stopped early
    /// hold their last value.
    pub fn cost_at(&self, k: usize) -> f64 {
        if k == 0 {
            return self.initial_cost;
        }
        self.records
            .iter()
            .take_while(|r| r.iteration <= k)
            .last()
            .map_or(self.initial_cost, |r| r.cost)
    }

    /// CSV with an iteration-0 row for the starting point. Timing is written
    /// as 0 unless `timing` is set, so outputs are reproducible.
    pub fn to_csv(&self, problem: &str, timing: bool) -> String {
        let mut s = String::from(CSV_HEADER);
        s.push('\n');
        self.write_csv_rows(&mut s, problem, timing);
        s
    }

    pub fn write_csv_rows(&self, out: &mut String, problem: &str, timing: bool) {
        let f = format_f64;
        writeln!(
            out,
            "{problem},0,{},{},0,0,true,{},0",
            f(self.initial_cost),
            f(self.initial_lambda1),
            self.backend
        )
        .unwrap();
        for r in &self.records {
            let secs = if timing { r.seconds } else { 0.0 };
            writeln!(
                out,
                "{problem},{},{},{},{},{},{},{},{}",
                r.iteration,
                f(r.cost),
                f(r.lambda1),
                f(r.omega),
                f(r.step_norm),
                r.accepted,
                self.backend,
                f(secs)
            )
            .unwrap();
        }
    }
}

/// Shortest round-trip form, switching to exponent notation for very
/// small or large magnitudes.
pub fn format_f64(v: f64) -> String {
    let a = v.abs();
    if a == 0.0 || (1e-4..1e15).contains(&a) || !a.is_finite() {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

fn relative_gap(a: &DVector<f64>, reference: &DVector<f64>) -> f64 {
    let denom = reference.norm();
    if denom == 0.0 {
        a.norm()
    } else {
        (a - reference).norm() / denom
    }
}

/// Candidate cost and squared residual norm; `None` if the candidate is
/// unusable (a point behind a camera or a non-finite value).
fn evaluate(scene: &Scene, est: &Estimate) -> Option<(f64, f64)> {
    let cost = total_cost(scene, est).ok()?;
    let r2 = residuals(scene, est).ok()?.norm_squared();
    (cost.is_finite() && r2.is_finite()).then_some((cost, r2))
}

pub fn optimize(
    problem: &BaProblem,
    options: &OptimizeOptions,
    backend: &LinearBackend,
) -> Result<ConvergenceTrace, OptimizerError> {
    options.damping.validate()?;
    if options.max_iters == 0 {
        return Err(OptimizerError::NoIterations);
    }
    let scene = &problem.scene;
    let mut est = problem.initial.clone();
    let layout = est.layout();
    let n = layout.n_params() as f64;
    let (mut r, mut jac) = residuals_and_jacobian(scene, &est)?;
    let mut cost = total_cost(scene, &est)?;
    if !cost.is_finite() {
        return Err(OptimizerError::NonFiniteCost(cost));
    }
    let mut lambda1 = options.damping.lambda1_init;
    let lambda2 = options.damping.lambda2;
    let w = options.damping.mixing_weight();
    let mut previous: Option<DVector<f64>> = None;
    let mut trace = ConvergenceTrace {
        backend: backend.id().to_string(),
        initial_cost: cost,
        initial_lambda1: lambda1,
        records: Vec::with_capacity(options.max_iters),
        estimate: est.clone(),
    };

    for iteration in 1..=options.max_iters {
        let started = Instant::now();
        let gradient = jac.tr_mul(&r);
        let omega = previous.as_ref().map_or(0.0, |d| gradient.dot(d) / n);

        let (mut accepted, mut step_norm, mut success_probability, mut reference_gap) =
            (false, 0.0, None, None);
        match lma_step(&r, &jac, lambda1, lambda2, layout, backend) {
            Ok(step) => {
                success_probability = step.success_probability;
                if let Some(reference) = &options.reference {
                    let ref_step = lma_step(&r, &jac, lambda1, lambda2, layout, reference)?;
                    reference_gap = Some(relative_gap(&step.delta, &ref_step.delta));
                }
                let mixed = match &previous {
                    Some(p) => &step.delta * (1.0 - w) + p * w,
                    None => step.delta,
                };
                step_norm = mixed.norm();
                if step_norm < options.step_tolerance {
                    trace.records.push(IterationRecord {
                        iteration,
                        cost,
                        lambda1,
                        omega,
                        step_norm,
                        accepted: true,
                        seconds: started.elapsed().as_secs_f64(),
                        success_probability,
                        reference_gap,
                    });
                    break;
                }
                let candidate = est.retract(&mixed);
                if let Some((new_cost, new_r2)) = evaluate(scene, &candidate) {
                    if new_cost <= cost + options.reject_tolerance {
                        accepted = true;
                        let delta_sq = new_r2 - r.norm_squared();
                        lambda1 = update_damping(
                            lambda1,
                            omega,
                            delta_sq,
                            &options.damping,
                            options.rule,
                        );
                        est = candidate;
                        cost = new_cost;
                        (r, jac) = residuals_and_jacobian(scene, &est)?;
                        previous = Some(mixed);
                    }
                }
            }
            Err(e) if e.is_recoverable() => {}
            Err(e) => return Err(e),
        }
        if !accepted {
            lambda1 *= options.damping.lambda_up;
        }
        trace.records.push(IterationRecord {
            iteration,
            cost,
            lambda1,
            omega,
            step_norm,
            accepted,
            seconds: started.elapsed().as_secs_f64(),
            success_probability,
            reference_gap,
        });
    }
    trace.estimate = est;
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ba::{generate_problem, generate_problem_with, GeneratorConfig};

    fn cfg() -> DampingConfig {
        DampingConfig::SETUP_1
    }

    #[test]
    fn damping_examples() {
        let up = update_damping(1.0, 1.0, -100.0, &cfg(), ThresholdRule::Signed);
        assert_eq!(up, 1.5);
        assert_eq!(
            update_damping(1.0, -1.0, -0.9, &cfg(), ThresholdRule::Signed),
            0.7
        );
        assert_eq!(
            update_damping(1.0, -1.0, -0.3, &cfg(), ThresholdRule::Signed),
            1.0
        );
        assert_eq!(
            update_damping(1.0, -1.0, 0.1, &cfg(), ThresholdRule::Signed),
            1.5
        );
        // The verbatim thresholds lower λ1 for any decrease when Ω < 0.
        assert_eq!(
            update_damping(1.0, -1.0, -0.3, &cfg(), ThresholdRule::Literal),
            0.7
        );
        assert_eq!(
            update_damping(1.0, 1.0, 0.0, &cfg(), ThresholdRule::Literal),
            1.5
        );
    }

    #[test]
    fn setups_validate() {
        DampingConfig::SETUP_1.validate().unwrap();
        DampingConfig::SETUP_2.validate().unwrap();
        let bad = DampingConfig {
            lambda_up: 0.9,
            ..DampingConfig::SETUP_1
        };
        assert!(bad.validate().is_err());
        assert!((DampingConfig::SETUP_1.mixing_weight() - 0.01 / 1.01).abs() < 1e-15);
    }

    #[test]
    fn identity_jacobian_step_is_negative_residual() {
        let layout = ParameterLayout {
            n_cameras: 1,
            n_points: 1,
        };
        let jac = DMatrix::identity(9, 9);
        let r = DVector::from_fn(9, |i, _| i as f64 - 3.0);
        for backend in [LinearBackend::ClassicalDense, LinearBackend::ClassicalSchur] {
            let step = lma_step(&r, &jac, 0.0, 0.0, layout, &backend).unwrap();
            assert!((step.delta + &r).norm() < 1e-14);
        }
    }

    #[test]
    fn noiseless_problem_stops_immediately() {
        let p = generate_problem_with(3, &GeneratorConfig::noiseless());
        for backend in [
            LinearBackend::ClassicalDense,
            LinearBackend::Hhl(HhlConfig::default()),
        ] {
            let trace = optimize(&p, &OptimizeOptions::default(), &backend).unwrap();
            assert_eq!(trace.records.len(), 1);
            assert_eq!(trace.final_cost(), 0.0);
        }
    }

    #[test]
    fn setup_two_decreases_cost_on_first_accepted_steps() {
        let p = generate_problem(1);
        let opts = OptimizeOptions {
            damping: DampingConfig::SETUP_2,
            max_iters: 5,
            ..OptimizeOptions::default()
        };
        let trace = optimize(&p, &opts, &LinearBackend::ClassicalDense).unwrap();
        let mut last = trace.initial_cost;
        for rec in trace.records.iter().filter(|r| r.accepted) {
            assert!(rec.cost < last);
            last = rec.cost;
        }
    }

    #[test]
    fn csv_layout() {
        let p = generate_problem(2);
        let opts = OptimizeOptions {
            max_iters: 3,
            ..OptimizeOptions::default()
        };
        let trace = optimize(&p, &opts, &LinearBackend::ClassicalSchur).unwrap();
        let csv = trace.to_csv("p2", false);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines.len(), 2 + trace.records.len());
        assert!(lines[1].starts_with("p2,0,"));
        assert!(lines
            .iter()
            .skip(1)
            .all(|l| l.ends_with(",classical-schur,0")));
    }

    #[test]
    fn number_format_round_trips() {
        for v in [0.0, 1.5, 1.1398846164274569e-15, 123456.789, -2.5e-7, 3e20] {
            assert_eq!(format_f64(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(format_f64(1e-15), "1e-15");
        assert_eq!(format_f64(0.01), "0.01");
    }

    #[test]
    fn invalid_options() {
        let p = generate_problem(2);
        let opts = OptimizeOptions {
            max_iters: 0,
            ..OptimizeOptions::default()
        };
        assert_eq!(
            optimize(&p, &opts, &LinearBackend::ClassicalDense),
            Err(OptimizerError::NoIterations)
        );
    }
}
