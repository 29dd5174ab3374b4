//! Batch driver behind the `qlma` binary: seeded problem generation,
//! optimizer runs with CSV/SVG output, backend comparisons and noise
//! estimates.

pub mod config;
pub mod report;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use qlma_core::ba::{
    generate_problem, parse_problem, residuals_and_jacobian, write_problem, BaError, BaProblem,
};
use qlma_core::hhl::{embed_problem, hhl_gate_counts, EmbeddingMode, HhlError};
use qlma_core::noise::{
    circuit_success_probability, reference_counts, repeated_success, ErrorRates, InvalidRate,
};
use qlma_core::optimizer::{format_f64, optimize, ConvergenceTrace, OptimizerError};
use qlma_core::sim::{GateCounts, GateKind};

pub use config::{BackendChoice, Overrides, RunConfig};
use report::{line_plot_svg, Series, Summary};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("{0}: {1}")]
    Io(PathBuf, std::io::Error),
    #[error("{0}: {1}")]
    Scene(PathBuf, BaError),
    #[error("problem {problem}: {source}")]
    Solver {
        problem: String,
        source: OptimizerError,
    },
    #[error("seed lists differ: {0:?} vs {1:?}")]
    SeedMismatch(Vec<u64>, Vec<u64>),
    #[error(transparent)]
    Rate(#[from] InvalidRate),
    #[error("gate count: {0}")]
    Hhl(#[from] HhlError),
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|e| CliError::Io(path.to_path_buf(), e))
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io(dir.to_path_buf(), e))
}

/// Problems for a configuration, labelled `seed<N>` or by scene file stem.
pub fn load_problems(cfg: &RunConfig) -> Result<Vec<(String, BaProblem)>, CliError> {
    if let Some(path) = &cfg.scene {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(path.clone(), e))?;
        let problem = parse_problem(&text).map_err(|e| CliError::Scene(path.clone(), e))?;
        let label = path
            .file_stem()
            .map_or_else(|| "scene".to_string(), |s| s.to_string_lossy().into_owned());
        return Ok(vec![(label, problem)]);
    }
    Ok(cfg
        .seeds
        .iter()
        .map(|&s| (format!("seed{s}"), generate_problem(s)))
        .collect())
}

/// Runs every problem, at most `cfg.jobs` at a time. `on_done` sees each
/// finished run immediately (used to write traces before the batch ends).
/// Results come back in problem order regardless of scheduling.
pub fn run_batch(
    cfg: &RunConfig,
    problems: &[(String, BaProblem)],
    on_done: &(dyn Fn(&str, &ConvergenceTrace) -> Result<(), CliError> + Sync),
) -> Vec<Result<ConvergenceTrace, CliError>> {
    let options = cfg.options();
    let backend = cfg.backend();
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<ConvergenceTrace, CliError>>>> =
        Mutex::new((0..problems.len()).map(|_| None).collect());
    let workers = cfg.jobs.min(problems.len()).max(1);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some((label, problem)) = problems.get(i) else {
                    break;
                };
                let result = optimize(problem, &options, &backend)
                    .map_err(|source| CliError::Solver {
                        problem: label.clone(),
                        source,
                    })
                    .and_then(|t| on_done(label, &t).map(|_| t));
                slots.lock().unwrap()[i] = Some(result);
            });
        }
    });
    slots
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|r| r.expect("every slot filled"))
        .collect()
}

#[derive(Debug)]
pub struct RunReport {
    pub runs: Vec<(String, ConvergenceTrace)>,
    pub summary: Summary,
    pub files: Vec<PathBuf>,
}

/// `run`: one trace CSV per problem, then `summary.csv` and `summary.svg`.
/// Traces are written as runs finish, so a failing run leaves the others.
pub fn cmd_run(cfg: &RunConfig) -> Result<RunReport, CliError> {
    cfg.validate()?;
    ensure_dir(&cfg.output_dir)?;
    let problems = load_problems(cfg)?;
    let trace_path = |label: &str| cfg.output_dir.join(format!("trace_{label}.csv"));
    let results = run_batch(cfg, &problems, &|label, trace| {
        write_file(&trace_path(label), &trace.to_csv(label, cfg.timing))
    });
    let mut runs = Vec::with_capacity(results.len());
    let mut files = Vec::new();
    for ((label, _), r) in problems.iter().zip(results) {
        runs.push((label.clone(), r?));
        files.push(trace_path(label));
    }
    let summary = Summary::new(&runs, cfg.max_iters);
    let summary_csv = cfg.output_dir.join("summary.csv");
    write_file(&summary_csv, &summary.to_csv())?;
    let svg = line_plot_svg(
        &format!("{} over {} problems", cfg.label(), runs.len()),
        &[
            Series {
                label: "mean",
                color: "#1f4fd1",
                values: &summary.mean,
            },
            Series {
                label: "best",
                color: "#2a9d3a",
                values: &summary.best,
            },
            Series {
                label: "worst",
                color: "#d1301f",
                values: &summary.worst,
            },
        ],
    );
    let summary_svg = cfg.output_dir.join("summary.svg");
    write_file(&summary_svg, &svg)?;
    files.extend([summary_csv, summary_svg]);
    Ok(RunReport {
        runs,
        summary,
        files,
    })
}

pub const COMPARE_HEADER: &str = "problem,iteration,label_a,cost_a,label_b,cost_b";

/// `compare`: runs both configurations on the same problems and writes a
/// merged `compare.csv` plus one overlay CSV/SVG pair per problem.
pub fn cmd_compare(a: &RunConfig, b: &RunConfig, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    a.validate()?;
    b.validate()?;
    if a.seeds != b.seeds || a.scene != b.scene {
        return Err(CliError::SeedMismatch(a.seeds.clone(), b.seeds.clone()));
    }
    ensure_dir(out)?;
    let problems = load_problems(a)?;
    let collect = |cfg: &RunConfig| -> Result<Vec<ConvergenceTrace>, CliError> {
        run_batch(cfg, &problems, &|_, _| Ok(()))
            .into_iter()
            .collect()
    };
    let (runs_a, runs_b) = (collect(a)?, collect(b)?);
    let (la, lb) = (format!("a:{}", a.label()), format!("b:{}", b.label()));
    let iters = a.max_iters.max(b.max_iters);
    let mut merged = format!("{COMPARE_HEADER}\n");
    let mut files = Vec::new();
    for (((label, _), ta), tb) in problems.iter().zip(&runs_a).zip(&runs_b) {
        let ca: Vec<f64> = (0..=iters).map(|k| ta.cost_at(k)).collect();
        let cb: Vec<f64> = (0..=iters).map(|k| tb.cost_at(k)).collect();
        let mut panel = format!("{COMPARE_HEADER}\n");
        for k in 0..=iters {
            let row = format!(
                "{label},{k},{la},{},{lb},{}\n",
                format_f64(ca[k]),
                format_f64(cb[k])
            );
            panel.push_str(&row);
            merged.push_str(&row);
        }
        let csv = out.join(format!("compare_{label}.csv"));
        write_file(&csv, &panel)?;
        let svg = out.join(format!("compare_{label}.svg"));
        write_file(
            &svg,
            &line_plot_svg(
                label,
                &[
                    Series {
                        label: &la,
                        color: "#1f4fd1",
                        values: &ca,
                    },
                    Series {
                        label: &lb,
                        color: "#e08a1e",
                        values: &cb,
                    },
                ],
            ),
        )?;
        files.extend([csv, svg]);
    }
    let path = out.join("compare.csv");
    write_file(&path, &merged)?;
    files.push(path);
    Ok(files)
}

/// `gen`: writes `scene_<label>.txt` for every configured problem.
pub fn cmd_gen(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    cfg.validate()?;
    ensure_dir(&cfg.output_dir)?;
    load_problems(cfg)?
        .into_iter()
        .map(|(label, p)| {
            let path = cfg.output_dir.join(format!("scene_{label}.txt"));
            write_file(&path, &write_problem(&p)).map(|_| path)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseRequest {
    pub rates: ErrorRates,
    pub measured_qubits: u64,
    pub iterations: u32,
    /// Compound a given single-run probability instead of a computed one.
    pub p_single: Option<f64>,
    /// Also count the HHL circuit this configuration would build for the
    /// first problem's initial step.
    pub current: Option<RunConfig>,
}

fn counts_line(c: &GateCounts) -> String {
    let kinds = [
        GateKind::X,
        GateKind::U,
        GateKind::H,
        GateKind::CU,
        GateKind::CX,
    ];
    let parts: Vec<String> = kinds
        .iter()
        .map(|k| format!("{} {}", k.name(), c.get(*k)))
        .collect();
    format!(
        "{} (one-qubit {}, two-qubit {})",
        parts.join(", "),
        c.one_qubit,
        c.two_qubit
    )
}

/// Gate tally of the HHL circuit for the first problem's initial damped
/// camera system under `cfg`.
pub fn current_circuit_counts(cfg: &RunConfig) -> Result<GateCounts, CliError> {
    let problems = load_problems(cfg)?;
    let (label, p) = &problems[0];
    let scene_err = |e| CliError::Scene(PathBuf::from(label), e);
    let (r, jac) = residuals_and_jacobian(&p.scene, &p.initial).map_err(scene_err)?;
    let d = cfg.damping();
    let ne = qlma_core::ba::build_normal_equations(
        &r,
        &jac,
        d.lambda1_init,
        d.lambda2,
        &qlma_core::ba::jacobian_scaling(&jac),
        p.initial.layout(),
    )
    .map_err(scene_err)?;
    let (s, rhs) = qlma_core::ba::schur_reduce(&ne).map_err(scene_err)?;
    let problem = embed_problem(&s, &-rhs, EmbeddingMode::AlwaysDilate)?;
    Ok(hhl_gate_counts(&problem, &cfg.hhl_config())?)
}

fn probability(p: f64) -> String {
    if p == 0.0 || p >= 1e-3 {
        format!("{p:.6}")
    } else {
        format!("{p:.6e}")
    }
}

/// `noise`: success-probability report as printable text.
pub fn cmd_noise(req: &NoiseRequest) -> Result<String, CliError> {
    req.rates.validate()?;
    let r = &req.rates;
    let n = req.iterations;
    let mut out = String::new();
    writeln!(
        out,
        "error rates: one-qubit {}, two-qubit {}, measurement {} per qubit ({} measured)",
        r.one_qubit_gate, r.two_qubit_gate, r.measurement, req.measured_qubits
    )
    .unwrap();
    let mut section = |name: &str, counts: &GateCounts| {
        let p = circuit_success_probability(counts, req.measured_qubits, r);
        writeln!(out, "{name}: {}", counts_line(counts)).unwrap();
        writeln!(out, "  single-run success: {}", probability(p)).unwrap();
        writeln!(
            out,
            "  {n}-iteration success: {}",
            probability(repeated_success(p, n))
        )
        .unwrap();
    };
    section("reference circuit", &reference_counts());
    if let Some(cfg) = &req.current {
        let counts = current_circuit_counts(cfg)?;
        section(
            &format!(
                "current circuit ({} phase qubits, {} slices)",
                cfg.phase_qubits, cfg.trotter_slices
            ),
            &counts,
        );
    }
    if let Some(p) = req.p_single {
        if !(0.0..=1.0).contains(&p) {
            return Err(CliError::Config(format!(
                "single-run probability {p} outside [0, 1]"
            )));
        }
        writeln!(
            out,
            "given single-run success {p}: {n}-iteration success {}",
            probability(repeated_success(p, n))
        )
        .unwrap();
    }
    Ok(out)
}
