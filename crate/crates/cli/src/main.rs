use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use qlma_cli::config::{parse_seeds, resolve, BackendChoice, Overrides};
use qlma_cli::{cmd_compare, cmd_gen, cmd_noise, cmd_run, CliError, NoiseRequest};
use qlma_core::noise::ErrorRates;

#[derive(Parser)]
#[command(
    name = "qlma",
    version,
    about = "Levenberg-Marquardt bundle adjustment with a simulated HHL linear solver"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optimize a batch of problems and write traces, summary and plot.
    Run(RunArgs),
    /// Run two configurations on the same problems and overlay them.
    Compare(CompareArgs),
    /// Print gate counts and success-probability estimates.
    Noise(NoiseArgs),
    /// Write generated problems in the scene text format.
    Gen(RunArgs),
}

#[derive(Args, Clone, Default)]
struct RunArgs {
    /// Seed list, e.g. 1..9 or 1,3,5.
    #[arg(long)]
    seeds: Option<String>,
    /// Damping setup (1 or 2).
    #[arg(long)]
    setup: Option<u8>,
    /// classical | classical-dense | hhl
    #[arg(long)]
    backend: Option<String>,
    #[arg(long)]
    iters: Option<usize>,
    /// Trotter slices per controlled-U application.
    #[arg(long)]
    slices: Option<usize>,
    #[arg(long)]
    phase_qubits: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Problems optimized in parallel.
    #[arg(long)]
    jobs: Option<usize>,
    /// key=value file; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Record wall-clock seconds in the traces (breaks byte-identical output).
    #[arg(long)]
    timing: bool,
    /// Replay a saved scene instead of generating problems.
    #[arg(long)]
    scene: Option<PathBuf>,
}

impl RunArgs {
    fn overrides(&self) -> Result<Overrides, CliError> {
        Ok(Overrides {
            seeds: self.seeds.as_deref().map(parse_seeds).transpose()?,
            setup: self.setup,
            backend: self
                .backend
                .as_deref()
                .map(BackendChoice::parse)
                .transpose()?,
            max_iters: self.iters,
            output_dir: self.out.clone(),
            trotter_slices: self.slices,
            phase_qubits: self.phase_qubits,
            jobs: self.jobs,
            timing: self.timing.then_some(true),
            scene: self.scene.clone(),
        })
    }

    fn resolve(&self, extra: Option<&Overrides>) -> Result<qlma_cli::RunConfig, CliError> {
        let file = self
            .config
            .as_deref()
            .map(Overrides::from_file)
            .transpose()?;
        let mut flags = self.overrides()?;
        if let Some(extra) = extra {
            flags = flags.layered(extra);
        }
        let offset = std::env::var("QLMA_SEED_OFFSET").ok();
        resolve(file.as_ref(), &flags, offset.as_deref())
    }
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    common: RunArgs,
    /// Settings of the first run as key=value pairs.
    #[arg(long, default_value = "backend=hhl,setup=1")]
    a: String,
    /// Settings of the second run as key=value pairs.
    #[arg(long, default_value = "backend=classical,setup=1")]
    b: String,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Ibmq,
    Experimental,
    Zero,
}

#[derive(Args)]
struct NoiseArgs {
    #[arg(long, value_enum, default_value = "experimental")]
    preset: Preset,
    /// Override the one-qubit gate error rate.
    #[arg(long)]
    p1: Option<f64>,
    /// Override the two-qubit gate error rate.
    #[arg(long)]
    p2: Option<f64>,
    /// Override the per-qubit measurement error rate.
    #[arg(long)]
    pm: Option<f64>,
    /// Number of measured qubits.
    #[arg(long, default_value_t = 0)]
    measured: u64,
    #[arg(long, default_value_t = 10)]
    iterations: u32,
    /// Compound this single-run probability as well.
    #[arg(long)]
    p_single: Option<f64>,
    /// Skip counting the HHL circuit for the configured problem.
    #[arg(long)]
    reference_only: bool,
    #[command(flatten)]
    common: RunArgs,
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run(args) => {
            let cfg = args.resolve(None)?;
            let report = cmd_run(&cfg)?;
            let n = report.runs.len();
            let last = report.summary.mean.last().copied().unwrap_or(f64::NAN);
            println!(
                "{}: {n} problems, mean cost {:.6} -> {:.6}; wrote {}",
                cfg.label(),
                report.summary.mean[0],
                last,
                cfg.output_dir.display()
            );
        }
        Command::Compare(args) => {
            let a = args
                .common
                .resolve(Some(&Overrides::from_inline(&args.a)?))?;
            let b = args
                .common
                .resolve(Some(&Overrides::from_inline(&args.b)?))?;
            let files = cmd_compare(&a, &b, &a.output_dir)?;
            println!(
                "{} vs {}: wrote {} files to {}",
                a.label(),
                b.label(),
                files.len(),
                a.output_dir.display()
            );
        }
        Command::Noise(args) => {
            let base = match args.preset {
                Preset::Ibmq => ErrorRates::IBMQ,
                Preset::Experimental => ErrorRates::EXPERIMENTAL,
                Preset::Zero => ErrorRates::NOISELESS,
            };
            let rates = ErrorRates::new(
                args.p1.unwrap_or(base.one_qubit_gate),
                args.p2.unwrap_or(base.two_qubit_gate),
                args.pm.unwrap_or(base.measurement),
            )?;
            let current = if args.reference_only {
                None
            } else {
                Some(args.common.resolve(None)?)
            };
            print!(
                "{}",
                cmd_noise(&NoiseRequest {
                    rates,
                    measured_qubits: args.measured,
                    iterations: args.iterations,
                    p_single: args.p_single,
                    current,
                })?
            );
        }
        Command::Gen(args) => {
            let cfg = args.resolve(None)?;
            for path in cmd_gen(&cfg)? {
                println!("{}", path.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("qlma: {e}");
            ExitCode::FAILURE
        }
    }
}
