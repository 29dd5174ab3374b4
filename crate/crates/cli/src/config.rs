//! Run configuration: defaults, `key=value` files and command-line overrides.

use std::path::{Path, PathBuf};

use qlma_core::hhl::HhlConfig;
use qlma_core::optimizer::{DampingConfig, LinearBackend, OptimizeOptions};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackendChoice {
    Classical,
    ClassicalDense,
    Hhl,
}

impl BackendChoice {
    pub fn parse(s: &str) -> Result<Self, CliError> {
        match s {
            "classical" | "classical-schur" => Ok(Self::Classical),
            "classical-dense" => Ok(Self::ClassicalDense),
            "hhl" | "quantum" => Ok(Self::Hhl),
            other => Err(CliError::Config(format!("unknown backend {other:?}"))),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Self::Classical => "classical",
            Self::ClassicalDense => "classical-dense",
            Self::Hhl => "hhl",
        }
    }
}

/// Fully resolved settings for one batch.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seeds: Vec<u64>,
    pub setup: u8,
    pub backend: BackendChoice,
    pub max_iters: usize,
    pub output_dir: PathBuf,
    pub trotter_slices: usize,
    pub phase_qubits: usize,
    pub jobs: usize,
    pub timing: bool,
    pub scene: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seeds: (1..=9).collect(),
            setup: 1,
            backend: BackendChoice::Hhl,
            max_iters: 40,
            output_dir: PathBuf::from("out"),
            trotter_slices: 50,
            phase_qubits: 3,
            jobs: 1,
            timing: false,
            scene: None,
        }
    }
}

impl RunConfig {
    pub fn damping(&self) -> DampingConfig {
        match self.setup {
            2 => DampingConfig::SETUP_2,
            _ => DampingConfig::SETUP_1,
        }
    }

    pub fn hhl_config(&self) -> HhlConfig {
        HhlConfig::default()
            .with_phase_qubits(self.phase_qubits)
            .with_slices(self.trotter_slices)
    }

    pub fn backend(&self) -> LinearBackend {
        match self.backend {
            BackendChoice::Classical => LinearBackend::ClassicalSchur,
            BackendChoice::ClassicalDense => LinearBackend::ClassicalDense,
            BackendChoice::Hhl => LinearBackend::Hhl(self.hhl_config()),
        }
    }

    pub fn options(&self) -> OptimizeOptions {
        OptimizeOptions {
            damping: self.damping(),
            max_iters: self.max_iters,
            ..OptimizeOptions::default()
        }
    }

    /// Short label such as `hhl-setup1`.
    pub fn label(&self) -> String {
        format!("{}-setup{}", self.backend.label(), self.setup)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.seeds.is_empty() {
            return Err(CliError::Config("seed list is empty".into()));
        }
        if !matches!(self.setup, 1 | 2) {
            return Err(CliError::Config(format!(
                "setup must be 1 or 2, got {}",
                self.setup
            )));
        }
        if self.max_iters == 0 || self.trotter_slices == 0 || self.jobs == 0 {
            return Err(CliError::Config(
                "iters, slices and jobs must be positive".into(),
            ));
        }
        if self.phase_qubits < 2 {
            return Err(CliError::Config(
                "at least 2 phase qubits are required".into(),
            ));
        }
        Ok(())
    }
}

/// Partial settings from one source; later sources override earlier ones.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seeds: Option<Vec<u64>>,
    pub setup: Option<u8>,
    pub backend: Option<BackendChoice>,
    pub max_iters: Option<usize>,
    pub output_dir: Option<PathBuf>,
    pub trotter_slices: Option<usize>,
    pub phase_qubits: Option<usize>,
    pub jobs: Option<usize>,
    pub timing: Option<bool>,
    pub scene: Option<PathBuf>,
}

impl Overrides {
    pub fn apply(&self, base: &mut RunConfig) {
        if let Some(v) = &self.seeds {
            base.seeds = v.clone();
        }
        macro_rules! set {
            ($($f:ident),*) => {$(if let Some(v) = &self.$f { base.$f = v.clone(); })*};
        }
        set!(
            setup,
            backend,
            max_iters,
            output_dir,
            trotter_slices,
            phase_qubits,
            jobs,
            timing
        );
        if let Some(v) = &self.scene {
            base.scene = Some(v.clone());
        }
    }

    /// `self` with every field set in `top` replaced by `top`'s value.
    pub fn layered(&self, top: &Overrides) -> Overrides {
        Overrides {
            seeds: top.seeds.clone().or_else(|| self.seeds.clone()),
            setup: top.setup.or(self.setup),
            backend: top.backend.or(self.backend),
            max_iters: top.max_iters.or(self.max_iters),
            output_dir: top.output_dir.clone().or_else(|| self.output_dir.clone()),
            trotter_slices: top.trotter_slices.or(self.trotter_slices),
            phase_qubits: top.phase_qubits.or(self.phase_qubits),
            jobs: top.jobs.or(self.jobs),
            timing: top.timing.or(self.timing),
            scene: top.scene.clone().or_else(|| self.scene.clone()),
        }
    }

    /// Parses `key=value` pairs; accepted keys mirror the long flags
    /// (`phase-qubits` and `phase_qubits` are both fine).
    pub fn from_pairs<'a>(
        pairs: impl IntoIterator<Item = (usize, &'a str)>,
    ) -> Result<Self, CliError> {
        let mut o = Overrides::default();
        for (line, raw) in pairs {
            let text = raw.trim();
            if text.is_empty() || text.starts_with('#') {
                continue;
            }
            let (k, v) = text.split_once('=').ok_or_else(|| {
                CliError::Config(format!("line {line}: expected key=value, got {text:?}"))
            })?;
            let (k, v) = (k.trim().replace('_', "-"), v.trim());
            let bad = |what: &str| CliError::Config(format!("line {line}: invalid {what} {v:?}"));
            match k.as_str() {
                "seeds" => o.seeds = Some(parse_seeds(v)?),
                "setup" => o.setup = Some(v.parse().map_err(|_| bad("setup"))?),
                "backend" => o.backend = Some(BackendChoice::parse(v)?),
                "iters" | "max-iters" => o.max_iters = Some(v.parse().map_err(|_| bad("iters"))?),
                "out" | "output-dir" => o.output_dir = Some(PathBuf::from(v)),
                "slices" | "trotter-slices" => {
                    o.trotter_slices = Some(v.parse().map_err(|_| bad("slices"))?)
                }
                "phase-qubits" => {
                    o.phase_qubits = Some(v.parse().map_err(|_| bad("phase-qubits"))?)
                }
                "jobs" => o.jobs = Some(v.parse().map_err(|_| bad("jobs"))?),
                "timing" => o.timing = Some(v.parse().map_err(|_| bad("timing"))?),
                "scene" => o.scene = Some(PathBuf::from(v)),
                other => {
                    return Err(CliError::Config(format!(
                        "line {line}: unknown key {other:?}"
                    )))
                }
            }
        }
        Ok(o)
    }

    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| CliError::Io(path.to_path_buf(), e))?;
        Self::from_pairs(text.lines().enumerate().map(|(i, l)| (i + 1, l)))
    }

    /// Comma-separated `key=value` list, as accepted by `compare --a/--b`.
    pub fn from_inline(spec: &str) -> Result<Self, CliError> {
        Self::from_pairs(split_inline(spec).into_iter().map(|s| (1, s)))
    }
}

/// Splits on commas that start a new `key=`, so `seeds=1,2,backend=hhl`
/// keeps the seed list intact.
fn split_inline(spec: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    for (i, _) in spec.match_indices(',') {
        let rest = &spec[i + 1..];
        let next_is_key = rest
            .split(',')
            .next()
            .is_some_and(|seg| seg.contains('=') && !seg.starts_with(|c: char| c.is_ascii_digit()));
        if next_is_key {
            out.push(&spec[start..i]);
            start = i + 1;
        }
    }
    out.push(&spec[start..]);
    out
}

/// Seed lists like `1..9`, `1-9`, `3` or `1,4,7..9` (ranges inclusive).
pub fn parse_seeds(s: &str) -> Result<Vec<u64>, CliError> {
    let bad = || CliError::Config(format!("invalid seed list {s:?}"));
    let mut seeds = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let range = part.split_once("..").or_else(|| part.split_once('-'));
        match range {
            Some((a, b)) => {
                let a: u64 = a.trim().parse().map_err(|_| bad())?;
                let b: u64 = b
                    .trim_start_matches('=')
                    .trim()
                    .parse()
                    .map_err(|_| bad())?;
                if b < a {
                    return Err(bad());
                }
                seeds.extend(a..=b);
            }
            None => seeds.push(part.parse().map_err(|_| bad())?),
        }
    }
    if seeds.is_empty() {
        return Err(bad());
    }
    Ok(seeds)
}

/// Applies a seed offset (from `QLMA_SEED_OFFSET`).
pub fn shift_seeds(seeds: &[u64], offset: Option<&str>) -> Result<Vec<u64>, CliError> {
    let Some(raw) = offset.map(str::trim).filter(|s| !s.is_empty()) else {
        return Ok(seeds.to_vec());
    };
    let off: i64 = raw
        .parse()
        .map_err(|_| CliError::Config(format!("QLMA_SEED_OFFSET is not an integer: {raw:?}")))?;
    seeds
        .iter()
        .map(|&s| {
            s.checked_add_signed(off).ok_or_else(|| {
                CliError::Config(format!("seed {s} shifted by {off} is out of range"))
            })
        })
        .collect()
}

/// Default → config file → flags, then the seed offset.
pub fn resolve(
    file: Option<&Overrides>,
    flags: &Overrides,
    seed_offset: Option<&str>,
) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::default();
    if let Some(f) = file {
        f.apply(&mut cfg);
    }
    flags.apply(&mut cfg);
    cfg.seeds = shift_seeds(&cfg.seeds, seed_offset)?;
    cfg.validate()?;
    Ok(cfg)
}
