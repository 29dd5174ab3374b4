use std::process::Command;

use qlma_cli::config::{parse_seeds, BackendChoice};
use qlma_cli::{cmd_compare, cmd_gen, cmd_noise, cmd_run, CliError, NoiseRequest, RunConfig};
use qlma_core::noise::ErrorRates;

fn config(dir: &std::path::Path, seeds: &[u64], iters: usize) -> RunConfig {
    RunConfig {
        seeds: seeds.to_vec(),
        max_iters: iters,
        output_dir: dir.to_path_buf(),
        ..RunConfig::default()
    }
}

#[test]
fn single_iteration_trace_has_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let report = cmd_run(&config(dir.path(), &[4], 1)).unwrap();
    let csv = std::fs::read_to_string(dir.path().join("trace_seed4.csv")).unwrap();
    let rows: Vec<&str> = csv
        .lines()
        .skip(1)
        .filter(|l| !l.starts_with("seed4,0,"))
        .collect();
    assert_eq!(rows.len(), 1);
    assert!(rows[0].starts_with("seed4,1,"));
    assert_eq!(report.runs[0].1.records.len(), 1);
}

#[test]
fn summary_mean_matches_traces() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig {
        backend: BackendChoice::Classical,
        ..config(dir.path(), &[1, 2, 3], 6)
    };
    let report = cmd_run(&cfg).unwrap();
    for k in 0..=6 {
        let mean = report.runs.iter().map(|(_, t)| t.cost_at(k)).sum::<f64>() / 3.0;
        assert!((report.summary.mean[k] - mean).abs() < 1e-12);
    }
    let summary = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 8);
    let svg = std::fs::read_to_string(dir.path().join("summary.svg")).unwrap();
    assert_eq!(svg.matches("<polyline").count(), 3);
}

#[test]
fn compare_writes_panels_and_rejects_mismatched_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let a = config(dir.path(), &[1, 2], 3);
    let files = cmd_compare(&a, &a, dir.path()).unwrap();
    assert_eq!(files.len(), 5);
    let panel = std::fs::read_to_string(dir.path().join("compare_seed2.csv")).unwrap();
    for line in panel.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        assert_eq!(f[3], f[5], "identical configs give identical curves");
    }
    let b = config(dir.path(), &[1, 3], 3);
    assert!(matches!(
        cmd_compare(&a, &b, dir.path()),
        Err(CliError::SeedMismatch(..))
    ));
}

#[test]
fn generated_scene_replays_identically() {
    let dir = tempfile::tempdir().unwrap();
    let files = cmd_gen(&config(dir.path(), &[7], 5)).unwrap();
    assert_eq!(files, vec![dir.path().join("scene_seed7.txt")]);
    let generated = cmd_run(&config(&dir.path().join("a"), &[7], 5)).unwrap();
    let replay_cfg = RunConfig {
        scene: Some(files[0].clone()),
        ..config(&dir.path().join("b"), &[7], 5)
    };
    let replayed = cmd_run(&replay_cfg).unwrap();
    let costs = |r: &qlma_cli::RunReport| {
        r.runs[0]
            .1
            .records
            .iter()
            .map(|x| x.cost)
            .collect::<Vec<_>>()
    };
    assert_eq!(costs(&generated), costs(&replayed));
}

#[test]
fn noise_reports() {
    let base = NoiseRequest {
        rates: ErrorRates::NOISELESS,
        measured_qubits: 0,
        iterations: 10,
        p_single: None,
        current: None,
    };
    let zero = cmd_noise(&base).unwrap();
    assert!(zero.contains("single-run success: 1.000000"));
    assert!(zero.contains("10-iteration success: 1.000000"));
    let exp = cmd_noise(&NoiseRequest {
        rates: ErrorRates::EXPERIMENTAL,
        p_single: Some(0.1),
        ..base.clone()
    })
    .unwrap();
    assert!(exp.contains("single-run success: 0.553"), "{exp}");
    assert!(exp.contains("10-iteration success 1.000000e-10"), "{exp}");
    let bad = NoiseRequest {
        rates: ErrorRates {
            one_qubit_gate: 1.5,
            ..ErrorRates::NOISELESS
        },
        ..base
    };
    assert!(cmd_noise(&bad).is_err());
}

fn qlma() -> Command {
    Command::new(env!("CARGO_BIN_EXE_qlma"))
}

#[test]
fn binary_honours_config_file_flags_and_seed_offset() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("run.conf");
    std::fs::write(
        &conf,
        "# batch\nseeds=1..2\niters=2\nbackend=hhl\nsetup=2\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    let status = qlma()
        .args(["run", "--config"])
        .arg(&conf)
        .args(["--iters", "1", "--backend", "classical", "--out"])
        .arg(&out)
        .env("QLMA_SEED_OFFSET", "10")
        .status()
        .unwrap();
    assert!(status.success());
    let trace = std::fs::read_to_string(out.join("trace_seed12.csv")).unwrap();
    assert_eq!(trace.lines().count(), 3);
    assert!(trace.lines().nth(2).unwrap().contains(",classical-schur,"));
    assert!(!out.join("trace_seed1.csv").exists());
}

#[test]
fn binary_rejects_bad_input() {
    let out = qlma().args(["run", "--setup", "3"]).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("setup"));
    let out = qlma()
        .args(["noise", "--p1", "2", "--reference-only"])
        .output()
        .unwrap();
    assert!(!out.status.success());
}

#[test]
fn binary_noise_and_gen() {
    let out = qlma()
        .args(["noise", "--preset", "zero", "--reference-only"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("one-qubit 60, two-qubit 118"));
    let dir = tempfile::tempdir().unwrap();
    let out = qlma()
        .args(["gen", "--seeds", "1,2", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(dir.path().join("scene_seed2.txt").exists());
    assert_eq!(parse_seeds("3").unwrap(), vec![3]);
}
