use std::path::{Path, PathBuf};
use std::process::Command;

use polsq::forward::{fit_gamma, pair_rate_components, window_average_dm};
use polsq::state::trace_distance;
use polsq::{SourceParams, TwoPhotonState};
use polsq_cli::commands::{self, Run};
use polsq_cli::config::RunConfig;
use polsq_cli::presets::preset;
use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_polsq");

fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

fn polsq(args: &[&str]) -> std::process::Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, json: &str) -> PathBuf {
    let path = dir.join("run.json");
    std::fs::write(&path, json).unwrap();
    path
}

fn with_out(mut cfg: RunConfig, dir: &Path) -> Run {
    cfg.output_dir = dir.to_path_buf();
    Run::new(cfg)
}

fn read_dm(dir: &Path, bin: usize) -> serde_json::Value {
    let text = std::fs::read_to_string(dir.join(commands::dm_file_name(bin))).unwrap();
    serde_json::from_str(&text).unwrap()
}

fn rho_of(v: &serde_json::Value) -> TwoPhotonState {
    serde_json::from_value(v["rho_hat"].clone()).unwrap()
}

const GOLDEN_CONFIG: &str = r#"{
    "source": {"phi_c": 9.6e5, "phi_s": 1.9e5, "gamma": 6.7e7},
    "scan": {"flux_grid": {"phi_c": [1e5, 9.6e5], "phi_s": [0, 1.9e5]}},
    "tau_grid": {"start": 0, "stop": "20ns", "step": "10ns"},
    "duration_s": 1,
    "seed": 3
}"#;

/// Compares against a checked-in file; `UPDATE_GOLDEN=1` rewrites it.
fn check_golden(name: &str, got: &str) {
    let path = golden_dir().join(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, got).unwrap();
    }
    let want = std::fs::read_to_string(&path).unwrap_or_else(|_| panic!("missing golden file {}", path.display()));
    assert_eq!(got, want, "{name} differs from its golden file");
}

#[test]
fn forward_tables_match_golden_files() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), GOLDEN_CONFIG);
    let out = polsq(&[
        "forward",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let dm = std::fs::read_to_string(tmp.path().join(commands::DM_VS_TAU)).unwrap();
    let surface = std::fs::read_to_string(tmp.path().join(commands::SURFACE)).unwrap();
    check_golden("dm_vs_tau.csv", &dm);
    check_golden("concurrence_surface.csv", &surface);
}

#[test]
fn forward_schema_and_zero_squeezing_row() {
    let tmp = TempDir::new().unwrap();
    let run = with_out(RunConfig::from_json(GOLDEN_CONFIG).unwrap(), tmp.path());
    commands::forward(&run).unwrap();
    let dm = std::fs::read_to_string(tmp.path().join(commands::DM_VS_TAU)).unwrap();
    let mut lines = dm.lines();
    assert_eq!(lines.next().unwrap(), run.stamp.csv_line().trim_end());
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(header.len(), 1 + 32 + 4);
    assert_eq!(header[0], "tau_s");
    assert_eq!(header[1..3], ["re_HH_HH", "im_HH_HH"]);
    assert_eq!(
        header[33..],
        ["concurrence", "negativity", "cs_violated_a", "cs_violated_b"]
    );
    assert_eq!(lines.count(), 3);

    let surface = std::fs::read_to_string(tmp.path().join(commands::SURFACE)).unwrap();
    for row in surface.lines().skip(2) {
        let v: Vec<f64> = row.split(',').map(|x| x.parse().unwrap()).collect();
        if v[1] == 0.0 {
            assert_eq!(v[2], 0.0, "phi_s = 0 row must be separable: {row}");
        }
    }
}

#[test]
fn simulate_is_deterministic_and_seeded() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let c = TempDir::new().unwrap();
    for (dir, seed) in [(&a, "5"), (&b, "5"), (&c, "6")] {
        let out = polsq(&[
            "simulate",
            "--preset",
            "fig1b",
            "--seed",
            seed,
            "--out",
            dir.path().to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let read = |d: &TempDir| std::fs::read(d.path().join(commands::COUNTS)).unwrap();
    assert_eq!(read(&a), read(&b), "same seed, different output directory");
    assert_ne!(read(&a), read(&c));
    let text = String::from_utf8(read(&a)).unwrap();
    assert!(text.lines().next().unwrap().contains("\"seed\":5"));
    assert_eq!(text.lines().count(), 1 + 4 * 10);
}

#[test]
fn noiseless_counts_reconstruct_the_forward_state() {
    let tmp = TempDir::new().unwrap();
    let json = r#"{
        "source": {"phi_c": 9.6e5, "phi_s": 1.9e5, "phase": 0.4},
        "calib": "ideal",
        "scan": {"single": {"window": [0, "26ns"]}},
        "duration_s": 70,
        "seed": 9
    }"#;
    let run = with_out(RunConfig::from_json(json).unwrap(), tmp.path());
    commands::simulate(&run, true).unwrap();
    commands::reconstruct(&run, &tmp.path().join(commands::COUNTS), 0, false).unwrap();
    let gamma = fit_gamma(9.6e5, 1.9e5, 15e-9).unwrap();
    let truth = window_average_dm(&SourceParams::new(9.6e5, 1.9e5, gamma).with_phase(0.4), 0.0, 26e-9).unwrap();
    let dm = read_dm(tmp.path(), 0);
    assert!(trace_distance(&rho_of(&dm), &truth) < 1e-6);
    assert_eq!(dm["degenerate"], true);
}

#[test]
fn delay_bins_show_noon_then_w_portions() {
    let tmp = TempDir::new().unwrap();
    let run = with_out(preset("fig1b").unwrap(), tmp.path());
    commands::simulate(&run, false).unwrap();
    commands::reconstruct(&run, &tmp.path().join(commands::COUNTS), 20, false).unwrap();
    let pops: Vec<(f64, f64)> = (0..4)
        .map(|k| {
            let m = *rho_of(&read_dm(tmp.path(), k)).matrix();
            (m[(0, 0)].re + m[(3, 3)].re, m[(1, 1)].re + m[(2, 2)].re)
        })
        .collect();
    assert!(pops[0].0 > 0.7, "HH/VV corners dominate the first bin: {pops:?}");
    assert!(pops[0].1 < pops[3].1, "HV/VH weight grows with delay: {pops:?}");
    let summary = std::fs::read_to_string(tmp.path().join(commands::SUMMARY)).unwrap();
    assert_eq!(summary.lines().count(), 2 + 4);
    assert!(summary
        .lines()
        .nth(1)
        .unwrap()
        .starts_with("bin,tau_lo_s,tau_hi_s,tau_center_s,concurrence,sigma"));
}

#[test]
fn null_preset_concurrence_consistent_with_zero() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path().to_str().unwrap();
    assert!(polsq(&["simulate", "--preset", "null", "--out", dir]).status.success());
    let out = polsq(&["bootstrap", "--preset", "null", "--out", dir, "--resamples", "50"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let dm = read_dm(tmp.path(), 0);
    let (c, sigma) = (dm["concurrence"].as_f64().unwrap(), dm["sigma"].as_f64().unwrap());
    assert!(c <= 2.0 * sigma, "C = {c}, sigma = {sigma}");
    let samples = std::fs::read_to_string(tmp.path().join(commands::BOOTSTRAP_SAMPLES)).unwrap();
    assert!(samples.lines().count() >= 2 + 45);
}

#[test]
fn fitted_gamma_crosses_at_the_requested_delay() {
    let tmp = TempDir::new().unwrap();
    let (_, report) = commands::fit_gamma_cmd(&with_out(preset("fig1b").unwrap(), tmp.path())).unwrap();
    let gap = |tau: f64| {
        let r = pair_rate_components(&SourceParams::new(9.6e5, 1.9e5, report.gamma), tau).unwrap();
        r.sv_rate - r.cs_rate
    };
    let (mut lo, mut hi) = (5e-9, 30e-9);
    assert!(gap(lo) > 0.0 && gap(hi) < 0.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if gap(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    assert!((lo - 15e-9).abs() < 1e-12, "crossing at {lo} s");
    assert!(report.relative_residual < 1e-9);

    let mut early = preset("fig1b").unwrap();
    early.source.crossover_tau = polsq_cli::units::Seconds::ns(5.0);
    let (_, early) = commands::fit_gamma_cmd(&with_out(early, tmp.path())).unwrap();
    assert!(early.gamma > report.gamma);
    let written: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join(commands::GAMMA)).unwrap()).unwrap();
    assert_eq!(written["gamma"].as_f64().unwrap(), early.gamma);
}

#[test]
fn exit_codes() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path().to_str().unwrap();
    let code = |args: &[&str]| polsq(args).status.code().unwrap();

    let unknown = write_config(
        tmp.path(),
        &GOLDEN_CONFIG.replace("\"seed\": 3", "\"seed\": 3, \"sead\": 4"),
    );
    assert_eq!(
        code(&["forward", "--config", unknown.to_str().unwrap(), "--out", dir]),
        2
    );
    let unitless = write_config(tmp.path(), &GOLDEN_CONFIG.replace("\"20ns\"", "\"20\""));
    assert_eq!(
        code(&["forward", "--config", unitless.to_str().unwrap(), "--out", dir]),
        2
    );
    assert_eq!(code(&["forward", "--preset", "fig9", "--out", dir]), 2);
    assert_eq!(code(&["forward", "--preset", "fig1b", "--config", "x.json"]), 2);
    assert_eq!(code(&["forward"]), 2);

    assert_eq!(
        code(&["forward", "--config", tmp.path().join("absent.json").to_str().unwrap()]),
        4
    );
    assert_eq!(
        code(&[
            "reconstruct",
            "--preset",
            "fig1d",
            "--out",
            dir,
            "--counts",
            tmp.path().join("none.jsonl").to_str().unwrap()
        ]),
        4
    );

    assert_eq!(code(&["simulate", "--preset", "fig1d", "--out", dir]), 0);
    let counts = tmp.path().join(commands::COUNTS);
    let text = std::fs::read_to_string(&counts).unwrap();
    let truncated: String = text.lines().take(10).map(|l| format!("{l}\n")).collect();
    let short = tmp.path().join("short.jsonl");
    std::fs::write(&short, truncated).unwrap();
    assert_eq!(
        code(&[
            "reconstruct",
            "--preset",
            "fig1d",
            "--out",
            dir,
            "--counts",
            short.to_str().unwrap()
        ]),
        2
    );

    let no_root = write_config(
        tmp.path(),
        r#"{"source": {"phi_c": 9.6e5, "phi_s": 1e-3}, "scan": {"single": {"window": [0, "26ns"]}}, "duration_s": 1}"#,
    );
    let out = polsq(&["fit-gamma", "--config", no_root.to_str().unwrap(), "--out", dir]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no bandwidth"));
}

#[test]
fn outputs_carry_config_hash_and_seed() {
    let tmp = TempDir::new().unwrap();
    let run = with_out(preset("fig1d").unwrap(), tmp.path());
    let mut files = commands::forward(&run).unwrap();
    files.push(commands::simulate(&run, false).unwrap());
    files.extend(commands::reconstruct(&run, &tmp.path().join(commands::COUNTS), 10, true).unwrap());
    files.push(commands::fit_gamma_cmd(&run).unwrap().0);
    for f in files {
        let text = std::fs::read_to_string(&f).unwrap();
        assert!(text.contains(&run.stamp.config_sha256), "{}", f.display());
        let first = text.lines().next().unwrap();
        if f.extension().unwrap() == "csv" {
            assert_eq!(first, format!("# config_sha256={} seed=1", run.stamp.config_sha256));
        }
    }
}
