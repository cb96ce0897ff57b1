//! Built-in run configurations.
//!
//! All presets use the published fluxes with `Γ` fitted to the 15 ns
//! crossover, a lab-like calibration, and a per-bin acquisition giving a
//! few hundred coincidences per outcome.

use std::path::PathBuf;

use polsq::forward::fit_gamma;
use polsq::measurement::N_OUTCOMES;
use polsq::CalibrationData;

use crate::config::{CalibConfig, RunConfig, ScanConfig, SourceConfig, TauGrid};
use crate::units::Seconds;

pub const PRESETS: [&str; 5] = ["fig1b", "fig1c", "fig1d", "null", "surface"];

pub const PHI_C: f64 = 9.6e5;
pub const PHI_S: f64 = 1.9e5;

/// Non-uniform efficiencies, ~8% background singles, 12 ns coincidence
/// window and a ±5% brightness drift across settings.
pub fn lab_calibration() -> CalibrationData {
    let raw = [0.93, 1.18, 1.02, 1.07];
    let total: f64 = raw.iter().sum();
    let beta = [4.0e4, 5.1e4, 4.4e4, 4.8e4];
    CalibrationData {
        gamma: raw.map(|r| r / total),
        beta: std::array::from_fn(|m| beta.map(|b| b * (1.0 + 0.02 * (m as f64 - 4.5) / 4.5))),
        background: [[3.0e3, 4.0e3, 3.5e3, 3.8e3]; N_OUTCOMES],
        alpha: std::array::from_fn(|m| 2e3 * (1.0 + 0.05 * (m as f64 * 1.3).sin())),
        delta_tau_s: 12e-9,
    }
}

fn base(phi_s: f64, scan: ScanConfig) -> RunConfig {
    RunConfig {
        source: SourceConfig {
            phi_c: PHI_C,
            phi_s,
            gamma: None,
            crossover_tau: Seconds::ns(15.0),
            phase: 0.0,
            dephasing: 0.0,
            leakage: 0.0,
        },
        calib: CalibConfig::Measured(Box::new(lab_calibration())),
        scan,
        tau_grid: TauGrid::default(),
        duration_s: Seconds(2.0),
        seed: 1,
        output_dir: PathBuf::from("out"),
    }
}

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| lo * (hi / lo).powf(k as f64 / (n - 1) as f64)).collect()
}

fn series(centers_ns: &[f64]) -> ScanConfig {
    ScanConfig::TauSeries {
        centers: centers_ns.iter().map(|&c| Seconds::ns(c)).collect(),
        half_width: Seconds::ns(6.0),
    }
}

pub fn preset(name: &str) -> Option<RunConfig> {
    let cfg = match name {
        // four 12 ns bins from the NooN-dominated to the W-dominated regime
        "fig1b" => base(PHI_S, series(&[6.0, 30.0, 48.0, 66.0])),
        // 12 ns bins across the delay scan
        "fig1c" => base(PHI_S, series(&[6.0, 18.0, 30.0, 42.0, 54.0, 66.0, 78.0, 90.0])),
        // one 26 ns window
        "fig1d" => base(
            PHI_S,
            ScanConfig::Single {
                window: (Seconds(0.0), Seconds::ns(26.0)),
            },
        ),
        // coherent beam only; no crossover to fit, so Γ is taken from the
        // published fluxes
        "null" => {
            let mut cfg = base(
                0.0,
                ScanConfig::Single {
                    window: (Seconds(0.0), Seconds::ns(26.0)),
                },
            );
            cfg.source.gamma = fit_gamma(PHI_C, PHI_S, 15e-9).ok();
            cfg
        }
        // 50 × 50 flux surface at zero delay
        "surface" => base(
            PHI_S,
            ScanConfig::FluxGrid {
                phi_c: log_grid(1e4, 3e7, 50),
                phi_s: log_grid(10.0, 3e7, 50),
                window: None,
            },
        ),
        _ => return None,
    };
    Some(cfg)
}
