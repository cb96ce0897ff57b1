//! Run configuration, validated before any computation.

use std::path::{Path, PathBuf};

use polsq::forward::fit_gamma;
use polsq::{CalibrationData, SourceParams};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};
use crate::units::Seconds;

/// Largest table a single command will produce.
const MAX_ROWS: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub source: SourceConfig,
    #[serde(default)]
    pub calib: CalibConfig,
    pub scan: ScanConfig,
    /// Delay grid for `dm_vs_tau.csv`.
    #[serde(default)]
    pub tau_grid: TauGrid,
    /// Acquisition time per delay bin or grid point; each of the seven
    /// waveplate configurations gets a seventh of it.
    pub duration_s: Seconds,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceConfig {
    /// Coherent flux (photons/s).
    pub phi_c: f64,
    /// Squeezed-vacuum flux (photons/s).
    pub phi_s: f64,
    /// Cavity bandwidth (rad/s); fitted from `crossover_tau` when absent.
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default = "default_crossover")]
    pub crossover_tau: Seconds,
    #[serde(default)]
    pub phase: f64,
    #[serde(default)]
    pub dephasing: f64,
    #[serde(default)]
    pub leakage: f64,
}

fn default_crossover() -> Seconds {
    Seconds::ns(15.0)
}

impl SourceConfig {
    pub fn gamma(&self) -> CliResult<f64> {
        match self.gamma {
            Some(g) => Ok(g),
            None => Ok(fit_gamma(self.phi_c, self.phi_s, self.crossover_tau.get())?),
        }
    }

    pub fn params_with(&self, gamma: f64, phi_c: f64, phi_s: f64) -> SourceParams {
        SourceParams::new(phi_c, phi_s, gamma)
            .with_phase(self.phase)
            .with_dephasing(self.dephasing)
            .with_leakage(self.leakage)
    }

    pub fn params(&self, gamma: f64) -> SourceParams {
        self.params_with(gamma, self.phi_c, self.phi_s)
    }
}

/// Either uniform efficiencies without background, or full measured
/// calibration data.
///
/// JSON forms: `"ideal"`, `{"ideal": {"alpha": .., "delta_tau": ..}}` or
/// `{"measured": {...}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields, try_from = "serde_json::Value")]
pub enum CalibConfig {
    Ideal(IdealCalib),
    Measured(Box<CalibrationData>),
}

#[derive(Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
enum TaggedCalib {
    Ideal(IdealCalib),
    Measured(Box<CalibrationData>),
}

impl TryFrom<serde_json::Value> for CalibConfig {
    type Error = String;

    fn try_from(v: serde_json::Value) -> Result<Self, String> {
        if let Some(name) = v.as_str() {
            return match name {
                "ideal" => Ok(CalibConfig::default()),
                other => Err(format!("unknown calibration preset {other:?}; expected \"ideal\"")),
            };
        }
        match serde_json::from_value(v).map_err(|e| e.to_string())? {
            TaggedCalib::Ideal(c) => Ok(CalibConfig::Ideal(c)),
            TaggedCalib::Measured(c) => Ok(CalibConfig::Measured(c)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdealCalib {
    /// Pair brightness per setting (pairs/s).
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_delta_tau")]
    pub delta_tau: Seconds,
}

fn default_alpha() -> f64 {
    2e3
}

fn default_delta_tau() -> Seconds {
    Seconds::ns(26.0)
}

impl Default for IdealCalib {
    fn default() -> Self {
        Self {
            alpha: default_alpha(),
            delta_tau: default_delta_tau(),
        }
    }
}

impl Default for CalibConfig {
    fn default() -> Self {
        CalibConfig::Ideal(IdealCalib::default())
    }
}

impl CalibConfig {
    pub fn resolve(&self) -> CalibrationData {
        match self {
            CalibConfig::Ideal(c) => CalibrationData::ideal(c.alpha, c.delta_tau.get()),
            CalibConfig::Measured(c) => (**c).clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ScanConfig {
    /// Delay bins `[max(0, c − w), c + w]`.
    TauSeries { centers: Vec<Seconds>, half_width: Seconds },
    /// Every `(Φ_C, Φ_S)` pair; concurrence at `τ = 0`, or averaged over
    /// `window` when given.
    FluxGrid {
        phi_c: Vec<f64>,
        phi_s: Vec<f64>,
        #[serde(default)]
        window: Option<(Seconds, Seconds)>,
    },
    /// One delay window.
    Single { window: (Seconds, Seconds) },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TauGrid {
    pub start: Seconds,
    pub stop: Seconds,
    pub step: Seconds,
}

impl Default for TauGrid {
    fn default() -> Self {
        Self {
            start: Seconds(0.0),
            stop: Seconds::ns(100.0),
            step: Seconds::ns(0.5),
        }
    }
}

impl TauGrid {
    pub fn points(&self) -> Vec<f64> {
        let (a, b, h) = (self.start.get(), self.stop.get(), self.step.get());
        let n = ((b - a) / h + 1e-9).floor() as usize + 1;
        (0..n).map(|k| a + k as f64 * h).collect()
    }
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn check_window(lo: Seconds, hi: Seconds, what: &str) -> CliResult<()> {
    if !(lo.get().is_finite() && hi.get().is_finite() && lo.get() >= 0.0 && hi.get() > lo.get()) {
        return Err(config_err(format!(
            "{what}: window [{}, {}] s must satisfy 0 <= lo < hi",
            lo.get(),
            hi.get()
        )));
    }
    Ok(())
}

impl RunConfig {
    pub fn from_json(text: &str) -> CliResult<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| config_err(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
        Self::from_json(&text).map_err(|e| match e {
            CliError::Config(msg) => config_err(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> CliResult<()> {
        let s = &self.source;
        for (name, v) in [("phi_c", s.phi_c), ("phi_s", s.phi_s), ("dephasing", s.dephasing)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(config_err(format!("source.{name} must be finite and non-negative")));
            }
        }
        if !(s.phase.is_finite() && s.leakage.is_finite() && (0.0..=1.0).contains(&s.leakage)) {
            return Err(config_err("source.phase must be finite and source.leakage in [0, 1]"));
        }
        match s.gamma {
            Some(g) if !(g.is_finite() && g > 0.0) => return Err(config_err("source.gamma must be positive")),
            None if !(s.crossover_tau.get().is_finite() && s.crossover_tau.get() > 0.0) => {
                return Err(config_err("source.crossover_tau must be positive"))
            }
            _ => {}
        }
        if let CalibConfig::Ideal(c) = &self.calib {
            if !(c.alpha.is_finite() && c.alpha > 0.0 && c.delta_tau.get() > 0.0) {
                return Err(config_err("calib.ideal needs positive alpha and delta_tau"));
            }
        }
        self.calib
            .resolve()
            .validate()
            .map_err(|e| config_err(format!("calib: {e}")))?;
        match &self.scan {
            ScanConfig::TauSeries { centers, half_width } => {
                if centers.is_empty() || centers.len() > MAX_ROWS {
                    return Err(config_err("scan.tau_series needs between 1 and 1e6 centers"));
                }
                let bins =
                    polsq::simulator::tau_bins(&centers.iter().map(|c| c.get()).collect::<Vec<_>>(), half_width.get());
                bins.map_err(|e| config_err(format!("scan.tau_series: {e}")))?;
            }
            ScanConfig::FluxGrid { phi_c, phi_s, window } => {
                if phi_c.is_empty() || phi_s.is_empty() || phi_c.len() * phi_s.len() > MAX_ROWS {
                    return Err(config_err(
                        "scan.flux_grid needs non-empty lists with at most 1e6 points",
                    ));
                }
                if phi_c.iter().chain(phi_s).any(|v| !(v.is_finite() && *v >= 0.0)) {
                    return Err(config_err("scan.flux_grid fluxes must be finite and non-negative"));
                }
                if let Some((lo, hi)) = window {
                    check_window(*lo, *hi, "scan.flux_grid")?;
                }
            }
            ScanConfig::Single { window } => check_window(window.0, window.1, "scan.single")?,
        }
        let g = &self.tau_grid;
        if !(g.step.get() > 0.0 && g.start.get().is_finite() && g.stop.get() >= g.start.get()) {
            return Err(config_err("tau_grid needs step > 0 and stop >= start"));
        }
        if (g.stop.get() - g.start.get()) / g.step.get() >= MAX_ROWS as f64 {
            return Err(config_err("tau_grid has more than 1e6 points"));
        }
        if !(self.duration_s.get().is_finite() && self.duration_s.get() > 0.0) {
            return Err(config_err("duration_s must be positive"));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, ignoring `output_dir`.
    pub fn sha256(&self) -> String {
        let mut canon = self.clone();
        canon.output_dir = PathBuf::new();
        let json = serde_json::to_string(&canon).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}
