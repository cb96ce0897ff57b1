//! The five verbs. Each takes a validated config and writes its outputs
//! into `output_dir`.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use log::{info, warn};
use polsq::forward::{
    correlation_tensor, cs_inequality_check, fit_gamma, pair_rate_components, scan_tau, two_photon_dm,
    window_average_dm,
};
use polsq::measurement::{default_settings, OutcomeModel, N_OUTCOMES};
use polsq::reconstruction::{bootstrap_data, mle_fit_data, BootstrapOptions, BootstrapResult, CountData};
use polsq::rng::derive_seed;
use polsq::simulator::{default_live_times, simulate_counts, tau_bins};
use polsq::state::{concurrence, max_noon_fidelity, negativity, NoonOverlap};
use polsq::{CalibrationData, Execution, FitResult, TwoPhotonState};
use serde::{Deserialize, Serialize};

use crate::config::{RunConfig, ScanConfig};
use crate::error::{CliError, CliResult};
use crate::output::{ensure_dir, write_json, write_text, Cell, Csv, Stamp};

pub const DM_VS_TAU: &str = "dm_vs_tau.csv";
pub const SURFACE: &str = "concurrence_surface.csv";
pub const COUNTS: &str = "counts.jsonl";
pub const SUMMARY: &str = "summary.csv";
pub const BOOTSTRAP_SAMPLES: &str = "bootstrap_samples.csv";
pub const GAMMA: &str = "gamma.json";

const BASIS_LABELS: [&str; 4] = ["HH", "HV", "VH", "VV"];

/// A validated config with its provenance stamp.
pub struct Run {
    pub cfg: RunConfig,
    pub stamp: Stamp,
}

impl Run {
    pub fn new(cfg: RunConfig) -> Self {
        let stamp = Stamp {
            config_sha256: cfg.sha256(),
            seed: cfg.seed,
        };
        Self { cfg, stamp }
    }

    fn out(&self, name: &str) -> CliResult<PathBuf> {
        Ok(ensure_dir(&self.cfg.output_dir)?.join(name))
    }
}

/// Column names of `dm_vs_tau.csv`.
pub fn dm_columns() -> Vec<String> {
    let mut cols = vec!["tau_s".to_string()];
    for r in BASIS_LABELS {
        for c in BASIS_LABELS {
            cols.push(format!("re_{r}_{c}"));
            cols.push(format!("im_{r}_{c}"));
        }
    }
    cols.extend(["concurrence", "negativity", "cs_violated_a", "cs_violated_b"].map(String::from));
    cols
}

/// Theory tables: `dm_vs_tau.csv` over the delay grid, plus
/// `concurrence_surface.csv` for flux-grid scans.
pub fn forward(run: &Run) -> CliResult<Vec<PathBuf>> {
    let cfg = &run.cfg;
    let gamma = cfg.source.gamma()?;
    let params = cfg.source.params(gamma);
    let taus = cfg.tau_grid.points();
    let rows = scan_tau(Execution::default(), &taus, |t| -> polsq::Result<Vec<Cell>> {
        let rho = two_photon_dm(&params, t)?;
        let cs = cs_inequality_check(&correlation_tensor(&params, t)?);
        let m = rho.matrix();
        let mut cells = vec![Cell::F(t)];
        for r in 0..4 {
            for c in 0..4 {
                cells.push(Cell::F(m[(r, c)].re));
                cells.push(Cell::F(m[(r, c)].im));
            }
        }
        cells.extend([
            Cell::F(concurrence(&rho)),
            Cell::F(negativity(&rho)),
            Cell::B(cs.violated_a),
            Cell::B(cs.violated_b),
        ]);
        Ok(cells)
    });
    let cols = dm_columns();
    let mut csv = Csv::new(&run.stamp, &cols.iter().map(String::as_str).collect::<Vec<_>>());
    for row in rows {
        csv.row(row?);
    }
    let mut written = vec![run.out(DM_VS_TAU)?];
    csv.save(&written[0])?;

    if let ScanConfig::FluxGrid { phi_c, phi_s, window } = &cfg.scan {
        let points: Vec<(f64, f64)> = phi_c.iter().flat_map(|&c| phi_s.iter().map(move |&s| (c, s))).collect();
        let values = Execution::default().map_slice(&points, |&(c, s)| -> polsq::Result<f64> {
            let p = cfg.source.params_with(gamma, c, s);
            let rho = match window {
                Some((lo, hi)) => window_average_dm(&p, lo.get(), hi.get())?,
                None => two_photon_dm(&p, 0.0)?,
            };
            Ok(concurrence(&rho))
        });
        let mut csv = Csv::new(&run.stamp, &["phi_c", "phi_s", "concurrence"]);
        for (&(c, s), v) in points.iter().zip(values) {
            csv.row([Cell::F(c), Cell::F(s), Cell::F(v?)]);
        }
        let path = run.out(SURFACE)?;
        csv.save(&path)?;
        written.push(path);
    }
    info!("forward: Γ = {gamma:e} rad/s, {} delays", taus.len());
    Ok(written)
}

/// One simulated tomography run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bin {
    pub index: usize,
    pub phi_c: f64,
    pub phi_s: f64,
    pub window: (f64, f64),
}

pub fn bins(cfg: &RunConfig) -> CliResult<Vec<Bin>> {
    let s = &cfg.source;
    let one = |index, phi_c, phi_s, window| Bin {
        index,
        phi_c,
        phi_s,
        window,
    };
    Ok(match &cfg.scan {
        ScanConfig::TauSeries { centers, half_width } => {
            let centers: Vec<f64> = centers.iter().map(|c| c.get()).collect();
            tau_bins(&centers, half_width.get())?
                .into_iter()
                .enumerate()
                .map(|(k, w)| one(k, s.phi_c, s.phi_s, w))
                .collect()
        }
        ScanConfig::Single { window } => vec![one(0, s.phi_c, s.phi_s, (window.0.get(), window.1.get()))],
        ScanConfig::FluxGrid { phi_c, phi_s, window } => {
            let Some((lo, hi)) = window else {
                return Err(CliError::Config(
                    "simulating a flux_grid scan needs scan.flux_grid.window".into(),
                ));
            };
            phi_c
                .iter()
                .flat_map(|&c| phi_s.iter().map(move |&p| (c, p)))
                .enumerate()
                .map(|(k, (c, p))| one(k, c, p, (lo.get(), hi.get())))
                .collect()
        }
    })
}

/// A count: an integer draw, or an expected value in noiseless runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Count {
    Events(u64),
    Mean(f64),
}

impl Count {
    pub fn value(self) -> f64 {
        match self {
            Count::Events(n) => n as f64,
            Count::Mean(x) => x,
        }
    }
}

/// First line of a counts file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CountsHeader {
    pub config_sha256: String,
    pub seed: u64,
    pub gamma: f64,
    pub noiseless: bool,
}

/// One outcome of one bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CountLine {
    pub bin: usize,
    pub window_s: (f64, f64),
    pub phi_c: f64,
    pub phi_s: f64,
    pub m: usize,
    pub n_exp: Count,
    pub singles: [Count; 4],
    pub live_time_s: f64,
    /// Seed of this outcome's draw; absent for noiseless runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

fn bin_lines(
    cfg: &RunConfig,
    calib: &CalibrationData,
    gamma: f64,
    bin: &Bin,
    noiseless: bool,
) -> polsq::Result<Vec<CountLine>> {
    let params = cfg.source.params_with(gamma, bin.phi_c, bin.phi_s);
    let rho = window_average_dm(&params, bin.window.0, bin.window.1)?;
    let live = default_live_times(cfg.duration_s.get());
    let line = |m: usize, n_exp, singles, seed| CountLine {
        bin: bin.index,
        window_s: bin.window,
        phi_c: bin.phi_c,
        phi_s: bin.phi_s,
        m,
        n_exp,
        singles,
        live_time_s: live[m - 1],
        seed,
    };
    if noiseless {
        let rates = OutcomeModel::new(&default_settings(), calib)?.rates(rho.matrix());
        return Ok((0..N_OUTCOMES)
            .map(|k| {
                let singles = calib.beta[k].map(|b| Count::Mean(b * live[k]));
                line(k + 1, Count::Mean(rates[k] * live[k]), singles, None)
            })
            .collect());
    }
    let seed = derive_seed(cfg.seed, &[bin.index as u64]);
    Ok(simulate_counts(&rho, calib, &live, Some(bin.window), seed)?
        .into_iter()
        .map(|r| line(r.m, Count::Events(r.n_exp), r.singles.map(Count::Events), Some(r.seed)))
        .collect())
}

/// Writes `counts.jsonl`: a header line, then one line per bin and outcome.
/// Bin `k` draws with seed `derive_seed(seed, [k])`.
pub fn simulate(run: &Run, noiseless: bool) -> CliResult<PathBuf> {
    let cfg = &run.cfg;
    let gamma = cfg.source.gamma()?;
    let calib = cfg.calib.resolve();
    let bins = bins(cfg)?;
    let per_bin = Execution::default().map_slice(&bins, |b| bin_lines(cfg, &calib, gamma, b, noiseless));
    let header = CountsHeader {
        config_sha256: run.stamp.config_sha256.clone(),
        seed: cfg.seed,
        gamma,
        noiseless,
    };
    let mut text = serde_json::to_string(&header).expect("header serializes");
    text.push('\n');
    for lines in per_bin {
        for l in lines? {
            text.push_str(&serde_json::to_string(&l).expect("count line serializes"));
            text.push('\n');
        }
    }
    let path = run.out(COUNTS)?;
    write_text(&path, &text)?;
    info!("simulate: {} bins, Γ = {gamma:e} rad/s", bins.len());
    Ok(path)
}

/// Reads a counts file into per-bin data, checking that each bin has all
/// ten outcomes exactly once.
/// Per-bin delay window and count data, keyed by bin index.
pub type BinnedCounts = BTreeMap<usize, ((f64, f64), CountData)>;

pub fn read_counts(path: &Path) -> CliResult<(CountsHeader, BinnedCounts)> {
    let file = std::fs::File::open(path).map_err(CliError::io(path))?;
    let mut lines = BufReader::new(file).lines();
    let bad = |line: usize, msg: String| CliError::Config(format!("{}:{line}: {msg}", path.display()));
    let first = lines
        .next()
        .ok_or_else(|| bad(1, "empty counts file".into()))?
        .map_err(CliError::io(path))?;
    let header: CountsHeader = serde_json::from_str(&first).map_err(|e| bad(1, format!("bad header: {e}")))?;
    let mut grouped: BTreeMap<usize, ((f64, f64), Vec<CountLine>)> = BTreeMap::new();
    for (k, text) in lines.enumerate() {
        let text = text.map_err(CliError::io(path))?;
        if text.trim().is_empty() {
            continue;
        }
        let line: CountLine = serde_json::from_str(&text).map_err(|e| bad(k + 2, e.to_string()))?;
        let entry = grouped.entry(line.bin).or_insert_with(|| (line.window_s, Vec::new()));
        if entry.0 != line.window_s {
            return Err(bad(k + 2, format!("bin {} has two different windows", line.bin)));
        }
        entry.1.push(line);
    }
    if grouped.is_empty() {
        return Err(bad(2, "no count lines".into()));
    }
    let mut out = BTreeMap::new();
    for (bin, (window, lines)) in grouped {
        let mut counts = [f64::NAN; N_OUTCOMES];
        let mut live = [f64::NAN; N_OUTCOMES];
        for l in &lines {
            if !(1..=N_OUTCOMES).contains(&l.m) || !counts[l.m - 1].is_nan() {
                return Err(CliError::Config(format!(
                    "bin {bin}: outcome {} missing index or repeated",
                    l.m
                )));
            }
            counts[l.m - 1] = l.n_exp.value();
            live[l.m - 1] = l.live_time_s;
        }
        if let Some(k) = counts.iter().position(|c| c.is_nan()) {
            return Err(CliError::Config(format!("bin {bin}: missing outcome {}", k + 1)));
        }
        let data = CountData::new(counts, live).map_err(|e| CliError::Config(format!("bin {bin}: {e}")))?;
        out.insert(bin, (window, data));
    }
    Ok((header, out))
}

/// Fit diagnostics stored with each reconstructed matrix.
#[derive(Debug, Clone, Serialize)]
pub struct FitReport {
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub residuals: [f64; N_OUTCOMES],
}

/// Per-bin reconstruction output.
#[derive(Debug, Clone, Serialize)]
pub struct BinResult {
    #[serde(flatten)]
    pub stamp: Stamp,
    pub bin: usize,
    pub window_s: (f64, f64),
    pub rho_hat: TwoPhotonState,
    pub concurrence: f64,
    pub sigma: f64,
    pub concurrence_mean: f64,
    pub degenerate: bool,
    pub n_resamples: usize,
    pub failed_resamples: Vec<usize>,
    pub negativity: f64,
    pub noon: NoonOverlap,
    pub fit: FitReport,
    #[serde(skip)]
    pub samples: Vec<f64>,
}

/// A fit without resamples: zero spread, flagged degenerate.
fn point_only(point: FitResult) -> BootstrapResult {
    let c = concurrence(&point.rho_hat);
    BootstrapResult {
        point,
        concurrence_point: c,
        concurrence_mean: c,
        concurrence_sigma: 0.0,
        degenerate: true,
        n_resamples: 0,
        failed: Vec::new(),
        concurrences: Vec::new(),
        dm_ensemble: Vec::new(),
    }
}

pub fn dm_file_name(bin: usize) -> String {
    format!("dm_bin_{bin:03}.json")
}

/// Fits every bin of a counts file and bootstraps its concurrence; zero
/// resamples gives the point fit only.
/// Writes `dm_bin_NNN.json` per bin and `summary.csv`; with
/// `keep_samples`, also `bootstrap_samples.csv`.
///
/// Outputs are written even when a point fit does not converge; the
/// command then reports a numerical failure.
pub fn reconstruct(run: &Run, counts: &Path, resamples: usize, keep_samples: bool) -> CliResult<Vec<PathBuf>> {
    let cfg = &run.cfg;
    let calib = cfg.calib.resolve();
    let (header, data) = read_counts(counts)?;
    if header.config_sha256 != run.stamp.config_sha256 {
        warn!(
            "{} was produced by config {}; fitting with the current calibration",
            counts.display(),
            header.config_sha256
        );
    }
    let settings = default_settings();
    let mut results = Vec::new();
    for (&bin, (window, d)) in &data {
        let opts = BootstrapOptions {
            n_resamples: resamples,
            seed: derive_seed(cfg.seed, &[bin as u64, 0xb007]),
            ..BootstrapOptions::default()
        };
        let b = if resamples == 0 {
            point_only(mle_fit_data(d, &settings, &calib, None, &opts.fit)?)
        } else {
            bootstrap_data(d, &settings, &calib, &opts)?
        };
        let rho = b.point.rho_hat.clone();
        results.push(BinResult {
            stamp: run.stamp.clone(),
            bin,
            window_s: *window,
            concurrence: b.concurrence_point,
            sigma: b.concurrence_sigma,
            concurrence_mean: b.concurrence_mean,
            degenerate: b.degenerate,
            n_resamples: b.n_resamples,
            failed_resamples: b.failed.clone(),
            negativity: negativity(&rho),
            noon: max_noon_fidelity(&rho),
            fit: FitReport {
                objective: b.point.objective,
                iterations: b.point.iterations,
                converged: b.point.converged,
                residuals: b.point.residuals,
            },
            samples: b.concurrences.clone(),
            rho_hat: rho,
        });
    }

    let mut written = Vec::new();
    let mut summary = Csv::new(
        &run.stamp,
        &[
            "bin",
            "tau_lo_s",
            "tau_hi_s",
            "tau_center_s",
            "concurrence",
            "sigma",
            "noon_fidelity",
            "converged",
        ],
    );
    let mut samples = Csv::new(&run.stamp, &["bin", "sample", "concurrence"]);
    for r in &results {
        let path = run.out(&dm_file_name(r.bin))?;
        write_json(&path, r)?;
        written.push(path);
        let (lo, hi) = r.window_s;
        summary.row([
            Cell::U(r.bin as u64),
            Cell::F(lo),
            Cell::F(hi),
            Cell::F(0.5 * (lo + hi)),
            Cell::F(r.concurrence),
            Cell::F(r.sigma),
            Cell::F(r.noon.fidelity),
            Cell::B(r.fit.converged),
        ]);
        for (k, &c) in r.samples.iter().enumerate() {
            samples.row([Cell::U(r.bin as u64), Cell::U(k as u64), Cell::F(c)]);
        }
    }
    let path = run.out(SUMMARY)?;
    summary.save(&path)?;
    written.push(path);
    if keep_samples {
        let path = run.out(BOOTSTRAP_SAMPLES)?;
        samples.save(&path)?;
        written.push(path);
    }
    let stuck: Vec<usize> = results.iter().filter(|r| !r.fit.converged).map(|r| r.bin).collect();
    if !stuck.is_empty() {
        return Err(CliError::Numerical(format!(
            "point fit did not converge for bins {stuck:?}"
        )));
    }
    Ok(written)
}

#[derive(Debug, Clone, Serialize)]
pub struct GammaReport {
    #[serde(flatten)]
    pub stamp: Stamp,
    pub phi_c: f64,
    pub phi_s: f64,
    pub crossover_tau_s: f64,
    /// rad/s
    pub gamma: f64,
    /// `|R_VV,VV(τ*) / R_HH,HH(τ*) − 1|`
    pub relative_residual: f64,
}

/// Fits `Γ` so the squeezed and coherent pair rates cross at the
/// configured delay; writes `gamma.json`.
pub fn fit_gamma_cmd(run: &Run) -> CliResult<(PathBuf, GammaReport)> {
    let s = &run.cfg.source;
    let tau = s.crossover_tau.get();
    let gamma = fit_gamma(s.phi_c, s.phi_s, tau)?;
    let rates = pair_rate_components(&s.params(gamma), tau)?;
    let report = GammaReport {
        stamp: run.stamp.clone(),
        phi_c: s.phi_c,
        phi_s: s.phi_s,
        crossover_tau_s: tau,
        gamma,
        relative_residual: (rates.sv_rate / rates.cs_rate - 1.0).abs(),
    };
    let path = run.out(GAMMA)?;
    write_json(&path, &report)?;
    Ok((path, report))
}
