//! Synthetic coincidence-count experiments.
//!
//! Counts are drawn per outcome as `Poisson(n_th,m · T_m)` where `n_th,m` is
//! the expected rate for the window-averaged forward-model state and `T_m`
//! the live time of that outcome. Pairs within a window are assumed rare
//! enough for Poisson statistics; no time tags are generated.

use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::forward::{window_average_dm, SourceParams};
use crate::measurement::{default_settings, CalibrationData, OutcomeModel, N_OUTCOMES};
use crate::rng::{derive_seed, rng_from_seed, Rng};
use crate::state::{Basis, TwoPhotonState};

/// Number of distinct waveplate configurations; the default live time per
/// outcome is `duration / WAVEPLATE_CONFIGS`.
pub const WAVEPLATE_CONFIGS: usize = 7;

/// Observed counts for one outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CountRecord {
    /// Outcome index, 1-based.
    pub m: usize,
    pub n_exp: u64,
    pub singles: [u64; 4],
    /// Live acquisition time of this outcome (s).
    pub duration: f64,
    #[serde(default)]
    pub tau_bin: Option<(f64, f64)>,
    pub seed: u64,
}

pub(crate) fn poisson<R: rand::Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    let d = Poisson::new(mean).expect("finite positive Poisson mean");
    d.sample(rng) as u64
}

/// Live time per outcome for a total acquisition `duration`.
pub fn default_live_times(duration: f64) -> [f64; N_OUTCOMES] {
    [duration / WAVEPLATE_CONFIGS as f64; N_OUTCOMES]
}

/// Draws one record per outcome for a given state.
///
/// Record `m` uses the seed `derive_seed(seed, [m])`, so any record can be
/// regenerated alone.
pub fn simulate_counts(
    rho: &TwoPhotonState,
    calib: &CalibrationData,
    live_times: &[f64; N_OUTCOMES],
    tau_bin: Option<(f64, f64)>,
    seed: u64,
) -> Result<Vec<CountRecord>> {
    if rho.basis() != Basis::Computational {
        return Err(Error::BasisMismatch {
            expected: Basis::Computational,
            got: rho.basis(),
        });
    }
    if live_times.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
        return Err(Error::InvalidInput("live time per setting must be positive".into()));
    }
    let model = OutcomeModel::new(&default_settings(), calib)?;
    let rates = model.rates(rho.matrix());
    Ok((0..N_OUTCOMES)
        .map(|k| {
            let rec_seed = derive_seed(seed, &[k as u64 + 1]);
            let mut rng: Rng = rng_from_seed(rec_seed);
            let t = live_times[k];
            let n_exp = poisson(rates[k].max(0.0) * t, &mut rng);
            let singles = calib.beta[k].map(|b| poisson(b * t, &mut rng));
            CountRecord {
                m: k + 1,
                n_exp,
                singles,
                duration: t,
                tau_bin,
                seed: rec_seed,
            }
        })
        .collect())
}

/// Simulates a full tomography run for pairs with `lo ≤ |τ| ≤ hi`.
pub fn simulate_tomography(
    params: &SourceParams,
    calib: &CalibrationData,
    duration: f64,
    window: (f64, f64),
    seed: u64,
) -> Result<Vec<CountRecord>> {
    simulate_tomography_with(params, calib, &default_live_times(duration), window, seed)
}

pub fn simulate_tomography_with(
    params: &SourceParams,
    calib: &CalibrationData,
    live_times: &[f64; N_OUTCOMES],
    window: (f64, f64),
    seed: u64,
) -> Result<Vec<CountRecord>> {
    let rho = window_average_dm(params, window.0, window.1)?;
    simulate_counts(&rho, calib, live_times, Some(window), seed)
}

/// Windows `[max(0, c − w), c + w]` for each center, checked to be
/// non-empty and non-overlapping. Adjacent windows may share an edge.
pub fn tau_bins(centers: &[f64], half_width: f64) -> Result<Vec<(f64, f64)>> {
    if centers.is_empty() {
        return Err(Error::InvalidInput("no delay bins requested".into()));
    }
    if !(half_width.is_finite() && half_width > 0.0) {
        return Err(Error::InvalidInput("bin half-width must be positive".into()));
    }
    let bins: Vec<(f64, f64)> = centers
        .iter()
        .map(|&c| ((c - half_width).max(0.0), c + half_width))
        .collect();
    for (k, &(lo, hi)) in bins.iter().enumerate() {
        if !(centers[k].is_finite() && centers[k] >= 0.0 && hi > lo) {
            return Err(Error::InvalidInput(format!("bin centered at {} is empty", centers[k])));
        }
        // touching bins may overlap by rounding
        if k > 0 && lo < bins[k - 1].1 - 1e-9 * half_width {
            return Err(Error::InvalidInput(format!(
                "bins centered at {} and {} overlap",
                centers[k - 1],
                centers[k]
            )));
        }
    }
    Ok(bins)
}

/// One tomography run per delay bin. Bin `k` uses seed
/// `derive_seed(seed, [k])`; bins are simulated independently.
pub fn simulate_tau_series(
    params: &SourceParams,
    calib: &CalibrationData,
    duration: f64,
    tau_centers: &[f64],
    half_width: f64,
    seed: u64,
    exec: Execution,
) -> Result<Vec<Vec<CountRecord>>> {
    let bins = tau_bins(tau_centers, half_width)?;
    exec.map(bins.len(), |k| {
        simulate_tomography(params, calib, duration, bins[k], derive_seed(seed, &[k as u64]))
    })
    .into_iter()
    .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> SourceParams {
        SourceParams::new(9.6e5, 1.9e5, 6.7e7)
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let cal = CalibrationData::ideal(2e3, 26e-9);
        let a = simulate_tomography(&params(), &cal, 70.0, (0.0, 13e-9), 42).unwrap();
        let b = simulate_tomography(&params(), &cal, 70.0, (0.0, 13e-9), 42).unwrap();
        assert_eq!(a, b);
        let c = simulate_tomography(&params(), &cal, 70.0, (0.0, 13e-9), 43).unwrap();
        assert_ne!(a, c);
        assert_eq!(a.len(), 10);
        assert!(a.iter().all(|r| (r.duration - 10.0).abs() < 1e-12));
    }

    #[test]
    fn vanishing_duration_gives_no_counts() {
        let cal = CalibrationData::ideal(2e3, 26e-9);
        let r = simulate_tomography(&params(), &cal, 1e-12, (0.0, 13e-9), 1).unwrap();
        assert!(r.iter().all(|x| x.n_exp == 0 && x.singles == [0; 4]));
        assert!(simulate_tomography(&params(), &cal, 0.0, (0.0, 13e-9), 1).is_err());
    }

    #[test]
    fn bins_layout_and_validation() {
        let b = tau_bins(&[6e-9, 30e-9, 48e-9, 66e-9], 6e-9).unwrap();
        assert_eq!(b[0], (0.0, 12e-9));
        assert!((b[3].0 - 60e-9).abs() < 1e-18);
        assert!(tau_bins(&[6e-9, 10e-9], 6e-9).is_err());
        assert!(tau_bins(&(0..16).map(|k| k as f64 * 6e-9).collect::<Vec<_>>(), 3e-9).is_ok());
        assert!(tau_bins(&[], 6e-9).is_err());
        assert!(tau_bins(&[6e-9], 0.0).is_err());
        let single = tau_bins(&[0.0], 13e-9).unwrap();
        assert_eq!(single[0], (0.0, 13e-9));
    }

    #[test]
    fn series_is_independent_of_execution_mode() {
        let cal = CalibrationData::ideal(2e3, 26e-9);
        let centers = [6e-9, 30e-9, 48e-9, 66e-9];
        let a = simulate_tau_series(&params(), &cal, 7.0, &centers, 6e-9, 9, Execution::Sequential).unwrap();
        let b = simulate_tau_series(&params(), &cal, 7.0, &centers, 6e-9, 9, Execution::Parallel).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 4);
        assert_eq!(a[2][0].tau_bin, Some((42e-9, 54e-9)));
    }
}
