//! Tomographic measurement model: waveplates, the ten-outcome POVM,
//! detector efficiencies and accidental coincidences.
//!
//! The analyser is a QWP and HWP followed by a polarizing split into an H
//! path (detectors D1, D2) and a V path (D3, D4). Seven waveplate
//! configurations give ten coincidence outcomes because same-path and
//! cross-path pairs are recorded simultaneously.

use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::state::{c, cr, Basis, Mat4, TwoPhotonState, C64};

pub type Jones = Matrix2<C64>;

/// Half-wave plate at angle `theta`: `[[cos 2θ, sin 2θ], [sin 2θ, −cos 2θ]]`.
pub fn jones_hwp(theta: f64) -> Jones {
    let (s, co) = (2.0 * theta).sin_cos();
    Jones::new(cr(co), cr(s), cr(s), cr(-co))
}

/// Quarter-wave plate at angle `theta`, in the
/// `[[cos²θ + i sin²θ, (1−i) sinθ cosθ], [(1−i) sinθ cosθ, i cos²θ + sin²θ]]`
/// convention.
pub fn jones_qwp(theta: f64) -> Jones {
    let (s, co) = theta.sin_cos();
    let off = c(1.0, -1.0) * cr(s * co);
    Jones::new(c(co * co, s * s), off, off, c(s * s, co * co))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ProjectorClass {
    /// `|HH⟩⟨HH|`
    P1,
    /// `|VV⟩⟨VV|`
    P2,
    /// `|HV⟩⟨HV| + |VH⟩⟨VH|`
    P3,
}

impl ProjectorClass {
    pub fn matrix(self) -> Mat4 {
        let diag = match self {
            ProjectorClass::P1 => [1.0, 0.0, 0.0, 0.0],
            ProjectorClass::P2 => [0.0, 0.0, 0.0, 1.0],
            ProjectorClass::P3 => [0.0, 1.0, 1.0, 0.0],
        };
        Mat4::from_fn(|r, col| if r == col { cr(diag[r]) } else { cr(0.0) })
    }
}

/// Detector pairs whose coincidences make up an outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DetectorPair {
    /// D1 with D2 (both photons in the H path)
    D1D2,
    /// D3 with D4 (both photons in the V path)
    D3D4,
    /// Sum over the four pairs (Di, Dj), i ∈ {1, 2}, j ∈ {3, 4}
    Cross,
}

impl DetectorPair {
    /// Zero-based detector index pairs.
    pub fn pairs(self) -> &'static [(usize, usize)] {
        match self {
            DetectorPair::D1D2 => &[(0, 1)],
            DetectorPair::D3D4 => &[(2, 3)],
            DetectorPair::Cross => &[(0, 2), (0, 3), (1, 2), (1, 3)],
        }
    }
}

/// One tomography outcome: waveplate angles, projector and detector pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasurementSetting {
    /// Outcome index, 1-based.
    pub m: usize,
    pub theta_hwp: f64,
    pub theta_qwp: f64,
    pub projector: ProjectorClass,
    pub detectors: DetectorPair,
}

pub const N_OUTCOMES: usize = 10;

/// The standard ten-outcome table.
pub fn default_settings() -> [MeasurementSetting; N_OUTCOMES] {
    use DetectorPair::*;
    use ProjectorClass::*;
    let row = |m, h: f64, q: f64, projector, detectors| MeasurementSetting {
        m,
        theta_hwp: h,
        theta_qwp: q,
        projector,
        detectors,
    };
    [
        row(1, 0.0, 0.0, P1, D1D2),
        row(2, 0.0, 0.0, P2, D3D4),
        row(3, 0.0, 0.0, P3, Cross),
        row(4, PI / 16.0, 0.0, P1, D1D2),
        row(5, PI / 8.0, 0.0, P1, D1D2),
        row(6, PI / 8.0, 0.0, P3, Cross),
        row(7, PI / 8.0, PI / 4.0, P3, Cross),
        row(8, PI / 8.0, PI / 8.0, P1, D1D2),
        row(9, PI / 4.0, PI / 8.0, P1, D1D2),
        row(10, 0.0, PI / 8.0, P3, Cross),
    ]
}

/// Checks that a loaded table has outcomes `1..=10`, in order, each with a
/// projector consistent with its detector pair.
pub fn validate_settings(settings: &[MeasurementSetting]) -> Result<()> {
    if settings.len() != N_OUTCOMES {
        return Err(Error::InvalidInput(format!(
            "expected {N_OUTCOMES} settings, got {}",
            settings.len()
        )));
    }
    for (k, s) in settings.iter().enumerate() {
        if s.m != k + 1 {
            return Err(Error::InvalidInput(format!("setting {} has index m = {}", k + 1, s.m)));
        }
        let consistent = matches!(
            (s.projector, s.detectors),
            (ProjectorClass::P1, DetectorPair::D1D2)
                | (ProjectorClass::P2, DetectorPair::D3D4)
                | (ProjectorClass::P3, DetectorPair::Cross)
        );
        if !consistent {
            return Err(Error::InvalidInput(format!(
                "setting m = {} pairs {:?} with {:?}",
                s.m, s.projector, s.detectors
            )));
        }
        if !(s.theta_hwp.is_finite() && s.theta_qwp.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "setting m = {} has non-finite angles",
                s.m
            )));
        }
    }
    Ok(())
}

fn kron2(a: &Jones, b: &Jones) -> Mat4 {
    Mat4::from_fn(|r, col| a[(r / 2, col / 2)] * b[(r % 2, col % 2)])
}

/// `Π = (U_HWP U_QWP)^{⊗2} P (U_QWP† U_HWP†)^{⊗2}`.
pub fn povm_for(theta_hwp: f64, theta_qwp: f64, projector: ProjectorClass) -> Mat4 {
    let u = jones_hwp(theta_hwp) * jones_qwp(theta_qwp);
    let uu = kron2(&u, &u);
    uu * projector.matrix() * uu.adjoint()
}

pub fn povm_element(setting: &MeasurementSetting) -> Mat4 {
    povm_for(setting.theta_hwp, setting.theta_qwp, setting.projector)
}

/// Path-and-detector calibration plus per-setting rates for one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationData {
    /// Normalized efficiencies `γᵢ`, summing to one.
    pub gamma: [f64; 4],
    /// Singles rate `β_{i,m}` per setting and detector (counts/s).
    pub beta: [[f64; 4]; N_OUTCOMES],
    /// Background singles rate `b_{i,m}` (counts/s).
    pub background: [[f64; 4]; N_OUTCOMES],
    /// Source brightness `α_m` per setting (counts/s).
    pub alpha: [f64; N_OUTCOMES],
    /// Coincidence window `Δτ` (s).
    pub delta_tau_s: f64,
}

impl CalibrationData {
    /// Uniform efficiencies, no background, equal brightness `alpha` for
    /// every setting.
    pub fn ideal(alpha: f64, delta_tau_s: f64) -> Self {
        Self {
            gamma: [0.25; 4],
            beta: [[alpha / 4.0 * 0.25; 4]; N_OUTCOMES],
            background: [[0.0; 4]; N_OUTCOMES],
            alpha: [alpha; N_OUTCOMES],
            delta_tau_s,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.gamma.iter().any(|g| !(g.is_finite() && *g >= 0.0)) {
            return Err(Error::InvalidInput("efficiencies must be non-negative".into()));
        }
        let sum: f64 = self.gamma.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidInput(format!("efficiencies sum to {sum}, not 1")));
        }
        for m in 0..N_OUTCOMES {
            for i in 0..4 {
                let (b, bg) = (self.beta[m][i], self.background[m][i]);
                if !(b.is_finite() && bg.is_finite() && bg >= 0.0 && bg <= b) {
                    return Err(Error::InvalidInput(format!(
                        "setting {} detector {}: need 0 <= background ({bg}) <= singles ({b})",
                        m + 1,
                        i + 1
                    )));
                }
            }
            if !(self.alpha[m].is_finite() && self.alpha[m] >= 0.0) {
                return Err(Error::InvalidInput(format!(
                    "brightness for setting {} is invalid",
                    m + 1
                )));
            }
        }
        if !(self.delta_tau_s.is_finite() && self.delta_tau_s > 0.0) {
            return Err(Error::InvalidInput("coincidence window must be positive".into()));
        }
        Ok(())
    }

    /// Same calibration with detectors relabeled: new detector `k` is old
    /// detector `perm[k]`.
    pub fn permuted_detectors(&self, perm: [usize; 4]) -> Self {
        let mut out = self.clone();
        for (k, &src) in perm.iter().enumerate() {
            out.gamma[k] = self.gamma[src];
            for m in 0..N_OUTCOMES {
                out.beta[m][k] = self.beta[m][src];
                out.background[m][k] = self.background[m][src];
            }
        }
        out
    }
}

/// `γᵢ = β_{i,45°} / Σⱼ β_{j,45°}` from singles measured with a 45° coherent
/// beam.
pub fn calibrate_efficiencies(beta_45: [f64; 4]) -> Result<[f64; 4]> {
    if beta_45.iter().any(|b| !(b.is_finite() && *b > 0.0)) {
        return Err(Error::InvalidInput("calibration rates must be positive".into()));
    }
    let total: f64 = beta_45.iter().sum();
    Ok(beta_45.map(|b| b / total))
}

/// Total brightness `α_m = Σᵢ β_{i,m} / γᵢ`.
pub fn brightness(beta_m: [f64; 4], gamma: [f64; 4]) -> Result<f64> {
    if gamma.iter().any(|g| *g <= 0.0) {
        return Err(Error::InvalidInput("brightness needs all efficiencies positive".into()));
    }
    Ok(beta_m.iter().zip(gamma.iter()).map(|(b, g)| b / g).sum())
}

/// Probability that a photon pair is split onto the detector pair.
pub fn eta_for(detectors: DetectorPair, gamma: &[f64; 4]) -> f64 {
    match detectors {
        DetectorPair::D1D2 => 2.0 * gamma[0] * gamma[1],
        DetectorPair::D3D4 => 2.0 * gamma[2] * gamma[3],
        DetectorPair::Cross => (gamma[0] + gamma[1]) * (gamma[2] + gamma[3]),
    }
}

/// Efficiency factor `η_m` of outcome `m` (1-based) in the standard table.
pub fn eta_factor(m: usize, gamma: &[f64; 4]) -> Result<f64> {
    let s = setting_by_index(m)?;
    Ok(eta_for(s.detectors, gamma))
}

fn setting_by_index(m: usize) -> Result<MeasurementSetting> {
    if !(1..=N_OUTCOMES).contains(&m) {
        return Err(Error::InvalidInput(format!("outcome index {m} outside 1..=10")));
    }
    Ok(default_settings()[m - 1])
}

/// Accidental coincidence rate between detectors `i` and `j`:
/// `[β_i β_j − (β_i − b_i)(β_j − b_j)] Δτ`.
pub fn accidentals_pair(beta: &[f64; 4], background: &[f64; 4], i: usize, j: usize, delta_tau: f64) -> f64 {
    (beta[i] * beta[j] - (beta[i] - background[i]) * (beta[j] - background[j])) * delta_tau
}

/// Accidental rate `acc_m` aggregated over the outcome's detector pairs.
pub fn accidentals(beta_m: &[f64; 4], b_m: &[f64; 4], delta_tau: f64, detectors: DetectorPair) -> Result<f64> {
    if !(delta_tau.is_finite() && delta_tau > 0.0) {
        return Err(Error::InvalidInput("coincidence window must be positive".into()));
    }
    Ok(detectors
        .pairs()
        .iter()
        .map(|&(i, j)| accidentals_pair(beta_m, b_m, i, j, delta_tau))
        .sum())
}

/// Precomputed per-outcome quantities for a calibration and settings table.
#[derive(Debug, Clone)]
pub struct OutcomeModel {
    pub povm: [Mat4; N_OUTCOMES],
    /// `η_m α_m`
    pub gain: [f64; N_OUTCOMES],
    pub acc: [f64; N_OUTCOMES],
}

impl OutcomeModel {
    pub fn new(settings: &[MeasurementSetting; N_OUTCOMES], calib: &CalibrationData) -> Result<Self> {
        validate_settings(settings)?;
        calib.validate()?;
        let mut gain = [0.0; N_OUTCOMES];
        let mut acc = [0.0; N_OUTCOMES];
        for (k, s) in settings.iter().enumerate() {
            gain[k] = eta_for(s.detectors, &calib.gamma) * calib.alpha[k];
            acc[k] = accidentals(&calib.beta[k], &calib.background[k], calib.delta_tau_s, s.detectors)?;
        }
        Ok(Self {
            povm: std::array::from_fn(|k| povm_element(&settings[k])),
            gain,
            acc,
        })
    }

    /// Expected coincidence rates `n_th,m` (counts/s) for a computational-basis
    /// matrix (not necessarily normalized).
    pub fn rates(&self, rho: &Mat4) -> [f64; N_OUTCOMES] {
        std::array::from_fn(|k| trace_product(&self.povm[k], rho) * self.gain[k] + self.acc[k])
    }
}

/// `Re Tr[A B]`.
pub(crate) fn trace_product(a: &Mat4, b: &Mat4) -> f64 {
    let mut t = 0.0;
    for r in 0..4 {
        for col in 0..4 {
            t += (a[(r, col)] * b[(col, r)]).re;
        }
    }
    t
}

/// `n_th,m = Tr[Π_m ρ] η_m α_m + acc_m` as a rate (counts/s).
pub fn expected_counts(rho: &TwoPhotonState, setting: &MeasurementSetting, calib: &CalibrationData) -> Result<f64> {
    if rho.basis() != Basis::Computational {
        return Err(Error::BasisMismatch {
            expected: Basis::Computational,
            got: rho.basis(),
        });
    }
    calib.validate()?;
    if !(1..=N_OUTCOMES).contains(&setting.m) {
        return Err(Error::InvalidInput(format!(
            "outcome index {} outside 1..=10",
            setting.m
        )));
    }
    let k = setting.m - 1;
    let p = trace_product(&povm_element(setting), rho.matrix());
    let acc = accidentals(
        &calib.beta[k],
        &calib.background[k],
        calib.delta_tau_s,
        setting.detectors,
    )?;
    Ok((p.max(0.0) * eta_for(setting.detectors, &calib.gamma) * calib.alpha[k] + acc).max(0.0))
}
