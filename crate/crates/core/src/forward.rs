//! Forward model of a polarization-squeezed beam.
//!
//! The H mode carries a stationary coherent amplitude; the V mode carries
//! the squeezed-vacuum output of a degenerate OPO below threshold (plus an
//! optional leaked coherent amplitude). Normally ordered fourth moments are
//! factorized with Wick's theorem into the correlation tensor `R`, whose
//! entries are, up to normalization, the two-photon density matrix at delay
//! `τ`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::quad::adaptive_simpson;
use crate::state::{cr, Basis, Mat4, TwoPhotonState, C64};

/// Relative tolerance of the window quadrature.
pub const WINDOW_QUAD_TOL: f64 = 1e-9;

/// Physical description of the beam. Fluxes in photons/second, `gamma` in
/// rad/s (decay rate of the squeezed-vacuum moments), angles in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceParams {
    pub phi_c: f64,
    pub phi_s: f64,
    pub gamma: f64,
    #[serde(default)]
    pub phase: f64,
    /// Standard deviation of residual phase noise on the squeezed field.
    #[serde(default)]
    pub dephasing: f64,
    /// Fraction of the coherent amplitude that leaks into the V mode.
    #[serde(default)]
    pub leakage: f64,
}

impl SourceParams {
    pub fn new(phi_c: f64, phi_s: f64, gamma: f64) -> Self {
        Self {
            phi_c,
            phi_s,
            gamma,
            phase: 0.0,
            dephasing: 0.0,
            leakage: 0.0,
        }
    }

    pub fn with_phase(mut self, phase: f64) -> Self {
        self.phase = phase;
        self
    }

    pub fn with_dephasing(mut self, sigma: f64) -> Self {
        self.dephasing = sigma;
        self
    }

    pub fn with_leakage(mut self, leakage: f64) -> Self {
        self.leakage = leakage;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.phi_c,
            self.phi_s,
            self.gamma,
            self.phase,
            self.dephasing,
            self.leakage,
        ]
        .iter()
        .all(|x| x.is_finite());
        if !finite {
            return Err(Error::Domain("source parameters must be finite".into()));
        }
        if self.phi_c < 0.0 || self.phi_s < 0.0 {
            return Err(Error::Domain("fluxes must be non-negative".into()));
        }
        if self.gamma <= 0.0 {
            return Err(Error::Domain("bandwidth gamma must be positive".into()));
        }
        if self.dephasing < 0.0 {
            return Err(Error::Domain("dephasing must be non-negative".into()));
        }
        if !(0.0..=1.0).contains(&self.leakage) {
            return Err(Error::Domain("leakage must lie in [0, 1]".into()));
        }
        let eps = self.epsilon();
        if eps.is_nan() || eps >= 1.0 {
            return Err(Error::Domain(format!("pump parameter {eps} is at or above threshold")));
        }
        Ok(())
    }

    /// Pump parameter `ε`, relative to threshold.
    ///
    /// The squeezed flux of the two-pole OPO spectrum is
    /// `Φ_S = Γ ε² / (2 (1 − ε²))`, inverted as `ε = √(Φ_S / (Γ/2 + Φ_S))`.
    pub fn epsilon(&self) -> f64 {
        (self.phi_s / (0.5 * self.gamma + self.phi_s)).sqrt()
    }

    /// H-mode coherent amplitude (real; sets the phase reference).
    fn h_amplitude(&self) -> f64 {
        (self.phi_c * (1.0 - self.leakage * self.leakage)).sqrt()
    }

    /// Coherent amplitude leaked into the V mode.
    fn v_amplitude(&self) -> f64 {
        self.leakage * self.phi_c.sqrt()
    }
}

/// Stationary second moments of the V-mode squeezed vacuum at delay `tau`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldMoments {
    /// `⟨E_V†(t) E_V(t+τ)⟩`
    pub n_tau: C64,
    /// `⟨E_V(t) E_V(t+τ)⟩`
    pub m_tau: C64,
    pub tau: f64,
}

pub fn field_moments(params: &SourceParams, tau: f64) -> Result<FieldMoments> {
    params.validate()?;
    Ok(moments_unchecked(params, tau))
}

fn moments_unchecked(params: &SourceParams, tau: f64) -> FieldMoments {
    let eps = params.epsilon();
    let g = params.gamma;
    let t = tau.abs();
    let slow = (-g * (1.0 - eps) * t).exp() / (1.0 - eps);
    let fast = (-g * (1.0 + eps) * t).exp() / (1.0 + eps);
    let pref = 0.25 * eps * g;
    FieldMoments {
        n_tau: cr(pref * (slow - fast)),
        m_tau: C64::from_polar(pref * (slow + fast), params.phase),
        tau,
    }
}

/// Photon polarization label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Pol {
    H,
    V,
}

/// Index of a two-photon label `(first, second)` in `HH, HV, VH, VV` order.
pub fn pair_index(first: Pol, second: Pol) -> usize {
    let b = |p: Pol| match p {
        Pol::H => 0,
        Pol::V => 1,
    };
    2 * b(first) + b(second)
}

/// The sixteen correlation functions
/// `R^{kl}_{ij}(τ) = ⟨E_i†(t) E_j†(t+τ) E_l(t+τ) E_k(t)⟩`, stored as a 4×4
/// array with row `ij` and column `kl` (photons²/s²).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationTensor {
    pub r: Mat4,
    pub tau: f64,
}

impl CorrelationTensor {
    pub fn get(&self, row: (Pol, Pol), col: (Pol, Pol)) -> C64 {
        self.r[(pair_index(row.0, row.1), pair_index(col.0, col.1))]
    }
}

/// A field factor in a normally ordered product: a deterministic part plus,
/// for the V mode, the Gaussian squeezed-vacuum part.
#[derive(Clone, Copy)]
struct Factor {
    constant: C64,
    gauss: Option<Gauss>,
}

/// Gaussian part of a factor: `s(t)` or `s*(t)`, with `t` either `0` or `τ`.
#[derive(Clone, Copy)]
struct Gauss {
    conj: bool,
    late: bool,
}

struct Wick {
    n0: C64,
    n_tau: C64,
    m0: C64,
    m_tau: C64,
    sigma: f64,
}

impl Wick {
    fn new(params: &SourceParams, tau: f64) -> Self {
        let z = moments_unchecked(params, 0.0);
        let t = moments_unchecked(params, tau);
        Self {
            n0: z.n_tau,
            n_tau: t.n_tau,
            m0: z.m_tau,
            m_tau: t.m_tau,
            sigma: params.dephasing,
        }
    }

    /// `(⟨s*(t_a) s(t_b)⟩, ⟨s(t_a) s(t_b)⟩)` for the times of `a` and `b`.
    fn moments_between(&self, a: Gauss, b: Gauss) -> (C64, C64) {
        match (a.late, b.late) {
            (false, false) | (true, true) => (self.n0, self.m0),
            (false, true) => (self.n_tau, self.m_tau),
            // n(−τ) = n(τ)*, m(−τ) = m(τ)
            (true, false) => (self.n_tau.conj(), self.m_tau),
        }
    }

    fn pair(&self, a: Gauss, b: Gauss) -> C64 {
        match (a.conj, b.conj) {
            (true, false) => self.moments_between(a, b).0,
            (false, true) => self.moments_between(b, a).0,
            (false, false) => self.moments_between(a, b).1,
            (true, true) => self.moments_between(a, b).1.conj(),
        }
    }

    /// Expectation of the product `f0 f1 f2 f3`.
    ///
    /// Expanding each factor into constant and Gaussian parts, terms with an
    /// odd number of Gaussian parts vanish and the rest are paired by Wick's
    /// theorem. Phase noise `s → s e^{iδ}`, `δ ~ N(0, σ²)`, multiplies a term
    /// with net charge `q = #s − #s*` by `exp(−q²σ²/2)`.
    fn expectation(&self, f: &[Factor; 4]) -> C64 {
        let mut total = cr(0.0);
        for mask in 0u8..16 {
            let mut coeff = cr(1.0);
            let mut gauss: Vec<Gauss> = Vec::with_capacity(4);
            let mut feasible = true;
            for (i, fi) in f.iter().enumerate() {
                if mask & (1 << i) != 0 {
                    match fi.gauss {
                        Some(g) => gauss.push(g),
                        None => feasible = false,
                    }
                } else {
                    coeff *= fi.constant;
                }
            }
            if !feasible || gauss.len() % 2 == 1 || coeff == cr(0.0) {
                continue;
            }
            let moment = match gauss.len() {
                0 => cr(1.0),
                2 => self.pair(gauss[0], gauss[1]),
                _ => {
                    let p = |a: usize, b: usize| self.pair(gauss[a], gauss[b]);
                    p(0, 1) * p(2, 3) + p(0, 2) * p(1, 3) + p(0, 3) * p(1, 2)
                }
            };
            let charge: i32 = gauss.iter().map(|g| if g.conj { -1 } else { 1 }).sum();
            let damping = if charge != 0 && self.sigma > 0.0 {
                (-(charge * charge) as f64 * self.sigma * self.sigma / 2.0).exp()
            } else {
                1.0
            };
            total += coeff * moment * cr(damping);
        }
        total
    }
}

fn field(params: &SourceParams, pol: Pol, late: bool, conj: bool) -> Factor {
    let (amp, gauss) = match pol {
        Pol::H => (cr(params.h_amplitude()), None),
        Pol::V => (cr(params.v_amplitude()), Some(Gauss { conj, late })),
    };
    Factor {
        constant: if conj { amp.conj() } else { amp },
        gauss,
    }
}

const POLS: [(Pol, Pol); 4] = [(Pol::H, Pol::H), (Pol::H, Pol::V), (Pol::V, Pol::H), (Pol::V, Pol::V)];

fn tensor_unchecked(params: &SourceParams, tau: f64) -> Mat4 {
    let wick = Wick::new(params, tau);
    Mat4::from_fn(|row, col| {
        let (i, j) = POLS[row];
        let (k, l) = POLS[col];
        // E_i†(t) E_j†(t+τ) E_l(t+τ) E_k(t)
        let f = [
            field(params, i, false, true),
            field(params, j, true, true),
            field(params, l, true, false),
            field(params, k, false, false),
        ];
        wick.expectation(&f)
    })
}

/// Correlation tensor at delay `tau` by Gaussian moment factorization.
///
/// With no leakage this reduces to `R_HH,HH = Φ_C²`,
/// `R_VV,VV = n(0)² + |n(τ)|² + |m(τ)|²`, `R_HV,HV = R_VH,VH = Φ_C n(0)`,
/// `R_HV,VH = Φ_C n(τ)*`, `R_HH,VV = α*² m(τ)` and zeros off the X.
pub fn correlation_tensor(params: &SourceParams, tau: f64) -> Result<CorrelationTensor> {
    params.validate()?;
    Ok(CorrelationTensor {
        r: tensor_unchecked(params, tau),
        tau,
    })
}

fn normalize(m: Mat4) -> Result<TwoPhotonState> {
    let tr = m.trace().re;
    if tr.is_nan() || tr <= 0.0 {
        return Err(Error::Domain(
            "correlation tensor has zero trace (both fluxes zero)".into(),
        ));
    }
    TwoPhotonState::from_unnormalized(m, Basis::Computational)
}

/// Two-photon density matrix at delay `tau` (trace-normalized tensor).
pub fn two_photon_dm(params: &SourceParams, tau: f64) -> Result<TwoPhotonState> {
    normalize(correlation_tensor(params, tau)?.r)
}

/// Element-wise integral of the correlation tensor over `τ ∈ [lo, hi]`
/// (the tensor is even in `τ`, so this covers `lo ≤ |τ| ≤ hi` up to a
/// factor of two that normalization removes).
pub fn window_integrated_tensor(params: &SourceParams, tau_lo: f64, tau_hi: f64) -> Result<Mat4> {
    params.validate()?;
    if !(tau_lo.is_finite() && tau_hi.is_finite() && 0.0 <= tau_lo && tau_lo < tau_hi) {
        return Err(Error::InvalidInput(format!(
            "invalid delay window [{tau_lo}, {tau_hi}]"
        )));
    }
    let f = |t: f64| -> [f64; 32] {
        let r = tensor_unchecked(params, t);
        std::array::from_fn(|k| {
            let z = r[(k / 2 / 4, (k / 2) % 4)];
            if k % 2 == 0 {
                z.re
            } else {
                z.im
            }
        })
    };
    let v = adaptive_simpson(&f, tau_lo, tau_hi, WINDOW_QUAD_TOL);
    Ok(Mat4::from_fn(|r, c| {
        C64::new(v[2 * (4 * r + c)], v[2 * (4 * r + c) + 1])
    }))
}

/// Density matrix of pairs whose delay satisfies `tau_lo ≤ |τ| ≤ tau_hi`.
pub fn window_average_dm(params: &SourceParams, tau_lo: f64, tau_hi: f64) -> Result<TwoPhotonState> {
    normalize(window_integrated_tensor(params, tau_lo, tau_hi)?)
}

/// Both Cauchy-Schwarz-type inequalities that classical fields obey.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CsCheck {
    /// `|R_HH,VV|²` against `R_HV,HV · R_VH,VH`
    pub lhs_a: f64,
    pub rhs_a: f64,
    pub violated_a: bool,
    /// `|R_HV,VH|²` against `R_HH,HH · R_VV,VV`
    pub lhs_b: f64,
    pub rhs_b: f64,
    pub violated_b: bool,
}

impl CsCheck {
    pub fn any_violated(&self) -> bool {
        self.violated_a || self.violated_b
    }
}

const CS_REL_TOL: f64 = 1e-12;

pub fn cs_inequality_check(tensor: &CorrelationTensor) -> CsCheck {
    use Pol::*;
    let lhs_a = tensor.get((H, H), (V, V)).norm_sqr();
    let rhs_a = tensor.get((H, V), (H, V)).re * tensor.get((V, H), (V, H)).re;
    let lhs_b = tensor.get((H, V), (V, H)).norm_sqr();
    let rhs_b = tensor.get((H, H), (H, H)).re * tensor.get((V, V), (V, V)).re;
    CsCheck {
        lhs_a,
        rhs_a,
        violated_a: lhs_a > rhs_a * (1.0 + CS_REL_TOL),
        lhs_b,
        rhs_b,
        violated_b: lhs_b > rhs_b * (1.0 + CS_REL_TOL),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocusPoint {
    pub phi_c: f64,
    pub phi_s: f64,
    /// `Φ_S < Γ`
    pub valid: bool,
}

/// Samples the high-concurrence locus `Γ Φ_S = Φ_C²` at the given coherent
/// fluxes.
pub fn sweet_spot_locus(gamma: f64, phi_c: &[f64]) -> Result<Vec<LocusPoint>> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::Domain("gamma must be positive".into()));
    }
    Ok(phi_c
        .iter()
        .map(|&pc| {
            let ps = pc * pc / gamma;
            LocusPoint {
                phi_c: pc,
                phi_s: ps,
                valid: ps < gamma,
            }
        })
        .collect())
}

/// Squeezed-vacuum and coherent two-photon contributions at `tau`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairRates {
    /// `R_VV,VV(τ)`
    pub sv_rate: f64,
    /// `R_HH,HH(τ)`
    pub cs_rate: f64,
}

pub fn pair_rate_components(params: &SourceParams, tau: f64) -> Result<PairRates> {
    use Pol::*;
    let t = correlation_tensor(params, tau)?;
    Ok(PairRates {
        sv_rate: t.get((V, V), (V, V)).re,
        cs_rate: t.get((H, H), (H, H)).re,
    })
}

/// Bandwidth `Γ` for which the squeezed and coherent pair rates cross at
/// `crossover_tau`.
///
/// `R_VV,VV(τ*) − R_HH,HH` as a function of `Γ` is generally positive on a
/// bounded interval and has two roots. The larger root (crossover
/// `Γτ* ≳ 1`) is returned: there the crossover moves to shorter delays as
/// `Γ` grows and the concurrence peaks near it.
pub fn fit_gamma(phi_c: f64, phi_s: f64, crossover_tau: f64) -> Result<f64> {
    if !(crossover_tau > 0.0 && crossover_tau.is_finite()) {
        return Err(Error::InvalidInput("crossover delay must be positive".into()));
    }
    if !(phi_c > 0.0 && phi_s > 0.0) {
        return Err(Error::Domain("crossover fit needs both fluxes positive".into()));
    }
    let excess = |g: f64| -> f64 {
        let p = SourceParams::new(phi_c, phi_s, g);
        let t = tensor_unchecked(&p, crossover_tau);
        (t[(3, 3)].re - t[(0, 0)].re) / (phi_c * phi_c)
    };
    let lo = 1e-4 / crossover_tau;
    let hi = 1e4 / crossover_tau;
    let steps = 2000;
    let grid: Vec<f64> = (0..=steps)
        .map(|k| lo * (hi / lo).powf(k as f64 / steps as f64))
        .collect();
    let vals: Vec<f64> = grid.iter().map(|&g| excess(g)).collect();
    let bracket = (0..steps)
        .rev()
        .find(|&k| vals[k] > 0.0 && vals[k + 1] <= 0.0)
        .ok_or_else(|| {
            Error::Numerical(format!(
                "no bandwidth puts the pair-rate crossover at {crossover_tau} s for these fluxes"
            ))
        })?;
    let (mut a, mut b) = (grid[bracket], grid[bracket + 1]);
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if excess(mid) > 0.0 {
            a = mid;
        } else {
            b = mid;
        }
        if (b - a) <= 4.0 * f64::EPSILON * b {
            break;
        }
    }
    let root = 0.5 * (a + b);
    let resid = excess(root).abs();
    if resid > 1e-9 {
        return Err(Error::Numerical(format!("crossover fit residual {resid:e}")));
    }
    Ok(root)
}

/// Evaluates `f` on every `τ` of a grid, in parallel when enabled.
pub fn scan_tau<T, F>(exec: Execution, taus: &[f64], f: F) -> Vec<T>
where
    T: Send,
    F: Fn(f64) -> T + Sync + Send,
{
    exec.map_slice(taus, |&t| f(t))
}
