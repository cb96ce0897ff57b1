//! Permutation-invariant state reconstruction from coincidence counts.
//!
//! States are parameterized as `ρ = L†L` in the triplet-singlet basis with
//! `L` lower triangular:
//!
//! ```text
//!     ⎡ p1         0          0   0  ⎤
//! L = ⎢ p5 + ip6   p2         0   0  ⎥
//!     ⎢ p7 + ip8   p9 + ip10  p3  0  ⎥
//!     ⎣ 0          0          0   p4 ⎦
//! ```
//!
//! so every real vector maps to a PSD, permutation-invariant matrix. The fit
//! minimizes `Σ_m (n_th,m − n_exp,m)² / (2 n_th,m)` over `p`, where
//! `n_th,m = (Tr[Π_m L†L] η_m α_m + acc_m) T_m`. The trace of `L†L` is left
//! free (it absorbs the pair-per-brightness scale); the reported state is
//! trace-normalized.

use log::warn;
use nalgebra::{SMatrix, SVector};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::measurement::{default_settings, CalibrationData, MeasurementSetting, OutcomeModel, N_OUTCOMES};
use crate::optim::{damped_newton, NewtonOptions};
use crate::rng::{derive_seed, rng_from_seed};
use crate::simulator::{poisson, CountRecord};
use crate::state::{c, concurrence, cr, triplet_singlet_isometry, Basis, Mat4, TwoPhotonState, C64};

pub const N_PARAMS: usize = 10;

/// Floor on `n_th` inside the objective (counts).
pub const N_TH_FLOOR: f64 = 1e-9;

type Vec10 = SVector<f64, N_PARAMS>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CholeskyParams {
    pub p: [f64; N_PARAMS],
}

/// Position of each parameter in `L`: `(row, col, multiplies i)`.
const PARAM_SLOTS: [(usize, usize, bool); N_PARAMS] = [
    (0, 0, false),
    (1, 1, false),
    (2, 2, false),
    (3, 3, false),
    (1, 0, false),
    (1, 0, true),
    (2, 0, false),
    (2, 0, true),
    (2, 1, false),
    (2, 1, true),
];

impl CholeskyParams {
    pub fn new(p: [f64; N_PARAMS]) -> Self {
        Self { p }
    }

    /// The lower-triangular factor in the triplet-singlet basis.
    pub fn lower(&self) -> Mat4 {
        let mut l = Mat4::zeros();
        for (k, &(r, col, imag)) in PARAM_SLOTS.iter().enumerate() {
            l[(r, col)] += if imag { c(0.0, self.p[k]) } else { cr(self.p[k]) };
        }
        l
    }

    /// `L†L` in the triplet-singlet basis, not normalized.
    pub fn gram(&self) -> Mat4 {
        let l = self.lower();
        l.adjoint() * l
    }

    /// Recovers parameters with `L†L = m` for a PSD, permutation-invariant
    /// triplet-singlet matrix (the singlet row/column must be decoupled).
    pub fn from_gram(m: &Mat4) -> Result<Self> {
        // Reverse the 3×3 triplet block so an ordinary Cholesky factor
        // `C C†` maps to `U U†` with `U` upper triangular; then `L = U†`.
        let scale = m.trace().re.abs().max(f64::MIN_POSITIVE);
        let ridge = 1e-12 * scale;
        let rev = nalgebra::Matrix3::<C64>::from_fn(|r, col| {
            m[(2 - r, 2 - col)] + if r == col { cr(ridge) } else { cr(0.0) }
        });
        let ch = rev
            .cholesky()
            .ok_or_else(|| Error::Numerical("triplet block is not positive definite".into()))?;
        let cl = ch.l();
        let u = nalgebra::Matrix3::<C64>::from_fn(|r, col| cl[(2 - r, 2 - col)]);
        let l3 = u.adjoint();
        let mut p = [0.0; N_PARAMS];
        p[0] = l3[(0, 0)].re;
        p[1] = l3[(1, 1)].re;
        p[2] = l3[(2, 2)].re;
        p[3] = m[(3, 3)].re.max(0.0).sqrt();
        p[4] = l3[(1, 0)].re;
        p[5] = l3[(1, 0)].im;
        p[6] = l3[(2, 0)].re;
        p[7] = l3[(2, 0)].im;
        p[8] = l3[(2, 1)].re;
        p[9] = l3[(2, 1)].im;
        Ok(Self { p })
    }
}

/// Normalized state `L†L / Tr[L†L]` in the computational basis.
pub fn cholesky_to_dm(params: &CholeskyParams) -> Result<TwoPhotonState> {
    let g = params.gram();
    let tr = g.trace().re;
    if !(tr > 0.0 && tr.is_finite()) {
        return Err(Error::InvalidInput("Cholesky parameters give zero trace".into()));
    }
    let t = triplet_singlet_isometry();
    TwoPhotonState::from_unnormalized(t * (g / cr(tr)) * t.adjoint(), Basis::Computational)
}

/// Outcome of a maximum-likelihood fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub rho_hat: TwoPhotonState,
    pub p_hat: CholeskyParams,
    /// Final value of the weighted error function.
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    /// `n_th,m − n_exp,m` at the optimum (counts).
    pub residuals: [f64; N_OUTCOMES],
}

#[derive(Debug, Clone, Copy)]
pub struct FitOptions {
    /// Total starts: one linear-inversion seed, the caller's initial point
    /// if any, the rest random.
    pub n_starts: usize,
    pub max_iter: usize,
    /// Seed for the random starts.
    pub seed: u64,
    pub exec: Execution,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            n_starts: 16,
            max_iter: 500,
            seed: 0x5eed,
            exec: Execution::default(),
        }
    }
}

/// Counts and live times for the ten outcomes, in outcome order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CountData {
    pub counts: [f64; N_OUTCOMES],
    pub live_times: [f64; N_OUTCOMES],
}

impl CountData {
    /// Counts may be non-integer (for example noiseless expected counts).
    pub fn new(counts: [f64; N_OUTCOMES], live_times: [f64; N_OUTCOMES]) -> Result<Self> {
        let data = Self { counts, live_times };
        data.validate()?;
        Ok(data)
    }

    /// Orders records by outcome and checks that each of the ten outcomes
    /// appears exactly once.
    pub fn from_records(records: &[CountRecord]) -> Result<Self> {
        let mut counts = [f64::NAN; N_OUTCOMES];
        let mut live_times = [f64::NAN; N_OUTCOMES];
        for r in records {
            if !(1..=N_OUTCOMES).contains(&r.m) {
                return Err(Error::InvalidInput(format!("record has outcome index {}", r.m)));
            }
            let k = r.m - 1;
            if !counts[k].is_nan() {
                return Err(Error::InvalidInput(format!("outcome {} appears twice", r.m)));
            }
            counts[k] = r.n_exp as f64;
            live_times[k] = r.duration;
        }
        if let Some(k) = counts.iter().position(|x| x.is_nan()) {
            return Err(Error::InvalidInput(format!("missing outcome {}", k + 1)));
        }
        let data = Self { counts, live_times };
        data.validate()?;
        Ok(data)
    }

    fn validate(&self) -> Result<()> {
        if self.live_times.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
            return Err(Error::InvalidInput("live times must be positive".into()));
        }
        if self.counts.iter().any(|n| !(n.is_finite() && *n >= 0.0)) {
            return Err(Error::InvalidInput("counts must be non-negative".into()));
        }
        if self.counts.iter().all(|&n| n == 0.0) {
            return Err(Error::InvalidInput("all counts are zero; nothing to fit".into()));
        }
        Ok(())
    }
}

/// The fit problem: measurement model moved into the triplet-singlet
/// basis, scaled by live time.
///
/// Each expected count is a quadratic form in the parameters,
/// `n_th,m = pᵀ A_m p + o_m` with `A_m = η_m α_m T_m Re Tr[Π_m B_k† B_l]`,
/// where `L = Σ_k p_k B_k`.
pub struct Problem {
    povm_ts: [Mat4; N_OUTCOMES],
    /// `η_m α_m T_m`
    gain: [f64; N_OUTCOMES],
    /// `acc_m T_m`
    offset: [f64; N_OUTCOMES],
    forms: [SquareMat; N_OUTCOMES],
    counts: [f64; N_OUTCOMES],
}

type SquareMat = SMatrix<f64, N_PARAMS, N_PARAMS>;

fn param_basis() -> [Mat4; N_PARAMS] {
    std::array::from_fn(|k| {
        let (r, col, imag) = PARAM_SLOTS[k];
        let mut b = Mat4::zeros();
        b[(r, col)] = if imag { c(0.0, 1.0) } else { cr(1.0) };
        b
    })
}

impl Problem {
    pub fn new(data: &CountData, settings: &[MeasurementSetting; N_OUTCOMES], calib: &CalibrationData) -> Result<Self> {
        data.validate()?;
        let model = OutcomeModel::new(settings, calib)?;
        let t = triplet_singlet_isometry();
        let gain: [f64; N_OUTCOMES] = std::array::from_fn(|k| model.gain[k] * data.live_times[k]);
        if gain.iter().all(|&g| g == 0.0) {
            return Err(Error::InvalidInput(
                "calibration gives zero gain for every outcome".into(),
            ));
        }
        let povm_ts: [Mat4; N_OUTCOMES] = std::array::from_fn(|k| t.adjoint() * model.povm[k] * t);
        let basis = param_basis();
        let forms = std::array::from_fn(|m| {
            let q = SquareMat::from_fn(|k, l| trace_re(&povm_ts[m], &(basis[k].adjoint() * basis[l])) * gain[m]);
            (q + q.transpose()) * 0.5
        });
        Ok(Self {
            povm_ts,
            gain,
            offset: std::array::from_fn(|k| model.acc[k] * data.live_times[k]),
            forms,
            counts: data.counts,
        })
    }

    /// Expected counts `n_th,m` for an unnormalized triplet-singlet matrix.
    pub fn expected(&self, gram: &Mat4) -> [f64; N_OUTCOMES] {
        std::array::from_fn(|k| trace_re(&self.povm_ts[k], gram) * self.gain[k] + self.offset[k])
    }

    /// The weighted error function at `p`.
    pub fn objective(&self, p: &CholeskyParams) -> f64 {
        let n_th = self.expected(&p.gram());
        n_th.iter()
            .zip(self.counts.iter())
            .map(|(&n, &y)| {
                let n = n.max(N_TH_FLOOR);
                (n - y) * (n - y) / (2.0 * n)
            })
            .sum()
    }

    /// Objective, gradient and Hessian from the quadratic forms.
    ///
    /// Per outcome `f(n) = (n − y)²/(2n)`, `f' = ½ − y²/(2n²)`,
    /// `f'' = y²/n³`, and `∇n = 2Ap`, `∇²n = 2A`. Below the floor `n` is
    /// held constant.
    fn derivatives(&self, x: &Vec10) -> (f64, Vec10, SquareMat) {
        let mut f = 0.0;
        let mut g = Vec10::zeros();
        let mut h = SquareMat::zeros();
        for m in 0..N_OUTCOMES {
            let ap = self.forms[m] * x;
            let raw = x.dot(&ap) + self.offset[m];
            let y = self.counts[m];
            let n = raw.max(N_TH_FLOOR);
            f += (n - y) * (n - y) / (2.0 * n);
            if raw < N_TH_FLOOR {
                continue;
            }
            let d1 = 0.5 - y * y / (2.0 * n * n);
            let d2 = y * y / (n * n * n);
            let grad_n = ap * 2.0;
            g += grad_n * d1;
            h += grad_n * grad_n.transpose() * d2 + self.forms[m] * (2.0 * d1);
        }
        (f, g, h)
    }

    /// Gradient of the objective, for diagnostics and tests.
    pub fn gradient(&self, p: &CholeskyParams) -> [f64; N_PARAMS] {
        let (_, g, _) = self.derivatives(&Vec10::from_row_slice(&p.p));
        std::array::from_fn(|k| g[k])
    }

    /// Hessian of the objective, row-major.
    pub fn hessian(&self, p: &CholeskyParams) -> [[f64; N_PARAMS]; N_PARAMS] {
        let (_, _, h) = self.derivatives(&Vec10::from_row_slice(&p.p));
        std::array::from_fn(|r| std::array::from_fn(|col| h[(r, col)]))
    }

    /// `∂n_th,m / ∂p_k` at `p`.
    #[cfg(test)]
    fn tangent_map(&self, x: &Vec10) -> SquareMat {
        SquareMat::from_fn(|m, k| 2.0 * (self.forms[m] * x)[k])
    }

    /// Linear map from Hermitian permutation-invariant matrices (10 real
    /// coordinates) to expected coincidence rates, without offsets.
    fn linear_map(&self) -> (SMatrix<f64, N_OUTCOMES, N_PARAMS>, [Mat4; N_PARAMS]) {
        let basis = pi_hermitian_basis();
        let a =
            SMatrix::<f64, N_OUTCOMES, N_PARAMS>::from_fn(|m, j| trace_re(&self.povm_ts[m], &basis[j]) * self.gain[m]);
        (a, basis)
    }

    /// Unconstrained least-squares inversion, projected onto PSD matrices.
    pub fn linear_inversion(&self) -> Result<CholeskyParams> {
        let (a, basis) = self.linear_map();
        let b = SVector::<f64, N_OUTCOMES>::from_fn(|m, _| self.counts[m] - self.offset[m]);
        let svd = a.svd(true, true);
        let x = svd
            .solve(&b, 1e-12 * svd.singular_values.max())
            .map_err(|e| Error::Numerical(format!("linear inversion failed: {e}")))?;
        let mut m = Mat4::zeros();
        for j in 0..N_PARAMS {
            m += basis[j] * cr(x[j]);
        }
        let eig = crate::state::hermitian_eigen(&m);
        let clipped = eig.eigenvalues.map(|l| cr(l.max(0.0)));
        let mut psd = eig.eigenvectors * Mat4::from_diagonal(&clipped) * eig.eigenvectors.adjoint();
        if psd.trace().re <= 0.0 {
            psd = Mat4::identity()
                * cr(self.counts.iter().sum::<f64>().max(1.0) / self.gain.iter().sum::<f64>().max(f64::MIN_POSITIVE));
        }
        // restore exact singlet decoupling
        for k in 0..3 {
            psd[(k, 3)] = cr(0.0);
            psd[(3, k)] = cr(0.0);
        }
        CholeskyParams::from_gram(&psd)
    }

    /// Rescales `p` so predicted and observed totals agree.
    fn rescale(&self, p: &mut CholeskyParams) {
        let pred: f64 = self
            .expected(&p.gram())
            .iter()
            .zip(self.offset.iter())
            .map(|(n, o)| n - o)
            .sum();
        let obs: f64 = self
            .counts
            .iter()
            .zip(self.offset.iter())
            .map(|(y, o)| (y - o).max(0.0))
            .sum::<f64>()
            .max(1.0);
        if pred > 0.0 {
            let s = (obs / pred).sqrt();
            p.p.iter_mut().for_each(|v| *v *= s);
        }
    }
}

fn trace_re(a: &Mat4, b: &Mat4) -> f64 {
    crate::measurement::trace_product(a, b)
}

/// Basis of Hermitian matrices with a 3×3 triplet block and a decoupled
/// singlet entry.
fn pi_hermitian_basis() -> [Mat4; N_PARAMS] {
    let mut out = [Mat4::zeros(); N_PARAMS];
    let mut k = 0;
    for d in 0..4 {
        out[k][(d, d)] = cr(1.0);
        k += 1;
    }
    for (r, col) in [(0, 1), (0, 2), (1, 2)] {
        out[k][(r, col)] = cr(1.0);
        out[k][(col, r)] = cr(1.0);
        k += 1;
        out[k][(r, col)] = c(0.0, 1.0);
        out[k][(col, r)] = c(0.0, -1.0);
        k += 1;
    }
    out
}

/// Weighted maximum-likelihood fit with the standard settings table and
/// default options.
pub fn mle_fit(records: &[CountRecord], calib: &CalibrationData, init: Option<&CholeskyParams>) -> Result<FitResult> {
    let data = CountData::from_records(records)?;
    mle_fit_data(&data, &default_settings(), calib, init, &FitOptions::default())
}

pub fn mle_fit_data(
    data: &CountData,
    settings: &[MeasurementSetting; N_OUTCOMES],
    calib: &CalibrationData,
    init: Option<&CholeskyParams>,
    opts: &FitOptions,
) -> Result<FitResult> {
    let problem = Problem::new(data, settings, calib)?;
    fit_problem(&problem, init, opts)
}

/// Multi-start minimization of a prepared problem.
pub fn fit_problem(problem: &Problem, init: Option<&CholeskyParams>, opts: &FitOptions) -> Result<FitResult> {
    let mut starts: Vec<CholeskyParams> = Vec::with_capacity(opts.n_starts.max(1) + 1);
    if let Ok(seed) = problem.linear_inversion() {
        starts.push(seed);
    }
    if let Some(p) = init {
        starts.push(*p);
    }
    let mut k = 0u64;
    while starts.len() < opts.n_starts.max(1) {
        let mut rng = rng_from_seed(derive_seed(opts.seed, &[k]));
        let mut p = CholeskyParams::new(std::array::from_fn(|_| StandardNormal.sample(&mut rng)));
        problem.rescale(&mut p);
        starts.push(p);
        k += 1;
    }

    let newton = NewtonOptions {
        max_iter: opts.max_iter,
        ..NewtonOptions::default()
    };
    let runs = opts.exec.map_slice(&starts, |p0| {
        damped_newton(|x| problem.derivatives(x), Vec10::from_row_slice(&p0.p), &newton)
    });
    // Lowest objective wins; ties go to the earlier start.
    let best = runs
        .iter()
        .enumerate()
        .filter(|(_, r)| r.objective.is_finite())
        .min_by(|a, b| a.1.objective.total_cmp(&b.1.objective).then(a.0.cmp(&b.0)))
        .map(|(_, r)| r)
        .ok_or_else(|| Error::Numerical("every start diverged".into()))?;

    let p_hat = CholeskyParams::new(std::array::from_fn(|k| best.x[k]));
    let rho_hat = cholesky_to_dm(&p_hat)?;
    let n_th = problem.expected(&p_hat.gram());
    Ok(FitResult {
        rho_hat,
        p_hat,
        objective: problem.objective(&p_hat),
        iterations: best.iterations,
        converged: best.converged,
        residuals: std::array::from_fn(|m| n_th[m] - problem.counts[m]),
    })
}

/// Bootstrap distribution of the concurrence.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BootstrapResult {
    pub point: FitResult,
    pub concurrence_point: f64,
    pub concurrence_mean: f64,
    /// Sample standard deviation; zero when fewer than two resamples
    /// survive.
    pub concurrence_sigma: f64,
    /// Fewer than two usable resamples.
    pub degenerate: bool,
    pub n_resamples: usize,
    /// Indices of resamples excluded because their fit failed or did not
    /// converge.
    pub failed: Vec<usize>,
    pub concurrences: Vec<f64>,
    pub dm_ensemble: Vec<TwoPhotonState>,
}

#[derive(Debug, Clone, Copy)]
pub struct BootstrapOptions {
    pub n_resamples: usize,
    pub seed: u64,
    /// Starts per resample fit (the point estimate is always one of them).
    pub resample_starts: usize,
    pub fit: FitOptions,
}

impl Default for BootstrapOptions {
    fn default() -> Self {
        Self {
            n_resamples: 100,
            seed: 0xb007,
            resample_starts: 4,
            fit: FitOptions::default(),
        }
    }
}

/// Poisson-resampling bootstrap: each resample draws `n'_m ~ Poisson(n_exp,m)`,
/// refits, and records the concurrence.
pub fn bootstrap(
    records: &[CountRecord],
    calib: &CalibrationData,
    n_resamples: usize,
    seed: u64,
) -> Result<BootstrapResult> {
    let data = CountData::from_records(records)?;
    let opts = BootstrapOptions {
        n_resamples,
        seed,
        ..BootstrapOptions::default()
    };
    bootstrap_data(&data, &default_settings(), calib, &opts)
}

pub fn bootstrap_data(
    data: &CountData,
    settings: &[MeasurementSetting; N_OUTCOMES],
    calib: &CalibrationData,
    opts: &BootstrapOptions,
) -> Result<BootstrapResult> {
    if opts.n_resamples == 0 {
        return Err(Error::InvalidInput("bootstrap needs at least one resample".into()));
    }
    let point = mle_fit_data(data, settings, calib, None, &opts.fit)?;
    let inner = FitOptions {
        n_starts: opts.resample_starts,
        exec: Execution::Sequential,
        ..opts.fit
    };
    let outcomes: Vec<Option<TwoPhotonState>> = opts.fit.exec.map(opts.n_resamples, |i| {
        let mut rng = rng_from_seed(derive_seed(opts.seed, &[i as u64]));
        let counts: [f64; N_OUTCOMES] = std::array::from_fn(|m| poisson(data.counts[m], &mut rng) as f64);
        let resample = CountData {
            counts,
            live_times: data.live_times,
        };
        let fit_opts = FitOptions {
            seed: derive_seed(opts.seed, &[i as u64, 1]),
            ..inner
        };
        match mle_fit_data(&resample, settings, calib, Some(&point.p_hat), &fit_opts) {
            Ok(f) if f.converged => Some(f.rho_hat),
            _ => None,
        }
    });

    let mut failed = Vec::new();
    let mut ensemble = Vec::new();
    for (i, o) in outcomes.into_iter().enumerate() {
        match o {
            Some(s) => ensemble.push(s),
            None => failed.push(i),
        }
    }
    if failed.len() * 20 > opts.n_resamples {
        warn!(
            "{} of {} bootstrap resamples failed to fit and were excluded",
            failed.len(),
            opts.n_resamples
        );
    }
    let concurrences: Vec<f64> = ensemble.iter().map(concurrence).collect();
    let n = concurrences.len();
    let mean = if n > 0 {
        concurrences.iter().sum::<f64>() / n as f64
    } else {
        f64::NAN
    };
    let sigma = if n > 1 {
        (concurrences.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    Ok(BootstrapResult {
        concurrence_point: concurrence(&point.rho_hat),
        point,
        concurrence_mean: mean,
        concurrence_sigma: sigma,
        degenerate: n < 2,
        n_resamples: opts.n_resamples,
        failed,
        concurrences,
        dm_ensemble: ensemble,
    })
}
