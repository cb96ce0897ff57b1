//! Damped Newton minimization for small dense problems.

use nalgebra::{SMatrix, SVector};

#[derive(Debug, Clone, Copy)]
pub(crate) struct NewtonOptions {
    pub max_iter: usize,
    /// Stop when `‖∇F‖ · max(‖x‖, 1) < grad_tol · (1 + F)`.
    pub grad_tol: f64,
    /// Stop when an accepted step lowers `F` by less than this.
    pub f_tol: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            max_iter: 500,
            grad_tol: 1e-8,
            f_tol: 1e-12,
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct NewtonOutcome<const N: usize> {
    pub x: SVector<f64, N>,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Value, gradient and Hessian of the objective at a point.
pub(crate) type Derivatives<const N: usize> = (f64, SVector<f64, N>, SMatrix<f64, N, N>);

/// Minimizes `F` with Newton steps regularized as `(H + λD) δ = −g`,
/// `D = diag(|H|)` floored; `λ` follows the gain ratio of each step.
pub(crate) fn damped_newton<const N: usize, F>(model: F, x0: SVector<f64, N>, opts: &NewtonOptions) -> NewtonOutcome<N>
where
    F: Fn(&SVector<f64, N>) -> Derivatives<N>,
{
    let mut x = x0;
    let (mut f, mut g, mut h) = model(&x);
    let mut lambda = 1e-3;
    let mut nu = 2.0;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iter {
        iterations += 1;
        if !f.is_finite() {
            break;
        }
        if g.norm() * x.norm().max(1.0) < opts.grad_tol * (1.0 + f) {
            converged = true;
            break;
        }
        let max_diag = (0..N)
            .map(|i| h[(i, i)].abs())
            .fold(0.0, f64::max)
            .max(f64::MIN_POSITIVE);
        let scale = SVector::<f64, N>::from_fn(|i, _| h[(i, i)].abs().max(1e-10 * max_diag));
        let mut damped = h;
        for i in 0..N {
            damped[(i, i)] += lambda * scale[i];
        }
        let Some(ch) = damped.cholesky() else {
            lambda = (lambda * nu).max(1e-3);
            nu *= 2.0;
            if lambda > 1e16 {
                break;
            }
            continue;
        };
        let step = ch.solve(&(-g));
        let predicted = -(g.dot(&step) + 0.5 * (h * step).dot(&step));
        let x_new = x + step;
        let (f_new, g_new, h_new) = model(&x_new);
        let gain = if predicted > 0.0 { (f - f_new) / predicted } else { -1.0 };
        if f_new.is_finite() && f_new <= f && (gain > 0.0 || f_new < f) {
            let drop = f - f_new;
            x = x_new;
            f = f_new;
            g = g_new;
            h = h_new;
            lambda *= (1.0 - (2.0 * gain.min(1.0) - 1.0).powi(3)).max(1.0 / 3.0);
            lambda = lambda.max(1e-15);
            nu = 2.0;
            if drop < opts.f_tol {
                converged = true;
                break;
            }
        } else {
            lambda *= nu;
            nu *= 2.0;
            if lambda > 1e16 {
                // No descent left at working precision.
                converged = g.norm() * x.norm().max(1.0) < 1e-4 * (1.0 + f);
                break;
            }
        }
    }

    NewtonOutcome {
        x,
        objective: f,
        iterations,
        converged,
    }
}
