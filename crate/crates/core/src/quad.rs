//! Adaptive Simpson quadrature for smooth vector-valued integrands.

const MAX_DEPTH: u32 = 48;

fn add<const N: usize>(a: &[f64; N], b: &[f64; N]) -> [f64; N] {
    std::array::from_fn(|i| a[i] + b[i])
}

fn max_norm<const N: usize>(a: &[f64; N]) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn simpson<const N: usize>(fa: &[f64; N], fm: &[f64; N], fb: &[f64; N], h: f64) -> [f64; N] {
    std::array::from_fn(|i| h / 6.0 * (fa[i] + 4.0 * fm[i] + fb[i]))
}

struct Ctx<'a, const N: usize> {
    f: &'a dyn Fn(f64) -> [f64; N],
}

impl<const N: usize> Ctx<'_, N> {
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        &self,
        a: f64,
        b: f64,
        fa: &[f64; N],
        fm: &[f64; N],
        fb: &[f64; N],
        whole: &[f64; N],
        tol: &[f64; N],
        depth: u32,
    ) -> [f64; N] {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = (self.f)(lm);
        let frm = (self.f)(rm);
        let left = simpson(fa, &flm, fm, m - a);
        let right = simpson(fm, &frm, fb, b - m);
        let both = add(&left, &right);
        let diff: [f64; N] = std::array::from_fn(|i| both[i] - whole[i]);
        if depth >= MAX_DEPTH || diff.iter().zip(tol).all(|(d, t)| d.abs() <= 15.0 * t) {
            // Richardson correction
            return std::array::from_fn(|i| both[i] + diff[i] / 15.0);
        }
        let half: [f64; N] = std::array::from_fn(|i| 0.5 * tol[i]);
        let l = self.recurse(a, m, fa, &flm, fm, &left, &half, depth + 1);
        let r = self.recurse(m, b, fm, &frm, fb, &right, &half, depth + 1);
        add(&l, &r)
    }
}

/// Integrates `f` over `[a, b]` component-wise. Each component's error
/// target is `rel_tol` times the magnitude of a coarse estimate of that
/// component, floored at `1e-14` of the largest component.
pub fn adaptive_simpson<const N: usize>(f: &dyn Fn(f64) -> [f64; N], a: f64, b: f64, rel_tol: f64) -> [f64; N] {
    if a == b {
        return [0.0; N];
    }
    // Seed the scale from a composite rule so a near-zero first panel does not
    // drive the tolerance to zero.
    let panels = 8;
    let h = (b - a) / panels as f64;
    let mut coarse = [0.0; N];
    let mut pts = Vec::with_capacity(2 * panels + 1);
    for k in 0..=2 * panels {
        pts.push(f(a + 0.5 * h * k as f64));
    }
    for p in 0..panels {
        let s = simpson(&pts[2 * p], &pts[2 * p + 1], &pts[2 * p + 2], h);
        coarse = add(&coarse, &s);
    }
    let floor = 1e-14 * max_norm(&coarse);
    let tol: [f64; N] =
        std::array::from_fn(|i| (rel_tol * coarse[i].abs()).max(floor).max(f64::MIN_POSITIVE) / panels as f64);
    let ctx = Ctx { f };
    let mut total = [0.0; N];
    for p in 0..panels {
        let lo = a + h * p as f64;
        let whole = simpson(&pts[2 * p], &pts[2 * p + 1], &pts[2 * p + 2], h);
        let part = ctx.recurse(
            lo,
            lo + h,
            &pts[2 * p],
            &pts[2 * p + 1],
            &pts[2 * p + 2],
            &whole,
            &tol,
            0,
        );
        total = add(&total, &part);
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponentials_to_tolerance() {
        let f = |x: f64| [(-3.0 * x).exp(), x * x, (2.0 * x).cos()];
        let r = adaptive_simpson(&f, 0.0, 2.0, 1e-10);
        let exact = [(1.0 - (-6.0f64).exp()) / 3.0, 8.0 / 3.0, (4.0f64).sin() / 2.0];
        for i in 0..3 {
            assert!(
                (r[i] - exact[i]).abs() < 1e-9 * exact[i].abs().max(1.0),
                "{i}: {} vs {}",
                r[i],
                exact[i]
            );
        }
    }

    #[test]
    fn empty_interval() {
        let f = |_x: f64| [1.0];
        assert_eq!(adaptive_simpson(&f, 1.0, 1.0, 1e-9), [0.0]);
    }
}
