//! Two-photon polarization states and their entanglement measures.
//!
//! A [`TwoPhotonState`] is a validated 4×4 density matrix that carries the
//! basis it is written in. Computational order is `HH, HV, VH, VV`; the
//! triplet-singlet order is `HH, ψ⁺, VV, ψ⁻` with `ψ± = (HV ± VH)/√2`.

use nalgebra::{Complex, DMatrix, Matrix2, Matrix4, SymmetricEigen, Vector4};
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_1_SQRT_2;

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;
pub type Mat4 = Matrix4<C64>;

/// Tolerance on Hermiticity and trace for a valid state.
pub const STATE_TOL: f64 = 1e-12;
/// Eigenvalues in `[-EIG_CLIP_TOL, 0)` are treated as rounding noise.
pub const EIG_CLIP_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Basis {
    /// `HH, HV, VH, VV`
    Computational,
    /// `HH, ψ⁺, VV, ψ⁻`
    TripletSinglet,
}

pub(crate) fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub(crate) fn cr(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// Columns are the triplet-singlet basis vectors written in the
/// computational basis, so `ρ_CB = T ρ_TS T†`.
pub fn triplet_singlet_isometry() -> Mat4 {
    let h = cr(FRAC_1_SQRT_2);
    let o = cr(1.0);
    let z = cr(0.0);
    Mat4::new(
        o, z, z, z, //
        z, h, z, h, //
        z, h, z, -h, //
        z, z, o, z,
    )
}

/// Photon-exchange operator in the computational basis.
pub fn swap_operator() -> Mat4 {
    let o = cr(1.0);
    let z = cr(0.0);
    Mat4::new(
        o, z, z, z, //
        z, z, o, z, //
        z, o, z, z, //
        z, z, z, o,
    )
}

/// `σ_y ⊗ σ_y` in the computational basis (real).
fn sigma_yy() -> Mat4 {
    let o = cr(1.0);
    let z = cr(0.0);
    Mat4::new(
        z, z, z, -o, //
        z, z, o, z, //
        z, o, z, z, //
        -o, z, z, z,
    )
}

pub(crate) fn hermitian_eigen(m: &Mat4) -> SymmetricEigen<C64, nalgebra::U4> {
    // Symmetrize first; the solver only reads one triangle.
    SymmetricEigen::new((m + m.adjoint()) * cr(0.5))
}

/// Principal square root of a PSD matrix, clipping small negative
/// eigenvalues to zero.
pub(crate) fn sqrt_psd(m: &Mat4) -> Mat4 {
    let eig = hermitian_eigen(m);
    let d = eig.eigenvalues.map(|l| cr(l.max(0.0).sqrt()));
    let v = &eig.eigenvectors;
    v * Mat4::from_diagonal(&d) * v.adjoint()
}

fn max_abs(m: &Mat4) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// A 4×4 two-photon polarization density matrix with its basis tag.
///
/// Construction validates Hermiticity and unit trace to [`STATE_TOL`] and
/// positivity down to `-EIG_CLIP_TOL`. Values are immutable afterwards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "StateJson", into = "StateJson")]
pub struct TwoPhotonState {
    matrix: Mat4,
    basis: Basis,
}

impl TwoPhotonState {
    pub fn new(matrix: Mat4, basis: Basis) -> Result<Self> {
        let herm = max_abs(&(matrix - matrix.adjoint()));
        if !herm.is_finite() || herm > STATE_TOL {
            return Err(Error::InvalidState(format!("not Hermitian (max |ρ - ρ†| = {herm:e})")));
        }
        let tr = matrix.trace();
        if (tr.re - 1.0).abs() > STATE_TOL || tr.im.abs() > STATE_TOL {
            return Err(Error::InvalidState(format!("trace {tr} differs from 1")));
        }
        let min_eig = hermitian_eigen(&matrix).eigenvalues.min();
        if min_eig < -EIG_CLIP_TOL {
            return Err(Error::InvalidState(format!(
                "not positive semidefinite (min eigenvalue {min_eig:e})"
            )));
        }
        Ok(Self { matrix, basis })
    }

    /// Hermitizes and trace-normalizes `matrix`, then validates.
    pub fn from_unnormalized(matrix: Mat4, basis: Basis) -> Result<Self> {
        let h = (matrix + matrix.adjoint()) * cr(0.5);
        let tr = h.trace().re;
        if !(tr.is_finite() && tr > 0.0) {
            return Err(Error::InvalidState(format!("non-positive trace {tr}")));
        }
        Self::new(h / cr(tr), basis)
    }

    /// Builds a state from a dynamically sized matrix, rejecting anything
    /// that is not 4×4.
    pub fn from_dmatrix(m: &DMatrix<C64>, basis: Basis) -> Result<Self> {
        if m.nrows() != 4 || m.ncols() != 4 {
            return Err(Error::InvalidInput(format!(
                "expected a 4x4 matrix, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        Self::new(Mat4::from_fn(|i, j| m[(i, j)]), basis)
    }

    /// `|ψ⟩⟨ψ|` for a (not necessarily normalized) vector.
    pub fn pure(psi: Vector4<C64>, basis: Basis) -> Result<Self> {
        let n = psi.norm();
        if n == 0.0 || !n.is_finite() {
            return Err(Error::InvalidInput("zero state vector".into()));
        }
        let psi = psi / cr(n);
        Self::from_unnormalized(psi * psi.adjoint(), basis)
    }

    pub fn maximally_mixed() -> Self {
        Self {
            matrix: Mat4::identity() * cr(0.25),
            basis: Basis::Computational,
        }
    }

    pub fn matrix(&self) -> &Mat4 {
        &self.matrix
    }

    pub fn basis(&self) -> Basis {
        self.basis
    }

    pub fn element(&self, row: usize, col: usize) -> C64 {
        self.matrix[(row, col)]
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> [f64; 4] {
        let mut e: Vec<f64> = hermitian_eigen(&self.matrix).eigenvalues.iter().copied().collect();
        e.sort_by(|a, b| a.total_cmp(b));
        [e[0], e[1], e[2], e[3]]
    }

    /// The same state written in `target`.
    pub fn to_basis(&self, target: Basis) -> Self {
        if self.basis == target {
            return self.clone();
        }
        let t = triplet_singlet_isometry();
        let m = match target {
            Basis::Computational => t * self.matrix * t.adjoint(),
            Basis::TripletSinglet => t.adjoint() * self.matrix * t,
        };
        // Unitary conjugation preserves the invariants up to rounding.
        Self {
            matrix: (m + m.adjoint()) * cr(0.5),
            basis: target,
        }
    }

    fn computational(&self) -> Mat4 {
        self.to_basis(Basis::Computational).matrix
    }
}

/// Unitary change of basis. Converting twice returns the original matrix.
pub fn basis_convert(state: &TwoPhotonState, target: Basis) -> TwoPhotonState {
    state.to_basis(target)
}

/// Wootters concurrence.
///
/// The `λᵢ` are obtained as singular values of `√ρ · √ρ̃`, which are the
/// square roots of the eigenvalues of `ρρ̃` without taking a square root of
/// rounding noise.
pub fn concurrence(state: &TwoPhotonState) -> f64 {
    let rho = state.computational();
    let yy = sigma_yy();
    let s = sqrt_psd(&rho);
    let s_tilde = yy * s.map(|z| z.conj()) * yy;
    let mut sv: Vec<f64> = (s * s_tilde).singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    (sv[0] - sv[1] - sv[2] - sv[3]).clamp(0.0, 1.0)
}

/// Partial transpose over the second photon (computational basis).
pub fn partial_transpose(state: &TwoPhotonState) -> Mat4 {
    let rho = state.computational();
    Mat4::from_fn(|r, col| {
        let (a, b) = (r / 2, r % 2);
        let (c_, d) = (col / 2, col % 2);
        rho[(2 * a + d, 2 * c_ + b)]
    })
}

/// Sum of the magnitudes of the negative eigenvalues of the partial
/// transpose. Positive iff the state is NPT (and, for two qubits, entangled).
pub fn negativity(state: &TwoPhotonState) -> f64 {
    hermitian_eigen(&partial_transpose(state))
        .eigenvalues
        .iter()
        .filter(|&&l| l < 0.0)
        .map(|l| -l)
        .sum()
}

/// Overlap with `cos θ |HH⟩ + e^{iφ} sin θ |VV⟩`.
pub fn noon_fidelity(state: &TwoPhotonState, theta: f64, phi: f64) -> f64 {
    let rho = state.computational();
    let psi = Vector4::new(cr(theta.cos()), cr(0.0), cr(0.0), C64::from_polar(theta.sin(), phi));
    (psi.adjoint() * rho * psi)[(0, 0)].re.clamp(0.0, 1.0)
}

/// Best NooN-type overlap and the angles that achieve it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoonOverlap {
    pub fidelity: f64,
    pub theta: f64,
    pub phi: f64,
}

/// Maximizes [`noon_fidelity`] over `θ, φ` via the closed-form eigenproblem
/// of the `{HH, VV}` block.
pub fn max_noon_fidelity(state: &TwoPhotonState) -> NoonOverlap {
    let rho = state.computational();
    let block = Matrix2::new(rho[(0, 0)], rho[(0, 3)], rho[(3, 0)], rho[(3, 3)]);
    let (a, d) = (block[(0, 0)].re, block[(1, 1)].re);
    let b = block[(1, 0)];
    let half = 0.5 * (a - d);
    let fidelity = (0.5 * (a + d) + (half * half + b.norm_sqr()).sqrt()).clamp(0.0, 1.0);
    let theta = 0.5 * (2.0 * b.norm()).atan2(a - d);
    let phi = if b.norm() > 0.0 { b.arg() } else { 0.0 };
    NoonOverlap { fidelity, theta, phi }
}

/// `(SρS + ρ)/2` with `S` the photon swap, returned in the input basis.
pub fn permutation_symmetrize(state: &TwoPhotonState) -> TwoPhotonState {
    let rho = state.computational();
    let s = swap_operator();
    let sym = (s * rho * s + rho) * cr(0.5);
    TwoPhotonState {
        matrix: sym,
        basis: Basis::Computational,
    }
    .to_basis(state.basis)
}

/// Frobenius norm of `SρS − ρ`; zero for permutation-invariant states.
pub fn pi_distance(state: &TwoPhotonState) -> f64 {
    let rho = state.computational();
    let s = swap_operator();
    (s * rho * s - rho).norm()
}

/// Uhlmann fidelity `(Tr √(√ρ σ √ρ))²`, computed as the squared nuclear
/// norm of `√ρ √σ`.
pub fn fidelity(a: &TwoPhotonState, b: &TwoPhotonState) -> f64 {
    let sa = sqrt_psd(&a.computational());
    let sb = sqrt_psd(&b.computational());
    let nuc: f64 = (sa * sb).singular_values().iter().sum();
    (nuc * nuc).clamp(0.0, 1.0)
}

/// `½ ‖ρ − σ‖₁`.
pub fn trace_distance(a: &TwoPhotonState, b: &TwoPhotonState) -> f64 {
    let d = a.computational() - b.computational();
    0.5 * hermitian_eigen(&d).eigenvalues.iter().map(|l| l.abs()).sum::<f64>()
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StateJson {
    basis: Basis,
    re: [[f64; 4]; 4],
    im: [[f64; 4]; 4],
}

impl TryFrom<StateJson> for TwoPhotonState {
    type Error = Error;

    fn try_from(j: StateJson) -> Result<Self> {
        let m = Mat4::from_fn(|r, col| c(j.re[r][col], j.im[r][col]));
        TwoPhotonState::new(m, j.basis)
    }
}

impl From<TwoPhotonState> for StateJson {
    fn from(s: TwoPhotonState) -> Self {
        let mut re = [[0.0; 4]; 4];
        let mut im = [[0.0; 4]; 4];
        for r in 0..4 {
            for col in 0..4 {
                re[r][col] = s.matrix[(r, col)].re;
                im[r][col] = s.matrix[(r, col)].im;
            }
        }
        StateJson { basis: s.basis, re, im }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ket(v: [f64; 4]) -> Vector4<C64> {
        Vector4::new(cr(v[0]), cr(v[1]), cr(v[2]), cr(v[3]))
    }

    fn bell_phi_plus() -> TwoPhotonState {
        TwoPhotonState::pure(ket([1.0, 0.0, 0.0, 1.0]), Basis::Computational).unwrap()
    }

    fn psi_plus() -> TwoPhotonState {
        TwoPhotonState::pure(ket([0.0, 1.0, 1.0, 0.0]), Basis::Computational).unwrap()
    }

    #[test]
    fn bell_state_measures() {
        let b = bell_phi_plus();
        assert!((concurrence(&b) - 1.0).abs() < 1e-7);
        assert!((negativity(&b) - 0.5).abs() < 1e-12);
        let mm = TwoPhotonState::maximally_mixed();
        assert!(concurrence(&mm).abs() < 1e-12);
        assert!(negativity(&mm).abs() < 1e-12);
    }

    #[test]
    fn product_state_is_ppt() {
        let hv = TwoPhotonState::pure(ket([0.0, 1.0, 0.0, 0.0]), Basis::Computational).unwrap();
        assert!(negativity(&hv).abs() < 1e-14);
        assert!(concurrence(&hv) < 1e-7);
    }

    #[test]
    fn psi_plus_is_a_triplet_basis_vector() {
        let ts = psi_plus().to_basis(Basis::TripletSinglet);
        for r in 0..4 {
            for col in 0..4 {
                let expect = if r == 1 && col == 1 { 1.0 } else { 0.0 };
                assert!((ts.element(r, col) - cr(expect)).norm() < 1e-15);
            }
        }
        let hh = TwoPhotonState::pure(ket([1.0, 0.0, 0.0, 0.0]), Basis::Computational).unwrap();
        assert!((hh.to_basis(Basis::TripletSinglet).element(0, 0).re - 1.0).abs() < 1e-15);
    }

    #[test]
    fn basis_round_trip() {
        let s = permutation_symmetrize(&bell_phi_plus());
        let back = s.to_basis(Basis::TripletSinglet).to_basis(Basis::Computational);
        assert!((back.matrix() - s.matrix()).norm() < 1e-14);
    }

    #[test]
    fn noon_overlaps() {
        let b = bell_phi_plus();
        assert!((noon_fidelity(&b, std::f64::consts::FRAC_PI_4, 0.0) - 1.0).abs() < 1e-14);
        let best = max_noon_fidelity(&b);
        assert!((best.fidelity - 1.0).abs() < 1e-14);
        assert!((best.theta - std::f64::consts::FRAC_PI_4).abs() < 1e-12);
        let p = psi_plus();
        assert_eq!(noon_fidelity(&p, 0.3, 1.1), 0.0);
        assert!(max_noon_fidelity(&p).fidelity.abs() < 1e-15);
    }

    #[test]
    fn max_noon_matches_grid_search() {
        let v = Vector4::new(c(0.6, 0.1), c(0.2, 0.0), c(0.1, -0.3), c(-0.2, 0.5));
        let s = TwoPhotonState::pure(v, Basis::Computational).unwrap();
        let mixed = TwoPhotonState::from_unnormalized(
            s.matrix() * cr(0.7) + Mat4::identity() * cr(0.3 / 4.0),
            Basis::Computational,
        )
        .unwrap();
        let best = max_noon_fidelity(&mixed);
        let mut grid_best: f64 = 0.0;
        for i in 0..=400 {
            for j in 0..400 {
                let th = std::f64::consts::FRAC_PI_2 * i as f64 / 400.0;
                let ph = std::f64::consts::TAU * j as f64 / 400.0;
                grid_best = grid_best.max(noon_fidelity(&mixed, th, ph));
            }
        }
        assert!(best.fidelity >= grid_best - 1e-12);
        assert!(best.fidelity - grid_best < 1e-4);
        assert!((noon_fidelity(&mixed, best.theta, best.phi) - best.fidelity).abs() < 1e-12);
    }

    #[test]
    fn symmetrize_hv() {
        let hv = TwoPhotonState::pure(ket([0.0, 1.0, 0.0, 0.0]), Basis::Computational).unwrap();
        assert!((pi_distance(&hv) - 2f64.sqrt()).abs() < 1e-14);
        let s = permutation_symmetrize(&hv);
        assert!((s.element(1, 1).re - 0.5).abs() < 1e-15);
        assert!((s.element(2, 2).re - 0.5).abs() < 1e-15);
        assert!(s.element(1, 2).norm() < 1e-15);
        assert!(pi_distance(&s) < 1e-14);
    }

    #[test]
    fn validation_rejects_bad_matrices() {
        let mut m = Mat4::identity() * cr(0.25);
        m[(0, 1)] = cr(0.1);
        assert!(matches!(
            TwoPhotonState::new(m, Basis::Computational),
            Err(Error::InvalidState(_))
        ));
        let m = Mat4::identity() * cr(0.3);
        assert!(TwoPhotonState::new(m, Basis::Computational).is_err());
        let m = Mat4::from_diagonal(&Vector4::new(cr(0.6), cr(0.6), cr(-0.1), cr(-0.1)));
        assert!(TwoPhotonState::new(m, Basis::Computational).is_err());
        let d = DMatrix::<C64>::identity(3, 3);
        assert!(matches!(
            TwoPhotonState::from_dmatrix(&d, Basis::Computational),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn tiny_negative_eigenvalues_are_tolerated() {
        let m = Mat4::from_diagonal(&Vector4::new(cr(0.5 + 5e-11), cr(0.5), cr(0.0), cr(-5e-11)));
        let s = TwoPhotonState::new(m, Basis::Computational).unwrap();
        assert!(concurrence(&s) < 1e-6);
    }

    #[test]
    fn json_round_trip_revalidates() {
        let s = permutation_symmetrize(&bell_phi_plus()).to_basis(Basis::TripletSinglet);
        let js = serde_json::to_string(&s).unwrap();
        assert!(js.contains("\"triplet_singlet\""));
        let back: TwoPhotonState = serde_json::from_str(&js).unwrap();
        assert_eq!(back, s);
        let bad = r#"{"basis":"computational","re":[[1,0,0,0],[0,1,0,0],[0,0,0,0],[0,0,0,0]],"im":[[0,0,0,0],[0,0,0,0],[0,0,0,0],[0,0,0,0]]}"#;
        assert!(serde_json::from_str::<TwoPhotonState>(bad).is_err());
    }

    #[test]
    fn fidelity_and_trace_distance() {
        let b = bell_phi_plus();
        let mm = TwoPhotonState::maximally_mixed();
        assert!((fidelity(&b, &b) - 1.0).abs() < 1e-7);
        assert!((fidelity(&b, &mm) - 0.25).abs() < 1e-12);
        assert!(trace_distance(&b, &b) < 1e-14);
        assert!((trace_distance(&b, &mm) - 0.75).abs() < 1e-12);
    }
}
