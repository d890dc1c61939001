//! Dense small-matrix primitives: sign-structure tests, norms, symmetric
//! eigenvalues, the shifted minimum-singular-value sweep and the observer
//! Riccati solve.
//!
//! Everything here works on `nalgebra` dynamic matrices. Inputs are checked
//! for finiteness at the public boundary; the matrices in this domain are at
//! most a few dozen rows, so all routines are dense and direct.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{Error, Result, SynthesisStep};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Default tolerance for Metzler and elementwise sign tests.
pub const SIGN_TOL: f64 = 1e-9;
/// Required spectral-norm residual of the observer Riccati equation.
pub const RICCATI_RESIDUAL_TOL: f64 = 1e-9;
/// Default golden-section bracket width for the frequency sweep.
pub const SWEEP_REFINE_TOL: f64 = 1e-6;
/// Default number of coarse grid points for the frequency sweep.
pub const SWEEP_COARSE_POINTS: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sign {
    NonNeg,
    NonPos,
}

pub fn ensure_finite(m: &Matrix, what: &'static str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

pub fn ensure_square(m: &Matrix, what: &str) -> Result<usize> {
    if m.nrows() == m.ncols() && m.nrows() > 0 {
        Ok(m.nrows())
    } else {
        Err(Error::Dimension(format!(
            "{what} must be square and non-empty, got {}x{}",
            m.nrows(),
            m.ncols()
        )))
    }
}

/// Smallest off-diagonal entry, or `+inf` for 1x1 matrices.
pub fn min_off_diagonal(m: &Matrix) -> f64 {
    let mut worst = f64::INFINITY;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if i != j {
                worst = worst.min(m[(i, j)]);
            }
        }
    }
    worst
}

/// True iff every off-diagonal entry is at least `-tol`.
pub fn is_metzler(m: &Matrix, tol: f64) -> Result<bool> {
    ensure_square(m, "Metzler candidate")?;
    Ok(min_off_diagonal(m) >= -tol)
}

/// Entry that is furthest in the forbidden direction for `sign`:
/// the minimum for `NonNeg`, the maximum for `NonPos`.
pub fn sign_extreme(m: &Matrix, sign: Sign) -> f64 {
    match sign {
        Sign::NonNeg => m.iter().copied().fold(f64::INFINITY, f64::min),
        Sign::NonPos => m.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    }
}

pub fn is_elementwise_sign(m: &Matrix, sign: Sign, tol: f64) -> bool {
    match sign {
        Sign::NonNeg => m.iter().all(|&v| v >= -tol),
        Sign::NonPos => m.iter().all(|&v| v <= tol),
    }
}

/// Largest singular value (the induced 2-norm).
pub fn spectral_norm(m: &Matrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .fold(0.0, f64::max)
}

pub fn symmetrize(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

/// Eigenvalues of `(S + Sᵀ)/2`, sorted descending.
pub fn symmetric_eigenvalues(s: &Matrix) -> Result<Vec<f64>> {
    ensure_square(s, "symmetric matrix")?;
    let mut eig: Vec<f64> = symmetrize(s).symmetric_eigenvalues().iter().copied().collect();
    eig.sort_by(|a, b| b.total_cmp(a));
    Ok(eig)
}

pub fn max_eig_symmetric(s: &Matrix) -> Result<f64> {
    Ok(symmetric_eigenvalues(s)?[0])
}

/// Largest eigenvalue of the symmetrized matrix with a unit eigenvector.
pub fn top_eigenpair(s: &Matrix) -> Result<(f64, Vector)> {
    ensure_square(s, "symmetric matrix")?;
    let eig = symmetrize(s).symmetric_eigen();
    let (idx, val) = eig
        .eigenvalues
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc });
    Ok((val, eig.eigenvectors.column(idx).into_owned()))
}

/// `λ_min((S + Sᵀ)/2) > tol`.
pub fn is_positive_definite(s: &Matrix, tol: f64) -> Result<bool> {
    ensure_finite(s, "positive-definiteness candidate")?;
    let eig = symmetric_eigenvalues(s)?;
    Ok(*eig.last().unwrap() > tol)
}

pub fn eigenvalues(m: &Matrix) -> Result<Vec<Complex<f64>>> {
    ensure_square(m, "eigenvalue input")?;
    ensure_finite(m, "eigenvalue input")?;
    Ok(m.complex_eigenvalues().iter().copied().collect())
}

pub fn modulus(z: &Complex<f64>) -> f64 {
    libm::hypot(z.re, z.im)
}

pub fn spectral_abscissa(m: &Matrix) -> Result<f64> {
    Ok(eigenvalues(m)?
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max))
}

pub fn is_hurwitz(m: &Matrix) -> Result<bool> {
    Ok(spectral_abscissa(m)? < 0.0)
}

/// Numerical rank from singular values, relative tolerance `rtol`.
pub fn rank(m: &Matrix, rtol: f64) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let top = sv.iter().copied().fold(0.0, f64::max);
    if top == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rtol * top).count()
}

/// Moore-Penrose pseudo-inverse.
pub fn pseudo_inverse(m: &Matrix) -> Matrix {
    let eps = 1e-12 * spectral_norm(m).max(1.0);
    m.clone()
        .pseudo_inverse(eps)
        .unwrap_or_else(|_| Matrix::zeros(m.ncols(), m.nrows()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepResult {
    pub min_sigma: f64,
    pub argmin_omega: f64,
    pub grid_points: usize,
    pub refined: bool,
}

/// `σ_min(A_c − jωI)` via a complex SVD.
pub fn sigma_min_shifted(ac: &Matrix, omega: f64) -> f64 {
    let n = ac.nrows();
    let shifted = DMatrix::<Complex<f64>>::from_fn(n, n, |i, j| {
        Complex::new(ac[(i, j)], if i == j { -omega } else { 0.0 })
    });
    shifted
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Upper end of the sweep interval that provably contains the minimizer
/// when comparing against `target`: beyond `‖A_c‖ + target` we have
/// `σ_min(A_c − jωI) ≥ ω − ‖A_c‖ > target`.
pub fn default_omega_max(ac: &Matrix, target: f64) -> f64 {
    spectral_norm(ac) + target + 1.0
}

/// Minimum over `ω ∈ [0, omega_max]` of `σ_min(A_c − jωI)`: a uniform coarse
/// grid followed by golden-section refinement around the best grid point.
pub fn min_singular_sweep(
    ac: &Matrix,
    omega_max: f64,
    coarse_points: usize,
    refine_tol: f64,
) -> Result<SweepResult> {
    ensure_square(ac, "sweep matrix")?;
    ensure_finite(ac, "sweep matrix")?;
    if !(omega_max > 0.0) || !omega_max.is_finite() {
        return Err(Error::Parameter(format!("omega_max must be positive, got {omega_max}")));
    }
    if !(refine_tol > 0.0) {
        return Err(Error::Parameter(format!("refine_tol must be positive, got {refine_tol}")));
    }
    let points = coarse_points.max(2);
    let dw = omega_max / (points - 1) as f64;
    let mut best_k = 0;
    let mut best = f64::INFINITY;
    for k in 0..points {
        let s = sigma_min_shifted(ac, k as f64 * dw);
        if s < best {
            best = s;
            best_k = k;
        }
    }
    let mut result = SweepResult {
        min_sigma: best,
        argmin_omega: best_k as f64 * dw,
        grid_points: points,
        refined: false,
    };

    let mut lo = if best_k == 0 { 0.0 } else { (best_k - 1) as f64 * dw };
    let mut hi = ((best_k + 1) as f64 * dw).min(omega_max);
    let ratio = (libm::sqrt(5.0) - 1.0) / 2.0;
    let mut x1 = hi - ratio * (hi - lo);
    let mut x2 = lo + ratio * (hi - lo);
    let mut f1 = sigma_min_shifted(ac, x1);
    let mut f2 = sigma_min_shifted(ac, x2);
    while hi - lo > refine_tol {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - ratio * (hi - lo);
            f1 = sigma_min_shifted(ac, x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + ratio * (hi - lo);
            f2 = sigma_min_shifted(ac, x2);
        }
        result.refined = true;
    }
    for (w, s) in [(x1, f1), (x2, f2)] {
        if s < result.min_sigma {
            result.min_sigma = s;
            result.argmin_omega = w;
        }
    }
    Ok(result)
}

/// Solves `AᵀX + XA = Q` through the Kronecker-vectorized linear system.
pub fn solve_lyapunov(a: &Matrix, q: &Matrix) -> Result<Matrix> {
    let n = ensure_square(a, "Lyapunov matrix")?;
    if q.shape() != (n, n) {
        return Err(Error::Dimension(format!("Lyapunov right-hand side must be {n}x{n}")));
    }
    let id = Matrix::identity(n, n);
    let at = a.transpose();
    let op = id.kronecker(&at) + at.kronecker(&id);
    let rhs = Vector::from_column_slice(q.as_slice());
    let sol = op
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Degenerate("singular Lyapunov operator".into()))?;
    Ok(Matrix::from_column_slice(n, n, sol.as_slice()))
}

/// Left side of `A_cᵀP + PA_c + κ²PP + (1+δ)I = 0`.
pub fn riccati_residual(ac: &Matrix, p: &Matrix, kappa: f64, delta: f64) -> Matrix {
    let n = ac.nrows();
    ac.transpose() * p + p * ac + p * p * (kappa * kappa) + Matrix::identity(n, n) * (1.0 + delta)
}

fn matrix_sign(h: &Matrix) -> Option<Matrix> {
    let n = h.nrows();
    let mut z = h.clone();
    for _ in 0..100 {
        let lu = z.clone().lu();
        let det = lu.determinant();
        let inv = lu.try_inverse()?;
        let scale = if det.abs() > 0.0 && det.is_finite() {
            libm::pow(det.abs(), -1.0 / n as f64)
        } else {
            1.0
        };
        let next = (&z * scale + inv / scale) * 0.5;
        let change = (&next - &z).norm();
        z = next;
        if !z.iter().all(|v| v.is_finite()) {
            return None;
        }
        if change <= 1e-13 * z.norm() {
            return Some(z);
        }
    }
    None
}

/// Symmetric positive definite `P` solving
/// `(A−EC)ᵀP + P(A−EC) + κ²PP + (1+δ)I = 0`, taken from the stable
/// invariant subspace of the Hamiltonian `[[A−EC, κ²I], [−(1+δ)I, −(A−EC)ᵀ]]`.
pub fn solve_observer_riccati(
    a: &Matrix,
    e: &Matrix,
    c: &Matrix,
    kappa: f64,
    delta: f64,
) -> Result<Matrix> {
    let m = ensure_square(a, "A")?;
    if c.ncols() != m || e.nrows() != m || e.ncols() != c.nrows() {
        return Err(Error::Dimension(format!(
            "observer gain {}x{} and output matrix {}x{} do not fit A {m}x{m}",
            e.nrows(),
            e.ncols(),
            c.nrows(),
            c.ncols()
        )));
    }
    for (mat, what) in [(a, "A"), (e, "E"), (c, "C")] {
        ensure_finite(mat, what)?;
    }
    if !(kappa >= 0.0) || !(delta >= 0.0) {
        return Err(Error::Parameter(format!("kappa and delta must be non-negative, got {kappa}, {delta}")));
    }
    let ac = a - e * c;
    let id = Matrix::identity(m, m);
    let mut ham = Matrix::zeros(2 * m, 2 * m);
    ham.view_mut((0, 0), (m, m)).copy_from(&ac);
    ham.view_mut((0, m), (m, m)).copy_from(&(&id * (kappa * kappa)));
    ham.view_mut((m, 0), (m, m)).copy_from(&(&id * -(1.0 + delta)));
    ham.view_mut((m, m), (m, m)).copy_from(&(-ac.transpose()));

    let rechoose = "no stabilizing solution; re-choose E so that A − EC is stable with a larger frequency margin";
    let axis_tol = 1e-9 * ham.norm().max(1.0);
    if eigenvalues(&ham)?.iter().any(|z| z.re.abs() <= axis_tol) {
        return Err(Error::infeasible(
            SynthesisStep::Riccati,
            format!("Hamiltonian has eigenvalues on the imaginary axis: {rechoose}"),
        ));
    }
    let sign = matrix_sign(&ham)
        .ok_or_else(|| Error::infeasible(SynthesisStep::Riccati, format!("sign iteration failed: {rechoose}")))?;
    let projector = (Matrix::identity(2 * m, 2 * m) - sign) * 0.5;
    let svd = projector.svd(true, false);
    let u = svd.u.unwrap();
    let mut order: Vec<usize> = (0..2 * m).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let basis = Matrix::from_fn(2 * m, m, |r, k| u[(r, order[k])]);
    let u1 = basis.rows(0, m).into_owned();
    let u2 = basis.rows(m, m).into_owned();
    let u1_inv = u1
        .try_inverse()
        .ok_or_else(|| Error::infeasible(SynthesisStep::Riccati, format!("stable subspace is not a graph: {rechoose}")))?;
    let mut p = symmetrize(&(u2 * u1_inv));

    for _ in 0..4 {
        let res = riccati_residual(&ac, &p, kappa, delta);
        if spectral_norm(&res) <= 1e-13 * (1.0 + delta) {
            break;
        }
        let closed = &ac + &p * (kappa * kappa);
        match solve_lyapunov(&closed, &(-res)) {
            Ok(dp) => p = symmetrize(&(p + dp)),
            Err(_) => break,
        }
    }

    let residual = spectral_norm(&riccati_residual(&ac, &p, kappa, delta));
    if !(residual <= RICCATI_RESIDUAL_TOL) || !is_positive_definite(&p, 0.0)? {
        return Err(Error::infeasible(
            SynthesisStep::Riccati,
            format!("Riccati candidate rejected (residual {residual:.3e}): {rechoose}"),
        ));
    }
    Ok(p)
}
