//! Continuous Lyapunov equation `P A + Aᵀ P = -Q` and the sign condition
//! `bᵀ P A⁻¹ b < 0` used by the optimal-modification term.
//!
//! The solver is Bartels–Stewart on the complex Schur form of `A`: with
//! `A = U T Uᴴ` (`T` upper triangular) the equation becomes
//! `Tᴴ Y + Y T = -Uᴴ Q U`, which is solved entry by entry in forward order.

use nalgebra::{Complex, DMatrix, DVector};
use thiserror::Error;

/// Eigenvalue real parts must be below `-HURWITZ_TOL`.
pub const HURWITZ_TOL: f64 = 1e-10;
/// Relative residual bound `‖PA + AᵀP + Q‖_F ≤ RESIDUAL_TOL ‖Q‖_F`.
pub const RESIDUAL_TOL: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LyapunovError {
    #[error("matrix is not Hurwitz (max eigenvalue real part {max_real})")]
    NotHurwitz { max_real: f64 },
    #[error("Q is not symmetric positive definite (min eigenvalue {min_eig})")]
    NotPositiveDefinite { min_eig: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("Lyapunov solve failed: relative residual {relative_residual:e}")]
    SolveFailed { relative_residual: f64 },
    #[error("A_m is singular")]
    SingularAm,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovCertificate {
    pub p: DMatrix<f64>,
    pub q: DMatrix<f64>,
    /// `‖P A_m + A_mᵀ P + Q‖_F`.
    pub residual: f64,
}

impl LyapunovCertificate {
    pub fn min_eigenvalue(&self) -> f64 {
        min_symmetric_eigenvalue(&self.p)
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.p.clone().symmetric_eigenvalues().max()
    }
}

/// Iteration cap for the QR sweeps; `schur()` alone can spin forever on
/// large defective blocks.
const SCHUR_MAX_ITER: usize = 10_000;
/// Deflation threshold. At exactly `f64::EPSILON` the iteration often fails
/// to converge from n ≈ 12 up; accuracy is checked through the residual.
const SCHUR_EPS: f64 = 8.0 * f64::EPSILON;
/// Largest size for the dense `n² × n²` fallback solve.
const KRONECKER_MAX_DIM: usize = 32;

/// Diagonal shifts tried in turn when the QR iteration stalls. Schur vectors
/// do not change under `A + sI`, only the diagonal of `T` moves by `s`.
const SCHUR_SHIFTS: [f64; 4] = [0.0, 0.731, -1.379, 2.113];

/// Largest real part among the eigenvalues of `a`. NaN if the eigenvalue
/// iteration does not converge.
pub fn spectral_abscissa(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    for s in SCHUR_SHIFTS {
        let shifted = a + DMatrix::identity(n, n) * s;
        if let Some(schur) = shifted.try_schur(SCHUR_EPS, SCHUR_MAX_ITER) {
            return schur.complex_eigenvalues().iter().map(|z| z.re - s).fold(f64::NEG_INFINITY, f64::max);
        }
    }
    f64::NAN
}

pub fn is_hurwitz(a: &DMatrix<f64>) -> bool {
    a.is_square() && spectral_abscissa(a) < -HURWITZ_TOL
}

fn min_symmetric_eigenvalue(m: &DMatrix<f64>) -> f64 {
    m.clone().symmetric_eigenvalues().min()
}

/// Checks symmetry (to round-off) and strict positive definiteness.
pub fn check_positive_definite(q: &DMatrix<f64>) -> Result<(), LyapunovError> {
    if !q.is_square() {
        return Err(LyapunovError::DimensionMismatch { expected: q.nrows(), got: q.ncols() });
    }
    let asym = (q - q.transpose()).norm();
    let min_eig = min_symmetric_eigenvalue(q);
    if asym > 1e-12 * q.norm().max(1.0) || !(min_eig > 0.0) {
        return Err(LyapunovError::NotPositiveDefinite { min_eig });
    }
    Ok(())
}

pub fn lyapunov_residual(a: &DMatrix<f64>, p: &DMatrix<f64>, q: &DMatrix<f64>) -> f64 {
    (p * a + a.transpose() * p + q).norm()
}

pub fn solve_lyapunov(a_m: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<LyapunovCertificate, LyapunovError> {
    let n = a_m.nrows();
    if a_m.ncols() != n {
        return Err(LyapunovError::DimensionMismatch { expected: n, got: a_m.ncols() });
    }
    if q.nrows() != n || q.ncols() != n {
        return Err(LyapunovError::DimensionMismatch { expected: n, got: q.nrows() });
    }
    let max_real = spectral_abscissa(a_m);
    if !(max_real < -HURWITZ_TOL) {
        return Err(LyapunovError::NotHurwitz { max_real });
    }
    check_positive_definite(q)?;

    let p = match schur_solve(a_m, q) {
        Some(p) => p,
        None if n <= KRONECKER_MAX_DIM => {
            kronecker_solve(a_m, q).ok_or(LyapunovError::SolveFailed { relative_residual: f64::NAN })?
        }
        None => return Err(LyapunovError::SolveFailed { relative_residual: f64::NAN }),
    };
    let p = (&p + p.transpose()) * 0.5;

    let residual = lyapunov_residual(a_m, &p, q);
    let relative_residual = residual / q.norm();
    if !(relative_residual <= RESIDUAL_TOL) {
        return Err(LyapunovError::SolveFailed { relative_residual });
    }
    if !(min_symmetric_eigenvalue(&p) > 0.0) {
        return Err(LyapunovError::SolveFailed { relative_residual });
    }
    Ok(LyapunovCertificate { p, q: q.clone(), residual })
}

/// Bartels–Stewart on the complex Schur form. None if the Schur iteration
/// does not converge.
fn schur_solve(a_m: &DMatrix<f64>, q: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = a_m.nrows();
    let ac: DMatrix<Complex<f64>> = a_m.map(|v| Complex::new(v, 0.0));
    let qc: DMatrix<Complex<f64>> = q.map(|v| Complex::new(v, 0.0));
    let eye = DMatrix::<Complex<f64>>::identity(n, n);
    let (u, t) = SCHUR_SHIFTS
        .iter()
        .find_map(|&s| (&ac + &eye * Complex::new(s, 0.0)).try_schur(SCHUR_EPS, SCHUR_MAX_ITER).map(|f| (s, f)))
        .map(|(s, f)| {
            let (u, t) = f.unpack();
            (u, t - &eye * Complex::new(s, 0.0))
        })?;
    let c = u.adjoint() * qc * &u;

    // Tᴴ Y + Y T = -C, entry (k, l):
    //   (conj(t_kk) + t_ll) y_kl = -c_kl - Σ_{m<k} conj(t_mk) y_ml - Σ_{m<l} y_km t_ml
    let mut y = DMatrix::<Complex<f64>>::zeros(n, n);
    for l in 0..n {
        for k in 0..n {
            let mut rhs = -c[(k, l)];
            for m in 0..k {
                rhs -= t[(m, k)].conj() * y[(m, l)];
            }
            for m in 0..l {
                rhs -= y[(k, m)] * t[(m, l)];
            }
            let denom = t[(k, k)].conj() + t[(l, l)];
            y[(k, l)] = rhs / denom;
        }
    }
    let pc = &u * y * u.adjoint();
    Some(pc.map(|z| z.re))
}

/// `(I ⊗ Aᵀ + Aᵀ ⊗ I) vec(P) = −vec(Q)`, dense.
fn kronecker_solve(a_m: &DMatrix<f64>, q: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = a_m.nrows();
    let at = a_m.transpose();
    let eye = DMatrix::<f64>::identity(n, n);
    let m = eye.kronecker(&at) + at.kronecker(&eye);
    let vec_p = m.lu().solve(&-DVector::from_column_slice(q.as_slice()))?;
    Some(DMatrix::from_column_slice(n, n, vec_p.as_slice()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignCondition {
    /// `bᵀ P A_m⁻¹ b`.
    pub value: f64,
    pub holds: bool,
}

pub fn check_sign_condition(
    b: &DVector<f64>,
    cert: &LyapunovCertificate,
    a_m: &DMatrix<f64>,
) -> Result<SignCondition, LyapunovError> {
    let n = a_m.nrows();
    if b.len() != n || cert.p.nrows() != n {
        return Err(LyapunovError::DimensionMismatch { expected: n, got: b.len() });
    }
    let y = a_m.clone().lu().solve(b).ok_or(LyapunovError::SingularAm)?;
    let value = b.dot(&(&cert.p * y));
    Ok(SignCondition { value, holds: value < 0.0 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_case() {
        let a = DMatrix::from_element(1, 1, -1.0);
        let q = DMatrix::from_element(1, 1, 2.0);
        let cert = solve_lyapunov(&a, &q).unwrap();
        assert!((cert.p[(0, 0)] - 1.0).abs() < 1e-15);
        let s = check_sign_condition(&DVector::from_element(1, 1.0), &cert, &a).unwrap();
        assert!((s.value + 1.0).abs() < 1e-15);
        assert!(s.holds);
        let s = check_sign_condition(&DVector::from_element(1, 0.0), &cert, &a).unwrap();
        assert_eq!(s.value, 0.0);
        assert!(!s.holds);
    }

    #[test]
    fn defective_matrix_terminates() {
        // Rank-deficient pattern shifted to a single eigenvalue -1 with a
        // large Jordan block. Complex Schur stalls on this one.
        let n = 12;
        let m = DMatrix::from_fn(n, n, |i, j| ((i * 7 + j * 3) % 5) as f64 * 0.3 - 0.6);
        let a = &m - DMatrix::identity(n, n) * (spectral_abscissa(&m) + 1.0);
        let q = DMatrix::identity(n, n);
        let cert = solve_lyapunov(&a, &q).unwrap();
        assert!(lyapunov_residual(&a, &cert.p, &q) <= RESIDUAL_TOL * q.norm());
        let oracle = kronecker_solve(&a, &q).unwrap();
        assert!((&cert.p - &oracle).norm() <= 1e-8 * oracle.norm());
    }

    #[test]
    fn complex_eigenvalues_handled() {
        // Eigenvalues -1 ± 2i.
        let a = DMatrix::from_row_slice(2, 2, &[-1.0, 2.0, -2.0, -1.0]);
        let q = DMatrix::identity(2, 2);
        let cert = solve_lyapunov(&a, &q).unwrap();
        assert!(cert.residual < 1e-12);
        assert!(cert.min_eigenvalue() > 0.0);
        assert_eq!(cert.p, cert.p.transpose());
    }

    #[test]
    fn rejects_bad_inputs() {
        let unstable = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        assert!(matches!(solve_lyapunov(&unstable, &DMatrix::identity(2, 2)), Err(LyapunovError::NotHurwitz { .. })));
        let a = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0, -6.0, -11.0, -6.0]);
        let q = DMatrix::from_diagonal(&DVector::from_column_slice(&[10.0, 1.0, -1.0]));
        assert!(matches!(solve_lyapunov(&a, &q), Err(LyapunovError::NotPositiveDefinite { .. })));
        let mut q = DMatrix::identity(3, 3);
        q[(0, 1)] = 0.5;
        assert!(matches!(solve_lyapunov(&a, &q), Err(LyapunovError::NotPositiveDefinite { .. })));
        assert!(matches!(solve_lyapunov(&a, &DMatrix::identity(2, 2)), Err(LyapunovError::DimensionMismatch { .. })));
    }

    #[test]
    fn singular_am_in_sign_check() {
        let cert = LyapunovCertificate { p: DMatrix::identity(2, 2), q: DMatrix::identity(2, 2), residual: 0.0 };
        let a = DMatrix::zeros(2, 2);
        assert_eq!(
            check_sign_condition(&DVector::from_element(2, 1.0), &cert, &a).unwrap_err(),
            LyapunovError::SingularAm
        );
    }
}
