//! Lyapunov solver against a dense Kronecker-vectorization oracle.

use adasync::lyapunov::{self, solve_lyapunov, RESIDUAL_TOL};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

/// Solves `(I ⊗ Aᵀ + Aᵀ ⊗ I) vec(P) = −vec(Q)` directly.
fn kronecker_oracle(a: &DMatrix<f64>, q: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let at = a.transpose();
    let eye = DMatrix::<f64>::identity(n, n);
    let m = eye.kronecker(&at) + at.kronecker(&eye);
    let rhs = -DVector::from_column_slice(q.as_slice());
    let vec_p = m.lu().solve(&rhs).expect("Kronecker system is nonsingular for Hurwitz A");
    DMatrix::from_column_slice(n, n, vec_p.as_slice())
}

/// Random matrix shifted so its spectral abscissa is at most `-margin`.
fn hurwitz_strategy() -> impl Strategy<Value = (DMatrix<f64>, DMatrix<f64>)> {
    (1usize..=6).prop_flat_map(|n| {
        (prop::collection::vec(-2.0f64..2.0, n * n), prop::collection::vec(-1.0f64..1.0, n * n), 0.1f64..2.0).prop_map(
            move |(a, l, margin)| {
                let m = DMatrix::from_row_slice(n, n, &a);
                let shift = lyapunov::spectral_abscissa(&m) + margin;
                let a = m - DMatrix::identity(n, n) * shift;
                // Q = L Lᵀ + 0.1 I is symmetric positive definite.
                let l = DMatrix::from_row_slice(n, n, &l);
                let q = &l * l.transpose() + DMatrix::identity(n, n) * 0.1;
                (a, q)
            },
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn solver_matches_kronecker((a, q) in hurwitz_strategy()) {
        let cert = solve_lyapunov(&a, &q).unwrap();
        let residual = (&cert.p * &a + a.transpose() * &cert.p + &q).norm();
        prop_assert!(residual <= RESIDUAL_TOL * q.norm(), "residual {residual:e}");
        prop_assert!(cert.min_eigenvalue() > 0.0);
        prop_assert_eq!(&cert.p, &cert.p.transpose());
        let oracle = kronecker_oracle(&a, &q);
        let rel = (&cert.p - &oracle).norm() / oracle.norm();
        prop_assert!(rel <= 1e-8, "relative error {rel:e}");
    }

    #[test]
    fn sign_condition_always_negative((a, q) in hurwitz_strategy(), seed in prop::collection::vec(-1.0f64..1.0, 6)) {
        let n = a.nrows();
        let b = DVector::from_iterator(n, seed.iter().copied().take(n));
        prop_assume!(b.norm() > 1e-3);
        let cert = solve_lyapunov(&a, &q).unwrap();
        let s = lyapunov::check_sign_condition(&b, &cert, &a).unwrap();
        prop_assert!(s.holds && s.value < 0.0);
        // bᵀPA⁻¹b = −½ yᵀQy with y = A⁻¹b.
        let y = a.clone().lu().solve(&b).unwrap();
        let expected = -0.5 * y.dot(&(&q * &y));
        prop_assert!((s.value - expected).abs() <= 1e-8 * expected.abs().max(1.0));
    }
}

#[test]
fn non_hurwitz_rejected() {
    let a = DMatrix::from_row_slice(2, 2, &[0.5, 1.0, 0.0, -1.0]);
    assert!(solve_lyapunov(&a, &DMatrix::identity(2, 2)).is_err());
}

#[test]
fn indefinite_q_rejected() {
    let a = DMatrix::from_diagonal(&DVector::from_column_slice(&[-1.0, -2.0]));
    let q = DMatrix::from_diagonal(&DVector::from_column_slice(&[1.0, -1.0]));
    assert!(solve_lyapunov(&a, &q).is_err());
}
