//! Complex dense linear algebra shared by the estimator stages.
//!
//! Everything here operates on `DMatrix<Complex64>` / `DVector<Complex64>`.
//! The least-squares entry points solve through a Cholesky factorization of
//! the Hermitian Gram matrix and fall back to an eigenvalue-based
//! minimum-norm pseudoinverse when the Gram is rank deficient.

use crate::error::{Error, Result};
use crate::{CMat, CVec, Cplx};
use nalgebra::linalg::{Cholesky, SymmetricEigen};

/// Relative ridge applied when an unregularized Gram fails to factor:
/// `RIDGE_FALLBACK_SCALE * trace(G) / dim`.
pub const RIDGE_FALLBACK_SCALE: f64 = 1e-8;

/// Column-wise Khatri-Rao product.
///
/// For `a` (m x k) and `b` (n x k), column j of the result is the Kronecker
/// product of column j of `a` with column j of `b`, giving an (m*n) x k
/// matrix.
pub fn khatri_rao(a: &CMat, b: &CMat) -> CMat {
    assert_eq!(
        a.ncols(),
        b.ncols(),
        "khatri_rao: column counts differ ({} vs {})",
        a.ncols(),
        b.ncols()
    );
    let (m, n, k) = (a.nrows(), b.nrows(), a.ncols());
    let mut out = CMat::zeros(m * n, k);
    for j in 0..k {
        for i in 0..m {
            let aij = a[(i, j)];
            for l in 0..n {
                out[(i * n + l, j)] = aij * b[(l, j)];
            }
        }
    }
    out
}

/// Column-stacking vectorization. nalgebra stores matrices column-major, so
/// this is a plain copy.
pub fn vectorize(m: &CMat) -> CVec {
    CVec::from_column_slice(m.as_slice())
}

/// Frobenius norm.
pub fn frob(m: &CMat) -> f64 {
    m.norm()
}

/// Relative Frobenius error `|a - b| / |b|`; infinite when `b` is zero and
/// `a` is not.
pub fn rel_err(a: &CMat, b: &CMat) -> f64 {
    let denom = frob(b);
    let num = frob(&(a - b));
    if denom == 0.0 {
        if num == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        num / denom
    }
}

fn hermitian_cholesky_solve(gram: &CMat, rhs: &CMat) -> Option<CMat> {
    Cholesky::new(gram.clone()).map(|chol| chol.solve(rhs))
}

/// Minimum-norm solve of `G x = rhs` for Hermitian PSD `G` through its
/// eigendecomposition; eigenvalues below `dim * eps * lambda_max` are
/// treated as zero.
fn hermitian_pinv_solve(gram: &CMat, rhs: &CMat) -> CMat {
    let n = gram.nrows();
    let eig = SymmetricEigen::new(gram.clone());
    let lambda_max = eig.eigenvalues.iter().cloned().fold(0.0_f64, f64::max);
    let tol = lambda_max * n as f64 * f64::EPSILON;
    let mut scaled = eig.eigenvectors.adjoint() * rhs;
    for (i, lambda) in eig.eigenvalues.iter().enumerate() {
        let inv = if *lambda > tol { 1.0 / lambda } else { 0.0 };
        scaled.row_mut(i).scale_mut(inv);
    }
    &eig.eigenvectors * scaled
}

/// Solves `G x = rhs` for a Hermitian PSD Gram matrix, preferring Cholesky
/// and degrading to the pseudoinverse path. Returns `(solution, used_fallback)`.
fn gram_solve(gram: &CMat, rhs: &CMat) -> (CMat, bool) {
    if let Some(x) = hermitian_cholesky_solve(gram, rhs) {
        return (x, false);
    }
    (hermitian_pinv_solve(gram, rhs), true)
}

/// Right-sided regularized least squares: minimizes `|b - x a|_F` over `x`,
/// returning `b a^H (a a^H + ridge I)^{-1}`.
///
/// With `ridge = 0` this is the minimum-norm solution `b a^+`: an invertible
/// Gram goes through Cholesky, a singular one through a rank-revealing
/// eigendecomposition.
pub fn ridge_pinv_solve(a: &CMat, b: &CMat, ridge: f64) -> Result<CMat> {
    if a.ncols() != b.ncols() {
        return Err(Error::invalid(format!(
            "ridge_pinv_solve: a is {}x{} but b is {}x{}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    if !ridge.is_finite() || ridge < 0.0 {
        return Err(Error::invalid("ridge_pinv_solve: ridge must be >= 0"));
    }
    let mut gram = a * a.adjoint();
    if ridge > 0.0 {
        for i in 0..gram.nrows() {
            gram[(i, i)] += Cplx::new(ridge, 0.0);
        }
    }
    // Solve G x^H = a b^H, then transpose back; G is Hermitian.
    let rhs = a * b.adjoint();
    let (xh, _) = gram_solve(&gram, &rhs);
    Ok(xh.adjoint())
}

/// Right-multiplies a pre-accumulated Hermitian PSD Gram: returns
/// `num G^+` (Cholesky first, eigendecomposition fallback) together with a
/// flag marking the fallback path.
pub fn gram_right_solve(gram: &CMat, num: &CMat) -> (CMat, bool) {
    let (xh, fallback) = gram_solve(gram, &num.adjoint());
    (xh.adjoint(), fallback)
}

/// Truncated variant of [`gram_right_solve`]: eigenvalues below
/// `rel_cutoff * lambda_max` are treated as zero, which suppresses the
/// weakly observed directions instead of amplifying whatever inconsistency
/// they carry. `rel_cutoff = 0` reproduces the exact pseudoinverse path.
pub fn gram_right_solve_trunc(gram: &CMat, num: &CMat, rel_cutoff: f64) -> (CMat, bool) {
    if rel_cutoff <= 0.0 {
        return gram_right_solve(gram, num);
    }
    let n = gram.nrows();
    let eig = SymmetricEigen::new(gram.clone());
    let lambda_max = eig.eigenvalues.iter().cloned().fold(0.0_f64, f64::max);
    let tol = lambda_max * rel_cutoff.max(n as f64 * f64::EPSILON);
    let mut truncated = 0usize;
    let mut scaled = eig.eigenvectors.adjoint() * num.adjoint();
    for (i, lambda) in eig.eigenvalues.iter().enumerate() {
        let inv = if *lambda > tol {
            1.0 / lambda
        } else {
            truncated += 1;
            0.0
        };
        scaled.row_mut(i).scale_mut(inv);
    }
    ((&eig.eigenvectors * scaled).adjoint(), truncated > 0)
}

/// Left-sided least squares: minimizes `|b - a x|_F` over `x`, i.e.
/// `(a^H a + ridge I)^{-1} a^H b`, with the same fallback ladder as
/// [`ridge_pinv_solve`]. Returns `(solution, used_ridge_or_pinv_fallback)`.
pub fn ls_solve(a: &CMat, b: &CMat, ridge: f64) -> (CMat, bool) {
    let mut gram = a.ad_mul(a);
    if ridge > 0.0 {
        for i in 0..gram.nrows() {
            gram[(i, i)] += Cplx::new(ridge, 0.0);
        }
    }
    let rhs = a.ad_mul(b);
    if ridge == 0.0 {
        if let Some(x) = hermitian_cholesky_solve(&gram, &rhs) {
            return (x, false);
        }
        // Retry with a trace-scaled ridge before the pseudoinverse path.
        let auto = RIDGE_FALLBACK_SCALE * gram.trace().re / gram.nrows().max(1) as f64;
        if auto > 0.0 {
            let mut ridged = gram.clone();
            for i in 0..ridged.nrows() {
                ridged[(i, i)] += Cplx::new(auto, 0.0);
            }
            if let Some(x) = hermitian_cholesky_solve(&ridged, &rhs) {
                return (x, true);
            }
        }
        return (hermitian_pinv_solve(&gram, &rhs), true);
    }
    let (x, _) = gram_solve(&gram, &rhs);
    (x, true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;

    fn randn_mat(rows: usize, cols: usize, seed: u64) -> CMat {
        let mut rng = crate::rng::stream(seed, &[rows as u64, cols as u64]);
        CMat::from_fn(rows, cols, |_, _| {
            Cplx::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
        })
    }

    #[test]
    fn khatri_rao_matches_hand_computed_columns() {
        let a = CMat::from_row_slice(
            2,
            2,
            &[
                Cplx::new(1.0, 0.0),
                Cplx::new(2.0, 0.0),
                Cplx::new(3.0, 0.0),
                Cplx::new(4.0, 0.0),
            ],
        );
        let b = CMat::from_row_slice(
            2,
            2,
            &[
                Cplx::new(5.0, 0.0),
                Cplx::new(6.0, 0.0),
                Cplx::new(7.0, 0.0),
                Cplx::new(8.0, 0.0),
            ],
        );
        let c = khatri_rao(&a, &b);
        assert_eq!(c.nrows(), 4);
        assert_eq!(c[(0, 0)].re, 5.0);
        assert_eq!(c[(1, 0)].re, 7.0);
        assert_eq!(c[(2, 0)].re, 15.0);
        assert_eq!(c[(3, 0)].re, 21.0);
        assert_eq!(c[(3, 1)].re, 32.0);
    }

    #[test]
    fn ridge_pinv_identity_returns_rhs() {
        let a = CMat::identity(3, 3);
        let b = randn_mat(2, 3, 7);
        let x = ridge_pinv_solve(&a, &b, 0.0).unwrap();
        assert!(rel_err(&x, &b) < 1e-12);
    }

    #[test]
    fn ridge_pinv_orthonormal_rows() {
        // a with orthonormal rows: solution reproduces b a^H.
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let a = CMat::from_row_slice(
            1,
            2,
            &[Cplx::new(s, 0.0), Cplx::new(0.0, s)],
        );
        let b = randn_mat(3, 2, 11);
        let x = ridge_pinv_solve(&a, &b, 0.0).unwrap();
        let expect = &b * a.adjoint();
        assert!(rel_err(&x, &expect) < 1e-12);
    }

    #[test]
    fn ridge_pinv_matches_normal_equations_dual_path() {
        // Independent check: solve the normal equations by naive Gaussian
        // elimination on an explicitly built augmented system.
        let a = randn_mat(4, 6, 3); // fat: 4x6, full row rank a.s.
        let b = randn_mat(2, 6, 5);
        let x = ridge_pinv_solve(&a, &b, 0.0).unwrap();

        let g = &a * a.adjoint(); // 4x4
        let rhs = &a * b.adjoint(); // 4x2
        let n = 4;
        // Gaussian elimination with partial pivoting over complex entries.
        let mut m = g.clone();
        let mut r = rhs.clone();
        for col in 0..n {
            let piv = (col..n)
                .max_by(|&i, &j| {
                    m[(i, col)]
                        .norm()
                        .partial_cmp(&m[(j, col)].norm())
                        .unwrap()
                })
                .unwrap();
            m.swap_rows(col, piv);
            r.swap_rows(col, piv);
            let d = m[(col, col)];
            for row in (col + 1)..n {
                let f = m[(row, col)] / d;
                for j in col..n {
                    let v = m[(col, j)];
                    m[(row, j)] -= f * v;
                }
                for j in 0..r.ncols() {
                    let v = r[(col, j)];
                    r[(row, j)] -= f * v;
                }
            }
        }
        let mut xh = CMat::zeros(n, r.ncols());
        for j in 0..r.ncols() {
            for i in (0..n).rev() {
                let mut acc = r[(i, j)];
                for k in (i + 1)..n {
                    acc -= m[(i, k)] * xh[(k, j)];
                }
                xh[(i, j)] = acc / m[(i, i)];
            }
        }
        let expect = xh.adjoint();
        assert!(rel_err(&x, &expect) < 1e-10);
    }

    #[test]
    fn singular_gram_takes_min_norm_path() {
        // Rank-1 a: the Gram is singular; the solve must still satisfy the
        // normal equations x (a a^H) = b a^H.
        let col = randn_mat(3, 1, 13);
        let a = &col * CMat::from_row_slice(1, 4, &[Cplx::ONE; 4]);
        let b = randn_mat(2, 4, 17);
        let x = ridge_pinv_solve(&a, &b, 0.0).unwrap();
        let lhs = &x * (&a * a.adjoint());
        let rhs = &b * a.adjoint();
        assert!(rel_err(&lhs, &rhs) < 1e-10);
    }

    #[test]
    fn ls_solve_recovers_planted_coefficients() {
        let a = randn_mat(8, 3, 23);
        let truth = randn_mat(3, 2, 29);
        let b = &a * &truth;
        let (x, fallback) = ls_solve(&a, &b, 0.0);
        assert!(!fallback);
        assert!(rel_err(&x, &truth) < 1e-10);
    }

    #[test]
    fn vectorize_stacks_columns() {
        let m = CMat::from_row_slice(
            2,
            2,
            &[
                Cplx::new(1.0, 0.0),
                Cplx::new(3.0, 0.0),
                Cplx::new(2.0, 0.0),
                Cplx::new(4.0, 0.0),
            ],
        );
        let v = vectorize(&m);
        assert_relative_eq!(v[0].re, 1.0);
        assert_relative_eq!(v[1].re, 2.0);
        assert_relative_eq!(v[2].re, 3.0);
        assert_relative_eq!(v[3].re, 4.0);
    }
}
