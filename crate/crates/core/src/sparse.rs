//! Greedy sparse recovery: OMP, simultaneous OMP for shared row supports,
//! and look-ahead OMP.
//!
//! All solvers share one greedy engine so that the look-ahead variant at
//! depth 1 is bit-for-bit identical to plain OMP. Atom selection maximizes
//! the l2 norm of the residual correlations across measurement columns
//! (which reduces to `|a_g^H r|` for a single target), ties break toward the
//! lowest column index, and the least-squares refit on the current support
//! goes through [`crate::linalg::ls_solve`] with its ridge/pseudoinverse
//! fallback for rank-deficient subdictionaries.

use crate::error::{Error, Result};
use crate::linalg::ls_solve;
use crate::{CMat, CVec};

/// A sensing matrix accessed through correlations and column extraction,
/// which lets structured operators avoid materializing themselves.
pub trait Sensing {
    fn rows(&self) -> usize;
    fn cols(&self) -> usize;
    /// `A^H r`.
    fn correlations(&self, residual: &CVec) -> CVec;
    /// Column `g`, densely.
    fn column(&self, g: usize) -> CVec;
    /// Dense submatrix of the given columns.
    fn gather(&self, support: &[usize]) -> CMat {
        let mut out = CMat::zeros(self.rows(), support.len());
        for (i, &g) in support.iter().enumerate() {
            out.set_column(i, &self.column(g));
        }
        out
    }
}

impl Sensing for CMat {
    fn rows(&self) -> usize {
        self.nrows()
    }

    fn cols(&self) -> usize {
        self.ncols()
    }

    fn correlations(&self, residual: &CVec) -> CVec {
        let c = self.ad_mul(residual);
        CVec::from_column_slice(c.as_slice())
    }

    fn column(&self, g: usize) -> CVec {
        CVec::from_column_slice(CMat::column(self, g).as_slice())
    }

    fn gather(&self, support: &[usize]) -> CMat {
        self.select_columns(support.iter())
    }
}

/// Solution of a single-target sparse recovery.
#[derive(Debug, Clone)]
pub struct SparseSolution {
    /// Selected atom indices, in selection order.
    pub support: Vec<usize>,
    /// Dense coefficient vector over the dictionary; zero off the support.
    pub coeffs: CVec,
    /// Final residual l2 norm.
    pub residual_norm: f64,
    /// Number of greedy selections performed.
    pub iterations: usize,
}

/// Solution of a multiple-measurement recovery with a shared row support.
#[derive(Debug, Clone)]
pub struct RowSparseSolution {
    pub support: Vec<usize>,
    /// Dense coefficient matrix, one column per measurement column.
    pub coeffs: CMat,
    /// Final residual Frobenius norm.
    pub residual_norm: f64,
    pub iterations: usize,
}

fn check_stop_rules(sparsity: usize, tol: f64) -> Result<()> {
    if sparsity == 0 && !(tol > 0.0) {
        return Err(Error::invalid(
            "sparse recovery needs a sparsity budget or a positive tolerance",
        ));
    }
    if tol < 0.0 || !tol.is_finite() {
        return Err(Error::invalid("tolerance must be finite and >= 0"));
    }
    Ok(())
}

/// Per-atom selection score on a single target: `|a_g^H r|`, skipping atoms
/// already selected.
fn best_unselected<S: Sensing + ?Sized>(
    op: &S,
    residual: &CVec,
    support: &[usize],
) -> Option<(usize, f64)> {
    let corr = op.correlations(residual);
    let mut best: Option<(usize, f64)> = None;
    for g in 0..op.cols() {
        if support.contains(&g) {
            continue;
        }
        let score = corr[g].norm();
        match best {
            Some((_, s)) if score <= s => {}
            _ => best = Some((g, score)),
        }
    }
    best.filter(|&(_, s)| s > 0.0)
}

/// Top `count` unselected atoms by score, descending; ties toward lower
/// index. Atoms with zero score are excluded.
fn top_unselected<S: Sensing + ?Sized>(
    op: &S,
    residual: &CVec,
    support: &[usize],
    count: usize,
) -> Vec<usize> {
    let corr = op.correlations(residual);
    let mut scored: Vec<(usize, f64)> = (0..op.cols())
        .filter(|g| !support.contains(g))
        .map(|g| (g, corr[g].norm()))
        .filter(|&(_, s)| s > 0.0)
        .collect();
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    scored.into_iter().take(count).map(|(g, _)| g).collect()
}

/// Least-squares refit on a fixed support; returns the packed coefficients
/// (one per support atom) and the updated residual.
fn refit<S: Sensing + ?Sized>(op: &S, target: &CVec, support: &[usize]) -> (CMat, CVec) {
    if support.is_empty() {
        return (CMat::zeros(0, 1), target.clone());
    }
    let sub = op.gather(support);
    let t = CMat::from_column_slice(target.len(), 1, target.as_slice());
    let (coeffs, _) = ls_solve(&sub, &t, 0.0);
    let fitted = &sub * &coeffs;
    let residual = CVec::from_fn(target.len(), |i, _| target[i] - fitted[(i, 0)]);
    (coeffs, residual)
}

/// Greedy engine: extends `support` one atom at a time until the budget is
/// met, the relative residual drops below `tol`, or no atom correlates with
/// the residual. Returns (support, packed coefficients, residual norm,
/// selections made).
fn greedy_extend<S: Sensing + ?Sized>(
    op: &S,
    target: &CVec,
    mut support: Vec<usize>,
    budget: usize,
    tol: f64,
) -> (Vec<usize>, CMat, f64, usize) {
    let target_norm = target.norm();
    let (mut coeffs, mut residual) = refit(op, target, &support);
    let mut iterations = 0;
    while support.len() < budget {
        if residual.norm() <= tol * target_norm {
            break;
        }
        let Some((g, _)) = best_unselected(op, &residual, &support) else {
            break;
        };
        support.push(g);
        let (c, r) = refit(op, target, &support);
        coeffs = c;
        residual = r;
        iterations += 1;
    }
    (support, coeffs, residual.norm(), iterations)
}

/// Multiple-measurement variants of the selection and refit, used by the
/// shared-support solver on dense dictionaries.
fn best_unselected_mmv(sensing: &CMat, residual: &CMat, support: &[usize]) -> Option<(usize, f64)> {
    let corr = sensing.ad_mul(residual); // d x t
    let mut best: Option<(usize, f64)> = None;
    for g in 0..sensing.ncols() {
        if support.contains(&g) {
            continue;
        }
        let score = corr.row(g).norm();
        match best {
            Some((_, s)) if score <= s => {}
            _ => best = Some((g, score)),
        }
    }
    best.filter(|&(_, s)| s > 0.0)
}

fn refit_mmv(sensing: &CMat, target: &CMat, support: &[usize]) -> (CMat, CMat) {
    if support.is_empty() {
        return (CMat::zeros(0, target.ncols()), target.clone());
    }
    let sub = sensing.select_columns(support.iter());
    let (coeffs, _) = ls_solve(&sub, target, 0.0);
    let residual = target - &sub * &coeffs;
    (coeffs, residual)
}

fn greedy_extend_mmv(
    sensing: &CMat,
    target: &CMat,
    mut support: Vec<usize>,
    budget: usize,
    tol: f64,
) -> (Vec<usize>, CMat, f64, usize) {
    let target_norm = target.norm();
    let (mut coeffs, mut residual) = refit_mmv(sensing, target, &support);
    let mut iterations = 0;
    while support.len() < budget {
        if residual.norm() <= tol * target_norm {
            break;
        }
        let Some((g, _)) = best_unselected_mmv(sensing, &residual, &support) else {
            break;
        };
        support.push(g);
        let (c, r) = refit_mmv(sensing, target, &support);
        coeffs = c;
        residual = r;
        iterations += 1;
    }
    (support, coeffs, residual.norm(), iterations)
}

fn effective_budget<S: Sensing + ?Sized>(op: &S, sparsity: usize) -> usize {
    let cap = op.rows().min(op.cols());
    if sparsity == 0 {
        cap
    } else {
        sparsity.min(cap)
    }
}

fn scatter_vec(d: usize, support: &[usize], packed: &CMat) -> CVec {
    let mut out = CVec::zeros(d);
    for (i, &g) in support.iter().enumerate() {
        out[g] = packed[(i, 0)];
    }
    out
}

fn scatter_mat(d: usize, t: usize, support: &[usize], packed: &CMat) -> CMat {
    let mut out = CMat::zeros(d, t);
    for (i, &g) in support.iter().enumerate() {
        for c in 0..t {
            out[(g, c)] = packed[(i, c)];
        }
    }
    out
}

/// Orthogonal matching pursuit on a single target vector, generic over the
/// sensing access.
///
/// A zero target returns an empty support with zero residual.
pub fn omp_on<S: Sensing + ?Sized>(
    op: &S,
    target: &CVec,
    sparsity: usize,
    tol: f64,
) -> Result<SparseSolution> {
    check_stop_rules(sparsity, tol)?;
    if op.rows() != target.len() {
        return Err(Error::invalid("omp: sensing rows must match target length"));
    }
    let budget = effective_budget(op, sparsity);
    let (support, packed, residual_norm, iterations) =
        greedy_extend(op, target, Vec::new(), budget, tol);
    Ok(SparseSolution {
        coeffs: scatter_vec(op.cols(), &support, &packed),
        support,
        residual_norm,
        iterations,
    })
}

/// Orthogonal matching pursuit on a dense dictionary.
pub fn omp(sensing: &CMat, target: &CVec, sparsity: usize, tol: f64) -> Result<SparseSolution> {
    omp_on(sensing, target, sparsity, tol)
}

/// Simultaneous OMP: one support shared by every column of `targets`.
pub fn somp(
    sensing: &CMat,
    targets: &CMat,
    row_sparsity: usize,
    tol: f64,
) -> Result<RowSparseSolution> {
    check_stop_rules(row_sparsity, tol)?;
    if sensing.nrows() != targets.nrows() {
        return Err(Error::invalid("somp: sensing rows must match target rows"));
    }
    if targets.ncols() == 1 {
        // Single measurement column: defer to the single-target engine so
        // the reduction to OMP is exact.
        let t = CVec::from_column_slice(targets.as_slice());
        let sol = omp_on(sensing, &t, row_sparsity, tol)?;
        let coeffs = CMat::from_column_slice(sensing.ncols(), 1, sol.coeffs.as_slice());
        return Ok(RowSparseSolution {
            support: sol.support,
            coeffs,
            residual_norm: sol.residual_norm,
            iterations: sol.iterations,
        });
    }
    let budget = effective_budget(sensing, row_sparsity);
    let (support, packed, residual_norm, iterations) =
        greedy_extend_mmv(sensing, targets, Vec::new(), budget, tol);
    Ok(RowSparseSolution {
        coeffs: scatter_mat(sensing.ncols(), targets.ncols(), &support, &packed),
        support,
        residual_norm,
        iterations,
    })
}

/// Look-ahead OMP: each selection tries the `lookahead` best-correlated
/// candidates, completes each greedily to the full budget, and commits the
/// candidate whose completed residual is smallest. Depth 1 is exactly OMP.
pub fn laomp_on<S: Sensing + ?Sized>(
    op: &S,
    target: &CVec,
    sparsity: usize,
    lookahead: usize,
    tol: f64,
) -> Result<SparseSolution> {
    check_stop_rules(sparsity, tol)?;
    if lookahead < 1 {
        return Err(Error::invalid("laomp: lookahead must be >= 1"));
    }
    if op.rows() != target.len() {
        return Err(Error::invalid(
            "laomp: sensing rows must match target length",
        ));
    }
    let budget = effective_budget(op, sparsity);
    let target_norm = target.norm();

    let mut support: Vec<usize> = Vec::new();
    let (mut coeffs, mut residual) = refit(op, target, &support);
    let mut iterations = 0;
    while support.len() < budget {
        if residual.norm() <= tol * target_norm {
            break;
        }
        let candidates = top_unselected(op, &residual, &support, lookahead);
        if candidates.is_empty() {
            break;
        }
        let mut commit = candidates[0];
        if candidates.len() > 1 {
            let mut best_res = f64::INFINITY;
            for &cand in &candidates {
                let mut trial = support.clone();
                trial.push(cand);
                let (_, _, res, _) = greedy_extend(op, target, trial, budget, tol);
                if res < best_res {
                    best_res = res;
                    commit = cand;
                }
            }
        }
        support.push(commit);
        let (c, r) = refit(op, target, &support);
        coeffs = c;
        residual = r;
        iterations += 1;
    }
    Ok(SparseSolution {
        coeffs: scatter_vec(op.cols(), &support, &coeffs),
        support,
        residual_norm: residual.norm(),
        iterations,
    })
}

/// Look-ahead OMP on a dense dictionary.
pub fn laomp(
    sensing: &CMat,
    target: &CVec,
    sparsity: usize,
    lookahead: usize,
    tol: f64,
) -> Result<SparseSolution> {
    laomp_on(sensing, target, sparsity, lookahead, tol)
}

/// Look-ahead OMP with an optional warm-start support: the warm support is
/// refit by least squares and kept whenever it explains the target at least
/// as well as the fresh greedy solution. Stabilizes alternating refinement
/// without locking the support.
pub fn laomp_warm_on<S: Sensing + ?Sized>(
    op: &S,
    target: &CVec,
    sparsity: usize,
    lookahead: usize,
    tol: f64,
    warm: Option<&[usize]>,
) -> Result<SparseSolution> {
    let fresh = laomp_on(op, target, sparsity, lookahead, tol)?;
    let Some(warm) = warm else {
        return Ok(fresh);
    };
    if warm.is_empty() {
        return Ok(fresh);
    }
    let budget = effective_budget(op, sparsity);
    let mut warm_support: Vec<usize> = warm.to_vec();
    warm_support.truncate(budget);
    let (packed, residual) = refit(op, target, &warm_support);
    let warm_res = residual.norm();
    if warm_res <= fresh.residual_norm {
        Ok(SparseSolution {
            coeffs: scatter_vec(op.cols(), &warm_support, &packed),
            support: warm_support,
            residual_norm: warm_res,
            iterations: 0,
        })
    } else {
        Ok(fresh)
    }
}

/// Dense-dictionary wrapper of [`laomp_warm_on`].
pub fn laomp_warm(
    sensing: &CMat,
    target: &CVec,
    sparsity: usize,
    lookahead: usize,
    tol: f64,
    warm: Option<&[usize]>,
) -> Result<SparseSolution> {
    laomp_warm_on(sensing, target, sparsity, lookahead, tol, warm)
}

/// Least-squares refit on a caller-fixed support (no atom re-selection).
pub fn refit_on_support_on<S: Sensing + ?Sized>(
    op: &S,
    target: &CVec,
    support: &[usize],
) -> SparseSolution {
    let (packed, residual) = refit(op, target, support);
    SparseSolution {
        coeffs: scatter_vec(op.cols(), support, &packed),
        support: support.to_vec(),
        residual_norm: residual.norm(),
        iterations: 0,
    }
}

/// Dense-dictionary wrapper of [`refit_on_support_on`].
pub fn refit_on_support(sensing: &CMat, target: &CVec, support: &[usize]) -> SparseSolution {
    refit_on_support_on(sensing, target, support)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Cplx;
    use approx::assert_relative_eq;
    use rand::Rng;

    /// Random dictionary with unit-norm columns.
    fn random_dictionary(m: usize, d: usize, seed: u64) -> CMat {
        let mut rng = crate::rng::stream(seed, &[m as u64, d as u64]);
        let mut a = CMat::from_fn(m, d, |_, _| {
            crate::channel::complex_gaussian(&mut rng, 1.0)
        });
        for c in 0..d {
            let n = a.column(c).norm();
            a.column_mut(c).scale_mut(1.0 / n);
        }
        a
    }

    /// Exact-recovery condition for a planted support: greedy pursuit is
    /// guaranteed to recover `support` from a noiseless combination when
    /// `max_g ||A_S^+ a_g||_1 < 1` over off-support atoms.
    fn erc_holds(a: &CMat, support: &[usize]) -> bool {
        let sub = a.select_columns(support.iter());
        let rest: Vec<usize> = (0..a.ncols()).filter(|g| !support.contains(g)).collect();
        let comp = a.select_columns(rest.iter());
        let (x, _) = ls_solve(&sub, &comp, 0.0);
        (0..x.ncols()).all(|c| x.column(c).iter().map(|v| v.norm()).sum::<f64>() < 0.999)
    }

    #[test]
    fn one_sparse_target_is_recovered_exactly() {
        let a = random_dictionary(8, 16, 1);
        let target = CVec::from_column_slice(a.column(7).as_slice()) * Cplx::new(3.5, 0.0);
        let sol = omp(&a, &target, 1, 0.0).unwrap();
        assert_eq!(sol.support, vec![7]);
        assert_relative_eq!(sol.coeffs[7].re, 3.5, epsilon = 1e-10);
        assert_relative_eq!(sol.coeffs[7].im, 0.0, epsilon = 1e-10);
        assert!(sol.residual_norm < 1e-10);
    }

    #[test]
    fn two_sparse_recovery_matches_exhaustive_oracle() {
        // Oracle: least-squares fit over every C(16, 2) support pair.
        // Instances are resampled until the exact-recovery condition holds,
        // deterministically.
        let mut done = 0;
        let mut attempt = 0u64;
        while done < 10 {
            attempt += 1;
            assert!(attempt < 500, "could not find recoverable instances");
            let a = random_dictionary(8, 16, 900 + attempt);
            let mut rng = crate::rng::stream(77, &[attempt]);
            let i = rng.random_range(0..16usize);
            let mut j = rng.random_range(0..15usize);
            if j >= i {
                j += 1;
            }
            if !erc_holds(&a, &[i, j]) {
                continue;
            }
            let ci = crate::channel::complex_gaussian(&mut rng, 1.0);
            let cj = crate::channel::complex_gaussian(&mut rng, 1.0);
            let target = CVec::from_column_slice(a.column(i).as_slice()) * ci
                + CVec::from_column_slice(a.column(j).as_slice()) * cj;

            let mut oracle = (usize::MAX, usize::MAX);
            let mut best = f64::INFINITY;
            for p in 0..16 {
                for q in (p + 1)..16 {
                    let sol = refit_on_support(&a, &target, &[p, q]);
                    if sol.residual_norm < best {
                        best = sol.residual_norm;
                        oracle = (p, q);
                    }
                }
            }
            let mut expect = vec![oracle.0, oracle.1];
            expect.sort_unstable();

            let mut got = omp(&a, &target, 2, 0.0).unwrap().support;
            got.sort_unstable();
            assert_eq!(got, expect, "planted ({i},{j})");
            done += 1;
        }
    }

    #[test]
    fn orthogonal_target_keeps_full_residual() {
        // Atoms live in the first two coordinates; the target in the third.
        let mut a = CMat::zeros(3, 4);
        a[(0, 0)] = Cplx::ONE;
        a[(1, 1)] = Cplx::ONE;
        a[(0, 2)] = Cplx::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        a[(1, 2)] = Cplx::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        a[(0, 3)] = Cplx::new(0.0, 1.0);
        let mut target = CVec::zeros(3);
        target[2] = Cplx::new(2.0, 0.0);
        let sol = omp(&a, &target, 2, 0.0).unwrap();
        assert!(sol.support.len() <= 2);
        assert_relative_eq!(sol.residual_norm, 2.0, epsilon = 1e-12);
        assert!(sol.coeffs.iter().all(|c| c.norm() < 1e-12));
    }

    #[test]
    fn zero_target_returns_empty_solution() {
        let a = random_dictionary(6, 10, 3);
        let sol = omp(&a, &CVec::zeros(6), 3, 0.0).unwrap();
        assert!(sol.support.is_empty());
        assert_eq!(sol.residual_norm, 0.0);
        assert_eq!(sol.iterations, 0);
    }

    #[test]
    fn no_stopping_rule_is_rejected() {
        let a = random_dictionary(6, 10, 4);
        assert!(omp(&a, &CVec::zeros(6), 0, 0.0).is_err());
    }

    #[test]
    fn somp_with_one_column_reduces_to_omp() {
        let a = random_dictionary(8, 20, 5);
        let mut rng = crate::rng::stream(5, &[1]);
        let target = CVec::from_fn(8, |_, _| crate::channel::complex_gaussian(&mut rng, 1.0));
        let t = CMat::from_column_slice(8, 1, target.as_slice());
        let s1 = omp(&a, &target, 3, 0.0).unwrap();
        let s2 = somp(&a, &t, 3, 0.0).unwrap();
        assert_eq!(s1.support, s2.support);
        assert_eq!(s1.residual_norm, s2.residual_norm);
        for g in 0..20 {
            assert_eq!(s1.coeffs[g], s2.coeffs[(g, 0)]);
        }
    }

    #[test]
    fn somp_recovers_planted_row_support() {
        let planted = [2usize, 9, 13];
        let a = (0..500u64)
            .map(|s| random_dictionary(12, 16, 600 + s))
            .find(|a| erc_holds(a, &planted))
            .expect("recoverable dictionary");
        let mut rng = crate::rng::stream(6, &[]);
        let x = CMat::from_fn(3, 5, |_, _| crate::channel::complex_gaussian(&mut rng, 1.0));
        let targets = a.select_columns(planted.iter()) * x;
        let sol = somp(&a, &targets, 3, 0.0).unwrap();
        let mut got = sol.support.clone();
        got.sort_unstable();
        assert_eq!(got, planted.to_vec());
        assert!(sol.residual_norm < 1e-10);
    }

    #[test]
    fn somp_support_invariant_under_column_permutation() {
        let a = random_dictionary(8, 16, 7);
        let mut rng = crate::rng::stream(7, &[]);
        let x = CMat::from_fn(2, 4, |_, _| crate::channel::complex_gaussian(&mut rng, 1.0));
        let targets = a.select_columns([3usize, 11].iter()) * x;
        let permuted = targets.select_columns([2usize, 0, 3, 1].iter());
        let s1 = somp(&a, &targets, 2, 0.0).unwrap();
        let s2 = somp(&a, &permuted, 2, 0.0).unwrap();
        assert_eq!(s1.support, s2.support);
    }

    #[test]
    fn laomp_depth_one_is_bitwise_omp() {
        let a = random_dictionary(10, 24, 8);
        let mut rng = crate::rng::stream(8, &[]);
        for trial in 0..20u64 {
            let mut trng = crate::rng::stream(8, &[trial]);
            let target =
                CVec::from_fn(10, |_, _| crate::channel::complex_gaussian(&mut trng, 1.0));
            let _ = &mut rng;
            let s_omp = omp(&a, &target, 4, 0.0).unwrap();
            let s_la = laomp(&a, &target, 4, 1, 0.0).unwrap();
            assert_eq!(s_omp.support, s_la.support);
            assert_eq!(s_omp.coeffs, s_la.coeffs);
            assert_eq!(s_omp.residual_norm, s_la.residual_norm);
            assert_eq!(s_omp.iterations, s_la.iterations);
        }
    }

    #[test]
    fn laomp_never_loses_to_omp() {
        let a = random_dictionary(10, 30, 9);
        for trial in 0..25u64 {
            let mut trng = crate::rng::stream(9, &[trial]);
            let target =
                CVec::from_fn(10, |_, _| crate::channel::complex_gaussian(&mut trng, 1.0));
            let r_omp = omp(&a, &target, 4, 0.0).unwrap().residual_norm;
            let r_la = laomp(&a, &target, 4, 4, 0.0).unwrap().residual_norm;
            assert!(r_la <= r_omp + 1e-12, "trial {trial}: {r_la} vs {r_omp}");
        }
    }

    #[test]
    fn laomp_one_sparse_matches_omp_exactly() {
        let a = random_dictionary(8, 16, 10);
        let target = CVec::from_column_slice(a.column(5).as_slice()) * Cplx::new(0.3, -1.1);
        let s_omp = omp(&a, &target, 1, 0.0).unwrap();
        let s_la = laomp(&a, &target, 1, 4, 0.0).unwrap();
        assert_eq!(s_omp.support, s_la.support);
        assert_eq!(s_omp.support, vec![5]);
        assert!(s_la.residual_norm < 1e-10);
    }

    #[test]
    fn residual_is_monotone_in_budget() {
        let a = random_dictionary(12, 24, 11);
        let mut rng = crate::rng::stream(11, &[]);
        let target = CVec::from_fn(12, |_, _| crate::channel::complex_gaussian(&mut rng, 1.0));
        let mut prev = f64::INFINITY;
        for k in 1..=6 {
            let r = omp(&a, &target, k, 0.0).unwrap().residual_norm;
            assert!(r <= prev + 1e-12);
            prev = r;
        }
    }

    #[test]
    fn solvers_never_reselect_atoms() {
        let a = random_dictionary(10, 20, 12);
        for trial in 0..10u64 {
            let mut trng = crate::rng::stream(12, &[trial]);
            let target =
                CVec::from_fn(10, |_, _| crate::channel::complex_gaussian(&mut trng, 1.0));
            let sol = laomp(&a, &target, 6, 3, 0.0).unwrap();
            let mut s = sol.support.clone();
            s.sort_unstable();
            s.dedup();
            assert_eq!(s.len(), sol.support.len());
        }
    }

    #[test]
    fn warm_start_keeps_better_support() {
        let a = random_dictionary(8, 16, 14);
        let target = CVec::from_column_slice(a.column(4).as_slice()) * Cplx::new(1.0, 1.0);
        // Warm support is already exact; the solver must keep it.
        let sol = laomp_warm(&a, &target, 1, 2, 0.0, Some(&[4])).unwrap();
        assert_eq!(sol.support, vec![4]);
        assert!(sol.residual_norm < 1e-10);
        // A useless warm support must not displace a better fresh solution.
        let sol2 = laomp_warm(&a, &target, 1, 2, 0.0, Some(&[9])).unwrap();
        assert_eq!(sol2.support, vec![4]);
    }
}
