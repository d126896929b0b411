//! Stage II: BS-side projection of every virtual user, bilinear sparse
//! alternating least squares over the common operator and the per-user
//! RIS-side channels, and the final regrouping into physical-user cascaded
//! channels.
//!
//! One refinement iteration is an operator update (closed-form least
//! squares over all virtual users) followed by a sparse-coefficient update
//! per virtual user; the per-iteration objective is recorded after the full
//! sweep. The model is bilinear, so `(S, {h_q})` and `(c S, {h_q / c})`
//! explain the data identically; nothing here fixes that gauge, and all
//! final cascaded quantities are invariant under it.

use crate::channel::{cascade, PolarDictionary};
use crate::error::{Error, Result};
use crate::linalg::{gram_right_solve_trunc, khatri_rao, vectorize};
use crate::pilots::TrainingPattern;
use crate::sparse::{laomp_warm_on, refit_on_support_on, Sensing, SparseSolution};
use crate::stage1::{diag_times, project_onto_bs, VirtualUserSet};
use crate::{CMat, CVec, Cplx};
use rayon::prelude::*;

/// The operator shared by every virtual user after BS-side projection; it
/// absorbs all common BS-RIS parameters.
#[derive(Debug, Clone)]
pub struct CommonOperator {
    /// `l_hat x m_ris`.
    pub s: CMat,
}

/// State of the alternating refinement.
#[derive(Debug, Clone)]
pub struct AlsState {
    /// Completed iterations.
    pub iteration: usize,
    pub operator: CommonOperator,
    /// Per-virtual-user RIS-side channel estimates.
    pub channels: Vec<CVec>,
    /// Per-virtual-user sparse polar coefficients.
    pub coefficients: Vec<SparseSolution>,
    /// Objective value after each full iteration.
    pub objective_trace: Vec<f64>,
    /// Diagnostic: count of iterations whose objective rose beyond the
    /// relative tolerance (possible with greedy support swaps; never
    /// silent).
    pub objective_increases: u32,
    /// Sparse recoveries performed inside the loop.
    pub sparse_solves: usize,
    /// Operator updates performed.
    pub ls_updates: usize,
    /// Sparse recoveries performed by the initial coefficient pass.
    pub init_sparse_solves: usize,
    /// Count of pseudoinverse fallbacks in operator updates.
    pub gram_fallbacks: u32,
}

/// Final channel estimates regrouped per physical user.
#[derive(Debug, Clone)]
pub struct FinalEstimates {
    /// `n_bs x m_ris`.
    pub h_br_hat: CMat,
    /// Per-user `m_ris x n_ue`.
    pub h_ru_hat: Vec<CMat>,
    /// Per-user virtual-channel matrix, `m_ris x j_hat_k`.
    pub h_v: Vec<CMat>,
    /// Cascaded estimates `g_hat[k][n] = h_br_hat Diag(h_ru_hat[k][:, n])`.
    pub g_hat: Vec<Vec<CMat>>,
}

/// Knobs of the alternating refinement.
#[derive(Debug, Clone)]
pub struct AlsOptions {
    pub max_iters: usize,
    /// Early stop when the relative objective decrease falls below this.
    pub rel_tol: f64,
    /// Per-virtual-user sparsity budgets.
    pub sparsity: Vec<usize>,
    pub lookahead: usize,
    /// Residual tolerance handed to the sparse solver (0 disables).
    pub solver_tol: f64,
    /// Offer the previous support as a warm-start candidate in each sparse
    /// update.
    pub warm_start: bool,
    /// Keep supports fixed and only refit coefficients (used by the
    /// monotonicity checks).
    pub freeze_supports: bool,
    /// Relative eigenvalue cutoff of the operator-update pseudoinverse;
    /// 0 keeps the exact least-squares solution.
    pub operator_cutoff: f64,
}

impl Default for AlsOptions {
    fn default() -> Self {
        AlsOptions {
            max_iters: 3,
            rel_tol: 1e-4,
            sparsity: Vec::new(),
            lookahead: 4,
            solver_tol: 0.0,
            warm_start: true,
            freeze_supports: false,
            operator_cutoff: 0.0,
        }
    }
}

/// Projects one virtual user's observation onto the estimated BS-side
/// subspace: `A_bs^H Y_q / (n_bs sqrt(p))`.
pub fn project_observation(y_q: &CMat, bs_steering: &CMat, power: f64) -> Result<CMat> {
    project_onto_bs(y_q, bs_steering, power)
}

/// Sparse sensing matrix of one virtual user for a fixed operator:
/// `(E^T kr S) P`, whose column `g` is `vec(S Diag(P[:, g]) E)`.
pub fn build_sensing(pattern: &TrainingPattern, s: &CMat, dict: &PolarDictionary) -> CMat {
    let kr = khatri_rao(&pattern.slots.transpose(), s);
    kr * &dict.atoms
}

/// Matrix-free view of [`build_sensing`]'s product.
///
/// Correlations factor as `P^H v` with
/// `v_m = sum_t conj(E[m,t]) (S^H R)[m,t]` (R is the residual reshaped to
/// `l_hat x tau`), which costs `O(l_hat m tau + m d)` instead of
/// materializing the `(l_hat tau) x d` matrix.
pub struct BilinearSensing<'a> {
    s: &'a CMat,
    pattern: &'a TrainingPattern,
    dict: &'a PolarDictionary,
}

impl<'a> BilinearSensing<'a> {
    pub fn new(s: &'a CMat, pattern: &'a TrainingPattern, dict: &'a PolarDictionary) -> Self {
        BilinearSensing { s, pattern, dict }
    }
}

impl Sensing for BilinearSensing<'_> {
    fn rows(&self) -> usize {
        self.s.nrows() * self.pattern.tau
    }

    fn cols(&self) -> usize {
        self.dict.atoms.ncols()
    }

    fn correlations(&self, residual: &CVec) -> CVec {
        let l_hat = self.s.nrows();
        let tau = self.pattern.tau;
        let m = self.s.ncols();
        let r = CMat::from_column_slice(l_hat, tau, residual.as_slice());
        let w = self.s.ad_mul(&r); // m x tau
        let mut v = CVec::zeros(m);
        for i in 0..m {
            let mut acc = Cplx::ZERO;
            for t in 0..tau {
                acc += self.pattern.slots[(i, t)].conj() * w[(i, t)];
            }
            v[i] = acc;
        }
        self.dict.atoms.ad_mul(&v)
    }

    fn column(&self, g: usize) -> CVec {
        let h = CVec::from_column_slice(self.dict.atoms.column(g).as_slice());
        vectorize(&(self.s * diag_times(&h, &self.pattern.slots)))
    }
}

/// Objective of the joint fit: `sum_q |Z_q - S Diag(h_q) E_q|_F^2`.
pub fn als_objective(
    z_list: &[CMat],
    s: &CMat,
    channels: &[CVec],
    patterns: &[&TrainingPattern],
) -> f64 {
    z_list
        .iter()
        .zip(channels)
        .zip(patterns)
        .map(|((z, h), pattern)| {
            let x = diag_times(h, &pattern.slots);
            (z - s * x).norm_squared()
        })
        .sum()
}

/// Step A: per-virtual-user sparse coefficient update for a fixed operator.
///
/// Returns the sparse solutions and the reconstructed channels
/// `h_q = P c_q`. Virtual users are independent and solved in parallel;
/// outputs keep the caller's ordering.
pub fn als_step_a(
    z_list: &[CMat],
    s: &CMat,
    dict: &PolarDictionary,
    patterns: &[&TrainingPattern],
    opts: &AlsOptions,
    warm: Option<&[Vec<usize>]>,
) -> Result<(Vec<SparseSolution>, Vec<CVec>)> {
    if s.norm() == 0.0 {
        return Err(Error::Estimation("step A: zero operator".into()));
    }
    let solutions: Vec<Result<SparseSolution>> = z_list
        .par_iter()
        .enumerate()
        .map(|(q, z_q)| {
            let sensing = BilinearSensing::new(s, patterns[q], dict);
            let target = vectorize(z_q);
            let budget = opts.sparsity.get(q).copied().unwrap_or(1);
            let warm_support = warm.and_then(|w| w.get(q)).map(|v| v.as_slice());
            if opts.freeze_supports {
                if let Some(sup) = warm_support {
                    return Ok(refit_on_support_on(&sensing, &target, sup));
                }
            }
            laomp_warm_on(
                &sensing,
                &target,
                budget,
                opts.lookahead,
                opts.solver_tol,
                if opts.warm_start { warm_support } else { None },
            )
        })
        .collect();
    let mut coeffs = Vec::with_capacity(z_list.len());
    let mut channels = Vec::with_capacity(z_list.len());
    for sol in solutions {
        let sol = sol?;
        channels.push(crate::stage1::dict_combine(dict, &sol));
        coeffs.push(sol);
    }
    Ok((coeffs, channels))
}

/// Step B: closed-form operator update for fixed channels,
/// `S = (sum_q Z_q X_q^H)(sum_q X_q X_q^H)^+` with `X_q = Diag(h_q) E_q`.
///
/// Returns the operator and whether the accumulated Gram needed the
/// pseudoinverse path.
pub fn als_step_b(
    z_list: &[CMat],
    channels: &[CVec],
    patterns: &[&TrainingPattern],
) -> Result<(CMat, bool)> {
    als_step_b_trunc(z_list, channels, patterns, 0.0)
}

/// [`als_step_b`] with a relative eigenvalue cutoff on the accumulated
/// Gram; weakly illuminated RIS directions are left at zero rather than fit
/// against model mismatch.
pub fn als_step_b_trunc(
    z_list: &[CMat],
    channels: &[CVec],
    patterns: &[&TrainingPattern],
    rel_cutoff: f64,
) -> Result<(CMat, bool)> {
    let m = channels
        .first()
        .map(|h| h.len())
        .ok_or_else(|| Error::invalid("step B: no virtual users"))?;
    let l_hat = z_list
        .first()
        .map(|z| z.nrows())
        .ok_or_else(|| Error::invalid("step B: no projections"))?;
    let mut num = CMat::zeros(l_hat, m);
    let mut gram = CMat::zeros(m, m);
    let mut any_nonzero = false;
    for ((z, h), pattern) in z_list.iter().zip(channels).zip(patterns) {
        let x = diag_times(h, &pattern.slots);
        if x.norm() > 0.0 {
            any_nonzero = true;
        }
        num += z * x.adjoint();
        gram += &x * x.adjoint();
    }
    if !any_nonzero {
        return Err(Error::Estimation(
            "step B: every regressor is zero".into(),
        ));
    }
    let (s, fallback) = gram_right_solve_trunc(&gram, &num, rel_cutoff);
    Ok((s, fallback))
}

/// Runs the alternating refinement from an initial operator.
///
/// The initial coefficient pass (one sparse solve per virtual user against
/// `s0`) establishes the channels; each iteration then updates the operator
/// in closed form and re-solves the coefficients, recording the objective.
/// `max_iters = 0` performs only the initial pass and leaves the operator
/// untouched.
pub fn run_als(
    z_list: &[CMat],
    s0: &CMat,
    dict: &PolarDictionary,
    patterns: &[&TrainingPattern],
    opts: &AlsOptions,
) -> Result<AlsState> {
    if z_list.len() != patterns.len() {
        return Err(Error::invalid("run_als: one pattern per virtual user"));
    }
    let (mut coeffs, mut channels) = als_step_a(z_list, s0, dict, patterns, opts, None)?;
    let init_sparse_solves = z_list.len();
    // Roundoff floor for the monotonicity check: an exact fit evaluates to
    // roughly eps^2 times the data energy, not zero.
    let data_energy: f64 = z_list.iter().map(|z| z.norm_squared()).sum();
    let noise_floor = 1e-25 * data_energy;
    let mut state = AlsState {
        iteration: 0,
        operator: CommonOperator { s: s0.clone() },
        channels: Vec::new(),
        coefficients: Vec::new(),
        objective_trace: Vec::new(),
        objective_increases: 0,
        sparse_solves: 0,
        ls_updates: 0,
        init_sparse_solves,
        gram_fallbacks: 0,
    };
    let mut prev_obj = als_objective(z_list, &state.operator.s, &channels, patterns);
    for _ in 0..opts.max_iters {
        let (s_next, fallback) =
            als_step_b_trunc(z_list, &channels, patterns, opts.operator_cutoff)?;
        state.ls_updates += 1;
        if fallback {
            state.gram_fallbacks += 1;
        }
        let warm: Vec<Vec<usize>> = coeffs.iter().map(|c| c.support.clone()).collect();
        let (c_next, h_next) =
            als_step_a(z_list, &s_next, dict, patterns, opts, Some(&warm))?;
        state.sparse_solves += z_list.len();
        state.operator = CommonOperator { s: s_next };
        coeffs = c_next;
        channels = h_next;
        state.iteration += 1;
        let obj = als_objective(z_list, &state.operator.s, &channels, patterns);
        state.objective_trace.push(obj);
        if obj > prev_obj * (1.0 + 1e-9) + noise_floor {
            state.objective_increases += 1;
        }
        let rel_decrease = if prev_obj > 0.0 {
            (prev_obj - obj) / prev_obj
        } else {
            0.0
        };
        prev_obj = obj;
        if rel_decrease >= 0.0 && rel_decrease < opts.rel_tol {
            break;
        }
    }
    state.channels = channels;
    state.coefficients = coeffs;
    Ok(state)
}

/// Regroups the virtual-user estimates into physical-user channels and
/// assembles every cascaded matrix.
pub fn finalize_estimates(
    als: &AlsState,
    bs_steering: &CMat,
    virtual_set: &VirtualUserSet,
) -> Result<FinalEstimates> {
    let h_br_hat = bs_steering * &als.operator.s;
    let n_users = virtual_set.ue_steering.len();
    let m = als
        .channels
        .first()
        .map(|h| h.len())
        .ok_or_else(|| Error::Estimation("finalize: no channel estimates".into()))?;
    let mut h_v = Vec::with_capacity(n_users);
    let mut h_ru_hat = Vec::with_capacity(n_users);
    let mut g_hat = Vec::with_capacity(n_users);
    for k in 0..n_users {
        let indices = virtual_set.user_indices(k);
        let mut hv_k = CMat::zeros(m, indices.len());
        for (col, &q) in indices.iter().enumerate() {
            hv_k.set_column(col, &als.channels[q]);
        }
        let hru_k = &hv_k * virtual_set.ue_steering[k].adjoint();
        let g_k: Vec<CMat> = (0..hru_k.ncols())
            .map(|n| {
                cascade(
                    &h_br_hat,
                    &CVec::from_column_slice(hru_k.column(n).as_slice()),
                )
            })
            .collect();
        h_v.push(hv_k);
        h_ru_hat.push(hru_k);
        g_hat.push(g_k);
    }
    Ok(FinalEstimates {
        h_br_hat,
        h_ru_hat,
        h_v,
        g_hat,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{build_polar_dictionary, steering_from_sine};
    use crate::pilots::{generate_training, TrainingScheme};
    use crate::rng::stream;
    use crate::sparse::SparseSolution;

    const LAMBDA: f64 = 0.01;
    const HALF: f64 = 0.005;

    fn random_mat(rows: usize, cols: usize, seed: u64) -> CMat {
        let mut rng = stream(seed, &[rows as u64, cols as u64]);
        CMat::from_fn(rows, cols, |_, _| {
            crate::channel::complex_gaussian(&mut rng, 1.0)
        })
    }

    /// Operator with orthogonal steering rows, plus planted 1-sparse
    /// channels and their exact projections.
    struct Planted {
        s_true: CMat,
        dict: PolarDictionary,
        patterns: Vec<TrainingPattern>,
        atoms: Vec<usize>,
        gains: Vec<Cplx>,
        z_list: Vec<CMat>,
    }

    fn planted_instance(m: usize, l_hat: usize, k_v: usize, tau: usize, seed: u64) -> Planted {
        let dict = build_polar_dictionary(m, HALF, LAMBDA, 2 * m, 1.2, 0.2).unwrap();
        let mut rng = stream(seed, &[]);
        // Rows of the operator: gain-weighted conjugate steering on distinct
        // bins.
        let mut s_true = CMat::zeros(l_hat, m);
        for l in 0..l_hat {
            let sine = 2.0 * (l as f64 + 1.0) / m as f64;
            let a = steering_from_sine(m, HALF, LAMBDA, sine);
            let gain = crate::channel::complex_gaussian(&mut rng, 1.0);
            for c in 0..m {
                s_true[(l, c)] = gain * a[c].conj();
            }
        }
        let mut patterns = Vec::new();
        let mut atoms = Vec::new();
        let mut gains = Vec::new();
        let mut z_list = Vec::new();
        for q in 0..k_v {
            let pattern =
                generate_training(m, tau, TrainingScheme::RandomPhase, &mut rng).unwrap();
            let atom = (q * 7 + 3) % dict.atoms.ncols();
            let gain = crate::channel::complex_gaussian(&mut rng, 1.0);
            let h = CVec::from_column_slice(dict.atoms.column(atom).as_slice()) * gain;
            let z = &s_true * diag_times(&h, &pattern.slots);
            patterns.push(pattern);
            atoms.push(atom);
            gains.push(gain);
            z_list.push(z);
        }
        Planted {
            s_true,
            dict,
            patterns,
            atoms,
            gains,
            z_list,
        }
    }

    #[test]
    fn projection_is_power_invariant_and_linear() {
        let n_bs = 8;
        let a_bs = random_mat(n_bs, 2, 1);
        let h_eff = random_mat(n_bs, 5, 2);
        // Noiseless observation scales as sqrt(p); the projection divides it
        // back out.
        let y1 = h_eff.clone();
        let y4 = &h_eff * Cplx::new(2.0, 0.0);
        let z1 = project_observation(&y1, &a_bs, 1.0).unwrap();
        let z4 = project_observation(&y4, &a_bs, 4.0).unwrap();
        assert!((&z1 - &z4).norm() < 1e-12 * z1.norm());
        let z0 = project_observation(&CMat::zeros(n_bs, 5), &a_bs, 1.0).unwrap();
        assert_eq!(z0.norm(), 0.0);
    }

    #[test]
    fn projection_matches_planted_bilinear_model() {
        // Exact on-bin BS steering: Z = S Diag(h) E exactly.
        let n_bs = 16;
        let m = 8;
        let mut rng = stream(3, &[]);
        let pattern = generate_training(m, 12, TrainingScheme::RandomPhase, &mut rng).unwrap();
        let h = CVec::from_fn(m, |_, _| crate::channel::complex_gaussian(&mut rng, 1.0));
        let bs_sines = [2.0 * 2.0 / n_bs as f64, -2.0 * 6.0 / n_bs as f64];
        let ris_sines = [0.37, -0.61];
        let gains = [Cplx::new(1.1, -0.2), Cplx::new(0.4, 0.9)];
        let mut a_bs = CMat::zeros(n_bs, 2);
        let mut s_true = CMat::zeros(2, m);
        let mut y = CMat::zeros(n_bs, 12);
        let x = diag_times(&h, &pattern.slots);
        for l in 0..2 {
            let a = steering_from_sine(n_bs, HALF, LAMBDA, bs_sines[l]);
            let a_ris = steering_from_sine(m, HALF, LAMBDA, ris_sines[l]);
            a_bs.set_column(l, &a);
            for c in 0..m {
                s_true[(l, c)] = gains[l] * a_ris[c].conj();
            }
            y += (&a * (a_ris.adjoint() * &x)) * gains[l] * Cplx::new(3.0_f64.sqrt(), 0.0);
        }
        let z = project_observation(&y, &a_bs, 3.0).unwrap();
        let expect = &s_true * &x;
        assert!((&z - &expect).norm() / expect.norm() < 1e-10);
    }

    #[test]
    fn sensing_matches_vectorized_product() {
        // vec(S Diag(h) E) = (E^T kr S) h for dense h, checked through the
        // dictionary columns.
        let dict = build_polar_dictionary(3, HALF, LAMBDA, 4, 1.2, f64::INFINITY).unwrap();
        let s = random_mat(2, 3, 4);
        let pattern = TrainingPattern {
            slots: random_mat(3, 4, 5),
            scheme: TrainingScheme::RandomPhase,
            tau: 4,
        };
        let psi = build_sensing(&pattern, &s, &dict);
        assert_eq!(psi.shape(), (8, dict.atoms.ncols()));
        for g in 0..dict.atoms.ncols() {
            let h = CVec::from_column_slice(dict.atoms.column(g).as_slice());
            let direct = vectorize(&(&s * diag_times(&h, &pattern.slots)));
            assert!((psi.column(g) - &direct).norm() < 1e-12 * direct.norm());
        }
    }

    #[test]
    fn sensing_identity_case() {
        // E = I, S = I: column g is vec(Diag(P[:, g])).
        let m = 4;
        let dict = build_polar_dictionary(m, HALF, LAMBDA, 2 * m, 1.2, f64::INFINITY).unwrap();
        let pattern = TrainingPattern {
            slots: CMat::identity(m, m),
            scheme: TrainingScheme::RandomPhase,
            tau: m,
        };
        let s = CMat::identity(m, m);
        let psi = build_sensing(&pattern, &s, &dict);
        for g in 0..dict.atoms.ncols() {
            for t in 0..m {
                for l in 0..m {
                    let expect = if t == l {
                        dict.atoms[(t, g)]
                    } else {
                        Cplx::ZERO
                    };
                    assert!((psi[(t * m + l, g)] - expect).norm() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn matrix_free_sensing_matches_dense_product() {
        let m = 8;
        let dict = build_polar_dictionary(m, HALF, LAMBDA, 24, 1.2, 0.2).unwrap();
        let s = random_mat(3, m, 41);
        let pattern = TrainingPattern {
            slots: random_mat(m, 5, 42),
            scheme: TrainingScheme::RandomPhase,
            tau: 5,
        };
        let dense = build_sensing(&pattern, &s, &dict);
        let op = BilinearSensing::new(&s, &pattern, &dict);
        assert_eq!(op.rows(), dense.nrows());
        assert_eq!(op.cols(), dense.ncols());
        let mut rng = stream(43, &[]);
        let r = CVec::from_fn(dense.nrows(), |_, _| {
            crate::channel::complex_gaussian(&mut rng, 1.0)
        });
        let c_dense = Sensing::correlations(&dense, &r);
        let c_op = op.correlations(&r);
        assert!((&c_dense - &c_op).norm() < 1e-10 * c_dense.norm());
        for g in [0usize, 7, 23] {
            let col_dense = Sensing::column(&dense, g);
            let col_op = op.column(g);
            assert!((&col_dense - &col_op).norm() < 1e-12 * col_dense.norm().max(1.0));
        }
    }

    #[test]
    fn sensing_dimensions() {
        let m = 8;
        let dict = build_polar_dictionary(m, HALF, LAMBDA, 40, 1.2, f64::INFINITY).unwrap();
        let s = random_mat(3, m, 6);
        let pattern = TrainingPattern {
            slots: random_mat(m, 5, 7),
            scheme: TrainingScheme::RandomPhase,
            tau: 5,
        };
        let psi = build_sensing(&pattern, &s, &dict);
        assert_eq!(psi.shape(), (15, 40));
    }

    #[test]
    fn step_a_exact_recovery_with_true_operator() {
        let p = planted_instance(8, 2, 3, 16, 8);
        let patterns: Vec<&TrainingPattern> = p.patterns.iter().collect();
        let opts = AlsOptions {
            sparsity: vec![1; 3],
            ..AlsOptions::default()
        };
        let (coeffs, channels) =
            als_step_a(&p.z_list, &p.s_true, &p.dict, &patterns, &opts, None).unwrap();
        for q in 0..3 {
            assert_eq!(coeffs[q].support, vec![p.atoms[q]]);
            let expect =
                CVec::from_column_slice(p.dict.atoms.column(p.atoms[q]).as_slice()) * p.gains[q];
            assert!((&channels[q] - &expect).norm() / expect.norm() < 1e-8);
        }
    }

    #[test]
    fn step_a_scale_covariance() {
        let p = planted_instance(8, 2, 2, 16, 9);
        let patterns: Vec<&TrainingPattern> = p.patterns.iter().collect();
        let opts = AlsOptions {
            sparsity: vec![1; 2],
            ..AlsOptions::default()
        };
        let (c1, _) = als_step_a(&p.z_list, &p.s_true, &p.dict, &patterns, &opts, None).unwrap();
        let c = Cplx::new(0.0, 2.0);
        let s_scaled = &p.s_true * c;
        let (c2, _) = als_step_a(&p.z_list, &s_scaled, &p.dict, &patterns, &opts, None).unwrap();
        for q in 0..2 {
            assert_eq!(c1[q].support, c2[q].support);
            let g = c1[q].support[0];
            assert!((c2[q].coeffs[g] * c - c1[q].coeffs[g]).norm() < 1e-8 * c1[q].coeffs[g].norm());
        }
    }

    #[test]
    fn step_a_is_permutation_equivariant() {
        let p = planted_instance(8, 2, 3, 16, 10);
        let patterns: Vec<&TrainingPattern> = p.patterns.iter().collect();
        let opts = AlsOptions {
            sparsity: vec![1; 3],
            ..AlsOptions::default()
        };
        let (c_fwd, _) = als_step_a(&p.z_list, &p.s_true, &p.dict, &patterns, &opts, None).unwrap();
        let rev_z: Vec<CMat> = p.z_list.iter().rev().cloned().collect();
        let rev_patterns: Vec<&TrainingPattern> = p.patterns.iter().rev().collect();
        let (c_rev, _) =
            als_step_a(&rev_z, &p.s_true, &p.dict, &rev_patterns, &opts, None).unwrap();
        for q in 0..3 {
            assert_eq!(c_fwd[q].support, c_rev[2 - q].support);
        }
    }

    #[test]
    fn step_b_fits_consistent_single_user() {
        let m = 8;
        let mut rng = stream(11, &[]);
        let pattern = generate_training(m, m, TrainingScheme::RandomPhase, &mut rng).unwrap();
        let h = CVec::from_fn(m, |_, _| crate::channel::complex_gaussian(&mut rng, 1.0));
        let s_true = random_mat(2, m, 12);
        let z = &s_true * diag_times(&h, &pattern.slots);
        let (s, _) = als_step_b(&[z.clone()], &[h.clone()], &[&pattern]).unwrap();
        let residual = &z - &s * diag_times(&h, &pattern.slots);
        assert!(residual.norm() / z.norm() < 1e-8);
    }

    #[test]
    fn step_b_scale_covariance_and_invariant_product() {
        let p = planted_instance(8, 2, 3, 16, 13);
        let patterns: Vec<&TrainingPattern> = p.patterns.iter().collect();
        let channels: Vec<CVec> = p
            .atoms
            .iter()
            .zip(&p.gains)
            .map(|(&a, &g)| CVec::from_column_slice(p.dict.atoms.column(a).as_slice()) * g)
            .collect();
        let (s1, _) = als_step_b(&p.z_list, &channels, &patterns).unwrap();
        let c = Cplx::new(-1.5, 0.5);
        let scaled: Vec<CVec> = channels.iter().map(|h| h * c).collect();
        let (s2, _) = als_step_b(&p.z_list, &scaled, &patterns).unwrap();
        assert!((&s2 * c - &s1).norm() / s1.norm() < 1e-8);
        let f1 = &s1 * diag_times(&channels[0], &p.patterns[0].slots);
        let f2 = &s2 * diag_times(&scaled[0], &p.patterns[0].slots);
        assert!((&f1 - &f2).norm() / f1.norm() < 1e-8);
    }

    #[test]
    fn step_b_is_the_least_squares_minimizer() {
        // Random perturbations in +-1e-3 strictly increase the objective on
        // a full-rank instance.
        let p = planted_instance(8, 2, 3, 16, 14);
        let patterns: Vec<&TrainingPattern> = p.patterns.iter().collect();
        let channels: Vec<CVec> = p
            .atoms
            .iter()
            .zip(&p.gains)
            .map(|(&a, &g)| CVec::from_column_slice(p.dict.atoms.column(a).as_slice()) * g)
            .collect();
        let (s, _) = als_step_b(&p.z_list, &channels, &patterns).unwrap();
        let base = als_objective(&p.z_list, &s, &channels, &patterns);
        let mut rng = stream(14, &[7]);
        for trial in 0..5 {
            let delta = CMat::from_fn(s.nrows(), s.ncols(), |_, _| {
                crate::channel::complex_gaussian(&mut rng, 1.0)
            });
            for eps in [1e-3, -1e-3] {
                let perturbed = &s + &delta * Cplx::new(eps, 0.0);
                let obj = als_objective(&p.z_list, &perturbed, &channels, &patterns);
                assert!(obj > base, "trial {trial} eps {eps}: {obj} !> {base}");
            }
        }
    }

    #[test]
    fn run_als_fits_consistent_instance_in_one_sweep() {
        let p = planted_instance(8, 2, 4, 16, 15);
        let patterns: Vec<&TrainingPattern> = p.patterns.iter().collect();
        // Total observed energy is the no-model objective baseline.
        let baseline: f64 = p.z_list.iter().map(|z| z.norm_squared()).sum();
        // Start from a gauge-scaled operator.
        let s0 = &p.s_true * Cplx::new(0.0, 0.5);
        let opts = AlsOptions {
            max_iters: 1,
            rel_tol: 0.0,
            sparsity: vec![1; 4],
            ..AlsOptions::default()
        };
        let state = run_als(&p.z_list, &s0, &p.dict, &patterns, &opts).unwrap();
        assert_eq!(state.objective_trace.len(), 1);
        assert!(state.objective_trace[0] < 1e-10 * baseline);
        assert_eq!(state.objective_increases, 0);
    }

    #[test]
    fn run_als_zero_iterations_keeps_initial_operator() {
        let p = planted_instance(8, 2, 2, 12, 16);
        let patterns: Vec<&TrainingPattern> = p.patterns.iter().collect();
        let opts = AlsOptions {
            max_iters: 0,
            sparsity: vec![1; 2],
            ..AlsOptions::default()
        };
        let state = run_als(&p.z_list, &p.s_true, &p.dict, &patterns, &opts).unwrap();
        assert_eq!(state.iteration, 0);
        assert!(state.objective_trace.is_empty());
        assert_eq!(state.operator.s, p.s_true);
        assert_eq!(state.channels.len(), 2);
        assert_eq!(state.init_sparse_solves, 2);
        assert_eq!(state.sparse_solves, 0);
        assert_eq!(state.ls_updates, 0);
    }

    #[test]
    fn run_als_records_one_objective_per_iteration() {
        let p = planted_instance(8, 2, 2, 12, 17);
        let patterns: Vec<&TrainingPattern> = p.patterns.iter().collect();
        let opts = AlsOptions {
            max_iters: 3,
            rel_tol: 0.0, // no early stop
            sparsity: vec![1; 2],
            ..AlsOptions::default()
        };
        let state = run_als(&p.z_list, &p.s_true, &p.dict, &patterns, &opts).unwrap();
        assert_eq!(state.objective_trace.len(), 3);
        assert_eq!(state.ls_updates, 3);
        assert_eq!(state.sparse_solves, 6);
        // Monotone within tolerance (an exact fit floats around
        // eps^2 * data energy, never exactly zero).
        let floor = 1e-25 * p.z_list.iter().map(|z| z.norm_squared()).sum::<f64>();
        for w in state.objective_trace.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-9) + floor);
        }
        assert_eq!(state.objective_increases, 0);
    }

    #[test]
    fn frozen_supports_never_raise_the_objective() {
        let p = planted_instance(8, 2, 3, 16, 18);
        let patterns: Vec<&TrainingPattern> = p.patterns.iter().collect();
        // Perturb the operator so the refinement has real work to do.
        let noise = random_mat(2, 8, 19) * Cplx::new(0.3, 0.0);
        let s0 = &p.s_true + noise;
        let opts = AlsOptions {
            max_iters: 4,
            rel_tol: 0.0,
            sparsity: vec![1; 3],
            freeze_supports: true,
            ..AlsOptions::default()
        };
        let state = run_als(&p.z_list, &s0, &p.dict, &patterns, &opts).unwrap();
        assert_eq!(state.objective_increases, 0);
        let floor = 1e-25 * p.z_list.iter().map(|z| z.norm_squared()).sum::<f64>();
        for w in state.objective_trace.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-9) + floor);
        }
    }

    fn tiny_virtual_set(m: usize, ue_steering: Vec<CMat>, owner_map: Vec<(usize, usize)>) -> VirtualUserSet {
        let _ = m;
        VirtualUserSet {
            observations: Vec::new(),
            owner_map,
            supports: ue_steering.iter().map(|s| (0..s.ncols()).collect()).collect(),
            ue_steering,
            ridge_fallbacks: 0,
        }
    }

    #[test]
    fn finalize_assembles_gauge_invariant_cascades() {
        let m = 6;
        let n_bs = 4;
        let n_ue = 3;
        let a_bs = random_mat(n_bs, 2, 20);
        let s = random_mat(2, m, 21);
        let channels = vec![
            CVec::from_column_slice(random_mat(m, 1, 22).column(0).as_slice()),
            CVec::from_column_slice(random_mat(m, 1, 23).column(0).as_slice()),
        ];
        let ue = vec![random_mat(n_ue, 1, 24), random_mat(n_ue, 1, 25)];
        let vus = tiny_virtual_set(m, ue, vec![(0, 0), (1, 0)]);
        let mk_state = |s: CMat, channels: Vec<CVec>| AlsState {
            iteration: 1,
            operator: CommonOperator { s },
            channels,
            coefficients: vec![
                SparseSolution {
                    support: vec![],
                    coeffs: CVec::zeros(1),
                    residual_norm: 0.0,
                    iterations: 0,
                };
                2
            ],
            objective_trace: vec![],
            objective_increases: 0,
            sparse_solves: 0,
            ls_updates: 0,
            init_sparse_solves: 0,
            gram_fallbacks: 0,
        };
        let base = finalize_estimates(&mk_state(s.clone(), channels.clone()), &a_bs, &vus).unwrap();
        // Gauge transform: (S, h) -> (cS, h/c) for c in {2, i}.
        for c in [Cplx::new(2.0, 0.0), Cplx::new(0.0, 1.0)] {
            let scaled_channels: Vec<CVec> = channels.iter().map(|h| h / c).collect();
            let scaled = finalize_estimates(
                &mk_state(&s * c, scaled_channels),
                &a_bs,
                &vus,
            )
            .unwrap();
            for k in 0..2 {
                for n in 0..n_ue {
                    let d = (&scaled.g_hat[k][n] - &base.g_hat[k][n]).norm();
                    assert!(d < 1e-12 * base.g_hat[k][n].norm().max(1.0));
                }
            }
        }
        // Column structure: G[:, m] = h_br[:, m] * h_ru[m, n].
        for n in 0..n_ue {
            for col in 0..m {
                for row in 0..n_bs {
                    let expect = base.h_br_hat[(row, col)] * base.h_ru_hat[0][(col, n)];
                    assert!((base.g_hat[0][n][(row, col)] - expect).norm() < 1e-12);
                }
            }
        }
    }
}
