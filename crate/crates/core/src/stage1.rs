//! Stage I of the estimator: user-side support recovery and virtual-user
//! construction, BS-side angle estimation from the typical virtual user,
//! path separation, reference-path polar recovery, angle-gain scaling for
//! the remaining paths, and initialization of the common operator.
//!
//! Sign convention: the BS-side projection rows are read back as plain
//! transposes (no conjugation). With the channel model used in
//! [`crate::channel`], the separated observation of path `l` is then exactly
//! `alpha_l E^T Diag(conj(a_M(omega_l))) h`, which keeps the RIS-side
//! channel `h` — not its conjugate — sparse over the polar dictionary. All
//! compensation diagonals below are therefore conjugated relative to the
//! steering vectors, and the rank-one cascade assembles through a transpose.

use crate::channel::{steering_from_sine, AngularDictionary, PolarDictionary};
use crate::error::{Error, Result};
use crate::linalg::{ls_solve, ridge_pinv_solve};
use crate::pilots::{ObservationSet, TrainingPattern};
use crate::sparse::{laomp, somp, SparseSolution};
use crate::{CMat, CVec, Cplx};

/// Virtual single-antenna users extracted from the multi-antenna users.
#[derive(Debug, Clone)]
pub struct VirtualUserSet {
    /// Per-virtual-user observation, `n_bs x tau_k` (the owner's slot count).
    pub observations: Vec<CMat>,
    /// Virtual index -> (physical user, branch).
    pub owner_map: Vec<(usize, usize)>,
    /// Per-user estimated user-side steering matrix, `n_ue x j_hat_k`.
    pub ue_steering: Vec<CMat>,
    /// Per-user recovered dictionary supports.
    pub supports: Vec<Vec<usize>>,
    /// Count of user-side Gram inversions that needed regularization.
    pub ridge_fallbacks: u32,
}

impl VirtualUserSet {
    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    /// Virtual indices belonging to physical user `k`, in branch order.
    pub fn user_indices(&self, k: usize) -> Vec<usize> {
        self.owner_map
            .iter()
            .enumerate()
            .filter(|(_, &(owner, _))| owner == k)
            .map(|(q, _)| q)
            .collect()
    }
}

/// BS-side angle estimate.
#[derive(Debug, Clone)]
pub struct BsAngles {
    /// `n_bs x l_hat` steering matrix, detection order (energy descending).
    pub steering: CMat,
    /// Estimated sines of the BS-side angles.
    pub sines: Vec<f64>,
    /// Estimated angles in radians.
    pub angles: Vec<f64>,
}

/// Per-path angle/gain offset relative to the reference path.
#[derive(Debug, Clone, Copy)]
pub struct PathOffset {
    /// Sine-domain angle offset of this path from the reference.
    pub delta_sine: f64,
    /// Complex gain ratio against the reference path.
    pub eta: Cplx,
}

/// Everything Stage I produces.
#[derive(Debug, Clone)]
pub struct Stage1Result {
    pub bs: BsAngles,
    /// Separated per-path observations, each of length tau.
    pub separated: Vec<CVec>,
    /// Index of the reference path within `separated`.
    pub reference_index: usize,
    /// Recovered RIS-side channel of the typical virtual user.
    pub ref_channel: CVec,
    /// Sparse polar coefficients behind `ref_channel`.
    pub ref_gamma: SparseSolution,
    /// Cascaded RIS-side vectors, one column per BS-RIS path.
    pub cascaded_ris: CMat,
    /// Angle/gain offsets for the non-reference paths (`None` at the
    /// reference index).
    pub path_offsets: Vec<Option<PathOffset>>,
    /// Initial common operator, `l_hat x m_ris`.
    pub initial_operator: CMat,
    /// Initial cascaded-channel estimate for the typical virtual user.
    pub initial_cascade: CMat,
    /// Count of regularized least-squares fallbacks taken.
    pub ridge_fallbacks: u32,
}

/// Stacks the adjoint per-slot observations side by side:
/// `[Y_1^H, ..., Y_tau^H]`, an `n_ue x (n_bs tau)` matrix.
///
/// The user-side steering enters each slot through `a(zeta)^H` on the
/// right, so it is the adjoint (not the plain transpose) whose column space
/// is spanned by the unconjugated steering vectors the dictionary holds.
pub fn aggregate_observations(slots: &[CMat]) -> Result<CMat> {
    let first = slots
        .first()
        .ok_or_else(|| Error::invalid("aggregate_observations: no slots"))?;
    let (rows, cols) = first.shape();
    if slots.iter().any(|s| s.shape() != (rows, cols)) {
        return Err(Error::invalid(
            "aggregate_observations: slot dimensions differ",
        ));
    }
    let mut agg = CMat::zeros(cols, rows * slots.len());
    for (t, s) in slots.iter().enumerate() {
        agg.view_mut((0, t * rows), (cols, rows))
            .copy_from(&s.adjoint());
    }
    Ok(agg)
}

/// Recovers the user-side angular support of one user by simultaneous OMP
/// on its aggregated observation; returns the support and the matching
/// steering matrix.
pub fn estimate_user_support(
    y_agg: &CMat,
    dict: &AngularDictionary,
    j_k: usize,
) -> Result<(Vec<usize>, CMat)> {
    if j_k < 1 {
        return Err(Error::invalid("estimate_user_support: j_k must be >= 1"));
    }
    let sol = somp(&dict.atoms, y_agg, j_k, 0.0)?;
    let steering = dict.atoms.select_columns(sol.support.iter());
    Ok((sol.support, steering))
}

/// `A (A^H A)^{-1}`, the right-multiplied branch-separation matrix, with the
/// shared regularization ladder on a rank-deficient Gram.
fn separation_matrix(steering: &CMat, ridge_fallbacks: &mut u32) -> CMat {
    let n = steering.nrows();
    let (pinv, fallback) = ls_solve(steering, &CMat::identity(n, n), 0.0);
    if fallback {
        *ridge_fallbacks += 1;
    }
    pinv.adjoint()
}

/// Splits every user's observations into per-branch virtual single-antenna
/// users through the estimated user-side subspace.
///
/// For each slot, `Y_t A (A^H A)^{-1}` separates the branches; branch `j`
/// stacked over slots is virtual user `(k, j)`. Virtual users are re-indexed
/// flat, user-major.
pub fn build_virtual_users(
    obs: &ObservationSet,
    ue_estimates: &[(Vec<usize>, CMat)],
) -> Result<VirtualUserSet> {
    if obs.obs.len() != ue_estimates.len() {
        return Err(Error::invalid(
            "build_virtual_users: one user-side estimate per user required",
        ));
    }
    let mut observations = Vec::new();
    let mut owner_map = Vec::new();
    let mut ue_steering = Vec::new();
    let mut supports = Vec::new();
    let mut ridge_fallbacks = 0u32;
    for (k, ((support, steering), slots)) in ue_estimates.iter().zip(&obs.obs).enumerate() {
        let j_hat = steering.ncols();
        if j_hat == 0 {
            return Err(Error::Estimation(format!(
                "user {k}: empty user-side support"
            )));
        }
        let w = separation_matrix(steering, &mut ridge_fallbacks);
        let tau = slots.len();
        let n_bs = slots.first().map(|s| s.nrows()).unwrap_or(0);
        let mut per_branch = vec![CMat::zeros(n_bs, tau); j_hat];
        for (t, y) in slots.iter().enumerate() {
            let sep = y * &w; // n_bs x j_hat
            for (j, branch) in per_branch.iter_mut().enumerate() {
                branch.set_column(t, &sep.column(j));
            }
        }
        for (j, branch_obs) in per_branch.into_iter().enumerate() {
            observations.push(branch_obs);
            owner_map.push((k, j));
        }
        ue_steering.push(steering.clone());
        supports.push(support.clone());
    }
    Ok(VirtualUserSet {
        observations,
        owner_map,
        ue_steering,
        supports,
        ridge_fallbacks,
    })
}

/// Estimates the BS-side angles of the common paths from the typical
/// virtual user's observation via spatial-DFT peak picking with grid-offset
/// refinement.
///
/// `refine_grid` offsets span plus/minus half a DFT bin around each peak;
/// the refined frequency is converted back through
/// `asin(wavelength * psi / spacing)`.
pub fn estimate_bs_angles(
    y1: &CMat,
    l_hat: usize,
    refine_grid: usize,
    spacing: f64,
    wavelength: f64,
) -> Result<BsAngles> {
    let n = y1.nrows();
    if l_hat < 1 {
        return Err(Error::invalid("estimate_bs_angles: l_hat must be >= 1"));
    }
    if l_hat > n {
        return Err(Error::invalid(format!(
            "estimate_bs_angles: l_hat {l_hat} exceeds array size {n}"
        )));
    }
    let atom = |psi: f64| -> CVec {
        CVec::from_fn(n, |i, _| {
            Cplx::from_polar(1.0, std::f64::consts::TAU * psi * i as f64)
        })
    };
    let energy_at = |psi: f64| -> f64 { atom(psi).ad_mul(y1).norm_squared() };

    let energies: Vec<f64> = (0..n).map(|b| energy_at(b as f64 / n as f64)).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        energies[b]
            .partial_cmp(&energies[a])
            .unwrap()
            .then(a.cmp(&b))
    });

    // Greedy peak acceptance, skipping bins cyclically adjacent to an
    // accepted one; relax adjacency if the pool runs dry.
    let cyc_dist = |a: usize, b: usize| -> usize {
        let d = a.abs_diff(b);
        d.min(n - d)
    };
    let mut peaks: Vec<usize> = Vec::with_capacity(l_hat);
    for &b in &order {
        if peaks.len() == l_hat {
            break;
        }
        if peaks.iter().all(|&p| cyc_dist(p, b) > 1) {
            peaks.push(b);
        }
    }
    for &b in &order {
        if peaks.len() == l_hat {
            break;
        }
        if !peaks.contains(&b) {
            peaks.push(b);
        }
    }

    // Half-bin refinement around each peak, then interference-aware
    // re-refinement: each path is re-searched on the residual left after
    // least-squares removal of the other paths' current steering columns,
    // which cancels the cross-path bias of the plain energy search.
    let step = 1.0 / (n as f64 * refine_grid.max(1) as f64);
    let half_range = refine_grid as i64 / 2;
    let refine = |center: f64, target: &CMat| -> f64 {
        let mut best_psi = center;
        let mut best_energy = f64::NEG_INFINITY;
        for r in -half_range..=half_range {
            let cand = center + r as f64 * step;
            let e = atom(cand).ad_mul(target).norm_squared();
            if e > best_energy {
                best_energy = e;
                best_psi = cand;
            }
        }
        best_psi
    };

    let mut psis: Vec<f64> = peaks
        .iter()
        .map(|&b| {
            let mut psi = b as f64 / n as f64;
            if psi >= 0.5 {
                psi -= 1.0;
            }
            refine(psi, y1)
        })
        .collect();
    let cancel_rounds = if l_hat > 1 { 2 } else { 0 };
    for _ in 0..cancel_rounds {
        for l in 0..l_hat {
            let others: Vec<usize> = (0..l_hat).filter(|&i| i != l).collect();
            let mut basis = CMat::zeros(n, others.len());
            for (c, &i) in others.iter().enumerate() {
                basis.set_column(c, &atom(psis[i]));
            }
            let (coeffs, _) = crate::linalg::ls_solve(&basis, y1, 0.0);
            let residual = y1 - basis * coeffs;
            psis[l] = refine(psis[l], &residual);
        }
    }

    let mut sines = Vec::with_capacity(l_hat);
    let mut angles = Vec::with_capacity(l_hat);
    let mut steering = CMat::zeros(n, l_hat);
    for (idx, &psi) in psis.iter().enumerate() {
        let sine = (psi * wavelength / spacing).clamp(-1.0, 1.0);
        sines.push(sine);
        angles.push(sine.asin());
        steering.set_column(idx, &steering_from_sine(n, spacing, wavelength, sine));
    }
    Ok(BsAngles {
        steering,
        sines,
        angles,
    })
}

/// `A_bs^H Y / (n_bs sqrt(p))`, the BS-side projection shared by both
/// stages.
pub fn project_onto_bs(y: &CMat, bs_steering: &CMat, power: f64) -> Result<CMat> {
    if power <= 0.0 {
        return Err(Error::invalid("project_onto_bs: power must be positive"));
    }
    let n = bs_steering.nrows() as f64;
    Ok(bs_steering.ad_mul(y) * Cplx::new(1.0 / (n * power.sqrt()), 0.0))
}

/// Projects the typical user's observation onto the estimated BS subspace
/// and splits it into per-path observations: row `l` of the projection,
/// transposed (unconjugated) into a column of length tau.
pub fn separate_paths(y1: &CMat, bs_steering: &CMat, power: f64) -> Result<Vec<CVec>> {
    let p = project_onto_bs(y1, bs_steering, power)?;
    Ok((0..p.nrows())
        .map(|l| CVec::from_fn(p.ncols(), |t, _| p[(l, t)]))
        .collect())
}

/// Index of the dominant separated path (largest squared norm, ties toward
/// the lowest index).
pub fn select_reference_path(paths: &[CVec]) -> Result<usize> {
    if paths.is_empty() {
        return Err(Error::invalid("select_reference_path: empty path list"));
    }
    let mut best = 0;
    let mut best_norm = paths[0].norm_squared();
    for (l, p) in paths.iter().enumerate().skip(1) {
        let n = p.norm_squared();
        if n > best_norm {
            best = l;
            best_norm = n;
        }
    }
    Ok(best)
}

/// Combines selected dictionary atoms into a dense vector.
pub fn dict_combine(dict: &PolarDictionary, sol: &SparseSolution) -> CVec {
    let m = dict.atoms.nrows();
    let mut h = CVec::zeros(m);
    for &g in &sol.support {
        let c = sol.coeffs[g];
        for i in 0..m {
            h[i] += c * dict.atoms[(i, g)];
        }
    }
    h
}

/// Recovered reference-path channel.
#[derive(Debug, Clone)]
pub struct ReferenceChannel {
    /// RIS-side channel of the typical virtual user.
    pub h1: CVec,
    /// Sparse polar coefficients.
    pub gamma: SparseSolution,
    /// Cascaded vector of the reference path,
    /// `Diag(conj(a_M(omega_r))) h1`.
    pub h_ris_r: CVec,
}

/// Recovers the typical user's RIS-side channel from the reference path by
/// compensated polar-domain sparse recovery.
///
/// The sensing matrix is `E^T Diag(conj(a_M(omega_r))) P`, so the planted
/// polar atom itself (not its conjugate) carries the sparse coefficient.
#[allow(clippy::too_many_arguments)]
pub fn recover_reference_channel(
    p_r: &CVec,
    pattern: &TrainingPattern,
    omega_r: f64,
    dict: &PolarDictionary,
    j1: usize,
    lookahead: usize,
    tol: f64,
    spacing: f64,
    wavelength: f64,
) -> Result<ReferenceChannel> {
    let m = dict.atoms.nrows();
    if pattern.slots.nrows() != m {
        return Err(Error::invalid(
            "recover_reference_channel: training rows must match dictionary rows",
        ));
    }
    if p_r.len() != pattern.tau {
        return Err(Error::invalid(
            "recover_reference_channel: observation length must match slot count",
        ));
    }
    let a_ref = steering_from_sine(m, spacing, wavelength, omega_r.sin());
    // D = E^T Diag(conj(a_ref)) P, built by modulating the dictionary rows.
    let mut modulated = dict.atoms.clone();
    for i in 0..m {
        let w = a_ref[i].conj();
        for g in 0..modulated.ncols() {
            modulated[(i, g)] *= w;
        }
    }
    let sensing = pattern.slots.transpose() * modulated;
    let gamma = laomp(&sensing, p_r, j1, lookahead, tol)?;
    let h1 = dict_combine(dict, &gamma);
    let h_ris_r = CVec::from_fn(m, |i, _| a_ref[i].conj() * h1[i]);
    Ok(ReferenceChannel { h1, gamma, h_ris_r })
}

/// Correlation target for the angle-offset search:
/// `z(ds) = E^T Diag(h_ris_r) conj(a_M(ds))` with `ds` a sine-domain offset.
fn offset_probe(
    pattern: &TrainingPattern,
    h_ris_r: &CVec,
    delta_sine: f64,
    spacing: f64,
    wavelength: f64,
) -> CVec {
    let m = h_ris_r.len();
    let a = steering_from_sine(m, spacing, wavelength, delta_sine);
    let modulated = CVec::from_fn(m, |i, _| h_ris_r[i] * a[i].conj());
    pattern.slots.transpose() * modulated
}

/// Estimates the angle offset and gain ratio of every non-reference path by
/// correlation maximization over a sine-domain grid on
/// `[-2 spacing / wavelength, +2 spacing / wavelength]` with shrinking local
/// refinement, then least squares for the gain.
///
/// The correlation is normalized by the probe norm, which makes the search
/// the exact joint least-squares criterion over (offset, gain); without the
/// normalization a non-orthogonal training pattern biases the argmax.
#[allow(clippy::too_many_arguments)]
pub fn estimate_path_offsets(
    paths: &[CVec],
    reference_index: usize,
    h_ris_r: &CVec,
    pattern: &TrainingPattern,
    grid_size: usize,
    refine_rounds: usize,
    spacing: f64,
    wavelength: f64,
) -> Result<Vec<Option<PathOffset>>> {
    if h_ris_r.norm() == 0.0 {
        return Err(Error::DegeneratePath(
            "reference cascaded vector is zero".into(),
        ));
    }
    if grid_size < 2 {
        return Err(Error::invalid("estimate_path_offsets: grid too small"));
    }
    let hi = 2.0 * spacing / wavelength;
    let lo = -hi;
    let coarse_step = (hi - lo) / grid_size as f64;
    let mut out = Vec::with_capacity(paths.len());
    for (l, p_l) in paths.iter().enumerate() {
        if l == reference_index {
            out.push(None);
            continue;
        }
        let score = |ds: f64| -> f64 {
            let z = offset_probe(pattern, h_ris_r, ds, spacing, wavelength);
            let zn = z.norm();
            if zn == 0.0 {
                return 0.0;
            }
            let ip: Cplx = z.iter().zip(p_l.iter()).map(|(z, p)| z.conj() * p).sum();
            ip.norm() / zn
        };
        let mut best_ds = lo;
        let mut best_score = f64::NEG_INFINITY;
        for i in 0..grid_size {
            let ds = lo + i as f64 * coarse_step;
            let s = score(ds);
            if s > best_score {
                best_score = s;
                best_ds = ds;
            }
        }
        let mut step = coarse_step;
        for _ in 0..refine_rounds {
            let fine = step / 8.0;
            let center = best_ds;
            for i in -8..=8 {
                let ds = center + i as f64 * fine;
                let s = score(ds);
                if s > best_score {
                    best_score = s;
                    best_ds = ds;
                }
            }
            step = fine;
        }
        let z = offset_probe(pattern, h_ris_r, best_ds, spacing, wavelength);
        let denom = z.norm_squared();
        if denom == 0.0 {
            return Err(Error::DegeneratePath(format!(
                "path {l}: zero probe at the selected offset"
            )));
        }
        let num: Cplx = z.iter().zip(p_l.iter()).map(|(z, p)| z.conj() * p).sum();
        out.push(Some(PathOffset {
            delta_sine: best_ds,
            eta: num / Cplx::new(denom, 0.0),
        }));
    }
    Ok(out)
}

/// Rebuilds the cascaded RIS-side matrix from the reference vector and the
/// per-path offsets: column `l` is `eta_l Diag(conj(a_M(delta_l))) h_ris_r`,
/// with the reference column untouched.
pub fn assemble_cascaded_ris(
    h_ris_r: &CVec,
    reference_index: usize,
    offsets: &[Option<PathOffset>],
    spacing: f64,
    wavelength: f64,
) -> CMat {
    let m = h_ris_r.len();
    let l_hat = offsets.len();
    let mut h_ris = CMat::zeros(m, l_hat);
    for l in 0..l_hat {
        match (l == reference_index, &offsets[l]) {
            (true, _) => h_ris.set_column(l, h_ris_r),
            (false, Some(off)) => {
                let a = steering_from_sine(m, spacing, wavelength, off.delta_sine);
                let col = CVec::from_fn(m, |i, _| off.eta * a[i].conj() * h_ris_r[i]);
                h_ris.set_column(l, &col);
            }
            (false, None) => {}
        }
    }
    h_ris
}

/// Structured common-operator initialization from the reference angle and
/// the per-path offsets: row `l` is
/// `eta_l conj(a_M(sin(omega_r) + delta_l))^T` (the reference row has unit
/// gain and zero offset).
///
/// Algebraically this equals the least-squares initialization whenever that
/// one is exact, but it stays full-rank and bounded for any slot count
/// because the rows are unit-modulus steering vectors by construction.
pub fn structured_operator(
    omega_r: f64,
    reference_index: usize,
    offsets: &[Option<PathOffset>],
    m: usize,
    spacing: f64,
    wavelength: f64,
) -> CMat {
    let base_sine = omega_r.sin();
    let l_hat = offsets.len();
    let mut s = CMat::zeros(l_hat, m);
    for l in 0..l_hat {
        let (gain, sine) = if l == reference_index {
            (Cplx::ONE, base_sine)
        } else {
            match &offsets[l] {
                Some(off) => (off.eta, base_sine + off.delta_sine),
                None => continue,
            }
        };
        let a = steering_from_sine(m, spacing, wavelength, sine);
        for i in 0..m {
            s[(l, i)] = gain * a[i].conj();
        }
    }
    s
}

/// `Diag(h) E` without materializing the diagonal.
pub fn diag_times(h: &CVec, e: &CMat) -> CMat {
    let mut x = e.clone();
    for i in 0..x.nrows() {
        let w = h[i];
        for t in 0..x.ncols() {
            x[(i, t)] *= w;
        }
    }
    x
}

/// Initializes the common operator from the typical user: least squares of
/// the projected observation against `Diag(h1) E`.
///
/// Returns the operator together with a flag set when the fit left a
/// non-negligible residual (rank-deficient data).
pub fn init_common_operator(
    y1: &CMat,
    bs_steering: &CMat,
    h1: &CVec,
    pattern: &TrainingPattern,
    power: f64,
) -> Result<(CMat, bool)> {
    if h1.norm() == 0.0 {
        return Err(Error::DegeneratePath(
            "typical-user channel estimate is zero".into(),
        ));
    }
    let z1 = project_onto_bs(y1, bs_steering, power)?;
    let x1 = diag_times(h1, &pattern.slots);
    let s0 = ridge_pinv_solve(&x1, &z1, 0.0)?;
    let residual = &z1 - &s0 * &x1;
    let underdetermined = residual.norm() > 1e-6 * z1.norm().max(f64::MIN_POSITIVE);
    Ok((s0, underdetermined))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{build_angular_dictionary, build_polar_dictionary};
    use crate::pilots::{generate_training, TrainingScheme};
    use crate::rng::stream;
    use approx::assert_relative_eq;

    const LAMBDA: f64 = 0.01;
    const HALF: f64 = 0.005;

    /// Y = sqrt(p) (sum_l alpha_l a_bs(l) a_ris(l)^H) Diag(h) E.
    fn typical_observation(
        n_bs: usize,
        bs_sines: &[f64],
        ris_sines: &[f64],
        gains: &[Cplx],
        h: &CVec,
        pattern: &TrainingPattern,
        power: f64,
    ) -> CMat {
        let m = h.len();
        let mut y = CMat::zeros(n_bs, pattern.tau);
        let x = diag_times(h, &pattern.slots);
        for ((&bs, &ris), &g) in bs_sines.iter().zip(ris_sines).zip(gains) {
            let a_bs = steering_from_sine(n_bs, HALF, LAMBDA, bs);
            let a_ris = steering_from_sine(m, HALF, LAMBDA, ris);
            let row = a_ris.adjoint() * &x; // 1 x tau
            y += (&a_bs * row) * g;
        }
        y * Cplx::new(power.sqrt(), 0.0)
    }

    #[test]
    fn aggregate_single_slot_is_adjoint() {
        let mut rng = stream(1, &[]);
        let y = CMat::from_fn(6, 3, |_, _| crate::channel::complex_gaussian(&mut rng, 1.0));
        let agg = aggregate_observations(&[y.clone()]).unwrap();
        assert_eq!(agg, y.adjoint());
    }

    #[test]
    fn aggregate_shapes_and_roundtrip() {
        let mut rng = stream(2, &[]);
        let slots: Vec<CMat> = (0..3)
            .map(|_| CMat::from_fn(8, 4, |_, _| crate::channel::complex_gaussian(&mut rng, 1.0)))
            .collect();
        let agg = aggregate_observations(&slots).unwrap();
        assert_eq!(agg.shape(), (4, 24));
        for (t, y) in slots.iter().enumerate() {
            let block = agg.view((0, t * 8), (4, 8)).clone_owned();
            assert_eq!(block, y.adjoint());
        }
    }

    #[test]
    fn aggregate_rejects_mismatched_slots() {
        let a = CMat::zeros(4, 2);
        let b = CMat::zeros(5, 2);
        assert!(aggregate_observations(&[a, b]).is_err());
    }

    #[test]
    fn user_support_single_path_on_grid() {
        let dict = build_angular_dictionary(4, 8, HALF, LAMBDA).unwrap();
        let planted = 5;
        let mut rng = stream(3, &[]);
        let coeff = CMat::from_fn(1, 20, |_, _| crate::channel::complex_gaussian(&mut rng, 1.0));
        let y_agg = dict.atoms.column(planted) * coeff;
        let (support, steering) = estimate_user_support(&y_agg, &dict, 1).unwrap();
        assert_eq!(support, vec![planted]);
        assert_eq!(steering.ncols(), 1);
    }

    #[test]
    fn user_support_two_separated_paths() {
        let dict = build_angular_dictionary(8, 16, HALF, LAMBDA).unwrap();
        let planted = [3usize, 11];
        let mut rng = stream(4, &[]);
        let coeff = CMat::from_fn(2, 30, |_, _| crate::channel::complex_gaussian(&mut rng, 1.0));
        let y_agg = dict.atoms.select_columns(planted.iter()) * coeff;
        let (mut support, _) = estimate_user_support(&y_agg, &dict, 2).unwrap();
        support.sort_unstable();
        assert_eq!(support, planted.to_vec());
    }

    #[test]
    fn user_support_invariant_to_slot_permutation() {
        let dict = build_angular_dictionary(8, 16, HALF, LAMBDA).unwrap();
        let mut rng = stream(5, &[]);
        let coeff = CMat::from_fn(2, 12, |_, _| crate::channel::complex_gaussian(&mut rng, 1.0));
        let y = dict.atoms.select_columns([2usize, 9].iter()) * coeff;
        let perm: Vec<usize> = (0..12).rev().collect();
        let y_perm = y.select_columns(perm.iter());
        let (s1, _) = estimate_user_support(&y, &dict, 2).unwrap();
        let (s2, _) = estimate_user_support(&y_perm, &dict, 2).unwrap();
        assert_eq!(s1, s2);
    }

    #[test]
    fn single_branch_virtual_user_is_matched_filter() {
        // J = 1 with exact steering: the separation reduces to Y a / n_ue.
        let n_ue = 4;
        let a = steering_from_sine(n_ue, HALF, LAMBDA, 0.25);
        let mut rng = stream(6, &[]);
        let slots: Vec<CMat> = (0..3)
            .map(|_| {
                CMat::from_fn(6, n_ue, |_, _| crate::channel::complex_gaussian(&mut rng, 1.0))
            })
            .collect();
        let obs = ObservationSet {
            obs: vec![slots.clone()],
            noise_var: 0.0,
            power: 1.0,
        };
        let steering = CMat::from_column_slice(n_ue, 1, a.as_slice());
        let vus = build_virtual_users(&obs, &[(vec![0], steering)]).unwrap();
        assert_eq!(vus.len(), 1);
        for (t, y) in slots.iter().enumerate() {
            let expect = y * &a / Cplx::new(n_ue as f64, 0.0);
            let got = vus.observations[0].column(t).clone_owned();
            assert!((got - expect).norm() < 1e-10);
        }
    }

    #[test]
    fn orthogonal_branches_separate_exactly() {
        // Two user-side angles on orthogonal grid points: each virtual user
        // recovers its own branch signal exactly.
        let n_ue = 4;
        let n_bs = 6;
        let tau = 5;
        let a1 = steering_from_sine(n_ue, HALF, LAMBDA, 0.0);
        let a2 = steering_from_sine(n_ue, HALF, LAMBDA, 0.5);
        let mut rng = stream(7, &[]);
        let b1: Vec<CMat> = (0..tau)
            .map(|_| {
                CMat::from_fn(n_bs, 1, |_, _| crate::channel::complex_gaussian(&mut rng, 1.0))
            })
            .collect();
        let b2: Vec<CMat> = (0..tau)
            .map(|_| {
                CMat::from_fn(n_bs, 1, |_, _| crate::channel::complex_gaussian(&mut rng, 1.0))
            })
            .collect();
        let slots: Vec<CMat> = (0..tau)
            .map(|t| &b1[t] * a1.adjoint() + &b2[t] * a2.adjoint())
            .collect();
        let obs = ObservationSet {
            obs: vec![slots],
            noise_var: 0.0,
            power: 1.0,
        };
        let mut steering = CMat::zeros(n_ue, 2);
        steering.set_column(0, &a1);
        steering.set_column(1, &a2);
        let vus = build_virtual_users(&obs, &[(vec![0, 1], steering)]).unwrap();
        assert_eq!(vus.len(), 2);
        assert_eq!(vus.owner_map, vec![(0, 0), (0, 1)]);
        for t in 0..tau {
            assert!((vus.observations[0].column(t) - b1[t].column(0)).norm() < 1e-10);
            assert!((vus.observations[1].column(t) - b2[t].column(0)).norm() < 1e-10);
        }
    }

    #[test]
    fn bs_angles_exact_on_bin() {
        let n = 16;
        let bin = 3;
        let psi = bin as f64 / n as f64;
        let sine = psi * LAMBDA / HALF;
        let mut rng = stream(8, &[]);
        let coeff = CMat::from_fn(1, 10, |_, _| crate::channel::complex_gaussian(&mut rng, 1.0));
        let y = steering_from_sine(n, HALF, LAMBDA, sine) * coeff;
        let est = estimate_bs_angles(&y, 1, 64, HALF, LAMBDA).unwrap();
        assert_relative_eq!(est.sines[0], sine, epsilon = 1e-12);
        assert_relative_eq!(est.angles[0], sine.asin(), epsilon = 1e-12);
    }

    #[test]
    fn bs_angles_two_paths_two_bins() {
        // Cross-path interference biases per-peak refinement by an amount
        // proportional to the pilot rows' correlation, so accuracy is
        // asserted to one refined grid step, and exactly for orthogonal
        // pilot rows.
        let n = 16;
        let refine = 64;
        let s1 = 2.0 * 2.0 / n as f64; // bin 2
        let s2 = -2.0 * 5.0 / n as f64; // bin -5
        let step = (2.0 / n as f64) / refine as f64;
        let mut rng = stream(9, &[]);
        let tau = 48;
        let c1 = CMat::from_fn(1, tau, |_, _| crate::channel::complex_gaussian(&mut rng, 1.0));
        let c2 = CMat::from_fn(1, tau, |_, _| crate::channel::complex_gaussian(&mut rng, 1.0));
        let y = steering_from_sine(n, HALF, LAMBDA, s1) * c1
            + steering_from_sine(n, HALF, LAMBDA, s2) * c2;
        let est = estimate_bs_angles(&y, 2, refine, HALF, LAMBDA).unwrap();
        let mut got = est.sines.clone();
        got.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut expect = vec![s1, s2];
        expect.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (g, e) in got.iter().zip(&expect) {
            assert!((g - e).abs() <= step, "got {g}, want {e}");
        }

        // Orthogonal pilot rows kill the cross term entirely.
        let d1 = CMat::from_fn(1, n, |_, t| {
            Cplx::from_polar(1.0, std::f64::consts::TAU * t as f64 * 3.0 / n as f64)
        });
        let d2 = CMat::from_fn(1, n, |_, t| {
            Cplx::from_polar(1.0, std::f64::consts::TAU * t as f64 * 9.0 / n as f64)
        });
        let y2 = steering_from_sine(n, HALF, LAMBDA, s1) * d1
            + steering_from_sine(n, HALF, LAMBDA, s2) * d2;
        let est2 = estimate_bs_angles(&y2, 2, refine, HALF, LAMBDA).unwrap();
        let mut got2 = est2.sines.clone();
        got2.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (g, e) in got2.iter().zip(&expect) {
            assert_relative_eq!(*g, *e, epsilon = 1e-9);
        }
    }

    #[test]
    fn bs_angle_off_bin_refinement_accuracy() {
        let n = 16;
        let refine = 64;
        // Sine bin width is 2/n; the refined error must stay below
        // bin_width / refine.
        let bin_width = 2.0 / n as f64;
        for shift in [0.17_f64, -0.31, 0.42] {
            let sine = 2.0 * 3.0 / n as f64 + shift * bin_width;
            let mut rng = stream(10, &[shift.to_bits()]);
            let coeff =
                CMat::from_fn(1, 8, |_, _| crate::channel::complex_gaussian(&mut rng, 1.0));
            let y = steering_from_sine(n, HALF, LAMBDA, sine) * coeff;
            let est = estimate_bs_angles(&y, 1, refine, HALF, LAMBDA).unwrap();
            let err = (est.sines[0] - sine).abs();
            assert!(err < bin_width / refine as f64, "shift {shift}: err {err}");
        }
    }

    #[test]
    fn bs_angles_reject_excess_paths() {
        let y = CMat::zeros(8, 4);
        assert!(estimate_bs_angles(&y, 9, 16, HALF, LAMBDA).is_err());
    }

    #[test]
    fn separate_paths_single_path_exact() {
        // One on-bin path: p_1 = alpha E^T Diag(conj(a_ris)) h exactly.
        let n_bs = 16;
        let m = 8;
        let mut rng = stream(11, &[]);
        let pattern = generate_training(m, 6, TrainingScheme::RandomPhase, &mut rng).unwrap();
        let h = CVec::from_fn(m, |_, _| crate::channel::complex_gaussian(&mut rng, 1.0));
        let alpha = Cplx::new(0.7, -0.4);
        let bs_sine = 2.0 * 4.0 / n_bs as f64;
        let ris_sine = 0.3;
        let y =
            typical_observation(n_bs, &[bs_sine], &[ris_sine], &[alpha], &h, &pattern, 4.0);
        let a_bs = CMat::from_column_slice(
            n_bs,
            1,
            steering_from_sine(n_bs, HALF, LAMBDA, bs_sine).as_slice(),
        );
        let paths = separate_paths(&y, &a_bs, 4.0).unwrap();
        assert_eq!(paths.len(), 1);
        let a_ris = steering_from_sine(m, HALF, LAMBDA, ris_sine);
        let modulated = CVec::from_fn(m, |i, _| a_ris[i].conj() * h[i]);
        let expect = pattern.slots.transpose() * modulated * alpha;
        assert!((&paths[0] - &expect).norm() / expect.norm() < 1e-10);
    }

    #[test]
    fn separate_paths_orthogonal_bins_have_no_leakage() {
        let n_bs = 16;
        let m = 8;
        let mut rng = stream(12, &[]);
        let pattern = generate_training(m, 5, TrainingScheme::RandomPhase, &mut rng).unwrap();
        let h = CVec::from_fn(m, |_, _| crate::channel::complex_gaussian(&mut rng, 1.0));
        let s1 = 2.0 * 1.0 / n_bs as f64;
        let s2 = 2.0 * 6.0 / n_bs as f64;
        // Only path 1 transmits; the second steering column must capture
        // essentially nothing.
        let y = typical_observation(n_bs, &[s1], &[0.2], &[Cplx::ONE], &h, &pattern, 1.0);
        let mut a_bs = CMat::zeros(n_bs, 2);
        a_bs.set_column(0, &steering_from_sine(n_bs, HALF, LAMBDA, s1));
        a_bs.set_column(1, &steering_from_sine(n_bs, HALF, LAMBDA, s2));
        let paths = separate_paths(&y, &a_bs, 1.0).unwrap();
        let leak = paths[1].norm_squared() / paths[0].norm_squared();
        assert!(leak < 1e-20, "cross-path leakage {leak}");
    }

    #[test]
    fn separated_energy_invariant_under_slot_rotation() {
        // A unitary recombination of slots leaves the Frobenius norm of the
        // stacked projection unchanged.
        let n_bs = 8;
        let mut rng = stream(13, &[]);
        let y = CMat::from_fn(n_bs, 4, |_, _| crate::channel::complex_gaussian(&mut rng, 1.0));
        let a_bs = CMat::from_fn(n_bs, 2, |_, _| crate::channel::complex_gaussian(&mut rng, 1.0));
        let g = CMat::from_fn(4, 4, |_, _| crate::channel::complex_gaussian(&mut rng, 1.0));
        let qr = g.qr();
        let u = qr.q();
        let p = separate_paths(&y, &a_bs, 1.0).unwrap();
        let p_rot = separate_paths(&(y * &u), &a_bs, 1.0).unwrap();
        let f: f64 = p.iter().map(|v| v.norm_squared()).sum();
        let f_rot: f64 = p_rot.iter().map(|v| v.norm_squared()).sum();
        assert_relative_eq!(f, f_rot, epsilon = 1e-10 * f.max(1.0));
    }

    #[test]
    fn reference_selection_rules() {
        let mk = |n: f64| CVec::from_element(1, Cplx::new(n, 0.0));
        assert_eq!(
            select_reference_path(&[mk(1.0), mk(2.0), mk(0.2)]).unwrap(),
            1
        );
        assert_eq!(
            select_reference_path(&[mk(1.0), mk(1.0), mk(1.0)]).unwrap(),
            0
        );
        let paths = vec![mk(0.5), mk(1.5), mk(1.0)];
        let scaled: Vec<CVec> = paths.iter().map(|p| p * Cplx::new(0.0, -3.0)).collect();
        assert_eq!(
            select_reference_path(&paths).unwrap(),
            select_reference_path(&scaled).unwrap()
        );
    }

    #[test]
    fn reference_channel_recovers_planted_atom() {
        let m = 16;
        let dict = build_polar_dictionary(m, HALF, LAMBDA, 32, 1.2, 0.05).unwrap();
        assert!(dict.rings_per_angle() > 1);
        let planted_col = dict.column_index(9, 1);
        let mut rng = stream(14, &[]);
        let pattern = generate_training(m, m, TrainingScheme::DftColumns, &mut rng).unwrap();
        let beta = Cplx::new(0.8, 0.5);
        let h = CVec::from_column_slice(dict.atoms.column(planted_col).as_slice()) * beta;
        let omega_r = 0.42_f64;
        let alpha_r = Cplx::new(-0.3, 1.1);
        // p_r = alpha E^T Diag(conj(a(omega_r))) h.
        let a_ref = steering_from_sine(m, HALF, LAMBDA, omega_r.sin());
        let modulated = CVec::from_fn(m, |i, _| a_ref[i].conj() * h[i]);
        let p_r = pattern.slots.transpose() * modulated * alpha_r;

        let rc = recover_reference_channel(&p_r, &pattern, omega_r, &dict, 1, 4, 1e-6, HALF, LAMBDA)
            .unwrap();
        assert_eq!(rc.gamma.support, vec![planted_col]);
        // h1 is proportional to the planted atom (gauge alpha_r beta).
        let expect =
            CVec::from_column_slice(dict.atoms.column(planted_col).as_slice()) * (alpha_r * beta);
        assert!((&rc.h1 - &expect).norm() / expect.norm() < 1e-8);
    }

    #[test]
    fn reference_compensation_is_identity_at_broadside() {
        let m = 8;
        let dict = build_polar_dictionary(m, HALF, LAMBDA, 16, 1.2, f64::INFINITY).unwrap();
        let mut rng = stream(15, &[]);
        let pattern = generate_training(m, m, TrainingScheme::RandomPhase, &mut rng).unwrap();
        // omega_r = 0: a_M(0) is all ones, so the sensing matrix is E^T P.
        let sensing = pattern.slots.transpose() * &dict.atoms;
        let h = CVec::from_column_slice(dict.atoms.column(3).as_slice());
        let mut g = CVec::zeros(dict.atoms.ncols());
        g[3] = Cplx::ONE;
        let p_r = &sensing * g;
        let rc = recover_reference_channel(&p_r, &pattern, 0.0, &dict, 1, 4, 1e-6, HALF, LAMBDA)
            .unwrap();
        assert_eq!(rc.gamma.support, vec![3]);
        assert!((&rc.h1 - &h).norm() < 1e-8);
        assert_eq!(rc.gamma.support.len(), 1);
    }

    #[test]
    fn path_offsets_self_consistency_at_zero() {
        let m = 16;
        let mut rng = stream(16, &[]);
        let pattern = generate_training(m, 24, TrainingScheme::RandomPhase, &mut rng).unwrap();
        let h_ris_r = CVec::from_fn(m, |_, _| crate::channel::complex_gaussian(&mut rng, 1.0));
        // Plant delta = 0, eta = 1: the non-reference path equals the probe.
        let p_l = offset_probe(&pattern, &h_ris_r, 0.0, HALF, LAMBDA);
        let paths = vec![p_l.clone(), p_l];
        let offs =
            estimate_path_offsets(&paths, 0, &h_ris_r, &pattern, 1024, 3, HALF, LAMBDA).unwrap();
        assert!(offs[0].is_none());
        let off = offs[1].unwrap();
        assert!(off.delta_sine.abs() < 2.0 / 1024.0 / 64.0);
        assert!((off.eta - Cplx::ONE).norm() < 1e-6);
    }

    #[test]
    fn path_offsets_recover_planted_shift_and_gain() {
        let m = 16;
        let mut rng = stream(17, &[]);
        let pattern = generate_training(m, 32, TrainingScheme::RandomPhase, &mut rng).unwrap();
        let h_ris_r = CVec::from_fn(m, |_, _| crate::channel::complex_gaussian(&mut rng, 1.0));
        // Plant an offset exactly on the coarse grid.
        let step = 2.0 / 1024.0;
        let planted = 37.0 * step - 1.0;
        let eta = Cplx::new(0.6, -1.2);
        let p_l = offset_probe(&pattern, &h_ris_r, planted, HALF, LAMBDA) * eta;
        let paths = vec![offset_probe(&pattern, &h_ris_r, 0.0, HALF, LAMBDA), p_l];
        let offs =
            estimate_path_offsets(&paths, 0, &h_ris_r, &pattern, 1024, 3, HALF, LAMBDA).unwrap();
        let off = offs[1].unwrap();
        assert!((off.delta_sine - planted).abs() < 1e-9);
        assert!((off.eta - eta).norm() / eta.norm() < 1e-6);
    }

    #[test]
    fn path_offset_gain_scales_with_observation() {
        let m = 8;
        let mut rng = stream(18, &[]);
        let pattern = generate_training(m, 16, TrainingScheme::RandomPhase, &mut rng).unwrap();
        let h_ris_r = CVec::from_fn(m, |_, _| crate::channel::complex_gaussian(&mut rng, 1.0));
        let p_l = offset_probe(&pattern, &h_ris_r, 0.125, HALF, LAMBDA);
        let c = Cplx::new(0.0, 2.5);
        let base = vec![p_l.clone(), p_l.clone()];
        let scaled = vec![base[0].clone(), &p_l * c];
        let o1 =
            estimate_path_offsets(&base, 0, &h_ris_r, &pattern, 256, 2, HALF, LAMBDA).unwrap()[1]
                .unwrap();
        let o2 = estimate_path_offsets(&scaled, 0, &h_ris_r, &pattern, 256, 2, HALF, LAMBDA)
            .unwrap()[1]
            .unwrap();
        assert_relative_eq!(o1.delta_sine, o2.delta_sine);
        assert!((o2.eta - o1.eta * c).norm() < 1e-9 * o2.eta.norm());
    }

    #[test]
    fn common_operator_reproduces_projection() {
        // Exact BS steering, exact h1, full-rank E with tau = m: the fitted
        // operator reproduces Z exactly, and scaling h1 by c scales the
        // operator by 1/c with an invariant product.
        let n_bs = 16;
        let m = 8;
        let mut rng = stream(19, &[]);
        let pattern = generate_training(m, m, TrainingScheme::RandomPhase, &mut rng).unwrap();
        let h = CVec::from_fn(m, |_, _| crate::channel::complex_gaussian(&mut rng, 1.0));
        let bs_sines = [2.0 * 2.0 / n_bs as f64, -2.0 * 5.0 / n_bs as f64];
        let ris_sines = [0.3, -0.55];
        let gains = [Cplx::new(0.9, 0.1), Cplx::new(-0.2, 0.8)];
        let y = typical_observation(n_bs, &bs_sines, &ris_sines, &gains, &h, &pattern, 1.0);
        let mut a_bs = CMat::zeros(n_bs, 2);
        a_bs.set_column(0, &steering_from_sine(n_bs, HALF, LAMBDA, bs_sines[0]));
        a_bs.set_column(1, &steering_from_sine(n_bs, HALF, LAMBDA, bs_sines[1]));

        let (s0, _) = init_common_operator(&y, &a_bs, &h, &pattern, 1.0).unwrap();
        let z1 = project_onto_bs(&y, &a_bs, 1.0).unwrap();
        let x1 = diag_times(&h, &pattern.slots);
        assert!((&z1 - &s0 * &x1).norm() / z1.norm() < 1e-8);

        let c = Cplx::new(0.0, -2.0);
        let h_scaled = &h * c;
        let (s0_scaled, _) = init_common_operator(&y, &a_bs, &h_scaled, &pattern, 1.0).unwrap();
        assert!((&s0_scaled * c - &s0).norm() / s0.norm() < 1e-8);
        let prod_a = &s0 * diag_times(&h, &pattern.slots);
        let prod_b = &s0_scaled * diag_times(&h_scaled, &pattern.slots);
        assert!((prod_a - &prod_b).norm() / prod_b.norm() < 1e-8);
    }
}
