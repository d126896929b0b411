//! End-to-end estimation of one channel realization: Stage I from the
//! typical virtual user, then the Stage II refinement across all virtual
//! users, with operation counting.

use crate::channel::{
    build_angular_dictionary, build_polar_dictionary, ChannelSet, DictionarySet, SystemConfig,
};
use crate::error::{Error, Result};
use crate::metrics::{NmseMode, OpCounters};
use crate::pilots::{ObservationSet, TrainingPattern, TrainingScheme};
use crate::stage1::{
    aggregate_observations, assemble_cascaded_ris, build_virtual_users, estimate_bs_angles,
    estimate_path_offsets, estimate_user_support, init_common_operator, project_onto_bs,
    recover_reference_channel, select_reference_path, separate_paths, structured_operator,
    Stage1Result, VirtualUserSet,
};
use crate::stage2::{finalize_estimates, run_als, AlsOptions, AlsState, FinalEstimates};
use crate::CMat;

/// Which estimator runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VariantKind {
    /// Stage I plus the initial coefficient pass; no refinement iterations.
    ProposedInitOnly,
    /// The full two-stage estimator.
    ProposedAls,
    /// The identical pipeline with a far-field-only dictionary over the RIS
    /// aperture (no distance rings).
    FarFieldBaseline,
}

impl VariantKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            VariantKind::ProposedInitOnly => "proposed-init-only",
            VariantKind::ProposedAls => "proposed-als",
            VariantKind::FarFieldBaseline => "far-field-baseline",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "proposed-init-only" => Ok(VariantKind::ProposedInitOnly),
            "proposed-als" => Ok(VariantKind::ProposedAls),
            "far-field-baseline" => Ok(VariantKind::FarFieldBaseline),
            other => Err(Error::Config {
                key: "variant".into(),
                reason: format!("unknown estimator variant `{other}`"),
            }),
        }
    }
}

/// Estimator-side knobs: dictionary sizes, solver depths, grid resolutions.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorConfig {
    /// User-side dictionary size; 0 selects `2 * n_ue`.
    pub d_user: usize,
    /// Polar dictionary angle count; 0 selects `2 * m_ris`.
    pub polar_angles: usize,
    /// Distance-ring oversampling control.
    pub beta_delta: f64,
    /// Smallest distance ring kept in the polar dictionary.
    pub polar_min_distance: f64,
    /// Look-ahead depth of the sparse solver.
    pub lookahead: usize,
    /// Refinement iterations of the proposed-als variant.
    pub i_als: usize,
    /// Early-stop threshold on the relative objective decrease.
    pub als_rel_tol: f64,
    /// Offsets per DFT bin in the BS angle refinement.
    pub refine_grid: usize,
    /// Coarse grid size of the path-offset search.
    pub offset_grid: usize,
    /// Shrink-by-8 refinement rounds of the path-offset search.
    pub offset_refine_rounds: usize,
    /// Sparsity budget per virtual user.
    pub jq_sparsity: usize,
    /// Offer previous supports to the sparse updates.
    pub warm_start: bool,
    /// Relative residual tolerance of the sparse solver (0 disables; set
    /// around 1e-6 for noiseless validation).
    pub solver_tol: f64,
    /// Relative eigenvalue cutoff of the operator updates (0 keeps exact
    /// least squares).
    pub operator_cutoff: f64,
    /// Initialize the common operator from the estimated path structure
    /// (per-path angles and gains) instead of the typical-user least
    /// squares; bounded for any slot count.
    pub structured_init: bool,
    pub training: TrainingScheme,
    pub nmse_mode: NmseMode,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            d_user: 0,
            polar_angles: 0,
            beta_delta: 1.2,
            polar_min_distance: 1.0,
            lookahead: 4,
            i_als: 3,
            als_rel_tol: 1e-4,
            refine_grid: 64,
            offset_grid: 1024,
            offset_refine_rounds: 3,
            jq_sparsity: 1,
            warm_start: true,
            solver_tol: 0.0,
            operator_cutoff: 0.0,
            structured_init: false,
            training: TrainingScheme::RandomPhase,
            nmse_mode: NmseMode::PerUserSum,
        }
    }
}

impl EstimatorConfig {
    pub fn d_user_for(&self, cfg: &SystemConfig) -> usize {
        if self.d_user == 0 {
            2 * cfg.n_ue
        } else {
            self.d_user
        }
    }

    pub fn polar_angles_for(&self, cfg: &SystemConfig) -> usize {
        if self.polar_angles == 0 {
            2 * cfg.m_ris
        } else {
            self.polar_angles
        }
    }
}

/// Deployment-side information available to the estimator: the true BS-RIS
/// path geometry (BS positions are fixed, so the reference path's RIS-side
/// angle is known a priori). The estimator matches its detected reference
/// path to the nearest true BS-side sine.
#[derive(Debug, Clone)]
pub struct SideInfo {
    /// Per-true-path (BS-side sine, RIS-side angle in radians).
    pub bs_ris_geometry: Vec<(f64, f64)>,
}

impl SideInfo {
    pub fn from_channels(channels: &ChannelSet) -> Self {
        SideInfo {
            bs_ris_geometry: channels
                .paths_br
                .iter()
                .map(|p| (p.bs_angle.sin(), p.ris_angle))
                .collect(),
        }
    }

    /// RIS-side angle of the true path whose BS-side sine is closest.
    fn ris_angle_for(&self, bs_sine: f64) -> Result<f64> {
        self.bs_ris_geometry
            .iter()
            .min_by(|a, b| {
                (a.0 - bs_sine)
                    .abs()
                    .partial_cmp(&(b.0 - bs_sine).abs())
                    .unwrap()
            })
            .map(|&(_, omega)| omega)
            .ok_or_else(|| Error::Estimation("no BS-RIS geometry available".into()))
    }
}

/// Builds the estimation dictionaries for a variant.
pub fn build_dictionaries(
    cfg: &SystemConfig,
    est: &EstimatorConfig,
    variant: VariantKind,
) -> Result<DictionarySet> {
    let lam = cfg.wavelength();
    let min_distance = match variant {
        VariantKind::FarFieldBaseline => f64::INFINITY,
        _ => est.polar_min_distance,
    };
    Ok(DictionarySet {
        user: build_angular_dictionary(cfg.n_ue, est.d_user_for(cfg), cfg.spacing_ue, lam)?,
        polar: build_polar_dictionary(
            cfg.m_ris,
            cfg.spacing_ris,
            lam,
            est.polar_angles_for(cfg),
            est.beta_delta,
            min_distance,
        )?,
    })
}

/// Everything one estimation run produces.
#[derive(Debug, Clone)]
pub struct TrialEstimate {
    pub estimates: FinalEstimates,
    pub stage1: Stage1Result,
    pub als: AlsState,
    pub virtual_users: VirtualUserSet,
    pub counters: OpCounters,
}

/// Runs the full estimator on one set of observations.
///
/// `patterns[k]` must be the training pattern user `k` transmitted under;
/// `i_als_override` forces the refinement depth (used by the init-only
/// variant and iteration sweeps).
pub fn estimate_trial(
    cfg: &SystemConfig,
    obs: &ObservationSet,
    patterns: &[TrainingPattern],
    dicts: &DictionarySet,
    side: &SideInfo,
    est: &EstimatorConfig,
    i_als_override: Option<usize>,
) -> Result<TrialEstimate> {
    let lam = cfg.wavelength();
    let mut init_sparse_calls = 0usize;

    // User-side supports and virtual users.
    let mut ue_estimates = Vec::with_capacity(cfg.n_users);
    for k in 0..cfg.n_users {
        let agg = aggregate_observations(&obs.obs[k])?;
        let pair = estimate_user_support(&agg, &dicts.user, cfg.n_ue_paths[k])?;
        init_sparse_calls += 1;
        ue_estimates.push(pair);
    }
    let virtual_users = build_virtual_users(obs, &ue_estimates)?;
    let mut ridge_fallbacks = virtual_users.ridge_fallbacks;

    // Typical virtual user: first branch of the first user.
    let y1 = &virtual_users.observations[0];

    // BS-side angles and per-path observations.
    let bs = estimate_bs_angles(y1, cfg.n_bs_paths, est.refine_grid, cfg.spacing_bs, lam)?;
    let separated = separate_paths(y1, &bs.steering, cfg.tx_power)?;
    let reference_index = select_reference_path(&separated)?;
    let omega_r = side.ris_angle_for(bs.sines[reference_index])?;

    // Reference-path polar recovery.
    let rc = recover_reference_channel(
        &separated[reference_index],
        &patterns[0],
        omega_r,
        &dicts.polar,
        est.jq_sparsity,
        est.lookahead,
        est.solver_tol,
        cfg.spacing_ris,
        lam,
    )?;
    init_sparse_calls += 1;
    if rc.h1.norm() == 0.0 {
        return Err(Error::Estimation(
            "reference-path recovery returned a zero channel".into(),
        ));
    }

    // Remaining paths by angle-gain scaling.
    let path_offsets = if separated.len() > 1 {
        estimate_path_offsets(
            &separated,
            reference_index,
            &rc.h_ris_r,
            &patterns[0],
            est.offset_grid,
            est.offset_refine_rounds,
            cfg.spacing_ris,
            lam,
        )?
    } else {
        vec![None]
    };
    let cascaded_ris = assemble_cascaded_ris(
        &rc.h_ris_r,
        reference_index,
        &path_offsets,
        cfg.spacing_ris,
        lam,
    );
    let initial_cascade = &bs.steering * cascaded_ris.transpose();

    // Common-operator initialization.
    let s0 = if est.structured_init {
        structured_operator(
            omega_r,
            reference_index,
            &path_offsets,
            cfg.m_ris,
            cfg.spacing_ris,
            lam,
        )
    } else {
        let (s0, underdetermined) =
            init_common_operator(y1, &bs.steering, &rc.h1, &patterns[0], cfg.tx_power)?;
        if underdetermined {
            ridge_fallbacks += 1;
        }
        s0
    };

    let stage1 = Stage1Result {
        bs,
        separated,
        reference_index,
        ref_channel: rc.h1.clone(),
        ref_gamma: rc.gamma.clone(),
        cascaded_ris,
        path_offsets,
        initial_operator: s0.clone(),
        initial_cascade,
        ridge_fallbacks,
    };

    // Stage II over all virtual users.
    let patterns_per_q: Vec<&TrainingPattern> = virtual_users
        .owner_map
        .iter()
        .map(|&(k, _)| &patterns[k])
        .collect();
    let z_list: Vec<CMat> = virtual_users
        .observations
        .iter()
        .map(|y| project_onto_bs(y, &stage1.bs.steering, cfg.tx_power))
        .collect::<Result<_>>()?;
    let k_v = virtual_users.len();
    let als_opts = AlsOptions {
        max_iters: i_als_override.unwrap_or(est.i_als),
        rel_tol: est.als_rel_tol,
        sparsity: vec![est.jq_sparsity; k_v],
        lookahead: est.lookahead,
        solver_tol: est.solver_tol,
        warm_start: est.warm_start,
        freeze_supports: false,
        operator_cutoff: est.operator_cutoff,
    };
    let als = run_als(&z_list, &s0, &dicts.polar, &patterns_per_q, &als_opts)?;
    let estimates = finalize_estimates(&als, &stage1.bs.steering, &virtual_users)?;

    let counters = OpCounters {
        init_sparse_calls: init_sparse_calls + als.init_sparse_solves,
        als_sparse_calls: als.sparse_solves,
        als_ls_updates: als.ls_updates,
        i_als: als.iteration,
        k_v,
    };
    Ok(TrialEstimate {
        estimates,
        stage1,
        als,
        virtual_users,
        counters,
    })
}
