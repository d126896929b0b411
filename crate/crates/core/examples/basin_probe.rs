//! Watches supports and scales across refinement iterations on one trial.

use riscade_core::channel::{sample_scenario, SamplingMode};
use riscade_core::estimator::{build_dictionaries, SideInfo, VariantKind};
use riscade_core::harness::build_preset;
use riscade_core::metrics::{nmse, NmseMode};
use riscade_core::pilots::{generate_training, noise_var_for_snr_db, synthesize_observations};
use riscade_core::rng::stream;
use riscade_core::stage1 as s1;
use riscade_core::stage2 as s2;
use riscade_core::CMat;

fn main() {
    let spec = build_preset("fig2-desk").unwrap();
    let mut cfg = spec.base.clone();
    cfg.n_ue_paths = vec![1; cfg.n_users];
    cfg.noise_var = noise_var_for_snr_db(&cfg, std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(10.0));
    let mut est = spec.estimator.clone();
    est.jq_sparsity = 1;
    let dicts = build_dictionaries(&cfg, &est, VariantKind::ProposedAls).unwrap();

    let mut rng = stream(cfg.seed, &[0, 1]);
    let channels = sample_scenario(&cfg, SamplingMode::OnGrid, Some(&dicts), &mut rng).unwrap();
    let patterns: Vec<_> = (0..cfg.n_users)
        .map(|k| {
            let tau = if k == 0 { spec.tau_typical } else { spec.tau_other };
            generate_training(cfg.m_ris, tau, est.training, &mut rng).unwrap()
        })
        .collect();
    let obs = synthesize_observations(&channels, &patterns, cfg.tx_power, cfg.noise_var, &mut rng).unwrap();
    let _side = SideInfo::from_channels(&channels);

    // planted polar columns
    for (k, paths) in channels.paths_ru.iter().enumerate() {
        for p in paths {
            let s = p.ris_angle.sin();
            let gi = dicts.polar.angle_sines.iter().position(|g| (g - s).abs() < 1e-12).unwrap();
            let ri = dicts.polar.ring_radii.iter().position(|r| (r - p.distance).abs() < 1e-9).map(|r| r + 1).unwrap_or(0);
            println!("user {k} planted col {}", dicts.polar.column_index(gi, ri));
        }
    }

    // front end
    let mut ue_estimates = Vec::new();
    for k in 0..cfg.n_users {
        let agg = s1::aggregate_observations(&obs.obs[k]).unwrap();
        ue_estimates.push(s1::estimate_user_support(&agg, &dicts.user, cfg.n_ue_paths[k]).unwrap());
    }
    let vus = s1::build_virtual_users(&obs, &ue_estimates).unwrap();
    let y1 = &vus.observations[0];
    let bs = s1::estimate_bs_angles(y1, cfg.n_bs_paths, est.refine_grid, cfg.spacing_bs, cfg.wavelength()).unwrap();
    let separated = s1::separate_paths(y1, &bs.steering, cfg.tx_power).unwrap();
    let r_idx = s1::select_reference_path(&separated).unwrap();
    let side = SideInfo::from_channels(&channels);
    let omega_r = {
        // mimic estimator internals
        let sines: Vec<(f64, f64)> = side.bs_ris_geometry.clone();
        sines.iter().min_by(|a, b| (a.0 - bs.sines[r_idx]).abs().partial_cmp(&(b.0 - bs.sines[r_idx]).abs()).unwrap()).unwrap().1
    };
    let rc = s1::recover_reference_channel(&separated[r_idx], &patterns[0], omega_r, &dicts.polar, 1, est.lookahead, est.solver_tol, cfg.spacing_ris, cfg.wavelength()).unwrap();
    println!("reference gamma support {:?}", rc.gamma.support);
    let (s_ls, _) = s1::init_common_operator(y1, &bs.steering, &rc.h1, &patterns[0], cfg.tx_power).unwrap();

    let patterns_q: Vec<&_> = vus.owner_map.iter().map(|&(k, _)| &patterns[k]).collect();
    let z_list: Vec<CMat> = vus.observations.iter().map(|y| s1::project_onto_bs(y, &bs.steering, cfg.tx_power).unwrap()).collect();

    let mut s_cur = s_ls.clone();
    let opts = s2::AlsOptions {
        max_iters: 0,
        sparsity: vec![1; vus.len()],
        lookahead: est.lookahead,
        warm_start: false,
        ..s2::AlsOptions::default()
    };
    for it in 0..8 {
        let (coeffs, channels_est) = s2::als_step_a(&z_list, &s_cur, &dicts.polar, &patterns_q, &opts, None).unwrap();
        let sups: Vec<_> = coeffs.iter().map(|c| c.support.clone()).collect();
        let obj = s2::als_objective(&z_list, &s_cur, &channels_est, &patterns_q);
        // finalize for NMSE
        let state = s2::AlsState {
            iteration: it,
            operator: s2::CommonOperator { s: s_cur.clone() },
            channels: channels_est.clone(),
            coefficients: coeffs.clone(),
            objective_trace: vec![],
            objective_increases: 0,
            sparse_solves: 0,
            ls_updates: 0,
            init_sparse_solves: 0,
            gram_fallbacks: 0,
        };
        let fin = s2::finalize_estimates(&state, &bs.steering, &vus).unwrap();
        let (lin, db, _) = nmse(&fin, &channels, NmseMode::PerUserSum).unwrap();
        let _ = lin;
        println!("iter {it}: supports {sups:?} obj {obj:.3e} NMSE {db:.2} dB");
        let (s_next, _) = s2::als_step_b(&z_list, &channels_est, &patterns_q).unwrap();
        s_cur = s_next;
    }
}
