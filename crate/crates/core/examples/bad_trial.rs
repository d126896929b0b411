//! Front-end diagnostics for specific trials.

use riscade_core::channel::{sample_scenario, SamplingMode};
use riscade_core::estimator::{build_dictionaries, SideInfo, VariantKind};
use riscade_core::harness::build_preset;
use riscade_core::pilots::{generate_training, synthesize_observations};
use riscade_core::rng::stream;
use riscade_core::stage1 as s1;

fn main() {
    let j: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(3);
    let spec = build_preset("fig2-desk").unwrap();
    let mut cfg = spec.base.clone();
    cfg.n_ue_paths = vec![j; cfg.n_users];
    let est = spec.estimator.clone();
    let dicts = build_dictionaries(&cfg, &est, VariantKind::ProposedAls).unwrap();
    for trial in [104u64, 7, 107, 180] {
        let mut rng = stream(cfg.seed, &[j as u64 - 1, trial]);
        let channels = sample_scenario(&cfg, SamplingMode::OnGrid, Some(&dicts), &mut rng).unwrap();
        let patterns: Vec<_> = (0..cfg.n_users)
            .map(|k| {
                let tau = if k == 0 { spec.tau_typical } else { spec.tau_other };
                generate_training(cfg.m_ris, tau, est.training, &mut rng).unwrap()
            })
            .collect();
        let obs = synthesize_observations(&channels, &patterns, cfg.tx_power, cfg.noise_var, &mut rng).unwrap();

        println!("--- trial {trial}");
        // planted user atoms
        for k in 0..cfg.n_users {
            let planted: Vec<usize> = channels.paths_ru[k]
                .iter()
                .map(|p| {
                    dicts
                        .user
                        .grid_sines
                        .iter()
                        .position(|g| (g - p.ue_angle.sin()).abs() < 1e-9)
                        .unwrap()
                })
                .collect();
            let agg = s1::aggregate_observations(&obs.obs[k]).unwrap();
            let (mut got, _) = s1::estimate_user_support(&agg, &dicts.user, j).unwrap();
            got.sort_unstable();
            let mut want = planted.clone();
            want.sort_unstable();
            println!("user {k}: planted {want:?} got {got:?} {}", if want == got { "OK" } else { "MISS" });
        }
        // BS sines
        let mut ue_estimates = Vec::new();
        for k in 0..cfg.n_users {
            let agg = s1::aggregate_observations(&obs.obs[k]).unwrap();
            ue_estimates.push(s1::estimate_user_support(&agg, &dicts.user, j).unwrap());
        }
        let vus = s1::build_virtual_users(&obs, &ue_estimates).unwrap();
        let bs = s1::estimate_bs_angles(&vus.observations[0], cfg.n_bs_paths, est.refine_grid, cfg.spacing_bs, cfg.wavelength()).unwrap();
        let mut want: Vec<f64> = channels.paths_br.iter().map(|p| p.bs_angle.sin()).collect();
        want.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut got = bs.sines.clone();
        got.sort_by(|a, b| a.partial_cmp(b).unwrap());
        println!("bs sines want {want:?} got {got:?}");
        // gains of BS paths (relative strength)
        let gains: Vec<f64> = channels.paths_br.iter().map(|p| p.gain.norm()).collect();
        println!("bs path gains {gains:?}");
        // per-branch gains of user 1 (typical owner)
        let bgains: Vec<f64> = channels.paths_ru[0].iter().map(|p| p.gain.norm()).collect();
        println!("user0 branch gains {bgains:?}");
        // planted polar columns per user
        for k in 0..cfg.n_users {
            let cols: Vec<(usize, usize)> = channels.paths_ru[k]
                .iter()
                .map(|p| {
                    let gi = dicts.polar.angle_sines.iter().position(|g| (g - p.ris_angle.sin()).abs() < 1e-9).unwrap();
                    let ri = dicts.polar.ring_radii.iter().position(|r| (r - p.distance).abs() < 1e-9).map(|r| r + 1).unwrap_or(0);
                    (gi, ri)
                })
                .collect();
            println!("user {k} polar (angle idx, ring idx): {cols:?}");
        }
    }
}
