//! Per-trial NMSE distribution probe for the desk-scale preset.

use riscade_core::channel::{sample_scenario, SamplingMode};
use riscade_core::estimator::{build_dictionaries, estimate_trial, SideInfo, VariantKind};
use riscade_core::harness::build_preset;
use riscade_core::metrics::{nmse, NmseMode};
use riscade_core::pilots::{generate_training, synthesize_observations};
use riscade_core::rng::stream;

fn main() {
    let j: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let spec = build_preset("fig2-desk").unwrap();
    let mut cfg = spec.base.clone();
    cfg.n_ue_paths = vec![j; cfg.n_users];
    let est = spec.estimator.clone();
    let dicts = build_dictionaries(&cfg, &est, VariantKind::ProposedAls).unwrap();
    println!("rings: {:?}", dicts.polar.ring_radii);
    println!("{:>5} {:>12} {:>12} {:>12} {:>10}", "trial", "init_db", "als3_db", "als9_db", "obj_drop");
    for trial in 0..15u64 {
        let mut rng = stream(cfg.seed, &[0, trial]);
        let channels = sample_scenario(&cfg, SamplingMode::Continuous, Some(&dicts), &mut rng).unwrap();
        let patterns: Vec<_> = (0..cfg.n_users)
            .map(|k| {
                let tau = if k == 0 { spec.tau_typical } else { spec.tau_other };
                generate_training(cfg.m_ris, tau, est.training, &mut rng).unwrap()
            })
            .collect();
        let obs = synthesize_observations(&channels, &patterns, cfg.tx_power, cfg.noise_var, &mut rng).unwrap();
        let side = SideInfo::from_channels(&channels);
        let mut dbs = Vec::new();
        let mut drop = 0.0;
        for i_als in [0usize, 3, 9] {
            match estimate_trial(&cfg, &obs, &patterns, &dicts, &side, &est, Some(i_als)) {
                Ok(t) => {
                    let (lin, db, _) = nmse(&t.estimates, &channels, NmseMode::PerUserSum).unwrap();
                    let _ = lin;
                    dbs.push(db);
                    if i_als == 9 && t.als.objective_trace.len() >= 2 {
                        drop = t.als.objective_trace[0] / t.als.objective_trace.last().unwrap();
                    }
                }
                Err(e) => {
                    println!("trial {trial} i{i_als}: FAILED {e}");
                    dbs.push(f64::NAN);
                }
            }
        }
        println!("{:>5} {:>12.2} {:>12.2} {:>12.2} {:>10.2}", trial, dbs[0], dbs[1], dbs[2], drop);
    }
}
