//! Ranks trials by their error-energy contribution to the cell mean.

use riscade_core::channel::{sample_scenario, SamplingMode};
use riscade_core::estimator::{build_dictionaries, estimate_trial, SideInfo, VariantKind};
use riscade_core::harness::build_preset;
use riscade_core::metrics::{nmse, NmseMode};
use riscade_core::pilots::{generate_training, synthesize_observations};
use riscade_core::rng::stream;

fn main() {
    let j: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(4);
    let cell: u64 = j as u64 - 1;
    let spec = build_preset("fig2-desk").unwrap();
    let mut cfg = spec.base.clone();
    cfg.n_ue_paths = vec![j; cfg.n_users];
    let est = spec.estimator.clone();
    let dicts = build_dictionaries(&cfg, &est, VariantKind::ProposedAls).unwrap();
    let mut contrib: Vec<(f64, usize, f64)> = Vec::new();
    let mut total_num = 0.0;
    let mut total_den = 0.0;
    for trial in 0..200u64 {
        let mut rng = stream(cfg.seed, &[cell, trial]);
        let channels = sample_scenario(&cfg, SamplingMode::OnGrid, Some(&dicts), &mut rng).unwrap();
        let patterns: Vec<_> = (0..cfg.n_users)
            .map(|k| {
                let tau = if k == 0 { spec.tau_typical } else { spec.tau_other };
                generate_training(cfg.m_ris, tau, est.training, &mut rng).unwrap()
            })
            .collect();
        let obs = synthesize_observations(&channels, &patterns, cfg.tx_power, cfg.noise_var, &mut rng).unwrap();
        let side = SideInfo::from_channels(&channels);
        let den: f64 = channels.g_true.iter().flatten().map(|g| g.norm_squared()).sum();
        if let Ok(t) = estimate_trial(&cfg, &obs, &patterns, &dicts, &side, &est, Some(3)) {
            let (lin, _, _) = nmse(&t.estimates, &channels, NmseMode::PerUserSum).unwrap();
            contrib.push((lin * den, trial as usize, 10.0 * lin.log10()));
            total_num += lin * den;
            total_den += den;
        }
    }
    contrib.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    println!("cell NMSE {:.2} dB", 10.0 * (total_num / total_den).log10());
    for (c, t, db) in contrib.iter().take(6) {
        println!("trial {t}: contribution {:.3e} ({:.1}% of num), per-trial {db:.2} dB", c, 100.0 * c / total_num);
    }
}
