//! Per-trial NMSE distribution at one sweep cell.

use riscade_core::channel::{sample_scenario, SamplingMode};
use riscade_core::estimator::{build_dictionaries, estimate_trial, SideInfo, VariantKind};
use riscade_core::harness::build_preset;
use riscade_core::metrics::{nmse, NmseMode};
use riscade_core::pilots::{generate_training, synthesize_observations};
use riscade_core::rng::stream;

fn main() {
    let j: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(3);
    let spec = build_preset("fig2-desk").unwrap();
    let mut cfg = spec.base.clone();
    cfg.n_ue_paths = vec![j; cfg.n_users];
    let est = spec.estimator.clone();
    let dicts = build_dictionaries(&cfg, &est, VariantKind::ProposedAls).unwrap();
    let mut rows: Vec<(f64, f64)> = Vec::new();
    for trial in 0..120u64 {
        let mut rng = stream(cfg.seed, &[2, trial]);
        let channels = sample_scenario(&cfg, SamplingMode::OnGrid, Some(&dicts), &mut rng).unwrap();
        let patterns: Vec<_> = (0..cfg.n_users)
            .map(|k| {
                let tau = if k == 0 { spec.tau_typical } else { spec.tau_other };
                generate_training(cfg.m_ris, tau, est.training, &mut rng).unwrap()
            })
            .collect();
        let obs = synthesize_observations(&channels, &patterns, cfg.tx_power, cfg.noise_var, &mut rng).unwrap();
        let side = SideInfo::from_channels(&channels);
        let mut pair = (f64::NAN, f64::NAN);
        if let Ok(t) = estimate_trial(&cfg, &obs, &patterns, &dicts, &side, &est, Some(0)) {
            pair.0 = nmse(&t.estimates, &channels, NmseMode::PerUserSum).unwrap().1;
        }
        if let Ok(t) = estimate_trial(&cfg, &obs, &patterns, &dicts, &side, &est, Some(3)) {
            pair.1 = nmse(&t.estimates, &channels, NmseMode::PerUserSum).unwrap().1;
        }
        rows.push(pair);
    }
    let mut init: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let mut als: Vec<f64> = rows.iter().map(|r| r.1).collect();
    init.sort_by(|a, b| a.partial_cmp(b).unwrap());
    als.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let q = |v: &[f64], p: f64| v[(p * (v.len() - 1) as f64) as usize];
    println!("J={j}  percentiles        p10      p50      p90      p99      max");
    println!("init: {:22.2} {:8.2} {:8.2} {:8.2} {:8.2}", q(&init, 0.1), q(&init, 0.5), q(&init, 0.9), q(&init, 0.99), init.last().unwrap());
    println!("als3: {:22.2} {:8.2} {:8.2} {:8.2} {:8.2}", q(&als, 0.1), q(&als, 0.5), q(&als, 0.9), q(&als, 0.99), als.last().unwrap());
    // trials where als3 is bad
    let bad: Vec<usize> = rows.iter().enumerate().filter(|(_, r)| r.1 > -15.0).map(|(i, _)| i).collect();
    println!("als3 trials above -15 dB: {bad:?}");
}
