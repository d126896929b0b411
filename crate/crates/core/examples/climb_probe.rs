//! NMSE trajectory across refinement depths from both initializations.

use riscade_core::channel::{sample_scenario, SamplingMode};
use riscade_core::pilots::noise_var_for_snr_db;
use riscade_core::estimator::{build_dictionaries, estimate_trial, SideInfo, VariantKind};
use riscade_core::harness::build_preset;
use riscade_core::metrics::{nmse, NmseMode};
use riscade_core::pilots::{generate_training, synthesize_observations};
use riscade_core::rng::stream;

fn main() {
    let spec = build_preset("fig2-desk").unwrap();
    let mut cfg = spec.base.clone();
    let j: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let snr: f64 = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(10.0);
    cfg.n_ue_paths = vec![j; cfg.n_users];
    cfg.noise_var = noise_var_for_snr_db(&cfg, snr);
    let tau_typ: usize = std::env::args().nth(3).and_then(|s| s.parse().ok()).unwrap_or(64);
    let tau_oth: usize = std::env::args().nth(4).and_then(|s| s.parse().ok()).unwrap_or(48);
    println!("J={j} SNR={snr} tau=({tau_typ},{tau_oth}) noise_var={:.3e}", cfg.noise_var);
    for structured in [false, true] {
        for warm in [true, false] {
            let mut est = spec.estimator.clone();
            est.structured_init = structured;
            est.warm_start = warm;
            est.jq_sparsity = 1;
            est.operator_cutoff = 0.0;
            let dicts = build_dictionaries(&cfg, &est, VariantKind::ProposedAls).unwrap();
            let depths = [0usize, 1, 3, 9, 20];
            let mut num = vec![0.0; depths.len()];
            let mut den = vec![0.0; depths.len()];
            for trial in 0..10u64 {
                let mut rng = stream(cfg.seed, &[0, trial]);
                let channels = sample_scenario(&cfg, SamplingMode::OnGrid, Some(&dicts), &mut rng).unwrap();
                let patterns: Vec<_> = (0..cfg.n_users)
                    .map(|k| {
                        let tau = if k == 0 { tau_typ } else { tau_oth };
                        generate_training(cfg.m_ris, tau, est.training, &mut rng).unwrap()
                    })
                    .collect();
                let obs = synthesize_observations(&channels, &patterns, cfg.tx_power, cfg.noise_var, &mut rng).unwrap();
                let side = SideInfo::from_channels(&channels);
                let e: f64 = channels.g_true.iter().flatten().map(|g| g.norm_squared()).sum();
                for (i, &d) in depths.iter().enumerate() {
                    if let Ok(t) = estimate_trial(&cfg, &obs, &patterns, &dicts, &side, &est, Some(d)) {
                        let (lin, _, _) = nmse(&t.estimates, &channels, NmseMode::PerUserSum).unwrap();
                        num[i] += lin * e;
                        den[i] += e;
                    }
                }
            }
            print!("structured={structured} warm={warm}: ");
            for (i, &d) in depths.iter().enumerate() {
                print!("i{d}: {:6.2}  ", 10.0 * (num[i] / den[i]).log10());
            }
            println!();
        }
    }
}
