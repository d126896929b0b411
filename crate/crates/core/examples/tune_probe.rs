//! Sweeps stabilization knobs over a few trials to pick defaults.

use riscade_core::channel::{sample_scenario, SamplingMode};
use riscade_core::estimator::{build_dictionaries, estimate_trial, SideInfo, VariantKind};
use riscade_core::harness::build_preset;
use riscade_core::metrics::{nmse, NmseMode};
use riscade_core::pilots::{generate_training, synthesize_observations};
use riscade_core::rng::stream;

fn main() {
    let spec = build_preset("fig2-desk").unwrap();
    for j in [1usize, 3] {
        let mut cfg = spec.base.clone();
        cfg.n_ue_paths = vec![j; cfg.n_users];
        for cutoff in [0.0, 1e-3, 1e-2] {
            for jq in [1usize, 2, 4] {
                let mut est = spec.estimator.clone();
                est.operator_cutoff = cutoff;
                est.polar_angles = 128;
                est.jq_sparsity = jq;
                est.structured_init = true;
                let dicts = build_dictionaries(&cfg, &est, VariantKind::ProposedAls).unwrap();
                let dicts_ff = build_dictionaries(&cfg, &est, VariantKind::FarFieldBaseline).unwrap();
                let mut acc = [[0.0f64; 2]; 4]; // [variant][num/den]
                for trial in 0..12u64 {
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
                    for (vi, (d, i_als)) in [(&dicts, 0usize), (&dicts, 3), (&dicts, 9), (&dicts_ff, 3)].iter().enumerate() {
                        if let Ok(t) = estimate_trial(&cfg, &obs, &patterns, d, &side, &est, Some(*i_als)) {
                            let (lin, _, _) = nmse(&t.estimates, &channels, NmseMode::PerUserSum).unwrap();
                            // ratio of means: accumulate err & energy
                            let den: f64 = channels.g_true.iter().flatten().map(|g| g.norm_squared()).sum();
                            acc[vi][0] += lin * den;
                            acc[vi][1] += den;
                        }
                    }
                }
                let db = |i: usize| 10.0 * (acc[i][0] / acc[i][1]).log10();
                println!(
                    "J={j} struct cutoff={cutoff:.0e} jq={jq}: init {:6.2}  als3 {:6.2}  als9 {:6.2}  ff {:6.2}  | gap(init-als3) {:5.2}  gap(ff-als3) {:5.2}",
                    db(0), db(1), db(2), db(3), db(0) - db(1), db(3) - db(1)
                );
            }
        }
    }
}
