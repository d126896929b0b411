//! Stage-by-stage error breakdown of one off-grid trial.

use riscade_core::channel::*;
use riscade_core::estimator::*;
use riscade_core::harness::build_preset;
use riscade_core::linalg::rel_err;
use riscade_core::metrics::{nmse, NmseMode};
use riscade_core::pilots::*;
use riscade_core::rng::stream;
use riscade_core::{CMat, CVec, Cplx};

fn main() {
    let trial: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let spec = build_preset("fig2-desk").unwrap();
    let mut cfg = spec.base.clone();
    cfg.n_ue_paths = vec![1; cfg.n_users];
    let est = spec.estimator.clone();
    let dicts = build_dictionaries(&cfg, &est, VariantKind::ProposedAls).unwrap();
    let lam = cfg.wavelength();

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
    let t = estimate_trial(&cfg, &obs, &patterns, &dicts, &side, &est, Some(3)).unwrap();

    // 1. BS angles
    let mut true_sines: Vec<f64> = channels.paths_br.iter().map(|p| p.bs_angle.sin()).collect();
    true_sines.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut est_sines = t.stage1.bs.sines.clone();
    est_sines.sort_by(|a, b| a.partial_cmp(b).unwrap());
    println!("true bs sines: {true_sines:?}");
    println!("est  bs sines: {est_sines:?}");
    // orthogonality
    let g = t.stage1.bs.steering.ad_mul(&t.stage1.bs.steering) / Cplx::new(cfg.n_bs as f64, 0.0);
    println!("A_bs gram/n offdiag: {:.3e}", (g.clone() - CMat::identity(2, 2)).norm());

    // 2. user-side match
    for k in 0..cfg.n_users {
        let true_a = steering_from_sine(cfg.n_ue, cfg.spacing_ue, lam, channels.paths_ru[k][0].ue_angle.sin());
        let est_a = CVec::from_column_slice(t.virtual_users.ue_steering[k].column(0).as_slice());
        let ip: Cplx = true_a.iter().zip(est_a.iter()).map(|(a, b)| a.conj() * b).sum();
        println!("user {k}: |a^H a_hat|/N = {:.4}", ip.norm() / cfg.n_ue as f64);
    }

    // 3. reference channel vs effective virtual channel
    let p0 = &channels.paths_ru[0][0];
    let b = near_field_steering(cfg.m_ris, cfg.spacing_ris, lam, p0.ris_angle, p0.distance).unwrap();
    let true_a = steering_from_sine(cfg.n_ue, cfg.spacing_ue, lam, p0.ue_angle.sin());
    let est_a = CVec::from_column_slice(t.virtual_users.ue_steering[0].column(0).as_slice());
    // effective virtual channel after separation: beta * b * (a^H a_hat_gram_inv...)
    let gram = est_a.ad_mul(&est_a)[(0,0)];
    let mix = true_a.ad_mul(&est_a)[(0,0)] / gram;
    let h_eff = CVec::from_fn(cfg.m_ris, |i, _| p0.gain * b[i] * mix);
    let c = t.stage1.ref_channel[0] / h_eff[0];
    let h1_err = (&t.stage1.ref_channel - &h_eff * c).norm() / h_eff.norm();
    println!("h1 vs h_eff (gauge-aligned by first entry): rel {h1_err:.3e}, gauge |c| {:.3}", c.norm());
    // how near-field is it? best far-field-only approx of b:
    println!("ring dist of planted path: {} (rings {:?})", p0.distance, dicts.polar.ring_radii);

    // 4. S0 fit quality + ALS објective
    println!("als trace: {:?}", t.als.objective_trace);
    // data energy
    let de: f64 = t.virtual_users.observations.iter().map(|y| y.norm_squared()).sum();
    println!("data energy {de:.3e}");

    // 5. final errors, gauge-free: H_BR Diag vs truth already in nmse; also factor errors:
    let (lin, db, per_user) = nmse(&t.estimates, &channels, NmseMode::PerUserSum).unwrap();
    println!("NMSE {lin:.3e} ({db:.2} dB) per-user {per_user:?}");
    // compare h_br_hat*h_ru_hat product energy vs truth energy
    let e_true: f64 = channels.g_true.iter().flatten().map(|g| g.norm_squared()).sum();
    let e_est: f64 = t.estimates.g_hat.iter().flatten().map(|g| g.norm_squared()).sum();
    println!("energy est/true: {:.3}", e_est / e_true);

    // 6. per-user H_RU subspace: gauge-aligned rel err of cascaded per user
    for k in 0..cfg.n_users {
        let mut num = 0.0;
        let mut den = 0.0;
        for n in 0..cfg.n_ue {
            num += (&t.estimates.g_hat[k][n] - &channels.g_true[k][n]).norm_squared();
            den += channels.g_true[k][n].norm_squared();
        }
        println!("user {k} cascaded nmse: {:.3e}", num / den);
        // optimal scalar alignment: min_c ||G_hat*c - G||
        let mut ip = Cplx::ZERO;
        let mut ee = 0.0;
        for n in 0..cfg.n_ue {
            for (gh, gt) in t.estimates.g_hat[k][n].iter().zip(channels.g_true[k][n].iter()) {
                ip += gh.conj() * gt;
                ee += gh.norm_sqr();
            }
        }
        let copt = ip / Cplx::new(ee, 0.0);
        let mut num2 = 0.0;
        for n in 0..cfg.n_ue {
            num2 += (&t.estimates.g_hat[k][n] * copt - &channels.g_true[k][n]).norm_squared();
        }
        println!("user {k} cascaded nmse after best SCALAR align: {:.3e} (|c| {:.3})", num2 / den, copt.norm());
    }
}
