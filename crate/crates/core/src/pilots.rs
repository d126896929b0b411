//! RIS training patterns and synthesis of the noisy BS observations.

use crate::channel::{complex_gaussian, ChannelSet, SystemConfig};
use crate::error::{Error, Result};
use crate::{CMat, Cplx};
use rand::Rng;

/// How the RIS phase slots are generated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainingScheme {
    /// I.i.d. uniform phases per element and slot; the default.
    RandomPhase,
    /// First `tau` columns of the M-point DFT matrix; mutually orthogonal
    /// while `tau <= m`. Mostly useful for debugging exact-recovery setups.
    DftColumns,
}

/// RIS phase configuration over the training slots; column `t` is the phase
/// vector applied during slot `t`. Every entry has unit modulus.
#[derive(Debug, Clone)]
pub struct TrainingPattern {
    pub slots: CMat,
    pub scheme: TrainingScheme,
    pub tau: usize,
}

/// Observations of the training phase: `obs[k][t]` is the `n_bs x n_ue`
/// matrix received from user `k` during slot `t`.
#[derive(Debug, Clone)]
pub struct ObservationSet {
    pub obs: Vec<Vec<CMat>>,
    pub noise_var: f64,
    pub power: f64,
}

/// Generates a training pattern of `tau` unit-modulus slots for an
/// `m`-element RIS.
pub fn generate_training<R: Rng + ?Sized>(
    m: usize,
    tau: usize,
    scheme: TrainingScheme,
    rng: &mut R,
) -> Result<TrainingPattern> {
    if m < 1 || tau < 1 {
        return Err(Error::invalid("training pattern needs m >= 1 and tau >= 1"));
    }
    let slots = match scheme {
        TrainingScheme::RandomPhase => CMat::from_fn(m, tau, |_, _| {
            Cplx::from_polar(1.0, rng.random::<f64>() * std::f64::consts::TAU)
        }),
        TrainingScheme::DftColumns => {
            if tau > m {
                return Err(Error::invalid(format!(
                    "dft-columns training supports at most m={m} slots, got tau={tau}"
                )));
            }
            CMat::from_fn(m, tau, |i, t| {
                Cplx::from_polar(
                    1.0,
                    -std::f64::consts::TAU * (i as f64) * (t as f64) / m as f64,
                )
            })
        }
    };
    Ok(TrainingPattern { slots, scheme, tau })
}

/// Synthesizes the BS observations `Y[k][t] = sqrt(p) H_br Diag(e_t) H_ru_k
/// + N` with i.i.d. circular complex Gaussian noise of variance `noise_var`.
///
/// `patterns[k]` is the training pattern user `k` transmits under; users may
/// use different slot counts.
pub fn synthesize_observations<R: Rng + ?Sized>(
    channels: &ChannelSet,
    patterns: &[TrainingPattern],
    power: f64,
    noise_var: f64,
    rng: &mut R,
) -> Result<ObservationSet> {
    let n_users = channels.h_ru.len();
    if patterns.len() != n_users {
        return Err(Error::invalid(format!(
            "expected {} training patterns, got {}",
            n_users,
            patterns.len()
        )));
    }
    if !(power >= 0.0) || !(noise_var >= 0.0) {
        return Err(Error::invalid("power and noise_var must be >= 0"));
    }
    let m = channels.h_br.ncols();
    let sqrt_p = power.sqrt();
    let mut obs = Vec::with_capacity(n_users);
    for (k, pattern) in patterns.iter().enumerate() {
        if pattern.slots.nrows() != m {
            return Err(Error::invalid(format!(
                "training pattern for user {k} has {} rows, RIS has {m} elements",
                pattern.slots.nrows()
            )));
        }
        let h_ru = &channels.h_ru[k];
        let mut user_obs = Vec::with_capacity(pattern.tau);
        for t in 0..pattern.tau {
            // h_br with columns scaled by the slot phases, then into h_ru.
            let mut modulated = channels.h_br.clone();
            for (c, e) in pattern.slots.column(t).iter().enumerate() {
                for r in 0..modulated.nrows() {
                    modulated[(r, c)] *= e;
                }
            }
            let mut y = (&modulated * h_ru) * Cplx::new(sqrt_p, 0.0);
            if noise_var > 0.0 {
                for v in y.iter_mut() {
                    *v += complex_gaussian(rng, noise_var);
                }
            }
            user_obs.push(y);
        }
        obs.push(user_obs);
    }
    Ok(ObservationSet {
        obs,
        noise_var,
        power,
    })
}

/// Nominal SNR in dB: `10 log10(1e-6 d_br^-e1 d_ru^-e0 p / noise_var)` with
/// `d_ru` the midpoint of the configured interval and `(e0, e1)` the
/// configured path-loss exponents.
///
/// Note the exponent pairing is deliberately the reverse of the gain
/// statistics (`e1` on the BS-RIS distance, `e0` on the RIS-user distance).
pub fn snr_db(cfg: &SystemConfig) -> Result<f64> {
    if cfg.noise_var <= 0.0 {
        return Err(Error::invalid("snr_db needs a positive noise variance"));
    }
    let (e0, e1) = cfg.gain_exponents;
    let num = 1e-6
        * cfg.dist_bs_ris.powf(-e1)
        * cfg.dist_ris_ue_mid().powf(-e0)
        * cfg.tx_power;
    Ok(10.0 * (num / cfg.noise_var).log10())
}

/// Noise variance achieving a target nominal SNR; the inverse of [`snr_db`].
pub fn noise_var_for_snr_db(cfg: &SystemConfig, target_snr_db: f64) -> f64 {
    let (e0, e1) = cfg.gain_exponents;
    let num = 1e-6
        * cfg.dist_bs_ris.powf(-e1)
        * cfg.dist_ris_ue_mid().powf(-e0)
        * cfg.tx_power;
    num * 10f64.powf(-target_snr_db / 10.0)
}
