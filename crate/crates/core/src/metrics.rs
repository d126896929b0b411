//! NMSE evaluation, pilot-overhead formulas, and operation counters.

use crate::channel::ChannelSet;
use crate::error::{Error, Result};
use crate::stage2::FinalEstimates;

/// How the cascaded NMSE numerator treats the user sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NmseMode {
    /// Sum of per-user squared errors (default).
    #[default]
    PerUserSum,
    /// Squared error of the user-summed cascaded channels, which permits
    /// cross-user cancellation.
    SummedChannels,
}

/// Counted estimator operations for complexity reporting.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OpCounters {
    /// Sparse recoveries during initialization: user-side supports, the
    /// reference-path recovery, and the initial per-virtual-user pass.
    pub init_sparse_calls: usize,
    /// Sparse recoveries inside the refinement loop.
    pub als_sparse_calls: usize,
    /// Closed-form operator updates inside the refinement loop.
    pub als_ls_updates: usize,
    /// Refinement iterations executed.
    pub i_als: usize,
    /// Virtual users handled.
    pub k_v: usize,
}

impl OpCounters {
    /// The loop counters must satisfy `als_sparse_calls = i_als * k_v` and
    /// `als_ls_updates = i_als`.
    pub fn matches_loop_structure(&self) -> bool {
        self.als_sparse_calls == self.i_als * self.k_v && self.als_ls_updates == self.i_als
    }
}

/// Per-experiment metrics.
#[derive(Debug, Clone)]
pub struct MetricsReport {
    pub nmse_linear: f64,
    /// `10 log10(nmse_linear)`; negative infinity when the error is zero.
    pub nmse_db: f64,
    pub per_user_nmse: Vec<f64>,
    pub overhead_proposed: u64,
    pub overhead_benchmark: u64,
    pub als_objective_trace: Vec<f64>,
    pub op_counters: OpCounters,
}

/// Converts a linear NMSE to dB, mapping zero to negative infinity.
pub fn nmse_to_db(linear: f64) -> f64 {
    if linear > 0.0 {
        10.0 * linear.log10()
    } else {
        f64::NEG_INFINITY
    }
}

/// Accumulates cascaded-error energy across realizations so the final NMSE
/// is a ratio of means rather than a mean of ratios.
#[derive(Debug, Clone, Default)]
pub struct NmseAccumulator {
    pub numerator: f64,
    pub denominator: f64,
    pub per_user_num: Vec<f64>,
    pub per_user_den: Vec<f64>,
}

impl NmseAccumulator {
    pub fn add(
        &mut self,
        estimates: &FinalEstimates,
        truth: &ChannelSet,
        mode: NmseMode,
    ) -> Result<()> {
        let users = truth.g_true.len();
        if estimates.g_hat.len() != users {
            return Err(Error::invalid("nmse: user count mismatch"));
        }
        if self.per_user_num.is_empty() {
            self.per_user_num = vec![0.0; users];
            self.per_user_den = vec![0.0; users];
        }
        for k in 0..users {
            if estimates.g_hat[k].len() != truth.g_true[k].len() {
                return Err(Error::invalid("nmse: antenna count mismatch"));
            }
            for (g_hat, g) in estimates.g_hat[k].iter().zip(&truth.g_true[k]) {
                if g_hat.shape() != g.shape() {
                    return Err(Error::invalid("nmse: cascaded shape mismatch"));
                }
                let err = (g_hat - g).norm_squared();
                let energy = g.norm_squared();
                self.per_user_num[k] += err;
                self.per_user_den[k] += energy;
                self.denominator += energy;
                if mode == NmseMode::PerUserSum {
                    self.numerator += err;
                }
            }
        }
        if mode == NmseMode::SummedChannels {
            let n_rx = truth.g_true[0].len();
            for n in 0..n_rx {
                let mut acc = &estimates.g_hat[0][n] - &truth.g_true[0][n];
                for k in 1..users {
                    acc += &estimates.g_hat[k][n] - &truth.g_true[k][n];
                }
                self.numerator += acc.norm_squared();
            }
        }
        Ok(())
    }

    /// Final (linear, dB, per-user linear) NMSE.
    pub fn finalize(&self) -> Result<(f64, f64, Vec<f64>)> {
        if self.denominator <= 0.0 {
            return Err(Error::ZeroEnergyTruth);
        }
        let linear = self.numerator / self.denominator;
        let per_user = self
            .per_user_num
            .iter()
            .zip(&self.per_user_den)
            .map(|(n, d)| if *d > 0.0 { n / d } else { f64::NAN })
            .collect();
        Ok((linear, nmse_to_db(linear), per_user))
    }
}

/// Cascaded NMSE of one realization.
pub fn nmse(
    estimates: &FinalEstimates,
    truth: &ChannelSet,
    mode: NmseMode,
) -> Result<(f64, f64, Vec<f64>)> {
    let mut acc = NmseAccumulator::default();
    acc.add(estimates, truth, mode)?;
    acc.finalize()
}

/// Tunable constants of the proposed-scheme overhead formula.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OverheadConstants {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
}

impl Default for OverheadConstants {
    fn default() -> Self {
        OverheadConstants {
            c1: 1.0,
            c2: 1.0,
            c3: 1.0,
        }
    }
}

fn ceil_log2(n: u64) -> u64 {
    if n <= 1 {
        0
    } else {
        64 - (n - 1).leading_zeros() as u64
    }
}

/// Training-slot count of the proposed scheme:
/// `ceil(c1 K J log2(N_r) + c2 J log2(M) + c3 (K-1) J log2(M) / L - K J)`,
/// clamped to at least 1.
///
/// Returns the count and whether clamping was applied.
pub fn pilot_overhead_proposed(
    k_users: u64,
    j_paths: u64,
    n_ue: u64,
    m_ris: u64,
    l_paths: u64,
    constants: &OverheadConstants,
) -> Result<(u64, bool)> {
    if k_users == 0 || n_ue == 0 || m_ris == 0 || l_paths == 0 {
        return Err(Error::invalid(
            "pilot_overhead_proposed: dimensions must be positive",
        ));
    }
    let log_nr = ceil_log2(n_ue) as f64;
    let log_m = ceil_log2(m_ris) as f64;
    let (k, j, l) = (k_users as f64, j_paths as f64, l_paths as f64);
    let raw = constants.c1 * k * j * log_nr + constants.c2 * j * log_m
        + constants.c3 * (k - 1.0) * j * log_m / l
        - k * j;
    let count = raw.ceil();
    if count < 1.0 {
        Ok((1, true))
    } else {
        Ok((count as u64, false))
    }
}

/// Training-slot count of the per-element benchmark, `K (1 + Q L J)` with
/// `Q` the number of phase adjustments.
pub fn pilot_overhead_benchmark(
    k_users: u64,
    q_phases: u64,
    l_paths: u64,
    j_paths: u64,
) -> Result<u64> {
    if k_users == 0 || q_phases == 0 || l_paths == 0 {
        return Err(Error::invalid(
            "pilot_overhead_benchmark: K, Q, L must be positive",
        ));
    }
    Ok(k_users * (1 + q_phases * l_paths * j_paths))
}
