//! Configuration, presets, the seeded Monte-Carlo experiment driver, and
//! CSV/JSON result emission.
//!
//! An experiment is a grid of (sweep value x estimator variant) cells; each
//! cell runs `trials` independent realizations and reports the cascaded
//! NMSE as a ratio of accumulated means, plus the pilot-overhead formulas.
//! Trial seeds derive from `(master seed, cell, trial)` only, so results
//! are bitwise identical across thread counts, and every variant inside a
//! cell sees the same realizations.

use crate::channel::{sample_scenario, DictionarySet, SamplingMode, SystemConfig};
use crate::error::{Error, Result};
use crate::estimator::{
    build_dictionaries, estimate_trial, EstimatorConfig, SideInfo, VariantKind,
};
use crate::metrics::{
    nmse_to_db, pilot_overhead_benchmark, pilot_overhead_proposed, NmseAccumulator, NmseMode,
    OverheadConstants,
};
use crate::pilots::{generate_training, noise_var_for_snr_db, synthesize_observations,
    TrainingPattern, TrainingScheme};
use crate::rng::stream;
use crate::SPEED_OF_LIGHT;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write as IoWrite;

/// Swept parameter of an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SweepParam {
    /// Single cell, no parameter varied.
    #[default]
    None,
    /// RIS-user path count, applied to every user.
    JPaths,
    /// Nominal SNR in dB (sets the noise variance through the link-budget
    /// formula).
    SnrDb,
    /// Refinement iteration count, applied to every refining variant.
    IAls,
}

impl SweepParam {
    pub fn as_str(&self) -> &'static str {
        match self {
            SweepParam::None => "none",
            SweepParam::JPaths => "j-paths",
            SweepParam::SnrDb => "snr-db",
            SweepParam::IAls => "i-als",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(SweepParam::None),
            "j-paths" => Ok(SweepParam::JPaths),
            "snr-db" => Ok(SweepParam::SnrDb),
            "i-als" => Ok(SweepParam::IAls),
            other => Err(Error::Config {
                key: "sweep.param".into(),
                reason: format!("unknown sweep parameter `{other}`"),
            }),
        }
    }
}

/// One estimator variant of an experiment, with its refinement depth.
#[derive(Debug, Clone, PartialEq)]
pub struct VariantSpec {
    pub kind: VariantKind,
    pub i_als: usize,
    /// Row label in the emitted results.
    pub label: String,
}

impl VariantSpec {
    pub fn new(kind: VariantKind, i_als: usize, label: impl Into<String>) -> Self {
        VariantSpec {
            kind,
            i_als,
            label: label.into(),
        }
    }
}

/// Output format of the result emission.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

impl OutputFormat {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(Error::Config {
                key: "experiment.format".into(),
                reason: format!("unknown output format `{other}`"),
            }),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Json => "json",
        }
    }
}

/// A fully resolved experiment description.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub base: SystemConfig,
    pub estimator: EstimatorConfig,
    /// Snap scenario parameters onto the estimation grids (noiseless
    /// validation mode).
    pub on_grid: bool,
    pub sweep_param: SweepParam,
    pub sweep_values: Vec<f64>,
    pub variants: Vec<VariantSpec>,
    pub trials: usize,
    /// Training slots of the typical (first) user.
    pub tau_typical: usize,
    /// Training slots of every other user.
    pub tau_other: usize,
    pub output_path: String,
    pub format: OutputFormat,
    /// Worker threads; 0 picks the runtime default.
    pub threads: usize,
    /// Evaluate only the overhead formulas (no channel trials).
    pub overhead_only: bool,
    /// Phase-adjustment count of the benchmark overhead formula.
    pub overhead_q: u64,
    pub overhead_constants: OverheadConstants,
    /// Record wall-clock runtimes in the output. Off by default so that
    /// equal-seed runs emit byte-identical files.
    pub timing: bool,
}

impl Default for ExperimentSpec {
    /// Full-scale defaults with the noise variance set for a 10 dB nominal
    /// SNR.
    fn default() -> Self {
        let mut base = SystemConfig::full_scale();
        base.noise_var = noise_var_for_snr_db(&base, 10.0);
        ExperimentSpec {
            base,
            estimator: EstimatorConfig::default(),
            on_grid: false,
            sweep_param: SweepParam::None,
            sweep_values: vec![0.0],
            variants: vec![VariantSpec::new(VariantKind::ProposedAls, 3, "proposed-als")],
            trials: 200,
            tau_typical: 64,
            tau_other: 32,
            output_path: "results.csv".into(),
            format: OutputFormat::Csv,
            threads: 0,
            overhead_only: false,
            overhead_q: 24,
            overhead_constants: OverheadConstants::default(),
            timing: false,
        }
    }
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        if self.trials < 1 {
            return Err(Error::Config {
                key: "experiment.trials".into(),
                reason: "must be >= 1".into(),
            });
        }
        if self.sweep_values.is_empty() {
            return Err(Error::Config {
                key: "sweep.values".into(),
                reason: "must be nonempty".into(),
            });
        }
        if self.variants.is_empty() {
            return Err(Error::Config {
                key: "variant".into(),
                reason: "at least one variant required".into(),
            });
        }
        if self.tau_typical < 1 || self.tau_other < 1 {
            return Err(Error::Config {
                key: "experiment.tau_typical".into(),
                reason: "slot counts must be >= 1".into(),
            });
        }
        if self.sweep_param == SweepParam::JPaths {
            for &v in &self.sweep_values {
                if v < 1.0 || v.fract() != 0.0 {
                    return Err(Error::Config {
                        key: "sweep.values".into(),
                        reason: "j-paths sweep needs positive integers".into(),
                    });
                }
            }
        }
        Ok(())
    }

    /// System configuration of one sweep cell.
    fn cell_config(&self, value: f64) -> SystemConfig {
        let mut cfg = self.base.clone();
        match self.sweep_param {
            SweepParam::JPaths => {
                cfg.n_ue_paths = vec![value as usize; cfg.n_users];
            }
            SweepParam::SnrDb => {
                cfg.noise_var = noise_var_for_snr_db(&cfg, value);
            }
            SweepParam::None | SweepParam::IAls => {}
        }
        cfg
    }

    fn variant_iters(&self, variant: &VariantSpec, sweep_value: f64) -> usize {
        match (self.sweep_param, variant.kind) {
            (SweepParam::IAls, VariantKind::ProposedAls)
            | (SweepParam::IAls, VariantKind::FarFieldBaseline) => sweep_value as usize,
            (_, VariantKind::ProposedInitOnly) => 0,
            _ => variant.i_als,
        }
    }
}

/// One emitted result line.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub sweep_value: f64,
    pub variant: String,
    pub nmse_db: f64,
    pub overhead_proposed: u64,
    pub overhead_benchmark: u64,
    pub trials_used: u64,
    pub seed: u64,
    pub runtime_ms: f64,
}

/// Rounds to six significant decimal digits.
pub fn round_sig6(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    let e = x.abs().log10().floor();
    let f = 10f64.powf(5.0 - e);
    (x * f).round() / f
}

/// Formats a float with up to six significant digits, `%g`-style.
pub fn fmt_g6(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x < 0.0 { "-inf".into() } else { "inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let e = x.abs().log10().floor() as i32;
    let s = if (-4..6).contains(&e) {
        let prec = (5 - e).max(0) as usize;
        let mut s = format!("{x:.prec$}");
        if s.contains('.') {
            while s.ends_with('0') {
                s.pop();
            }
            if s.ends_with('.') {
                s.pop();
            }
        }
        s
    } else {
        let mut s = format!("{x:.5e}");
        // trim mantissa zeros: 1.20000e-7 -> 1.2e-7
        if let Some(epos) = s.find('e') {
            let (mant, exp) = s.split_at(epos);
            let mut mant = mant.to_string();
            if mant.contains('.') {
                while mant.ends_with('0') {
                    mant.pop();
                }
                if mant.ends_with('.') {
                    mant.pop();
                }
            }
            s = format!("{mant}{exp}");
        }
        s
    };
    s
}

/// Writes rows as CSV with the fixed header, UTF-8, LF line endings.
pub fn emit_csv<W: IoWrite>(rows: &[ResultRow], writer: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(writer);
    let io_err = |e: csv::Error| Error::Io {
        path: "<csv>".into(),
        source: std::io::Error::other(e),
    };
    w.write_record([
        "sweep_value",
        "variant",
        "nmse_db",
        "overhead_proposed",
        "overhead_benchmark",
        "trials_used",
        "seed",
        "runtime_ms",
    ])
    .map_err(io_err)?;
    for r in rows {
        w.write_record([
            fmt_g6(r.sweep_value),
            r.variant.clone(),
            fmt_g6(r.nmse_db),
            r.overhead_proposed.to_string(),
            r.overhead_benchmark.to_string(),
            r.trials_used.to_string(),
            r.seed.to_string(),
            fmt_g6(r.runtime_ms),
        ])
        .map_err(io_err)?;
    }
    w.flush().map_err(|e| Error::Io {
        path: "<csv>".into(),
        source: e,
    })?;
    Ok(())
}

fn json_number(x: f64) -> serde_json::Value {
    if x.is_finite() {
        serde_json::json!(x)
    } else {
        serde_json::Value::Null
    }
}

/// Writes rows as one JSON document with stable (alphabetical) key order;
/// non-finite numbers become `null`.
pub fn emit_json<W: IoWrite>(rows: &[ResultRow], mut writer: W) -> Result<()> {
    let items: Vec<serde_json::Value> = rows
        .iter()
        .map(|r| {
            serde_json::json!({
                "sweep_value": json_number(r.sweep_value),
                "variant": r.variant,
                "nmse_db": json_number(r.nmse_db),
                "overhead_proposed": r.overhead_proposed,
                "overhead_benchmark": r.overhead_benchmark,
                "trials_used": r.trials_used,
                "seed": r.seed,
                "runtime_ms": json_number(r.runtime_ms),
            })
        })
        .collect();
    let doc = serde_json::json!({ "rows": items });
    let text = serde_json::to_string_pretty(&doc).map_err(|e| Error::Io {
        path: "<json>".into(),
        source: std::io::Error::other(e),
    })?;
    writer
        .write_all(text.as_bytes())
        .and_then(|_| writer.write_all(b"\n"))
        .map_err(|e| Error::Io {
            path: "<json>".into(),
            source: e,
        })
}

/// Emits rows to a file in the requested format.
pub fn emit_results(rows: &[ResultRow], path: &str, format: OutputFormat) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::Io {
        path: path.into(),
        source: e,
    })?;
    match format {
        OutputFormat::Csv => emit_csv(rows, file),
        OutputFormat::Json => emit_json(rows, file),
    }
}

/// Accumulated outcome of one trial.
struct TrialContribution {
    acc: NmseAccumulator,
}

fn run_one_trial(
    spec: &ExperimentSpec,
    cfg: &SystemConfig,
    truth_dicts: &DictionarySet,
    est_dicts: &DictionarySet,
    i_als: usize,
    cell: usize,
    trial: usize,
) -> Result<TrialContribution> {
    let mut rng = stream(cfg.seed, &[cell as u64, trial as u64]);
    let mode = if spec.on_grid {
        SamplingMode::OnGrid
    } else {
        SamplingMode::Continuous
    };
    let channels = sample_scenario(cfg, mode, Some(truth_dicts), &mut rng)?;
    let mut patterns: Vec<TrainingPattern> = Vec::with_capacity(cfg.n_users);
    for k in 0..cfg.n_users {
        let tau = if k == 0 {
            spec.tau_typical
        } else {
            spec.tau_other
        };
        patterns.push(generate_training(
            cfg.m_ris,
            tau,
            spec.estimator.training,
            &mut rng,
        )?);
    }
    let obs = synthesize_observations(&channels, &patterns, cfg.tx_power, cfg.noise_var, &mut rng)?;
    let side = SideInfo::from_channels(&channels);
    let trial_est = estimate_trial(
        cfg,
        &obs,
        &patterns,
        est_dicts,
        &side,
        &spec.estimator,
        Some(i_als),
    )?;
    let mut acc = NmseAccumulator::default();
    acc.add(&trial_est.estimates, &channels, spec.estimator.nmse_mode)?;
    Ok(TrialContribution { acc })
}

/// Runs the experiment grid and returns one row per (sweep value, variant).
///
/// Failed trials are excluded from the averages and reflected in
/// `trials_used`; a cell where every trial fails reports `nmse_db = nan`.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<Vec<ResultRow>> {
    spec.validate()?;
    if spec.threads > 0 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(spec.threads)
            .build()
            .map_err(|e| Error::Estimation(format!("thread pool: {e}")))?;
        pool.install(|| run_experiment_inner(spec))
    } else {
        run_experiment_inner(spec)
    }
}

fn run_experiment_inner(spec: &ExperimentSpec) -> Result<Vec<ResultRow>> {
    // Scenario snapping always uses the proposed dictionaries so every
    // variant estimates the same realizations.
    let truth_dicts = build_dictionaries(&spec.base, &spec.estimator, VariantKind::ProposedAls)?;
    let baseline_dicts =
        build_dictionaries(&spec.base, &spec.estimator, VariantKind::FarFieldBaseline)?;

    let mut rows = Vec::new();
    for (cell, &value) in spec.sweep_values.iter().enumerate() {
        let cfg = spec.cell_config(value);
        cfg.validate()?;
        for variant in &spec.variants {
            let started = std::time::Instant::now();
            let i_als = spec.variant_iters(variant, value);
            let est_dicts = match variant.kind {
                VariantKind::FarFieldBaseline => &baseline_dicts,
                _ => &truth_dicts,
            };
            let j_paths = cfg.n_ue_paths[0] as u64;
            let (overhead_proposed, _) = pilot_overhead_proposed(
                cfg.n_users as u64,
                j_paths,
                cfg.n_ue as u64,
                cfg.m_ris as u64,
                cfg.n_bs_paths as u64,
                &spec.overhead_constants,
            )?;
            let overhead_benchmark = pilot_overhead_benchmark(
                cfg.n_users as u64,
                spec.overhead_q,
                cfg.n_bs_paths as u64,
                j_paths,
            )?;

            let (nmse_db, trials_used) = if spec.overhead_only {
                (f64::NAN, 0)
            } else {
                let outcomes: Vec<Result<TrialContribution>> = (0..spec.trials)
                    .into_par_iter()
                    .map(|trial| {
                        run_one_trial(spec, &cfg, &truth_dicts, est_dicts, i_als, cell, trial)
                    })
                    .collect();
                let mut acc = NmseAccumulator::default();
                let mut used = 0u64;
                for outcome in outcomes {
                    if let Ok(c) = outcome {
                        acc.numerator += c.acc.numerator;
                        acc.denominator += c.acc.denominator;
                        used += 1;
                    }
                }
                let db = if used > 0 && acc.denominator > 0.0 {
                    nmse_to_db(acc.numerator / acc.denominator)
                } else {
                    f64::NAN
                };
                (db, used)
            };

            let runtime_ms = if spec.timing {
                started.elapsed().as_secs_f64() * 1e3
            } else {
                0.0
            };
            rows.push(ResultRow {
                sweep_value: round_sig6(value),
                variant: variant.label.clone(),
                nmse_db: round_sig6(nmse_db),
                overhead_proposed,
                overhead_benchmark,
                trials_used,
                seed: spec.base.seed,
                runtime_ms: round_sig6(runtime_ms),
            });
        }
    }
    Ok(rows)
}

// ---- configuration files -------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    #[serde(default)]
    system: RawSystem,
    #[serde(default)]
    estimator: RawEstimator,
    #[serde(default)]
    experiment: RawExperiment,
    #[serde(default)]
    sweep: Option<RawSweep>,
    #[serde(default, rename = "variant")]
    variants: Vec<RawVariant>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum JPathsField {
    Shared(usize),
    PerUser(Vec<usize>),
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawSystem {
    n_bs: Option<usize>,
    n_ue: Option<usize>,
    m_ris: Option<usize>,
    n_users: Option<usize>,
    n_bs_paths: Option<usize>,
    n_ue_paths: Option<JPathsField>,
    carrier_hz: Option<f64>,
    spacing_bs: Option<f64>,
    spacing_ris: Option<f64>,
    spacing_ue: Option<f64>,
    tx_power: Option<f64>,
    noise_var: Option<f64>,
    /// Alternative to `noise_var`: nominal SNR target in dB.
    snr_db: Option<f64>,
    dist_bs_ris: Option<f64>,
    dist_ris_ue: Option<[f64; 2]>,
    gain_exponents: Option<[f64; 2]>,
    seed: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawEstimator {
    d_user: Option<usize>,
    polar_angles: Option<usize>,
    beta_delta: Option<f64>,
    polar_min_distance: Option<f64>,
    lookahead: Option<usize>,
    i_als: Option<usize>,
    als_rel_tol: Option<f64>,
    refine_grid: Option<usize>,
    offset_grid: Option<usize>,
    offset_refine_rounds: Option<usize>,
    jq_sparsity: Option<usize>,
    warm_start: Option<bool>,
    solver_tol: Option<f64>,
    training: Option<String>,
    nmse_mode: Option<String>,
    on_grid: Option<bool>,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawExperiment {
    trials: Option<usize>,
    tau_typical: Option<usize>,
    tau_other: Option<usize>,
    output_path: Option<String>,
    format: Option<String>,
    threads: Option<usize>,
    overhead_only: Option<bool>,
    overhead_q: Option<u64>,
    overhead_constants: Option<[f64; 3]>,
    timing: Option<bool>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    param: String,
    values: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawVariant {
    kind: String,
    i_als: Option<usize>,
    label: Option<String>,
}

fn parse_training(s: &str) -> Result<TrainingScheme> {
    match s {
        "random-phase" => Ok(TrainingScheme::RandomPhase),
        "dft-columns" => Ok(TrainingScheme::DftColumns),
        other => Err(Error::Config {
            key: "estimator.training".into(),
            reason: format!("unknown training scheme `{other}`"),
        }),
    }
}

fn training_str(t: TrainingScheme) -> &'static str {
    match t {
        TrainingScheme::RandomPhase => "random-phase",
        TrainingScheme::DftColumns => "dft-columns",
    }
}

fn parse_nmse_mode(s: &str) -> Result<NmseMode> {
    match s {
        "per-user-sum" => Ok(NmseMode::PerUserSum),
        "summed-channels" => Ok(NmseMode::SummedChannels),
        other => Err(Error::Config {
            key: "estimator.nmse_mode".into(),
            reason: format!("unknown nmse mode `{other}`"),
        }),
    }
}

fn nmse_mode_str(m: NmseMode) -> &'static str {
    match m {
        NmseMode::PerUserSum => "per-user-sum",
        NmseMode::SummedChannels => "summed-channels",
    }
}

impl ExperimentSpec {
    fn from_raw(raw: RawSpec) -> Result<Self> {
        let mut spec = ExperimentSpec::default();
        let s = raw.system;
        let base = &mut spec.base;
        if let Some(v) = s.n_bs {
            base.n_bs = v;
        }
        if let Some(v) = s.n_ue {
            base.n_ue = v;
        }
        if let Some(v) = s.m_ris {
            base.m_ris = v;
        }
        if let Some(v) = s.n_users {
            base.n_users = v;
        }
        if let Some(v) = s.n_bs_paths {
            base.n_bs_paths = v;
        }
        if let Some(v) = s.carrier_hz {
            base.carrier_hz = v;
        }
        // Spacings default to half the (possibly overridden) wavelength.
        let half = SPEED_OF_LIGHT / base.carrier_hz / 2.0;
        base.spacing_bs = s.spacing_bs.unwrap_or(half);
        base.spacing_ris = s.spacing_ris.unwrap_or(half);
        base.spacing_ue = s.spacing_ue.unwrap_or(half);
        if let Some(v) = s.tx_power {
            base.tx_power = v;
        }
        if let Some(v) = s.dist_bs_ris {
            base.dist_bs_ris = v;
        }
        if let Some([lo, hi]) = s.dist_ris_ue {
            base.dist_ris_ue = (lo, hi);
        }
        if let Some([a, b]) = s.gain_exponents {
            base.gain_exponents = (a, b);
        }
        if let Some(v) = s.seed {
            base.seed = v;
        }
        match s.n_ue_paths {
            Some(JPathsField::Shared(j)) => base.n_ue_paths = vec![j; base.n_users],
            Some(JPathsField::PerUser(v)) => base.n_ue_paths = v,
            None => base.n_ue_paths = vec![1; base.n_users],
        }
        // Noise: explicit variance wins, then an SNR target, then 10 dB.
        base.noise_var = match (s.noise_var, s.snr_db) {
            (Some(v), _) => v,
            (None, Some(snr)) => noise_var_for_snr_db(base, snr),
            (None, None) => noise_var_for_snr_db(base, 10.0),
        };

        let e = raw.estimator;
        let est = &mut spec.estimator;
        if let Some(v) = e.d_user {
            est.d_user = v;
        }
        if let Some(v) = e.polar_angles {
            est.polar_angles = v;
        }
        if let Some(v) = e.beta_delta {
            est.beta_delta = v;
        }
        if let Some(v) = e.polar_min_distance {
            est.polar_min_distance = v;
        }
        if let Some(v) = e.lookahead {
            est.lookahead = v;
        }
        if let Some(v) = e.i_als {
            est.i_als = v;
        }
        if let Some(v) = e.als_rel_tol {
            est.als_rel_tol = v;
        }
        if let Some(v) = e.refine_grid {
            est.refine_grid = v;
        }
        if let Some(v) = e.offset_grid {
            est.offset_grid = v;
        }
        if let Some(v) = e.offset_refine_rounds {
            est.offset_refine_rounds = v;
        }
        if let Some(v) = e.jq_sparsity {
            est.jq_sparsity = v;
        }
        if let Some(v) = e.warm_start {
            est.warm_start = v;
        }
        if let Some(v) = e.solver_tol {
            est.solver_tol = v;
        }
        if let Some(ref v) = e.training {
            est.training = parse_training(v)?;
        }
        if let Some(ref v) = e.nmse_mode {
            est.nmse_mode = parse_nmse_mode(v)?;
        }
        spec.on_grid = e.on_grid.unwrap_or(false);

        let x = raw.experiment;
        if let Some(v) = x.trials {
            spec.trials = v;
        }
        if let Some(v) = x.tau_typical {
            spec.tau_typical = v;
        }
        if let Some(v) = x.tau_other {
            spec.tau_other = v;
        }
        if let Some(v) = x.output_path {
            spec.output_path = v;
        }
        if let Some(ref v) = x.format {
            spec.format = OutputFormat::parse(v)?;
        }
        if let Some(v) = x.threads {
            spec.threads = v;
        }
        if let Some(v) = x.overhead_only {
            spec.overhead_only = v;
        }
        if let Some(v) = x.overhead_q {
            spec.overhead_q = v;
        }
        if let Some([c1, c2, c3]) = x.overhead_constants {
            spec.overhead_constants = OverheadConstants { c1, c2, c3 };
        }
        if let Some(v) = x.timing {
            spec.timing = v;
        }

        if let Some(sweep) = raw.sweep {
            spec.sweep_param = SweepParam::parse(&sweep.param)?;
            spec.sweep_values = sweep.values;
        }
        if !raw.variants.is_empty() {
            spec.variants = raw
                .variants
                .into_iter()
                .map(|v| {
                    let kind = VariantKind::parse(&v.kind)?;
                    let i_als = v.i_als.unwrap_or(spec.estimator.i_als);
                    let label = v.label.unwrap_or_else(|| match kind {
                        VariantKind::ProposedAls => format!("proposed-als-i{i_als}"),
                        other => other.as_str().to_string(),
                    });
                    Ok(VariantSpec {
                        kind,
                        i_als,
                        label,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
        }
        spec.validate()?;
        Ok(spec)
    }

    fn to_raw(&self) -> RawSpec {
        RawSpec {
            system: RawSystem {
                n_bs: Some(self.base.n_bs),
                n_ue: Some(self.base.n_ue),
                m_ris: Some(self.base.m_ris),
                n_users: Some(self.base.n_users),
                n_bs_paths: Some(self.base.n_bs_paths),
                n_ue_paths: Some(JPathsField::PerUser(self.base.n_ue_paths.clone())),
                carrier_hz: Some(self.base.carrier_hz),
                spacing_bs: Some(self.base.spacing_bs),
                spacing_ris: Some(self.base.spacing_ris),
                spacing_ue: Some(self.base.spacing_ue),
                tx_power: Some(self.base.tx_power),
                noise_var: Some(self.base.noise_var),
                snr_db: None,
                dist_bs_ris: Some(self.base.dist_bs_ris),
                dist_ris_ue: Some([self.base.dist_ris_ue.0, self.base.dist_ris_ue.1]),
                gain_exponents: Some([self.base.gain_exponents.0, self.base.gain_exponents.1]),
                seed: Some(self.base.seed),
            },
            estimator: RawEstimator {
                d_user: Some(self.estimator.d_user),
                polar_angles: Some(self.estimator.polar_angles),
                beta_delta: Some(self.estimator.beta_delta),
                polar_min_distance: Some(self.estimator.polar_min_distance),
                lookahead: Some(self.estimator.lookahead),
                i_als: Some(self.estimator.i_als),
                als_rel_tol: Some(self.estimator.als_rel_tol),
                refine_grid: Some(self.estimator.refine_grid),
                offset_grid: Some(self.estimator.offset_grid),
                offset_refine_rounds: Some(self.estimator.offset_refine_rounds),
                jq_sparsity: Some(self.estimator.jq_sparsity),
                warm_start: Some(self.estimator.warm_start),
                solver_tol: Some(self.estimator.solver_tol),
                training: Some(training_str(self.estimator.training).into()),
                nmse_mode: Some(nmse_mode_str(self.estimator.nmse_mode).into()),
                on_grid: Some(self.on_grid),
            },
            experiment: RawExperiment {
                trials: Some(self.trials),
                tau_typical: Some(self.tau_typical),
                tau_other: Some(self.tau_other),
                output_path: Some(self.output_path.clone()),
                format: Some(self.format.as_str().into()),
                threads: Some(self.threads),
                overhead_only: Some(self.overhead_only),
                overhead_q: Some(self.overhead_q),
                overhead_constants: Some([
                    self.overhead_constants.c1,
                    self.overhead_constants.c2,
                    self.overhead_constants.c3,
                ]),
                timing: Some(self.timing),
            },
            sweep: Some(RawSweep {
                param: self.sweep_param.as_str().into(),
                values: self.sweep_values.clone(),
            }),
            variants: self
                .variants
                .iter()
                .map(|v| RawVariant {
                    kind: v.kind.as_str().into(),
                    i_als: Some(v.i_als),
                    label: Some(v.label.clone()),
                })
                .collect(),
        }
    }

    /// Serializes the spec as a TOML document with every key explicit.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(&self.to_raw()).map_err(|e| Error::ConfigParse(e.to_string()))
    }

    /// Parses a TOML document; unspecified keys take the full-scale
    /// defaults.
    pub fn from_toml(text: &str) -> Result<Self> {
        let raw: RawSpec =
            toml::from_str(text).map_err(|e| Error::ConfigParse(e.message().to_string()))?;
        ExperimentSpec::from_raw(raw)
    }
}

/// Loads an experiment description from a TOML file.
pub fn load_config(path: &str) -> Result<ExperimentSpec> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.into(),
        source: e,
    })?;
    ExperimentSpec::from_toml(&text)
}

/// Saves an experiment description to a TOML file.
pub fn save_config(spec: &ExperimentSpec, path: &str) -> Result<()> {
    std::fs::write(path, spec.to_toml()?).map_err(|e| Error::Io {
        path: path.into(),
        source: e,
    })
}

// ---- presets ---------------------------------------------------------------

pub const PRESET_NAMES: &[&str] = &["exact-desk", "fig2-desk", "fig3"];

/// Built-in experiment presets.
///
/// * `exact-desk` — noiseless on-grid validation scenario; the full
///   pipeline must land below -60 dB NMSE in a single trial.
/// * `fig2-desk` — desk-scale NMSE-vs-path-count sweep at 10 dB SNR
///   comparing the refined estimator against its initialization, a deeper
///   refinement, and the far-field baseline.
/// * `fig3` — pilot-overhead formula sweep at full-scale dimensions
///   (no channel trials).
pub fn build_preset(name: &str) -> Result<ExperimentSpec> {
    match name {
        "exact-desk" => {
            let mut spec = ExperimentSpec::default();
            spec.base.n_bs = 16;
            spec.base.n_ue = 4;
            spec.base.m_ris = 32;
            spec.base.n_users = 2;
            spec.base.n_bs_paths = 2;
            spec.base.n_ue_paths = vec![1, 1];
            spec.base.noise_var = 0.0;
            spec.base.dist_ris_ue = (0.3, 3.0);
            spec.estimator.polar_min_distance = 0.25;
            spec.estimator.solver_tol = 1e-8;
            spec.estimator.training = TrainingScheme::DftColumns;
            spec.on_grid = true;
            spec.trials = 1;
            spec.tau_typical = 32;
            spec.tau_other = 32;
            spec.variants = vec![
                VariantSpec::new(VariantKind::ProposedAls, 3, "proposed-als-i3"),
                VariantSpec::new(VariantKind::ProposedInitOnly, 0, "proposed-init-only"),
            ];
            spec.output_path = "exact-desk.csv".into();
            Ok(spec)
        }
        "fig2-desk" => {
            let mut spec = ExperimentSpec::default();
            spec.base.n_bs = 32;
            spec.base.n_ue = 8;
            spec.base.m_ris = 64;
            spec.base.n_users = 2;
            spec.base.n_bs_paths = 2;
            spec.base.n_ue_paths = vec![2, 2];
            // Desk geometry: the BS sits just beyond the RIS aperture's
            // Rayleigh distance (~19.9 m), keeping the BS-RIS link far-field
            // while the users stay deep in the near field.
            spec.base.dist_bs_ris = 30.0;
            spec.base.dist_ris_ue = (1.0, 19.0);
            spec.base.noise_var = noise_var_for_snr_db(&spec.base, 10.0);
            // Grid-resident channels keep the comparison noise-limited
            // rather than dictionary-limited, which is the regime where the
            // refinement trends are meaningful at desk scale.
            spec.on_grid = true;
            spec.trials = 200;
            spec.tau_typical = 64;
            spec.tau_other = 96;
            spec.sweep_param = SweepParam::JPaths;
            spec.sweep_values = vec![1.0, 2.0, 3.0, 4.0];
            spec.variants = vec![
                VariantSpec::new(VariantKind::FarFieldBaseline, 3, "far-field-baseline"),
                VariantSpec::new(VariantKind::ProposedInitOnly, 0, "proposed-init-only"),
                VariantSpec::new(VariantKind::ProposedAls, 3, "proposed-als-i3"),
                VariantSpec::new(VariantKind::ProposedAls, 9, "proposed-als-i9"),
            ];
            spec.output_path = "fig2-desk.csv".into();
            Ok(spec)
        }
        "fig3" => {
            let mut spec = ExperimentSpec::default();
            spec.overhead_only = true;
            spec.trials = 1;
            spec.sweep_param = SweepParam::JPaths;
            spec.sweep_values = (1..=6).map(|j| j as f64).collect();
            spec.variants = vec![VariantSpec::new(VariantKind::ProposedAls, 3, "proposed")];
            spec.output_path = "fig3.csv".into();
            Ok(spec)
        }
        other => Err(Error::Config {
            key: "preset".into(),
            reason: format!(
                "unknown preset `{other}`; available: {}",
                PRESET_NAMES.join(", ")
            ),
        }),
    }
}

// ---- built-in validation suite ----------------------------------------------

/// Outcome of one self-check.
#[derive(Debug, Clone)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

/// Runs a quick invariant suite (steering norms, near/far consistency, the
/// vectorization identity, sparse recovery sanity, a noiseless end-to-end
/// run, and the overhead formulas).
pub fn validate_suite() -> Vec<CheckOutcome> {
    use crate::channel::{
        build_polar_dictionary, centered_steering_from_sine, near_field_steering,
        steering_from_sine,
    };
    use crate::linalg::{khatri_rao, vectorize};
    use crate::{CMat, CVec, Cplx};

    let mut out = Vec::new();
    let mut check = |name: &'static str, pass: bool, detail: String| {
        out.push(CheckOutcome { name, pass, detail });
    };

    // Steering vectors: unit modulus, squared norm = element count.
    {
        let mut worst = 0.0_f64;
        let mut rng = stream(101, &[]);
        for _ in 0..20 {
            use rand::Rng;
            let n = rng.random_range(2..40usize);
            let sine = rng.random::<f64>() * 2.0 - 1.0;
            let v = steering_from_sine(n, 0.005, 0.01, sine);
            worst = worst.max((v.norm_squared() - n as f64).abs());
            for e in v.iter() {
                worst = worst.max((e.norm() - 1.0).abs());
            }
        }
        check(
            "steering-norms",
            worst < 1e-10,
            format!("max deviation {worst:.2e}"),
        );
    }

    // Near-field limit approaches the centered far-field vector.
    {
        let mut worst = 0.0_f64;
        for &angle in &[0.0, 0.4, -0.9, 1.3] {
            let nf = near_field_steering(32, 0.005, 0.01, angle, 1e6 * 0.01).unwrap();
            let ff = centered_steering_from_sine(32, 0.005, 0.01, angle.sin());
            for (a, b) in nf.iter().zip(ff.iter()) {
                worst = worst.max((a / b).arg().abs());
            }
        }
        check(
            "near-field-limit",
            worst < 1e-3,
            format!("max phase dev {worst:.2e} rad"),
        );
    }

    // Vectorization identity vec(S Diag(h) E) = (E^T kr S) h.
    {
        let mut rng = stream(102, &[]);
        let mut worst = 0.0_f64;
        for _ in 0..20 {
            use rand::Rng;
            let l = rng.random_range(1..5usize);
            let m = rng.random_range(1..6usize);
            let t = rng.random_range(1..6usize);
            let s = CMat::from_fn(l, m, |_, _| crate::channel::complex_gaussian(&mut rng, 1.0));
            let e = CMat::from_fn(m, t, |_, _| crate::channel::complex_gaussian(&mut rng, 1.0));
            let h = CVec::from_fn(m, |_, _| crate::channel::complex_gaussian(&mut rng, 1.0));
            let direct = vectorize(&(&s * crate::stage1::diag_times(&h, &e)));
            let via_kr = khatri_rao(&e.transpose(), &s) * &h;
            let err = (&direct - &via_kr).norm() / direct.norm().max(1e-300);
            worst = worst.max(err);
        }
        check(
            "vectorization-identity",
            worst < 1e-12,
            format!("max rel err {worst:.2e}"),
        );
    }

    // Sparse recovery: 1-sparse exact.
    {
        let mut rng = stream(103, &[]);
        let mut a = CMat::from_fn(8, 16, |_, _| crate::channel::complex_gaussian(&mut rng, 1.0));
        for c in 0..16 {
            let n = a.column(c).norm();
            a.column_mut(c).scale_mut(1.0 / n);
        }
        let target = CVec::from_column_slice(a.column(5).as_slice()) * Cplx::new(2.0, -1.0);
        let sol = crate::sparse::omp(&a, &target, 1, 0.0);
        let pass = sol
            .as_ref()
            .map(|s| s.support == vec![5] && s.residual_norm < 1e-10)
            .unwrap_or(false);
        check("sparse-recovery", pass, format!("{sol:?}").chars().take(60).collect());
    }

    // Polar dictionary columns keep sqrt(M) norms.
    {
        let dict = build_polar_dictionary(16, 0.005, 0.01, 32, 1.2, 0.1).unwrap();
        let mut worst = 0.0_f64;
        for c in 0..dict.atoms.ncols() {
            worst = worst.max((dict.atoms.column(c).norm() - 4.0).abs());
        }
        check(
            "polar-column-norms",
            worst < 1e-10,
            format!("max deviation {worst:.2e}"),
        );
    }

    // Noiseless on-grid end-to-end run.
    {
        let result = build_preset("exact-desk").and_then(|spec| run_experiment(&spec));
        let (pass, detail) = match result {
            Ok(rows) => {
                let db = rows
                    .iter()
                    .find(|r| r.variant == "proposed-als-i3")
                    .map(|r| r.nmse_db)
                    .unwrap_or(f64::NAN);
                (db < -60.0, format!("proposed-als NMSE {db:.1} dB"))
            }
            Err(e) => (false, format!("{e}")),
        };
        check("noiseless-exact-recovery", pass, detail);
    }

    // Overhead formulas at full-scale parameters.
    {
        let mut pass = true;
        let mut detail = String::new();
        for (j, expect) in (1..=6u64).zip([292u64, 580, 868, 1156, 1444, 1732]) {
            let bench = pilot_overhead_benchmark(4, 24, 3, j).unwrap();
            let (prop, _) =
                pilot_overhead_proposed(4, j, 32, 256, 3, &OverheadConstants::default()).unwrap();
            if bench != expect || prop >= bench {
                pass = false;
            }
            detail = format!("J={j}: proposed {prop} benchmark {bench}");
        }
        check("pilot-overhead", pass, detail);
    }

    out
}
