//! Command-line harness: run experiments, emit presets, evaluate the
//! pilot-overhead formulas, and run the built-in validation suite.
//!
//! Exit codes: 0 on success, 1 for configuration problems, 2 for runtime
//! failures.

use clap::{Args, Parser, Subcommand};
use riscade_core::error::Error;
use riscade_core::harness::{
    build_preset, emit_results, load_config, run_experiment, save_config, validate_suite,
    ExperimentSpec, OutputFormat, PRESET_NAMES,
};
use riscade_core::metrics::{
    pilot_overhead_benchmark, pilot_overhead_proposed, OverheadConstants,
};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "riscade",
    about = "Cascaded channel estimation simulator for RIS-aided mmWave MIMO \
             with near-field user links",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment from a config file or a built-in preset.
    Run(RunArgs),
    /// Print a built-in preset as a TOML config (to stdout or --out).
    Preset(PresetArgs),
    /// Evaluate the pilot-overhead formulas over a path-count range.
    Overhead(OverheadArgs),
    /// Run the built-in invariant suite and report pass/fail.
    Validate,
}

#[derive(Args)]
struct RunArgs {
    /// Path to a TOML experiment config.
    #[arg(long, conflicts_with = "preset")]
    config: Option<String>,
    /// Name of a built-in preset.
    #[arg(long)]
    preset: Option<String>,
    /// Master seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Trial-count override.
    #[arg(long)]
    trials: Option<usize>,
    /// Output path override.
    #[arg(long)]
    out: Option<String>,
    /// Output format override.
    #[arg(long, value_parser = ["csv", "json"])]
    format: Option<String>,
    /// Worker thread count (0 = runtime default).
    #[arg(long)]
    threads: Option<usize>,
    /// Record wall-clock runtimes (breaks byte-level determinism).
    #[arg(long)]
    timing: bool,
}

#[derive(Args)]
struct PresetArgs {
    /// Preset name.
    name: String,
    /// Write the config here instead of stdout.
    #[arg(long)]
    out: Option<String>,
}

#[derive(Args)]
struct OverheadArgs {
    /// User count K.
    #[arg(long, default_value_t = 4)]
    users: u64,
    /// Per-user RIS path counts to sweep, inclusive range `lo..hi`.
    #[arg(long, default_value = "1..6")]
    paths: String,
    /// BS-RIS path count L.
    #[arg(long, default_value_t = 3)]
    bs_paths: u64,
    /// Benchmark phase-adjustment count Q.
    #[arg(long, default_value_t = 24)]
    q_phases: u64,
    /// User antenna count.
    #[arg(long, default_value_t = 32)]
    n_ue: u64,
    /// RIS element count.
    #[arg(long, default_value_t = 256)]
    m_ris: u64,
}

fn parse_range(s: &str) -> Result<(u64, u64), Error> {
    let parts: Vec<&str> = s.split("..").collect();
    let err = || Error::Config {
        key: "paths".into(),
        reason: format!("expected `lo..hi`, got `{s}`"),
    };
    if parts.len() != 2 {
        return Err(err());
    }
    let lo: u64 = parts[0].parse().map_err(|_| err())?;
    let hi: u64 = parts[1].parse().map_err(|_| err())?;
    if lo < 1 || hi < lo {
        return Err(err());
    }
    Ok((lo, hi))
}

fn load_spec(args: &RunArgs) -> Result<ExperimentSpec, Error> {
    let mut spec = match (&args.config, &args.preset) {
        (Some(path), None) => load_config(path)?,
        (None, Some(name)) => build_preset(name)?,
        (None, None) => ExperimentSpec::default(),
        (Some(_), Some(_)) => unreachable!("clap forbids both"),
    };
    if let Some(seed) = args.seed {
        spec.base.seed = seed;
    }
    if let Some(trials) = args.trials {
        spec.trials = trials;
    }
    if let Some(ref out) = args.out {
        spec.output_path = out.clone();
    }
    if let Some(ref format) = args.format {
        spec.format = OutputFormat::parse(format)?;
    }
    if let Some(threads) = args.threads {
        spec.threads = threads;
    }
    if args.timing {
        spec.timing = true;
    }
    spec.validate()?;
    Ok(spec)
}

fn cmd_run(args: RunArgs) -> Result<(), Error> {
    let spec = load_spec(&args)?;
    let rows = run_experiment(&spec)?;
    emit_results(&rows, &spec.output_path, spec.format)?;
    eprintln!(
        "wrote {} rows to {} ({})",
        rows.len(),
        spec.output_path,
        spec.format.as_str()
    );
    Ok(())
}

fn cmd_preset(args: PresetArgs) -> Result<(), Error> {
    let spec = build_preset(&args.name)?;
    let text = spec.to_toml()?;
    match args.out {
        Some(path) => {
            save_config(&spec, &path)?;
            eprintln!("wrote preset `{}` to {path}", args.name);
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn cmd_overhead(args: OverheadArgs) -> Result<(), Error> {
    let (lo, hi) = parse_range(&args.paths)?;
    let constants = OverheadConstants::default();
    println!("j_paths,overhead_proposed,overhead_benchmark");
    for j in lo..=hi {
        let (prop, _) = pilot_overhead_proposed(
            args.users,
            j,
            args.n_ue,
            args.m_ris,
            args.bs_paths,
            &constants,
        )?;
        let bench = pilot_overhead_benchmark(args.users, args.q_phases, args.bs_paths, j)?;
        println!("{j},{prop},{bench}");
    }
    Ok(())
}

fn cmd_validate() -> Result<(), Error> {
    let outcomes = validate_suite();
    let mut all_pass = true;
    for o in &outcomes {
        println!(
            "[{}] {:<26} {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.name,
            o.detail
        );
        all_pass &= o.pass;
    }
    if all_pass {
        Ok(())
    } else {
        Err(Error::Estimation("validation suite failed".into()))
    }
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Config { .. } | Error::ConfigParse(_) | Error::InvalidArgument(_) => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help/version requests are successes; argument errors are
            // config errors.
            let is_help = matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            );
            let _ = e.print();
            return if is_help {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            };
        }
    };
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Preset(args) => cmd_preset(args),
        Command::Overhead(args) => cmd_overhead(args),
        Command::Validate => cmd_validate(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
