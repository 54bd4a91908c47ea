//! Argument parsing and subcommand dispatch.
//!
//! Exit codes: 0 success, 1 validation error, 2 numerical non-convergence,
//! 3 I/O error. Bad input never panics.

use std::ffi::OsString;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;

use randstab::dynamics::{simulate, StopReason};
use randstab::lyapunov::{
    analytic_margin, per_step_log_norm_estimate, product_lyapunov_estimate, EstimateKind,
};
use randstab::noise::validate_moments;
use randstab::synth::synthesize;
use randstab::Error as CoreError;

use crate::config::{
    ExperimentConfig, LyapunovConfig, MarginConfig, SimulateConfig, SynthConfig,
    ValidateNoiseConfig,
};
use crate::experiments::{run_example, write_json};

/// CLI-level error with its process exit code.
#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Numeric(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Numeric(_) => 2,
            CliError::Io(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(msg) => write!(f, "validation error: {msg}"),
            CliError::Numeric(msg) => write!(f, "numerical error: {msg}"),
            CliError::Io(msg) => write!(f, "i/o error: {msg}"),
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::NonConvergence { .. } | CoreError::BalanceUnreachable { .. } => {
                CliError::Numeric(e.to_string())
            }
            other => CliError::Validation(other.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "randstab",
    version,
    about = "Randomly perturbed maps: simulation, Lyapunov estimation, stability margins, and stabilizing-noise synthesis"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Path to the JSON config for this subcommand.
    #[arg(long)]
    config: PathBuf,
    /// Override the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output path (file for single artifacts, directory for bundles).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override trial counts (samples / replicates / escape trials).
    #[arg(long)]
    trials: Option<u64>,
    /// Override the horizon.
    #[arg(long)]
    horizon: Option<u64>,
    /// Suppress the human-readable summary.
    #[arg(long)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one trajectory and write it as CSV.
    Simulate(CommonArgs),
    /// Estimate a per-step or product Lyapunov quantity.
    Lyapunov(CommonArgs),
    /// Leading-order stabilization margin for a noise model.
    Margin(CommonArgs),
    /// Design stabilizing noise for a weakly unstable matrix.
    Synth(CommonArgs),
    /// Run a bundled experiment and write its artifact bundle.
    Example(CommonArgs),
    /// Check the moment conditions of a noise model along an eps sequence.
    ValidateNoise(CommonArgs),
}

/// Parse argv and run. Returns the process exit code.
pub fn dispatch<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            // clap renders help/version to stdout and errors to stderr
            let _ = e.print();
            return code;
        }
    };

    let result = match &cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Lyapunov(args) => cmd_lyapunov(args),
        Command::Margin(args) => cmd_margin(args),
        Command::Synth(args) => cmd_synth(args),
        Command::Example(args) => cmd_example(args),
        Command::ValidateNoise(args) => cmd_validate_noise(args),
    };

    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}

fn load_config<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("reading config {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Validation(format!("parsing {}: {e}", path.display())))
}

fn cmd_simulate(args: &CommonArgs) -> Result<(), CliError> {
    let mut cfg: SimulateConfig = load_config(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(h) = args.horizon {
        cfg.options.horizon = h as usize;
    }
    let traj = simulate(&cfg.system, &cfg.x0, &cfg.options, cfg.seed)?;
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("trajectory.csv"));
    let file = fs::File::create(&out)
        .map_err(|e| CliError::Io(format!("creating {}: {e}", out.display())))?;
    traj.write_csv(std::io::BufWriter::new(file))
        .map_err(|e| CliError::Io(format!("writing {}: {e}", out.display())))?;
    if !args.quiet {
        let stop = match traj.stopped {
            StopReason::Horizon => "reached horizon".to_string(),
            StopReason::Escaped { radius } => format!("escaped radius {radius}"),
            StopReason::Converged { threshold } => format!("converged below {threshold}"),
        };
        println!(
            "simulated {} steps ({stop}), final |x| = {:.6e}, wrote {}",
            traj.len() - 1,
            traj.final_norm(),
            out.display()
        );
    }
    Ok(())
}

fn cmd_lyapunov(args: &CommonArgs) -> Result<(), CliError> {
    let mut cfg: LyapunovConfig = load_config(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(h) = args.horizon {
        cfg.horizon = h;
    }
    if let Some(t) = args.trials {
        match cfg.kind {
            EstimateKind::PerStepNorm => cfg.samples = t,
            EstimateKind::ProductNorm => cfg.replicates = t,
        }
    }
    let est = match cfg.kind {
        EstimateKind::PerStepNorm => {
            per_step_log_norm_estimate(&cfg.a, &cfg.noise, cfg.samples, cfg.seed)?
        }
        EstimateKind::ProductNorm => {
            product_lyapunov_estimate(&cfg.a, &cfg.noise, cfg.horizon, cfg.replicates, cfg.seed)?
        }
    };
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("lyapunov.json"));
    write_json(&out, &est)?;
    if !args.quiet {
        println!(
            "{:?}: mean {:.6} nats/step (se {:.2e}, {} samples), wrote {}",
            est.kind,
            est.mean,
            est.std_error,
            est.samples,
            out.display()
        );
    }
    Ok(())
}

fn cmd_margin(args: &CommonArgs) -> Result<(), CliError> {
    let cfg: MarginConfig = load_config(&args.config)?;
    let report = analytic_margin(&cfg.noise, cfg.epsilon, cfg.kappa)?;
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("margin.json"));
    write_json(&out, &report)?;
    if !args.quiet {
        println!(
            "margin {:.6} (|sigma|^2 = {:.6}, ratio {:.3}) -> {:?}, wrote {}",
            report.taylor_margin,
            report.sigma_norm_sq,
            report.halfsq_ratio,
            report.verdict,
            out.display()
        );
    }
    Ok(())
}

fn cmd_synth(args: &CommonArgs) -> Result<(), CliError> {
    let mut cfg: SynthConfig = load_config(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(t) = args.trials {
        cfg.samples = t;
    }
    let result = synthesize(&cfg.request, cfg.samples, cfg.seed)?;
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("synth.json"));
    write_json(&out, &result)?;
    if !args.quiet {
        println!(
            "synthesized {} model: margin {:.6}, certificate {:?}, wrote {}",
            result.model.structure.name(),
            result.margin.taylor_margin,
            result.certificate,
            out.display()
        );
        if let Some(w) = &result.warning {
            println!("warning: {w}");
        }
    }
    Ok(())
}

fn cmd_example(args: &CommonArgs) -> Result<(), CliError> {
    let mut cfg: ExperimentConfig = load_config(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.overrides.seed = Some(seed);
    }
    if let Some(h) = args.horizon {
        cfg.overrides.horizon = Some(h as usize);
    }
    if let Some(t) = args.trials {
        cfg.overrides.trials = Some(t as usize);
    }
    if let Some(out) = &args.out {
        cfg.overrides.output_dir = Some(out.clone());
    }
    let artifacts = run_example(&cfg)?;
    if !args.quiet {
        let r = &artifacts.report;
        println!(
            "{}: margin {:.6} ({:?}), per-step {:.6}, product {:.6}, criterion {:?}",
            r.example_id,
            r.margin.taylor_margin,
            r.margin.verdict,
            r.per_step.mean,
            r.product.mean,
            r.criterion
        );
        println!(
            "escape probabilities {:?} -> {:?}",
            r.stability.escape_probs, r.stability.verdict
        );
        println!("bundle written to {}", artifacts.output_dir.display());
    }
    Ok(())
}

fn cmd_validate_noise(args: &CommonArgs) -> Result<(), CliError> {
    let cfg: ValidateNoiseConfig = load_config(&args.config)?;
    let validation = validate_moments(&cfg.model, &cfg.eps_sequence)?;
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("validation.json"));
    write_json(&out, &validation)?;
    if !args.quiet {
        if validation.passed() {
            println!("all moment conditions hold, wrote {}", out.display());
        } else {
            println!(
                "violated conditions: {:?}, wrote {}",
                validation.violations,
                out.display()
            );
        }
    }
    Ok(())
}
