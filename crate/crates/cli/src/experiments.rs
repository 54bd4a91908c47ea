//! The bundled experiments: build each example system, run the trajectory
//! pair, the escape study, and the estimators, and write a figure-ready
//! bundle (two CSVs, report.json, manifest.json).

use std::fs;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use randstab::dynamics::{
    deterministic_comparison, escape_probability, fit_decay_envelope, simulate_stream, MapSystem,
    SimOptions, StabilityReport, StopReason,
};
use randstab::linalg::{balance, decompose_jordan_like, operator_norm, SquareMatrix};
use randstab::lyapunov::{
    analytic_margin, check_stability_criterion, per_step_log_norm_estimate,
    product_lyapunov_estimate, CriterionVerdict, LyapunovEstimate, MarginReport,
};
use randstab::noise::{BaseFamily, GainLaw, NoiseModel};
use randstab::rng::RngStream;

use crate::config::{ExampleId, ExperimentConfig, Overrides, DEFAULT_SEED};
use crate::dispatch::CliError;

const DEFAULT_HORIZON: usize = 10_000;
const DEFAULT_TRIALS: usize = 1_000;
const PER_STEP_SAMPLES: u64 = 100_000;
const PRODUCT_REPLICATES: u64 = 10;
const ESCAPE_BALL: f64 = 0.1;
const ESCAPE_RADII: [f64; 3] = [1e-2, 1e-3, 1e-4];
/// Trajectories for the figure CSVs run without an effective escape cap so
/// growing deterministic companions record the full horizon; 1e300 still
/// stops runaway states before they overflow.
const TRAJECTORY_CAP: f64 = 1e300;
/// The logistic convergence study counts |x_n| below this at the study
/// horizon.
const CONVERGENCE_THRESHOLD: f64 = 1e-6;
const CONVERGENCE_HORIZON: usize = 2_000;
/// Kappa budget used when a nonnormal example is balanced for reporting.
const BALANCE_KAPPA: f64 = 0.01;

/// Everything an example run needs, after defaults and overrides resolve.
#[derive(Debug, Clone)]
pub struct ResolvedExperiment {
    pub example_id: ExampleId,
    pub epsilon: f64,
    pub rho: f64,
    pub horizon: usize,
    pub trials: usize,
    pub seed: u64,
    pub x0: Vec<f64>,
    pub output_dir: PathBuf,
    pub system: MapSystem,
    /// Model whose diagonal gains express the effective noise variance
    /// sigma^2 = rho * eps; used for the analytic margin.
    pub margin_model: NoiseModel,
}

/// Fraction of noisy trials that ended near the origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceStudy {
    pub threshold: f64,
    pub horizon: usize,
    pub trials: usize,
    pub converged_fraction: f64,
    pub escaped_fraction: f64,
}

/// Balancing info reported for the nonnormal examples, including the
/// shared-single-draw certificate on the balanced matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalancingInfo {
    pub t: u64,
    pub kappa: f64,
    pub diagonal_certificate: CriterionVerdict,
    pub diagonal_certificate_estimate: LyapunovEstimate,
}

/// report.json payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleReport {
    pub example_id: String,
    pub margin: MarginReport,
    pub per_step: LyapunovEstimate,
    pub product: LyapunovEstimate,
    pub criterion: CriterionVerdict,
    pub stability: StabilityReport,
    pub noisy_final_norm: f64,
    pub noisy_decay_slope: Option<f64>,
    pub deterministic_final_norm: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub balancing: Option<BalancingInfo>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub convergence: Option<ConvergenceStudy>,
}

/// manifest.json payload: a valid `example` config with every parameter
/// resolved, plus the tool version.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub example_id: ExampleId,
    pub overrides: Overrides,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub custom: Option<MapSystem>,
    pub tool_version: String,
}

/// Paths written by a run.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub output_dir: PathBuf,
    pub noisy_csv: PathBuf,
    pub deterministic_csv: PathBuf,
    pub report_json: PathBuf,
    pub manifest_json: PathBuf,
    pub report: ExampleReport,
}

pub fn resolve(cfg: &ExperimentConfig) -> Result<ResolvedExperiment, CliError> {
    let (def_eps, def_rho) = match cfg.example_id {
        ExampleId::Ex1d1 => (0.005, 4.0),
        ExampleId::Ex1d2 => (0.05, 3.0),
        ExampleId::Ex2d1 => (0.01, 5.0),
        ExampleId::Ex2d2a => (0.01, 5.0),
        ExampleId::Ex2d2b => (0.01, 10.0),
        ExampleId::Custom => (f64::NAN, f64::NAN),
    };
    let o = &cfg.overrides;
    let horizon = o.horizon.unwrap_or(DEFAULT_HORIZON);
    let trials = o.trials.unwrap_or(DEFAULT_TRIALS);
    let seed = o.seed.unwrap_or(DEFAULT_SEED);
    let output_dir = o
        .output_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from("out").join(cfg.example_id.as_str()));

    if cfg.example_id == ExampleId::Custom {
        let system = cfg.custom.clone().ok_or_else(|| {
            CliError::Validation("example_id = custom requires a `custom` system".into())
        })?;
        system.validate()?;
        let epsilon = o.epsilon.unwrap_or(system.noise.epsilon);
        let rho = o.rho.unwrap_or(0.0);
        let x0 = o.x0.clone().unwrap_or_else(|| {
            let mut v = vec![0.0; system.dim()];
            v[0] = 1e-3;
            v
        });
        let margin_model = system.noise.clone();
        return Ok(ResolvedExperiment {
            example_id: cfg.example_id,
            epsilon,
            rho,
            horizon,
            trials,
            seed,
            x0,
            output_dir,
            system,
            margin_model,
        });
    }

    let epsilon = o.epsilon.unwrap_or(def_eps);
    let rho = o.rho.unwrap_or(def_rho);
    let sigma = (rho * epsilon).sqrt();

    let (system, margin_model, default_x0): (MapSystem, NoiseModel, Vec<f64>) = match cfg.example_id
    {
        ExampleId::Ex1d1 => {
            // x' = (1 + eps + sigma xi) x, realized as B = A (a xi I)
            // with a = sigma / (1 + eps)
            let gain = GainLaw::Const {
                value: sigma / (1.0 + epsilon),
            };
            let noise = NoiseModel::diagonal_scalar(1, gain, BaseFamily::Gaussian, epsilon)?;
            let sys = MapSystem::linear(SquareMatrix::diagonal(&[1.0 + epsilon]), noise)?;
            let margin = NoiseModel::diagonal_scalar(
                1,
                GainLaw::SqrtEps { rho },
                BaseFamily::Gaussian,
                epsilon,
            )?;
            (sys, margin, vec![1e-3])
        }
        ExampleId::Ex1d2 => {
            let lambda = 1.0 + epsilon;
            let gain = GainLaw::Const {
                value: sigma / lambda,
            };
            let noise = NoiseModel::diagonal_scalar(1, gain, BaseFamily::Gaussian, epsilon)?;
            let sys = MapSystem::logistic(lambda, noise)?;
            let margin = NoiseModel::diagonal_scalar(
                1,
                GainLaw::SqrtEps { rho },
                BaseFamily::Gaussian,
                epsilon,
            )?;
            (sys, margin, vec![0.3])
        }
        ExampleId::Ex2d1 => {
            let a = SquareMatrix::diagonal(&[1.0 + epsilon, 0.5]);
            let noise = NoiseModel::planar_example(epsilon, rho)?;
            let sys = MapSystem::linear(a, noise.clone())?;
            (sys, noise, vec![1e-3, 0.0])
        }
        ExampleId::Ex2d2a | ExampleId::Ex2d2b => {
            let a = SquareMatrix::from_rows(&[vec![1.0 + epsilon, 0.1], vec![0.0, 1.0 + epsilon]])?;
            let noise = NoiseModel::planar_example(epsilon, rho)?;
            let sys = MapSystem::linear(a, noise.clone())?;
            (sys, noise, vec![1e-3, 0.0])
        }
        ExampleId::Custom => unreachable!("handled above"),
    };

    Ok(ResolvedExperiment {
        example_id: cfg.example_id,
        epsilon,
        rho,
        horizon,
        trials,
        seed,
        x0: o.x0.clone().unwrap_or(default_x0),
        output_dir,
        system,
        margin_model,
    })
}

// Component seeds: each part of the bundle gets its own stream family so
// draws never alias between components.
fn seed_for(base: u64, component: u64) -> u64 {
    base.wrapping_add(component)
}

pub fn run_example(cfg: &ExperimentConfig) -> Result<RunArtifacts, CliError> {
    let exp = resolve(cfg)?;
    fs::create_dir_all(&exp.output_dir)
        .map_err(|e| CliError::Io(format!("creating {}: {e}", exp.output_dir.display())))?;

    let traj_opts = SimOptions {
        horizon: exp.horizon,
        escape_radius: TRAJECTORY_CAP,
        converge_threshold: 0.0,
        retain_states: false,
    };
    let (noisy, deterministic) =
        deterministic_comparison(&exp.system, &exp.x0, &traj_opts, seed_for(exp.seed, 0))?;

    let burn = exp.horizon / 10;
    let noisy_decay_slope = fit_decay_envelope(&noisy, burn).ok().map(|f| f.log_mu);

    let stability = escape_probability(
        &exp.system,
        &ESCAPE_RADII,
        exp.trials,
        exp.horizon,
        ESCAPE_BALL,
        seed_for(exp.seed, 1),
    )?;

    let per_step = per_step_log_norm_estimate(
        &exp.system.a,
        &exp.system.noise,
        PER_STEP_SAMPLES,
        seed_for(exp.seed, 2),
    )?;
    let product = product_lyapunov_estimate(
        &exp.system.a,
        &exp.system.noise,
        exp.horizon.max(1000) as u64,
        PRODUCT_REPLICATES,
        seed_for(exp.seed, 3),
    )?;
    let (criterion, _) = check_stability_criterion(
        &exp.system.a,
        &exp.system.noise,
        PER_STEP_SAMPLES,
        seed_for(exp.seed, 2),
    )?;

    // Nonnormal examples report the balanced system and the
    // single-draw certificate on it.
    let balancing = match exp.example_id {
        ExampleId::Ex2d2a | ExampleId::Ex2d2b => {
            let dec = decompose_jordan_like(&exp.system.a)?;
            let (t, balanced) = balance(&dec, BALANCE_KAPPA)?;
            let achieved = operator_norm(&balanced.sub(&dec.block_diag))?;
            let diag_model = NoiseModel::diagonal_scalar(
                2,
                GainLaw::SqrtEps { rho: exp.rho },
                BaseFamily::Gaussian,
                exp.epsilon,
            )?;
            let (verdict, estimate) = check_stability_criterion(
                &balanced,
                &diag_model,
                PER_STEP_SAMPLES,
                seed_for(exp.seed, 5),
            )?;
            Some(BalancingInfo {
                t,
                kappa: achieved,
                diagonal_certificate: verdict,
                diagonal_certificate_estimate: estimate,
            })
        }
        _ => None,
    };

    // Margin kappa: the coupling norm after balancing when the example was
    // balanced, otherwise the strictly-upper coupling of A as given (zero
    // for the diagonal and scalar examples).
    let kappa = match &balancing {
        Some(info) => info.kappa,
        None => decompose_jordan_like(&exp.system.a)
            .ok()
            .map(|dec| operator_norm(&dec.upper))
            .transpose()?
            .unwrap_or(0.0),
    };
    let margin = analytic_margin(&exp.margin_model, exp.epsilon, kappa)?;

    let convergence = match exp.example_id {
        ExampleId::Ex1d2 => Some(convergence_study(&exp)?),
        _ => None,
    };

    let report = ExampleReport {
        example_id: exp.example_id.as_str().to_string(),
        margin,
        per_step,
        product,
        criterion,
        stability,
        noisy_final_norm: noisy.final_norm(),
        noisy_decay_slope,
        deterministic_final_norm: deterministic.final_norm(),
        balancing,
        convergence,
    };

    let manifest = Manifest {
        example_id: exp.example_id,
        overrides: Overrides {
            epsilon: Some(exp.epsilon),
            rho: Some(exp.rho),
            horizon: Some(exp.horizon),
            trials: Some(exp.trials),
            seed: Some(exp.seed),
            x0: Some(exp.x0.clone()),
            output_dir: Some(exp.output_dir.clone()),
        },
        custom: cfg.custom.clone(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
    };

    let noisy_csv = exp.output_dir.join("noisy.csv");
    let deterministic_csv = exp.output_dir.join("deterministic.csv");
    let report_json = exp.output_dir.join("report.json");
    let manifest_json = exp.output_dir.join("manifest.json");

    write_csv(&noisy_csv, &noisy)?;
    write_csv(&deterministic_csv, &deterministic)?;
    write_json(&report_json, &report)?;
    write_json(&manifest_json, &manifest)?;

    Ok(RunArtifacts {
        output_dir: exp.output_dir,
        noisy_csv,
        deterministic_csv,
        report_json,
        manifest_json,
        report,
    })
}

fn convergence_study(exp: &ResolvedExperiment) -> Result<ConvergenceStudy, CliError> {
    let opts = SimOptions {
        horizon: CONVERGENCE_HORIZON,
        escape_radius: 1e6,
        converge_threshold: 0.0,
        retain_states: false,
    };
    let seed = seed_for(exp.seed, 4);
    let mut converged = 0usize;
    let mut escaped = 0usize;
    for trial in 0..exp.trials {
        let stream = RngStream::derive(seed, trial as u64);
        let traj = simulate_stream(&exp.system, &exp.x0, &opts, stream)?;
        match traj.stopped {
            StopReason::Escaped { .. } => escaped += 1,
            _ => {
                if traj.final_norm() < CONVERGENCE_THRESHOLD {
                    converged += 1;
                }
            }
        }
    }
    Ok(ConvergenceStudy {
        threshold: CONVERGENCE_THRESHOLD,
        horizon: CONVERGENCE_HORIZON,
        trials: exp.trials,
        converged_fraction: converged as f64 / exp.trials as f64,
        escaped_fraction: escaped as f64 / exp.trials as f64,
    })
}

fn write_csv(path: &PathBuf, traj: &randstab::dynamics::Trajectory) -> Result<(), CliError> {
    let file = fs::File::create(path)
        .map_err(|e| CliError::Io(format!("creating {}: {e}", path.display())))?;
    let mut writer = std::io::BufWriter::new(file);
    traj.write_csv(&mut writer)
        .map_err(|e| CliError::Io(format!("writing {}: {e}", path.display())))
}

pub(crate) fn write_json<T: Serialize>(path: &PathBuf, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Validation(format!("serializing {}: {e}", path.display())))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::Io(format!("writing {}: {e}", path.display())))
}
