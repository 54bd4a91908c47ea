//! JSON config schemas accepted by the CLI subcommands.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use randstab::dynamics::{MapSystem, SimOptions};
use randstab::linalg::SquareMatrix;
use randstab::lyapunov::EstimateKind;
use randstab::noise::NoiseModel;
use randstab::synth::SynthesisRequest;

pub const DEFAULT_SEED: u64 = 42;

fn default_seed() -> u64 {
    DEFAULT_SEED
}

fn default_samples() -> u64 {
    100_000
}

fn default_product_horizon() -> u64 {
    10_000
}

fn default_replicates() -> u64 {
    10
}

/// The bundled experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExampleId {
    #[serde(rename = "ex1d_1")]
    Ex1d1,
    #[serde(rename = "ex1d_2")]
    Ex1d2,
    #[serde(rename = "ex2d_1")]
    Ex2d1,
    #[serde(rename = "ex2d_2a")]
    Ex2d2a,
    #[serde(rename = "ex2d_2b")]
    Ex2d2b,
    #[serde(rename = "custom")]
    Custom,
}

impl ExampleId {
    pub fn as_str(&self) -> &'static str {
        match self {
            ExampleId::Ex1d1 => "ex1d_1",
            ExampleId::Ex1d2 => "ex1d_2",
            ExampleId::Ex2d1 => "ex2d_1",
            ExampleId::Ex2d2a => "ex2d_2a",
            ExampleId::Ex2d2b => "ex2d_2b",
            ExampleId::Custom => "custom",
        }
    }
}

/// Optional parameter overrides; anything left out takes the example's
/// published default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Overrides {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

/// Config for the `example` subcommand. A manifest written by a previous
/// run parses back into this (extra fields such as the tool version are
/// ignored), which is what makes bundles reproducible from their manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub example_id: ExampleId,
    #[serde(default)]
    pub overrides: Overrides,
    /// Full system description, required when example_id = custom.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub custom: Option<MapSystem>,
}

/// Config for the `simulate` subcommand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateConfig {
    pub system: MapSystem,
    pub x0: Vec<f64>,
    #[serde(default)]
    pub options: SimOptions,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

/// Config for the `lyapunov` subcommand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovConfig {
    pub a: SquareMatrix,
    pub noise: NoiseModel,
    pub kind: EstimateKind,
    #[serde(default = "default_samples")]
    pub samples: u64,
    #[serde(default = "default_product_horizon")]
    pub horizon: u64,
    #[serde(default = "default_replicates")]
    pub replicates: u64,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

/// Config for the `margin` subcommand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginConfig {
    pub noise: NoiseModel,
    pub epsilon: f64,
    #[serde(default)]
    pub kappa: f64,
}

/// Config for the `synth` subcommand: a synthesis request plus estimator
/// controls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    #[serde(flatten)]
    pub request: SynthesisRequest,
    #[serde(default = "default_samples")]
    pub samples: u64,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

/// Config for the `validate-noise` subcommand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidateNoiseConfig {
    pub model: NoiseModel,
    pub eps_sequence: Vec<f64>,
}
