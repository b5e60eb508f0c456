//! Per-command JSON configuration. Every field has a default, and the fully
//! resolved config is echoed into the run manifest.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use genrl::empolicy::EmConfig;
use genrl::evalmetrics::EvalConfig;
use genrl::genmodels::{Architecture, TrainConfig};
use genrl::trajenv::Environment;

use crate::failure::Failure;

fn linear_env() -> Environment {
    Environment::linear()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct GenDataConfig {
    pub env: Environment,
    pub count: usize,
    pub noise_scale: f64,
    pub seed: u64,
    /// Grid resolution of the coverage check (cells per side).
    pub coverage_cells: usize,
}

impl Default for GenDataConfig {
    fn default() -> Self {
        Self {
            env: linear_env(),
            count: 4000,
            noise_scale: 0.05,
            seed: 0,
            coverage_cells: 10,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKindArg {
    Vae,
    Infogan,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainModelConfig {
    pub dataset: PathBuf,
    pub kind: ModelKindArg,
    pub latent_dim: usize,
    pub kl_target: f64,
    pub lambda: f64,
    pub train: TrainConfig,
    pub arch: Architecture,
    /// Train the full grid: latent sizes × three hyperparameter values.
    pub grid: bool,
    pub grid_latent_dims: Vec<usize>,
    pub grid_kl_targets: Vec<f64>,
    pub grid_lambdas: Vec<f64>,
    /// Train on only the first `n` trajectories of the dataset.
    pub subset: Option<usize>,
    /// Output id; derived from kind and hyperparameters when absent.
    pub id: Option<String>,
}

impl Default for TrainModelConfig {
    fn default() -> Self {
        Self {
            dataset: PathBuf::from("dataset.json"),
            kind: ModelKindArg::Vae,
            latent_dim: 2,
            kl_target: 2.5,
            lambda: 1.5,
            train: TrainConfig::default(),
            arch: Architecture::default(),
            grid: false,
            grid_latent_dims: vec![2, 3, 6],
            grid_kl_targets: vec![1.5, 2.5, 3.5],
            grid_lambdas: vec![0.1, 1.5, 3.5],
            subset: None,
            id: None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalFileConfig {
    /// Model files or directories holding `*.model.json`.
    pub models: Vec<PathBuf>,
    pub dataset: PathBuf,
    pub metrics: EvalConfig,
    pub seed: u64,
}

impl Default for EvalFileConfig {
    fn default() -> Self {
        Self {
            models: vec![],
            dataset: PathBuf::from("dataset.json"),
            metrics: EvalConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainPolicyConfig {
    /// Model files or directories holding `*.model.json`.
    pub models: Vec<PathBuf>,
    pub env: Environment,
    pub em: EmConfig,
    pub seeds: Vec<u64>,
}

impl Default for TrainPolicyConfig {
    fn default() -> Self {
        Self {
            models: vec![],
            env: linear_env(),
            em: EmConfig::default(),
            seeds: vec![0, 1, 2],
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct CorrelateConfig {
    /// Report files or directories holding `*.report.json`.
    pub reports: Vec<PathBuf>,
    /// Label files or directories holding `*.label.json`.
    pub labels: Vec<PathBuf>,
    pub permutations: usize,
    pub seed: u64,
}

impl Default for CorrelateConfig {
    fn default() -> Self {
        Self {
            reports: vec![],
            labels: vec![],
            permutations: 10_000,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ReportConfig {
    pub correlation: PathBuf,
    pub reports: Vec<PathBuf>,
}

/// Reads a config file; a missing `--config` yields all defaults. Relative
/// paths inside the config resolve against the config file's directory.
pub fn load<T: Default + for<'de> Deserialize<'de>>(path: Option<&Path>) -> Result<T, Failure> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Missing(format!("config {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::Config(format!("config {}: {e}", path.display())))
}

pub fn resolve(base: Option<&Path>, p: &Path) -> PathBuf {
    match base.and_then(Path::parent) {
        Some(dir) if p.is_relative() => dir.join(p),
        _ => p.to_path_buf(),
    }
}

/// Expands directories into their files ending in `suffix` (sorted).
pub fn expand(base: Option<&Path>, entries: &[PathBuf], suffix: &str) -> Result<Vec<PathBuf>, Failure> {
    let mut out = Vec::new();
    for e in entries {
        let p = resolve(base, e);
        if p.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(&p)
                .map_err(|err| Failure::Missing(format!("{}: {err}", p.display())))?
                .filter_map(|d| d.ok().map(|d| d.path()))
                .filter(|f| f.to_string_lossy().ends_with(suffix))
                .collect();
            found.sort();
            out.extend(found);
        } else if p.is_file() {
            out.push(p);
        } else {
            return Err(Failure::Missing(format!("{} does not exist", p.display())));
        }
    }
    if out.is_empty() {
        return Err(Failure::Missing(format!("no {suffix} inputs given")));
    }
    Ok(out)
}
