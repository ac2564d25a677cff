use std::path::{Path, PathBuf};

use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::gibbs::ModelConfig;
use crate::gibbs::{GibbsModel, Scheme};
use crate::metric::MetricOptions;
use crate::simplex::Dist;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CommandKind {
    Evolve,
    Metric,
    Particles,
    CwScan,
    Check,
}

impl CommandKind {
    pub fn name(self) -> &'static str {
        match self {
            CommandKind::Evolve => "evolve",
            CommandKind::Metric => "metric",
            CommandKind::Particles => "particles",
            CommandKind::CwScan => "cw-scan",
            CommandKind::Check => "check",
        }
    }
}

/// A run description read from TOML.
///
/// ```toml
/// schema_version = 1
/// seed = 7
///
/// [model]
/// kind = "curie_weiss"
/// beta = 2.0
///
/// [evolve]
/// initial = [0.9, 0.1]
/// t_final = 5.0
/// ```
///
/// The model may instead live in a separate file named by `model_file`,
/// resolved relative to the manifest.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub schema_version: u32,
    /// If present, must agree with the subcommand.
    #[serde(default)]
    pub command: Option<CommandKind>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub threads: Option<usize>,
    #[serde(default)]
    pub model: Option<ModelConfig>,
    #[serde(default)]
    pub model_file: Option<PathBuf>,
    #[serde(default)]
    pub evolve: Option<EvolveConfig>,
    #[serde(default)]
    pub metric: Option<MetricConfig>,
    #[serde(default)]
    pub particles: Option<ParticlesConfig>,
    #[serde(default)]
    pub cw_scan: Option<CwScanConfig>,
    #[serde(default)]
    pub check: Option<CheckConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolveConfig {
    pub initial: Vec<f64>,
    pub t_final: f64,
    /// Defaults to `1e-3 / max exit rate` at the initial state.
    #[serde(default)]
    pub dt: Option<f64>,
    /// Write every k-th grid point to the CSV.
    #[serde(default = "one")]
    pub output_every: usize,
    /// Adds a verdict `‖c(T) − expect_final‖₂ ≤ expect_tol`.
    #[serde(default)]
    pub expect_final: Option<Vec<f64>>,
    #[serde(default = "default_expect_tol")]
    pub expect_tol: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricConfig {
    pub from: Vec<f64>,
    pub to: Vec<f64>,
    #[serde(default)]
    pub options: MetricOptions,
    /// Adds a verdict comparing with the closed-form two-site distance at this jump rate.
    #[serde(default)]
    pub two_point_rate: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParticlesConfig {
    /// Deterministic start; `N·initial` must be integral for every `N` used.
    pub initial: Vec<f64>,
    /// Particle counts for the stochastic simulation.
    pub n_values: Vec<usize>,
    #[serde(default = "default_runs")]
    pub runs: usize,
    /// Increasing observation times.
    pub checkpoints: Vec<f64>,
    /// Particle counts for the exact master equation; empty to skip it.
    #[serde(default)]
    pub master_n_values: Vec<usize>,
    /// Deterministic start for the master equation; defaults to `initial`.
    #[serde(default)]
    pub master_initial: Option<Vec<f64>>,
    #[serde(default = "default_max_states")]
    pub max_states: usize,
    #[serde(default)]
    pub variance_site: usize,
    #[serde(default = "default_deviation_slope")]
    pub deviation_slope: [f64; 2],
    #[serde(default = "default_variance_slope")]
    pub variance_slope: [f64; 2],
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CwScanConfig {
    pub betas: Vec<f64>,
    /// Number of grid cells on `[0, 1]` for the first coordinate.
    #[serde(default = "default_grid")]
    pub grid: usize,
    #[serde(default)]
    pub scheme: Scheme,
    #[serde(default = "default_scan_time")]
    pub t_final: f64,
    /// Mass on the first site at the two ODE starts.
    #[serde(default = "default_scan_starts")]
    pub starts: [f64; 2],
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckConfig {
    #[serde(default = "default_check_models")]
    pub models: usize,
    #[serde(default = "default_check_particles")]
    pub max_particles: usize,
}

impl Default for CheckConfig {
    fn default() -> Self {
        CheckConfig { models: default_check_models(), max_particles: default_check_particles() }
    }
}

fn one() -> usize {
    1
}
fn default_expect_tol() -> f64 {
    1e-6
}
fn default_runs() -> usize {
    10_000
}
fn default_max_states() -> usize {
    1_000_000
}
fn default_deviation_slope() -> [f64; 2] {
    [-0.7, -0.3]
}
fn default_variance_slope() -> [f64; 2] {
    [-1.3, -0.7]
}
fn default_grid() -> usize {
    1000
}
fn default_scan_time() -> f64 {
    50.0
}
fn default_scan_starts() -> [f64; 2] {
    [0.9, 0.1]
}
fn default_check_models() -> usize {
    1000
}
fn default_check_particles() -> usize {
    8
}

/// A parsed manifest with its provenance.
#[derive(Debug, Clone)]
pub struct LoadedManifest {
    pub manifest: Manifest,
    pub sha256: String,
    pub base_dir: PathBuf,
}

impl LoadedManifest {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config("--manifest", format!("cannot read {}: {e}", path.display())))?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_str(&text, base_dir)
    }

    pub fn from_str(text: &str, base_dir: PathBuf) -> Result<Self> {
        let manifest: Manifest = toml::from_str(text).map_err(|e| Error::config(toml_path(text, &e), e.message().trim().to_string()))?;
        if manifest.schema_version != SCHEMA_VERSION {
            return Err(Error::config(
                "schema_version",
                format!("unsupported version {} (expected {SCHEMA_VERSION})", manifest.schema_version),
            ));
        }
        if manifest.model.is_some() && manifest.model_file.is_some() {
            return Err(Error::config("model_file", "give either [model] or model_file, not both"));
        }
        if let Some(t) = manifest.threads {
            if t == 0 {
                return Err(Error::config("threads", "must be at least 1"));
            }
        }
        let sha256 = hex::encode(Sha256::digest(text.as_bytes()));
        Ok(LoadedManifest { manifest, sha256, base_dir })
    }

    /// The model from `[model]` or `model_file`.
    pub fn model(&self) -> Result<GibbsModel> {
        if let Some(cfg) = &self.manifest.model {
            return cfg.build("model");
        }
        let Some(file) = &self.manifest.model_file else {
            return Err(Error::config("model", "missing: give a [model] table or model_file"));
        };
        let path = self.base_dir.join(file);
        let text = std::fs::read_to_string(&path)
            .map_err(|e| Error::config("model_file", format!("cannot read {}: {e}", path.display())))?;
        let cfg = ModelConfig::from_toml_str(&text).map_err(|e| match e {
            Error::Config { message, .. } => Error::config("model_file", message),
            other => other,
        })?;
        cfg.build("model_file")
    }

    pub fn section<'a, T>(&self, value: &'a Option<T>, name: &str) -> Result<&'a T> {
        value.as_ref().ok_or_else(|| Error::config(name, format!("missing [{name}] table")))
    }
}

/// Dotted location (`table.key`) of a TOML error, recovered from its span.
fn toml_path(text: &str, e: &toml::de::Error) -> String {
    let Some(span) = e.span() else {
        return "manifest".into();
    };
    let start = span.start.min(text.len());
    let line_start = text[..start].rfind('\n').map_or(0, |i| i + 1);
    let line_end = text[start..].find('\n').map_or(text.len(), |i| start + i);
    let line = &text[line_start..line_end];
    if line.trim_start().starts_with('[') {
        return line.trim().trim_matches(|c| c == '[' || c == ']').trim().to_string();
    }
    let key = line.split_once('=').map(|(k, _)| k.trim().trim_matches('"')).unwrap_or("");
    let table = text[..line_start]
        .lines()
        .rev()
        .map(str::trim)
        .find(|l| l.starts_with('['))
        .map(|l| l.trim_matches(|c| c == '[' || c == ']').trim())
        .unwrap_or("");
    match (table.is_empty(), key.is_empty()) {
        (true, true) => "manifest".into(),
        (true, false) => key.to_string(),
        (false, true) => table.to_string(),
        (false, false) => format!("{table}.{key}"),
    }
}

/// Validates a distribution given as a list of numbers.
pub fn dist_at(values: &[f64], d: usize, path: &str) -> Result<Dist> {
    if values.len() != d {
        return Err(Error::config(path, format!("expected {d} entries, got {}", values.len())));
    }
    Dist::new(values.to_vec()).map_err(|e| Error::config(path, e.to_string()))
}
