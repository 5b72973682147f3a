//! Experiment configuration: a JSON file, overridden by command line flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use witten_core::landscape::{builtin_region, PotentialFile, Region};
use witten_core::PotentialSpec;

pub const SCHEMA_VERSION: u32 = 1;

/// The sweep used by `spectrum`, `sweep` and `quasimode` when none is given.
pub const DEFAULT_EPS: [f64; 5] = [0.2, 0.15, 0.1, 0.07, 0.05];
pub const DEFAULT_SIM_EPS: [f64; 1] = [0.3];

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("config error at line {line}, field '{field}': {message}")]
pub struct ConfigError {
    /// 1-based line in the config file, 0 when the value came from a flag or a default.
    pub line: usize,
    pub field: String,
    pub message: String,
}

impl ConfigError {
    fn at(text: &str, field: &str, message: impl Into<String>) -> Self {
        ConfigError { line: line_of(text, field), field: field.to_string(), message: message.into() }
    }
}

/// Line of the first `"key":` for the last path segment of `field`.
fn line_of(text: &str, field: &str) -> usize {
    let key = field.rsplit('.').next().unwrap_or(field);
    let key = key.split('[').next().unwrap_or(key);
    let needle = format!("\"{key}\"");
    text.lines().position(|l| l.contains(&needle)).map_or(0, |i| i + 1)
}

/// A builtin name, a path to a potential file, or the file contents inline.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PotentialRef {
    Name(String),
    Path {
        file: PathBuf,
    },
    Inline(PotentialFile),
}

impl Default for PotentialRef {
    fn default() -> Self {
        PotentialRef::Name("double_well_1d".into())
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationOptions {
    /// Defaults to the left minimum.
    #[serde(default)]
    pub start: Option<Vec<f64>>,
    /// Defaults to the right minimum.
    #[serde(default)]
    pub target: Option<Vec<f64>>,
    /// Defaults to `max(3 eps, 0.1)`.
    #[serde(default)]
    pub target_radius: Option<f64>,
    #[serde(default)]
    pub n_trajectories: Option<usize>,
    #[serde(default)]
    pub max_time: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub potential: PotentialRef,
    /// Parameter overrides for builtin potentials, e.g. `{"c": 2.0}`.
    #[serde(default, skip_serializing_if = "std::collections::BTreeMap::is_empty")]
    pub params: std::collections::BTreeMap<String, f64>,
    #[serde(rename = "box", default)]
    pub region: Option<Region>,
    #[serde(default)]
    pub eps_list: Option<Vec<f64>>,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    /// Quasimode tube half-width; chosen automatically when absent.
    #[serde(default)]
    pub rho: Option<f64>,
    #[serde(default)]
    pub simulation: SimulationOptions,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub threads: Option<usize>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    /// Write the assembled operator as a coordinate list (spectrum only).
    #[serde(default)]
    pub dump_operator: bool,
}

fn default_k() -> usize {
    4
}

fn default_tol() -> f64 {
    witten_core::eigen::DEFAULT_TOL
}

fn default_seed() -> u64 {
    2024
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("empty config parses")
    }
}

/// Command line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub eps: Option<Vec<f64>>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub potential: Option<String>,
}

/// Config with the potential and box resolved and flags applied.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub config: ExperimentConfig,
    pub potential: PotentialSpec,
    pub region: Region,
    pub eps_list: Vec<f64>,
    pub out: PathBuf,
}

pub fn parse(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let field = e.path().to_string();
        let inner = e.into_inner();
        let line = if inner.line() > 0 { inner.line() } else { line_of(text, &field) };
        ConfigError { line, field, message: inner.to_string() }
    })
}

pub fn load(path: &Path) -> Result<(ExperimentConfig, String), ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
        line: 0,
        field: "--config".into(),
        message: format!("{}: {e}", path.display()),
    })?;
    Ok((parse(&text)?, text))
}

impl ExperimentConfig {
    pub fn apply(&mut self, o: &Overrides) {
        if let Some(e) = &o.eps {
            self.eps_list = Some(e.clone());
        }
        if let Some(d) = &o.out {
            self.out = Some(d.clone());
        }
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(t) = o.threads {
            self.threads = Some(t);
        }
        if let Some(p) = &o.potential {
            self.potential = if p.ends_with(".json") {
                PotentialRef::Path { file: PathBuf::from(p) }
            } else {
                PotentialRef::Name(p.clone())
            };
        }
    }

    /// Checks the config and fills in defaults; `text` is the file the
    /// config came from (empty for none) and is only used for line numbers.
    pub fn resolve(mut self, text: &str, simulate: bool) -> Result<Resolved, ConfigError> {
        let (file, potential) = match &self.potential {
            PotentialRef::Name(name) => {
                let p = PotentialSpec::builtin(name, &self.params)
                    .map_err(|e| ConfigError::at(text, "potential", e.to_string()))?;
                (None, p)
            }
            PotentialRef::Path { file } => {
                let body = std::fs::read_to_string(file)
                    .map_err(|e| ConfigError::at(text, "file", format!("{}: {e}", file.display())))?;
                let pf: PotentialFile = serde_json::from_str(&body)
                    .map_err(|e| ConfigError::at(text, "file", format!("{}: {e}", file.display())))?;
                let p = PotentialSpec::from_file(&pf).map_err(|e| ConfigError::at(text, "file", e.to_string()))?;
                (Some(pf), p)
            }
            PotentialRef::Inline(pf) => {
                let p = PotentialSpec::from_file(pf).map_err(|e| ConfigError::at(text, "potential", e.to_string()))?;
                (Some(pf.clone()), p)
            }
        };
        let region = match (&self.region, &file) {
            (Some(r), _) => r.clone(),
            (None, Some(pf)) if pf.kind == witten_core::landscape::PotentialKind::Builtin => {
                builtin_region(&pf.name).map_err(|e| ConfigError::at(text, "box", e.to_string()))?
            }
            (None, Some(_)) => return Err(ConfigError::at(text, "box", "polynomial potentials need a box")),
            (None, None) => builtin_region(&potential.name).map_err(|e| ConfigError::at(text, "box", e.to_string()))?,
        };
        if region.dim() != potential.dim || region.half_widths.len() != potential.dim {
            return Err(ConfigError::at(text, "box", format!("box must have {} coordinates", potential.dim)));
        }
        if region.half_widths.iter().any(|&h| !(h > 0.0)) {
            return Err(ConfigError::at(text, "half_widths", "half widths must be positive"));
        }
        let eps_list = self
            .eps_list
            .clone()
            .unwrap_or_else(|| if simulate { DEFAULT_SIM_EPS.to_vec() } else { DEFAULT_EPS.to_vec() });
        if eps_list.is_empty() {
            return Err(ConfigError::at(text, "eps_list", "eps_list is empty"));
        }
        if eps_list.iter().any(|&e| !(e > 0.0 && e.is_finite())) {
            return Err(ConfigError::at(text, "eps_list", "eps values must be positive"));
        }
        if eps_list.windows(2).any(|w| w[1] >= w[0]) {
            return Err(ConfigError::at(text, "eps_list", "eps_list must be strictly decreasing"));
        }
        if self.k == 0 {
            return Err(ConfigError::at(text, "k", "k must be at least 1"));
        }
        if !(self.tol > 0.0) {
            return Err(ConfigError::at(text, "tol", "tol must be positive"));
        }
        if let Some(r) = self.rho {
            if !(r > 0.0) {
                return Err(ConfigError::at(text, "rho", "rho must be positive"));
            }
        }
        if self.threads == Some(0) {
            return Err(ConfigError::at(text, "threads", "threads must be at least 1"));
        }
        let s = &self.simulation;
        for (name, v) in [("start", &s.start), ("target", &s.target)] {
            if v.as_ref().is_some_and(|v| v.len() != potential.dim) {
                return Err(ConfigError::at(text, name, format!("{name} must have {} coordinates", potential.dim)));
            }
        }
        if s.n_trajectories == Some(0) {
            return Err(ConfigError::at(text, "n_trajectories", "need at least one trajectory"));
        }
        if s.max_time.is_some_and(|t| !(t > 0.0)) {
            return Err(ConfigError::at(text, "max_time", "max_time must be positive"));
        }
        let out = self.out.clone().unwrap_or_else(|| PathBuf::from("out"));
        std::fs::create_dir_all(&out)
            .map_err(|e| ConfigError::at(text, "out", format!("{}: {e}", out.display())))?;
        let probe = out.join(".wl-write-check");
        std::fs::write(&probe, b"")
            .and_then(|_| std::fs::remove_file(&probe))
            .map_err(|e| ConfigError::at(text, "out", format!("{} is not writable: {e}", out.display())))?;
        self.region = Some(region.clone());
        self.eps_list = Some(eps_list.clone());
        self.out = Some(out.clone());
        Ok(Resolved { config: self, potential, region, eps_list, out })
    }
}
