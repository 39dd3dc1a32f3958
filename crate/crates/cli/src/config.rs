//! Experiment configuration, read from TOML.

use std::path::{Path, PathBuf};

use nested_karlin::WeightModel;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("cannot parse config: {0}")]
    Parse(String),
    #[error("invalid config field `{field}`: {message}")]
    Invalid { field: &'static str, message: String },
}

fn invalid(field: &'static str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field,
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DistributionSpec {
    Weibull {
        alpha: f64,
    },
    Geometric {
        p: f64,
    },
    /// Inline weights, or a file with one weight per line.
    Custom {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        weights: Option<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        file: Option<PathBuf>,
    },
}

impl DistributionSpec {
    pub fn model(&self) -> Result<WeightModel, ConfigError> {
        let model = match self {
            DistributionSpec::Weibull { alpha } => WeightModel::weibull(*alpha),
            DistributionSpec::Geometric { p } => WeightModel::geometric(*p),
            DistributionSpec::Custom {
                weights: Some(w),
                file: None,
            } => WeightModel::custom(w.clone()),
            DistributionSpec::Custom {
                weights: None,
                file: Some(path),
            } => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| invalid("distribution.file", format!("{}: {e}", path.display())))?;
                WeightModel::from_weights_text(&text)
            }
            DistributionSpec::Custom { .. } => {
                return Err(invalid(
                    "distribution",
                    "custom needs exactly one of `weights` or `file`",
                ))
            }
        };
        model.map_err(|e| invalid("distribution", e.to_string()))
    }
}

/// Either explicit points or an evenly spaced range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum UGridSpec {
    Points(Vec<f64>),
    Range { start: f64, stop: f64, n: usize },
}

impl Default for UGridSpec {
    fn default() -> Self {
        UGridSpec::Points(vec![-1.0, 0.0, 1.0])
    }
}

impl UGridSpec {
    pub fn points(&self) -> Vec<f64> {
        match *self {
            UGridSpec::Points(ref p) => p.clone(),
            UGridSpec::Range { start, stop, n } if n >= 2 => (0..n)
                .map(|i| start + (stop - start) * i as f64 / (n - 1) as f64)
                .collect(),
            UGridSpec::Range { start, .. } => vec![start],
        }
    }
}

/// How deep generations are enumerated: a fixed weight threshold `eps`, or
/// the coarsest threshold with truncation error at most `tol`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Truncation {
    Eps(f64),
    Tol(f64),
}

impl Default for Truncation {
    fn default() -> Self {
        Truncation::Tol(0.01)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    #[default]
    Tree,
    Balls,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampler {
    #[default]
    Cholesky,
    WhiteNoise,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MomentsOptions {
    pub asymptotics: bool,
    /// Exponent in the exponential-sum ratio.
    pub a: f64,
}

impl Default for MomentsOptions {
    fn default() -> Self {
        Self {
            asymptotics: true,
            a: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateOptions {
    pub engine: Engine,
    pub ball_budget: u64,
    pub box_budget: u64,
}

impl Default for SimulateOptions {
    fn default() -> Self {
        Self {
            engine: Engine::Tree,
            ball_budget: nested_karlin::simulate::balls::DEFAULT_BALL_BUDGET,
            box_budget: nested_karlin::genweights::DEFAULT_BOX_BUDGET,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LimitOptions {
    pub paths: u64,
    pub sampler: Sampler,
}

impl Default for LimitOptions {
    fn default() -> Self {
        Self {
            paths: 1000,
            sampler: Sampler::Cholesky,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectralOptions {
    pub x: Vec<f64>,
    pub t: Vec<f64>,
}

impl Default for SpectralOptions {
    fn default() -> Self {
        Self {
            x: vec![0.0, 0.1, 0.25, 0.5, 1.0, 2.0, 4.0],
            t: vec![0.0, 0.5, 1.0, 2.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySection {
    pub only: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub distribution: Option<DistributionSpec>,
    pub j_max: usize,
    /// Log-time centers `T`.
    pub t_list: Vec<f64>,
    pub u_grid: UGridSpec,
    pub replicas: u64,
    pub seed: u64,
    pub truncation: Truncation,
    pub out: PathBuf,
    pub workers: usize,
    pub moments: MomentsOptions,
    pub simulate: SimulateOptions,
    pub limit: LimitOptions,
    pub spectral: SpectralOptions,
    pub verify: VerifySection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            distribution: None,
            j_max: 2,
            t_list: vec![12.0],
            u_grid: UGridSpec::default(),
            replicas: 2000,
            seed: nested_karlin::verify::DEFAULT_SEED,
            truncation: Truncation::default(),
            out: PathBuf::from("out"),
            workers: 0,
            moments: MomentsOptions::default(),
            simulate: SimulateOptions::default(),
            limit: LimitOptions::default(),
            spectral: SpectralOptions::default(),
            verify: VerifySection::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::from_toml(&text)?;
        // relative weight files are resolved against the config location
        if let Some(DistributionSpec::Custom { file: Some(f), .. }) = &mut cfg.distribution {
            if f.is_relative() {
                if let Some(dir) = path.parent() {
                    *f = dir.join(&*f);
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable in TOML")
    }

    /// Checks everything that does not depend on the subcommand.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.j_max == 0 {
            return Err(invalid("j_max", "must be at least 1"));
        }
        if self.t_list.is_empty() {
            return Err(invalid("t_list", "must contain at least one T"));
        }
        if let Some(t) = self
            .t_list
            .iter()
            .find(|t| !(t.is_finite() && **t > 0.0 && **t < 700.0))
        {
            return Err(invalid("t_list", format!("T = {t} is outside (0, 700)")));
        }
        if let UGridSpec::Range { n: 0, .. } = self.u_grid {
            return Err(invalid("u_grid.n", "must be at least 1"));
        }
        let grid = self.u_grid.points();
        if grid.is_empty() || grid.iter().any(|u| !u.is_finite()) {
            return Err(invalid("u_grid", "needs at least one finite point"));
        }
        if grid.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(invalid("u_grid", "points must be strictly increasing"));
        }
        if self.replicas == 0 {
            return Err(invalid("replicas", "must be at least 1"));
        }
        match self.truncation {
            Truncation::Eps(e) if !(e > 0.0 && e < 1.0) => {
                return Err(invalid("truncation.eps", format!("must lie in (0,1), got {e}")))
            }
            Truncation::Tol(t) if !(t > 0.0 && t.is_finite()) => {
                return Err(invalid("truncation.tol", format!("must be positive, got {t}")))
            }
            _ => {}
        }
        if !(self.moments.a > 0.0 && self.moments.a.is_finite()) {
            return Err(invalid("moments.a", "must be positive"));
        }
        if self.limit.paths == 0 {
            return Err(invalid("limit.paths", "must be at least 1"));
        }
        if self.spectral.x.iter().chain(&self.spectral.t).any(|v| !v.is_finite()) {
            return Err(invalid("spectral", "points must be finite"));
        }
        if let Some(d) = &self.distribution {
            d.model()?;
        }
        Ok(())
    }

    /// The weight model; required by `moments` and `simulate`.
    pub fn model(&self) -> Result<WeightModel, ConfigError> {
        self.distribution
            .as_ref()
            .ok_or_else(|| invalid("distribution", "missing; this command needs a weight distribution"))?
            .model()
    }

    /// SHA-256 of the settings that influence results. Output location and
    /// worker count are left out.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.out = PathBuf::new();
        canonical.workers = 0;
        hex::encode(Sha256::digest(canonical.to_toml().as_bytes()))
    }
}
