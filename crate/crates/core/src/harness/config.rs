//! Experiment configuration, read from a single JSON document.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baselines::{IntervalMode, MAX_HULL_DIM};
use crate::datagen::{NoiseKind, DEFAULT_BURN_IN};
use crate::forecast::ForecastConfig;
use crate::geometry::DEFAULT_RHO;
use crate::quantile::QuantileConfig;
use crate::spci::{BetaGrid, CovarianceMode, SpciConfig};

use super::ConfigError;

pub const DEFAULT_TRAIN_FRACTION: f64 = 0.85;
pub const DEFAULT_ROLLING_WINDOW: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    MultidimSpci,
    CoordwiseSpci,
    Copula,
    Hull,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::MultidimSpci => "multidim_spci",
            Method::CoordwiseSpci => "coordwise_spci",
            Method::Copula => "copula",
            Method::Hull => "hull",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Method::MultidimSpci, Method::CoordwiseSpci, Method::Copula, Method::Hull]
            .into_iter()
            .find(|m| m.as_str() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProcessKind {
    /// Independent AR coordinates, `Σ = I`.
    Ar,
    /// Dense VAR with `Σ = BBᵀ`.
    Var,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSource {
    pub process: ProcessKind,
    pub dim: usize,
    pub order: usize,
    #[serde(default = "default_n_train")]
    pub n_train: usize,
    #[serde(default = "default_n_test")]
    pub n_test: usize,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    #[serde(default)]
    pub noise: NoiseKind,
}

fn default_n_train() -> usize {
    8000
}

fn default_n_test() -> usize {
    2000
}

fn default_burn_in() -> usize {
    DEFAULT_BURN_IN
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSource {
    pub path: PathBuf,
    pub columns: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Simulate(SimulateSource),
    Csv(CsvSource),
}

impl DataSource {
    pub fn dim(&self) -> usize {
        match self {
            DataSource::Simulate(s) => s.dim,
            DataSource::Csv(c) => c.columns.len(),
        }
    }
}

/// Settings shared by the sequential methods. The level comes from the
/// experiment's `alpha`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineSettings {
    pub rho: f64,
    pub beta_grid: BetaGrid,
    pub covariance: CovarianceMode,
    pub quantile: QuantileConfig,
    /// Residual window; absent keeps every hold-out residual.
    pub window: Option<usize>,
    pub cov_refresh_stride: usize,
    pub forecast: ForecastConfig,
    /// Interval rule for the coordinate-wise baseline.
    pub interval_mode: IntervalMode,
}

impl Default for EngineSettings {
    fn default() -> Self {
        Self {
            rho: DEFAULT_RHO,
            beta_grid: BetaGrid::default(),
            covariance: CovarianceMode::Global,
            quantile: QuantileConfig::default(),
            window: None,
            cov_refresh_stride: 1,
            forecast: ForecastConfig::default(),
            interval_mode: IntervalMode::default(),
        }
    }
}

impl EngineSettings {
    pub fn spci_config(&self, alpha: f64) -> SpciConfig {
        SpciConfig {
            alpha,
            rho: self.rho,
            beta_grid: self.beta_grid,
            covariance: self.covariance.clone(),
            quantile: self.quantile.clone(),
            window: self.window,
            cov_refresh_stride: self.cov_refresh_stride,
            forecast: self.forecast,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataSource,
    pub methods: Vec<Method>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Training share of a CSV series; simulated data uses `n_train`.
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_rolling_window")]
    pub rolling_window: usize,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub engine: EngineSettings,
}

fn default_alpha() -> f64 {
    0.1
}

fn default_train_fraction() -> f64 {
    DEFAULT_TRAIN_FRACTION
}

fn default_trials() -> usize {
    10
}

fn default_rolling_window() -> usize {
    DEFAULT_ROLLING_WINDOW
}

fn invalid(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field: field.to_string(),
        message: message.into(),
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| ConfigError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file. Relative CSV paths resolve against the file's
    /// directory.
    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read {
            path: path.to_path_buf(),
            source: e,
        })?;
        let mut cfg = Self::from_json(&text)?;
        if let DataSource::Csv(c) = &mut cfg.data {
            if c.path.is_relative() {
                if let Some(dir) = path.parent() {
                    c.path = dir.join(&c.path);
                }
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.methods.is_empty() {
            return Err(invalid("methods", "at least one method is required"));
        }
        let mut seen = self.methods.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.methods.len() {
            return Err(invalid("methods", "methods must not repeat"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(invalid("alpha", format!("must lie in (0, 1), got {}", self.alpha)));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(invalid(
                "train_fraction",
                format!("must lie in (0, 1), got {}", self.train_fraction),
            ));
        }
        if self.trials == 0 {
            return Err(invalid("trials", "must be at least 1"));
        }
        if self.rolling_window == 0 {
            return Err(invalid("rolling_window", "must be at least 1"));
        }
        match &self.data {
            DataSource::Simulate(s) => {
                if s.dim == 0 {
                    return Err(invalid("data.simulate.dim", "must be at least 1"));
                }
                if s.order == 0 {
                    return Err(invalid("data.simulate.order", "must be at least 1"));
                }
                if s.n_test == 0 {
                    return Err(invalid("data.simulate.n_test", "must be at least 1"));
                }
                if s.n_train == 0 {
                    return Err(invalid("data.simulate.n_train", "must be at least 1"));
                }
            }
            DataSource::Csv(c) => {
                if c.columns.is_empty() {
                    return Err(invalid("data.csv.columns", "at least one column is required"));
                }
            }
        }
        let p = self.data.dim();
        if self.methods.contains(&Method::Hull) && !(2..=MAX_HULL_DIM).contains(&p) {
            return Err(invalid(
                "methods",
                format!("hull needs a dimension between 2 and {MAX_HULL_DIM}, got {p}"),
            ));
        }
        self.engine
            .spci_config(self.alpha)
            .validate()
            .map_err(|e| invalid("engine", e.to_string()))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "data": {"simulate": {"process": "ar", "dim": 2, "order": 5}},
        "methods": ["multidim_spci", "coordwise_spci"]
    }"#;

    #[test]
    fn defaults() {
        let cfg = ExperimentConfig::from_json(MINIMAL).unwrap();
        assert_eq!(cfg.alpha, 0.1);
        assert_eq!(cfg.train_fraction, 0.85);
        assert_eq!(cfg.trials, 10);
        match cfg.data {
            DataSource::Simulate(s) => assert_eq!((s.n_train, s.n_test, s.burn_in), (8000, 2000, 1000)),
            DataSource::Csv(_) => panic!(),
        }
        assert_eq!(cfg.engine.beta_grid, BetaGrid::Uniform(21));
    }

    #[test]
    fn parse_errors_carry_position() {
        let err = ExperimentConfig::from_json("{\n  \"methods\": [,]\n}").unwrap_err();
        match err {
            ConfigError::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn validation_names_field() {
        let text = MINIMAL.replace("\"methods\": [\"multidim_spci\", \"coordwise_spci\"]", "\"methods\": []");
        let err = ExperimentConfig::from_json(&text).unwrap_err();
        assert!(matches!(&err, ConfigError::Invalid { field, .. } if field == "methods"));

        let text = MINIMAL.replace("\"order\": 5", "\"order\": 5}, \"alpha\": 1.5, \"x\": {");
        assert!(ExperimentConfig::from_json(&text).is_err());

        let text = MINIMAL.replace("}},", "}}, \"train_fraction\": 1.0,");
        let err = ExperimentConfig::from_json(&text).unwrap_err();
        assert!(err.to_string().contains("train_fraction"), "{err}");

        let text = MINIMAL.replace("\"dim\": 2", "\"dim\": 6").replace("\"coordwise_spci\"", "\"hull\"");
        let err = ExperimentConfig::from_json(&text).unwrap_err();
        assert!(err.to_string().contains("hull"), "{err}");
    }

    #[test]
    fn unknown_method_rejected() {
        let text = MINIMAL.replace("coordwise_spci", "tft");
        assert!(matches!(ExperimentConfig::from_json(&text), Err(ConfigError::Parse { .. })));
    }
}
