//! Lag-feature construction and point forecasters.
//!
//! Feature rows are laid out most recent lag first:
//! `[Y_{t−1}, Y_{t−2}, …, Y_{t−w}]` flattened coordinate by coordinate, with
//! a trailing `1.0` when an intercept is requested.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::series::MultiSeries;

pub const DEFAULT_RIDGE: f64 = 1e-6;
pub const DEFAULT_FIT_FRACTION: f64 = 0.5;
pub const DEFAULT_LAG_ORDER: usize = 20;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ForecastError {
    #[error("series of length {len} is too short for {needed} rows")]
    SeriesTooShort { len: usize, needed: usize },
    #[error("normal equations are singular")]
    SingularSystem,
    #[error("forecaster has not been fitted")]
    NotFitted,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, ForecastError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LagFeatureConfig {
    pub lag_order: usize,
    pub intercept: bool,
}

impl Default for LagFeatureConfig {
    fn default() -> Self {
        Self {
            lag_order: DEFAULT_LAG_ORDER,
            intercept: true,
        }
    }
}

impl LagFeatureConfig {
    pub fn width(&self, dim: usize) -> usize {
        dim * self.lag_order + usize::from(self.intercept)
    }

    /// Feature row predicting `Y_t`. Requires `t ≥ lag_order`.
    pub fn row(&self, series: &MultiSeries, t: usize) -> DVector<f64> {
        let p = series.dim();
        let mut out = DVector::zeros(self.width(p));
        for lag in 1..=self.lag_order {
            let y = series.row(t - lag);
            out.rows_mut((lag - 1) * p, p).copy_from(y);
        }
        if self.intercept {
            out[p * self.lag_order] = 1.0;
        }
        out
    }
}

/// Design matrix and targets built from lags. Row `i` predicts
/// `Y_{first_target + i}`.
#[derive(Debug, Clone, PartialEq)]
pub struct LagDesign {
    pub features: DMatrix<f64>,
    pub targets: DMatrix<f64>,
    pub first_target: usize,
}

pub fn build_lag_features(series: &MultiSeries, cfg: &LagFeatureConfig) -> Result<LagDesign> {
    if cfg.lag_order == 0 {
        return Err(ForecastError::InvalidConfig("lag_order must be at least 1".into()));
    }
    let n = series.len();
    if n <= cfg.lag_order {
        return Err(ForecastError::SeriesTooShort {
            len: n,
            needed: cfg.lag_order + 1,
        });
    }
    let rows = n - cfg.lag_order;
    let p = series.dim();
    let width = cfg.width(p);
    let mut features = DMatrix::zeros(rows, width);
    let mut targets = DMatrix::zeros(rows, p);
    for i in 0..rows {
        let t = i + cfg.lag_order;
        features.row_mut(i).copy_from(&cfg.row(series, t).transpose());
        targets.row_mut(i).copy_from(&series.row(t).transpose());
    }
    Ok(LagDesign {
        features,
        targets,
        first_target: cfg.lag_order,
    })
}

/// A point predictor `f̂` mapping a feature row to a `p`-vector.
pub trait Forecaster: Send + Sync {
    fn output_dim(&self) -> usize;
    fn predict(&self, features: &DVector<f64>) -> Result<DVector<f64>>;
}

/// Multivariate least squares with a ridge penalty.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearForecaster {
    weights: Option<DMatrix<f64>>,
    output_dim: usize,
}

impl LinearForecaster {
    pub fn unfitted(output_dim: usize) -> Self {
        Self {
            weights: None,
            output_dim,
        }
    }

    pub fn from_weights(weights: DMatrix<f64>) -> Self {
        let output_dim = weights.ncols();
        Self {
            weights: Some(weights),
            output_dim,
        }
    }

    pub fn weights(&self) -> Option<&DMatrix<f64>> {
        self.weights.as_ref()
    }

    pub fn is_fitted(&self) -> bool {
        self.weights.is_some()
    }
}

impl Forecaster for LinearForecaster {
    fn output_dim(&self) -> usize {
        self.output_dim
    }

    fn predict(&self, features: &DVector<f64>) -> Result<DVector<f64>> {
        let w = self.weights.as_ref().ok_or(ForecastError::NotFitted)?;
        if w.nrows() != features.len() {
            return Err(ForecastError::DimensionMismatch {
                expected: w.nrows(),
                got: features.len(),
            });
        }
        Ok(w.tr_mul(features))
    }
}

/// Always predicts zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ZeroForecaster {
    pub dim: usize,
}

impl Forecaster for ZeroForecaster {
    fn output_dim(&self) -> usize {
        self.dim
    }

    fn predict(&self, _features: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(DVector::zeros(self.dim))
    }
}

/// Minimises `‖XW − Y‖² + ridge‖W‖²` through a Cholesky solve of the
/// normal equations.
pub fn fit_linear(features: &DMatrix<f64>, targets: &DMatrix<f64>, ridge: f64) -> Result<LinearForecaster> {
    if features.nrows() != targets.nrows() {
        return Err(ForecastError::DimensionMismatch {
            expected: features.nrows(),
            got: targets.nrows(),
        });
    }
    if !(ridge >= 0.0) {
        return Err(ForecastError::InvalidConfig(format!("ridge must be nonnegative, got {ridge}")));
    }
    let mut gram = features.tr_mul(features);
    let scale = gram.diagonal().amax().max(f64::MIN_POSITIVE);
    for i in 0..gram.nrows() {
        gram[(i, i)] += ridge;
    }
    let rhs = features.tr_mul(targets);
    let chol = gram.cholesky().ok_or(ForecastError::SingularSystem)?;
    // Cholesky can succeed on a numerically singular Gram matrix; reject
    // pivots that vanish relative to the largest diagonal entry.
    let l = chol.l_dirty();
    let min_pivot = (0..l.nrows()).map(|i| l[(i, i)] * l[(i, i)]).fold(f64::INFINITY, f64::min);
    if ridge == 0.0 && min_pivot <= 1e-12 * scale {
        return Err(ForecastError::SingularSystem);
    }
    Ok(LinearForecaster::from_weights(chol.solve(&rhs)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForecastConfig {
    pub lags: LagFeatureConfig,
    pub ridge: f64,
    /// Fraction of the usable training rows used to fit `f̂`; the rest
    /// produce hold-out residuals.
    pub fit_fraction: f64,
}

impl Default for ForecastConfig {
    fn default() -> Self {
        Self {
            lags: LagFeatureConfig::default(),
            ridge: DEFAULT_RIDGE,
            fit_fraction: DEFAULT_FIT_FRACTION,
        }
    }
}

/// A fitted forecaster with its hold-out residuals.
#[derive(Debug, Clone)]
pub struct HoldoutFit {
    pub forecaster: LinearForecaster,
    /// Residuals in time order.
    pub residuals: Vec<DVector<f64>>,
    /// Feature rows aligned with `residuals`.
    pub features: Vec<DVector<f64>>,
    /// Series index of the first residual's target.
    pub first_residual: usize,
    /// Series index of the last target used for fitting.
    pub last_fit_target: usize,
}

/// Fits on the first `⌈fit_fraction · rows⌉` lag rows and evaluates
/// residuals on the remaining rows, which come strictly later in time.
pub fn holdout_residuals(series: &MultiSeries, cfg: &ForecastConfig) -> Result<HoldoutFit> {
    if !(cfg.fit_fraction > 0.0 && cfg.fit_fraction < 1.0) {
        return Err(ForecastError::InvalidConfig(format!(
            "fit_fraction must lie in (0, 1), got {}",
            cfg.fit_fraction
        )));
    }
    let design = build_lag_features(series, &cfg.lags)?;
    let rows = design.features.nrows();
    let n_fit = (cfg.fit_fraction * rows as f64).ceil() as usize;
    if n_fit < 1 || n_fit >= rows {
        return Err(ForecastError::SeriesTooShort {
            len: series.len(),
            needed: cfg.lags.lag_order + 2,
        });
    }
    let fit_x = design.features.rows(0, n_fit).into_owned();
    let fit_y = design.targets.rows(0, n_fit).into_owned();
    let forecaster = fit_linear(&fit_x, &fit_y, cfg.ridge)?;

    let mut residuals = Vec::with_capacity(rows - n_fit);
    let mut features = Vec::with_capacity(rows - n_fit);
    for i in n_fit..rows {
        let x = design.features.row(i).transpose();
        let y = design.targets.row(i).transpose();
        residuals.push(&y - forecaster.predict(&x)?);
        features.push(x);
    }
    Ok(HoldoutFit {
        forecaster,
        residuals,
        features,
        first_residual: design.first_target + n_fit,
        last_fit_target: design.first_target + n_fit - 1,
    })
}
