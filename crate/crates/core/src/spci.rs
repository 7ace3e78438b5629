//! The sequential ellipsoidal conformal loop.
//!
//! Each test step:
//!
//! 1. predicts `ŷ = f̂(x_t)`;
//! 2. picks the covariance (global, local blend, or known) and truncates it;
//! 3. refits the quantile model on the current score window when due;
//! 4. searches `β ∈ [0, α]` for the smallest shell
//!    `Q̂(β) ≤ ê ≤ Q̂(1 − α + β)` centred at `ŷ + ε̄`;
//! 5. records whether `y_t` falls inside and the region volume;
//! 6. pushes the new residual `y_t − ŷ`, evicting the oldest, and rescores.
//!
//! The incoming `y_t` is always judged against the region built before its
//! residual enters the window.

use std::collections::VecDeque;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::forecast::{self, ForecastConfig, ForecastError, Forecaster};
use crate::geometry::{
    self, CovarianceEstimate, EllipsoidSpec, GeometryError, TruncatedCovariance, DEFAULT_RHO,
};
use crate::nonconformity::{self, LocalCovConfig, ResidualBuffer, ScoreError, ScoreSeries};
use crate::quantile::{ConditionalSample, QuantileConfig, QuantileError, QuantileModel};
use crate::series::MultiSeries;

#[derive(Debug, Error)]
pub enum SpciError {
    #[error("engine needs {needed} warm-up residuals, got {got}")]
    NotWarm { needed: usize, got: usize },
    #[error("series of length {len} leaves no room for a training split of {train}")]
    SeriesTooShort { len: usize, train: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error(transparent)]
    Quantile(#[from] QuantileError),
    #[error(transparent)]
    Forecast(#[from] ForecastError),
}

pub type Result<T> = std::result::Result<T, SpciError>;

/// Which covariance shapes the ellipsoid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceMode {
    /// Sample covariance of the whole residual window.
    #[default]
    Global,
    /// Nearest-neighbour blend around the current feature.
    Local(LocalCovConfig),
    /// A fixed, externally supplied covariance and mean.
    #[serde(skip)]
    Known(CovarianceEstimate),
}

/// Candidate values of `β`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaGrid {
    /// `{0, α/(n−1), …, α}`; `n ≥ 2`.
    Uniform(usize),
    /// Only `β = 0`: the region is the full ellipsoid `ê ≤ Q̂(1 − α)`.
    ZeroOnly,
}

impl Default for BetaGrid {
    fn default() -> Self {
        BetaGrid::Uniform(21)
    }
}

impl BetaGrid {
    pub fn values(&self, alpha: f64) -> Vec<f64> {
        match *self {
            BetaGrid::ZeroOnly => vec![0.0],
            BetaGrid::Uniform(n) => (0..n).map(|i| alpha * i as f64 / (n - 1) as f64).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpciConfig {
    pub alpha: f64,
    pub rho: f64,
    pub beta_grid: BetaGrid,
    pub covariance: CovarianceMode,
    pub quantile: QuantileConfig,
    /// Residual window length `T`; `None` keeps every hold-out residual.
    pub window: Option<usize>,
    /// Recompute the global covariance every this many steps.
    pub cov_refresh_stride: usize,
    pub forecast: ForecastConfig,
}

impl Default for SpciConfig {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            rho: DEFAULT_RHO,
            beta_grid: BetaGrid::default(),
            covariance: CovarianceMode::Global,
            quantile: QuantileConfig::default(),
            window: None,
            cov_refresh_stride: 1,
            forecast: ForecastConfig::default(),
        }
    }
}

impl SpciConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(SpciError::InvalidConfig(m));
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        if !(self.rho > 0.0) {
            return bad(format!("rho must be positive, got {}", self.rho));
        }
        if let BetaGrid::Uniform(n) = self.beta_grid {
            if n < 2 {
                return bad(format!("beta grid needs at least 2 points, got {n}"));
            }
        }
        if self.cov_refresh_stride == 0 {
            return bad("cov_refresh_stride must be at least 1".into());
        }
        if self.window == Some(0) {
            return bad("window must be positive".into());
        }
        if let CovarianceMode::Local(l) = &self.covariance {
            l.validate()?;
        }
        self.quantile.validate()?;
        Ok(())
    }
}

/// Per-step outcome; the unit every metric is computed from.
///
/// `beta_hat`, `inner_sq` and `outer_sq` are set for ellipsoidal regions
/// and empty for rectangle and hull baselines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionReport {
    pub step: usize,
    pub contained: bool,
    pub volume: f64,
    pub beta_hat: Option<f64>,
    pub inner_sq: Option<f64>,
    pub outer_sq: Option<f64>,
    pub rank: usize,
}

/// Result of the `β` search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaChoice {
    pub beta: f64,
    pub inner_sq: f64,
    pub outer_sq: f64,
    pub volume: f64,
}

/// Radii for a given `β`. At `β = 0` the lower ellipsoid is empty.
fn radii(sample: &ConditionalSample, alpha: f64, beta: f64) -> (f64, f64) {
    let inner = if beta == 0.0 { 0.0 } else { sample.quantile(beta).max(0.0) };
    (inner, sample.quantile(1.0 - alpha + beta))
}

/// Minimises shell volume over the grid; ties go to the smaller `β`.
pub fn beta_search_sample(
    sample: &ConditionalSample,
    alpha: f64,
    tc: &TruncatedCovariance,
    grid: BetaGrid,
) -> Result<BetaChoice> {
    let mut best: Option<BetaChoice> = None;
    for beta in grid.values(alpha) {
        let (inner_sq, outer_sq) = radii(sample, alpha, beta);
        let volume = geometry::shell_volume(tc, inner_sq, outer_sq)?;
        if best.is_none_or(|b| volume < b.volume) {
            best = Some(BetaChoice {
                beta,
                inner_sq,
                outer_sq,
                volume,
            });
        }
    }
    Ok(best.expect("beta grid is never empty"))
}

pub fn beta_search(
    model: &QuantileModel,
    context: &[f64],
    alpha: f64,
    tc: &TruncatedCovariance,
    grid: BetaGrid,
) -> Result<BetaChoice> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(SpciError::InvalidConfig(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let sample = model.conditional(context)?;
    beta_search_sample(&sample, alpha, tc, grid)
}

/// The region offered for one test step.
#[derive(Debug, Clone, PartialEq)]
pub enum Region {
    Ellipsoid { spec: EllipsoidSpec, beta: f64 },
    /// Every eigenvalue fell below `ρ`: the region collapses to the centre,
    /// and a response counts as covered when its centred residual has
    /// squared norm at most `ρ`.
    Point { center: DVector<f64>, mean: DVector<f64>, rho: f64 },
}

/// A region together with the prediction it was built around.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedStep {
    pub prediction: DVector<f64>,
    pub feature: DVector<f64>,
    pub region: Region,
}

impl PreparedStep {
    pub fn contains(&self, y: &DVector<f64>) -> Result<bool> {
        match &self.region {
            Region::Ellipsoid { spec, .. } => Ok(geometry::contains(spec, y)?),
            Region::Point { center, rho, .. } => {
                if y.len() != center.len() {
                    return Err(GeometryError::DimensionMismatch {
                        expected: center.len(),
                        got: y.len(),
                    }
                    .into());
                }
                Ok((y - center).norm_squared() <= *rho)
            }
        }
    }

    pub fn spec(&self) -> Option<&EllipsoidSpec> {
        match &self.region {
            Region::Ellipsoid { spec, .. } => Some(spec),
            Region::Point { .. } => None,
        }
    }
}

/// State of one sequential run.
pub struct SpciEngine<F: Forecaster> {
    cfg: SpciConfig,
    forecaster: F,
    buffer: ResidualBuffer,
    /// Feature rows aligned with `buffer`; kept only in local mode.
    features: VecDeque<DVector<f64>>,
    scores: ScoreSeries,
    global: CovarianceEstimate,
    /// `None` when truncation left no dimension.
    tc: Option<TruncatedCovariance>,
    model: Option<QuantileModel>,
    steps_since_refit: usize,
    steps_since_cov: usize,
    refits: u64,
}

impl<F: Forecaster> SpciEngine<F> {
    /// Seeds the window with the last `T` warm-up residuals. `features` must
    /// be aligned with `residuals` in local covariance mode and may be empty
    /// otherwise.
    pub fn new(
        cfg: SpciConfig,
        forecaster: F,
        residuals: &[DVector<f64>],
        features: &[DVector<f64>],
    ) -> Result<Self> {
        cfg.validate()?;
        let capacity = cfg.window.unwrap_or(residuals.len());
        if capacity < 2 || residuals.len() < capacity {
            return Err(SpciError::NotWarm {
                needed: capacity.max(2),
                got: residuals.len(),
            });
        }
        let start = residuals.len() - capacity;
        let buffer = ResidualBuffer::from_residuals(capacity, residuals[start..].iter().cloned());
        let features = if matches!(cfg.covariance, CovarianceMode::Local(_)) {
            if features.len() != residuals.len() {
                return Err(ScoreError::MisalignedHistory {
                    features: features.len(),
                    residuals: residuals.len(),
                }
                .into());
            }
            features[start..].iter().cloned().collect()
        } else {
            VecDeque::new()
        };
        let global = match &cfg.covariance {
            CovarianceMode::Known(c) => c.clone(),
            _ => buffer.covariance()?,
        };
        let mut engine = Self {
            scores: ScoreSeries::new(capacity),
            tc: None,
            model: None,
            steps_since_refit: 0,
            steps_since_cov: 0,
            refits: 0,
            cfg,
            forecaster,
            buffer,
            features,
            global,
        };
        engine.set_covariance(engine.global.clone())?;
        Ok(engine)
    }

    pub fn config(&self) -> &SpciConfig {
        &self.cfg
    }

    pub fn buffer(&self) -> &ResidualBuffer {
        &self.buffer
    }

    pub fn scores(&self) -> &ScoreSeries {
        &self.scores
    }

    pub fn truncated(&self) -> Option<&TruncatedCovariance> {
        self.tc.as_ref()
    }

    pub fn forecaster(&self) -> &F {
        &self.forecaster
    }

    /// Number of quantile refits so far. Refit `i` perturbs the forest seed
    /// by `i`.
    pub fn refits(&self) -> u64 {
        self.refits
    }

    /// Truncates `cov` and rescores the whole window under it.
    fn set_covariance(&mut self, cov: CovarianceEstimate) -> Result<()> {
        match geometry::truncate(&cov, self.cfg.rho) {
            Ok(tc) => {
                self.scores = nonconformity::rescore_window(&self.buffer, &tc)?;
                self.tc = Some(tc);
            }
            Err(GeometryError::AllEigenvaluesBelowThreshold { .. }) => {
                let mut zeros = ScoreSeries::new(self.buffer.capacity());
                for _ in 0..self.buffer.len() {
                    zeros.push(0.0);
                }
                self.scores = zeros;
                self.tc = None;
            }
            Err(e) => return Err(e.into()),
        }
        Ok(())
    }

    fn current_mean(&self) -> DVector<f64> {
        match &self.tc {
            Some(tc) => tc.mean().clone(),
            None => self.global.mean.clone(),
        }
    }

    /// Builds the region for feature row `x_t` without touching the window.
    pub fn prepare(&mut self, x_t: &DVector<f64>) -> Result<PreparedStep> {
        let prediction = self.forecaster.predict(x_t)?;

        if let CovarianceMode::Local(local) = &self.cfg.covariance {
            let local = *local;
            let cov = nonconformity::local_covariance(
                &self.buffer,
                x_t,
                self.features.iter(),
                &local,
                &self.global,
            )?;
            self.set_covariance(cov)?;
        }

        if self.model.is_none() || self.steps_since_refit >= self.cfg.quantile.refit_stride {
            let scores = self.scores.make_contiguous();
            self.model = Some(self.cfg.quantile.fit(scores, self.refits)?);
            self.refits += 1;
            self.steps_since_refit = 0;
        }
        self.steps_since_refit += 1;

        let mean = self.current_mean();
        let center = &prediction + &mean;
        let region = match &self.tc {
            None => Region::Point {
                center,
                mean,
                rho: self.cfg.rho,
            },
            Some(tc) => {
                let model = self.model.as_ref().expect("model fitted above");
                let context = self.scores.tail(self.cfg.quantile.context_len());
                let choice = beta_search(model, &context, self.cfg.alpha, tc, self.cfg.beta_grid)?;
                let spec = EllipsoidSpec::new(center, tc.clone(), choice.inner_sq, choice.outer_sq)?;
                Region::Ellipsoid {
                    spec,
                    beta: choice.beta,
                }
            }
        };
        Ok(PreparedStep {
            prediction,
            feature: x_t.clone(),
            region,
        })
    }

    /// Scores `y_t` against a prepared region, then moves the window.
    pub fn observe(&mut self, step: usize, prepared: PreparedStep, y_t: &DVector<f64>) -> Result<RegionReport> {
        let contained = prepared.contains(y_t)?;
        let report = match &prepared.region {
            Region::Ellipsoid { spec, beta } => RegionReport {
                step,
                contained,
                volume: geometry::shell_volume(&spec.covariance, spec.inner_radius_sq, spec.outer_radius_sq)?,
                beta_hat: Some(*beta),
                inner_sq: Some(spec.inner_radius_sq),
                outer_sq: Some(spec.outer_radius_sq),
                rank: spec.covariance.rank(),
            },
            Region::Point { .. } => RegionReport {
                step,
                contained,
                volume: 0.0,
                beta_hat: Some(0.0),
                inner_sq: Some(0.0),
                outer_sq: Some(0.0),
                rank: 0,
            },
        };

        let residual = y_t - &prepared.prediction;
        self.buffer.push(residual.clone());
        if matches!(self.cfg.covariance, CovarianceMode::Local(_)) {
            if self.features.len() == self.buffer.capacity() {
                self.features.pop_front();
            }
            self.features.push_back(prepared.feature);
        }

        self.steps_since_cov += 1;
        match &self.cfg.covariance {
            CovarianceMode::Known(_) => self.push_score(&residual)?,
            CovarianceMode::Global => {
                if self.steps_since_cov >= self.cfg.cov_refresh_stride {
                    self.global = self.buffer.covariance()?;
                    self.steps_since_cov = 0;
                    self.set_covariance(self.global.clone())?;
                } else {
                    self.push_score(&residual)?;
                }
            }
            CovarianceMode::Local(_) => {
                // Scores are rebuilt under the next step's local covariance.
                if self.steps_since_cov >= self.cfg.cov_refresh_stride {
                    self.global = self.buffer.covariance()?;
                    self.steps_since_cov = 0;
                }
            }
        }
        Ok(report)
    }

    fn push_score(&mut self, residual: &DVector<f64>) -> Result<()> {
        let s = match &self.tc {
            Some(tc) => nonconformity::score(residual, tc)?,
            None => 0.0,
        };
        self.scores.push(s);
        Ok(())
    }

    /// `prepare` followed by `observe`.
    pub fn step(&mut self, step: usize, x_t: &DVector<f64>, y_t: &DVector<f64>) -> Result<RegionReport> {
        let prepared = self.prepare(x_t)?;
        self.observe(step, prepared, y_t)
    }
}

/// Everything a test loop needs from the training split.
#[derive(Debug, Clone)]
pub struct PreparedSplit {
    pub fit: forecast::HoldoutFit,
    pub train_len: usize,
}

/// Fits `f̂` on the training prefix and collects hold-out residuals.
pub fn prepare_split(series: &MultiSeries, train_len: usize, cfg: &ForecastConfig) -> Result<PreparedSplit> {
    if train_len > series.len() || train_len <= cfg.lags.lag_order + 1 {
        return Err(SpciError::SeriesTooShort {
            len: series.len(),
            train: train_len,
        });
    }
    let fit = forecast::holdout_residuals(&series.head(train_len), cfg)?;
    Ok(PreparedSplit { fit, train_len })
}

/// Runs the loop over every index from `train_len` to the end of `series`.
pub fn run(series: &MultiSeries, train_len: usize, cfg: &SpciConfig) -> Result<Vec<RegionReport>> {
    let split = prepare_split(series, train_len, &cfg.forecast)?;
    let mut engine = SpciEngine::new(
        cfg.clone(),
        split.fit.forecaster.clone(),
        &split.fit.residuals,
        &split.fit.features,
    )?;
    let lags = cfg.forecast.lags;
    (train_len..series.len())
        .map(|t| engine.step(t, &lags.row(series, t), series.row(t)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forecast::{LagFeatureConfig, ZeroForecaster};
    use crate::quantile::QrfConfig;
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn identity_tc(p: usize) -> TruncatedCovariance {
        geometry::truncate(&CovarianceEstimate::known(DMatrix::identity(p, p)).unwrap(), 1e-3).unwrap()
    }

    fn gaussian(rng: &mut ChaCha8Rng, p: usize) -> DVector<f64> {
        DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal))
    }

    #[test]
    fn beta_tie_goes_to_zero() {
        // Constant scores: every β gives the same (zero-width) shell volume
        // except that β = 0 has no inner ellipsoid; all volumes equal πc.
        let sample = ConditionalSample::from_unsorted(vec![0.0; 10]);
        let c = beta_search_sample(&sample, 0.1, &identity_tc(2), BetaGrid::Uniform(2)).unwrap();
        assert_eq!(c.beta, 0.0);
    }

    #[test]
    fn beta_right_skewed_sample() {
        let mut v: Vec<f64> = (1..=10).map(|i| i as f64 / 100.0).collect();
        v.push(50.0);
        let sample = ConditionalSample::from_unsorted(v);
        let tc = identity_tc(2);
        let alpha = 0.1;
        let c = beta_search_sample(&sample, alpha, &tc, BetaGrid::Uniform(21)).unwrap();
        // Brute force over the same grid.
        let sorted = sample.values();
        let q = |level: f64| sorted[((level * 11.0 - 1e-9).ceil().max(1.0) as usize).min(11) - 1];
        let mut best = (f64::INFINITY, -1.0);
        for i in 0..21 {
            let b = alpha * i as f64 / 20.0;
            let inner = if i == 0 { 0.0 } else { q(b) };
            let vol = std::f64::consts::PI * (q(1.0 - alpha + b) - inner);
            if vol < best.0 {
                best = (vol, b);
            }
        }
        assert_eq!(c.beta, best.1);
        // Any positive β on a grid coarser than 1/11 pushes the upper
        // quantile onto the outlier.
        let coarse = beta_search_sample(&sample, alpha, &tc, BetaGrid::Uniform(11)).unwrap();
        assert_eq!(coarse.beta, 0.0);
        assert_relative_eq!(coarse.outer_sq, 0.1);
    }

    #[test]
    fn beta_uniform_scores_prefer_alpha() {
        let sample = ConditionalSample::from_unsorted((1..=1000).map(|i| i as f64 / 1000.0).collect());
        let tc = geometry::truncate(&CovarianceEstimate::known(DMatrix::identity(1, 1)).unwrap(), 1e-3).unwrap();
        let alpha = 0.2;
        let c = beta_search_sample(&sample, alpha, &tc, BetaGrid::Uniform(21)).unwrap();
        let mut best = (f64::INFINITY, -1.0);
        for i in 0..21 {
            let b = alpha * i as f64 / 20.0;
            let (inner, outer) = radii(&sample, alpha, b);
            let width = 2.0 * (outer.sqrt() - inner.sqrt());
            if width < best.0 {
                best = (width, b);
            }
        }
        assert_relative_eq!(best.1, alpha);
        assert_relative_eq!(c.beta, alpha);
    }

    #[test]
    fn zero_grid_is_plain_ellipsoid() {
        let sample = ConditionalSample::from_unsorted((1..=100).map(f64::from).collect());
        let c = beta_search_sample(&sample, 0.1, &identity_tc(2), BetaGrid::ZeroOnly).unwrap();
        assert_eq!((c.beta, c.inner_sq, c.outer_sq), (0.0, 0.0, 90.0));
    }

    fn iid_engine(p: usize, n_warm: usize, seed: u64, quantile: QuantileConfig) -> (SpciEngine<ZeroForecaster>, ChaCha8Rng) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let warm: Vec<_> = (0..n_warm).map(|_| gaussian(&mut rng, p)).collect();
        let cfg = SpciConfig {
            covariance: CovarianceMode::Known(CovarianceEstimate::known(DMatrix::identity(p, p)).unwrap()),
            quantile,
            ..Default::default()
        };
        (SpciEngine::new(cfg, ZeroForecaster { dim: p }, &warm, &[]).unwrap(), rng)
    }

    #[test]
    fn iid_coverage_with_known_covariance() {
        let (mut engine, mut rng) = iid_engine(2, 2000, 5, QuantileConfig::empirical());
        let x = DVector::zeros(1);
        let mut hits = 0;
        for t in 0..2000 {
            let r = engine.step(t, &x, &gaussian(&mut rng, 2)).unwrap();
            hits += usize::from(r.contained);
            assert_relative_eq!(
                r.volume,
                geometry::shell_volume(&identity_tc(2), r.inner_sq.unwrap(), r.outer_sq.unwrap()).unwrap(),
                epsilon = 1e-12
            );
        }
        let cov = hits as f64 / 2000.0;
        assert!((0.88..=0.92).contains(&cov), "coverage {cov}");
    }

    #[test]
    fn step_evicts_oldest() {
        let (mut engine, mut rng) = iid_engine(2, 50, 6, QuantileConfig::empirical());
        let first = engine.buffer().get(0).unwrap().clone();
        let second = engine.buffer().get(1).unwrap().clone();
        let y = gaussian(&mut rng, 2);
        engine.step(0, &DVector::zeros(1), &y).unwrap();
        assert_eq!(engine.buffer().len(), 50);
        assert_ne!(engine.buffer().get(0).unwrap(), &first);
        assert_eq!(engine.buffer().get(0).unwrap(), &second);
        assert_eq!(engine.buffer().get(49).unwrap(), &y);
        assert_eq!(engine.scores().len(), 50);
    }

    #[test]
    fn not_warm() {
        let cfg = SpciConfig {
            window: Some(100),
            ..Default::default()
        };
        let warm = vec![DVector::zeros(2); 10];
        assert!(matches!(
            SpciEngine::new(cfg, ZeroForecaster { dim: 2 }, &warm, &[]),
            Err(SpciError::NotWarm { needed: 100, got: 10 })
        ));
    }

    fn noise_free_series(n: usize) -> MultiSeries {
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|t| vec![0.5 * t as f64 + 1.0, 2.0 * 0.95f64.powi(t as i32)])
            .collect();
        MultiSeries::from_rows(&rows)
    }

    #[test]
    fn noise_free_series_collapses() {
        let cfg = SpciConfig {
            forecast: ForecastConfig {
                lags: LagFeatureConfig { lag_order: 1, intercept: true },
                ridge: 0.0,
                fit_fraction: 0.5,
            },
            quantile: QuantileConfig::empirical(),
            ..Default::default()
        };
        let series = noise_free_series(120);
        let reports = run(&series, 100, &cfg).unwrap();
        assert_eq!(reports.len(), 20);
        for r in &reports {
            assert!(r.contained);
            assert_eq!(r.volume, 0.0);
            assert_eq!(r.rank, 0);
        }
        assert!(run(&series, 120, &cfg).unwrap().is_empty());
    }

    #[test]
    fn local_mode_with_zero_blend_matches_global() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let rows: Vec<Vec<f64>> = {
            let mut y = [0.0, 0.0];
            (0..700)
                .map(|_| {
                    y = [
                        0.5 * y[0] + rng.sample::<f64, _>(StandardNormal),
                        0.3 * y[1] + 0.2 * y[0] + rng.sample::<f64, _>(StandardNormal),
                    ];
                    y.to_vec()
                })
                .collect()
        };
        let series = MultiSeries::from_rows(&rows);
        let base = SpciConfig {
            forecast: ForecastConfig {
                lags: LagFeatureConfig { lag_order: 2, intercept: true },
                ..Default::default()
            },
            quantile: QuantileConfig {
                engine: crate::quantile::QuantileEngine::Qrf(QrfConfig::default()),
                window: 10,
                refit_stride: 5,
            },
            ..Default::default()
        };
        let global = run(&series, 600, &base).unwrap();
        let local_cfg = SpciConfig {
            covariance: CovarianceMode::Local(LocalCovConfig {
                neighbor_fraction: 0.1,
                blend: 0.0,
            }),
            ..base.clone()
        };
        let local = run(&series, 600, &local_cfg).unwrap();
        assert_eq!(global, local);

        let blended = SpciConfig {
            covariance: CovarianceMode::Local(LocalCovConfig::default()),
            ..base
        };
        let reports = run(&series, 600, &blended).unwrap();
        assert_eq!(reports.len(), 100);
        assert!(reports.iter().all(|r| r.volume > 0.0));
    }

    #[test]
    fn config_validation() {
        let mut c = SpciConfig::default();
        assert!(c.validate().is_ok());
        c.alpha = 1.0;
        assert!(c.validate().is_err());
        let c = SpciConfig {
            beta_grid: BetaGrid::Uniform(1),
            ..Default::default()
        };
        assert!(c.validate().is_err());
    }
}
