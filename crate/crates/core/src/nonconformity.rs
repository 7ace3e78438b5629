//! Residual sliding window and scalar non-conformity scores.

use std::collections::VecDeque;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{self, CovarianceEstimate, GeometryError, TruncatedCovariance};

pub const DEFAULT_NEIGHBOR_FRACTION: f64 = 0.1;
pub const DEFAULT_BLEND: f64 = 0.95;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScoreError {
    #[error("residual buffer is empty")]
    EmptyBuffer,
    #[error("feature history has {features} rows but the buffer holds {residuals}")]
    MisalignedHistory { features: usize, residuals: usize },
    #[error("need at least {needed} neighbours, only {available} available")]
    TooFewNeighbors { needed: usize, available: usize },
    #[error("invalid local covariance configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

pub type Result<T> = std::result::Result<T, ScoreError>;

/// Fixed-capacity window of the most recent residual vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualBuffer {
    capacity: usize,
    entries: VecDeque<DVector<f64>>,
}

impl ResidualBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "buffer capacity must be positive");
        Self {
            capacity,
            entries: VecDeque::with_capacity(capacity),
        }
    }

    /// Keeps the last `capacity` of `residuals`.
    pub fn from_residuals(capacity: usize, residuals: impl IntoIterator<Item = DVector<f64>>) -> Self {
        let mut buf = Self::new(capacity);
        for r in residuals {
            buf.push(r);
        }
        buf
    }

    /// Appends a residual; at capacity the oldest entry is evicted and
    /// returned.
    pub fn push(&mut self, residual: DVector<f64>) -> Option<DVector<f64>> {
        let evicted = if self.entries.len() == self.capacity {
            self.entries.pop_front()
        } else {
            None
        };
        self.entries.push_back(residual);
        evicted
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.entries.len() == self.capacity
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &DVector<f64>> + DoubleEndedIterator {
        self.entries.iter()
    }

    pub fn get(&self, i: usize) -> Option<&DVector<f64>> {
        self.entries.get(i)
    }

    /// Contiguous copy in time order.
    pub fn to_vec(&self) -> Vec<DVector<f64>> {
        self.entries.iter().cloned().collect()
    }

    pub fn covariance(&self) -> Result<CovarianceEstimate> {
        let (a, b) = self.entries.as_slices();
        if b.is_empty() {
            Ok(geometry::estimate_covariance(a)?)
        } else {
            Ok(geometry::estimate_covariance(&self.to_vec())?)
        }
    }
}

/// Time-ordered nonnegative scores with the same eviction discipline as
/// [`ResidualBuffer`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScoreSeries {
    capacity: usize,
    scores: VecDeque<f64>,
}

impl ScoreSeries {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            scores: VecDeque::with_capacity(capacity),
        }
    }

    pub fn push(&mut self, score: f64) {
        debug_assert!(score >= 0.0, "scores are nonnegative");
        if self.scores.len() == self.capacity {
            self.scores.pop_front();
        }
        self.scores.push_back(score.max(0.0));
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.scores.iter().copied().collect()
    }

    /// The most recent `n` scores, oldest first.
    pub fn tail(&self, n: usize) -> Vec<f64> {
        let start = self.scores.len().saturating_sub(n);
        self.scores.range(start..).copied().collect()
    }

    pub fn make_contiguous(&mut self) -> &[f64] {
        self.scores.make_contiguous()
    }
}

/// `(ε̂ − ε̄)ᵀ Σ̂⁺ (ε̂ − ε̄)`.
pub fn score(residual: &DVector<f64>, tc: &TruncatedCovariance) -> Result<f64> {
    Ok(geometry::pseudo_inverse_quadform(tc, residual)?)
}

/// Scores every buffered residual under one shared covariance.
pub fn rescore_window(buffer: &ResidualBuffer, tc: &TruncatedCovariance) -> Result<ScoreSeries> {
    if buffer.is_empty() {
        return Err(ScoreError::EmptyBuffer);
    }
    let mut out = ScoreSeries::new(buffer.capacity());
    for r in buffer.iter() {
        out.push(score(r, tc)?);
    }
    Ok(out)
}

/// Blend of a nearest-neighbour covariance and the global one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LocalCovConfig {
    /// `k = ⌈fraction · T⌉` neighbours.
    pub neighbor_fraction: f64,
    /// Weight `λ` on the neighbour covariance.
    pub blend: f64,
}

impl Default for LocalCovConfig {
    fn default() -> Self {
        Self {
            neighbor_fraction: DEFAULT_NEIGHBOR_FRACTION,
            blend: DEFAULT_BLEND,
        }
    }
}

impl LocalCovConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.neighbor_fraction > 0.0 && self.neighbor_fraction <= 1.0) {
            return Err(ScoreError::InvalidConfig(format!(
                "neighbor_fraction must lie in (0, 1], got {}",
                self.neighbor_fraction
            )));
        }
        if !(0.0..=1.0).contains(&self.blend) {
            return Err(ScoreError::InvalidConfig(format!(
                "blend must lie in [0, 1], got {}",
                self.blend
            )));
        }
        Ok(())
    }

    pub fn neighbors(&self, window: usize) -> usize {
        (self.neighbor_fraction * window as f64).ceil() as usize
    }
}

/// Indices of the `k` features closest to `query` in Euclidean distance.
/// Ties go to the earlier index.
pub fn nearest_neighbors<'a>(
    query: &DVector<f64>,
    history: impl IntoIterator<Item = &'a DVector<f64>>,
    k: usize,
) -> Vec<usize> {
    let mut dist: Vec<(f64, usize)> = history
        .into_iter()
        .enumerate()
        .map(|(i, x)| ((x - query).norm_squared(), i))
        .collect();
    let k = k.min(dist.len());
    if k < dist.len() {
        dist.select_nth_unstable_by(k, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        dist.truncate(k);
    }
    dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    dist.into_iter().map(|(_, i)| i).collect()
}

/// `λ · Cov(kNN residuals) + (1 − λ) · Σ̂`.
///
/// The returned mean is the global mean, so scores stay centred on the same
/// `ε̄` as the global estimate.
pub fn local_covariance<'a>(
    buffer: &ResidualBuffer,
    test_feature: &DVector<f64>,
    past_features: impl ExactSizeIterator<Item = &'a DVector<f64>>,
    cfg: &LocalCovConfig,
    global: &CovarianceEstimate,
) -> Result<CovarianceEstimate> {
    cfg.validate()?;
    if past_features.len() != buffer.len() {
        return Err(ScoreError::MisalignedHistory {
            features: past_features.len(),
            residuals: buffer.len(),
        });
    }
    if cfg.blend == 0.0 {
        return Ok(global.clone());
    }
    let k = cfg.neighbors(buffer.len());
    if k < 2 || k > buffer.len() {
        return Err(ScoreError::TooFewNeighbors {
            needed: k.max(2),
            available: buffer.len(),
        });
    }
    let picked = nearest_neighbors(test_feature, past_features, k);
    let neighbours: Vec<DVector<f64>> = picked
        .iter()
        .map(|&i| buffer.get(i).expect("index within buffer").clone())
        .collect();
    let local = geometry::estimate_covariance(&neighbours)?;
    if local.dim() != global.dim() {
        return Err(GeometryError::DimensionMismatch {
            expected: global.dim(),
            got: local.dim(),
        }
        .into());
    }
    let matrix = &local.matrix * cfg.blend + &global.matrix * (1.0 - cfg.blend);
    Ok(CovarianceEstimate {
        matrix,
        mean: global.mean.clone(),
        sample_count: global.sample_count,
    })
}
