//! Comparison regions: coordinate-wise SPCI rectangles, empirical-copula
//! rectangles and convex hulls of covered residuals.

use std::collections::{HashMap, VecDeque};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::forecast::{ForecastError, Forecaster};
use crate::geometry::{self, EllipsoidSpec, GeometryError};
use crate::quantile::{sorted_quantile, ConditionalSample, QuantileConfig, QuantileError, QuantileModel};
use crate::spci::{BetaGrid, RegionReport};

/// Facet tolerance for hull construction and membership.
pub const HULL_TOLERANCE: f64 = 1e-9;
/// Resolution of the common copula level.
pub const COPULA_RESOLUTION: f64 = 1e-4;
/// Largest dimension the hull is built for.
pub const MAX_HULL_DIM: usize = 4;

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("need at least {needed} residuals, got {got}")]
    TooFewResiduals { needed: usize, got: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("points do not span {dim} dimensions")]
    DegenerateHull { dim: usize },
    #[error("convex hull supports dimensions 2 to {MAX_HULL_DIM}, got {0}")]
    DimensionTooHigh(usize),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Quantile(#[from] QuantileError),
    #[error(transparent)]
    Forecast(#[from] ForecastError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

pub type Result<T> = std::result::Result<T, BaselineError>;

/// `α̃ = 1 − (1 − α)^{1/p}`: the per-coordinate level whose independent
/// union has joint level `α`.
pub fn corrected_alpha(alpha: f64, p: usize) -> f64 {
    -(((1.0 - alpha).ln() / p as f64).exp_m1())
}

/// An axis-aligned box `lower ≤ y ≤ upper`.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperRectRegion {
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
}

impl HyperRectRegion {
    pub fn new(lower: DVector<f64>, upper: DVector<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(BaselineError::DimensionMismatch {
                expected: lower.len(),
                got: upper.len(),
            });
        }
        Ok(Self { lower, upper })
    }

    pub fn volume(&self) -> f64 {
        self.upper.iter().zip(self.lower.iter()).map(|(u, l)| (u - l).max(0.0)).product()
    }

    pub fn contains(&self, y: &DVector<f64>) -> Result<bool> {
        if y.len() != self.lower.len() {
            return Err(BaselineError::DimensionMismatch {
                expected: self.lower.len(),
                got: y.len(),
            });
        }
        Ok((0..y.len()).all(|j| self.lower[j] <= y[j] && y[j] <= self.upper[j]))
    }
}

/// How a univariate SPCI turns residuals into an interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum IntervalMode {
    /// Signed residuals with a width-minimising `β`:
    /// `[ŷ + Q̂(β), ŷ + Q̂(1 − α + β)]`.
    #[default]
    Signed,
    /// Absolute residuals: `[ŷ − Q̂(1 − α), ŷ + Q̂(1 − α)]`.
    Absolute,
}

/// Interval offsets around the point forecast.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarInterval {
    pub lower: f64,
    pub upper: f64,
    pub beta: f64,
}

/// Width-minimising interval over the grid; ties go to the smaller `β`.
pub fn scalar_interval(sample: &ConditionalSample, alpha: f64, grid: BetaGrid, mode: IntervalMode) -> ScalarInterval {
    match mode {
        IntervalMode::Absolute => {
            let q = sample.quantile(1.0 - alpha);
            ScalarInterval {
                lower: -q,
                upper: q,
                beta: 0.0,
            }
        }
        IntervalMode::Signed => {
            let mut best: Option<ScalarInterval> = None;
            for beta in grid.values(alpha) {
                let lower = sample.quantile(beta);
                let upper = sample.quantile(1.0 - alpha + beta);
                if best.is_none_or(|b| upper - lower < b.upper - b.lower) {
                    best = Some(ScalarInterval { lower, upper, beta });
                }
            }
            best.expect("beta grid is never empty")
        }
    }
}

/// Univariate SPCI over a sliding window of residuals.
#[derive(Debug, Clone)]
pub struct ScalarSpci {
    alpha: f64,
    grid: BetaGrid,
    mode: IntervalMode,
    quantile: QuantileConfig,
    history: VecDeque<f64>,
    capacity: usize,
    model: Option<QuantileModel>,
    steps_since_refit: usize,
    refits: u64,
}

impl ScalarSpci {
    /// Seeds the window with the last `window` residuals.
    pub fn new(
        alpha: f64,
        grid: BetaGrid,
        mode: IntervalMode,
        quantile: QuantileConfig,
        residuals: &[f64],
        window: Option<usize>,
    ) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(BaselineError::InvalidConfig(format!("alpha must lie in (0, 1), got {alpha}")));
        }
        quantile.validate()?;
        let capacity = window.unwrap_or(residuals.len());
        if capacity == 0 || residuals.len() < capacity {
            return Err(BaselineError::TooFewResiduals {
                needed: capacity.max(1),
                got: residuals.len(),
            });
        }
        let scores = |r: f64| match mode {
            IntervalMode::Signed => r,
            IntervalMode::Absolute => r.abs(),
        };
        Ok(Self {
            alpha,
            grid,
            mode,
            quantile,
            history: residuals[residuals.len() - capacity..].iter().map(|&r| scores(r)).collect(),
            capacity,
            model: None,
            steps_since_refit: 0,
            refits: 0,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn history(&self) -> &VecDeque<f64> {
        &self.history
    }

    /// Interval offsets for the next step.
    pub fn interval(&mut self) -> Result<ScalarInterval> {
        if self.model.is_none() || self.steps_since_refit >= self.quantile.refit_stride {
            let scores = self.history.make_contiguous();
            self.model = Some(self.quantile.fit(scores, self.refits)?);
            self.refits += 1;
            self.steps_since_refit = 0;
        }
        self.steps_since_refit += 1;
        let ctx_len = self.quantile.context_len();
        let context: Vec<f64> = self.history.iter().skip(self.history.len() - ctx_len).copied().collect();
        let sample = self.model.as_ref().expect("model fitted above").conditional(&context)?;
        Ok(scalar_interval(&sample, self.alpha, self.grid, self.mode))
    }

    /// Slides the window forward by one residual.
    pub fn push(&mut self, residual: f64) {
        if self.history.len() == self.capacity {
            self.history.pop_front();
        }
        self.history.push_back(match self.mode {
            IntervalMode::Signed => residual,
            IntervalMode::Absolute => residual.abs(),
        });
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CoordwiseConfig {
    /// Joint level; each coordinate runs at the corrected level.
    pub alpha: f64,
    pub beta_grid: BetaGrid,
    pub mode: IntervalMode,
    pub quantile: QuantileConfig,
    pub window: Option<usize>,
}

impl Default for CoordwiseConfig {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            beta_grid: BetaGrid::default(),
            mode: IntervalMode::default(),
            quantile: QuantileConfig::default(),
            window: None,
        }
    }
}

/// One scalar SPCI per coordinate around a shared multivariate forecaster.
pub struct CoordwiseSpci<F: Forecaster> {
    forecaster: F,
    coords: Vec<ScalarSpci>,
}

impl<F: Forecaster> CoordwiseSpci<F> {
    pub fn new(cfg: &CoordwiseConfig, forecaster: F, residuals: &[DVector<f64>]) -> Result<Self> {
        let p = forecaster.output_dim();
        let level = corrected_alpha(cfg.alpha, p);
        let coords = (0..p)
            .map(|j| {
                let column: Vec<f64> = residuals.iter().map(|r| r[j]).collect();
                ScalarSpci::new(level, cfg.beta_grid, cfg.mode, cfg.quantile.clone(), &column, cfg.window)
            })
            .collect::<Result<_>>()?;
        Ok(Self { forecaster, coords })
    }

    pub fn coordinates(&self) -> &[ScalarSpci] {
        &self.coords
    }

    /// The rectangle for feature row `x_t`, with the forecast it surrounds.
    pub fn region(&mut self, x_t: &DVector<f64>) -> Result<(HyperRectRegion, DVector<f64>)> {
        let pred = self.forecaster.predict(x_t)?;
        let p = pred.len();
        let mut lower = DVector::zeros(p);
        let mut upper = DVector::zeros(p);
        for (j, c) in self.coords.iter_mut().enumerate() {
            let iv = c.interval()?;
            lower[j] = pred[j] + iv.lower;
            upper[j] = pred[j] + iv.upper;
        }
        Ok((HyperRectRegion::new(lower, upper)?, pred))
    }

    pub fn step(&mut self, step: usize, x_t: &DVector<f64>, y_t: &DVector<f64>) -> Result<RegionReport> {
        let (rect, pred) = self.region(x_t)?;
        let contained = rect.contains(y_t)?;
        for (j, c) in self.coords.iter_mut().enumerate() {
            c.push(y_t[j] - pred[j]);
        }
        Ok(rect_report(step, contained, rect.volume(), y_t.len()))
    }
}

fn rect_report(step: usize, contained: bool, volume: f64, p: usize) -> RegionReport {
    RegionReport {
        step,
        contained,
        volume,
        beta_hat: None,
        inner_sq: None,
        outer_sq: None,
        rank: p,
    }
}

/// Result of calibrating a common copula level.
#[derive(Debug, Clone, PartialEq)]
pub struct CopulaCalibration {
    /// Common marginal level `u`.
    pub u: f64,
    /// Per-coordinate `F̂_j⁻¹(u)`.
    pub half_widths: DVector<f64>,
    /// `false` when no `u < 1` reaches the target and `u = 1` was returned.
    pub feasible: bool,
}

/// Smallest grid `u` such that at least `1 − α` of rows have every
/// `|ε̂_j| ≤ F̂_j⁻¹(u)`.
pub fn empirical_copula_calibrate(abs_residuals: &[DVector<f64>], alpha: f64) -> Result<CopulaCalibration> {
    const MIN_ROWS: usize = 10;
    if abs_residuals.len() < MIN_ROWS {
        return Err(BaselineError::TooFewResiduals {
            needed: MIN_ROWS,
            got: abs_residuals.len(),
        });
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(BaselineError::InvalidConfig(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let p = abs_residuals[0].len();
    let n = abs_residuals.len();
    let columns: Vec<Vec<f64>> = (0..p)
        .map(|j| {
            let mut c: Vec<f64> = abs_residuals.iter().map(|r| r[j]).collect();
            c.sort_unstable_by(f64::total_cmp);
            c
        })
        .collect();
    let widths = |u: f64| DVector::from_iterator(p, columns.iter().map(|c| sorted_quantile(c, u)));
    let joint = |h: &DVector<f64>| {
        abs_residuals
            .iter()
            .filter(|r| (0..p).all(|j| r[j] <= h[j]))
            .count() as f64
            / n as f64
    };
    let target = 1.0 - alpha;
    let steps = (1.0 / COPULA_RESOLUTION).round() as usize;
    let level = |k: usize| k as f64 / steps as f64;

    // Joint coverage is monotone in u; find the smallest passing grid index.
    let (mut lo, mut hi) = (1usize, steps);
    if joint(&widths(level(hi))) < target {
        return Ok(CopulaCalibration {
            u: 1.0,
            half_widths: widths(1.0),
            feasible: false,
        });
    }
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if joint(&widths(level(mid))) >= target {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    let u = level(lo);
    Ok(CopulaCalibration {
        u,
        half_widths: widths(u),
        feasible: true,
    })
}

/// Sequential copula rectangles recalibrated on a sliding window of
/// absolute residuals.
pub struct CopulaSpci<F: Forecaster> {
    alpha: f64,
    forecaster: F,
    history: VecDeque<DVector<f64>>,
    capacity: usize,
}

impl<F: Forecaster> CopulaSpci<F> {
    pub fn new(alpha: f64, forecaster: F, residuals: &[DVector<f64>], window: Option<usize>) -> Result<Self> {
        let capacity = window.unwrap_or(residuals.len());
        if capacity == 0 || residuals.len() < capacity {
            return Err(BaselineError::TooFewResiduals {
                needed: capacity.max(1),
                got: residuals.len(),
            });
        }
        let history = residuals[residuals.len() - capacity..].iter().map(|r| r.abs()).collect();
        Ok(Self {
            alpha,
            forecaster,
            history,
            capacity,
        })
    }

    pub fn region(&mut self, x_t: &DVector<f64>) -> Result<(HyperRectRegion, DVector<f64>, CopulaCalibration)> {
        let pred = self.forecaster.predict(x_t)?;
        let cal = empirical_copula_calibrate(self.history.make_contiguous(), self.alpha)?;
        let rect = HyperRectRegion::new(&pred - &cal.half_widths, &pred + &cal.half_widths)?;
        Ok((rect, pred, cal))
    }

    pub fn step(&mut self, step: usize, x_t: &DVector<f64>, y_t: &DVector<f64>) -> Result<RegionReport> {
        let (rect, pred, _) = self.region(x_t)?;
        let contained = rect.contains(y_t)?;
        if self.history.len() == self.capacity {
            self.history.pop_front();
        }
        self.history.push_back((y_t - pred).abs());
        Ok(rect_report(step, contained, rect.volume(), y_t.len()))
    }
}

/// A supporting half-space `normal · x ≤ offset` with unit `normal`.
#[derive(Debug, Clone, PartialEq)]
pub struct Facet {
    pub normal: DVector<f64>,
    pub offset: f64,
}

/// A bounded convex polytope in 2 to 4 dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct HullRegion {
    pub vertices: Vec<DVector<f64>>,
    pub facets: Vec<Facet>,
    volume: f64,
}

impl HullRegion {
    pub fn dim(&self) -> usize {
        self.vertices[0].len()
    }

    pub fn volume(&self) -> f64 {
        self.volume
    }
}

/// Closed membership: every facet inequality holds within tolerance.
pub fn hull_contains(region: &HullRegion, y: &DVector<f64>) -> Result<bool> {
    if y.len() != region.dim() {
        return Err(BaselineError::DimensionMismatch {
            expected: region.dim(),
            got: y.len(),
        });
    }
    Ok(region
        .facets
        .iter()
        .all(|f| f.normal.dot(y) <= f.offset + HULL_TOLERANCE))
}

struct HullFacet {
    /// Sorted point indices.
    vertices: Vec<usize>,
    normal: DVector<f64>,
    offset: f64,
}

/// Unit normal of the hyperplane through `d` points in `d` dimensions,
/// from the cofactors of the edge matrix.
fn hyperplane_normal(points: &[&DVector<f64>]) -> Option<DVector<f64>> {
    let d = points[0].len();
    let edges = DMatrix::from_fn(d - 1, d, |i, j| points[i + 1][j] - points[0][j]);
    let mut normal = DVector::zeros(d);
    for j in 0..d {
        let minor = edges.clone().remove_column(j);
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        normal[j] = sign * minor.determinant();
    }
    let norm = normal.norm();
    (norm > 0.0 && norm.is_finite()).then(|| normal / norm)
}

fn make_facet(points: &[DVector<f64>], mut vertices: Vec<usize>, interior: &DVector<f64>) -> Option<HullFacet> {
    vertices.sort_unstable();
    let refs: Vec<&DVector<f64>> = vertices.iter().map(|&i| &points[i]).collect();
    let mut normal = hyperplane_normal(&refs)?;
    let mut offset = normal.dot(refs[0]);
    if normal.dot(interior) > offset {
        normal = -normal;
        offset = -offset;
    }
    Some(HullFacet { vertices, normal, offset })
}

/// Picks `d + 1` affinely independent points greedily by distance from the
/// affine span of those already chosen.
fn initial_simplex(points: &[DVector<f64>], tol: f64) -> Option<Vec<usize>> {
    let d = points[0].len();
    let first = (0..points.len()).min_by(|&a, &b| points[a][0].total_cmp(&points[b][0]).then(a.cmp(&b)))?;
    let mut chosen = vec![first];
    let mut basis: Vec<DVector<f64>> = Vec::new();
    while chosen.len() <= d {
        let origin = &points[first];
        let mut best = (0.0, usize::MAX);
        for (i, x) in points.iter().enumerate() {
            let mut v = x - origin;
            for b in &basis {
                v -= b * b.dot(&v);
            }
            let dist = v.norm();
            if dist > best.0 {
                best = (dist, i);
            }
        }
        if best.0 <= tol {
            return None;
        }
        let mut v = &points[best.1] - origin;
        for b in &basis {
            v -= b * b.dot(&v);
        }
        basis.push(v.normalize());
        chosen.push(best.1);
    }
    Some(chosen)
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Convex hull by incremental beneath-beyond insertion.
pub fn convex_hull(points: &[DVector<f64>]) -> Result<HullRegion> {
    let d = points.first().map_or(0, |p| p.len());
    if d > MAX_HULL_DIM {
        return Err(BaselineError::DimensionTooHigh(d));
    }
    if d < 2 {
        return Err(BaselineError::InvalidConfig(format!("convex hull needs dimension at least 2, got {d}")));
    }
    if let Some(bad) = points.iter().find(|p| p.len() != d) {
        return Err(BaselineError::DimensionMismatch {
            expected: d,
            got: bad.len(),
        });
    }
    if points.len() <= d {
        return Err(BaselineError::DegenerateHull { dim: d });
    }
    let extent = points
        .iter()
        .flat_map(|p| p.iter())
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = HULL_TOLERANCE * extent.max(1.0);
    let simplex = initial_simplex(points, tol).ok_or(BaselineError::DegenerateHull { dim: d })?;
    let interior = simplex.iter().map(|&i| &points[i]).sum::<DVector<f64>>() / (d + 1) as f64;

    let mut facets: Vec<HullFacet> = (0..=d)
        .map(|skip| {
            let verts = simplex
                .iter()
                .enumerate()
                .filter(|&(k, _)| k != skip)
                .map(|(_, &i)| i)
                .collect();
            make_facet(points, verts, &interior).ok_or(BaselineError::DegenerateHull { dim: d })
        })
        .collect::<Result<_>>()?;

    for (i, x) in points.iter().enumerate() {
        if simplex.contains(&i) {
            continue;
        }
        let visible: Vec<usize> = (0..facets.len())
            .filter(|&f| facets[f].normal.dot(x) - facets[f].offset > HULL_TOLERANCE)
            .collect();
        if visible.is_empty() {
            continue;
        }
        let mut ridges: HashMap<Vec<usize>, usize> = HashMap::new();
        for &f in &visible {
            let v = &facets[f].vertices;
            for skip in 0..d {
                let ridge: Vec<usize> = v.iter().enumerate().filter(|&(k, _)| k != skip).map(|(_, &x)| x).collect();
                *ridges.entry(ridge).or_insert(0) += 1;
            }
        }
        let mut horizon: Vec<Vec<usize>> = ridges.into_iter().filter(|(_, c)| *c == 1).map(|(r, _)| r).collect();
        horizon.sort_unstable();
        let mut keep = vec![true; facets.len()];
        for &f in &visible {
            keep[f] = false;
        }
        let mut k = 0;
        facets.retain(|_| {
            k += 1;
            keep[k - 1]
        });
        for mut ridge in horizon {
            ridge.push(i);
            if let Some(f) = make_facet(points, ridge, &interior) {
                facets.push(f);
            }
        }
    }

    let volume: f64 = facets
        .iter()
        .map(|f| {
            let m = DMatrix::from_fn(d, d, |r, c| points[f.vertices[r]][c] - interior[c]);
            m.determinant().abs()
        })
        .sum::<f64>()
        / factorial(d);

    let mut vertex_ids: Vec<usize> = facets.iter().flat_map(|f| f.vertices.iter().copied()).collect();
    vertex_ids.sort_unstable();
    vertex_ids.dedup();
    Ok(HullRegion {
        vertices: vertex_ids.into_iter().map(|i| points[i].clone()).collect(),
        facets: facets
            .into_iter()
            .map(|f| Facet {
                normal: f.normal,
                offset: f.offset,
            })
            .collect(),
        volume,
    })
}

/// Residuals `e` whose response `ŷ + e` the ellipsoid covers, i.e.
/// `inner ≤ (e − ε̄)ᵀ Σ⁺ (e − ε̄) ≤ outer`.
pub fn covered_residuals<'a>(
    points: impl IntoIterator<Item = &'a DVector<f64>>,
    spec: &EllipsoidSpec,
) -> Result<Vec<DVector<f64>>> {
    let shift = &spec.center - spec.covariance.mean();
    let mut out = Vec::new();
    for e in points {
        if geometry::contains(spec, &(&shift + e))? {
            out.push(e.clone());
        }
    }
    Ok(out)
}

/// Hull of the residuals covered by `spec`, in residual space.
pub fn hull_from_covered<'a>(
    points: impl IntoIterator<Item = &'a DVector<f64>>,
    spec: &EllipsoidSpec,
) -> Result<HullRegion> {
    let p = spec.center.len();
    if p > MAX_HULL_DIM {
        return Err(BaselineError::DimensionTooHigh(p));
    }
    convex_hull(&covered_residuals(points, spec)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::CovarianceEstimate;
    use crate::quantile::empirical_quantile;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    #[test]
    fn corrected_alpha_values() {
        assert_relative_eq!(corrected_alpha(0.1, 1), 0.1, epsilon = 1e-15);
        assert_relative_eq!(corrected_alpha(0.1, 2), 1.0 - 0.9f64.sqrt(), epsilon = 1e-15);
        assert_relative_eq!(corrected_alpha(0.1, 2), 0.05132, epsilon = 1e-5);
        assert_relative_eq!(corrected_alpha(0.1, 10), 0.01048, epsilon = 1e-5);
        for p in 1..20 {
            for &a in &[0.01, 0.05, 0.1, 0.3] {
                assert!(((1.0 - corrected_alpha(a, p)).powi(p as i32) - (1.0 - a)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rectangle_volume_and_membership() {
        let r = HyperRectRegion::new(v(&[0.0, -1.0]), v(&[2.0, 1.0])).unwrap();
        assert_eq!(r.volume(), 4.0);
        assert!(r.contains(&v(&[2.0, -1.0])).unwrap());
        assert!(!r.contains(&v(&[2.1, 0.0])).unwrap());
        assert!(r.contains(&v(&[0.0])).is_err());
    }

    struct Identity(usize);
    impl Forecaster for Identity {
        fn output_dim(&self) -> usize {
            self.0
        }
        fn predict(&self, x: &DVector<f64>) -> std::result::Result<DVector<f64>, ForecastError> {
            Ok(x.rows(0, self.0).into_owned())
        }
    }

    /// Direct scalar SPCI with empirical quantiles, written independently.
    fn direct_scalar(history: &[f64], pred: f64, alpha: f64, n_grid: usize) -> (f64, f64) {
        let mut s = history.to_vec();
        s.sort_by(f64::total_cmp);
        let n = s.len() as f64;
        let q = |level: f64| s[((level * n - 1e-9).ceil().clamp(1.0, n) as usize) - 1];
        let mut best = (f64::INFINITY, 0.0, 0.0);
        for i in 0..n_grid {
            let b = alpha * i as f64 / (n_grid - 1) as f64;
            let (lo, hi) = (q(b), q(1.0 - alpha + b));
            if hi - lo < best.0 {
                best = (hi - lo, pred + lo, pred + hi);
            }
        }
        (best.1, best.2)
    }

    #[test]
    fn one_coordinate_matches_direct_scalar() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let warm: Vec<DVector<f64>> = (0..300).map(|_| v(&[rng.random::<f64>().powi(3) - 0.2])).collect();
        let cfg = CoordwiseConfig {
            alpha: 0.1,
            quantile: QuantileConfig::empirical(),
            window: Some(200),
            ..Default::default()
        };
        let mut engine = CoordwiseSpci::new(&cfg, Identity(1), &warm).unwrap();
        let mut history: Vec<f64> = warm[100..].iter().map(|r| r[0]).collect();
        for t in 0..200 {
            let pred = rng.random::<f64>();
            let y = pred + rng.random::<f64>().powi(3) - 0.2;
            let x = v(&[pred]);
            let (rect, _) = engine.region(&x).unwrap();
            let (lo, hi) = direct_scalar(&history, pred, 0.1, 21);
            assert_eq!((rect.lower[0], rect.upper[0]), (lo, hi), "step {t}");
            // Undo the refit bookkeeping by stepping a clone-free path.
            engine.coords[0].push(y - pred);
            history.remove(0);
            history.push(y - pred);
        }
    }

    #[test]
    fn zero_residuals_give_point_interval() {
        let warm = vec![v(&[0.0, 0.0]); 50];
        let cfg = CoordwiseConfig {
            quantile: QuantileConfig::empirical(),
            ..Default::default()
        };
        let mut engine = CoordwiseSpci::new(&cfg, Identity(2), &warm).unwrap();
        let y = v(&[1.5, -2.0]);
        let r = engine.step(0, &y, &y).unwrap();
        assert!(r.contained);
        assert_eq!(r.volume, 0.0);
    }

    #[test]
    fn absolute_mode_is_symmetric() {
        let sample = ConditionalSample::from_unsorted((1..=100).map(f64::from).collect());
        let iv = scalar_interval(&sample, 0.1, BetaGrid::default(), IntervalMode::Absolute);
        assert_eq!((iv.lower, iv.upper), (-90.0, 90.0));
    }

    #[test]
    fn copula_single_coordinate_is_marginal_quantile() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let xs: Vec<f64> = (0..503).map(|_| rng.random::<f64>()).collect();
        let rows: Vec<DVector<f64>> = xs.iter().map(|&x| v(&[x])).collect();
        let cal = empirical_copula_calibrate(&rows, 0.1).unwrap();
        assert!(cal.feasible);
        assert_eq!(cal.half_widths[0], empirical_quantile(&xs, 0.9).unwrap());
        assert!((cal.u - 0.9).abs() <= 1.0 / 503.0 + COPULA_RESOLUTION);
    }

    #[test]
    fn copula_comonotone_columns() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        // Levels closer than 1/T pick the same order statistic, so T must
        // reach the grid resolution for u to be pinned to it.
        let rows: Vec<DVector<f64>> = (0..10_000)
            .map(|_| {
                let x: f64 = rng.random();
                v(&[x, x])
            })
            .collect();
        let cal = empirical_copula_calibrate(&rows, 0.1).unwrap();
        assert!((cal.u - 0.9).abs() <= COPULA_RESOLUTION, "u = {}", cal.u);
    }

    #[test]
    fn copula_independent_columns_match_sweep() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let rows: Vec<DVector<f64>> = (0..20000).map(|_| v(&[rng.random(), rng.random()])).collect();
        let cal = empirical_copula_calibrate(&rows, 0.1).unwrap();
        // Linear sweep oracle over the same grid.
        let cols: Vec<Vec<f64>> = (0..2)
            .map(|j| {
                let mut c: Vec<f64> = rows.iter().map(|r| r[j]).collect();
                c.sort_by(f64::total_cmp);
                c
            })
            .collect();
        let mut oracle = 1.0;
        for k in 1..=10000 {
            let u = k as f64 / 10000.0;
            let h: Vec<f64> = cols.iter().map(|c| sorted_quantile(c, u)).collect();
            let frac = rows.iter().filter(|r| r[0] <= h[0] && r[1] <= h[1]).count() as f64 / rows.len() as f64;
            if frac >= 0.9 {
                oracle = u;
                break;
            }
        }
        assert_eq!(cal.u, oracle);
        assert!((cal.u - 0.9f64.sqrt()).abs() < 0.01, "u = {}", cal.u);
    }

    #[test]
    fn copula_widths_monotone_in_level() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let rows: Vec<DVector<f64>> = (0..500)
            .map(|_| v(&[rng.random::<f64>(), rng.random::<f64>().powi(2), rng.random()]))
            .collect();
        let mut prev: Option<DVector<f64>> = None;
        for &a in &[0.5, 0.3, 0.2, 0.1, 0.05, 0.01] {
            let h = empirical_copula_calibrate(&rows, a).unwrap().half_widths;
            if let Some(p) = &prev {
                assert!(h.iter().zip(p.iter()).all(|(x, y)| x >= y));
            }
            prev = Some(h);
        }
        assert!(empirical_copula_calibrate(&rows[..5], 0.1).is_err());
    }

    #[test]
    fn square_hull() {
        let pts = vec![v(&[1.0, 1.0]), v(&[-1.0, 1.0]), v(&[-1.0, -1.0]), v(&[1.0, -1.0]), v(&[0.2, 0.1])];
        let h = convex_hull(&pts).unwrap();
        assert_eq!(h.vertices.len(), 4);
        assert_eq!(h.facets.len(), 4);
        assert_relative_eq!(h.volume(), 4.0, epsilon = 1e-12);
        let centroid = h.vertices.iter().sum::<DVector<f64>>() / 4.0;
        assert!(hull_contains(&h, &centroid).unwrap());
        for vert in &h.vertices {
            assert!(hull_contains(&h, vert).unwrap());
            assert!(!hull_contains(&h, &(&centroid + (vert - &centroid) * 2.0)).unwrap());
        }
        assert!(hull_contains(&h, &v(&[0.0])).is_err());
    }

    #[test]
    fn degenerate_inputs() {
        let seg: Vec<_> = (0..10).map(|i| v(&[i as f64, 2.0 * i as f64])).collect();
        assert!(matches!(convex_hull(&seg), Err(BaselineError::DegenerateHull { .. })));
        let high = vec![DVector::zeros(5); 10];
        assert!(matches!(convex_hull(&high), Err(BaselineError::DimensionTooHigh(5))));
    }

    #[test]
    fn cube_and_tesseract_volumes() {
        for d in 3..=4 {
            let mut pts = Vec::new();
            for mask in 0..(1 << d) {
                pts.push(DVector::from_fn(d, |j, _| if mask >> j & 1 == 1 { 1.0 } else { 0.0 }));
            }
            pts.push(DVector::from_element(d, 0.5));
            let h = convex_hull(&pts).unwrap();
            assert_relative_eq!(h.volume(), 1.0, epsilon = 1e-9);
            assert_eq!(h.vertices.len(), 1 << d);
        }
    }

    #[test]
    fn random_hull_contains_its_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for d in 2..=4 {
            let pts: Vec<DVector<f64>> =
                (0..300).map(|_| DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal))).collect();
            let h = convex_hull(&pts).unwrap();
            for x in &pts {
                assert!(hull_contains(&h, x).unwrap());
            }
            for f in &h.facets {
                for vert in &h.vertices {
                    assert!(f.normal.dot(vert) <= f.offset + HULL_TOLERANCE);
                }
            }
        }
    }

    #[test]
    fn gaussian_hull_inside_ellipse() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let pts: Vec<DVector<f64>> = (0..5000).map(|_| v(&[rng.sample(StandardNormal), rng.sample(StandardNormal)])).collect();
        let tc = geometry::truncate(&CovarianceEstimate::known(DMatrix::identity(2, 2)).unwrap(), 1e-3).unwrap();
        let r2 = -2.0 * 0.1f64.ln();
        let spec = EllipsoidSpec::new(DVector::zeros(2), tc, 0.0, r2).unwrap();
        let hull = hull_from_covered(&pts, &spec).unwrap();
        for vert in &hull.vertices {
            assert!(geometry::contains(&spec, vert).unwrap());
        }
        let ellipse = spec.volume();
        // Monte-Carlo area of the hull inside the bounding square.
        let r = r2.sqrt();
        let n = 200_000;
        let inside = (0..n)
            .filter(|_| hull_contains(&hull, &v(&[rng.random_range(-r..r), rng.random_range(-r..r)])).unwrap())
            .count();
        let mc = inside as f64 / n as f64 * 4.0 * r2;
        assert!((hull.volume() - mc).abs() / mc < 0.02, "{} vs {mc}", hull.volume());
        assert!(hull.volume() <= ellipse);
        assert!(hull.volume() >= 0.85 * ellipse, "{} vs {ellipse}", hull.volume());
    }
}
