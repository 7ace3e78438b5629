//! Covariance estimation, eigenvalue truncation and ellipsoid arithmetic.
//!
//! The ellipsoid of radius `r` around mean `m` under a truncated covariance
//! `U diag(λ) Uᵀ` is `{x : (x − m)ᵀ U diag(1/λ) Uᵀ (x − m) ≤ r}`. Throughout
//! the crate radii are squared radii: the quadratic form is compared to the
//! radius directly, never to its square root.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::par::Execution;

/// Default eigenvalue threshold for truncation.
pub const DEFAULT_RHO: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("covariance needs at least two samples, got {got}")]
    FewerThanTwoSamples { got: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("no eigenvalue reaches the threshold {rho} (largest is {largest})")]
    AllEigenvaluesBelowThreshold { rho: f64, largest: f64 },
    #[error("truncation threshold must be positive, got {0}")]
    InvalidThreshold(f64),
    #[error("inner radius {inner} exceeds outer radius {outer}")]
    InvertedRadii { inner: f64, outer: f64 },
}

pub type Result<T> = std::result::Result<T, GeometryError>;

fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(GeometryError::DimensionMismatch { expected, got })
    }
}

/// Sample covariance of a set of residual vectors together with their mean.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceEstimate {
    pub matrix: DMatrix<f64>,
    pub mean: DVector<f64>,
    pub sample_count: usize,
}

impl CovarianceEstimate {
    /// Wraps a known covariance. The matrix is symmetrised.
    pub fn new(matrix: DMatrix<f64>, mean: DVector<f64>, sample_count: usize) -> Result<Self> {
        check_dim(matrix.nrows(), matrix.ncols())?;
        check_dim(matrix.nrows(), mean.len())?;
        let matrix = (&matrix + matrix.transpose()) * 0.5;
        Ok(Self {
            matrix,
            mean,
            sample_count,
        })
    }

    /// Zero-mean covariance, e.g. a known noise covariance.
    pub fn known(matrix: DMatrix<f64>) -> Result<Self> {
        let p = matrix.nrows();
        Self::new(matrix, DVector::zeros(p), usize::MAX)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// `(T − 1)`-normalised sample covariance about the sample mean.
pub fn estimate_covariance(residuals: &[DVector<f64>]) -> Result<CovarianceEstimate> {
    let n = residuals.len();
    if n < 2 {
        return Err(GeometryError::FewerThanTwoSamples { got: n });
    }
    let p = residuals[0].len();
    for r in residuals {
        check_dim(p, r.len())?;
    }
    let mut mean = DVector::zeros(p);
    for r in residuals {
        mean += r;
    }
    mean /= n as f64;

    let mut matrix = DMatrix::zeros(p, p);
    let mut centered = DVector::zeros(p);
    for r in residuals {
        centered.copy_from(r);
        centered -= &mean;
        for j in 0..p {
            let cj = centered[j];
            for i in j..p {
                matrix[(i, j)] += centered[i] * cj;
            }
        }
    }
    matrix /= (n - 1) as f64;
    for j in 0..p {
        for i in j + 1..p {
            matrix[(j, i)] = matrix[(i, j)];
        }
    }
    Ok(CovarianceEstimate {
        matrix,
        mean,
        sample_count: n,
    })
}

/// Rank-`k` part of a covariance: the eigenpairs whose eigenvalue reaches the
/// threshold, sorted by decreasing eigenvalue.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedCovariance {
    eigenvalues: Vec<f64>,
    /// p × k, orthonormal columns.
    basis: DMatrix<f64>,
    threshold: f64,
    mean: DVector<f64>,
}

impl TruncatedCovariance {
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn rank(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// `U diag(λ) Uᵀ`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let scaled = &self.basis * DMatrix::from_diagonal(&DVector::from_column_slice(&self.eigenvalues));
        scaled * self.basis.transpose()
    }

    /// `U diag(1/λ) Uᵀ`, materialised. Scoring never uses this.
    pub fn pseudo_inverse(&self) -> DMatrix<f64> {
        let inv = DVector::from_iterator(self.rank(), self.eigenvalues.iter().map(|l| 1.0 / l));
        &self.basis * DMatrix::from_diagonal(&inv) * self.basis.transpose()
    }

    /// Coordinates of `v − mean` in the retained eigenbasis, scaled by
    /// `1/√λ`. The squared norm of the result is the quadratic form.
    pub fn whiten(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim(self.dim(), v.len())?;
        let centered = v - &self.mean;
        let mut coords = self.basis.tr_mul(&centered);
        for (c, l) in coords.iter_mut().zip(&self.eigenvalues) {
            *c /= l.sqrt();
        }
        Ok(coords)
    }

    /// Volume of `{x : (x − m)ᵀ Σ⁺ (x − m) ≤ radius_sq}` inside the retained
    /// `k`-dimensional subspace.
    pub fn volume(&self, radius_sq: f64) -> f64 {
        ellipsoid_volume(self, radius_sq)
    }
}

/// Symmetric eigendecomposition, keeping the eigenpairs with eigenvalue
/// `≥ rho`. Negative round-off eigenvalues are clamped to zero first.
pub fn truncate(cov: &CovarianceEstimate, rho: f64) -> Result<TruncatedCovariance> {
    if !(rho > 0.0) {
        return Err(GeometryError::InvalidThreshold(rho));
    }
    let p = cov.dim();
    let eigen = cov.matrix.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| eigen.eigenvalues[b].total_cmp(&eigen.eigenvalues[a]));

    let kept: Vec<usize> = order
        .iter()
        .copied()
        .filter(|&i| eigen.eigenvalues[i].max(0.0) >= rho)
        .collect();
    if kept.is_empty() {
        let largest = order.first().map_or(0.0, |&i| eigen.eigenvalues[i].max(0.0));
        return Err(GeometryError::AllEigenvaluesBelowThreshold { rho, largest });
    }
    let eigenvalues = kept.iter().map(|&i| eigen.eigenvalues[i]).collect();
    let basis = DMatrix::from_fn(p, kept.len(), |r, c| eigen.eigenvectors[(r, kept[c])]);
    Ok(TruncatedCovariance {
        eigenvalues,
        basis,
        threshold: rho,
        mean: cov.mean.clone(),
    })
}

/// `(v − mean)ᵀ U diag(1/λ) Uᵀ (v − mean)` through the factored form.
pub fn pseudo_inverse_quadform(tc: &TruncatedCovariance, v: &DVector<f64>) -> Result<f64> {
    check_dim(tc.dim(), v.len())?;
    let p = tc.dim();
    let mut total = 0.0;
    for (c, &lambda) in tc.eigenvalues.iter().enumerate() {
        let col = tc.basis.column(c);
        let mut proj = 0.0;
        for i in 0..p {
            proj += col[i] * (v[i] - tc.mean[i]);
        }
        total += proj * proj / lambda;
    }
    Ok(total)
}

/// Volume of the unit ball in `k` dimensions, `π^{k/2} / Γ(k/2 + 1)`.
pub fn unit_ball_volume(k: usize) -> f64 {
    // V_k = V_{k−2} · 2π / k with V_0 = 1, V_1 = 2.
    let mut v = if k % 2 == 0 { 1.0 } else { 2.0 };
    let mut d = if k % 2 == 0 { 2 } else { 3 };
    while d <= k {
        v *= 2.0 * std::f64::consts::PI / d as f64;
        d += 2;
    }
    v
}

/// `c_k · radius_sq^{k/2} · √(∏ λ)`.
pub fn ellipsoid_volume(tc: &TruncatedCovariance, radius_sq: f64) -> f64 {
    let k = tc.rank();
    let r = radius_sq.max(0.0);
    let det_sqrt: f64 = tc.eigenvalues.iter().map(|l| l.sqrt()).product();
    unit_ball_volume(k) * r.powf(k as f64 / 2.0) * det_sqrt
}

pub fn shell_volume(tc: &TruncatedCovariance, inner_sq: f64, outer_sq: f64) -> Result<f64> {
    if inner_sq > outer_sq {
        return Err(GeometryError::InvertedRadii {
            inner: inner_sq,
            outer: outer_sq,
        });
    }
    Ok((ellipsoid_volume(tc, outer_sq) - ellipsoid_volume(tc, inner_sq)).max(0.0))
}

/// Samples per independently seeded Monte-Carlo chunk.
const MC_CHUNK: usize = 1 << 16;

/// Monte-Carlo estimate of [`ellipsoid_volume`]: uniform points in the
/// bounding box of the ellipsoid, expressed in the retained eigenbasis, are
/// mapped back to the ambient space and tested with the quadratic form.
///
/// Chunk `i` draws from ChaCha stream `i` of `seed`, so the estimate does not
/// depend on the execution strategy.
pub fn monte_carlo_volume(
    tc: &TruncatedCovariance,
    radius_sq: f64,
    samples: usize,
    seed: u64,
    exec: Execution,
) -> f64 {
    let k = tc.rank();
    if samples == 0 || radius_sq <= 0.0 {
        return 0.0;
    }
    let half: Vec<f64> = tc.eigenvalues.iter().map(|l| (radius_sq * l).sqrt()).collect();
    let chunks = samples.div_ceil(MC_CHUNK);
    let hits: usize = exec
        .map_range(chunks, |c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let n = MC_CHUNK.min(samples - c * MC_CHUNK);
            let mut coords = DVector::zeros(k);
            (0..n)
                .filter(|_| {
                    for (c, h) in coords.iter_mut().zip(&half) {
                        *c = rng.random_range(-h..=*h);
                    }
                    let x = &tc.mean + &tc.basis * &coords;
                    pseudo_inverse_quadform(tc, &x).is_ok_and(|q| q <= radius_sq)
                })
                .count()
        })
        .into_iter()
        .sum();
    let box_volume: f64 = half.iter().map(|h| 2.0 * h).product();
    box_volume * hits as f64 / samples as f64
}

/// A prediction region: the closed shell between two concentric ellipsoids.
#[derive(Debug, Clone, PartialEq)]
pub struct EllipsoidSpec {
    /// Point forecast plus the residual mean.
    pub center: DVector<f64>,
    pub covariance: TruncatedCovariance,
    pub inner_radius_sq: f64,
    pub outer_radius_sq: f64,
}

impl EllipsoidSpec {
    /// Negative inner radii are clamped to zero.
    pub fn new(
        center: DVector<f64>,
        covariance: TruncatedCovariance,
        inner_radius_sq: f64,
        outer_radius_sq: f64,
    ) -> Result<Self> {
        check_dim(covariance.dim(), center.len())?;
        let inner = inner_radius_sq.max(0.0);
        if inner > outer_radius_sq {
            return Err(GeometryError::InvertedRadii {
                inner,
                outer: outer_radius_sq,
            });
        }
        Ok(Self {
            center,
            covariance,
            inner_radius_sq: inner,
            outer_radius_sq,
        })
    }

    pub fn volume(&self) -> f64 {
        ellipsoid_volume(&self.covariance, self.outer_radius_sq)
            - ellipsoid_volume(&self.covariance, self.inner_radius_sq)
    }

    /// Score of a response `y`: the quadratic form of its residual
    /// `y − center + mean`.
    pub fn score(&self, y: &DVector<f64>) -> Result<f64> {
        check_dim(self.center.len(), y.len())?;
        let residual = y - &self.center + self.covariance.mean();
        pseudo_inverse_quadform(&self.covariance, &residual)
    }
}

/// Closed-set membership: `inner ≤ score(y) ≤ outer`.
pub fn contains(spec: &EllipsoidSpec, y: &DVector<f64>) -> Result<bool> {
    let s = spec.score(y)?;
    Ok(spec.inner_radius_sq <= s && s <= spec.outer_radius_sq)
}
