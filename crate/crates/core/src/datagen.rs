//! Stationary AR(w) and VAR(w) simulators.
//!
//! `Y_t = Σ_l A_l Y_{t−l} + ε_t` with `ε_t ~ N(0, Σ)`. Coefficients are
//! drawn from `Unif[−1, 1]` and rescaled so the companion matrix has spectral
//! radius `0.95 · cap`.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::series::MultiSeries;

pub const DEFAULT_SPECTRAL_CAP: f64 = 0.99;
pub const DEFAULT_BURN_IN: usize = 1000;
/// Rescaled coefficients sit at this fraction of the cap.
pub const TARGET_FRACTION: f64 = 0.95;
/// `BBᵀ` is redrawn while its smallest eigenvalue is below this.
pub const MIN_NOISE_EIGENVALUE: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum DatagenError {
    #[error("invalid process: {0}")]
    InvalidSpec(String),
    #[error("noise covariance is not positive definite")]
    NoiseNotPositiveDefinite,
}

pub type Result<T> = std::result::Result<T, DatagenError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    /// `N(0, Σ)` via the Cholesky factor of `Σ`.
    #[default]
    Gaussian,
    /// Independent `Unif[−1, 1]` coordinates; `Σ` is ignored.
    UniformCube,
}

/// A VAR(w) process with its noise law and seed.
#[derive(Debug, Clone, PartialEq)]
pub struct VarProcessSpec {
    pub dim: usize,
    pub order: usize,
    /// `A_1, …, A_w`, each `dim × dim`.
    pub coefficients: Vec<DMatrix<f64>>,
    pub noise_cov: DMatrix<f64>,
    pub spectral_radius_cap: f64,
    pub noise: NoiseKind,
    pub seed: u64,
}

impl VarProcessSpec {
    /// A process from explicit coefficients; fails if it is not stationary
    /// under `cap` or the shapes disagree.
    pub fn new(coefficients: Vec<DMatrix<f64>>, noise_cov: DMatrix<f64>, cap: f64, seed: u64) -> Result<Self> {
        let spec = Self {
            dim: noise_cov.nrows(),
            order: coefficients.len(),
            coefficients,
            noise_cov,
            spectral_radius_cap: cap,
            noise: NoiseKind::Gaussian,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_noise(mut self, noise: NoiseKind) -> Self {
        self.noise = noise;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(DatagenError::InvalidSpec(m));
        if self.dim == 0 || self.order == 0 {
            return bad("dimension and order must be positive".into());
        }
        if !(self.spectral_radius_cap > 0.0 && self.spectral_radius_cap < 1.0) {
            return bad(format!("spectral_radius_cap must lie in (0, 1), got {}", self.spectral_radius_cap));
        }
        if self.coefficients.len() != self.order
            || self.coefficients.iter().any(|a| a.shape() != (self.dim, self.dim))
            || self.noise_cov.shape() != (self.dim, self.dim)
        {
            return bad("coefficient or noise shapes do not match the dimension".into());
        }
        let radius = spectral_radius(&self.coefficients);
        if radius > self.spectral_radius_cap {
            return bad(format!(
                "companion spectral radius {radius} exceeds cap {}",
                self.spectral_radius_cap
            ));
        }
        Ok(())
    }

    pub fn spectral_radius(&self) -> f64 {
        spectral_radius(&self.coefficients)
    }
}

/// The `pw × pw` companion matrix of `A_1, …, A_w`.
pub fn companion_matrix(coefficients: &[DMatrix<f64>]) -> DMatrix<f64> {
    let w = coefficients.len();
    let p = coefficients.first().map_or(0, |a| a.nrows());
    let mut c = DMatrix::zeros(p * w, p * w);
    for (l, a) in coefficients.iter().enumerate() {
        c.view_mut((0, l * p), (p, p)).copy_from(a);
    }
    for i in p..p * w {
        c[(i, i - p)] = 1.0;
    }
    c
}

pub fn spectral_radius(coefficients: &[DMatrix<f64>]) -> f64 {
    companion_matrix(coefficients)
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// Multiplies `A_l` by `s^l`, which scales every companion eigenvalue by `s`.
pub fn rescale_to_radius(coefficients: &mut [DMatrix<f64>], target: f64) {
    let current = spectral_radius(coefficients);
    if current == 0.0 {
        return;
    }
    let s = target / current;
    for (l, a) in coefficients.iter_mut().enumerate() {
        *a *= s.powi(l as i32 + 1);
    }
}

fn uniform_matrix(rng: &mut ChaCha8Rng, p: usize) -> DMatrix<f64> {
    DMatrix::from_fn(p, p, |_, _| rng.random_range(-1.0..=1.0))
}

/// Independent AR(w) coordinates with `Σ = I`.
pub fn make_ar_spec(p: usize, w: usize, seed: u64) -> VarProcessSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut coefficients: Vec<DMatrix<f64>> = (0..w)
        .map(|_| DMatrix::from_diagonal(&DVector::from_fn(p, |_, _| rng.random_range(-1.0..=1.0))))
        .collect();
    rescale_to_radius(&mut coefficients, TARGET_FRACTION * DEFAULT_SPECTRAL_CAP);
    VarProcessSpec {
        dim: p,
        order: w,
        coefficients,
        noise_cov: DMatrix::identity(p, p),
        spectral_radius_cap: DEFAULT_SPECTRAL_CAP,
        noise: NoiseKind::Gaussian,
        seed,
    }
}

/// A dense VAR(w) with `Σ = BBᵀ`, `B_ij ~ Unif[−1, 1]`.
pub fn make_var_spec(p: usize, w: usize, seed: u64) -> VarProcessSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut coefficients: Vec<DMatrix<f64>> = (0..w).map(|_| uniform_matrix(&mut rng, p)).collect();
    rescale_to_radius(&mut coefficients, TARGET_FRACTION * DEFAULT_SPECTRAL_CAP);
    let noise_cov = loop {
        let b = uniform_matrix(&mut rng, p);
        let sigma = &b * b.transpose();
        let sigma = (&sigma + sigma.transpose()) * 0.5;
        if sigma.clone().symmetric_eigenvalues().min() >= MIN_NOISE_EIGENVALUE {
            break sigma;
        }
    };
    VarProcessSpec {
        dim: p,
        order: w,
        coefficients,
        noise_cov,
        spectral_radius_cap: DEFAULT_SPECTRAL_CAP,
        noise: NoiseKind::Gaussian,
        seed,
    }
}

/// A running simulation that can be paused and resumed.
#[derive(Debug, Clone)]
pub struct Simulator {
    spec: VarProcessSpec,
    factor: DMatrix<f64>,
    /// `Y_{t−1}, …, Y_{t−w}`, most recent first.
    lags: Vec<DVector<f64>>,
    rng: ChaCha8Rng,
}

impl Simulator {
    /// Starts from the zero state. Noise draws use stream 1 of the seed so
    /// they never overlap the coefficient draws.
    pub fn new(spec: &VarProcessSpec) -> Result<Self> {
        spec.validate()?;
        let factor = match spec.noise {
            NoiseKind::Gaussian => Cholesky::new(spec.noise_cov.clone())
                .ok_or(DatagenError::NoiseNotPositiveDefinite)?
                .l(),
            NoiseKind::UniformCube => DMatrix::identity(spec.dim, spec.dim),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(1);
        Ok(Self {
            spec: spec.clone(),
            factor,
            lags: vec![DVector::zeros(spec.dim); spec.order],
            rng,
        })
    }

    pub fn state(&self) -> &[DVector<f64>] {
        &self.lags
    }

    /// Replaces the lag state, most recent first.
    pub fn set_state(&mut self, lags: Vec<DVector<f64>>) -> Result<()> {
        if lags.len() != self.spec.order || lags.iter().any(|y| y.len() != self.spec.dim) {
            return Err(DatagenError::InvalidSpec("state shape does not match the process".into()));
        }
        self.lags = lags;
        Ok(())
    }

    /// Draws one noise vector.
    pub fn noise(&mut self) -> DVector<f64> {
        let p = self.spec.dim;
        match self.spec.noise {
            NoiseKind::Gaussian => {
                let z = DVector::from_fn(p, |_, _| self.rng.sample::<f64, _>(StandardNormal));
                &self.factor * z
            }
            NoiseKind::UniformCube => DVector::from_fn(p, |_, _| self.rng.random_range(-1.0..=1.0)),
        }
    }

    pub fn next_value(&mut self) -> DVector<f64> {
        let mut y = self.noise();
        for (a, lag) in self.spec.coefficients.iter().zip(&self.lags) {
            y += a * lag;
        }
        self.lags.rotate_right(1);
        self.lags[0] = y.clone();
        y
    }
}

/// `n` observations after discarding `burn_in` from the zero state.
pub fn simulate(spec: &VarProcessSpec, n: usize, burn_in: usize) -> Result<MultiSeries> {
    let mut sim = Simulator::new(spec)?;
    for _ in 0..burn_in {
        sim.next_value();
    }
    let rows = (0..n).map(|_| sim.next_value()).collect();
    Ok(MultiSeries::new(spec.dim, rows))
}
