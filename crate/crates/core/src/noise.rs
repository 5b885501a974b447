//! Truncated cylindrical Wiener forcing `sum_k F_k d beta_k` with
//! `F_k(rho, u) = a_k rho u Y(rho, u)`.
//!
//! Every mode shares the spatial profile `rho u Y`, so the momentum forcing
//! divided by the density is `u Y(rho, u) * sum_k a_k d beta_k` at each node.
//! With `sum a_k^2 = 1` the mode sum is itself a `N(0, dt)` variable; the
//! K-mode model and a single effective mode are equal in law.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::grid::{check_grid, ScalarField, VectorField};

/// Shape of `Y(rho, u)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseKind {
    /// `eps rho (u . d)`
    Quadratic,
    /// `eps tanh(rho (u . d))`
    Bounded,
    Off,
}

impl std::str::FromStr for NoiseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "quadratic" => Ok(Self::Quadratic),
            "bounded" => Ok(Self::Bounded),
            "off" => Ok(Self::Off),
            other => Err(Error::InvalidArgument(format!(
                "noise kind `{other}` (expected quadratic, bounded or off)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel {
    weights: Vec<f64>,
    kind: NoiseKind,
    eps: f64,
    direction: Vec<f64>,
}

impl NoiseModel {
    pub fn new(weights: Vec<f64>, kind: NoiseKind, eps: f64, direction: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidArgument("noise needs at least one mode".into()));
        }
        if weights.iter().any(|a| !(*a > 0.0)) {
            return Err(Error::InvalidArgument("noise mode weights must be positive".into()));
        }
        let sum_sq: f64 = weights.iter().map(|a| a * a).sum();
        if (sum_sq - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "noise weights must satisfy sum a_k^2 = 1, got {sum_sq}"
            )));
        }
        if !(eps.is_finite() && eps >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "noise amplitude must be >= 0, got {eps}"
            )));
        }
        let len: f64 = direction.iter().map(|d| d * d).sum::<f64>().sqrt();
        if direction.is_empty() || (len - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument("noise direction must be a unit vector".into()));
        }
        Ok(Self {
            weights,
            kind,
            eps,
            direction,
        })
    }

    /// `K` modes with `a_k` proportional to `2^{-k/2}`, normalised, and
    /// direction `(1, .., 1) / sqrt(dim)`.
    pub fn geometric(modes: usize, kind: NoiseKind, eps: f64, dim: usize) -> Result<Self> {
        let raw: Vec<f64> = (1..=modes).map(|k| 2f64.powf(-(k as f64) / 2.0)).collect();
        let norm = raw.iter().map(|a| a * a).sum::<f64>().sqrt();
        let dir = vec![1.0 / (dim as f64).sqrt(); dim];
        Self::new(raw.into_iter().map(|a| a / norm).collect(), kind, eps, dir)
    }

    pub fn off(dim: usize) -> Self {
        Self::geometric(1, NoiseKind::Off, 0.0, dim).expect("valid default noise")
    }

    pub fn modes(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn kind(&self) -> NoiseKind {
        self.kind
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn direction(&self) -> &[f64] {
        &self.direction
    }

    /// True when the forcing is identically zero and sampling can be skipped.
    pub fn is_silent(&self) -> bool {
        self.kind == NoiseKind::Off || self.eps == 0.0
    }

    #[inline]
    pub fn y(&self, rho: f64, u: &[f64]) -> f64 {
        let ud: f64 = u.iter().zip(&self.direction).map(|(u, d)| u * d).sum();
        match self.kind {
            NoiseKind::Quadratic => self.eps * rho * ud,
            NoiseKind::Bounded => self.eps * (rho * ud).tanh(),
            NoiseKind::Off => 0.0,
        }
    }

    pub fn sample_increment<R: Rng + ?Sized>(&self, dt: f64, rng: &mut R) -> NoiseIncrement {
        let sd = dt.sqrt();
        let d_beta = (0..self.modes())
            .map(|_| sd * rng.sample::<f64, _>(StandardNormal))
            .collect();
        NoiseIncrement { d_beta, dt }
    }

    /// `u Y(rho, u) sum_k a_k d beta_k` at every node.
    pub fn velocity_noise_term(&self, rho: &ScalarField, u: &VectorField, inc: &NoiseIncrement) -> Result<VectorField> {
        check_grid(rho.grid(), u.grid())?;
        if inc.d_beta.len() != self.modes() {
            return Err(Error::InvalidArgument(format!(
                "increment has {} modes, model has {}",
                inc.d_beta.len(),
                self.modes()
            )));
        }
        let mut out = VectorField::zeros(*u.grid());
        self.add_velocity_noise(rho.values(), u.components(), inc.effective(self), out.components_mut());
        Ok(out)
    }

    /// Adds `u Y xi` into `out`; `xi` is the effective scalar increment.
    pub(crate) fn add_velocity_noise(&self, rho: &[f64], u: &[Vec<f64>], xi: f64, out: &mut [Vec<f64>]) {
        if self.kind == NoiseKind::Off || xi == 0.0 {
            return;
        }
        let dim = u.len();
        let mut local = [0.0; 3];
        for (idx, &r) in rho.iter().enumerate() {
            for a in 0..dim {
                local[a] = u[a][idx];
            }
            let factor = self.y(r, &local[..dim]) * xi;
            for a in 0..dim {
                out[a][idx] += local[a] * factor;
            }
        }
    }
}

/// One draw of the K independent Brownian increments over a step `dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseIncrement {
    pub d_beta: Vec<f64>,
    pub dt: f64,
}

impl NoiseIncrement {
    /// `sum_k a_k d beta_k`.
    pub fn effective(&self, model: &NoiseModel) -> f64 {
        self.d_beta.iter().zip(model.weights()).map(|(b, a)| a * b).sum()
    }
}

/// Independent, reproducible generator for trajectory `index` of an ensemble.
pub fn trajectory_rng(master_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

/// Monte Carlo check of the Ito isometry for the scalar Ito integral
/// `int_0^t g(s) d beta(s)` with the frozen coefficient
/// `g(s) = Y(rho0, v(s)) v(s)`, `v(s) = u0 e^{-s}` along the damped
/// deterministic path.
#[derive(Debug, Clone, Copy)]
pub struct IsometryReport {
    /// Sample mean of `(sum_i g_i d beta_i)^2`.
    pub estimate: f64,
    pub stderr: f64,
    /// `sum_i g_i^2 dt`, the exact second moment of the discrete integral.
    pub exact: f64,
    /// `int_0^t g^2 ds` by fine midpoint quadrature.
    pub integral: f64,
}

impl IsometryReport {
    pub fn z_score(&self) -> f64 {
        (self.estimate - self.exact) / self.stderr
    }
}

pub fn ito_isometry_check<R: Rng + ?Sized>(
    model: &NoiseModel,
    rho0: f64,
    u0: &[f64],
    t: f64,
    steps: usize,
    samples: usize,
    rng: &mut R,
) -> IsometryReport {
    let dt = t / steps as f64;
    let coeff = |s: f64| -> f64 {
        let v: Vec<f64> = u0.iter().map(|x| x * (-s).exp()).collect();
        let ud: f64 = v.iter().zip(model.direction()).map(|(a, b)| a * b).sum();
        model.y(rho0, &v) * ud
    };
    let g: Vec<f64> = (0..steps).map(|i| coeff(i as f64 * dt)).collect();
    let exact = g.iter().map(|x| x * x * dt).sum();
    let fine = 64 * steps;
    let df = t / fine as f64;
    let integral = (0..fine).map(|i| coeff((i as f64 + 0.5) * df).powi(2) * df).sum();

    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..samples {
        let mut integral_sample = 0.0;
        for gi in &g {
            let inc = model.sample_increment(dt, rng);
            integral_sample += gi * inc.effective(model);
        }
        let x = integral_sample * integral_sample;
        sum += x;
        sum_sq += x * x;
    }
    let n = samples as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean) * n / (n - 1.0);
    IsometryReport {
        estimate: mean,
        stderr: (var / n).sqrt(),
        exact,
        integral,
    }
}
