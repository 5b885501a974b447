//! Subsonic steady state with insulating walls: `u = 0`, `Lap Phi = rho - b`,
//! `grad Q(rho) = grad Phi`, and total mass equal to the doping mass.
//!
//! The solver iterates in the enthalpy variable. Each sweep solves one
//! Neumann Poisson problem for the current density, shifts the potential by
//! the unique constant that restores the doping mass, and relaxes the
//! density toward `Q^{-1}(Phi + c)`.

use log::debug;

use crate::eos::PressureLaw;
use crate::error::{Error, Result};
use crate::grid::{Grid, ScalarField};
use crate::poisson::NeumannPoisson;

/// Fixed positive background charge.
#[derive(Debug, Clone, PartialEq)]
pub struct DopingProfile {
    b: ScalarField,
}

impl DopingProfile {
    pub fn new(b: ScalarField) -> Result<Self> {
        let min = b.min();
        if !(min > 0.0 && b.values().iter().all(|v| v.is_finite())) {
            return Err(Error::InvalidArgument(format!(
                "doping profile must be strictly positive (min {min})"
            )));
        }
        Ok(Self { b })
    }

    pub fn constant(grid: Grid, base: f64) -> Result<Self> {
        Self::new(ScalarField::constant(grid, base))
    }

    /// `b(x) = base + amp cos(pi x_0 / L)`, varying along the first axis.
    pub fn cosine(grid: Grid, base: f64, amp: f64) -> Result<Self> {
        let l = grid.length();
        Self::new(ScalarField::from_fn(grid, |x| {
            base + amp * (std::f64::consts::PI * x[0] / l).cos()
        }))
    }

    pub fn field(&self) -> &ScalarField {
        &self.b
    }

    pub fn grid(&self) -> &Grid {
        self.b.grid()
    }

    pub fn mass(&self) -> f64 {
        self.b.integral()
    }
}

#[derive(Debug, Clone)]
pub struct SteadyState {
    pub rho_bar: ScalarField,
    /// Mean-zero potential.
    pub phi_bar: ScalarField,
    /// `||Lap_h Q(rho_bar) - (rho_bar - b)||_h`.
    pub residual: f64,
    pub iterations: usize,
    /// `<rho_bar - b, 1>_h`.
    pub mass_defect: f64,
    /// Constant `c` with `Q(rho_bar) = phi_bar + c`.
    pub enthalpy_shift: f64,
    pub residual_history: Vec<f64>,
}

impl SteadyState {
    pub fn grid(&self) -> &Grid {
        self.rho_bar.grid()
    }

    pub fn min_rho(&self) -> f64 {
        self.rho_bar.min()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SteadySolver {
    pub tol: f64,
    pub max_iter: usize,
    /// Initial damping; halved whenever the residual grows.
    pub theta: f64,
    pub poisson_tol: f64,
}

impl Default for SteadySolver {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 500,
            theta: 0.5,
            poisson_tol: crate::poisson::DEFAULT_TOL,
        }
    }
}

impl SteadySolver {
    pub fn new(tol: f64, max_iter: usize) -> Self {
        Self {
            tol,
            max_iter,
            ..Self::default()
        }
    }

    pub fn with_theta(mut self, theta: f64) -> Self {
        self.theta = theta;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "steady tol must be positive, got {}",
                self.tol
            )));
        }
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "damping theta must lie in (0, 1], got {}",
                self.theta
            )));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidArgument("max_iter must be at least 1".into()));
        }
        Ok(())
    }

    pub fn solve(&self, law: &PressureLaw, doping: &DopingProfile) -> Result<SteadyState> {
        self.validate()?;
        let grid = *doping.grid();
        let poisson = NeumannPoisson::new(grid, self.poisson_tol)?;
        let b = doping.field().values();
        let target_mass = doping.mass();

        let mut rho = b.to_vec();
        let mut phi = vec![0.0; rho.len()];
        let mut shift = initial_shift(law, &rho);
        let mut theta = self.theta;
        let mut history = Vec::new();
        let floor = roundoff_floor(&grid, law, &rho);

        for iteration in 0..self.max_iter {
            let rhs: Vec<f64> = rho.iter().zip(b).map(|(r, b)| r - b).collect();
            poisson.solve_into(&rhs, &mut phi)?;
            let residual = enthalpy_residual(&grid, law, &rho, b);
            debug!("steady iteration {iteration}: residual {residual:e}, theta {theta}");
            if let Some(&prev) = history.last() {
                // below the floor an increase is rounding noise, and a smaller
                // theta only lets that noise accumulate
                if residual > prev && residual > 100.0 * floor && theta > 1e-3 {
                    theta *= 0.5;
                }
            }
            history.push(residual);
            if residual <= self.tol {
                let rho_bar = ScalarField::new(grid, rho)?;
                let mass_defect = rho_bar.integral() - target_mass;
                // report the shift of the converged density itself
                let shift = law.enthalpy_unchecked(rho_bar.values()[0]) - phi[0];
                return Ok(SteadyState {
                    phi_bar: ScalarField::new(grid, phi)?,
                    rho_bar,
                    residual,
                    iterations: iteration + 1,
                    mass_defect,
                    enthalpy_shift: shift,
                    residual_history: history,
                });
            }

            shift = mass_shift(&grid, law, &phi, target_mass, shift)?;
            for (r, p) in rho.iter_mut().zip(&phi) {
                let target = law.enthalpy_inverse_unchecked(p + shift);
                *r = (1.0 - theta) * *r + theta * target;
            }
            let min_rho = rho.iter().copied().fold(f64::INFINITY, f64::min);
            if !(min_rho > 0.0) {
                return Err(Error::PositivityLoss {
                    iteration,
                    min_rho,
                    theta,
                });
            }
        }
        Err(Error::NonConvergence {
            iterations: self.max_iter,
            history,
        })
    }

    /// One undamped-by-history sweep from `rho` (same `theta` as configured);
    /// used to check that a returned state is a fixed point.
    pub fn iterate_once(&self, law: &PressureLaw, doping: &DopingProfile, rho: &ScalarField) -> Result<ScalarField> {
        self.validate()?;
        let grid = *doping.grid();
        let poisson = NeumannPoisson::new(grid, self.poisson_tol)?;
        let rhs = rho.sub(doping.field())?;
        let (phi, _) = poisson.solve(&rhs)?;
        let shift = mass_shift(
            &grid,
            law,
            phi.values(),
            doping.mass(),
            initial_shift(law, rho.values()),
        )?;
        let values = rho
            .values()
            .iter()
            .zip(phi.values())
            .map(|(r, p)| (1.0 - self.theta) * r + self.theta * law.enthalpy_inverse_unchecked(p + shift))
            .collect();
        ScalarField::new(grid, values)
    }
}

/// Convenience wrapper with default damping.
pub fn solve_steady(law: &PressureLaw, doping: &DopingProfile, tol: f64, max_iter: usize) -> Result<SteadyState> {
    SteadySolver::new(tol, max_iter).solve(law, doping)
}

/// `||Lap_h Q(rho) - (rho - b)||_h`.
pub fn enthalpy_residual(grid: &Grid, law: &PressureLaw, rho: &[f64], b: &[f64]) -> f64 {
    let q: Vec<f64> = rho.iter().map(|&r| law.enthalpy_unchecked(r)).collect();
    let mut lap = vec![0.0; q.len()];
    grid.laplacian_into(&q, &mut lap);
    lap.iter_mut()
        .zip(rho.iter().zip(b))
        .for_each(|(l, (r, b))| *l -= r - b);
    grid.norm(&lap)
}

/// Size of `||Lap_h Q(rho) - (rho - b)||_h` produced by rounding `rho` alone.
fn roundoff_floor(grid: &Grid, law: &PressureLaw, rho: &[f64]) -> f64 {
    let q_max = rho
        .iter()
        .map(|&r| law.enthalpy_unchecked(r).abs())
        .fold(0.0f64, f64::max);
    let h = grid.h();
    f64::EPSILON * q_max.max(1.0) * 4.0 * grid.dim() as f64 / (h * h) * grid.volume().sqrt()
}

fn initial_shift(law: &PressureLaw, rho: &[f64]) -> f64 {
    let mean = rho.iter().sum::<f64>() / rho.len() as f64;
    law.enthalpy_unchecked(mean)
}

/// Finds `c` with `<Q^{-1}(phi + c), 1>_h = target`. The map is strictly
/// increasing in `c`; safeguarded Newton inside a bisection bracket.
fn mass_shift(grid: &Grid, law: &PressureLaw, phi: &[f64], target: f64, guess: f64) -> Result<f64> {
    let weights = grid.weights();
    let mass_and_slope = |c: f64| -> (f64, f64) {
        let mut m = 0.0;
        let mut dm = 0.0;
        for (w, p) in weights.iter().zip(phi) {
            let rho = law.enthalpy_inverse_unchecked(p + c);
            m += w * rho;
            if rho > 0.0 {
                dm += w / law.enthalpy_prime_unchecked(rho);
            }
        }
        (m - target, dm)
    };

    // gamma > 1: Q^{-1} needs phi + c > 0 everywhere.
    let phi_min = phi.iter().copied().fold(f64::INFINITY, f64::min);
    let mut lo;
    let mut step = 1.0f64.max(guess.abs());
    if law.gamma() > 1.0 {
        lo = -phi_min;
        if mass_and_slope(lo).0 > 0.0 {
            return Err(Error::InvalidArgument(
                "no positive density carries the doping mass for this potential".into(),
            ));
        }
    } else {
        lo = guess - 1.0;
        while mass_and_slope(lo).0 > 0.0 {
            lo -= step;
            step *= 2.0;
        }
    }
    let mut hi = guess.max(lo + f64::EPSILON.max(lo.abs() * 1e-12));
    step = 1.0f64.max(guess.abs());
    while mass_and_slope(hi).0 < 0.0 {
        hi += step;
        step *= 2.0;
        if !hi.is_finite() {
            return Err(Error::InvalidArgument("mass constraint root not bracketed".into()));
        }
    }

    let mut c = guess.clamp(lo, hi);
    let scale = target.abs().max(f64::MIN_POSITIVE);
    for _ in 0..200 {
        let (g, dg) = mass_and_slope(c);
        if g.abs() <= 4.0 * f64::EPSILON * scale {
            return Ok(c);
        }
        if g > 0.0 {
            hi = c;
        } else {
            lo = c;
        }
        let newton = c - g / dg;
        c = if dg > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if hi - lo <= 4.0 * f64::EPSILON * c.abs().max(1.0) {
            return Ok(c);
        }
    }
    Ok(c)
}
