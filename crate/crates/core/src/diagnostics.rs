//! Perturbation norms, the frozen-symmetrizer energy and the exponentially
//! weighted functional.

use crate::eos::PressureLaw;
use crate::error::{Error, Result};
use crate::grid::{check_grid, Grid, SobolevNorm};
use crate::integrator::State;
use crate::steady::SteadyState;

/// Norms of `sigma = rho - rho_bar`, `u` and `grad(phi)`, `phi = Phi - Phi_bar`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbationNorms {
    pub t: f64,
    /// `||sigma||_k`, `k = 0..=3`.
    pub sigma_h: [f64; 4],
    pub u_h: [f64; 4],
    /// `||grad phi||_h`.
    pub grad_phi: f64,
    /// `sigma_h[3]^2 + u_h[3]^2 + grad_phi^2`.
    pub combined: f64,
}

impl PerturbationNorms {
    pub fn zero(t: f64) -> Self {
        Self {
            t,
            sigma_h: [0.0; 4],
            u_h: [0.0; 4],
            grad_phi: 0.0,
            combined: 0.0,
        }
    }

    /// `sigma_h[0]^2 + u_h[0]^2 + grad_phi^2`.
    pub fn combined_low(&self) -> f64 {
        self.sigma_h[0].powi(2) + self.u_h[0].powi(2) + self.grad_phi.powi(2)
    }
}

pub fn perturbation_norms(state: &State, steady: &SteadyState) -> Result<PerturbationNorms> {
    let grid = state.grid();
    check_grid(grid, steady.grid())?;
    let sigma = state.rho.sub(&steady.rho_bar)?;
    let phi = state.phi.sub(&steady.phi_bar)?;
    let mut sigma_h = [0.0; 4];
    let mut u_h = [0.0; 4];
    for k in 0..4 {
        sigma_h[k] = sigma.sobolev_norm(k)?;
        u_h[k] = state.u.sobolev_norm(k)?;
    }
    let grad_phi = gradient_norm(grid, phi.values());
    Ok(PerturbationNorms {
        t: state.t,
        sigma_h,
        u_h,
        grad_phi,
        combined: sigma_h[3].powi(2) + u_h[3].powi(2) + grad_phi.powi(2),
    })
}

fn gradient_norm(grid: &Grid, f: &[f64]) -> f64 {
    let mut d = vec![0.0; f.len()];
    let mut total = 0.0;
    for axis in 0..grid.dim() {
        grid.centred_diff(f, axis, &mut d);
        total += grid.inner(&d, &d);
    }
    total.sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyValue {
    pub t: f64,
    pub e: f64,
}

/// `int 1/2 (rho_bar |u|^2 + Q'(rho_bar) sigma^2 + |grad phi|^2)` with the
/// symmetrizer frozen at the steady state.
pub fn energy(state: &State, steady: &SteadyState, law: &PressureLaw) -> Result<EnergyValue> {
    let grid = state.grid();
    check_grid(grid, steady.grid())?;
    if !(steady.min_rho() > 0.0) {
        return Err(Error::Domain {
            what: "steady density",
            value: steady.min_rho(),
        });
    }
    let rho_bar = steady.rho_bar.values();
    let mut density = vec![0.0; rho_bar.len()];
    for (idx, d) in density.iter_mut().enumerate() {
        let rb = rho_bar[idx];
        let speed2: f64 = state.u.components().iter().map(|c| c[idx] * c[idx]).sum();
        let sigma = state.rho.values()[idx] - rb;
        *d = rb * speed2 + law.enthalpy_prime_unchecked(rb) * sigma * sigma;
    }
    let phi = state.phi.sub(&steady.phi_bar)?;
    let kinetic_potential = grid.integrate(&density);
    let field = gradient_norm(grid, phi.values()).powi(2);
    Ok(EnergyValue {
        t: state.t,
        e: 0.5 * (kinetic_potential + field),
    })
}

/// `(c1, c2)` with `c1 combined_low <= E <= c2 combined_low`.
pub fn energy_bounds(steady: &SteadyState, law: &PressureLaw) -> (f64, f64) {
    let rho = steady.rho_bar.values();
    let (mut lo, mut hi) = (1.0f64, 1.0f64);
    for &r in rho {
        let qp = law.enthalpy_prime_unchecked(r);
        lo = lo.min(r).min(qp);
        hi = hi.max(r).max(qp);
    }
    (0.5 * lo, 0.5 * hi)
}

/// `e^{alpha t} combined(t)` along a series.
pub fn weighted_series(norms: &[PerturbationNorms], alpha: f64) -> Result<Vec<f64>> {
    if !(alpha >= 0.0) {
        return Err(Error::InvalidArgument(format!("alpha must be >= 0, got {alpha}")));
    }
    Ok(norms.iter().map(|n| (alpha * n.t).exp() * n.combined).collect())
}
