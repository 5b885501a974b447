//! Ito time stepping of the damped stochastic Euler-Poisson system in
//! velocity form with insulating walls.
//!
//! One Euler-Maruyama substep of size `dt` from `(rho, u)`:
//!
//! 1. `rho+ = rho - dt div(rho u)` (divergence form, conserves `<rho, 1>_h`);
//! 2. reject if `min rho+ < rho_floor`;
//! 3. `Phi+ = Lap^{-1}(rho+ - b)`;
//! 4. `u+ = u - dt [(u.grad) u + grad(Q(rho+) - Phi+) + u / tau] + u Y(rho, u) xi`;
//! 5. zero the normal component of `u+` on every wall.
//!
//! The velocity drift reads the already updated density and potential
//! (forward-backward ordering). With the plain forward ordering the acoustic
//! pair is a rotation with amplification `sqrt(1 + (c dt / h)^2) > 1` per step
//! and the grid-scale modes grow without bound; the forward-backward ordering
//! is neutrally stable for `c dt / h < 2` and is still first order. The noise
//! `xi = sum_k a_k d beta_k` always multiplies the pre-step state.

use log::{debug, warn};
use rand::Rng;

use crate::diagnostics::{energy, perturbation_norms, PerturbationNorms};
use crate::eos::PressureLaw;
use crate::error::{Error, Result};
use crate::grid::{check_grid, Grid, ScalarField, VectorField, BOUNDARY_FLUX_TOL};
use crate::noise::{NoiseIncrement, NoiseModel};
use crate::poisson::{NeumannPoisson, DEFAULT_TOL};
use crate::steady::{DopingProfile, SteadyState};

/// Maximum number of consecutive step halvings after a positivity rejection.
pub const MAX_HALVINGS: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub t: f64,
    pub rho: ScalarField,
    pub u: VectorField,
    /// Mean-zero potential with `Lap_h phi = rho - b`.
    pub phi: ScalarField,
    pub tau: f64,
}

impl State {
    pub fn grid(&self) -> &Grid {
        self.rho.grid()
    }

    pub fn mass(&self) -> f64 {
        self.rho.integral()
    }

    pub fn min_rho(&self) -> f64 {
        self.rho.min()
    }

    /// `P'(rho) > |u|^2` at every node.
    pub fn is_subsonic(&self, law: &PressureLaw) -> bool {
        let dim = self.grid().dim();
        let mut local = [0.0; 3];
        self.rho.values().iter().enumerate().all(|(idx, &r)| {
            for (a, l) in local.iter_mut().enumerate().take(dim) {
                *l = self.u.component(a)[idx];
            }
            r > 0.0 && law.is_subsonic_unchecked(r, &local[..dim])
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    EulerMaruyama,
    /// Two-stage average of the drift map; noise still at the left point.
    HeunDrift,
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euler_maruyama" => Ok(Self::EulerMaruyama),
            "heun_drift" => Ok(Self::HeunDrift),
            other => Err(Error::InvalidArgument(format!(
                "scheme `{other}` (expected euler_maruyama or heun_drift)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepConfig {
    pub dt: f64,
    pub cfl: f64,
    pub rho_floor: f64,
    pub scheme: Scheme,
    pub poisson_tol: f64,
}

impl StepConfig {
    /// Defaults: CFL 0.4 and a density floor of `1e-6 min(rho_bar)`.
    pub fn new(dt: f64, steady: &SteadyState) -> Self {
        Self {
            dt,
            cfl: 0.4,
            rho_floor: 1e-6 * steady.min_rho(),
            scheme: Scheme::EulerMaruyama,
            poisson_tol: DEFAULT_TOL,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "step.dt must be positive, got {}",
                self.dt
            )));
        }
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "step.cfl must lie in (0, 1], got {}",
                self.cfl
            )));
        }
        if !(self.rho_floor > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "rho_floor must be positive, got {}",
                self.rho_floor
            )));
        }
        Ok(())
    }
}

/// Initial perturbation `(sigma_0, u_0)` around the steady state.
#[derive(Debug, Clone, PartialEq)]
pub enum Perturbation {
    Zero,
    /// `sigma_0 = eps cos(pi x_0 / L)`, `u_0 = 0`.
    Cosine {
        eps: f64,
    },
    /// `sigma_0 = 0`, `u_0 = eps sin(pi x_0 / L) e_0`.
    Velocity {
        eps: f64,
    },
    Fields {
        sigma: ScalarField,
        u: VectorField,
    },
}

impl Perturbation {
    fn fields(&self, grid: Grid) -> (ScalarField, VectorField) {
        let l = grid.length();
        let pi = std::f64::consts::PI;
        match self {
            Self::Zero => (ScalarField::zeros(grid), VectorField::zeros(grid)),
            Self::Cosine { eps } => (
                ScalarField::from_fn(grid, |x| eps * (pi * x[0] / l).cos()),
                VectorField::zeros(grid),
            ),
            Self::Velocity { eps } => {
                let mut u = VectorField::from_fn(grid, |x| {
                    let mut v = vec![0.0; x.len()];
                    v[0] = eps * (pi * x[0] / l).sin();
                    v
                });
                // sin(pi) is 1.2e-16, not 0
                u.project_boundary();
                (ScalarField::zeros(grid), u)
            }
            Self::Fields { sigma, u } => (sigma.clone(), u.clone()),
        }
    }
}

/// Builds `rho = rho_bar + sigma_0`, `u = u_0` and the matching potential.
pub fn initial_state(
    doping: &DopingProfile,
    steady: &SteadyState,
    perturbation: &Perturbation,
    rho_floor: f64,
    tau: f64,
) -> Result<State> {
    let grid = *steady.grid();
    check_grid(&grid, doping.grid())?;
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::InvalidArgument(format!("tau must be positive, got {tau}")));
    }
    let (sigma, u) = perturbation.fields(grid);
    check_grid(&grid, sigma.grid())?;
    check_grid(&grid, u.grid())?;
    let defect = sigma.integral();
    if defect.abs() > 1e-12 * (sigma.norm() * grid.volume().sqrt()).max(f64::MIN_POSITIVE) {
        return Err(Error::InvalidArgument(format!(
            "density perturbation must carry no mass, <sigma,1>_h = {defect:e}"
        )));
    }
    let normal = u.max_boundary_normal();
    if normal > BOUNDARY_FLUX_TOL {
        return Err(Error::BoundaryFlux { max: normal });
    }
    let rho = ScalarField::new(
        grid,
        steady
            .rho_bar
            .values()
            .iter()
            .zip(sigma.values())
            .map(|(r, s)| r + s)
            .collect(),
    )?;
    let min = rho.min();
    if !(min >= rho_floor) {
        return Err(Error::InvalidArgument(format!(
            "initial density minimum {min:e} below floor {rho_floor:e}"
        )));
    }
    let phi = if matches!(perturbation, Perturbation::Zero) {
        steady.phi_bar.clone()
    } else {
        let poisson = NeumannPoisson::new(grid, DEFAULT_TOL)?;
        poisson.solve(&rho.sub(doping.field())?)?.0
    };
    Ok(State {
        t: 0.0,
        rho,
        u,
        phi,
        tau,
    })
}

/// Bookkeeping of one call to [`Integrator::step`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StepInfo {
    /// Number of CFL pieces the step was split into (1 if no reduction).
    pub cfl_pieces: usize,
    /// Total positivity halvings over all pieces.
    pub halvings: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub t: f64,
    pub norms: PerturbationNorms,
    pub energy: f64,
    pub mass: f64,
    pub min_rho: f64,
    pub subsonic: bool,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub records: Vec<Record>,
    pub final_state: State,
    pub cfl_reductions: usize,
    pub halvings: usize,
}

enum Attempt {
    Accepted,
    Rejected { min_rho: f64 },
}

/// Time stepper for one device. Immutable and `Sync`: ensembles share one
/// instance across threads.
#[derive(Debug, Clone)]
pub struct Integrator {
    grid: Grid,
    law: PressureLaw,
    b: Vec<f64>,
    poisson: NeumannPoisson,
    noise: NoiseModel,
    config: StepConfig,
}

impl Integrator {
    pub fn new(law: PressureLaw, doping: &DopingProfile, noise: NoiseModel, config: StepConfig) -> Result<Self> {
        config.validate()?;
        let grid = *doping.grid();
        if noise.direction().len() != grid.dim() {
            return Err(Error::InvalidArgument(format!(
                "noise direction has {} components on a {}-D grid",
                noise.direction().len(),
                grid.dim()
            )));
        }
        Ok(Self {
            grid,
            law,
            b: doping.field().values().to_vec(),
            poisson: NeumannPoisson::new(grid, config.poisson_tol)?,
            noise,
            config,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn law(&self) -> &PressureLaw {
        &self.law
    }

    pub fn noise(&self) -> &NoiseModel {
        &self.noise
    }

    pub fn config(&self) -> &StepConfig {
        &self.config
    }

    /// Largest stable step `cfl h / max(|u| + sqrt(P'(rho)))`.
    pub fn cfl_limit(&self, state: &State) -> f64 {
        let dim = self.grid.dim();
        let mut fastest = 0.0f64;
        for (idx, &r) in state.rho.values().iter().enumerate() {
            let speed2: f64 = (0..dim).map(|a| state.u.component(a)[idx].powi(2)).sum();
            fastest = fastest.max(speed2.sqrt() + self.law.pressure_prime_unchecked(r).sqrt());
        }
        if fastest > 0.0 {
            self.config.cfl * self.grid.h() / fastest
        } else {
            f64::INFINITY
        }
    }

    /// Advances `state` by exactly `config.dt`, splitting for CFL and halving
    /// pieces that would drive the density below the floor.
    pub fn step<R: Rng + ?Sized>(&self, state: &mut State, rng: &mut R) -> Result<StepInfo> {
        check_grid(&self.grid, state.grid())?;
        let dt = self.config.dt;
        let limit = self.cfl_limit(state);
        let pieces = if dt <= limit { 1 } else { (dt / limit).ceil() as usize };
        if pieces > 1 {
            debug!("t = {}: CFL reduction into {pieces} pieces (limit {limit:e})", state.t);
        }
        let piece = dt / pieces as f64;
        let t0 = state.t;
        let mut info = StepInfo {
            cfl_pieces: pieces,
            halvings: 0,
        };
        let mut stack: Vec<(f64, usize)> = Vec::new();
        for _ in 0..pieces {
            stack.push((piece, 0));
            while let Some((size, depth)) = stack.pop() {
                match self.substep(state, size, rng)? {
                    Attempt::Accepted => {}
                    Attempt::Rejected { min_rho } => {
                        if depth == MAX_HALVINGS {
                            return Err(Error::BlowUp {
                                t: state.t,
                                min_rho,
                                halvings: depth,
                                snapshot: Box::new(state.clone()),
                            });
                        }
                        info.halvings += 1;
                        stack.push((0.5 * size, depth + 1));
                        stack.push((0.5 * size, depth + 1));
                    }
                }
            }
        }
        state.t = t0 + dt;
        Ok(info)
    }

    fn substep<R: Rng + ?Sized>(&self, state: &mut State, dt: f64, rng: &mut R) -> Result<Attempt> {
        let (rho, u, phi) = match self.drift(state, dt)? {
            Ok(fields) => fields,
            Err(min_rho) => return Ok(Attempt::Rejected { min_rho }),
        };
        let xi = if self.noise.is_silent() {
            0.0
        } else {
            self.noise.sample_increment(dt, rng).effective(&self.noise)
        };
        self.commit(state, rho, u, phi, xi, dt);
        Ok(Attempt::Accepted)
    }

    /// One substep of size `inc.dt` with a given noise draw and no CFL or
    /// positivity control.
    pub fn substep_with(&self, state: &mut State, inc: &NoiseIncrement) -> Result<()> {
        check_grid(&self.grid, state.grid())?;
        match self.drift(state, inc.dt)? {
            Ok((rho, u, phi)) => {
                self.commit(state, rho, u, phi, inc.effective(&self.noise), inc.dt);
                Ok(())
            }
            Err(min_rho) => Err(Error::BlowUp {
                t: state.t,
                min_rho,
                halvings: 0,
                snapshot: Box::new(state.clone()),
            }),
        }
    }

    /// Drift part of the scheme; the inner `Err` carries the offending
    /// density minimum of a rejected attempt.
    #[allow(clippy::type_complexity)]
    fn drift(&self, state: &State, dt: f64) -> Result<std::result::Result<(Vec<f64>, Vec<Vec<f64>>, Vec<f64>), f64>> {
        let rho = state.rho.values();
        let u = state.u.components();
        match self.config.scheme {
            Scheme::EulerMaruyama => self.drift_map(rho, u, state.tau, dt),
            Scheme::HeunDrift => {
                let (r1, u1, _) = match self.drift_map(rho, u, state.tau, dt)? {
                    Ok(x) => x,
                    Err(m) => return Ok(Err(m)),
                };
                let (r2, u2, _) = match self.drift_map(&r1, &u1, state.tau, dt)? {
                    Ok(x) => x,
                    Err(m) => return Ok(Err(m)),
                };
                let r: Vec<f64> = rho.iter().zip(&r2).map(|(a, b)| 0.5 * (a + b)).collect();
                let v: Vec<Vec<f64>> = u
                    .iter()
                    .zip(&u2)
                    .map(|(a, b)| a.iter().zip(b).map(|(x, y)| 0.5 * (x + y)).collect())
                    .collect();
                let mut phi = vec![0.0; r.len()];
                self.solve_potential(&r, &mut phi)?;
                Ok(Ok((r, v, phi)))
            }
        }
    }

    #[allow(clippy::type_complexity)]
    fn drift_map(
        &self,
        rho: &[f64],
        u: &[Vec<f64>],
        tau: f64,
        dt: f64,
    ) -> Result<std::result::Result<(Vec<f64>, Vec<Vec<f64>>, Vec<f64>), f64>> {
        let g = &self.grid;
        let len = rho.len();
        let dim = g.dim();

        let mut div = vec![0.0; len];
        let mut flux = vec![0.0; len];
        for (axis, comp) in u.iter().enumerate() {
            for ((f, r), v) in flux.iter_mut().zip(rho).zip(comp) {
                *f = r * v;
            }
            g.add_divergence_axis(&flux, axis, &mut div);
        }
        let rho_new: Vec<f64> = rho.iter().zip(&div).map(|(r, d)| r - dt * d).collect();
        if let Some(min) = below_floor(&rho_new, self.config.rho_floor) {
            return Ok(Err(min));
        }

        let mut phi = vec![0.0; len];
        self.solve_potential(&rho_new, &mut phi)?;

        // potential of the acceleration: Q(rho+) - Phi+
        let psi: Vec<f64> = rho_new
            .iter()
            .zip(&phi)
            .map(|(&r, p)| self.law.enthalpy_unchecked(r) - p)
            .collect();
        let inv_tau = 1.0 / tau;
        let mut u_new = Vec::with_capacity(dim);
        let mut d = vec![0.0; len];
        for (i, ui) in u.iter().enumerate() {
            let mut acc: Vec<f64> = ui.iter().map(|v| v * inv_tau).collect();
            g.centred_diff(&psi, i, &mut d);
            acc.iter_mut().zip(&d).for_each(|(a, d)| *a += d);
            for (j, uj) in u.iter().enumerate() {
                g.centred_diff(ui, j, &mut d);
                acc.iter_mut()
                    .zip(uj.iter().zip(&d))
                    .for_each(|(a, (v, d))| *a += v * d);
            }
            u_new.push(ui.iter().zip(&acc).map(|(v, a)| v - dt * a).collect());
        }
        Ok(Ok((rho_new, u_new, phi)))
    }

    fn commit(&self, state: &mut State, rho: Vec<f64>, mut u: Vec<Vec<f64>>, phi: Vec<f64>, xi: f64, dt: f64) {
        self.noise
            .add_velocity_noise(state.rho.values(), state.u.components(), xi, &mut u);
        self.grid.project_normal(&mut u);
        state.rho.values_mut().copy_from_slice(&rho);
        state.phi.values_mut().copy_from_slice(&phi);
        for (dst, src) in state.u.components_mut().iter_mut().zip(u) {
            *dst = src;
        }
        state.t += dt;
    }

    fn solve_potential(&self, rho: &[f64], phi: &mut [f64]) -> Result<()> {
        let rhs: Vec<f64> = rho.iter().zip(&self.b).map(|(r, b)| r - b).collect();
        self.poisson.solve_into(&rhs, phi).map(|_| ())
    }

    /// Runs from `init` to `t_end`, recording diagnostics every
    /// `record_stride` steps and after the last one.
    pub fn simulate<R: Rng + ?Sized>(
        &self,
        init: State,
        steady: &SteadyState,
        t_end: f64,
        record_stride: usize,
        rng: &mut R,
    ) -> Result<Trajectory> {
        if !(t_end >= 0.0) {
            return Err(Error::InvalidArgument(format!("t_end must be >= 0, got {t_end}")));
        }
        if record_stride == 0 {
            return Err(Error::InvalidArgument("record_stride must be at least 1".into()));
        }
        check_grid(&self.grid, steady.grid())?;
        let steps = step_count(t_end, self.config.dt);
        let t0 = init.t;
        let mut state = init;
        let mut records = vec![self.record(&state, steady)?];
        let mut cfl_reductions = 0;
        let mut halvings = 0;
        let mut warned = !records[0].subsonic;
        if warned {
            warn!("initial state is not subsonic");
        }
        for k in 1..=steps {
            let info = self.step(&mut state, rng)?;
            state.t = t0 + k as f64 * self.config.dt;
            cfl_reductions += usize::from(info.cfl_pieces > 1);
            halvings += info.halvings;
            if k % record_stride == 0 || k == steps {
                let rec = self.record(&state, steady)?;
                if !rec.subsonic && !warned {
                    warn!("subsonic condition violated at t = {}", rec.t);
                    warned = true;
                }
                records.push(rec);
            }
        }
        Ok(Trajectory {
            records,
            final_state: state,
            cfl_reductions,
            halvings,
        })
    }

    pub fn record(&self, state: &State, steady: &SteadyState) -> Result<Record> {
        Ok(Record {
            t: state.t,
            norms: perturbation_norms(state, steady)?,
            energy: energy(state, steady, &self.law)?.e,
            mass: state.mass(),
            min_rho: state.min_rho(),
            subsonic: state.is_subsonic(&self.law),
        })
    }
}

/// Number of steps of size `dt` covering `[0, t_end]`, tolerant of the
/// round-off in `t_end / dt`.
pub fn step_count(t_end: f64, dt: f64) -> usize {
    let ratio = t_end / dt;
    let nearest = ratio.round();
    if (ratio - nearest).abs() <= 1e-9 * nearest.max(1.0) {
        nearest as usize
    } else {
        ratio.ceil() as usize
    }
}

fn below_floor(rho: &[f64], floor: f64) -> Option<f64> {
    let min = rho.iter().copied().fold(f64::INFINITY, f64::min);
    if rho.iter().all(|r| *r >= floor) {
        None
    } else if min.is_nan() || rho.iter().any(|r| r.is_nan()) {
        Some(f64::NAN)
    } else {
        Some(min)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::{trajectory_rng, NoiseKind};
    use crate::steady::solve_steady;
    use nalgebra::{DMatrix, DVector};
    use std::f64::consts::PI;

    fn law() -> PressureLaw {
        PressureLaw::gamma_law(1.0, 2.0).unwrap()
    }

    fn device(n: usize) -> (DopingProfile, SteadyState) {
        let g = Grid::unit(1, n).unwrap();
        let doping = DopingProfile::cosine(g, 1.0, 0.1).unwrap();
        let steady = solve_steady(&law(), &doping, 1e-10, 500).unwrap();
        (doping, steady)
    }

    fn stepper(doping: &DopingProfile, steady: &SteadyState, dt: f64, noise: NoiseModel) -> Integrator {
        Integrator::new(law(), doping, noise, StepConfig::new(dt, steady)).unwrap()
    }

    #[test]
    fn zero_perturbation_reproduces_the_steady_state() {
        let (doping, steady) = device(65);
        let s = initial_state(&doping, &steady, &Perturbation::Zero, 1e-6, 1.0).unwrap();
        assert_eq!(s.rho, steady.rho_bar);
        assert_eq!(s.phi, steady.phi_bar);
        assert!(s.u.components()[0].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn initial_state_rejections() {
        let (doping, steady) = device(33);
        let g = *steady.grid();
        let massive = Perturbation::Fields {
            sigma: ScalarField::constant(g, 0.01),
            u: VectorField::zeros(g),
        };
        assert!(initial_state(&doping, &steady, &massive, 1e-6, 1.0).is_err());
        let leaky = Perturbation::Fields {
            sigma: ScalarField::zeros(g),
            u: VectorField::from_fn(g, |_| vec![1.0]),
        };
        assert!(matches!(
            initial_state(&doping, &steady, &leaky, 1e-6, 1.0),
            Err(Error::BoundaryFlux { .. })
        ));
        let vacuum = Perturbation::Cosine { eps: 2.0 };
        assert!(initial_state(&doping, &steady, &vacuum, 1e-6, 1.0).is_err());
    }

    #[test]
    fn cosine_initial_data_carries_no_mass() {
        let (doping, steady) = device(257);
        let s = initial_state(&doping, &steady, &Perturbation::Cosine { eps: 0.01 }, 1e-6, 1.0).unwrap();
        assert!((s.mass() - doping.mass()).abs() <= 1e-14);
    }

    #[test]
    fn steady_state_is_a_fixed_point_without_noise() {
        let (doping, steady) = device(129);
        let integ = stepper(&doping, &steady, 1e-3, NoiseModel::off(1));
        let mut s = initial_state(&doping, &steady, &Perturbation::Zero, 1e-6, 1.0).unwrap();
        let mut rng = trajectory_rng(0, 0);
        integ.step(&mut s, &mut rng).unwrap();
        let drift = s.rho.sub(&steady.rho_bar).unwrap().norm() + s.u.norm();
        assert!(drift <= 10.0 * DEFAULT_TOL, "{drift:e}");
    }

    #[test]
    fn noise_vanishes_at_rest() {
        let (doping, steady) = device(65);
        let noise = NoiseModel::geometric(8, NoiseKind::Quadratic, 5.0, 1).unwrap();
        let integ = stepper(&doping, &steady, 1e-3, noise);
        let mut s = initial_state(&doping, &steady, &Perturbation::Zero, 1e-6, 1.0).unwrap();
        let mut rng = trajectory_rng(1, 0);
        for _ in 0..10 {
            integ.step(&mut s, &mut rng).unwrap();
        }
        assert!(s.u.norm() <= 1e-9);
    }

    #[test]
    fn mass_is_conserved_on_random_states() {
        use rand::Rng;
        let (doping, steady) = device(65);
        let g = *steady.grid();
        let noise = NoiseModel::geometric(8, NoiseKind::Quadratic, 0.5, 1).unwrap();
        let integ = stepper(&doping, &steady, 1e-3, noise);
        let mut rng = trajectory_rng(7, 0);
        for _ in 0..20 {
            let mut sigma: Vec<f64> = (0..g.node_count()).map(|_| rng.random_range(-0.05..0.05)).collect();
            let mean = g.integrate(&sigma) / g.volume();
            sigma.iter_mut().for_each(|s| *s -= mean);
            let mut u = VectorField::new(
                g,
                vec![(0..g.node_count()).map(|_| rng.random_range(-0.1..0.1)).collect()],
            )
            .unwrap();
            u.project_boundary();
            let pert = Perturbation::Fields {
                sigma: ScalarField::new(g, sigma).unwrap(),
                u,
            };
            let mut s = initial_state(&doping, &steady, &pert, 1e-6, 1.0).unwrap();
            let m0 = s.mass();
            integ.step(&mut s, &mut rng).unwrap();
            assert!((s.mass() - m0).abs() <= 1e-12 * m0);
            assert!(s.u.max_boundary_normal() <= BOUNDARY_FLUX_TOL);
        }
    }

    /// Straight-line single step on six nodes (four interior) with a dense
    /// bordered solve for the potential.
    #[test]
    fn single_step_matches_straight_line_oracle() {
        let n = 6;
        let g = Grid::unit(1, n).unwrap();
        let h = g.h();
        let w: Vec<f64> = (0..n).map(|i| if i == 0 || i == n - 1 { h / 2.0 } else { h }).collect();
        let rho0 = [1.10, 0.95, 1.02, 0.97, 1.05, 0.99];
        let u0 = [0.0, 0.03, -0.02, 0.05, 0.01, 0.0];
        let mass: f64 = rho0.iter().zip(&w).map(|(r, w)| r * w).sum();
        let b = mass / 1.0;
        let (dt, tau, eps, xi_draw) = (1e-2, 1.0, 0.5, 0.0731);
        let doping = DopingProfile::constant(g, b).unwrap();
        let steady = solve_steady(&law(), &doping, 1e-12, 10).unwrap();
        let noise = NoiseModel::new(vec![1.0], NoiseKind::Quadratic, eps, vec![1.0]).unwrap();
        let integ = Integrator::new(law(), &doping, noise, StepConfig::new(dt, &steady)).unwrap();
        let pert = Perturbation::Fields {
            sigma: ScalarField::new(g, rho0.iter().map(|r| r - b).collect()).unwrap(),
            u: VectorField::new(g, vec![u0.to_vec()]).unwrap(),
        };
        let mut s = initial_state(&doping, &steady, &pert, 1e-6, tau).unwrap();
        integ
            .substep_with(
                &mut s,
                &NoiseIncrement {
                    d_beta: vec![xi_draw],
                    dt,
                },
            )
            .unwrap();

        // continuity
        let f: Vec<f64> = (0..n).map(|i| rho0[i] * u0[i]).collect();
        let mut rho1 = [0.0; 6];
        for i in 0..n {
            let div = if i == 0 {
                f[1] / h
            } else if i == n - 1 {
                -f[n - 2] / h
            } else {
                (f[i + 1] - f[i - 1]) / (2.0 * h)
            };
            rho1[i] = rho0[i] - dt * div;
        }
        // bordered Neumann system for the potential
        let mut a = DMatrix::<f64>::zeros(n + 1, n + 1);
        let mut rhs = DVector::<f64>::zeros(n + 1);
        for i in 0..n {
            let (l, r) = if i == 0 {
                (1, 1)
            } else if i == n - 1 {
                (n - 2, n - 2)
            } else {
                (i - 1, i + 1)
            };
            a[(i, l)] += 1.0 / (h * h);
            a[(i, r)] += 1.0 / (h * h);
            a[(i, i)] -= 2.0 / (h * h);
            a[(i, n)] = w[i];
            a[(n, i)] = w[i];
            rhs[i] = rho1[i] - b;
        }
        let sol = a.lu().solve(&rhs).unwrap();
        let phi1: Vec<f64> = (0..n).map(|i| sol[i]).collect();
        // velocity
        let psi: Vec<f64> = (0..n).map(|i| 2.0 * rho1[i] - phi1[i]).collect();
        let mut u1 = [0.0; 6];
        for i in 1..n - 1 {
            let dpsi = (psi[i + 1] - psi[i - 1]) / (2.0 * h);
            let du = (u0[i + 1] - u0[i - 1]) / (2.0 * h);
            let y = eps * rho0[i] * u0[i];
            u1[i] = u0[i] - dt * (u0[i] * du + dpsi + u0[i] / tau) + u0[i] * y * xi_draw;
        }

        for i in 0..n {
            assert!((s.rho.values()[i] - rho1[i]).abs() <= 1e-14, "rho[{i}]");
            assert!((s.u.component(0)[i] - u1[i]).abs() <= 1e-14, "u[{i}]");
            assert!((s.phi.values()[i] - phi1[i]).abs() <= 1e-14, "phi[{i}]");
        }
    }

    #[test]
    fn cfl_violation_splits_the_step() {
        let (doping, steady) = device(65);
        let integ = stepper(&doping, &steady, 0.05, NoiseModel::off(1));
        let mut s = initial_state(&doping, &steady, &Perturbation::Cosine { eps: 0.01 }, 1e-6, 1.0).unwrap();
        let info = integ.step(&mut s, &mut trajectory_rng(0, 0)).unwrap();
        assert!(info.cfl_pieces > 1);
        assert!((s.t - 0.05).abs() < 1e-15);
    }

    #[test]
    fn simulate_with_zero_horizon_has_one_record() {
        let (doping, steady) = device(33);
        let integ = stepper(&doping, &steady, 1e-3, NoiseModel::off(1));
        let s = initial_state(&doping, &steady, &Perturbation::Cosine { eps: 0.01 }, 1e-6, 1.0).unwrap();
        let tr = integ.simulate(s, &steady, 0.0, 10, &mut trajectory_rng(0, 0)).unwrap();
        assert_eq!(tr.records.len(), 1);
        assert_eq!(tr.records[0].t, 0.0);
    }

    #[test]
    fn equal_seeds_give_identical_trajectories() {
        let (doping, steady) = device(65);
        let noise = NoiseModel::geometric(8, NoiseKind::Quadratic, 0.5, 1).unwrap();
        let integ = stepper(&doping, &steady, 1e-3, noise);
        let run = |seed| {
            let s = initial_state(&doping, &steady, &Perturbation::Velocity { eps: 0.05 }, 1e-6, 1.0).unwrap();
            integ
                .simulate(s, &steady, 0.2, 50, &mut trajectory_rng(seed, 3))
                .unwrap()
        };
        let (a, b, c) = (run(4), run(4), run(5));
        assert_eq!(a.records, b.records);
        assert_eq!(a.final_state, b.final_state);
        assert_ne!(a.final_state.u, c.final_state.u);
    }

    #[test]
    fn deterministic_perturbation_decays() {
        let (doping, steady) = device(129);
        let integ = stepper(&doping, &steady, 1e-3, NoiseModel::off(1));
        let s = initial_state(&doping, &steady, &Perturbation::Cosine { eps: 0.01 }, 1e-6, 1.0).unwrap();
        let tr = integ
            .simulate(s, &steady, 5.0, 1000, &mut trajectory_rng(0, 0))
            .unwrap();
        let first = tr.records.first().unwrap();
        let last = tr.records.last().unwrap();
        assert!((last.t - 5.0).abs() < 1e-12);
        assert!(last.norms.combined < first.norms.combined);
        assert!(tr.records.iter().all(|r| r.subsonic));
    }

    #[test]
    fn initial_norm_matches_analytic_value() {
        let (doping, steady) = device(257);
        let eps = 0.01;
        let s = initial_state(&doping, &steady, &Perturbation::Cosine { eps }, 1e-6, 1.0).unwrap();
        let norms = perturbation_norms(&s, &steady).unwrap();
        let p2 = PI * PI;
        let exact = eps * eps / 2.0 * (1.0 + p2 + p2 * p2 + p2 * p2 * p2 + 1.0 / p2);
        assert!(
            (norms.combined / exact - 1.0).abs() <= 0.01,
            "{} vs {exact}",
            norms.combined
        );
    }

    #[test]
    fn first_order_self_convergence() {
        let g = Grid::unit(1, 33).unwrap();
        let doping = DopingProfile::cosine(g, 1.0, 0.1).unwrap();
        let steady = solve_steady(&law(), &doping, 1e-10, 500).unwrap();
        let run = |dt: f64| {
            let integ = stepper(&doping, &steady, dt, NoiseModel::off(1));
            let s = initial_state(&doping, &steady, &Perturbation::Cosine { eps: 0.05 }, 1e-6, 1.0).unwrap();
            integ
                .simulate(s, &steady, 1.0, usize::MAX, &mut trajectory_rng(0, 0))
                .unwrap()
                .final_state
        };
        let dt = 4e-3;
        let reference = run(dt / 8.0);
        let err = |s: &State| {
            s.rho.sub(&reference.rho).unwrap().norm()
                + s.u.components()[0]
                    .iter()
                    .zip(reference.u.component(0))
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>()
                    .sqrt()
                    * g.h().sqrt()
        };
        let (e1, e2) = (err(&run(dt)), err(&run(dt / 2.0)));
        let ratio = e1 / e2;
        assert!((1.7..=2.6).contains(&ratio), "ratio {ratio} ({e1:e}, {e2:e})");
    }

    #[test]
    fn heun_drift_is_well_balanced_and_conservative() {
        let (doping, steady) = device(65);
        let mut cfg = StepConfig::new(1e-3, &steady);
        cfg.scheme = Scheme::HeunDrift;
        let integ = Integrator::new(law(), &doping, NoiseModel::off(1), cfg).unwrap();
        let mut s = initial_state(&doping, &steady, &Perturbation::Zero, 1e-6, 1.0).unwrap();
        integ.step(&mut s, &mut trajectory_rng(0, 0)).unwrap();
        assert!(s.rho.sub(&steady.rho_bar).unwrap().norm() <= 10.0 * DEFAULT_TOL);
        let mut s = initial_state(&doping, &steady, &Perturbation::Velocity { eps: 0.1 }, 1e-6, 1.0).unwrap();
        let m0 = s.mass();
        integ.step(&mut s, &mut trajectory_rng(0, 0)).unwrap();
        assert!((s.mass() - m0).abs() <= 1e-12 * m0);
    }

    #[test]
    fn positivity_loss_halves_and_eventually_blows_up() {
        let g = Grid::unit(1, 17).unwrap();
        let doping = DopingProfile::constant(g, 1.0).unwrap();
        let steady = solve_steady(&law(), &doping, 1e-12, 10).unwrap();
        let mut cfg = StepConfig::new(1e-3, &steady);
        cfg.rho_floor = 0.999_999_9;
        let integ = Integrator::new(law(), &doping, NoiseModel::off(1), cfg).unwrap();
        let mut s = initial_state(&doping, &steady, &Perturbation::Velocity { eps: 0.5 }, 0.5, 1.0).unwrap();
        match integ.step(&mut s, &mut trajectory_rng(0, 0)) {
            Err(Error::BlowUp { halvings, snapshot, .. }) => {
                assert_eq!(halvings, MAX_HALVINGS);
                assert!(snapshot.min_rho() > 0.0);
            }
            other => panic!("expected blow-up, got {other:?}"),
        }
    }

    #[test]
    fn step_count_tolerates_round_off() {
        assert_eq!(step_count(20.0, 1e-3), 20_000);
        assert_eq!(step_count(0.1, 1e-3), 100);
        assert_eq!(step_count(0.0, 1e-3), 0);
        assert_eq!(step_count(0.0015, 1e-3), 2);
    }
}
