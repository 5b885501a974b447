//! Finite-difference laboratory for the damped stochastic Euler-Poisson
//! system with insulating walls: steady states, Ito time stepping,
//! perturbation diagnostics and ensemble statistics.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod ensemble;
pub mod eos;
pub mod error;
pub mod grid;
pub mod integrator;
pub mod noise;
pub mod poisson;
pub mod steady;

pub use diagnostics::{energy, energy_bounds, perturbation_norms, weighted_series, EnergyValue, PerturbationNorms};
pub use ensemble::{
    chebyshev_check, fit_decay, fit_log_linear, kb_average, median_sup, run_ensemble, ChebyshevReport, DecayFit,
    EnsembleSetup, EnsembleStats, KBAverage, MomentKind, MomentSeries, Observable,
};
pub use eos::PressureLaw;
pub use error::{Error, Result, TrajectoryFailure};
pub use grid::{divergence, gradient, laplacian, sobolev_norm, Grid, ScalarField, SobolevNorm, VectorField};
pub use integrator::{
    initial_state, Integrator, Perturbation, Record, Scheme, State, StepConfig, StepInfo, Trajectory,
};
pub use noise::{trajectory_rng, NoiseIncrement, NoiseKind, NoiseModel};
pub use poisson::{NeumannPoisson, PoissonReport};
pub use steady::{solve_steady, DopingProfile, SteadySolver, SteadyState};
