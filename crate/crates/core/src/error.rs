use thiserror::Error;

use crate::integrator::State;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{what} out of domain: {value}")]
    Domain { what: &'static str, value: f64 },

    #[error("boundary normal component {max:e} exceeds 1e-12 (field is not zero-flux)")]
    BoundaryFlux { max: f64 },

    #[error("Poisson compatibility violated: |<rhs,1>_h| = {defect:e} > gate {gate:e} (mass leak upstream?)")]
    Compatibility { defect: f64, gate: f64 },

    #[error("Poisson residual {residual:e} above tolerance {tol:e}")]
    PoissonTolerance { residual: f64, tol: f64 },

    #[error("steady-state iteration did not converge in {iterations} iterations (last residual {:e})", history.last().copied().unwrap_or(f64::NAN))]
    NonConvergence { iterations: usize, history: Vec<f64> },

    #[error("density lost positivity at iteration {iteration} (min rho {min_rho:e}, theta {theta}); subsonic branch lost or damping too aggressive")]
    PositivityLoss { iteration: usize, min_rho: f64, theta: f64 },

    #[error("time step blew up at t = {t} after {halvings} halvings (min rho {min_rho:e})")]
    BlowUp {
        t: f64,
        min_rho: f64,
        halvings: usize,
        snapshot: Box<State>,
    },

    #[error("{} of the ensemble trajectories failed: {}", failures.len(), describe_failures(failures))]
    EnsembleFailed { failures: Vec<TrajectoryFailure> },

    #[error("moment {value:e} at t = {t} is not positive; shrink the fit window")]
    NonPositiveMoment { t: f64, value: f64 },
}

/// Identifies a failed ensemble member well enough to rerun it alone.
#[derive(Debug, Clone)]
pub struct TrajectoryFailure {
    pub index: usize,
    pub master_seed: u64,
    pub stream: u64,
    pub message: String,
}

fn describe_failures(failures: &[TrajectoryFailure]) -> String {
    failures
        .iter()
        .map(|f| {
            format!(
                "#{} (seed {}, stream {}): {}",
                f.index, f.master_seed, f.stream, f.message
            )
        })
        .collect::<Vec<_>>()
        .join("; ")
}
