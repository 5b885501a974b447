//! Neumann Poisson solves `Lap Phi = rhs` with the mean-zero gauge.
//!
//! The 1-D system is the tridiagonal compact Laplacian, solved directly by
//! accumulating the trapezoid-weighted flux from the left wall. In 2-D and 3-D
//! the compact Neumann Laplacian is diagonal in the DCT-I basis; the zero mode
//! is dropped, which is the gauge.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::grid::{Grid, ScalarField};

pub const DEFAULT_TOL: f64 = 1e-10;

/// Relative compatibility gate on `|<rhs, 1>_h|`.
pub const COMPAT_GATE: f64 = 1e-8;

/// Absolute floor (per unit volume) added to the gate so that right-hand
/// sides which have decayed to round-off are not rejected for their
/// round-off mass.
const COMPAT_FLOOR: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoissonReport {
    /// `||Lap_h Phi - rhs||_h / ||rhs||_h` after projecting `rhs`.
    pub residual: f64,
    /// `|<rhs, 1>_h|` before projection.
    pub compat_defect: f64,
}

#[derive(Debug, Clone)]
enum Backend {
    Tridiagonal,
    Cosine {
        forward: Vec<f64>,
        inverse: Vec<f64>,
        eigen: Vec<f64>,
    },
}

/// A reusable solver for one grid. Construction precomputes the cosine basis
/// in 2-D/3-D.
#[derive(Debug, Clone)]
pub struct NeumannPoisson {
    grid: Grid,
    tol: f64,
    backend: Backend,
}

impl NeumannPoisson {
    pub fn new(grid: Grid, tol: f64) -> Result<Self> {
        if !(tol > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "Poisson tolerance must be positive, got {tol}"
            )));
        }
        let backend = if grid.dim() == 1 {
            Backend::Tridiagonal
        } else {
            let n = grid.n();
            let big_n = (n - 1) as f64;
            let mut forward = vec![0.0; n * n];
            let mut inverse = vec![0.0; n * n];
            let mut eigen = vec![0.0; n];
            let h = grid.h();
            for k in 0..n {
                let norm = if k == 0 || k == n - 1 { big_n } else { big_n / 2.0 };
                for i in 0..n {
                    let c = (PI * (k * i) as f64 / big_n).cos();
                    let w = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
                    forward[k * n + i] = w * c / norm;
                    inverse[i * n + k] = c;
                }
                let s = (PI * k as f64 / (2.0 * big_n)).sin();
                eigen[k] = -4.0 * s * s / (h * h);
            }
            Backend::Cosine {
                forward,
                inverse,
                eigen,
            }
        };
        Ok(Self { grid, tol, backend })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    pub fn solve(&self, rhs: &ScalarField) -> Result<(ScalarField, PoissonReport)> {
        if rhs.grid() != &self.grid {
            return Err(Error::GridMismatch);
        }
        let mut phi = vec![0.0; self.grid.node_count()];
        let report = self.solve_into(rhs.values(), &mut phi)?;
        Ok((ScalarField::new(self.grid, phi)?, report))
    }

    /// Slice-level solve used on the integrator's hot path.
    pub fn solve_into(&self, rhs: &[f64], phi: &mut [f64]) -> Result<PoissonReport> {
        let grid = &self.grid;
        let defect = grid.integrate(rhs);
        let gate = COMPAT_GATE * grid.norm(rhs) + COMPAT_FLOOR * grid.volume();
        if defect.abs() > gate {
            return Err(Error::Compatibility {
                defect: defect.abs(),
                gate,
            });
        }
        let mean = defect / grid.volume();
        let projected: Vec<f64> = rhs.iter().map(|r| r - mean).collect();

        match &self.backend {
            Backend::Tridiagonal => self.solve_tridiagonal(&projected, phi),
            Backend::Cosine {
                forward,
                inverse,
                eigen,
            } => self.solve_cosine(&projected, phi, forward, inverse, eigen),
        }

        let phi_mean = grid.integrate(phi) / grid.volume();
        phi.iter_mut().for_each(|p| *p -= phi_mean);

        let mut lap = vec![0.0; phi.len()];
        grid.laplacian_into(phi, &mut lap);
        lap.iter_mut().zip(&projected).for_each(|(l, r)| *l -= r);
        let rhs_norm = grid.norm(&projected);
        let residual = if rhs_norm > 0.0 {
            grid.norm(&lap) / rhs_norm
        } else {
            grid.norm(&lap)
        };
        if residual > self.tol {
            return Err(Error::PoissonTolerance {
                residual,
                tol: self.tol,
            });
        }
        Ok(PoissonReport {
            residual,
            compat_defect: defect.abs(),
        })
    }

    fn solve_tridiagonal(&self, rhs: &[f64], phi: &mut [f64]) {
        let grid = &self.grid;
        let h = grid.h();
        let n = grid.n();
        // flux between node i and i+1 equals the weighted rhs mass to the left
        let mut flux = 0.0;
        phi[0] = 0.0;
        for i in 0..n - 1 {
            flux += grid.weight(i) * rhs[i];
            phi[i + 1] = phi[i] + h * flux;
        }
    }

    fn solve_cosine(&self, rhs: &[f64], phi: &mut [f64], forward: &[f64], inverse: &[f64], eigen: &[f64]) {
        let grid = &self.grid;
        let mut coeff = rhs.to_vec();
        for axis in 0..grid.dim() {
            apply_along_axis(grid, forward, axis, &mut coeff);
        }
        for (idx, c) in coeff.iter_mut().enumerate() {
            let lambda: f64 = (0..grid.dim()).map(|a| eigen[grid.axis_index(idx, a)]).sum();
            *c = if lambda == 0.0 { 0.0 } else { *c / lambda };
        }
        for axis in 0..grid.dim() {
            apply_along_axis(grid, inverse, axis, &mut coeff);
        }
        phi.copy_from_slice(&coeff);
    }
}

/// Multiplies every grid line along `axis` by the dense `n x n` matrix.
fn apply_along_axis(grid: &Grid, matrix: &[f64], axis: usize, data: &mut [f64]) {
    let n = grid.n();
    let s = grid.stride(axis);
    let mut line = vec![0.0; n];
    for base in 0..data.len() {
        if grid.axis_index(base, axis) != 0 {
            continue;
        }
        for (i, l) in line.iter_mut().enumerate() {
            *l = data[base + i * s];
        }
        for k in 0..n {
            let row = &matrix[k * n..(k + 1) * n];
            data[base + k * s] = row.iter().zip(&line).map(|(m, x)| m * x).sum();
        }
    }
}

/// One-shot solve; builds a [`NeumannPoisson`] for `rhs`'s grid.
pub fn solve(rhs: &ScalarField, tol: f64) -> Result<(ScalarField, PoissonReport)> {
    NeumannPoisson::new(*rhs.grid(), tol)?.solve(rhs)
}
