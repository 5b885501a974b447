//! Uniform node-centred grids on an interval, square or cube, and the discrete
//! operators built on them.
//!
//! Nodes sit at `x_i = i h`, `i = 0..n`, on every axis, boundary nodes included.
//! Inner products use trapezoidal weights (`h/2` across a boundary layer). With
//! those weights the centred gradient and the divergence below are exact
//! negative adjoints on vector fields whose normal component vanishes at the
//! boundary, which is what keeps the discrete mass bookkeeping exact.
//!
//! Boundary closure is the Neumann ghost reflection `f_{-1} = f_1`: the normal
//! derivative of every gradient is zero at boundary nodes, matching
//! `grad(Phi).nu = 0` and `u.nu = 0` to machine precision.

use crate::error::{Error, Result};

pub const MAX_DIM: usize = 3;

/// Largest normal velocity tolerated at a boundary node by [`divergence`].
pub const BOUNDARY_FLUX_TOL: f64 = 1e-12;

/// Highest Sobolev order supported by [`sobolev_norm`].
pub const MAX_SOBOLEV_ORDER: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    dim: usize,
    n: usize,
    length: f64,
    h: f64,
}

impl Grid {
    /// `n` counts nodes per axis including both boundary nodes.
    pub fn new(dim: usize, n: usize, length: f64) -> Result<Self> {
        if !(1..=MAX_DIM).contains(&dim) {
            return Err(Error::InvalidGrid(format!("dimension {dim} not in 1..=3")));
        }
        if n < 4 {
            return Err(Error::InvalidGrid(format!("need at least 4 nodes per axis, got {n}")));
        }
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "side length must be positive, got {length}"
            )));
        }
        Ok(Self {
            dim,
            n,
            length,
            h: length / (n - 1) as f64,
        })
    }

    pub fn unit(dim: usize, n: usize) -> Result<Self> {
        Self::new(dim, n, 1.0)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn node_count(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn volume(&self) -> f64 {
        self.length.powi(self.dim as i32)
    }

    /// Row-major stride of `axis`; axis 0 varies slowest.
    #[inline]
    pub fn stride(&self, axis: usize) -> usize {
        self.n.pow((self.dim - 1 - axis) as u32)
    }

    #[inline]
    pub fn axis_index(&self, idx: usize, axis: usize) -> usize {
        (idx / self.stride(axis)) % self.n
    }

    #[inline]
    pub fn on_boundary(&self, idx: usize, axis: usize) -> bool {
        let i = self.axis_index(idx, axis);
        i == 0 || i == self.n - 1
    }

    pub fn coord(&self, idx: usize, axis: usize) -> f64 {
        self.axis_index(idx, axis) as f64 * self.h
    }

    pub fn coords(&self, idx: usize) -> Vec<f64> {
        (0..self.dim).map(|a| self.coord(idx, a)).collect()
    }

    /// Trapezoidal quadrature weight of node `idx`.
    pub fn weight(&self, idx: usize) -> f64 {
        (0..self.dim)
            .map(|a| if self.on_boundary(idx, a) { 0.5 * self.h } else { self.h })
            .product()
    }

    pub fn weights(&self) -> Vec<f64> {
        (0..self.node_count()).map(|i| self.weight(i)).collect()
    }

    pub fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        debug_assert_eq!(a.len(), b.len());
        a.iter()
            .zip(b)
            .enumerate()
            .map(|(i, (x, y))| self.weight(i) * x * y)
            .sum()
    }

    pub fn norm(&self, a: &[f64]) -> f64 {
        self.inner(a, a).sqrt()
    }

    /// `<a, 1>_h`.
    pub fn integrate(&self, a: &[f64]) -> f64 {
        a.iter().enumerate().map(|(i, x)| self.weight(i) * x).sum()
    }

    /// Centred first difference along `axis`; zero on that axis' boundary
    /// layers (ghost reflection).
    pub fn centred_diff(&self, f: &[f64], axis: usize, out: &mut [f64]) {
        let s = self.stride(axis);
        let inv = 0.5 / self.h;
        for (idx, o) in out.iter_mut().enumerate() {
            let i = (idx / s) % self.n;
            *o = if i == 0 || i == self.n - 1 {
                0.0
            } else {
                (f[idx + s] - f[idx - s]) * inv
            };
        }
    }

    /// Adds the `axis` contribution of the divergence of `v` to `out`.
    ///
    /// Boundary rows are the trapezoid-weighted adjoint rows: `v_1 / h` on the
    /// low side and `-v_{n-2} / h` on the high side, i.e. the odd reflection of
    /// a normal component that vanishes on the wall.
    pub fn add_divergence_axis(&self, v: &[f64], axis: usize, out: &mut [f64]) {
        let s = self.stride(axis);
        let n = self.n;
        let inv_h = 1.0 / self.h;
        let inv_2h = 0.5 / self.h;
        for (idx, o) in out.iter_mut().enumerate() {
            let i = (idx / s) % n;
            *o += if i == 0 {
                v[idx + s] * inv_h
            } else if i == n - 1 {
                -v[idx - s] * inv_h
            } else {
                (v[idx + s] - v[idx - s]) * inv_2h
            };
        }
    }

    /// Compact `2 dim + 1` point Laplacian with ghost reflection.
    pub fn laplacian_into(&self, f: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        let inv_h2 = 1.0 / (self.h * self.h);
        let n = self.n;
        for axis in 0..self.dim {
            let s = self.stride(axis);
            for (idx, o) in out.iter_mut().enumerate() {
                let i = (idx / s) % n;
                let c = f[idx];
                *o += if i == 0 {
                    2.0 * (f[idx + s] - c)
                } else if i == n - 1 {
                    2.0 * (f[idx - s] - c)
                } else {
                    f[idx + s] - 2.0 * c + f[idx - s]
                } * inv_h2;
            }
        }
    }

    /// Largest |normal component| of `components` over all boundary nodes.
    pub fn max_boundary_normal(&self, components: &[Vec<f64>]) -> f64 {
        let mut worst = 0.0f64;
        for (axis, comp) in components.iter().enumerate() {
            for (idx, v) in comp.iter().enumerate() {
                if self.on_boundary(idx, axis) {
                    worst = worst.max(v.abs());
                }
            }
        }
        worst
    }

    /// Zeroes the normal component of a vector field on every wall.
    pub fn project_normal(&self, components: &mut [Vec<f64>]) {
        for (axis, comp) in components.iter_mut().enumerate() {
            let s = self.stride(axis);
            for (idx, v) in comp.iter_mut().enumerate() {
                let i = (idx / s) % self.n;
                if i == 0 || i == self.n - 1 {
                    *v = 0.0;
                }
            }
        }
    }

    /// Difference quotient of order 0..=3 along `axis`, used only by the
    /// Sobolev norms. Centred where the stencil fits, one-sided (forward on
    /// the low side, backward on the high side) otherwise.
    fn difference(&self, f: &[f64], axis: usize, order: usize, out: &mut [f64]) {
        let s = self.stride(axis);
        let n = self.n;
        let h = self.h;
        match order {
            0 => out.copy_from_slice(f),
            1 => {
                for (idx, o) in out.iter_mut().enumerate() {
                    let i = (idx / s) % n;
                    *o = if i == 0 {
                        (f[idx + s] - f[idx]) / h
                    } else if i == n - 1 {
                        (f[idx] - f[idx - s]) / h
                    } else {
                        (f[idx + s] - f[idx - s]) / (2.0 * h)
                    };
                }
            }
            2 => {
                let h2 = h * h;
                for (idx, o) in out.iter_mut().enumerate() {
                    let i = (idx / s) % n;
                    *o = if i == 0 {
                        (f[idx + 2 * s] - 2.0 * f[idx + s] + f[idx]) / h2
                    } else if i == n - 1 {
                        (f[idx] - 2.0 * f[idx - s] + f[idx - 2 * s]) / h2
                    } else {
                        (f[idx + s] - 2.0 * f[idx] + f[idx - s]) / h2
                    };
                }
            }
            3 => {
                let h3 = h * h * h;
                for (idx, o) in out.iter_mut().enumerate() {
                    let i = (idx / s) % n;
                    *o = if i < 2 {
                        (f[idx + 3 * s] - 3.0 * f[idx + 2 * s] + 3.0 * f[idx + s] - f[idx]) / h3
                    } else if i + 2 >= n {
                        (f[idx] - 3.0 * f[idx - s] + 3.0 * f[idx - 2 * s] - f[idx - 3 * s]) / h3
                    } else {
                        (f[idx + 2 * s] - 2.0 * f[idx + s] + 2.0 * f[idx - s] - f[idx - 2 * s]) / (2.0 * h3)
                    };
                }
            }
            _ => unreachable!("difference order checked by caller"),
        }
    }

    /// `sum_{|beta| <= k} ||D^beta f||_h^2` for one scalar component.
    pub fn sobolev_norm_sq(&self, f: &[f64], k: usize) -> Result<f64> {
        if k > MAX_SOBOLEV_ORDER {
            return Err(Error::InvalidArgument(format!(
                "Sobolev order {k} above {MAX_SOBOLEV_ORDER}"
            )));
        }
        if self.n < k + 2 {
            return Err(Error::InvalidArgument(format!(
                "H^{k} norm needs at least {} nodes per axis, grid has {}",
                k + 2,
                self.n
            )));
        }
        let mut total = 0.0;
        let mut buf = vec![0.0; f.len()];
        let mut tmp = vec![0.0; f.len()];
        for beta in multi_indices(self.dim, k) {
            buf.copy_from_slice(f);
            for (axis, &order) in beta.iter().enumerate() {
                if order > 0 {
                    self.difference(&buf, axis, order, &mut tmp);
                    std::mem::swap(&mut buf, &mut tmp);
                }
            }
            total += self.inner(&buf, &buf);
        }
        Ok(total)
    }
}

/// All multi-indices `beta` of length `dim` with `|beta| <= k`.
fn multi_indices(dim: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = vec![0; dim];
    fn rec(axis: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if axis == cur.len() {
            out.push(cur.clone());
            return;
        }
        for o in 0..=left {
            cur[axis] = o;
            rec(axis + 1, left - o, cur, out);
        }
        cur[axis] = 0;
    }
    rec(0, k, &mut cur, &mut out);
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.node_count() {
            return Err(Error::InvalidArgument(format!(
                "scalar field has {} values, grid has {} nodes",
                values.len(),
                grid.node_count()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        Self {
            grid,
            values: vec![c; grid.node_count()],
        }
    }

    /// Samples `f` at every node; `f` receives the node's coordinates.
    pub fn from_fn(grid: Grid, f: impl Fn(&[f64]) -> f64) -> Self {
        let values = (0..grid.node_count()).map(|i| f(&grid.coords(i))).collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn inner(&self, other: &ScalarField) -> Result<f64> {
        same_grid(&self.grid, &other.grid)?;
        Ok(self.grid.inner(&self.values, &other.values))
    }

    pub fn norm(&self) -> f64 {
        self.grid.norm(&self.values)
    }

    pub fn integral(&self) -> f64 {
        self.grid.integrate(&self.values)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `self - other`, node by node.
    pub fn sub(&self, other: &ScalarField) -> Result<ScalarField> {
        same_grid(&self.grid, &other.grid)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        Ok(ScalarField {
            grid: self.grid,
            values,
        })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarField {
        ScalarField {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    grid: Grid,
    components: Vec<Vec<f64>>,
}

impl VectorField {
    pub fn new(grid: Grid, components: Vec<Vec<f64>>) -> Result<Self> {
        if components.len() != grid.dim() {
            return Err(Error::InvalidArgument(format!(
                "vector field has {} components on a {}-D grid",
                components.len(),
                grid.dim()
            )));
        }
        if components.iter().any(|c| c.len() != grid.node_count()) {
            return Err(Error::InvalidArgument(
                "vector component length does not match node count".into(),
            ));
        }
        Ok(Self { grid, components })
    }

    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            components: vec![vec![0.0; grid.node_count()]; grid.dim()],
        }
    }

    /// Samples `f` at every node; `f` returns one value per axis.
    pub fn from_fn(grid: Grid, f: impl Fn(&[f64]) -> Vec<f64>) -> Self {
        let mut v = Self::zeros(grid);
        for idx in 0..grid.node_count() {
            let val = f(&grid.coords(idx));
            for (a, comp) in v.components.iter_mut().enumerate() {
                comp[idx] = val[a];
            }
        }
        v
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn components(&self) -> &[Vec<f64>] {
        &self.components
    }

    pub fn components_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.components
    }

    pub fn component(&self, axis: usize) -> &[f64] {
        &self.components[axis]
    }

    /// Velocity vector at a node.
    pub fn at(&self, idx: usize) -> Vec<f64> {
        self.components.iter().map(|c| c[idx]).collect()
    }

    pub fn inner(&self, other: &VectorField) -> Result<f64> {
        same_grid(&self.grid, &other.grid)?;
        Ok(self
            .components
            .iter()
            .zip(&other.components)
            .map(|(a, b)| self.grid.inner(a, b))
            .sum())
    }

    pub fn norm(&self) -> f64 {
        self.components
            .iter()
            .map(|c| self.grid.inner(c, c))
            .sum::<f64>()
            .sqrt()
    }

    pub fn max_boundary_normal(&self) -> f64 {
        self.grid.max_boundary_normal(&self.components)
    }

    pub fn project_boundary(&mut self) {
        self.grid.project_normal(&mut self.components);
    }
}

fn same_grid(a: &Grid, b: &Grid) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::GridMismatch)
    }
}

pub(crate) fn check_grid(a: &Grid, b: &Grid) -> Result<()> {
    same_grid(a, b)
}

pub fn gradient(f: &ScalarField) -> VectorField {
    let grid = f.grid;
    let mut v = VectorField::zeros(grid);
    for (axis, comp) in v.components.iter_mut().enumerate() {
        grid.centred_diff(&f.values, axis, comp);
    }
    v
}

/// Discrete divergence, the negative trapezoid-adjoint of [`gradient`].
/// Fields with a normal component above [`BOUNDARY_FLUX_TOL`] are rejected.
pub fn divergence(v: &VectorField) -> Result<ScalarField> {
    let worst = v.max_boundary_normal();
    if worst > BOUNDARY_FLUX_TOL {
        return Err(Error::BoundaryFlux { max: worst });
    }
    let grid = v.grid;
    let mut out = ScalarField::zeros(grid);
    for (axis, comp) in v.components.iter().enumerate() {
        grid.add_divergence_axis(comp, axis, &mut out.values);
    }
    Ok(out)
}

pub fn laplacian(f: &ScalarField) -> ScalarField {
    let mut out = ScalarField::zeros(f.grid);
    f.grid.laplacian_into(&f.values, &mut out.values);
    out
}

/// Anything with a discrete `H^k` norm.
pub trait SobolevNorm {
    fn sobolev_norm_sq(&self, k: usize) -> Result<f64>;

    fn sobolev_norm(&self, k: usize) -> Result<f64> {
        self.sobolev_norm_sq(k).map(f64::sqrt)
    }
}

impl SobolevNorm for ScalarField {
    fn sobolev_norm_sq(&self, k: usize) -> Result<f64> {
        self.grid.sobolev_norm_sq(&self.values, k)
    }
}

impl SobolevNorm for VectorField {
    fn sobolev_norm_sq(&self, k: usize) -> Result<f64> {
        self.components.iter().map(|c| self.grid.sobolev_norm_sq(c, k)).sum()
    }
}

pub fn sobolev_norm<F: SobolevNorm>(f: &F, k: usize) -> Result<f64> {
    f.sobolev_norm(k)
}
