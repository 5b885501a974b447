//! Reference solutions built independently of the production kernels.
//!
//! The steady oracle uses a different stencil (fourth order), a different
//! unknown (the density directly) and a dense Newton solve, so agreement with
//! the production fixed-point solver is not a tautology.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use sep_core::{Error, PressureLaw};

/// Five-point fourth-order Laplacian on `n` nodes of `[0, length]` with even
/// reflection at both walls.
pub fn laplacian4(n: usize, length: f64) -> DMatrix<f64> {
    assert!(n >= 3, "need at least three nodes");
    let h = length / (n - 1) as f64;
    let last = (n - 1) as isize;
    let reflect = |j: isize| -> usize {
        let j = j.abs();
        (if j > last { 2 * last - j } else { j }) as usize
    };
    let mut l = DMatrix::<f64>::zeros(n, n);
    let coeff = [-1.0, 16.0, -30.0, 16.0, -1.0];
    for i in 0..n {
        for (k, c) in coeff.iter().enumerate() {
            let j = reflect(i as isize + k as isize - 2);
            l[(i, j)] += c / (12.0 * h * h);
        }
    }
    l
}

/// Newton solve of `L4 Q(rho) = rho - b` for the 1-D steady density on the
/// unit interval. The mass constraint is implied: the operator annihilates
/// constants in the continuum, so no extra row is added. Stops once the
/// Newton update is below `tol` in max norm; the residual itself bottoms out
/// near `eps |L4| |Q|`, which grows like `1/h^2`.
pub fn steady_density_newton(law: &PressureLaw, b: &[f64], tol: f64) -> Result<Vec<f64>, Error> {
    let n = b.len();
    let l4 = laplacian4(n, 1.0);
    let bv = DVector::from_column_slice(b);
    let mut rho = bv.clone();
    for _ in 0..50 {
        let q = rho.iter().map(|&r| law.enthalpy(r)).collect::<Result<Vec<_>, _>>()?;
        let f = &l4 * DVector::from_vec(q) - &rho + &bv;
        let mut jac = l4.clone();
        for c in 0..n {
            let qp = law.enthalpy_prime(rho[c])?;
            jac.column_mut(c).scale_mut(qp);
            jac[(c, c)] -= 1.0;
        }
        let step = jac
            .lu()
            .solve(&f)
            .ok_or_else(|| Error::InvalidArgument("singular Newton Jacobian".into()))?;
        rho -= &step;
        if step.amax() < tol {
            return Ok(rho.as_slice().to_vec());
        }
    }
    Err(Error::InvalidArgument("Newton iteration did not converge".into()))
}

/// Cosine-series interpolant of node values on `[0, 1]`, evaluated at `x`.
pub fn cosine_interpolate(values: &[f64], x: f64) -> f64 {
    cosine_coefficients(values)
        .iter()
        .enumerate()
        .map(|(k, a)| a * (PI * k as f64 * x).cos())
        .sum()
}

/// Coefficients `c_k` with `f(x) = sum c_k cos(pi k x)` interpolating the
/// nodes exactly; end weights are already folded in.
pub fn cosine_coefficients(values: &[f64]) -> Vec<f64> {
    let nn = values.len() - 1;
    let half = |j: usize| if j == 0 || j == nn { 0.5 } else { 1.0 };
    (0..=nn)
        .map(|k| {
            let a: f64 = (0..=nn)
                .map(|j| half(j) * values[j] * (PI * (k * j) as f64 / nn as f64).cos())
                .sum();
            half(k) * a * 2.0 / nn as f64
        })
        .collect()
}
