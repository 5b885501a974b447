//! Gamma-law pressure `P(rho) = K rho^gamma` and its enthalpy
//! `Q(rho)`, the primitive of `P'(rho) / rho`.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PressureLaw {
    k: f64,
    gamma: f64,
}

impl PressureLaw {
    pub fn gamma_law(k: f64, gamma: f64) -> Result<Self> {
        if !(k.is_finite() && k > 0.0) {
            return Err(Error::InvalidArgument(format!("pressure.K must be positive, got {k}")));
        }
        if !(gamma.is_finite() && gamma >= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "pressure.gamma must be >= 1, got {gamma}"
            )));
        }
        Ok(Self { k, gamma })
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    fn is_isothermal(&self) -> bool {
        self.gamma == 1.0
    }

    pub fn pressure(&self, rho: f64) -> Result<f64> {
        check_density(rho)?;
        Ok(self.k * rho.powf(self.gamma))
    }

    pub fn pressure_prime(&self, rho: f64) -> Result<f64> {
        check_density(rho)?;
        Ok(self.pressure_prime_unchecked(rho))
    }

    pub fn enthalpy(&self, rho: f64) -> Result<f64> {
        check_density(rho)?;
        Ok(self.enthalpy_unchecked(rho))
    }

    pub fn enthalpy_prime(&self, rho: f64) -> Result<f64> {
        check_density(rho)?;
        Ok(self.enthalpy_prime_unchecked(rho))
    }

    /// Inverse of [`enthalpy`](Self::enthalpy). For `gamma > 1` the range of
    /// `Q` is `(0, inf)`, so `q <= 0` is a domain error.
    pub fn enthalpy_inverse(&self, q: f64) -> Result<f64> {
        if !q.is_finite() || (!self.is_isothermal() && q <= 0.0) {
            return Err(Error::Domain {
                what: "enthalpy",
                value: q,
            });
        }
        Ok(self.enthalpy_inverse_unchecked(q))
    }

    /// Strict subsonic test `P'(rho) > |u|^2`.
    pub fn is_subsonic(&self, rho: f64, u: &[f64]) -> Result<bool> {
        check_density(rho)?;
        Ok(self.is_subsonic_unchecked(rho, u))
    }

    pub(crate) fn is_subsonic_unchecked(&self, rho: f64, u: &[f64]) -> bool {
        let speed2: f64 = u.iter().map(|v| v * v).sum();
        self.pressure_prime_unchecked(rho) > speed2
    }

    pub fn sound_speed(&self, rho: f64) -> Result<f64> {
        self.pressure_prime(rho).map(f64::sqrt)
    }

    #[inline]
    pub(crate) fn pressure_prime_unchecked(&self, rho: f64) -> f64 {
        self.k * self.gamma * rho.powf(self.gamma - 1.0)
    }

    #[inline]
    pub(crate) fn enthalpy_unchecked(&self, rho: f64) -> f64 {
        if self.is_isothermal() {
            self.k * rho.ln()
        } else {
            self.k * self.gamma / (self.gamma - 1.0) * rho.powf(self.gamma - 1.0)
        }
    }

    #[inline]
    pub(crate) fn enthalpy_prime_unchecked(&self, rho: f64) -> f64 {
        self.k * self.gamma * rho.powf(self.gamma - 2.0)
    }

    #[inline]
    pub(crate) fn enthalpy_inverse_unchecked(&self, q: f64) -> f64 {
        if self.is_isothermal() {
            (q / self.k).exp()
        } else {
            ((self.gamma - 1.0) * q / (self.k * self.gamma)).powf(1.0 / (self.gamma - 1.0))
        }
    }
}

fn check_density(rho: f64) -> Result<()> {
    if rho.is_finite() && rho > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain {
            what: "density",
            value: rho,
        })
    }
}
