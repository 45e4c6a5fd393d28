//! The parameter chain linking the two normalization stages.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Exponents and smallness parameters derived from `(tau, tau_bar, mu)`:
/// `a = 1/(tau+1)`, `gamma_bar = mu^{1/4}`, `delta = mu^{1/2}`,
/// `a_bar = 1/(tau_bar+1)`, `nu = (delta / (c_nu gamma_bar))^{a_bar}` and
/// `T = exp(1/nu)` (stored as `ln_t = 1/nu`).
///
/// The existential constants are fitted per Hamiltonian and recorded here:
/// `c` in `mu = exp(-c r^{-a})`, `c_drift` in the drift bounds `C r`, `C r^2`,
/// and `c_remainder` in `|R| <= C mu exp(-1/nu)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityBudget {
    pub tau: f64,
    pub a: f64,
    pub mu: f64,
    pub gamma_bar: f64,
    pub tau_bar: f64,
    pub delta: f64,
    pub a_bar: f64,
    pub c_nu: f64,
    pub nu: f64,
    pub ln_t: f64,
    #[serde(default)]
    pub c: Option<f64>,
    #[serde(default)]
    pub c_drift: Option<f64>,
    #[serde(default)]
    pub c_remainder: Option<f64>,
}

impl StabilityBudget {
    pub fn new(tau: f64, tau_bar: f64, mu: f64, c_nu: f64) -> Result<Self> {
        if !(mu > 0.0 && mu < 1.0) {
            return Err(Error::Config(format!("mu = {mu} must lie in (0, 1)")));
        }
        if !(tau >= 0.0) || !(tau_bar >= tau) {
            return Err(Error::Config(format!(
                "need 0 <= tau <= tau_bar, got tau = {tau}, tau_bar = {tau_bar}"
            )));
        }
        if !(c_nu > 0.0) {
            return Err(Error::Config(format!("c_nu = {c_nu} must be positive")));
        }
        Ok(Self::with_gamma_bar(tau, tau_bar, mu, mu.powf(0.25), c_nu))
    }

    /// `mu = exp(-c r^{-a})`.
    pub fn from_radius(tau: f64, tau_bar: f64, r: f64, c: f64, c_nu: f64) -> Result<Self> {
        let a = 1.0 / (tau + 1.0);
        let mu = (-c * r.powf(-a)).exp();
        let mut b = Self::new(tau, tau_bar, mu, c_nu)?;
        b.c = Some(c);
        Ok(b)
    }

    fn with_gamma_bar(tau: f64, tau_bar: f64, mu: f64, gamma_bar: f64, c_nu: f64) -> Self {
        let a = 1.0 / (tau + 1.0);
        let a_bar = 1.0 / (tau_bar + 1.0);
        let delta = mu.sqrt();
        let nu = (delta / (c_nu * gamma_bar)).powf(a_bar);
        StabilityBudget {
            tau,
            a,
            mu,
            gamma_bar,
            tau_bar,
            delta,
            a_bar,
            c_nu,
            nu,
            ln_t: 1.0 / nu,
            c: None,
            c_drift: None,
            c_remainder: None,
        }
    }

    /// Same chain with `gamma_bar` set explicitly (used when the whole ball is
    /// Diophantine and `gamma_bar` is tied to the original `gamma`).
    pub fn override_gamma_bar(&self, gamma_bar: f64) -> Self {
        let mut b = Self::with_gamma_bar(self.tau, self.tau_bar, self.mu, gamma_bar, self.c_nu);
        b.c = self.c;
        b.c_drift = self.c_drift;
        b.c_remainder = self.c_remainder;
        b
    }

    /// `mu exp(-1/nu)`, the remainder law without its constant.
    pub fn remainder_scale(&self) -> f64 {
        self.mu * (-self.ln_t).exp()
    }

    /// Checks that every derived field equals its formula.
    pub fn is_consistent(&self) -> bool {
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1e-300);
        close(self.a, 1.0 / (self.tau + 1.0))
            && close(self.a_bar, 1.0 / (self.tau_bar + 1.0))
            && close(self.delta, self.mu.sqrt())
            && close(self.nu, (self.delta / (self.c_nu * self.gamma_bar)).powf(self.a_bar))
            && close(self.ln_t, 1.0 / self.nu)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_fields_follow_their_formulas() {
        let b = StabilityBudget::new(1.0, 7.0, 1e-8, 1.0).unwrap();
        assert!((b.a - 0.5).abs() < 1e-16);
        assert!((b.gamma_bar - 1e-2).abs() < 1e-16);
        assert!((b.delta - 1e-4).abs() < 1e-18);
        assert!((b.a_bar - 0.125).abs() < 1e-16);
        assert!((b.nu - 1e-2f64.powf(0.125)).abs() < 1e-15);
        assert!(b.is_consistent());
    }

    #[test]
    fn radius_form() {
        let b = StabilityBudget::from_radius(1.0, 5.0, 0.01, 0.5, 1.0).unwrap();
        assert!((b.mu - (-5.0f64).exp()).abs() < 1e-16);
        assert_eq!(b.c, Some(0.5));
    }

    #[test]
    fn rejects_out_of_range_mu() {
        assert!(StabilityBudget::new(1.0, 2.0, 0.0, 1.0).is_err());
        assert!(StabilityBudget::new(1.0, 2.0, 1.5, 1.0).is_err());
    }
}
