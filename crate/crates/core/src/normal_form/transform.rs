//! Time-one flows of generators acting on points.
//!
//! `exp(L_chi) H = H o Phi_chi^{-1}`, where `Phi_chi` is the time-one flow of
//! `theta' = d_I chi, I' = -d_theta chi`. A normalization with generators
//! `chi_1, ..., chi_n` (applied in that order) therefore satisfies
//! `H(z) = (N + R)(Phi_n o ... o Phi_1 (z))`.

use crate::error::Result;
use crate::series::{FtSeries, SeriesEvaluator};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlowOptions {
    /// Classical Runge–Kutta steps per unit time.
    pub substeps: usize,
}

impl Default for FlowOptions {
    fn default() -> Self {
        FlowOptions { substeps: 64 }
    }
}

fn rhs(ev: &SeriesEvaluator, theta: &[f64], action: &[f64], sign: f64, out: &mut [f64]) -> Result<()> {
    ev.check_domain(action)?;
    let d = theta.len();
    let jet = ev.jet(theta, action);
    for j in 0..d {
        out[j] = sign * jet.d_action[j];
        out[d + j] = -sign * jet.d_theta[j];
    }
    Ok(())
}

/// Flows `z` for time `sign` (±1) along the Hamiltonian vector field of `chi`.
fn flow(ev: &SeriesEvaluator, z: &mut [f64], sign: f64, substeps: usize) -> Result<()> {
    let n = z.len();
    let d = n / 2;
    let h = 1.0 / substeps as f64;
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    for _ in 0..substeps {
        rhs(ev, &z[..d], &z[d..], sign, &mut k1)?;
        for i in 0..n {
            tmp[i] = z[i] + 0.5 * h * k1[i];
        }
        rhs(ev, &tmp[..d], &tmp[d..], sign, &mut k2)?;
        for i in 0..n {
            tmp[i] = z[i] + 0.5 * h * k2[i];
        }
        rhs(ev, &tmp[..d], &tmp[d..], sign, &mut k3)?;
        for i in 0..n {
            tmp[i] = z[i] + h * k3[i];
        }
        rhs(ev, &tmp[..d], &tmp[d..], sign, &mut k4)?;
        for i in 0..n {
            z[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    ev.check_domain(&z[d..])
}

/// Applies the forward time-one flows of the generators in order, mapping
/// original coordinates to normalized ones.
pub fn compose_transforms(
    generators: &[FtSeries],
    theta: &[f64],
    action: &[f64],
    opts: FlowOptions,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let d = theta.len();
    let mut z: Vec<f64> = theta.iter().chain(action).copied().collect();
    for chi in generators {
        flow(&chi.evaluator(), &mut z, 1.0, opts.substeps)?;
    }
    Ok((z[..d].to_vec(), z[d..].to_vec()))
}

/// Inverse of [`compose_transforms`]: backward flows in reverse order, mapping
/// normalized coordinates to original ones.
pub fn pull_back(
    generators: &[FtSeries],
    theta: &[f64],
    action: &[f64],
    opts: FlowOptions,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let d = theta.len();
    let mut z: Vec<f64> = theta.iter().chain(action).copied().collect();
    for chi in generators.iter().rev() {
        flow(&chi.evaluator(), &mut z, -1.0, opts.substeps)?;
    }
    Ok((z[..d].to_vec(), z[d..].to_vec()))
}
