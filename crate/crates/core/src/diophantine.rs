//! Diophantine conditions `|omega.k| >= gamma |k|_1^{-tau}` verified up to a
//! finite mode cutoff.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A Diophantine condition `DC(tau, gamma)` checked for `0 < |k|_1 <= k_max`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiophantineSpec {
    pub omega: Vec<f64>,
    pub tau: f64,
    pub gamma: f64,
    #[serde(rename = "K")]
    pub k_max: u32,
}

impl DiophantineSpec {
    pub fn new(omega: Vec<f64>, tau: f64, gamma: f64, k_max: u32) -> Result<Self> {
        let spec = DiophantineSpec {
            omega,
            tau,
            gamma,
            k_max,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.omega.len();
        if d < 2 {
            return Err(Error::Config(format!("frequency vector needs d >= 2, got {d}")));
        }
        if self.omega.iter().any(|w| !w.is_finite()) {
            return Err(Error::Config("non-finite frequency component".into()));
        }
        if !(self.tau >= (d - 1) as f64 - 1e-12) || !self.tau.is_finite() {
            return Err(Error::Config(format!(
                "tau = {} must be at least d - 1 = {}",
                self.tau,
                d - 1
            )));
        }
        if !(self.gamma > 0.0) || !self.gamma.is_finite() {
            return Err(Error::Config(format!("gamma = {} must be positive", self.gamma)));
        }
        if self.k_max < 1 {
            return Err(Error::Config("mode cutoff K must be at least 1".into()));
        }
        Ok(())
    }

    pub fn d(&self) -> usize {
        self.omega.len()
    }

    /// `gamma |k|_1^{-tau}`.
    pub fn threshold(&self, mode_norm: u32) -> f64 {
        self.gamma * (mode_norm as f64).powf(-self.tau)
    }

    pub fn with_frequency(&self, omega: Vec<f64>) -> Self {
        DiophantineSpec {
            omega,
            ..self.clone()
        }
    }
}

/// Result of a finite-cutoff infimum of `|omega.k| |k|_1^tau`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DcConstant {
    pub omega: Vec<f64>,
    pub tau: f64,
    #[serde(rename = "K")]
    pub k_max: u32,
    #[serde(rename = "gamma_K")]
    pub gamma_k: f64,
    pub argmin_k: Vec<i32>,
}

/// `|omega.k|`, with values at rounding level (relative to `sum |omega_j k_j|`)
/// reported as exact zero.
pub fn small_divisor(omega: &[f64], k: &[i32]) -> Result<f64> {
    if omega.len() != k.len() {
        return Err(Error::DimensionMismatch(omega.len(), k.len()));
    }
    if k.iter().all(|&v| v == 0) {
        return Err(Error::ZeroMode);
    }
    Ok(divisor(omega, k))
}

#[inline]
pub(crate) fn divisor(omega: &[f64], k: &[i32]) -> f64 {
    let mut dot = 0.0;
    let mut scale = 0.0;
    for (w, &kj) in omega.iter().zip(k) {
        let t = w * kj as f64;
        dot += t;
        scale += t.abs();
    }
    let dot = dot.abs();
    if dot <= 8.0 * f64::EPSILON * scale {
        0.0
    } else {
        dot
    }
}

/// All modes with `|k|_1 = n` whose first nonzero component is positive;
/// together with their negatives these are the whole shell.
pub fn shell_modes(d: usize, n: u32) -> Vec<Vec<i32>> {
    fn fill(prefix: &mut Vec<i32>, d: usize, left: i32, signed_yet: bool, out: &mut Vec<Vec<i32>>) {
        if prefix.len() == d - 1 {
            if left == 0 {
                prefix.push(0);
                out.push(prefix.clone());
                prefix.pop();
            } else {
                prefix.push(left);
                out.push(prefix.clone());
                prefix.pop();
                if signed_yet {
                    prefix.push(-left);
                    out.push(prefix.clone());
                    prefix.pop();
                }
            }
            return;
        }
        for v in 0..=left {
            let signs: &[i32] = if v == 0 || !signed_yet { &[1] } else { &[1, -1] };
            for &s in signs {
                prefix.push(s * v);
                fill(prefix, d, left - v, signed_yet || v != 0, out);
                prefix.pop();
            }
        }
    }
    let mut out = Vec::new();
    if n == 0 || d == 0 {
        return out;
    }
    if d == 1 {
        out.push(vec![n as i32]);
        return out;
    }
    fill(&mut Vec::with_capacity(d), d, n as i32, false, &mut out);
    // the leading-zero branch can leave everything zero only when n == 0
    out
}

/// `min_{0 < |k|_1 <= K} |omega.k| |k|_1^tau` and the first minimizing mode
/// (shells in increasing order, then enumeration order). Returns zero as soon
/// as an exact resonance is found.
pub fn dc_constant(omega: &[f64], tau: f64, k_max: u32) -> DcConstant {
    let d = omega.len();
    let per_shell: Vec<(f64, Vec<i32>)> = (1..=k_max)
        .into_par_iter()
        .map(|n| {
            let weight = (n as f64).powf(tau);
            let mut best = (f64::INFINITY, Vec::new());
            for k in shell_modes(d, n) {
                let v = divisor(omega, &k) * weight;
                if v < best.0 {
                    best = (v, k);
                }
            }
            best
        })
        .collect();
    let mut best = (f64::INFINITY, vec![0; d]);
    for (v, k) in per_shell {
        if v < best.0 {
            best = (v, k);
        }
    }
    DcConstant {
        omega: omega.to_vec(),
        tau,
        k_max,
        gamma_k: if best.0.is_finite() { best.0 } else { 0.0 },
        argmin_k: best.1,
    }
}

/// True iff the finite-cutoff constant reaches `gamma`.
pub fn dc_check(spec: &DiophantineSpec) -> bool {
    dc_constant(&spec.omega, spec.tau, spec.k_max).gamma_k >= spec.gamma
}

/// First mode (by shell) violating the condition, with its divisor.
pub fn first_violation(spec: &DiophantineSpec) -> Option<(Vec<i32>, f64)> {
    let d = spec.d();
    for n in 1..=spec.k_max {
        let thr = spec.threshold(n);
        for k in shell_modes(d, n) {
            let v = divisor(&spec.omega, &k);
            if v < thr {
                return Some((k, v));
            }
        }
    }
    None
}
