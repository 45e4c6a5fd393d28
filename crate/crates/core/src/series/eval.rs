//! Pointwise evaluation of series and their gradients.

use std::f64::consts::TAU;

use num_complex::Complex64;

use super::{FtSeries, MAX_DIM};
use crate::error::{Error, Result};

fn check_domain(r: f64, action: &[f64]) -> Result<()> {
    let norm = action.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if !(norm < r) {
        return Err(Error::OutsideDomain { norm, radius: r });
    }
    Ok(())
}

impl FtSeries {
    /// Direct summation of every stored term. Fails outside the polydisc
    /// `|I|_inf < r` or when the imaginary part exceeds `1e-12` times the
    /// majorant (a broken Hermitian pairing).
    pub fn evaluate(&self, theta: &[f64], action: &[f64]) -> Result<f64> {
        let d = self.d();
        if theta.len() != d || action.len() != d {
            return Err(Error::DimensionMismatch(d, theta.len().max(action.len())));
        }
        check_domain(self.r(), action)?;
        let mut sum = Complex64::default();
        for (idx, c) in self.iter() {
            let phase: f64 = (0..d).map(|j| idx.k[j] as f64 * theta[j]).sum();
            let mono: f64 = (0..d).map(|j| action[j].powi(idx.alpha[j] as i32)).product();
            sum += c * Complex64::from_polar(mono, TAU * phase);
        }
        let tol = 1e-12 * self.majorant_norm(0.0, self.r()).value;
        if sum.im.abs() > tol {
            return Err(Error::BrokenSymmetry {
                residue: sum.im.abs(),
                tolerance: tol,
            });
        }
        Ok(sum.re)
    }

    /// Precomputes a fast real evaluator for value and gradient.
    pub fn evaluator(&self) -> SeriesEvaluator {
        SeriesEvaluator::new(self)
    }
}

#[derive(Clone, Debug)]
struct CompiledTerm {
    k: [i32; MAX_DIM],
    alpha: [u32; MAX_DIM],
    // 2c for k != 0 (pairs folded), c for k = 0
    c: Complex64,
}

/// Real-valued evaluator built from the upper half of a Hermitian series:
/// `f = sum_{k=0} c I^alpha + sum_{k upper} 2 Re(c e^{2 pi i k.theta}) I^alpha`.
#[derive(Clone, Debug)]
pub struct SeriesEvaluator {
    d: usize,
    r: f64,
    max_mode: [usize; MAX_DIM],
    max_alpha: [usize; MAX_DIM],
    terms: Vec<CompiledTerm>,
}

/// Value and gradient at a point.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Jet {
    pub value: f64,
    pub d_theta: [f64; MAX_DIM],
    pub d_action: [f64; MAX_DIM],
}

impl SeriesEvaluator {
    fn new(f: &FtSeries) -> Self {
        let mut max_mode = [0usize; MAX_DIM];
        let mut max_alpha = [0usize; MAX_DIM];
        let mut terms = Vec::new();
        for (idx, c) in f.iter() {
            if !idx.is_upper() {
                continue;
            }
            let mut k = [0i32; MAX_DIM];
            let mut alpha = [0u32; MAX_DIM];
            for j in 0..MAX_DIM {
                k[j] = idx.k[j] as i32;
                alpha[j] = idx.alpha[j] as u32;
                max_mode[j] = max_mode[j].max(k[j].unsigned_abs() as usize);
                max_alpha[j] = max_alpha[j].max(alpha[j] as usize);
            }
            let c = if idx.is_angle_free() { *c } else { c * 2.0 };
            terms.push(CompiledTerm { k, alpha, c });
        }
        SeriesEvaluator {
            d: f.d(),
            r: f.r(),
            max_mode,
            max_alpha,
            terms,
        }
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn radius(&self) -> f64 {
        self.r
    }

    pub fn check_domain(&self, action: &[f64]) -> Result<()> {
        check_domain(self.r, action)
    }

    pub fn value(&self, theta: &[f64], action: &[f64]) -> f64 {
        self.jet_impl(theta, action, false).value
    }

    /// Value and full gradient (no domain check).
    pub fn jet(&self, theta: &[f64], action: &[f64]) -> Jet {
        self.jet_impl(theta, action, true)
    }

    fn jet_impl(&self, theta: &[f64], action: &[f64], grad: bool) -> Jet {
        const STACK: usize = 16;
        let small = (0..self.d).all(|j| self.max_mode[j] <= STACK && self.max_alpha[j] <= 2 * STACK);
        if small {
            let mut phases = [[Complex64::new(1.0, 0.0); 2 * STACK + 1]; MAX_DIM];
            let mut powers = [[1.0; 2 * STACK + 1]; MAX_DIM];
            self.fill_tables(theta, action, &mut phases, &mut powers);
            self.accumulate(&phases, &powers, grad)
        } else {
            let mut phases: Vec<Vec<Complex64>> = (0..MAX_DIM)
                .map(|j| vec![Complex64::new(1.0, 0.0); 2 * self.max_mode[j] + 1])
                .collect();
            let mut powers: Vec<Vec<f64>> = (0..MAX_DIM).map(|j| vec![1.0; self.max_alpha[j] + 1]).collect();
            self.fill_tables(theta, action, &mut phases, &mut powers);
            self.accumulate(&phases, &powers, grad)
        }
    }

    /// `phases[j][max + m] = e^{2 pi i m theta_j}` and `powers[j][a] = I_j^a`.
    fn fill_tables<P, Q>(&self, theta: &[f64], action: &[f64], phases: &mut [P], powers: &mut [Q])
    where
        P: AsMut<[Complex64]>,
        Q: AsMut<[f64]>,
    {
        for j in 0..self.d {
            let mm = self.max_mode[j];
            let v = phases[j].as_mut();
            let base = Complex64::from_polar(1.0, TAU * theta[j]);
            for m in 1..=mm {
                v[mm + m] = v[mm + m - 1] * base;
                v[mm - m] = v[mm + m].conj();
            }
            let p = powers[j].as_mut();
            for a in 1..=self.max_alpha[j] {
                p[a] = p[a - 1] * action[j];
            }
        }
    }

    fn accumulate<P, Q>(&self, phases: &[P], powers: &[Q], grad: bool) -> Jet
    where
        P: AsRef<[Complex64]>,
        Q: AsRef<[f64]>,
    {
        let d = self.d;
        let mut out = Jet::default();
        for t in &self.terms {
            let mut e = t.c;
            let mut mono = 1.0;
            for j in 0..d {
                e *= phases[j].as_ref()[(self.max_mode[j] as i32 + t.k[j]) as usize];
                mono *= powers[j].as_ref()[t.alpha[j] as usize];
            }
            out.value += e.re * mono;
            if !grad {
                continue;
            }
            for j in 0..d {
                if t.k[j] != 0 {
                    // Re(2 pi i k_j e)
                    out.d_theta[j] += -TAU * t.k[j] as f64 * e.im * mono;
                }
                let a = t.alpha[j];
                if a > 0 {
                    let mut partial = e.re * a as f64;
                    for m in 0..d {
                        let p = if m == j { a - 1 } else { t.alpha[m] };
                        partial *= powers[m].as_ref()[p as usize];
                    }
                    out.d_action[j] += partial;
                }
            }
        }
        out
    }
}
