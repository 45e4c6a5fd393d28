//! Real polynomial maps `R^d -> R^d`, used for frequency maps `F = grad N`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::{FtSeries, MAX_DIM};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    pub alpha: Vec<u32>,
    pub c: f64,
}

/// `F_j(I) = sum_alpha c_{j,alpha} I^alpha` for `j = 1..d`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolyMap {
    pub d: usize,
    pub components: Vec<Vec<Monomial>>,
}

fn factorial(n: u32) -> f64 {
    (1..=n).map(|v| v as f64).product()
}

impl PolyMap {
    /// Constant map.
    pub fn constant(omega: &[f64]) -> Self {
        PolyMap {
            d: omega.len(),
            components: omega
                .iter()
                .map(|&w| {
                    vec![Monomial {
                        alpha: vec![0; omega.len()],
                        c: w,
                    }]
                })
                .collect(),
        }
    }

    /// Scalar polynomial `R^d -> R`, stored as a single component.
    pub fn scalar(d: usize, terms: Vec<Monomial>) -> Self {
        PolyMap {
            d,
            components: vec![terms],
        }
    }

    /// Gradient of an angle-free series.
    pub fn gradient_of(n: &FtSeries) -> Result<Self> {
        let d = n.d();
        if let Some((idx, _)) = n.iter().find(|(i, _)| !i.is_angle_free()) {
            return Err(Error::AngleDependent(idx.k_vec(d)));
        }
        let components = (0..d)
            .map(|j| {
                n.d_action(j)
                    .iter()
                    .map(|(idx, c)| Monomial {
                        alpha: idx.alpha_vec(d),
                        c: c.re,
                    })
                    .collect()
            })
            .collect();
        Ok(PolyMap { d, components })
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.components.len()];
        self.eval_into(x, &mut out);
        out
    }

    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        for (j, comp) in self.components.iter().enumerate() {
            out[j] = comp
                .iter()
                .map(|m| m.c * m.alpha.iter().zip(x).map(|(&a, &v)| v.powi(a as i32)).product::<f64>())
                .sum();
        }
    }

    /// `d^beta F` as a new map.
    pub fn derivative(&self, beta: &[u32]) -> PolyMap {
        let components = self
            .components
            .iter()
            .map(|comp| {
                comp.iter()
                    .filter(|m| m.alpha.iter().zip(beta).all(|(a, b)| a >= b))
                    .map(|m| {
                        let mut c = m.c;
                        let mut alpha = m.alpha.clone();
                        for (a, &b) in alpha.iter_mut().zip(beta) {
                            c *= factorial(*a) / factorial(*a - b);
                            *a -= b;
                        }
                        Monomial { alpha, c }
                    })
                    .collect()
            })
            .collect();
        PolyMap { d: self.d, components }
    }

    /// `sum |c| r^{|alpha|}` for each component: a bound on `|F_j|` over the
    /// polydisc of radius `r`.
    pub fn component_bounds(&self, r: f64) -> Vec<f64> {
        self.components
            .iter()
            .map(|comp| {
                comp.iter()
                    .map(|m| m.c.abs() * r.powi(m.alpha.iter().sum::<u32>() as i32))
                    .sum()
            })
            .collect()
    }

    pub fn max_degree(&self) -> u32 {
        self.components
            .iter()
            .flatten()
            .map(|m| m.alpha.iter().sum::<u32>())
            .max()
            .unwrap_or(0)
    }

    /// Fast evaluator with precomputed powers.
    pub fn compiled(&self) -> CompiledPoly {
        let max_deg = self.max_degree() as usize;
        let terms = self
            .components
            .iter()
            .enumerate()
            .flat_map(|(j, comp)| {
                comp.iter().map(move |m| {
                    let mut a = [0u8; MAX_DIM];
                    for (t, &v) in a.iter_mut().zip(&m.alpha) {
                        *t = v as u8;
                    }
                    (j, a, m.c)
                })
            })
            .collect();
        CompiledPoly {
            d: self.d,
            n_out: self.components.len(),
            max_deg,
            terms,
        }
    }
}

#[derive(Clone, Debug)]
pub struct CompiledPoly {
    d: usize,
    n_out: usize,
    max_deg: usize,
    terms: Vec<(usize, [u8; MAX_DIM], f64)>,
}

impl CompiledPoly {
    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        let mut pw = [[1.0f64; 64]; MAX_DIM];
        let top = self.max_deg.min(63);
        for j in 0..self.d {
            for p in 1..=top {
                pw[j][p] = pw[j][p - 1] * x[j];
            }
        }
        out[..self.n_out].iter_mut().for_each(|v| *v = 0.0);
        for (j, a, c) in &self.terms {
            let mut v = *c;
            for m in 0..self.d {
                let p = a[m] as usize;
                v *= if p <= top { pw[m][p] } else { x[m].powi(p as i32) };
            }
            out[*j] += v;
        }
    }
}
