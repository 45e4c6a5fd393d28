//! Sequential Lie elimination of angle dependence degree by degree.

use serde::{Deserialize, Serialize};

use super::lie::{homological_solve, lie_transform};
use super::NormalFormResult;
use crate::diophantine::DiophantineSpec;
use crate::error::{Error, Result};
use crate::series::{FtSeries, TruncationLoss, MAX_MODE};

/// State after normalizing through some order.
#[derive(Clone, Debug)]
struct Step {
    order: u32,
    h: FtSeries,
    loss: TruncationLoss,
    n_generators: usize,
}

/// One sequential normalization run, keeping the transformed Hamiltonian after
/// every order so that results for any intermediate order can be read off
/// without recomputation.
#[derive(Clone, Debug)]
pub struct BirkhoffRun {
    omega: Vec<f64>,
    degree_cap: u32,
    steps: Vec<Step>,
    generators: Vec<FtSeries>,
}

/// Remainder bound as a function of the normalization order, at fixed widths.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RemainderProfile {
    pub rho: f64,
    pub r: f64,
    pub orders: Vec<u32>,
    pub values: Vec<f64>,
}

impl RemainderProfile {
    /// True when the values decrease (weakly) up to their minimum and increase
    /// (weakly) after it, allowing `rel_tol` relative jitter.
    pub fn is_unimodal(&self, rel_tol: f64) -> bool {
        let v = &self.values;
        if v.is_empty() {
            return true;
        }
        let best = select_least_term(&self.orders, v);
        let pos = self.orders.iter().position(|&m| m == best).unwrap_or(0);
        let ok_down = (1..=pos).all(|i| v[i] <= v[i - 1] * (1.0 + rel_tol));
        let ok_up = (pos + 1..v.len()).all(|i| v[i] >= v[i - 1] * (1.0 - rel_tol));
        ok_down && ok_up
    }
}

/// The order minimizing `values`; ties go to the smaller order.
pub fn select_least_term(orders: &[u32], values: &[f64]) -> u32 {
    let mut best = (f64::INFINITY, orders.first().copied().unwrap_or(0));
    for (&m, &v) in orders.iter().zip(values) {
        if v < best.0 {
            best = (v, m);
        }
    }
    best.1
}

fn check_torus_form(h: &FtSeries, omega: &[f64]) -> Result<()> {
    let d = h.d();
    if omega.len() != d {
        return Err(Error::DimensionMismatch(d, omega.len()));
    }
    let scale = omega.iter().fold(1.0f64, |m, w| m.max(w.abs()));
    let mut seen = vec![0.0; d];
    for (idx, c) in h.iter() {
        match idx.degree() {
            0 if !idx.is_angle_free() => {
                return Err(Error::NotTorusForm(format!(
                    "angle-dependent constant term at k = {:?}",
                    idx.k_vec(d)
                )))
            }
            1 => {
                if !idx.is_angle_free() {
                    return Err(Error::NotTorusForm(format!(
                        "angle-dependent linear term at k = {:?}",
                        idx.k_vec(d)
                    )));
                }
                let j = idx.alpha().iter().position(|&a| a == 1).unwrap_or(0);
                seen[j] = c.re;
            }
            _ => {}
        }
    }
    for j in 0..d {
        if (seen[j] - omega[j]).abs() > 1e-12 * scale {
            return Err(Error::NotTorusForm(format!(
                "linear part {seen:?} differs from the frequency {omega:?}"
            )));
        }
    }
    Ok(())
}

impl BirkhoffRun {
    /// Normalizes `h` through order `last_order`, keeping terms up to degree
    /// `degree_cap` and modes up to `dc.K`; everything else is accounted as
    /// truncation loss.
    pub fn new(h: &FtSeries, last_order: u32, dc: &DiophantineSpec, degree_cap: u32) -> Result<Self> {
        dc.validate()?;
        if dc.d() != h.d() {
            return Err(Error::DimensionMismatch(h.d(), dc.d()));
        }
        let omega = dc.omega.clone();
        check_torus_form(h, &omega)?;
        if let Some((idx, _)) = h.iter().find(|(i, _)| i.mode_norm() > dc.k_max) {
            return Err(Error::ModeBeyondCutoff {
                k: idx.k_vec(h.d()),
                cutoff: dc.k_max,
            });
        }
        let degree_cap = degree_cap.max(last_order + 1).max(2);
        let shape = h.shape().with_cutoffs(degree_cap, dc.k_max.min(MAX_MODE));
        let start = h.reshaped(shape)?;
        let mut current = start.value;
        let mut loss = start.loss;
        let mut steps = vec![Step {
            order: 1,
            h: current.clone(),
            loss: loss.clone(),
            n_generators: 0,
        }];
        let mut generators = Vec::new();
        for s in 2..=last_order {
            let resonant = current.degree_part(s).zero_mean_part();
            if !resonant.is_empty() {
                let chi = homological_solve(&resonant.scale(-1.0), &omega, dc)?;
                let n_terms = ((degree_cap - 1) / (s - 1) + 1) as usize;
                let out = lie_transform(&current, &chi, n_terms)?;
                loss.merge(&out.loss);
                current = out.value;
                // what is left of the eliminated part is floating-point rounding,
                // which is not tracked anywhere else either; drop it
                let residue = current.degree_part(s).zero_mean_part();
                if !residue.is_empty() {
                    current = current.sub(&residue)?;
                }
                generators.push(chi);
            }
            steps.push(Step {
                order: s,
                h: current.clone(),
                loss: loss.clone(),
                n_generators: generators.len(),
            });
        }
        Ok(BirkhoffRun {
            omega,
            degree_cap,
            steps,
            generators,
        })
    }

    pub fn last_order(&self) -> u32 {
        self.steps.last().map(|s| s.order).unwrap_or(1)
    }

    pub fn degree_cap(&self) -> u32 {
        self.degree_cap
    }

    fn step(&self, m: u32) -> Result<&Step> {
        self.steps
            .iter()
            .find(|s| s.order == m.max(1))
            .ok_or_else(|| Error::Config(format!("order {m} was not computed in this run")))
    }

    /// Remainder majorant plus loss after normalizing through order `m`.
    pub fn remainder_bound(&self, m: u32, rho: f64, r: f64) -> Result<f64> {
        let st = self.step(m)?;
        let tail = st.h.degree_range(m.max(1) + 1, self.degree_cap);
        Ok(tail.majorant_norm(rho, r).value + st.loss.value(rho, r))
    }

    pub fn profile(&self, first: u32, rho: f64, r: f64) -> Result<RemainderProfile> {
        let orders: Vec<u32> = (first.max(1)..=self.last_order()).collect();
        let values = orders
            .iter()
            .map(|&m| self.remainder_bound(m, rho, r))
            .collect::<Result<Vec<_>>>()?;
        Ok(RemainderProfile {
            rho,
            r,
            orders,
            values,
        })
    }

    /// The normal form through order `m`, with its remainder certified at the
    /// widths `(rho, r)`.
    pub fn result(&self, m: u32, rho: f64, r: f64) -> Result<NormalFormResult> {
        let st = self.step(m)?;
        let m = m.max(1);
        let normal = st.h.degree_range(0, m);
        debug_assert!(normal.is_angle_free());
        let remainder = st.h.degree_range(m + 1, self.degree_cap);
        let value = remainder.majorant_norm(rho, r).value + st.loss.value(rho, r);
        Ok(NormalFormResult {
            normal,
            generators: self.generators[..st.n_generators].to_vec(),
            remainder,
            loss: st.loss.clone(),
            remainder_norm: crate::series::MajorantNorm { value, rho, r },
            order: m,
            frequency: self.omega.clone(),
            center: None,
        })
    }
}

/// Normal form through order `m`. Terms up to the input's truncation degree
/// (at least `m + 1`) are kept in the remainder, whose bound is certified at
/// `(rho/2, r)` of the input.
pub fn birkhoff_normalize(h: &FtSeries, m: u32, dc: &DiophantineSpec) -> Result<NormalFormResult> {
    let cap = h.m_max().max(m + 1);
    let run = BirkhoffRun::new(h, m, dc, cap)?;
    run.result(m, 0.5 * h.rho(), h.r())
}

/// Least-term selection at one radius.
#[derive(Clone, Debug)]
pub struct OptimalOrder {
    pub order: u32,
    pub result: NormalFormResult,
    pub profile: RemainderProfile,
}

/// Normalizes through `m_cap` once (degree cap `m_cap + 1`), evaluates the
/// remainder bound at `(rho/2, 3r)` for each order `2..=m_cap` and returns the
/// minimizer (ties toward smaller order).
pub fn optimal_order(h: &FtSeries, r: f64, dc: &DiophantineSpec, m_cap: u32) -> Result<OptimalOrder> {
    let run = BirkhoffRun::new(h, m_cap.max(2), dc, m_cap.max(2) + 1)?;
    run.optimal_at(r)
}

impl BirkhoffRun {
    /// Least-term selection at radius `r` from an existing run.
    pub fn optimal_at(&self, r: f64) -> Result<OptimalOrder> {
        let rho = 0.5 * self.steps[0].h.rho();
        let profile = self.profile(2, rho, 3.0 * r)?;
        let order = select_least_term(&profile.orders, &profile.values);
        Ok(OptimalOrder {
            order,
            result: self.result(order, rho, 3.0 * r)?,
            profile,
        })
    }
}
