//! The Diophantine action set: actions whose frequency `F(I)` satisfies
//! `DC(tau_bar, gamma_bar)` up to a mode cutoff and which stay `gamma_bar`
//! away from the boundary of the ball `B_{2r}`. Measured by seeded Monte Carlo.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diophantine::{shell_modes, DiophantineSpec};
use crate::error::{Error, Result};
use crate::poly::{CompiledPoly, PolyMap};
use crate::series::MAX_DIM;
use crate::stats::{poisson_log_fit, wilson, LineFit};

/// `tau_bar = (m* - 1)(d + 1) + tau + 1`.
pub fn bar_tau(m_star: u32, d: usize, tau: f64) -> f64 {
    (m_star.max(1) - 1) as f64 * (d as f64 + 1.0) + tau + 1.0
}

/// Lebesgue measure of the Euclidean ball of the given radius in `d <= 4`.
pub fn ball_volume(d: usize, radius: f64) -> f64 {
    use std::f64::consts::PI;
    let unit = match d {
        1 => 2.0,
        2 => PI,
        3 => 4.0 / 3.0 * PI,
        4 => PI * PI / 2.0,
        _ => panic!("ball_volume supports d <= 4"),
    };
    unit * radius.powi(d as i32)
}

/// Uniform point in the Euclidean ball, drawn from its own ChaCha stream so the
/// value depends only on `(seed, index)`.
pub fn sample_ball(seed: u64, index: u64, d: usize, radius: f64) -> [f64; MAX_DIM] {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    loop {
        let mut x = [0.0; MAX_DIM];
        for v in x.iter_mut().take(d) {
            *v = rng.gen_range(-1.0..1.0);
        }
        let n2: f64 = x.iter().map(|v| v * v).sum();
        if n2 <= 1.0 {
            for v in x.iter_mut() {
                *v *= radius;
            }
            return x;
        }
    }
}

/// Upper-half modes `0 < |k|_1 <= K` with weights `|k|_1^{tau}`.
pub struct ModeTable {
    d: usize,
    modes: Vec<([f64; MAX_DIM], f64)>,
}

impl ModeTable {
    pub fn new(d: usize, k_max: u32, tau: f64) -> Self {
        let mut modes = Vec::new();
        for n in 1..=k_max {
            let w = (n as f64).powf(tau);
            for k in shell_modes(d, n) {
                let mut kf = [0.0; MAX_DIM];
                for (t, &v) in kf.iter_mut().zip(&k) {
                    *t = v as f64;
                }
                modes.push((kf, w));
            }
        }
        ModeTable { d, modes }
    }

    /// `min_k |k.f| |k|_1^{tau}`.
    pub fn min_scaled_divisor(&self, f: &[f64]) -> f64 {
        let mut best = f64::INFINITY;
        for (k, w) in &self.modes {
            let mut dot = 0.0;
            for j in 0..self.d {
                dot += k[j] * f[j];
            }
            best = best.min(dot.abs() * w);
        }
        best
    }
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Membership of `action` in the Diophantine set: `F(I) in DC(tau, gamma)` up
/// to the cutoff of `spec` and `2r - |I| >= gamma`. The frequency field of
/// `spec` is not used; `F(I)` takes its place.
pub fn dioset_indicator(f: &PolyMap, action: &[f64], spec: &DiophantineSpec, r: f64) -> bool {
    let table = ModeTable::new(f.d, spec.k_max, spec.tau);
    let freq = f.eval(action);
    2.0 * r - norm(action) >= spec.gamma && table.min_scaled_divisor(&freq) >= spec.gamma
}

/// Per-sample data reused across a `gamma_bar` sweep.
struct Scan {
    min_divisor: Vec<f64>,
    boundary_gap: Vec<f64>,
}

fn scan(f: &CompiledPoly, d: usize, table: &ModeTable, r: f64, n_samples: u64, seed: u64) -> Scan {
    let (min_divisor, boundary_gap): (Vec<f64>, Vec<f64>) = (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let x = sample_ball(seed, i, d, 2.0 * r);
            let mut freq = [0.0; MAX_DIM];
            f.eval_into(&x[..d], &mut freq);
            (table.min_scaled_divisor(&freq[..d]), 2.0 * r - norm(&x[..d]))
        })
        .unzip();
    Scan {
        min_divisor,
        boundary_gap,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiosetReport {
    pub r: f64,
    pub tau_bar: f64,
    pub gamma_bar: f64,
    #[serde(rename = "K")]
    pub k_max: u32,
    pub n_samples: u64,
    pub seed: u64,
    /// Fraction of `B_{2r}` where `F(I)` fails `DC(tau_bar, gamma_bar)`.
    pub complement_fraction: f64,
    /// 95% Wilson half-width and bounds for `complement_fraction`.
    pub ci95: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Fraction within `gamma_bar` of the boundary sphere.
    pub collar_fraction: f64,
    /// Fraction where the indicator is false (divisor failure or collar).
    pub excluded_fraction: f64,
    /// `complement_fraction * Leb(B_{2r})`.
    pub complement_measure: f64,
    /// `C gamma_bar^{1/(m*-1)} r^{d-1}`, once `C` has been fitted.
    pub bound: Option<f64>,
}

fn report_from(scan: &Scan, r: f64, spec: &DiophantineSpec, d: usize, seed: u64) -> DiosetReport {
    let n = scan.min_divisor.len() as u64;
    let g = spec.gamma;
    let mut hits = 0u64;
    let mut collar = 0u64;
    let mut excluded = 0u64;
    for (&m, &gap) in scan.min_divisor.iter().zip(&scan.boundary_gap) {
        let bad = m < g;
        let edge = gap < g;
        hits += bad as u64;
        collar += edge as u64;
        excluded += (bad || edge) as u64;
    }
    let nf = n as f64;
    let frac = hits as f64 / nf;
    let (lo, hi) = wilson(hits, n);
    DiosetReport {
        r,
        tau_bar: spec.tau,
        gamma_bar: g,
        k_max: spec.k_max,
        n_samples: n,
        seed,
        complement_fraction: frac,
        ci95: 0.5 * (hi - lo),
        ci_low: lo,
        ci_high: hi,
        collar_fraction: collar as f64 / nf,
        excluded_fraction: excluded as f64 / nf,
        complement_measure: frac * ball_volume(d, 2.0 * r),
        bound: None,
    }
}

fn check_inputs(f: &PolyMap, r: f64, n_samples: u64) -> Result<()> {
    if f.d < 2 || f.d > MAX_DIM {
        return Err(Error::Config(format!("unsupported dimension d = {}", f.d)));
    }
    if !(r > 0.0) {
        return Err(Error::Config(format!("radius r = {r} must be positive")));
    }
    if n_samples < 1000 {
        return Err(Error::Config(format!("need at least 1000 samples, got {n_samples}")));
    }
    Ok(())
}

/// Monte Carlo estimate of the complement of the Diophantine set in `B_{2r}`.
/// `spec.tau` and `spec.gamma` are `(tau_bar, gamma_bar)`.
pub fn measure_complement(
    f: &PolyMap,
    r: f64,
    spec: &DiophantineSpec,
    n_samples: u64,
    seed: u64,
) -> Result<DiosetReport> {
    check_inputs(f, r, n_samples)?;
    let table = ModeTable::new(f.d, spec.k_max, spec.tau);
    let s = scan(&f.compiled(), f.d, &table, r, n_samples, seed);
    Ok(report_from(&s, r, spec, f.d, seed))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiosetSweep {
    pub m_star: u32,
    /// `1/(m* - 1)`, the predicted log-log slope.
    pub expected_slope: f64,
    /// Smallest `C` with `complement_measure <= C gamma_bar^{1/(m*-1)} r^{d-1}`
    /// at every swept point.
    pub c_fit: f64,
    /// Log-linear Poisson fit of the complement fraction against `gamma_bar`.
    pub fit: Option<LineFit>,
    pub reports: Vec<DiosetReport>,
}

impl DiosetSweep {
    pub fn csv(&self) -> String {
        let mut s = String::from("gamma_bar,complement_fraction,ci95,bound\n");
        for rep in &self.reports {
            s.push_str(&format!(
                "{:e},{:e},{:e},{:e}\n",
                rep.gamma_bar,
                rep.complement_fraction,
                rep.ci95,
                rep.bound.unwrap_or(f64::NAN)
            ));
        }
        s
    }

    /// True when every point's 95% interval contains the fitted line.
    pub fn intervals_cover_fit(&self) -> bool {
        let Some(fit) = &self.fit else { return false };
        self.reports.iter().all(|rep| {
            let pred = fit.predict(rep.gamma_bar.ln()).exp();
            rep.ci_low <= pred && pred <= rep.ci_high
        })
    }
}

/// Sweeps `gamma_bar` over `gammas` on one shared sample set (so the estimate
/// is monotone in `gamma_bar`), fits the scaling exponent and the constant of
/// the measure bound.
pub fn complement_sweep(
    f: &PolyMap,
    r: f64,
    spec: &DiophantineSpec,
    gammas: &[f64],
    m_star: u32,
    n_samples: u64,
    seed: u64,
) -> Result<DiosetSweep> {
    check_inputs(f, r, n_samples)?;
    if m_star < 2 {
        return Err(Error::Config(
            "the measure bound needs m* >= 2; for m* = 1 the set is the whole ball".into(),
        ));
    }
    if gammas.iter().any(|g| !(*g > 0.0)) {
        return Err(Error::Config("gamma_bar values must be positive".into()));
    }
    let d = f.d;
    let table = ModeTable::new(d, spec.k_max, spec.tau);
    let s = scan(&f.compiled(), d, &table, r, n_samples, seed);
    let expected_slope = 1.0 / (m_star - 1) as f64;
    let mut reports: Vec<DiosetReport> = gammas
        .iter()
        .map(|&g| {
            let sp = DiophantineSpec { gamma: g, ..spec.clone() };
            report_from(&s, r, &sp, d, seed)
        })
        .collect();
    let scale = |g: f64| g.powf(expected_slope) * r.powi(d as i32 - 1);
    let c_fit = reports
        .iter()
        .map(|rep| rep.complement_measure / scale(rep.gamma_bar))
        .fold(0.0, f64::max);
    for rep in reports.iter_mut() {
        rep.bound = Some(c_fit * scale(rep.gamma_bar));
    }
    let xs: Vec<f64> = gammas.iter().map(|g| g.ln()).collect();
    let hits: Vec<u64> = reports
        .iter()
        .map(|rep| (rep.complement_fraction * n_samples as f64).round() as u64)
        .collect();
    let fit = poisson_log_fit(&xs, &hits, n_samples);
    Ok(DiosetSweep {
        m_star,
        expected_slope,
        c_fit,
        fit,
        reports,
    })
}

/// `xi_k` with `k.F(I) = (sum_j |c_j|) xi_k . F^l(I)`, where
/// `c_j = k_{p_j} + sum_i b_{i,j} k_{p_{l+i}}` and `F^l` collects the first `l`
/// permuted coordinates. `b` is `(d-l) x l`.
pub fn xi_vectors(b: &[Vec<f64>], permutation: &[usize], k: &[i32]) -> Result<Vec<f64>> {
    let d = permutation.len();
    if k.len() != d {
        return Err(Error::DimensionMismatch(k.len(), d));
    }
    if k.iter().all(|&v| v == 0) {
        return Err(Error::ZeroMode);
    }
    let l = d - b.len();
    let coef: Vec<f64> = (0..l)
        .map(|j| {
            k[permutation[j]] as f64
                + b.iter()
                    .enumerate()
                    .map(|(i, row)| row[j] * k[permutation[l + i]] as f64)
                    .sum::<f64>()
        })
        .collect();
    let s: f64 = coef.iter().map(|c| c.abs()).sum();
    if !(s > 0.0) {
        return Err(Error::Degenerate(format!(
            "mode {k:?} annihilates the selected frequency coordinates"
        )));
    }
    Ok(coef.iter().map(|c| c / s).collect())
}

/// `sum_j |c_j|` from [`xi_vectors`].
fn xi_weight(b: &[Vec<f64>], permutation: &[usize], k: &[i32]) -> f64 {
    let d = permutation.len();
    let l = d - b.len();
    (0..l)
        .map(|j| {
            (k[permutation[j]] as f64
                + b.iter()
                    .enumerate()
                    .map(|(i, row)| row[j] * k[permutation[l + i]] as f64)
                    .sum::<f64>())
            .abs()
        })
        .sum()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InclusionReport {
    pub n_samples: u64,
    /// Sample-mode pairs with `|k.F(I)| < gamma_bar |k|^{-tau_bar}`.
    pub triggered: u64,
    /// Those among them with `|g_k(I)| >= eps_k`.
    pub violations: u64,
}

/// Tests the inclusion of the resonant zones in the sublevel sets of
/// `g_k = xi_k . F^l`: `|k.F(I)| < gamma_bar |k|^{-tau_bar}` must imply
/// `|g_k(I)| < gamma_bar gamma^{-1} |k|^{tau - tau_bar}`. `bar` carries
/// `(tau_bar, gamma_bar, K)`; `(tau, gamma)` are those of `omega`.
#[allow(clippy::too_many_arguments)]
pub fn inclusion_check(
    f: &PolyMap,
    b: &[Vec<f64>],
    permutation: &[usize],
    bar: &DiophantineSpec,
    tau: f64,
    gamma: f64,
    r: f64,
    n_samples: u64,
    seed: u64,
) -> Result<InclusionReport> {
    let d = f.d;
    let l = d - b.len();
    let compiled = f.compiled();
    let mut modes = Vec::new();
    for n in 1..=bar.k_max {
        for k in shell_modes(d, n) {
            let w = xi_weight(b, permutation, &k);
            let xi = xi_vectors(b, permutation, &k)?;
            modes.push((k, n, w, xi));
        }
    }
    let (triggered, violations) = (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let x = sample_ball(seed, i, d, 2.0 * r);
            let mut freq = [0.0; MAX_DIM];
            compiled.eval_into(&x[..d], &mut freq);
            let mut t = 0u64;
            let mut v = 0u64;
            for (k, n, _, xi) in &modes {
                let nf = *n as f64;
                let dot: f64 = k.iter().zip(&freq).map(|(&a, b)| a as f64 * b).sum();
                if dot.abs() < bar.gamma * nf.powf(-bar.tau) {
                    t += 1;
                    let g: f64 = (0..l).map(|j| xi[j] * freq[permutation[j]]).sum();
                    let eps = bar.gamma / gamma * nf.powf(tau - bar.tau);
                    if g.abs() >= eps {
                        v += 1;
                    }
                }
            }
            (t, v)
        })
        .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    Ok(InclusionReport {
        n_samples,
        triggered,
        violations,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PyartliSample {
    pub eps: f64,
    pub n: u32,
    pub beta: f64,
    /// `Leb{I in B_{2r} : |g(I)| <= eps}` by Monte Carlo.
    pub measured: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Smallest sampled value of `max_{j <= n} |D^j g|`.
    pub derivative_floor: f64,
    /// Majorant bound on the `C^{n+1}` norm of `g` over `B_{2r}`.
    pub g_norm: f64,
}

impl PyartliSample {
    /// `C |g|_{n+1} eps^{1/n} r^{d-1}` for a given constant.
    pub fn bound(&self, c: f64, r: f64, d: usize) -> f64 {
        c * self.g_norm * self.eps.powf(1.0 / self.n as f64) * r.powi(d as i32 - 1)
    }
}

fn multi_indices_of_degree(d: usize, deg: u32) -> Vec<Vec<u32>> {
    if d == 1 {
        return vec![vec![deg]];
    }
    let mut out = Vec::new();
    for first in (0..=deg).rev() {
        for mut rest in multi_indices_of_degree(d - 1, deg - first) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

/// Measures the sublevel set `{|g| <= eps}` in `B_{2r}` for a scalar
/// polynomial `g`, after checking the derivative hypothesis
/// `max_{j <= n} |D^j g| >= beta` on every sample (with `|D^j g|` the largest
/// partial derivative of order `j`) and `eps <= beta / (2n + 2)`.
pub fn pyartli_measure(
    g: &PolyMap,
    n: u32,
    beta: f64,
    eps: f64,
    r: f64,
    n_samples: u64,
    seed: u64,
) -> Result<PyartliSample> {
    let d = g.d;
    if g.components.len() != 1 {
        return Err(Error::Config("pyartli_measure needs a scalar polynomial".into()));
    }
    check_inputs(&PolyMap::constant(&vec![0.0; d.max(2)]), r, n_samples)?;
    if n < 1 || !(beta > 0.0) || !(eps > 0.0) {
        return Err(Error::Config("need n >= 1, beta > 0, eps > 0".into()));
    }
    if eps > beta / (2 * n + 2) as f64 {
        return Err(Error::Hypothesis(format!(
            "eps = {eps} exceeds beta / (2n + 2) = {}",
            beta / (2 * n + 2) as f64
        )));
    }
    let derivs: Vec<CompiledPoly> = (0..=n)
        .flat_map(|j| multi_indices_of_degree(d, j))
        .map(|a| g.derivative(&a).compiled())
        .collect();
    let g_norm = (0..=n + 1)
        .flat_map(|j| multi_indices_of_degree(d, j))
        .map(|a| g.derivative(&a).component_bounds(2.0 * r)[0])
        .fold(0.0, f64::max);
    let (hits, floor) = (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let x = sample_ball(seed, i, d, 2.0 * r);
            let mut out = [0.0; MAX_DIM];
            let mut top = 0.0f64;
            let mut value = 0.0;
            for (idx, p) in derivs.iter().enumerate() {
                p.eval_into(&x[..d], &mut out);
                if idx == 0 {
                    value = out[0];
                }
                top = top.max(out[0].abs());
            }
            ((value.abs() <= eps) as u64, top)
        })
        .reduce(|| (0, f64::INFINITY), |a, b| (a.0 + b.0, a.1.min(b.1)));
    if floor < beta {
        return Err(Error::Hypothesis(format!(
            "derivative floor {floor:e} below beta = {beta:e}"
        )));
    }
    let vol = ball_volume(d, 2.0 * r);
    let (lo, hi) = wilson(hits, n_samples);
    Ok(PyartliSample {
        eps,
        n,
        beta,
        measured: hits as f64 / n_samples as f64 * vol,
        ci_low: lo * vol,
        ci_high: hi * vol,
        derivative_floor: floor,
        g_norm,
    })
}

/// Measures the sublevel set and returns it with the bound for constant `c`,
/// failing with a hypothesis error when the measurement exceeds the bound.
#[allow(clippy::too_many_arguments)]
pub fn pyartli_check(
    g: &PolyMap,
    n: u32,
    beta: f64,
    eps: f64,
    r: f64,
    c: f64,
    n_samples: u64,
    seed: u64,
) -> Result<(f64, f64)> {
    let s = pyartli_measure(g, n, beta, eps, r, n_samples, seed)?;
    let bound = s.bound(c, r, g.d);
    if s.measured > bound {
        return Err(Error::Hypothesis(format!(
            "sublevel measure {:e} exceeds the bound {bound:e}",
            s.measured
        )));
    }
    Ok((s.measured, bound))
}

/// Area of `{|x_1| <= w}` inside the disc of radius `radius`.
pub fn strip_area(w: f64, radius: f64) -> f64 {
    let w = w.min(radius);
    2.0 * (w * (radius * radius - w * w).sqrt() + radius * radius * (w / radius).asin())
}
