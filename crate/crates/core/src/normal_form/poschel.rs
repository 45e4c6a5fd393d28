//! Second normalization on a small neighborhood of a Diophantine action point.
//!
//! The Hamiltonian is re-expanded around `I*`, and angle dependence with
//! `0 < |k|_1 <= K` is removed iteratively with the frequency frozen at
//! `omega* = grad N(I*)`. On the `delta/2`-neighborhood the divisors stay above
//! `gamma_bar K^{-tau_bar} / 2` by choice of `K`, so every step contracts the
//! non-normalized part by roughly `M delta / (gamma_bar K^{-tau_bar})`.

use serde::{Deserialize, Serialize};

use super::budget::StabilityBudget;
use super::lie::{homological_solve, lie_transform_adaptive};
use super::NormalFormResult;
use crate::diophantine::{divisor, first_violation, shell_modes, DiophantineSpec};
use crate::error::{Error, Result};
use crate::series::{FtSeries, MajorantNorm, TruncationLoss, MAX_MODE};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoschelOptions {
    /// Taylor degree kept in the recentered action `J`.
    pub degree_cap: u32,
    /// Upper bound on elimination steps (the budget asks for `ceil(1/nu)`).
    pub max_steps: usize,
    /// Working Fourier cutoff as a multiple of the elimination cutoff.
    pub mode_growth: u32,
}

impl Default for PoschelOptions {
    fn default() -> Self {
        PoschelOptions {
            degree_cap: 8,
            max_steps: 12,
            mode_growth: 3,
        }
    }
}

/// Result of the second normalization together with the quantities that
/// certify it.
#[derive(Clone, Debug)]
pub struct PoschelReport {
    /// `normal` is `N + G` in the recentered action `J = I - I*`.
    pub result: NormalFormResult,
    pub g: FtSeries,
    pub mode_cutoff: u32,
    pub hessian_bound: f64,
    pub divisor_floor: f64,
    pub perturbation_norm: f64,
    pub steps: usize,
    /// `mu exp(-1/nu)`.
    pub law_scale: f64,
    /// Certified `|R|` divided by `law_scale`.
    pub law_ratio: f64,
    /// `|R| <= C mu exp(-1/nu)` for the fitted constant, when one is set.
    pub within_law: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoschelDoc {
    pub mode_cutoff: u32,
    pub hessian_bound: f64,
    pub divisor_floor: f64,
    pub perturbation_norm: f64,
    pub steps: usize,
    pub law_scale: f64,
    pub law_ratio: f64,
    pub within_law: Option<bool>,
    pub g: FtSeries,
    pub normal_form: super::NormalFormDoc,
}

impl PoschelReport {
    pub fn to_doc(&self) -> PoschelDoc {
        PoschelDoc {
            mode_cutoff: self.mode_cutoff,
            hessian_bound: self.hessian_bound,
            divisor_floor: self.divisor_floor,
            perturbation_norm: self.perturbation_norm,
            steps: self.steps,
            law_scale: self.law_scale,
            law_ratio: self.law_ratio,
            within_law: self.within_law,
            g: self.g.clone(),
            normal_form: self.result.to_doc(),
        }
    }
}

fn linear_part(n: &FtSeries) -> Vec<f64> {
    let d = n.d();
    let mut w = vec![0.0; d];
    for (idx, c) in n.iter() {
        if idx.is_angle_free() && idx.degree() == 1 {
            let j = idx.alpha().iter().position(|&a| a == 1).unwrap_or(0);
            w[j] = c.re;
        }
    }
    w
}

/// `max_i sum_j |d_i d_j N|` over the polydisc of radius `r` (majorants).
fn hessian_bound(n: &FtSeries, r: f64) -> f64 {
    let d = n.d();
    (0..d)
        .map(|i| {
            let di = n.d_action(i);
            (0..d)
                .map(|j| di.d_action(j).majorant_norm(0.0, r).value)
                .sum::<f64>()
        })
        .fold(0.0, f64::max)
}

fn first_floor_violation(omega: &[f64], k_cut: u32, slope: f64, floor: f64) -> Option<(Vec<i32>, f64)> {
    for n in 1..=k_cut {
        for k in shell_modes(omega.len(), n) {
            let v = divisor(omega, &k) - n as f64 * slope;
            if v < floor {
                return Some((k, v));
            }
        }
    }
    None
}

/// Normalizes `H = N + P` (with `N` its angle average) on the
/// `delta`-neighborhood of `I*`.
///
/// Certifies `|R|` on `(rho/6, delta/2)` and compares it with
/// `C mu exp(-1/nu)` when `budget.c_remainder` is set.
pub fn poschel_normalize(
    h: &FtSeries,
    i_star: &[f64],
    dc_bar: &DiophantineSpec,
    budget: &StabilityBudget,
    opts: PoschelOptions,
) -> Result<PoschelReport> {
    let d = h.d();
    if i_star.len() != d {
        return Err(Error::DimensionMismatch(d, i_star.len()));
    }
    if dc_bar.d() != d {
        return Err(Error::DimensionMismatch(d, dc_bar.d()));
    }
    if budget.nu >= 1.0 {
        return Err(Error::NuTooLarge(budget.nu));
    }
    let (rho, delta) = (h.rho(), budget.delta);
    let cert = (rho / 6.0, 0.5 * delta);
    let degree_cap = opts.degree_cap.max(h.max_degree()).max(2);
    let base_shape = h.shape().with_widths(rho, delta).with_cutoffs(degree_cap, h.k_max());
    let centered = h.recentered(i_star, base_shape)?;
    let n0 = centered.angle_average();
    let p0 = centered.zero_mean_part();
    let omega_star = linear_part(&n0);
    let perturbation_norm = p0.majorant_norm(rho, delta).value;
    let hess = hessian_bound(&n0, delta);
    let law_scale = budget.remainder_scale();

    if p0.is_empty() {
        let empty = FtSeries::zero(base_shape)?;
        return Ok(PoschelReport {
            result: NormalFormResult {
                normal: n0,
                generators: Vec::new(),
                remainder: empty.clone(),
                loss: TruncationLoss::new(),
                remainder_norm: MajorantNorm {
                    value: 0.0,
                    rho: cert.0,
                    r: cert.1,
                },
                order: 0,
                frequency: omega_star,
                center: Some(i_star.to_vec()),
            },
            g: empty,
            mode_cutoff: 0,
            hessian_bound: hess,
            divisor_floor: 0.0,
            perturbation_norm: 0.0,
            steps: 0,
            law_scale,
            law_ratio: 0.0,
            within_law: budget.c_remainder.map(|_| true),
        });
    }

    if perturbation_norm > budget.mu * (1.0 + 1e-9) {
        return Err(Error::Hypothesis(format!(
            "perturbation majorant {perturbation_norm:e} exceeds mu = {:e} on the delta-neighborhood",
            budget.mu
        )));
    }
    let spec = dc_bar.with_frequency(omega_star.clone());
    if let Some((k, v)) = first_violation(&spec) {
        return Err(Error::Resonance {
            threshold: spec.threshold(k.iter().map(|x| x.unsigned_abs()).sum()),
            k,
            divisor: v,
        });
    }
    let raw = (budget.gamma_bar / (hess.max(f64::MIN_POSITIVE) * delta)).powf(budget.a_bar);
    let k_cut = if raw.is_finite() {
        (raw.floor() as u64).min(dc_bar.k_max as u64) as u32
    } else {
        dc_bar.k_max
    }
    .min(MAX_MODE);
    if k_cut < 1 {
        return Err(Error::DivisorFloor(format!(
            "mode cutoff (gamma_bar / (M delta))^a_bar = {raw:.3} is below 1"
        )));
    }
    let floor = 0.5 * budget.gamma_bar * (k_cut as f64).powf(-budget.tau_bar);
    if let Some((k, v)) = first_floor_violation(&omega_star, k_cut, 0.5 * hess * delta, floor) {
        return Err(Error::DivisorFloor(format!(
            "mode {k:?}: |k.omega*| - |k| M delta/2 = {v:e} < {floor:e}"
        )));
    }

    let k_work = (k_cut.max(p0.max_mode()) * opts.mode_growth.max(1)).min(MAX_MODE);
    let shape = base_shape.with_cutoffs(degree_cap, k_work);
    let mut current = centered.reshaped(shape)?.value;
    let mut loss = TruncationLoss::new();
    let elim_spec = DiophantineSpec {
        omega: omega_star.clone(),
        tau: budget.tau_bar,
        gamma: budget.gamma_bar,
        k_max: k_cut,
    };
    let wanted = budget.ln_t.ceil().max(1.0) as usize;
    let n_steps = wanted.min(opts.max_steps.max(1));
    let mut generators = Vec::new();
    for _ in 0..n_steps {
        let target: Vec<_> = current
            .iter()
            .filter(|(i, _)| !i.is_angle_free() && i.mode_norm() <= k_cut)
            .map(|(i, c)| (i.k_vec(d), i.alpha_vec(d), -*c))
            .collect();
        if target.is_empty() {
            break;
        }
        let f = FtSeries::from_terms(shape, target)?;
        let chi = homological_solve(&f, &omega_star, &elim_spec)?;
        let out = lie_transform_adaptive(&current, &chi, 1e-17, 60)?;
        loss.merge(&out.loss);
        current = out.value;
        generators.push(chi);
    }

    let normal = current.angle_average();
    let g = normal.sub(&n0.reshaped(shape)?.value)?;
    let remainder = current.zero_mean_part();
    let value = remainder.majorant_norm(cert.0, cert.1).value + loss.value(cert.0, cert.1);
    let law_ratio = value / law_scale;
    Ok(PoschelReport {
        result: NormalFormResult {
            normal,
            generators: generators.clone(),
            remainder,
            loss,
            remainder_norm: MajorantNorm {
                value,
                rho: cert.0,
                r: cert.1,
            },
            order: generators.len() as u32,
            frequency: omega_star,
            center: Some(i_star.to_vec()),
        },
        g,
        mode_cutoff: k_cut,
        hessian_bound: hess,
        divisor_floor: floor,
        perturbation_norm,
        steps: generators.len(),
        law_scale,
        law_ratio,
        within_law: budget.c_remainder.map(|c| value <= c * law_scale),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::Shape;
    use std::f64::consts::TAU;

    const PHI: f64 = 0.618_033_988_749_894_9;

    // perturbation scaled so that its majorant on the strip of width 0.5 is mu
    fn amp(mu: f64) -> f64 {
        mu * (-TAU * 0.5).exp()
    }

    fn n_plus(mu: f64) -> FtSeries {
        FtSeries::zero(Shape::new(2, 4, 4, 0.5, 0.5).unwrap())
            .unwrap()
            .with_linear(&[1.0, PHI])
            .unwrap()
            .with_monomial(&[2, 0], 0.5)
            .unwrap()
            .with_monomial(&[0, 2], 0.5)
            .unwrap()
            .with_cos(&[1, 0], &[0, 0], amp(mu))
            .unwrap()
    }

    fn dc_bar(b: &StabilityBudget) -> DiophantineSpec {
        DiophantineSpec::new(vec![1.0, PHI], b.tau_bar, b.gamma_bar, 40).unwrap()
    }

    #[test]
    fn zero_perturbation_gives_zero_g_and_r() {
        let b = StabilityBudget::new(1.0, 5.0, 1e-6, 1.0).unwrap();
        let rep = poschel_normalize(&n_plus(0.0), &[0.0, 0.0], &dc_bar(&b), &b, PoschelOptions::default())
            .unwrap();
        assert!(rep.g.is_empty());
        assert!(rep.result.remainder.is_empty());
        assert_eq!(rep.result.remainder_norm.value, 0.0);
    }

    #[test]
    fn single_step_matches_two_term_expansion() {
        // chi = -a sin(2 pi theta_1)/(2 pi w1) has no action dependence, so the
        // Lie series ends after two brackets:
        // R = -(a/w1) cos(2 pi theta_1) J_1 + a^2/(4 w1^2) cos(4 pi theta_1)
        // G = a^2/(4 w1^2)
        let mu = 1e-6;
        let a = amp(mu);
        let b = StabilityBudget::new(1.0, 5.0, mu, 1.0).unwrap();
        let opts = PoschelOptions {
            max_steps: 1,
            ..PoschelOptions::default()
        };
        let rep = poschel_normalize(&n_plus(mu), &[0.0, 0.0], &dc_bar(&b), &b, opts).unwrap();
        let shape = rep.result.remainder.shape();
        let r_exact = FtSeries::zero(shape)
            .unwrap()
            .with_cos(&[1, 0], &[1, 0], -a)
            .unwrap()
            .with_cos(&[2, 0], &[0, 0], a * a / 4.0)
            .unwrap();
        let diff = rep.result.remainder.sub(&r_exact).unwrap();
        assert!(diff.majorant_norm(0.0, 1.0).value < 1e-20);
        assert!((rep.g.coeff(&[0, 0], &[0, 0]).re - a * a / 4.0).abs() < 1e-24);
        assert_eq!(rep.g.len(), 1);
    }

    #[test]
    fn more_steps_shrink_the_remainder() {
        let mu = 1e-6;
        let b = StabilityBudget::new(1.0, 5.0, mu, 1.0).unwrap();
        let one = PoschelOptions {
            max_steps: 1,
            ..PoschelOptions::default()
        };
        let r1 = poschel_normalize(&n_plus(mu), &[0.0, 0.0], &dc_bar(&b), &b, one).unwrap();
        let rn = poschel_normalize(&n_plus(mu), &[0.0, 0.0], &dc_bar(&b), &b, PoschelOptions::default())
            .unwrap();
        assert!(rn.steps > 1);
        assert!(rn.result.remainder_norm.value < 1e-3 * r1.result.remainder_norm.value);
    }

    #[test]
    fn large_nu_is_rejected() {
        let b = StabilityBudget::new(1.0, 5.0, 1e-6, 1e-4).unwrap();
        assert!(b.nu >= 1.0);
        let err = poschel_normalize(&n_plus(1e-6), &[0.0, 0.0], &dc_bar(&b), &b, PoschelOptions::default());
        assert!(matches!(err, Err(Error::NuTooLarge(_))));
    }
}
