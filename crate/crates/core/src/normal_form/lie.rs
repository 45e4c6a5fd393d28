//! Homological equation and Lie transforms `exp(L_chi) H = H + {chi, H} + ...`.

use std::f64::consts::TAU;

use num_complex::Complex64;

use crate::diophantine::{divisor, DiophantineSpec};
use crate::error::{Error, Result};
use crate::series::{FtSeries, TruncationLoss, WithLoss};

/// Solves `{chi, omega.I} = omega . d_theta chi = f` mode by mode:
/// `chi_{k,alpha} = f_{k,alpha} / (2 pi i omega.k)`.
///
/// Every mode must satisfy `|k|_1 <= dc.K` and `|omega.k| >= dc.gamma |k|_1^{-dc.tau}`.
pub fn homological_solve(f: &FtSeries, omega: &[f64], dc: &DiophantineSpec) -> Result<FtSeries> {
    let d = f.d();
    if omega.len() != d {
        return Err(Error::DimensionMismatch(d, omega.len()));
    }
    if dc.d() != d {
        return Err(Error::DimensionMismatch(d, dc.d()));
    }
    let mut terms = Vec::with_capacity(f.len());
    for (idx, c) in f.iter() {
        if idx.is_angle_free() {
            return Err(Error::NonZeroAverage);
        }
        let k = idx.k_vec(d);
        let n = idx.mode_norm();
        if n > dc.k_max {
            return Err(Error::ModeBeyondCutoff { k, cutoff: dc.k_max });
        }
        let dot: f64 = omega.iter().zip(&k).map(|(w, &kj)| w * kj as f64).sum();
        let div = divisor(omega, &k);
        let threshold = dc.threshold(n);
        if div < threshold {
            return Err(Error::Resonance {
                k,
                divisor: div,
                threshold,
            });
        }
        terms.push((k, idx.alpha_vec(d), c / Complex64::new(0.0, TAU * dot)));
    }
    FtSeries::from_terms(f.shape(), terms)
}

/// Sum of the first `n_terms` terms of `exp(L_chi) H`, truncated to the
/// cutoffs of `H`.
///
/// When the series does not terminate within `n_terms`, the tail is estimated
/// geometrically from the last two term norms and added to the loss; a tail
/// ratio `>= 1` is reported as a step-size error.
pub fn lie_transform(h: &FtSeries, chi: &FtSeries, n_terms: usize) -> Result<WithLoss<FtSeries>> {
    let (rho, r) = (h.rho(), h.r());
    let mut loss = TruncationLoss::new();
    let mut sum = h.clone();
    let mut term = h.clone();
    let mut norms = vec![h.majorant_norm(rho, r).value];
    if chi.is_empty() || n_terms <= 1 {
        return Ok(WithLoss { value: sum, loss });
    }
    for j in 1..n_terms {
        let next = chi.bracket_with(&term, h.shape())?;
        loss.merge(&next.loss.scaled(1.0 / j as f64));
        term = next.value.scale(1.0 / j as f64);
        if term.is_empty() {
            return Ok(WithLoss { value: sum, loss });
        }
        sum = sum.add(&term)?;
        norms.push(term.majorant_norm(rho, r).value);
    }
    // The next bracket either falls entirely beyond the cutoffs (its mass is
    // the exact first-order tail) or the tail is bounded geometrically.
    let next = chi.bracket_with(&term, h.shape())?;
    loss.merge(&next.loss.scaled(1.0 / n_terms as f64));
    if next.value.is_empty() {
        return Ok(WithLoss { value: sum, loss });
    }
    let n = norms.len();
    let (last, prev) = (norms[n - 1], norms[n - 2]);
    if last >= prev {
        return Err(Error::StepSize {
            last,
            previous: prev,
        });
    }
    let q = last / prev;
    loss.merge(&term.mass_profile().scaled(q / (1.0 - q)));
    Ok(WithLoss { value: sum, loss })
}

/// `exp(L_chi) H`, summed until a term drops below `rel_tol` times `|H|`
/// (majorant at the widths of `H`) or the series terminates.
pub fn lie_transform_adaptive(
    h: &FtSeries,
    chi: &FtSeries,
    rel_tol: f64,
    max_terms: usize,
) -> Result<WithLoss<FtSeries>> {
    let (rho, r) = (h.rho(), h.r());
    let scale = h.majorant_norm(rho, r).value.max(f64::MIN_POSITIVE);
    let mut loss = TruncationLoss::new();
    let mut sum = h.clone();
    let mut term = h.clone();
    let mut prev = scale;
    for j in 1..max_terms {
        let next = chi.bracket_with(&term, h.shape())?;
        loss.merge(&next.loss.scaled(1.0 / j as f64));
        term = next.value.scale(1.0 / j as f64);
        if term.is_empty() {
            return Ok(WithLoss { value: sum, loss });
        }
        let norm = term.majorant_norm(rho, r).value;
        sum = sum.add(&term)?;
        if norm < rel_tol * scale {
            // remaining terms bounded geometrically
            let q = norm / prev;
            if q < 1.0 {
                loss.merge(&term.mass_profile().scaled(q / (1.0 - q)));
                return Ok(WithLoss { value: sum, loss });
            }
        }
        if j >= 3 && norm >= prev {
            return Err(Error::StepSize {
                last: norm,
                previous: prev,
            });
        }
        prev = norm;
    }
    Err(Error::StepSize {
        last: prev,
        previous: rel_tol * scale,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::Shape;

    const PHI: f64 = 0.618_033_988_749_894_9;

    fn shape() -> Shape {
        Shape::new(2, 8, 10, 0.3, 0.5).unwrap()
    }

    fn dc() -> DiophantineSpec {
        DiophantineSpec::new(vec![1.0, PHI], 1.0, 0.3, 20).unwrap()
    }

    #[test]
    fn single_mode_closed_form() {
        let f = FtSeries::zero(shape()).unwrap().with_cos(&[1, 1], &[0, 0], 1.0).unwrap();
        let chi = homological_solve(&f, &[1.0, PHI], &dc()).unwrap();
        let expected = FtSeries::zero(shape())
            .unwrap()
            .with_sin(&[1, 1], &[0, 0], 1.0 / (TAU * (1.0 + PHI)))
            .unwrap();
        assert!(chi.sub(&expected).unwrap().majorant_norm(0.0, 1.0).value < 1e-16);
    }

    #[test]
    fn zero_right_hand_side() {
        let f = FtSeries::zero(shape()).unwrap();
        assert!(homological_solve(&f, &[1.0, PHI], &dc()).unwrap().is_empty());
    }

    #[test]
    fn resonance_and_average_errors() {
        let f = FtSeries::zero(shape()).unwrap().with_cos(&[1, -2], &[1, 0], 1.0).unwrap();
        let err = homological_solve(&f, &[1.0, 0.5], &dc().with_frequency(vec![1.0, 0.5]));
        assert!(matches!(err, Err(Error::Resonance { .. })));
        let g = FtSeries::zero(shape()).unwrap().with_monomial(&[2, 0], 1.0).unwrap();
        assert!(matches!(homological_solve(&g, &[1.0, PHI], &dc()), Err(Error::NonZeroAverage)));
    }

    #[test]
    fn lie_transform_of_commuting_functions_is_identity() {
        let h = FtSeries::zero(shape()).unwrap().with_monomial(&[2, 1], 0.3).unwrap();
        let chi = FtSeries::zero(shape()).unwrap().with_monomial(&[1, 1], 1.0).unwrap();
        let out = lie_transform(&h, &chi, 6).unwrap();
        assert_eq!(out.value, h);
        assert!(out.loss.is_empty());
    }

    #[test]
    fn first_bracket_closed_form() {
        let w1 = 1.0;
        let h = FtSeries::zero(shape()).unwrap().with_linear(&[w1, PHI]).unwrap();
        let chi = FtSeries::zero(shape())
            .unwrap()
            .with_sin(&[1, 0], &[0, 0], 1.0 / (TAU * w1))
            .unwrap();
        let b = chi.poisson_bracket(&h).unwrap().value;
        let expected = FtSeries::zero(shape()).unwrap().with_cos(&[1, 0], &[0, 0], 1.0).unwrap();
        assert!(b.sub(&expected).unwrap().majorant_norm(0.0, 1.0).value < 1e-15);
        // chi has no action dependence, so the series stops after one bracket
        let out = lie_transform(&h, &chi, 5).unwrap();
        assert!(out.value.sub(&h.add(&expected).unwrap()).unwrap().majorant_norm(0.0, 1.0).value < 1e-15);
    }
}
