//! Symplectic integration of series Hamiltonians and the drift measurements of
//! effective stability.

mod integrator;
mod scan;
mod trajectory;

pub use integrator::{integrate, integrate_observed, Integrator, StepControl, IMPLICIT_TOL};
pub use scan::{
    apply_constants, fit_escape_times, freeze_constants, run_orbit, stability_scan, DriftConstants, HorizonRule,
    OrbitRecord, OrbitStart, ScanOptions, ScanSummary, StabilityReport,
};
pub use trajectory::{Trajectory, TrajectoryMeta, TRAJECTORY_MAGIC};

use crate::error::{Error, Result};
use crate::poly::PolyMap;
use crate::series::FtSeries;

/// `(d theta/dt, dI/dt) = (d_I H, -d_theta H)`.
pub fn vector_field(h: &FtSeries, theta: &[f64], action: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let d = h.d();
    if theta.len() != d || action.len() != d {
        return Err(Error::DimensionMismatch(d, theta.len().max(action.len())));
    }
    let ev = h.evaluator();
    ev.check_domain(action)?;
    let jet = ev.jet(theta, action);
    Ok((
        jet.d_action[..d].to_vec(),
        jet.d_theta[..d].iter().map(|v| -v).collect(),
    ))
}

/// Frequency of the normalized motion, `grad N(I0) + grad G(I0)`, at a point
/// given in normalized coordinates.
pub fn omega_of_i0(n: &FtSeries, g: &FtSeries, i0: &[f64]) -> Result<Vec<f64>> {
    let fn_ = PolyMap::gradient_of(n)?.eval(i0);
    let fg = PolyMap::gradient_of(g)?.eval(i0);
    Ok(fn_.iter().zip(&fg).map(|(a, b)| a + b).collect())
}

/// Bound on the row-sum norm of the Hessian of `H` over `|I|_inf <= r`,
/// real angles.
pub fn hessian_majorant(h: &FtSeries) -> f64 {
    use std::f64::consts::TAU;
    let d = h.d();
    let r = h.r();
    let mut rows = vec![0.0; 2 * d];
    for (idx, c) in h.iter() {
        let k = idx.k_vec(d);
        let a = idx.alpha_vec(d);
        let mag = c.norm();
        // |I^{alpha - beta}| <= r^{|alpha| - |beta|}
        let pw = |drop: u32| r.powi(a.iter().sum::<u32>() as i32 - drop as i32);
        for i in 0..d {
            for j in 0..d {
                // theta_i theta_j
                rows[i] += mag * TAU * TAU * (k[i] * k[j]).unsigned_abs() as f64 * pw(0);
                // theta_i I_j and I_j theta_i
                if a[j] > 0 {
                    let v = mag * TAU * k[i].unsigned_abs() as f64 * a[j] as f64 * pw(1);
                    rows[i] += v;
                    rows[d + j] += v;
                }
                // I_i I_j
                let coef = if i == j {
                    a[i] as f64 * (a[i] as f64 - 1.0)
                } else {
                    (a[i] * a[j]) as f64
                };
                if coef > 0.0 {
                    rows[d + i] += mag * coef * pw(2);
                }
            }
        }
    }
    rows.into_iter().fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::Shape;
    use std::f64::consts::TAU;

    const PHI: f64 = 0.618_033_988_749_894_9;

    fn zero() -> FtSeries {
        FtSeries::zero(Shape::new(2, 6, 4, 0.3, 0.5).unwrap()).unwrap()
    }

    #[test]
    fn vector_field_examples() {
        let h = zero().with_linear(&[1.0, PHI]).unwrap();
        let (dt, di) = vector_field(&h, &[0.3, 0.1], &[0.1, 0.2]).unwrap();
        assert_eq!(dt, vec![1.0, PHI]);
        assert_eq!(di, vec![0.0, 0.0]);
        let h = h.with_monomial(&[2, 0], 0.5).unwrap().with_monomial(&[0, 2], 0.5).unwrap();
        let (dt, di) = vector_field(&h, &[0.3, 0.1], &[0.1, 0.2]).unwrap();
        assert!((dt[0] - 1.1).abs() < 1e-15 && (dt[1] - PHI - 0.2).abs() < 1e-15);
        assert_eq!(di, vec![0.0, 0.0]);
    }

    #[test]
    fn vector_field_matches_finite_differences() {
        let eps = 0.05;
        let h = zero().with_cos(&[1, 0], &[2, 0], eps).unwrap();
        let (th, i) = ([0.17, 0.4], [0.2, 0.1]);
        let (_, di) = vector_field(&h, &th, &i).unwrap();
        let expected = TAU * eps * (TAU * th[0]).sin() * i[0] * i[0];
        assert!((di[0] - expected).abs() < 1e-15);
        let step = 1e-6;
        let fd = (h.evaluate(&[th[0] + step, th[1]], &i).unwrap()
            - h.evaluate(&[th[0] - step, th[1]], &i).unwrap())
            / (2.0 * step);
        assert!((di[0] + fd).abs() < 1e-6);
    }

    #[test]
    fn omega_of_i0_examples() {
        let n = zero()
            .with_linear(&[1.0, PHI])
            .unwrap()
            .with_monomial(&[2, 0], 0.5)
            .unwrap()
            .with_monomial(&[0, 2], 0.5)
            .unwrap();
        let g0 = zero();
        assert_eq!(omega_of_i0(&n, &g0, &[0.1, -0.2]).unwrap(), vec![1.1, PHI - 0.2]);
        let g = zero().with_linear(&[0.01, -0.02]).unwrap().with_monomial(&[1, 1], 3.0).unwrap();
        let w = omega_of_i0(&n, &g, &[0.0, 0.0]).unwrap();
        assert!((w[0] - 1.01).abs() < 1e-15 && (w[1] - (PHI - 0.02)).abs() < 1e-15);
    }

    #[test]
    fn hessian_majorant_of_twist() {
        let h = zero()
            .with_linear(&[1.0, PHI])
            .unwrap()
            .with_monomial(&[2, 0], 0.5)
            .unwrap()
            .with_monomial(&[0, 2], 0.5)
            .unwrap();
        assert!((hessian_majorant(&h) - 1.0).abs() < 1e-15);
    }
}
