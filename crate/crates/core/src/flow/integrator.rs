//! Implicit midpoint rule with fixed-point iteration.

use crate::error::{Error, Result};
use crate::series::{FtSeries, SeriesEvaluator, MAX_DIM};

use super::hessian_majorant;
use super::trajectory::{Trajectory, TrajectoryMeta};

/// Per-step tolerance on the fixed-point increment.
pub const IMPLICIT_TOL: f64 = 1e-13;
const MAX_ITER: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StepControl {
    Continue,
    Stop,
}

/// State with angles split into a fractional part in `[0, 1)` (used for
/// evaluation) and an integer winding count, so unwrapped angles keep full
/// precision over long runs.
#[derive(Clone, Copy, Debug)]
struct State {
    frac: [f64; MAX_DIM],
    wind: [f64; MAX_DIM],
    action: [f64; MAX_DIM],
}

impl State {
    fn new(theta: &[f64], action: &[f64]) -> Self {
        let mut s = State {
            frac: [0.0; MAX_DIM],
            wind: [0.0; MAX_DIM],
            action: [0.0; MAX_DIM],
        };
        for j in 0..theta.len() {
            s.wind[j] = theta[j].floor();
            s.frac[j] = theta[j] - s.wind[j];
            s.action[j] = action[j];
        }
        s
    }

    fn theta(&self, d: usize) -> [f64; MAX_DIM] {
        let mut t = [0.0; MAX_DIM];
        for j in 0..d {
            t[j] = self.wind[j] + self.frac[j];
        }
        t
    }
}

#[derive(Clone, Debug)]
pub struct Integrator {
    ev: SeriesEvaluator,
    d: usize,
    dt: f64,
}

impl Integrator {
    /// Requires `0 < dt <= 1e-2 / M` with `M` a majorant of the Hessian on the
    /// action domain.
    pub fn new(h: &FtSeries, dt: f64) -> Result<Self> {
        let m = hessian_majorant(h);
        if !(dt > 0.0) || dt * m > 1e-2 * (1.0 + 1e-12) {
            return Err(Error::Config(format!(
                "step dt = {dt} must be positive and at most 1e-2 / {m:.4e}"
            )));
        }
        Ok(Integrator {
            ev: h.evaluator(),
            d: h.d(),
            dt,
        })
    }

    /// Largest admissible step for `h`.
    pub fn max_step(h: &FtSeries) -> f64 {
        let m = hessian_majorant(h);
        if m > 0.0 {
            1e-2 / m
        } else {
            f64::INFINITY
        }
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn energy(&self, theta: &[f64], action: &[f64]) -> f64 {
        self.ev.value(theta, action)
    }

    fn field(&self, frac: &[f64; MAX_DIM], action: &[f64; MAX_DIM], out: &mut [f64; 2 * MAX_DIM]) -> Result<()> {
        self.ev.check_domain(&action[..self.d])?;
        let jet = self.ev.jet(&frac[..self.d], &action[..self.d]);
        for j in 0..self.d {
            out[j] = jet.d_action[j];
            out[self.d + j] = -jet.d_theta[j];
        }
        Ok(())
    }

    /// One implicit midpoint step; returns the number of fixed-point
    /// iterations.
    fn step(&self, s: &mut State) -> Result<usize> {
        let d = self.d;
        let mut f = [0.0; 2 * MAX_DIM];
        self.field(&s.frac, &s.action, &mut f)?;
        let mut inc = [0.0; 2 * MAX_DIM];
        for i in 0..2 * d {
            inc[i] = self.dt * f[i];
        }
        let mut mid_t = [0.0; MAX_DIM];
        let mut mid_i = [0.0; MAX_DIM];
        let mut residual = f64::INFINITY;
        for it in 1..=MAX_ITER {
            for j in 0..d {
                mid_t[j] = s.frac[j] + 0.5 * inc[j];
                mid_i[j] = s.action[j] + 0.5 * inc[d + j];
            }
            self.field(&mid_t, &mid_i, &mut f)?;
            residual = 0.0;
            for i in 0..2 * d {
                let next = self.dt * f[i];
                residual = residual.max((next - inc[i]).abs());
                inc[i] = next;
            }
            if residual <= IMPLICIT_TOL {
                for j in 0..d {
                    let t = s.frac[j] + inc[j];
                    let w = t.floor();
                    s.frac[j] = t - w;
                    s.wind[j] += w;
                    s.action[j] += inc[d + j];
                }
                self.ev.check_domain(&s.action[..d])?;
                return Ok(it);
            }
        }
        Err(Error::NoConvergence {
            iterations: MAX_ITER,
            residual,
        })
    }
}

/// Outcome of an observed integration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RunOutcome {
    pub steps_taken: u64,
    /// Step at which the orbit left the action domain.
    pub escape_step: Option<u64>,
    pub max_iterations: usize,
}

/// Integrates `n_steps` steps, calling `observe(step, t, theta, I)` at the
/// start and after every step with unwrapped angles. Leaving the action domain
/// ends the run and is reported as an escape, not an error.
pub fn integrate_observed<F>(
    integrator: &Integrator,
    theta0: &[f64],
    action0: &[f64],
    n_steps: u64,
    mut observe: F,
) -> Result<RunOutcome>
where
    F: FnMut(u64, f64, &[f64], &[f64]) -> StepControl,
{
    let d = integrator.d;
    if theta0.len() != d || action0.len() != d {
        return Err(Error::DimensionMismatch(d, theta0.len().max(action0.len())));
    }
    integrator.ev.check_domain(action0)?;
    let mut s = State::new(theta0, action0);
    let mut out = RunOutcome {
        steps_taken: 0,
        escape_step: None,
        max_iterations: 0,
    };
    if observe(0, 0.0, &s.theta(d)[..d], &s.action[..d]) == StepControl::Stop {
        return Ok(out);
    }
    for n in 1..=n_steps {
        match integrator.step(&mut s) {
            Ok(it) => out.max_iterations = out.max_iterations.max(it),
            Err(Error::OutsideDomain { .. }) => {
                out.escape_step = Some(n);
                return Ok(out);
            }
            Err(e) => return Err(e),
        }
        out.steps_taken = n;
        let t = n as f64 * integrator.dt;
        if observe(n, t, &s.theta(d)[..d], &s.action[..d]) == StepControl::Stop {
            break;
        }
    }
    Ok(out)
}

/// Integrates and records every `stride`-th state (and the last one) with its
/// energy.
pub fn integrate(
    h: &FtSeries,
    theta0: &[f64],
    action0: &[f64],
    dt: f64,
    n_steps: u64,
    stride: u64,
) -> Result<Trajectory> {
    let integ = Integrator::new(h, dt)?;
    let d = h.d();
    let stride = stride.max(1);
    let mut traj = Trajectory::empty(d);
    let mut last = (0u64, 0.0, vec![0.0; d], vec![0.0; d]);
    let mut theta_frac = vec![0.0; d];
    let outcome = integrate_observed(&integ, theta0, action0, n_steps, |n, t, th, ac| {
        if n % stride == 0 {
            for j in 0..d {
                theta_frac[j] = th[j] - th[j].floor();
            }
            traj.push(t, th, ac, integ.energy(&theta_frac, ac));
        }
        last = (n, t, th.to_vec(), ac.to_vec());
        StepControl::Continue
    })?;
    if last.0 % stride != 0 {
        let th: Vec<f64> = last.2.iter().map(|v| v - v.floor()).collect();
        let e = integ.energy(&th, &last.3);
        traj.push(last.1, &last.2, &last.3, e);
    }
    let e0 = traj.energy.first().copied().unwrap_or(0.0);
    let max_err = traj.energy.iter().fold(0.0f64, |m, e| m.max((e - e0).abs()));
    traj.meta = TrajectoryMeta {
        d,
        dt,
        stride,
        n_rows: traj.t.len() as u64,
        columns: Trajectory::column_names(d),
        steps_taken: outcome.steps_taken,
        escape_step: outcome.escape_step,
        max_energy_error: max_err,
        relative_energy_error: if e0 != 0.0 { max_err / e0.abs() } else { max_err },
        max_iterations: outcome.max_iterations,
    };
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::Shape;

    const PHI: f64 = 0.618_033_988_749_894_9;

    fn zero() -> FtSeries {
        FtSeries::zero(Shape::new(2, 6, 4, 0.3, 0.5).unwrap()).unwrap()
    }

    #[test]
    fn linear_flow_is_exact() {
        let h = zero().with_linear(&[1.0, PHI]).unwrap();
        let traj = integrate(&h, &[0.2, 0.9], &[0.01, 0.02], 0.01, 1000, 100).unwrap();
        let t_end = *traj.t.last().unwrap();
        assert!((t_end - 10.0).abs() < 1e-12);
        assert!((traj.theta[0].last().unwrap() - (0.2 + t_end)).abs() < 1e-12);
        assert!((traj.theta[1].last().unwrap() - (0.9 + t_end * PHI)).abs() < 1e-12);
        assert_eq!(traj.action[0].last(), Some(&0.01));
    }

    #[test]
    fn twist_flow_keeps_actions() {
        let h = zero()
            .with_linear(&[1.0, PHI])
            .unwrap()
            .with_monomial(&[2, 0], 0.5)
            .unwrap()
            .with_monomial(&[0, 2], 0.5)
            .unwrap();
        let a0 = [0.05, -0.03];
        let traj = integrate(&h, &[0.0, 0.0], &a0, 0.01, 2000, 500).unwrap();
        let t_end = *traj.t.last().unwrap();
        assert!((traj.theta[0].last().unwrap() - t_end * 1.05).abs() < 1e-10);
        assert!((traj.theta[1].last().unwrap() - t_end * (PHI - 0.03)).abs() < 1e-10);
        assert_eq!(traj.action[1].last(), Some(&-0.03));
    }

    #[test]
    fn step_size_precondition() {
        let h = zero().with_monomial(&[2, 0], 0.5).unwrap();
        assert!(matches!(Integrator::new(&h, 0.5), Err(Error::Config(_))));
        assert!(Integrator::new(&h, 0.01).is_ok());
    }

    #[test]
    fn escape_is_recorded_not_failed() {
        // dI_1/dt = -d_theta H = 2 pi a sin(2 pi theta_1): pushes I_1 out
        let h = zero().with_cos(&[1, 0], &[0, 0], 1e-3).unwrap();
        let traj = integrate(&h, &[0.25, 0.0], &[0.29, 0.0], 0.01, 100_000, 1000).unwrap();
        assert!(traj.meta.escape_step.is_some());
    }
}
