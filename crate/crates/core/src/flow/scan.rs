//! Drift of actions and angles along many orbits and radii.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::normal_form::StabilityBudget;
use crate::series::FtSeries;
use crate::stats::{linear_fit, median, LineFit};

use super::integrator::{integrate_observed, Integrator, StepControl};

/// Initial condition with the frequency against which angle deviation is
/// measured.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrbitStart {
    pub theta0: Vec<f64>,
    #[serde(rename = "I0")]
    pub action0: Vec<f64>,
    #[serde(rename = "omega_I0")]
    pub omega: Vec<f64>,
}

/// `min(exp(c_hat r^{-a}) / dt, max_steps)` steps.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HorizonRule {
    pub c_hat: f64,
    pub a: f64,
    pub max_steps: u64,
}

impl HorizonRule {
    /// Always the cap; every run is flagged as horizon-limited.
    pub fn fixed(max_steps: u64) -> Self {
        HorizonRule {
            c_hat: f64::INFINITY,
            a: 1.0,
            max_steps,
        }
    }

    /// Steps to take and whether the cap cut the rule short.
    pub fn steps(&self, r: f64, dt: f64) -> (u64, bool) {
        let wanted = (self.c_hat * r.powf(-self.a)).exp() / dt;
        if !(wanted < self.max_steps as f64) {
            (self.max_steps, true)
        } else {
            (wanted.ceil().max(1.0) as u64, false)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanOptions {
    pub dt: f64,
    /// A new point of the running-maximum drift profile is stored whenever the
    /// drift grows by this factor.
    pub record_growth: f64,
}

impl Default for ScanOptions {
    fn default() -> Self {
        ScanOptions {
            dt: 1e-3,
            record_growth: 1.001,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrbitRecord {
    #[serde(flatten)]
    pub start: OrbitStart,
    /// `sup |I(t) - I0|_inf` and `sup |theta(t) - theta0 - t omega(I0)|_inf`.
    pub max_action_drift: f64,
    pub max_angle_dev: f64,
    /// First time the drift exceeds `C r^2` for the frozen `C` (`None` when it
    /// never does within the horizon).
    pub escape_time: Option<f64>,
    /// Time actually integrated.
    pub horizon: f64,
    pub steps: u64,
    /// Time at which the orbit left the action domain.
    pub domain_exit: Option<f64>,
    /// Running maximum of the action drift as `(t, drift)` records.
    pub drift_profile: Vec<(f64, f64)>,
}

impl OrbitRecord {
    /// First recorded time with drift above `threshold`.
    pub fn first_exceedance(&self, threshold: f64) -> Option<f64> {
        self.drift_profile
            .iter()
            .find(|(_, v)| *v > threshold)
            .map(|(t, _)| *t)
            .or(self.domain_exit)
    }
}

/// Integrates one orbit for `n_steps`, stopping early once the drift exceeds
/// `stop_above` when given.
pub fn run_orbit(
    integ: &Integrator,
    start: &OrbitStart,
    n_steps: u64,
    opts: &ScanOptions,
    stop_above: Option<f64>,
) -> Result<OrbitRecord> {
    let d = start.theta0.len();
    if start.action0.len() != d || start.omega.len() != d {
        return Err(Error::DimensionMismatch(d, start.action0.len().max(start.omega.len())));
    }
    let mut drift = 0.0f64;
    let mut dev = 0.0f64;
    let mut last_record = 0.0f64;
    let mut profile = vec![(0.0, 0.0)];
    let out = integrate_observed(integ, &start.theta0, &start.action0, n_steps, |_, t, th, ac| {
        let mut dr = 0.0f64;
        let mut dv = 0.0f64;
        for j in 0..d {
            dr = dr.max((ac[j] - start.action0[j]).abs());
            dv = dv.max((th[j] - start.theta0[j] - t * start.omega[j]).abs());
        }
        dev = dev.max(dv);
        if dr > drift {
            drift = dr;
            if drift > last_record * opts.record_growth {
                profile.push((t, drift));
                last_record = drift;
            }
        }
        match stop_above {
            Some(lim) if drift > lim => StepControl::Stop,
            _ => StepControl::Continue,
        }
    })?;
    let horizon = out.steps_taken as f64 * integ.dt();
    if profile.last().map(|p| p.1) != Some(drift) {
        profile.push((horizon, drift));
    }
    Ok(OrbitRecord {
        start: start.clone(),
        max_action_drift: drift,
        max_angle_dev: dev,
        escape_time: None,
        horizon,
        steps: out.steps_taken,
        domain_exit: out.escape_step.map(|n| n as f64 * integ.dt()),
        drift_profile: profile,
    })
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ScanSummary {
    pub n_orbits: usize,
    pub median_action_drift: f64,
    pub worst_action_drift: f64,
    pub median_angle_dev: f64,
    pub worst_angle_dev: f64,
    pub n_escaped: usize,
    pub median_escape_time: Option<f64>,
    /// Every orbit satisfies `drift <= C r^2` and `angle deviation <= C r` for
    /// the frozen constants (unset before freezing).
    pub within_bounds: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub r: f64,
    pub orbits: Vec<OrbitRecord>,
    pub summary: ScanSummary,
    pub horizon_steps: u64,
    /// The horizon rule asked for more steps than the cap allows.
    pub horizon_limited: bool,
    pub budget: Option<StabilityBudget>,
}

impl StabilityReport {
    fn summarize(&mut self) {
        let drifts: Vec<f64> = self.orbits.iter().map(|o| o.max_action_drift).collect();
        let devs: Vec<f64> = self.orbits.iter().map(|o| o.max_angle_dev).collect();
        let escapes: Vec<f64> = self.orbits.iter().filter_map(|o| o.escape_time).collect();
        let n = self.orbits.len();
        self.summary.n_orbits = n;
        self.summary.median_action_drift = median(&drifts);
        self.summary.worst_action_drift = drifts.iter().copied().fold(0.0, f64::max);
        self.summary.median_angle_dev = median(&devs);
        self.summary.worst_angle_dev = devs.iter().copied().fold(0.0, f64::max);
        self.summary.n_escaped = escapes.len();
        // the median escape time is finite only if at least half escaped
        self.summary.median_escape_time = if n > 0 && 2 * escapes.len() >= n {
            let mut all: Vec<f64> = self
                .orbits
                .iter()
                .map(|o| o.escape_time.unwrap_or(f64::INFINITY))
                .collect();
            all.sort_by(f64::total_cmp);
            Some(all[(n - 1) / 2])
        } else {
            None
        };
    }
}

/// Integrates `n_orbits` orbits per radius from starts proposed by
/// `sample(r, seed, index)` (returning `None` rejects a proposal). Orbits run
/// in parallel and are merged by index.
pub fn stability_scan<S>(
    h: &FtSeries,
    radii: &[f64],
    n_orbits: usize,
    rule: &HorizonRule,
    seed: u64,
    sample: S,
    opts: &ScanOptions,
) -> Result<Vec<StabilityReport>>
where
    S: Fn(f64, u64, u64) -> Result<Option<OrbitStart>> + Sync,
{
    if radii.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Config("radii must be strictly decreasing".into()));
    }
    let integ = Integrator::new(h, opts.dt)?;
    let mut reports = Vec::new();
    for &r in radii {
        let mut starts = Vec::new();
        let max_attempts = 1000 * n_orbits as u64 + 1000;
        let mut idx = 0u64;
        while starts.len() < n_orbits && idx < max_attempts {
            if let Some(s) = sample(r, seed, idx)? {
                starts.push(s);
            }
            idx += 1;
        }
        if starts.len() < n_orbits {
            return Err(Error::Hypothesis(format!(
                "only {} of {n_orbits} initial conditions accepted at r = {r}",
                starts.len()
            )));
        }
        let (steps, limited) = rule.steps(r, opts.dt);
        let orbits = starts
            .par_iter()
            .map(|s| run_orbit(&integ, s, steps, opts, None))
            .collect::<Result<Vec<_>>>()?;
        let mut rep = StabilityReport {
            r,
            orbits,
            summary: ScanSummary::default(),
            horizon_steps: steps,
            horizon_limited: limited,
            budget: None,
        };
        rep.summarize();
        reports.push(rep);
    }
    Ok(reports)
}

/// Drift constants fitted at one radius and then held fixed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriftConstants {
    pub c_action: f64,
    pub c_angle: f64,
    pub fitted_at: f64,
    pub margin: f64,
}

/// Fits `C_action = margin max drift / r^2` and `C_angle = margin max dev / r`
/// at the largest radius, then sets escape times and bound flags on every
/// report with those constants.
pub fn freeze_constants(reports: &mut [StabilityReport], margin: f64) -> Option<DriftConstants> {
    let top = reports
        .iter()
        .max_by(|a, b| a.r.total_cmp(&b.r))
        .filter(|rep| !rep.orbits.is_empty())?;
    let r = top.r;
    let c_action = margin
        * top
            .orbits
            .iter()
            .map(|o| o.max_action_drift / (r * r))
            .fold(0.0, f64::max);
    let c_angle = margin * top.orbits.iter().map(|o| o.max_angle_dev / r).fold(0.0, f64::max);
    let consts = DriftConstants {
        c_action,
        c_angle,
        fitted_at: r,
        margin,
    };
    for rep in reports.iter_mut() {
        apply_constants(rep, &consts);
    }
    Some(consts)
}

pub fn apply_constants(rep: &mut StabilityReport, consts: &DriftConstants) {
    let r = rep.r;
    let lim = consts.c_action * r * r;
    let mut ok = true;
    for o in rep.orbits.iter_mut() {
        o.escape_time = o.first_exceedance(lim);
        ok &= o.escape_time.is_none() && o.max_angle_dev <= consts.c_angle * r;
    }
    rep.summarize();
    rep.summary.within_bounds = Some(ok);
}

/// Fits `log(median escape time)` against `r^{-a}` over the radii where the
/// median is finite.
pub fn fit_escape_times(reports: &[StabilityReport], a: f64) -> Option<LineFit> {
    let (x, y): (Vec<f64>, Vec<f64>) = reports
        .iter()
        .filter_map(|rep| rep.summary.median_escape_time.filter(|t| t.is_finite() && *t > 0.0).map(|t| (rep.r.powf(-a), t.ln())))
        .unzip();
    linear_fit(&x, &y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dioset::sample_ball;
    use crate::series::Shape;

    const PHI: f64 = 0.618_033_988_749_894_9;

    #[test]
    fn integrable_orbits_do_not_drift() {
        let h = FtSeries::zero(Shape::new(2, 4, 2, 0.3, 0.5).unwrap())
            .unwrap()
            .with_linear(&[1.0, PHI])
            .unwrap()
            .with_monomial(&[2, 0], 0.5)
            .unwrap()
            .with_monomial(&[0, 2], 0.5)
            .unwrap();
        let sample = |r: f64, seed: u64, i: u64| -> Result<Option<OrbitStart>> {
            let x = sample_ball(seed, i, 2, r);
            Ok(Some(OrbitStart {
                theta0: vec![0.1, 0.2],
                action0: x[..2].to_vec(),
                omega: vec![1.0 + x[0], PHI + x[1]],
            }))
        };
        let opts = ScanOptions { dt: 0.01, ..Default::default() };
        let run = || stability_scan(&h, &[0.1, 0.05], 4, &HorizonRule::fixed(5000), 3, sample, &opts).unwrap();
        let mut reps = run();
        for rep in &reps {
            assert!(rep.horizon_limited);
            for o in &rep.orbits {
                assert_eq!(o.max_action_drift, 0.0);
                assert!(o.max_angle_dev < 1e-10);
            }
        }
        assert_eq!(reps, run());
        let c = freeze_constants(&mut reps, 2.0).unwrap();
        assert_eq!(c.fitted_at, 0.1);
        assert!(reps.iter().all(|r| r.summary.n_escaped == 0));
    }

    #[test]
    fn horizon_rule() {
        let rule = HorizonRule {
            c_hat: 0.1,
            a: 0.5,
            max_steps: 1_000_000,
        };
        let (s, lim) = rule.steps(0.25, 0.01);
        assert_eq!(s, ((0.2f64).exp() / 0.01).ceil() as u64);
        assert!(!lim);
        assert!(rule.steps(1e-6, 0.01).1);
    }
}
