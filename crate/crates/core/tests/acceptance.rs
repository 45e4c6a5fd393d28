//! Acceptance criteria, each run at its stated tolerance. Prints one PASS/FAIL
//! line per criterion and fails when any criterion fails.

mod common;

use std::time::{Duration, Instant};

use effstab::bundled::{self, GOLDEN};
use effstab::config::ExperimentConfig;
use effstab::diophantine::{dc_constant, DiophantineSpec};
use effstab::dioset::{bar_tau, complement_sweep, pyartli_measure, strip_area};
use effstab::flow::{integrate, run_orbit, Integrator, OrbitStart, ScanOptions};
use effstab::geometry::span_and_order;
use effstab::normal_form::{birkhoff_normalize, poschel_normalize, BirkhoffRun, PoschelOptions, StabilityBudget};
use effstab::pipeline::{Pipeline, Stage};
use effstab::poly::{Monomial, PolyMap};
use effstab::stats::linear_fit;
use proptest::test_runner::{Config, TestRunner};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

/// Twenty random Hamiltonians normalized to order 4 agree with the
/// term-by-term elimination oracle coefficient-wise.
fn bnf_oracle() -> Outcome {
    let omega = [1.0, GOLDEN];
    let k_max = 20;
    let gamma = 0.5 * dc_constant(&omega, 1.0, k_max).gamma_k;
    let dc = DiophantineSpec::new(omega.to_vec(), 1.0, gamma, k_max).unwrap();
    let mut worst = 0.0f64;
    for seed in 0..20 {
        let h = common::random_hamiltonian(seed);
        let res = birkhoff_normalize(&h, 4, &dc).unwrap();
        let got = common::to_dense(&res.normal.add(&res.remainder).unwrap());
        let want = common::birkhoff_oracle(&common::to_dense(&h), omega, 4, 5);
        assert!(want.keys().all(|k| k.0.abs() + k.1.abs() <= k_max as i32));
        worst = worst.max(common::max_difference(&got, &want));
    }
    outcome(worst <= 1e-10, format!("max coefficient difference {worst:.2e} (tol 1e-10)"))
}

fn least_term_sweep() -> (BirkhoffRun, Vec<f64>) {
    let b = bundled::by_name("least-term").unwrap();
    let cap = bundled::LEAST_TERM_ORDER_CAP;
    let run = BirkhoffRun::new(&b.hamiltonian, cap, &b.dc, cap + 1).unwrap();
    let radii = (0..9).map(|i| 10f64.powf(-1.0 - 0.25 * i as f64)).collect();
    (run, radii)
}

/// log(optimal remainder) is linear in `r^{-1/2}` with negative slope.
fn remainder_law(run: &BirkhoffRun, radii: &[f64]) -> Outcome {
    let mut x = Vec::new();
    let mut y = Vec::new();
    for &r in radii {
        let opt = run.optimal_at(r).unwrap();
        x.push(r.powf(-0.5));
        y.push(opt.result.remainder_norm.value.ln());
    }
    let fit = linear_fit(&x, &y).unwrap();
    outcome(
        fit.r_squared >= 0.95 && fit.slope < 0.0,
        format!("R^2 = {:.4} (>= 0.95), slope = {:.3} (< 0)", fit.r_squared, fit.slope),
    )
}

/// Every remainder-vs-order curve is unimodal and `m(r)` is non-increasing in
/// `r`, on the sweep and on random pairs of radii in `[1e-3, 1e-1]`.
fn least_term_shape(run: &BirkhoffRun, radii: &[f64]) -> Outcome {
    let mut orders = Vec::new();
    let mut unimodal = true;
    for &r in radii {
        let opt = run.optimal_at(r).unwrap();
        unimodal &= opt.profile.is_unimodal(1e-9);
        orders.push(opt.order);
    }
    // radii decrease along the sweep, so orders must not decrease
    let monotone = orders.windows(2).all(|w| w[1] >= w[0]);
    let mut runner = TestRunner::new(Config {
        cases: 48,
        failure_persistence: None,
        ..Config::default()
    });
    let property = runner.run(&(-3.0f64..-1.0, -3.0f64..-1.0), |(a, b)| {
        let (lo, hi) = (10f64.powf(a.min(b)), 10f64.powf(a.max(b)));
        let o_lo = run.optimal_at(lo).unwrap();
        let o_hi = run.optimal_at(hi).unwrap();
        proptest::prop_assert!(o_lo.profile.is_unimodal(1e-9) && o_hi.profile.is_unimodal(1e-9));
        proptest::prop_assert!(o_hi.order <= o_lo.order);
        Ok(())
    });
    outcome(
        unimodal && monotone && property.is_ok(),
        format!(
            "orders {orders:?}, unimodal = {unimodal}, monotone = {monotone}, random pairs {}",
            if property.is_ok() { "ok" } else { "FAILED" }
        ),
    )
}

/// The three canonical examples give `(l, m*) = (1,1), (2,2), (d,2)`.
fn geometry_branches() -> Outcome {
    let cases = [
        ("line3", bundled::line(3).unwrap(), (1, 1)),
        ("partial-square3", bundled::partial_square(3).unwrap(), (2, 2)),
        ("twist3", bundled::twist(3).unwrap(), (3, 2)),
        ("twist2", bundled::twist(2).unwrap(), (2, 2)),
    ];
    let mut ok = true;
    let mut found = Vec::new();
    for (name, h, want) in cases {
        let g = span_and_order(&h, 6, 1e-8).unwrap();
        ok &= (g.l, g.m_star as usize) == want;
        found.push(format!("{name}: ({}, {})", g.l, g.m_star));
    }
    outcome(ok, found.join(", "))
}

/// Complement fraction vs `gamma_bar` on the `l = 2`, `d = 3`, `m* = 2`
/// example: slope `1.0 +- 0.2` over four decades, intervals covering the fit.
fn measure_scaling() -> Outcome {
    let h = bundled::pipeline_l2(bundled::PIPELINE_EPS).unwrap();
    let dc = bundled::frequency_spec(3).unwrap();
    let r = 0.05;
    let res = birkhoff_normalize(&h, 6, &dc).unwrap();
    let geom = span_and_order(&res.normal, 6, 1e-8).unwrap();
    assert_eq!((geom.l, geom.m_star), (2, 2));
    let f = PolyMap::gradient_of(&res.normal).unwrap();
    // the general exponent leaves no resonant hits at a 20-mode cutoff
    let tau_bar = 2.0;
    assert!(tau_bar >= dc.tau && tau_bar <= bar_tau(geom.m_star, 3, dc.tau));
    let spec = DiophantineSpec::new(dc.omega.clone(), tau_bar, 1e-3, 20).unwrap();
    let gammas: Vec<f64> = (0..9).map(|i| 10f64.powf(-5.0 + 0.5 * i as f64)).collect();
    let sweep = complement_sweep(&f, r, &spec, &gammas, geom.m_star, 100_000, 11).unwrap();
    let Some(fit) = sweep.fit.clone() else {
        return outcome(false, "no complement hits, nothing to fit".into());
    };
    let covered = sweep.intervals_cover_fit();
    outcome(
        (fit.slope - 1.0).abs() <= 0.2 && covered,
        format!(
            "slope {:.4} +- {:.4} over gamma_bar 1e-5..1e-1 (tau_bar = {tau_bar}), CIs cover fit = {covered}",
            fit.slope, fit.slope_se
        ),
    )
}

/// Sublevel sets of `I_1` and `I_1^2` match strip areas to 5% and scale like
/// `eps^{1/n}` with exponent within 15%.
fn sublevel_measures() -> Outcome {
    let r = 0.5;
    let d = 2;
    let mut ok = true;
    let mut notes = Vec::new();
    let cases: [(u32, f64, Vec<f64>); 2] = [
        (1, 1.0, vec![0.01, 0.02, 0.05, 0.1, 0.2]),
        (2, 2.0, vec![1e-4, 4e-4, 1e-3, 4e-3, 1e-2, 4e-2]),
    ];
    for (n, beta, eps) in cases {
        let mut alpha = vec![0; d];
        alpha[0] = n;
        let g = PolyMap::scalar(d, vec![Monomial { alpha, c: 1.0 }]);
        let mut worst = 0.0f64;
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for &e in &eps {
            let s = pyartli_measure(&g, n, beta, e, r, 400_000, 3).unwrap();
            let exact = strip_area(e.powf(1.0 / n as f64), 2.0 * r);
            worst = worst.max((s.measured / exact - 1.0).abs());
            xs.push(e.ln());
            ys.push(s.measured.ln());
        }
        let slope = linear_fit(&xs, &ys).unwrap().slope;
        let expected = 1.0 / n as f64;
        let exp_ok = (slope / expected - 1.0).abs() <= 0.15;
        ok &= worst <= 0.05 && exp_ok;
        notes.push(format!("n={n}: worst area error {:.2}%, exponent {slope:.3} vs {expected}", 100.0 * worst));
    }
    outcome(ok, notes.join("; "))
}

/// Certified second-normalization remainder below `C mu exp(-1/nu)` with `C`
/// fitted at the largest `mu` and frozen.
fn remainder_law_second_stage() -> Outcome {
    let dc = bundled::frequency_spec(2).unwrap();
    let tau_bar = 2.0;
    let mut ratios = Vec::new();
    for e in 3..=8 {
        let mu = 10f64.powi(-e);
        let budget = StabilityBudget::new(1.0, tau_bar, mu, 1.0).unwrap();
        let spec = DiophantineSpec::new(dc.omega.clone(), tau_bar, budget.gamma_bar, 40).unwrap();
        let h = bundled::poschel_test(mu).unwrap();
        let rep = poschel_normalize(&h, &[0.0, 0.0], &spec, &budget, PoschelOptions::default()).unwrap();
        ratios.push((mu, rep.result.remainder_norm.value, budget.remainder_scale()));
    }
    let c_bar = ratios[0].1 / ratios[0].2;
    let ok = ratios.iter().all(|&(_, rem, scale)| rem <= c_bar * scale);
    let worst = ratios.iter().map(|&(_, rem, scale)| rem / (c_bar * scale)).fold(0.0, f64::max);
    outcome(
        ok,
        format!("C_bar = {c_bar:.3e} fitted at mu = 1e-3; worst |R| / (C_bar mu e^(-1/nu)) = {worst:.3e}"),
    )
}

/// Certified-set orbits obey one frozen `C` at three radii over 1e7 steps;
/// at least 10% of contrast orbits at resonant actions exceed `C r^2`.
fn stability_scan() -> Outcome {
    let mut cfg = ExperimentConfig::bundled("near-integrable");
    cfg.radii = vec![0.06, 0.045, 0.03];
    cfg.m_cap = 12;
    cfg.tau_bar = Some(2.0);
    cfg.mode_cutoff_bar = 20;
    cfg.seed = 7;
    cfg.stability.n_orbits = 3;
    cfg.stability.steps = 10_000_000;
    cfg.stability.dt = 1e-3;
    cfg.stability.margin = 2.0;
    let p = Pipeline::new(&cfg).unwrap();
    let (_, results) = p.bnf().unwrap();
    let geom = p.geometry(results.last().unwrap()).unwrap();
    let scan = p.stability(&results, &geom).unwrap();
    let consts = scan.constants.unwrap();
    // one constant for both bounds
    let c = consts.c_action.max(consts.c_angle);
    let mut certified_ok = true;
    let mut notes = Vec::new();
    for rep in &scan.reports {
        let r = rep.r;
        let drift = rep.summary.worst_action_drift;
        let dev = rep.summary.worst_angle_dev;
        let escaped = rep.orbits.iter().any(|o| o.domain_exit.is_some() || o.first_exceedance(c * r * r).is_some());
        certified_ok &= drift <= c * r * r && dev <= c * r && !escaped;
        notes.push(format!("r={r}: drift/r^2 {:.3}, dev/r {:.3}", drift / (r * r), dev / r));
    }

    let h = bundled::resonant_contrast(bundled::NEAR_INTEGRABLE_EPS, bundled::CONTRAST_EPS).unwrap();
    let integ = Integrator::new(&h, 1e-3).unwrap();
    let k = bundled::CONTRAST_MODE;
    let kk = (k[0] * k[0] + k[1] * k[1]) as f64;
    // the resonant line k.(omega + I) = 0: foot point and unit direction
    let off = -(k[0] as f64 + k[1] as f64 * GOLDEN) / kk;
    let foot = [off * k[0] as f64, off * k[1] as f64];
    let dir = [k[1] as f64 / kk.sqrt(), -(k[0] as f64) / kk.sqrt()];
    let mut total = 0;
    let mut exceeded = 0;
    for rep in &scan.reports {
        let r = rep.r;
        let lim = c * r * r;
        for i in 0..10 {
            let s = (i as f64 / 9.0 - 0.5) * 1.2 * r;
            let action0 = vec![foot[0] + s * dir[0], foot[1] + s * dir[1]];
            if action0[0].hypot(action0[1]) > r {
                continue;
            }
            let start = OrbitStart {
                theta0: vec![(0.37 * i as f64).fract(), (0.61 * i as f64).fract()],
                omega: vec![1.0 + action0[0], GOLDEN + action0[1]],
                action0,
            };
            let rec = run_orbit(&integ, &start, 10_000_000, &ScanOptions::default(), Some(lim)).unwrap();
            total += 1;
            exceeded += (rec.max_action_drift > lim || rec.domain_exit.is_some()) as usize;
        }
    }
    let frac = exceeded as f64 / total as f64;
    outcome(
        certified_ok && frac >= 0.1,
        format!(
            "C = {c:.3} frozen at r = {}; {}; contrast orbits exceeding C r^2: {exceeded}/{total}",
            consts.fitted_at,
            notes.join(", ")
        ),
    )
}

/// Relative energy error below 1e-8 over 1e6 steps for every bundled
/// Hamiltonian, and second-order convergence under step halving.
fn integrator_health() -> Outcome {
    let mut worst = (0.0f64, String::new());
    for &name in bundled::NAMES {
        let h = bundled::by_name(name).unwrap().hamiltonian;
        let d = h.d();
        let dt = Integrator::max_step(&h).min(1e-3);
        let action0: Vec<f64> = (0..d).map(|j| 0.02 + 0.005 * j as f64).collect();
        let theta0: Vec<f64> = (0..d).map(|j| 0.1 * j as f64).collect();
        let traj = integrate(&h, &theta0, &action0, dt, 1_000_000, 10_000).unwrap();
        if traj.meta.relative_energy_error > worst.0 {
            worst = (traj.meta.relative_energy_error, name.to_string());
        }
    }
    // final-state error against a fine reference for dt, dt/2, dt/4
    let h = bundled::pendulum(bundled::PENDULUM_EPS).unwrap();
    let base = Integrator::max_step(&h);
    let (theta0, action0) = ([0.1, 0.2], [0.1, 0.05]);
    let steps = 2000u64;
    let final_state = |div: u64| -> Vec<f64> {
        let tr = integrate(&h, &theta0, &action0, base / div as f64, steps * div, steps * div).unwrap();
        let n = tr.t.len() - 1;
        tr.theta.iter().chain(&tr.action).map(|c| c[n]).collect()
    };
    let reference = final_state(64);
    let err = |div: u64| -> f64 {
        final_state(div)
            .iter()
            .zip(&reference)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    };
    let (e1, e2, e4) = (err(1), err(2), err(4));
    let (q1, q2) = (e1 / e2, e2 / e4);
    let order_ok = (3.5..=4.5).contains(&q1) && (3.5..=4.5).contains(&q2);
    outcome(
        worst.0 <= 1e-8 && order_ok,
        format!(
            "worst relative energy error {:.2e} ({}); error ratios under halving {q1:.3}, {q2:.3}",
            worst.0, worst.1
        ),
    )
}

/// Two pipeline runs with the same config, seed and one thread produce
/// byte-identical artifacts.
fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut ok = true;
    let mut notes = Vec::new();
    for name in ["pipeline-l2", "near-integrable", "line3"] {
        let mut cfg = ExperimentConfig::bundled(name);
        cfg.m_cap = 8;
        cfg.n_samples = 20_000;
        cfg.threads = 1;
        cfg.seed = 5;
        cfg.stability.n_orbits = 2;
        cfg.stability.steps = 20_000;
        let run = |sub: &str| -> Vec<(String, Vec<u8>)> {
            let out = dir.path().join(format!("{name}-{sub}"));
            let m = Pipeline::new(&cfg).unwrap().execute(Stage::Stability, &out).unwrap();
            m.artifacts
                .iter()
                .map(|a| (a.sha256.clone(), std::fs::read(out.join(&a.file)).unwrap()))
                .collect()
        };
        let (a, b) = (run("a"), run("b"));
        let same = a == b;
        ok &= same && a.len() == 5;
        notes.push(format!("{name}: {} artifacts identical = {same}", a.len()));
    }
    outcome(ok, notes.join(", "))
}

fn report(n: usize, name: &str, limit: Duration, f: impl FnOnce() -> Outcome) -> bool {
    let t = Instant::now();
    let out = f();
    let elapsed = t.elapsed();
    let in_time = elapsed <= limit;
    let pass = out.pass && in_time;
    println!(
        "criterion {n:>2} {name}: {} | {} | {:.1}s (limit {}s)",
        if pass { "PASS" } else { "FAIL" },
        out.detail,
        elapsed.as_secs_f64(),
        limit.as_secs()
    );
    pass
}

fn main() {
    let min = |m: u64| Duration::from_secs(60 * m);
    let mut all = true;
    all &= report(1, "BNF oracle equivalence", min(1), bnf_oracle);
    let t = Instant::now();
    let (run, radii) = least_term_sweep();
    let setup = t.elapsed();
    all &= report(2, "exponential remainder law", min(10) - setup, || remainder_law(&run, &radii));
    all &= report(3, "least-term behavior", min(5) - setup, || least_term_shape(&run, &radii));
    all &= report(4, "geometry branch detection", min(1), geometry_branches);
    all &= report(5, "Diophantine-measure scaling", min(15), measure_scaling);
    all &= report(6, "sublevel-set bound", min(5), sublevel_measures);
    all &= report(7, "second-stage remainder law", min(10), remainder_law_second_stage);
    all &= report(8, "stability scan", min(60), stability_scan);
    all &= report(9, "integrator health", min(10), integrator_health);
    all &= report(10, "determinism", min(10), determinism);
    if !all {
        eprintln!("acceptance: at least one criterion failed");
        std::process::exit(1);
    }
}
