//! Invariants of the series algebra, the Diophantine machinery and the
//! serialized formats.

mod common;

use effstab::config::ExperimentConfig;
use effstab::diophantine::dc_constant;
use effstab::dioset::sample_ball;
use effstab::flow::Trajectory;
use effstab::normal_form::StabilityBudget;
use effstab::{FtSeries, Shape};
use proptest::prelude::*;

const MODES: [[i32; 2]; 5] = [[0, 0], [1, 0], [0, 1], [1, 1], [1, -1]];

/// `(mode, first exponent, degree, coefficient, kind)` with degrees up to 3 and
/// `|k|_1 <= 2`, so brackets and products fit the shape without truncation.
fn term() -> impl Strategy<Value = (usize, u32, u32, f64, u8)> {
    (0..MODES.len(), 0u32..=3, 1u32..=3, -1.0f64..1.0, 0u8..3)
}

fn build(terms: &[(usize, u32, u32, f64, u8)]) -> FtSeries {
    let shape = Shape::new(2, 6, 4, 0.2, 0.2).unwrap();
    let mut h = FtSeries::zero(shape).unwrap();
    for &(m, a1, deg, c, kind) in terms {
        let a1 = a1.min(deg);
        let alpha = [a1, deg - a1];
        let k = MODES[m];
        h = if k == [0, 0] || kind == 0 {
            h.with_monomial(&alpha, c).unwrap()
        } else if kind == 1 {
            h.with_cos(&k, &alpha, c).unwrap()
        } else {
            h.with_sin(&k, &alpha, c).unwrap()
        };
    }
    h
}

fn series() -> impl Strategy<Value = FtSeries> {
    prop::collection::vec(term(), 0..6).prop_map(|t| build(&t))
}

fn dense_norm(a: &common::Dense) -> f64 {
    a.values().fold(0.0, |m, c| m.max(c.norm()))
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn bracket_matches_dense_oracle(f in series(), g in series()) {
        let got = f.poisson_bracket(&g).unwrap();
        prop_assert!(got.loss.is_empty());
        let want = common::bracket(&common::to_dense(&f), &common::to_dense(&g), 10);
        let diff = common::max_difference(&common::to_dense(&got.value), &want);
        prop_assert!(diff <= 1e-12 * (1.0 + dense_norm(&want)));
    }

    #[test]
    fn bracket_is_antisymmetric_and_hermitian(f in series(), g in series()) {
        let fg = f.poisson_bracket(&g).unwrap().value;
        let gf = g.poisson_bracket(&f).unwrap().value;
        let sum = common::to_dense(&fg.add(&gf).unwrap());
        prop_assert!(dense_norm(&sum) <= 1e-12 * (1.0 + dense_norm(&common::to_dense(&fg))));
        prop_assert!(fg.hermitian_defect() == 0.0);
    }

    #[test]
    fn addition_commutes_and_majorant_is_subadditive(f in series(), g in series()) {
        let fg = f.add(&g).unwrap();
        prop_assert_eq!(&fg, &g.add(&f).unwrap());
        let n = |s: &FtSeries| s.majorant_norm(0.1, 0.1).value;
        prop_assert!(n(&fg) <= (n(&f) + n(&g)) * (1.0 + 1e-12));
        prop_assert!((n(&f.scale(-2.5)) - 2.5 * n(&f)).abs() <= 1e-12 * (1.0 + n(&f)));
    }

    #[test]
    fn series_json_round_trips_exactly(f in series()) {
        let back = FtSeries::from_json(&f.to_json()).unwrap();
        prop_assert_eq!(back, f);
    }

    #[test]
    fn evaluation_is_real_and_linear(f in series(), g in series(), t0 in 0.0f64..1.0, t1 in 0.0f64..1.0, i0 in -0.1f64..0.1, i1 in -0.1f64..0.1) {
        let (theta, action) = ([t0, t1], [i0, i1]);
        let sum = f.add(&g).unwrap().evaluate(&theta, &action).unwrap();
        let parts = f.evaluate(&theta, &action).unwrap() + g.evaluate(&theta, &action).unwrap();
        prop_assert!((sum - parts).abs() <= 1e-12 * (1.0 + parts.abs()));
    }

    #[test]
    fn dc_constant_decreases_with_cutoff_and_scales(k_max in 1u32..40, extra in 1u32..10, tau in 0.0f64..2.5, c in 0.1f64..10.0, w in 0.1f64..0.9) {
        let omega = [1.0, w];
        let small = dc_constant(&omega, tau, k_max).gamma_k;
        let large = dc_constant(&omega, tau, k_max + extra).gamma_k;
        prop_assert!(large <= small);
        let scaled = dc_constant(&[c, c * w], tau, k_max).gamma_k;
        // rounding of omega.k is absolute, of order |k|_1 ulp, times |k|_1^tau
        let k = k_max as f64;
        prop_assert!((scaled - c * small).abs() <= 1e-14 * c * k.powf(tau + 1.0));
    }

    #[test]
    fn budget_fields_follow_their_formulas(tau in 0.0f64..4.0, extra in 0.0f64..6.0, log_mu in -20.0f64..-0.1, c_nu in 0.1f64..10.0, gb in 1e-6f64..1.0) {
        let b = StabilityBudget::new(tau, tau + extra, log_mu.exp(), c_nu).unwrap();
        prop_assert!(b.is_consistent());
        prop_assert!(b.override_gamma_bar(gb).is_consistent());
        // T = exp(1/nu) shrinks as mu grows
        let b2 = StabilityBudget::new(tau, tau + extra, (log_mu * 0.5).exp(), c_nu).unwrap();
        prop_assert!(b2.ln_t <= b.ln_t);
    }

    #[test]
    fn ball_samples_stay_inside_and_repeat(seed in any::<u64>(), index in any::<u64>(), d in 2usize..5, radius in 1e-3f64..1.0) {
        let x = sample_ball(seed, index, d, radius);
        prop_assert!(x[..d].iter().map(|v| v * v).sum::<f64>().sqrt() <= radius);
        prop_assert_eq!(x, sample_ball(seed, index, d, radius));
    }

    #[test]
    fn trajectory_bytes_round_trip(d in 1usize..4, rows in prop::collection::vec(prop::collection::vec(-1e3f64..1e3, 8), 0..20)) {
        let mut tr = Trajectory::empty(d);
        for row in &rows {
            tr.push(row[0], &row[1..1 + d], &row[4..4 + d], row[7]);
        }
        tr.meta.n_rows = tr.len() as u64;
        let back = Trajectory::from_bytes(&tr.to_bytes()).unwrap();
        prop_assert_eq!(back.t, tr.t);
        prop_assert_eq!(back.theta, tr.theta);
        prop_assert_eq!(back.action, tr.action);
        prop_assert_eq!(back.energy, tr.energy);
    }

    #[test]
    fn config_json_round_trips(seed in any::<u64>(), m_cap in 2u32..30, r0 in 1e-3f64..0.5, n in 1000u64..1_000_000, tau_bar in prop::option::of(1.0f64..9.0), gamma in prop::option::of(1e-6f64..1.0)) {
        let mut cfg = ExperimentConfig::bundled("twist2");
        cfg.seed = seed;
        cfg.m_cap = m_cap;
        cfg.radii = vec![r0, 0.5 * r0];
        cfg.n_samples = n;
        cfg.tau_bar = tau_bar;
        cfg.gamma = gamma;
        let back = ExperimentConfig::from_json(&cfg.to_json()).unwrap();
        prop_assert_eq!(back, cfg);
    }
}
