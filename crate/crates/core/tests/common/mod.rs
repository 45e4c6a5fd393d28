//! Independent reference implementations used as oracles by the test suites.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::f64::consts::TAU;

use effstab::{FtSeries, Shape};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const PHI: f64 = 0.618_033_988_749_894_9;

/// Dense `d = 2` series keyed by `(k1, k2, a1, a2)`.
pub type Dense = BTreeMap<(i32, i32, u32, u32), Complex64>;

pub fn to_dense(f: &FtSeries) -> Dense {
    f.iter()
        .map(|(idx, c)| {
            let k = idx.k_vec(2);
            let a = idx.alpha_vec(2);
            ((k[0], k[1], a[0], a[1]), *c)
        })
        .collect()
}

fn degree(key: &(i32, i32, u32, u32)) -> u32 {
    key.2 + key.3
}

fn add_into(acc: &mut Dense, key: (i32, i32, u32, u32), c: Complex64) {
    *acc.entry(key).or_insert(Complex64::new(0.0, 0.0)) += c;
}

/// `{f, g} = sum_j d_theta_j f d_I_j g - d_I_j f d_theta_j g`, dropping
/// degrees above `cap`.
pub fn bracket(f: &Dense, g: &Dense, cap: u32) -> Dense {
    let mut out = Dense::new();
    for (&(k1, k2, a1, a2), &cf) in f {
        for (&(l1, l2, b1, b2), &cg) in g {
            let k = [k1, k2];
            let l = [l1, l2];
            let a = [a1, a2];
            let b = [b1, b2];
            for j in 0..2 {
                // d_theta_j f * d_I_j g
                if k[j] != 0 && b[j] > 0 {
                    let mut alpha = [a[0] + b[0], a[1] + b[1]];
                    alpha[j] -= 1;
                    let c = Complex64::new(0.0, TAU * k[j] as f64) * cf * (b[j] as f64) * cg;
                    if alpha[0] + alpha[1] <= cap {
                        add_into(&mut out, (k1 + l1, k2 + l2, alpha[0], alpha[1]), c);
                    }
                }
                // - d_I_j f * d_theta_j g
                if a[j] > 0 && l[j] != 0 {
                    let mut alpha = [a[0] + b[0], a[1] + b[1]];
                    alpha[j] -= 1;
                    let c = -(a[j] as f64) * cf * Complex64::new(0.0, TAU * l[j] as f64) * cg;
                    if alpha[0] + alpha[1] <= cap {
                        add_into(&mut out, (k1 + l1, k2 + l2, alpha[0], alpha[1]), c);
                    }
                }
            }
        }
    }
    out.retain(|_, c| c.norm() > 0.0);
    out
}

/// `exp(L_chi) h = h + {chi, h} + {chi, {chi, h}}/2 + ...`, summed until the
/// terms vanish under the degree cap.
pub fn lie_exp(h: &Dense, chi: &Dense, cap: u32) -> Dense {
    let mut sum = h.clone();
    let mut term = h.clone();
    let mut j = 1.0;
    while !term.is_empty() {
        term = bracket(chi, &term, cap);
        for c in term.values_mut() {
            *c /= j;
        }
        for (&key, &c) in &term {
            add_into(&mut sum, key, c);
        }
        j += 1.0;
        assert!(j < 100.0, "Lie series does not terminate");
    }
    sum
}

/// Term-by-term Birkhoff elimination through order `m`: at each degree
/// `s = 2..=m` the angle-dependent part `f` is removed with
/// `chi = -f / (2 pi i omega.k)`.
pub fn birkhoff_oracle(h: &Dense, omega: [f64; 2], m: u32, cap: u32) -> Dense {
    let mut cur = h.clone();
    for s in 2..=m {
        let mut chi = Dense::new();
        for (&key, &c) in &cur {
            if degree(&key) == s && (key.0, key.1) != (0, 0) {
                let dot = omega[0] * key.0 as f64 + omega[1] * key.1 as f64;
                chi.insert(key, -c / Complex64::new(0.0, TAU * dot));
            }
        }
        if chi.is_empty() {
            continue;
        }
        cur = lie_exp(&cur, &chi, cap);
        // the eliminated part is zero up to rounding
        cur.retain(|key, _| !(degree(key) == s && (key.0, key.1) != (0, 0)));
    }
    cur
}

/// Largest coefficient difference between two dense series.
pub fn max_difference(a: &Dense, b: &Dense) -> f64 {
    let mut keys: Vec<_> = a.keys().chain(b.keys()).copied().collect();
    keys.sort();
    keys.dedup();
    let zero = Complex64::new(0.0, 0.0);
    keys.iter()
        .map(|k| (a.get(k).unwrap_or(&zero) - b.get(k).unwrap_or(&zero)).norm())
        .fold(0.0, f64::max)
}

/// `omega.I + sum of random Hermitian terms` of degrees `2..=5` in `I` with
/// modes `|k|_1 <= 2`.
pub fn random_hamiltonian(seed: u64) -> FtSeries {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut h = FtSeries::zero(Shape::new(2, 5, 2, 0.2, 0.2).unwrap())
        .unwrap()
        .with_linear(&[1.0, PHI])
        .unwrap();
    let modes: [[i32; 2]; 7] = [[0, 0], [1, 0], [0, 1], [1, 1], [1, -1], [2, 0], [0, 2]];
    for s in 2..=5u32 {
        for _ in 0..4 {
            let a1 = rng.gen_range(0..=s);
            let alpha = [a1, s - a1];
            let k = modes[rng.gen_range(0..modes.len())];
            let c = rng.gen_range(-0.5..0.5);
            h = if k == [0, 0] {
                h.with_monomial(&alpha, c).unwrap()
            } else if rng.gen_bool(0.5) {
                h.with_cos(&k, &alpha, c).unwrap()
            } else {
                h.with_sin(&k, &alpha, c).unwrap()
            };
        }
    }
    h
}

/// `min |omega.k| |k|_1^tau` over `0 < |k|_1 <= k_max` by a plain double loop
/// over the square `|k_i| <= k_max` (`d = 2`).
pub fn dc_constant_oracle(omega: [f64; 2], tau: f64, k_max: i32) -> f64 {
    let mut best = f64::INFINITY;
    for k1 in -k_max..=k_max {
        for k2 in -k_max..=k_max {
            let n = k1.abs() + k2.abs();
            if n == 0 || n > k_max {
                continue;
            }
            let v = (omega[0] * k1 as f64 + omega[1] * k2 as f64).abs() * (n as f64).powf(tau);
            best = best.min(v);
        }
    }
    best
}
