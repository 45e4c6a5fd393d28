//! Test Hamiltonians shipped with the toolkit, addressable by name.

use serde::{Deserialize, Serialize};

use crate::diophantine::{dc_constant, DiophantineSpec};
use crate::error::{Error, Result};
use crate::series::{FtSeries, Shape};

/// `(sqrt 5 - 1) / 2`.
pub const GOLDEN: f64 = 0.618_033_988_749_894_9;

/// Mode cutoff used for the Diophantine check of bundled frequencies.
const DC_CUTOFF: u32 = 127;

/// `(1, GOLDEN)` for `d = 2`, and `(1, 2^{1/d}, ..., 2^{(d-1)/d})` otherwise.
/// The latter is a basis of a real number field of degree `d`, hence
/// Diophantine with `tau = d - 1`.
pub fn frequency(d: usize) -> Vec<f64> {
    if d == 2 {
        vec![1.0, GOLDEN]
    } else {
        (0..d).map(|j| 2f64.powf(j as f64 / d as f64)).collect()
    }
}

/// `DC(d - 1, gamma)` for `frequency(d)`, with `gamma` half the finite-cutoff
/// constant so that the check has slack.
pub fn frequency_spec(d: usize) -> Result<DiophantineSpec> {
    let omega = frequency(d);
    let tau = (d - 1) as f64;
    let gamma = 0.5 * dc_constant(&omega, tau, DC_CUTOFF).gamma_k;
    DiophantineSpec::new(omega, tau, gamma, DC_CUTOFF)
}

/// A bundled Hamiltonian with the Diophantine condition of its frequency.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bundled {
    pub name: String,
    pub hamiltonian: FtSeries,
    pub dc: DiophantineSpec,
}

pub const NAMES: &[&str] = &[
    "twist2",
    "twist3",
    "line2",
    "line3",
    "partial-square3",
    "least-term",
    "pendulum",
    "near-integrable",
    "resonant-contrast",
    "pipeline-l2",
    "poschel-test",
];

/// Looks a Hamiltonian up by name (see [`NAMES`]).
pub fn by_name(name: &str) -> Result<Bundled> {
    let (h, d) = match name {
        "twist2" => (twist(2)?, 2),
        "twist3" => (twist(3)?, 3),
        "line2" => (line(2)?, 2),
        "line3" => (line(3)?, 3),
        "partial-square3" => (partial_square(3)?, 3),
        "least-term" => (least_term()?, 2),
        "pendulum" => (pendulum(PENDULUM_EPS)?, 2),
        "near-integrable" => (near_integrable(NEAR_INTEGRABLE_EPS)?, 2),
        "resonant-contrast" => (resonant_contrast(NEAR_INTEGRABLE_EPS, CONTRAST_EPS)?, 2),
        "pipeline-l2" => (pipeline_l2(PIPELINE_EPS)?, 3),
        "poschel-test" => (poschel_test(1e-4)?, 2),
        _ => {
            return Err(Error::Config(format!(
                "unknown bundled Hamiltonian {name:?}; known: {}",
                NAMES.join(", ")
            )))
        }
    };
    Ok(Bundled {
        name: name.to_string(),
        hamiltonian: h,
        dc: frequency_spec(d)?,
    })
}

fn base(d: usize, m_max: u32, k_max: u32, rho: f64, r: f64) -> Result<FtSeries> {
    FtSeries::zero(Shape::new(d, m_max, k_max, rho, r)?)?.with_linear(&frequency(d))
}

fn unit(d: usize, j: usize, power: u32) -> Vec<u32> {
    let mut a = vec![0; d];
    a[j] = power;
    a
}

/// `omega.I + |I|^2 / 2`, so that `grad N = omega + I` and `l = d`.
pub fn twist(d: usize) -> Result<FtSeries> {
    let mut h = base(d, 2, 1, 0.5, 0.5)?;
    for j in 0..d {
        h = h.with_monomial(&unit(d, j, 2), 0.5)?;
    }
    Ok(h)
}

/// `omega.I + (omega.I)^2`: the frequency only moves along `omega` (`l = 1`).
pub fn line(d: usize) -> Result<FtSeries> {
    let omega = frequency(d);
    let mut h = base(d, 2, 1, 0.5, 0.5)?;
    for i in 0..d {
        for j in i..d {
            let mut a = vec![0; d];
            a[i] += 1;
            a[j] += 1;
            let c = if i == j { 1.0 } else { 2.0 };
            h = h.with_monomial(&a, c * omega[i] * omega[j])?;
        }
    }
    Ok(h)
}

/// `omega.I + I_1^2`: the frequency moves in the plane of `omega` and `e_1`.
pub fn partial_square(d: usize) -> Result<FtSeries> {
    base(d, 2, 1, 0.5, 0.5)?.with_monomial(&unit(d, 0, 2), 1.0)
}

/// Largest mode `|k|_1` in the near-resonant family of [`least_term`].
pub const LEAST_TERM_MODES: i32 = 40;
/// Normalization order cap that comfortably contains the least term for
/// `r` down to `1e-3`.
pub const LEAST_TERM_ORDER_CAP: u32 = 24;

/// `omega.I + I_1^2/2 + eps sum_k e^{-(|k|_1 - 1)} cos(2 pi k.theta) I_1^2`
/// with `omega = (1, GOLDEN)`, `eps = 1e-2`, summed over the near-resonant
/// modes `k = (-round(GOLDEN n), n)` with `|k|_1 <= 40`.
///
/// The divisors `|k.omega|` of this family shrink like `1/|k|`, and the twist
/// carries each mode through every later order with a factor `|k|/|k.omega|`,
/// so the order-`s` coefficients grow like `(s!)^2`: the least-term regime
/// `exp(-c r^{-1/2})` is reached at orders below 20 for `r >= 1e-3`.
pub fn least_term() -> Result<FtSeries> {
    let eps = 1e-2;
    let mut h = base(2, LEAST_TERM_ORDER_CAP + 1, 127, 0.02, 0.3)?.with_monomial(&[2, 0], 0.5)?;
    for n in 1.. {
        let k = [-((GOLDEN * n as f64).round() as i32), n];
        let norm = k[0].abs() + k[1];
        if norm > LEAST_TERM_MODES {
            break;
        }
        h = h.with_cos(&k, &[2, 0], eps * (-(norm as f64 - 1.0)).exp())?;
    }
    Ok(h)
}

pub const PENDULUM_EPS: f64 = 0.1;

/// `omega.I + I_1^2 + eps I_1^2 cos(2 pi theta_1)` in `d = 2`.
pub fn pendulum(eps: f64) -> Result<FtSeries> {
    base(2, 2, 1, 0.5, 0.5)?
        .with_monomial(&[2, 0], 1.0)?
        .with_cos(&[1, 0], &[2, 0], eps)
}

pub const NEAR_INTEGRABLE_EPS: f64 = 0.05;
pub const CONTRAST_EPS: f64 = 0.05;
/// The mode made resonant in [`resonant_contrast`].
pub const CONTRAST_MODE: [i32; 2] = [-3, 5];

/// `omega.I + |I|^2/2 + eps (cos(2 pi theta_1) I_1^2 + cos(2 pi theta_2) I_2^2
/// + cos(2 pi (theta_1 + theta_2)) I_1 I_2)` in `d = 2`.
pub fn near_integrable(eps: f64) -> Result<FtSeries> {
    base(2, 8, 16, 0.25, 0.25)?
        .with_monomial(&[2, 0], 0.5)?
        .with_monomial(&[0, 2], 0.5)?
        .with_cos(&[1, 0], &[2, 0], eps)?
        .with_cos(&[0, 1], &[0, 2], eps)?
        .with_cos(&[1, 1], &[1, 1], eps)
}

/// [`near_integrable`] plus `eps_c cos(2 pi (-3 theta_1 + 5 theta_2)) I_1 I_2`,
/// a term resonant on the line `(-3, 5).(omega + I) = 0` that crosses the
/// action ball.
pub fn resonant_contrast(eps: f64, eps_c: f64) -> Result<FtSeries> {
    near_integrable(eps)?.with_cos(&CONTRAST_MODE, &[1, 1], eps_c)
}

pub const PIPELINE_EPS: f64 = 0.1;

/// `omega.I + I_1^2 + eps I_1^2 cos(2 pi theta_1)` in `d = 3`; its normal form
/// depends on `I` only through `omega.I` and `I_1`, so `l = 2`.
pub fn pipeline_l2(eps: f64) -> Result<FtSeries> {
    base(3, 8, 16, 0.25, 0.2)?
        .with_monomial(&[2, 0, 0], 1.0)?
        .with_cos(&[1, 0, 0], &[2, 0, 0], eps)
}

/// `N + P` with `N = omega.I + |I|^2/2` and a mixed-mode `P` scaled so that its
/// majorant on the strip of width `0.5` (any action radius) is `mu`.
pub fn poschel_test(mu: f64) -> Result<FtSeries> {
    let modes: [([i32; 2], f64); 3] = [([1, 0], 0.5), ([1, -1], 0.3), ([0, 1], 0.2)];
    let mut h = twist(2)?.reshaped(Shape::new(2, 4, 4, 0.5, 0.5)?)?.value;
    for (k, w) in modes {
        let norm = (k[0].abs() + k[1].abs()) as f64;
        let a = mu * w * (-std::f64::consts::TAU * 0.5 * norm).exp();
        h = h.with_cos(&k, &[0, 0], a)?;
    }
    Ok(h)
}
