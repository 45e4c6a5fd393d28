//! Small statistics helpers: binomial intervals and the fits used by reports.

use serde::{Deserialize, Serialize};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Wilson score interval for `hits` successes out of `n` trials.
pub fn wilson(hits: u64, n: u64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n = n as f64;
    let p = hits as f64 / n;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = Z95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    let lo = if hits == 0 { 0.0 } else { (centre - half).max(0.0) };
    let hi = if hits as f64 == n { 1.0 } else { (centre + half).min(1.0) };
    (lo, hi)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// Standard error of the slope.
    pub slope_se: f64,
}

impl LineFit {
    pub fn predict(&self, x: f64) -> f64 {
        self.intercept + self.slope * x
    }
}

/// Ordinary least squares `y = intercept + slope x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Option<LineFit> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return None;
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let r_squared = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    let slope_se = if n > 2 { (sse / (nf - 2.0) / sxx).sqrt() } else { 0.0 };
    Some(LineFit {
        slope,
        intercept,
        r_squared,
        slope_se,
    })
}

/// Log-linear Poisson fit `E[hits_i] = n exp(intercept + slope x_i)` by Newton
/// iteration. Handles zero counts, which a least-squares fit on logarithms
/// cannot. `slope_se` comes from the Fisher information; `r_squared` is the
/// deviance-based analogue.
pub fn poisson_log_fit(x: &[f64], hits: &[u64], n: u64) -> Option<LineFit> {
    let m = x.len();
    if m < 2 || hits.len() != m || hits.iter().all(|&h| h == 0) {
        return None;
    }
    let nf = n as f64;
    // start from least squares on the positive counts, or a flat line
    let pos: Vec<(f64, f64)> = x
        .iter()
        .zip(hits)
        .filter(|(_, &h)| h > 0)
        .map(|(&a, &h)| (a, (h as f64 / nf).ln()))
        .collect();
    let (mut b, mut a) = if pos.len() >= 2 {
        let (px, py): (Vec<f64>, Vec<f64>) = pos.iter().copied().unzip();
        let f = linear_fit(&px, &py)?;
        (f.slope, f.intercept)
    } else {
        (0.0, pos[0].1)
    };
    let loglik = |a: f64, b: f64| -> f64 {
        x.iter()
            .zip(hits)
            .map(|(&xi, &h)| {
                let eta = a + b * xi;
                h as f64 * eta - nf * eta.exp()
            })
            .sum()
    };
    let mut info = [[0.0; 2]; 2];
    for _ in 0..200 {
        let mut g = [0.0; 2];
        info = [[0.0; 2]; 2];
        for (&xi, &h) in x.iter().zip(hits) {
            let mu = nf * (a + b * xi).exp();
            let resid = h as f64 - mu;
            g[0] += resid;
            g[1] += resid * xi;
            info[0][0] += mu;
            info[0][1] += mu * xi;
            info[1][1] += mu * xi * xi;
        }
        info[1][0] = info[0][1];
        let det = info[0][0] * info[1][1] - info[0][1] * info[1][0];
        if !(det > 0.0) {
            return None;
        }
        let da = (info[1][1] * g[0] - info[0][1] * g[1]) / det;
        let db = (info[0][0] * g[1] - info[1][0] * g[0]) / det;
        // step halving keeps the likelihood increasing
        let base = loglik(a, b);
        let mut t = 1.0;
        while t > 1e-6 && loglik(a + t * da, b + t * db) < base - 1e-12 * base.abs() {
            t *= 0.5;
        }
        a += t * da;
        b += t * db;
        if (t * da).abs() < 1e-12 && (t * db).abs() < 1e-12 {
            break;
        }
    }
    let det = info[0][0] * info[1][1] - info[0][1] * info[1][0];
    let slope_se = (info[0][0] / det).sqrt();
    let deviance = |fitted: &dyn Fn(f64) -> f64| -> f64 {
        x.iter()
            .zip(hits)
            .map(|(&xi, &h)| {
                let mu = fitted(xi);
                let h = h as f64;
                2.0 * (if h > 0.0 { h * (h / mu).ln() } else { 0.0 } - (h - mu))
            })
            .sum()
    };
    let total: f64 = hits.iter().map(|&h| h as f64).sum::<f64>() / m as f64;
    let d_model = deviance(&|xi| nf * (a + b * xi).exp());
    let d_null = deviance(&|_| total);
    let r_squared = if d_null > 0.0 { 1.0 - d_model / d_null } else { 1.0 };
    Some(LineFit {
        slope: b,
        intercept: a,
        r_squared,
        slope_se,
    })
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
