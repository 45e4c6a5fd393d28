//! Frequency-map geometry: the spans `V_m` of derivatives of `F_m = grad N_m`
//! at the origin, their stabilization order `m*`, the dimension `l` of the
//! limit space `V`, and the non-degeneracy floor `beta`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::poly::PolyMap;
use crate::series::FtSeries;

pub const DEFAULT_RANK_TOL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrequencyGeometry {
    /// Frequency map of the highest-order normal form supplied.
    #[serde(rename = "F")]
    pub f: PolyMap,
    #[serde(rename = "V_basis")]
    pub v_basis: Vec<Vec<f64>>,
    pub l: usize,
    pub m_star: u32,
    /// Multi-indices `alpha_1..alpha_l` whose derivative columns span `V`.
    pub alphas: Vec<Vec<u32>>,
    /// Coordinates ordered so that the first `l` carry an invertible block of
    /// the basis; the remaining ones are linear in them.
    pub permutation: Vec<usize>,
    /// `F_rest = b F_selected` (`(d-l) x l`, row-major; empty for `l = d`).
    pub b: Vec<Vec<f64>>,
    /// Rank of `V_m` for `m = 1..=m_cap`.
    pub ranks: Vec<usize>,
    pub rank_tol: f64,
    /// Smallest ratio `sigma / (rank_tol sigma_max)` over the retained singular
    /// values, and largest over the discarded ones (0 when none).
    pub kept_margin: f64,
    pub dropped_margin: f64,
    /// True when a retained or dropped singular value lies within a factor 10
    /// of the threshold.
    pub near_threshold: bool,
    pub beta: Option<f64>,
}

/// Gradient of an angle-free normal form.
pub fn frequency_map(n: &FtSeries) -> Result<PolyMap> {
    PolyMap::gradient_of(n)
}

fn multi_indices(d: usize, max_deg: u32) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    for deg in 0..=max_deg {
        let mut cur = vec![0u32; d];
        fn rec(j: usize, left: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
            if j + 1 == cur.len() {
                cur[j] = left;
                out.push(cur.clone());
                return;
            }
            for v in (0..=left).rev() {
                cur[j] = v;
                rec(j + 1, left - v, cur, out);
            }
            cur[j] = 0;
        }
        rec(0, deg, &mut cur, &mut out);
    }
    out
}

fn factorial(n: u32) -> f64 {
    (1..=n).map(|v| v as f64).product()
}

/// `d^alpha F_m (0)` with `F_m = grad N_m`: component `j` is
/// `(alpha + e_j)! c_{alpha + e_j}` when `|alpha| + 1 <= m`.
fn derivative_column(n: &FtSeries, alpha: &[u32], m: u32) -> Vec<f64> {
    let d = n.d();
    (0..d)
        .map(|j| {
            let mut a = alpha.to_vec();
            a[j] += 1;
            if a.iter().sum::<u32>() > m {
                return 0.0;
            }
            let c = n.coeff(&vec![0; d], &a).re;
            c * a.iter().map(|&v| factorial(v)).product::<f64>()
        })
        .collect()
}

fn sorted_singular_values(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let svd = m.clone().svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let sv: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
    let cols: Vec<DVector<f64>> = order.iter().map(|&i| u.column(i).into_owned()).collect();
    let u_sorted = if cols.is_empty() {
        DMatrix::zeros(m.nrows(), 0)
    } else {
        DMatrix::from_columns(&cols)
    };
    (sv, u_sorted)
}

/// Computes `V_m` for `m = 1..=m_cap` from the angle-free normal form `n`
/// (its degree-`<= m` part is `N_m`), the stabilization order, the dimension
/// `l`, a pivoted choice of multi-indices, and the linear relations among the
/// coordinates of `F`.
pub fn span_and_order(n: &FtSeries, m_cap: u32, rank_tol: f64) -> Result<FrequencyGeometry> {
    let f = frequency_map(n)?;
    let d = n.d();
    if m_cap < 1 {
        return Err(Error::Config("m_cap must be at least 1".into()));
    }
    if !(rank_tol > 0.0 && rank_tol < 1.0) {
        return Err(Error::Config(format!("rank_tol = {rank_tol} must lie in (0, 1)")));
    }
    let mut ranks = Vec::new();
    let mut spans = Vec::new();
    for m in 1..=m_cap {
        let alphas = multi_indices(d, m - 1);
        let cols: Vec<Vec<f64>> = alphas.iter().map(|a| derivative_column(n, a, m)).collect();
        // dividing by alpha! spans the same space without the factorial growth
        // that would push the relative threshold above genuine directions
        let weights: Vec<f64> = alphas.iter().map(|a| a.iter().map(|&v| factorial(v)).product()).collect();
        let mat = DMatrix::from_fn(d, cols.len(), |i, j| cols[j][i] / weights[j]);
        let (sv, u) = sorted_singular_values(&mat);
        let top = sv.first().copied().unwrap_or(0.0);
        let thr = rank_tol * top;
        let rank = if top > 0.0 { sv.iter().filter(|&&s| s > thr).count() } else { 0 };
        // the spans are nested, so a drop is a thresholding artifact
        let rank = rank.max(ranks.last().copied().unwrap_or(0));
        ranks.push(rank);
        spans.push((alphas, cols, sv, u, thr));
    }
    let final_rank = *ranks.last().unwrap();
    if final_rank == 0 {
        return Err(Error::Degenerate("the frequency vanishes at the origin".into()));
    }
    let m_star = ranks.iter().position(|&r| r == final_rank).unwrap() as u32 + 1;
    if m_star == m_cap && final_rank < d {
        return Err(Error::InconclusiveOrder {
            m_cap,
            rank: final_rank,
        });
    }
    let l = final_rank;
    let (alphas, cols, _, u, _) = &spans[m_star as usize - 1];
    let (_, _, sv_cap, _, thr_cap) = &spans[m_cap as usize - 1];
    let kept_margin = sv_cap[..l].iter().map(|s| s / thr_cap).fold(f64::INFINITY, f64::min);
    let dropped_margin = sv_cap[l..].iter().map(|s| s / thr_cap).fold(0.0, f64::max);
    let near_threshold = kept_margin < 10.0 || (dropped_margin > 0.1);

    let v_basis: Vec<Vec<f64>> = (0..l).map(|i| u.column(i).iter().copied().collect()).collect();
    let chosen = pivoted_columns(cols, l, true);
    let alphas_sel: Vec<Vec<u32>> = chosen.iter().map(|&i| alphas[i].clone()).collect();
    let basis = DMatrix::from_fn(d, l, |i, j| v_basis[j][i]);
    let rows = pivoted_columns(
        &(0..d).map(|i| basis.row(i).iter().copied().collect()).collect::<Vec<_>>(),
        l,
        false,
    );
    let mut permutation = rows.clone();
    permutation.extend((0..d).filter(|i| !rows.contains(i)));
    let b = relation_matrix(&basis, &permutation, l, cols)?;

    Ok(FrequencyGeometry {
        f,
        v_basis,
        l,
        m_star,
        alphas: alphas_sel,
        permutation,
        b,
        ranks,
        rank_tol,
        kept_margin,
        dropped_margin,
        near_threshold,
        beta: None,
    })
}

/// Greedy column selection by largest residual norm (column-pivoted
/// Gram–Schmidt). With `lead_first` the first column is taken when nonzero, so
/// `alpha = 0` (the frequency itself) leads the selection.
fn pivoted_columns(cols: &[Vec<f64>], count: usize, lead_first: bool) -> Vec<usize> {
    let mut residual: Vec<Vec<f64>> = cols.to_vec();
    let mut chosen: Vec<usize> = Vec::new();
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    for step in 0..count {
        let pick = if lead_first && step == 0 && norm(&residual[0]) > 0.0 {
            0
        } else {
            let mut best = (0.0, usize::MAX);
            for (i, r) in residual.iter().enumerate() {
                if chosen.contains(&i) {
                    continue;
                }
                let n = norm(r);
                if n > best.0 * (1.0 + 1e-12) {
                    best = (n, i);
                }
            }
            best.1
        };
        if pick == usize::MAX {
            break;
        }
        chosen.push(pick);
        let q: Vec<f64> = {
            let n = norm(&residual[pick]);
            residual[pick].iter().map(|x| x / n).collect()
        };
        for r in residual.iter_mut() {
            let dot: f64 = r.iter().zip(&q).map(|(a, b)| a * b).sum();
            for (x, qv) in r.iter_mut().zip(&q) {
                *x -= dot * qv;
            }
        }
    }
    chosen
}

/// `b = V_rest V_sel^{-1}` with a residual check on the derivative columns.
fn relation_matrix(
    basis: &DMatrix<f64>,
    permutation: &[usize],
    l: usize,
    cols: &[Vec<f64>],
) -> Result<Vec<Vec<f64>>> {
    let d = basis.nrows();
    if l == d {
        return Ok(Vec::new());
    }
    let sel = DMatrix::from_fn(l, l, |i, j| basis[(permutation[i], j)]);
    let rest = DMatrix::from_fn(d - l, l, |i, j| basis[(permutation[l + i], j)]);
    let inv = sel
        .try_inverse()
        .ok_or_else(|| Error::Degenerate("selected coordinate block of V is singular".into()))?;
    let b = rest * inv;
    let scale = cols
        .iter()
        .flatten()
        .fold(0.0f64, |m, v| m.max(v.abs()))
        .max(f64::MIN_POSITIVE);
    for c in cols {
        for i in 0..d - l {
            let pred: f64 = (0..l).map(|j| b[(i, j)] * c[permutation[j]]).sum();
            let resid = (c[permutation[l + i]] - pred).abs();
            if resid > 1e-8 * scale {
                return Err(Error::Degenerate(format!(
                    "linear relation residual {resid:e} exceeds 1e-8"
                )));
            }
        }
    }
    Ok((0..d - l).map(|i| (0..l).map(|j| b[(i, j)]).collect()).collect())
}

/// Outcome of the grid scan for the non-degeneracy floor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BetaFloor {
    /// Smallest `sigma_min` of `V^T A(I)` over the grid.
    pub grid_min: f64,
    pub argmin: Vec<f64>,
    /// Lipschitz slack for the grid spacing.
    pub slack: f64,
    pub beta: f64,
    pub n_points: usize,
    /// `beta <= 0`: the non-degeneracy hypothesis fails at this radius.
    pub degenerate: bool,
}

/// Columns `d^{alpha_i} F` of `A`.
fn column_maps(geom: &FrequencyGeometry, f: &PolyMap) -> Vec<PolyMap> {
    geom.alphas.iter().map(|a| f.derivative(a)).collect()
}

/// Smallest singular value of `V^T A(I)` over a grid covering the closed ball
/// of the given radius, minus a Lipschitz slack for the spacing. `A(I)` has
/// columns `d^{alpha_i} F(I)`; projecting on the orthonormal basis of `V`
/// makes the value coordinate-free (`F = omega` gives `|omega|`).
pub fn beta_floor(geom: &FrequencyGeometry, f: &PolyMap, radius: f64, grid_n: usize) -> Result<BetaFloor> {
    let d = geom.f.d;
    let l = geom.l;
    if l < 1 {
        return Err(Error::Config("beta floor needs l >= 1".into()));
    }
    let grid_n = grid_n.max(2);
    let cols = column_maps(geom, f);
    let compiled: Vec<_> = cols.iter().map(PolyMap::compiled).collect();
    let vt = DMatrix::from_fn(l, d, |i, j| geom.v_basis[i][j]);
    let h = 2.0 * radius / (grid_n - 1) as f64;
    let reach = 0.5 * h * (d as f64).sqrt();
    // Lipschitz bound of I -> A(I) in operator norm via its Frobenius norm
    let lip: f64 = {
        let mut s = 0.0;
        for c in &cols {
            let mut per = vec![0.0; d];
            for m in 0..d {
                let mut e = vec![0u32; d];
                e[m] = 1;
                for (j, b) in c.derivative(&e).component_bounds(radius + reach).iter().enumerate() {
                    per[j] += b;
                }
            }
            s += per.iter().map(|v| v * v).sum::<f64>();
        }
        s.sqrt()
    };
    let total = grid_n.pow(d as u32);
    let point = |idx: usize| -> Vec<f64> {
        let mut x = vec![0.0; d];
        let mut rem = idx;
        for v in x.iter_mut() {
            *v = -radius + h * (rem % grid_n) as f64;
            rem /= grid_n;
        }
        x
    };
    let best = (0..total)
        .into_par_iter()
        .filter_map(|idx| {
            let x = point(idx);
            let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > radius + reach {
                return None;
            }
            let mut a = DMatrix::zeros(d, l);
            let mut buf = vec![0.0; d];
            for (j, c) in compiled.iter().enumerate() {
                c.eval_into(&x, &mut buf);
                for i in 0..d {
                    a[(i, j)] = buf[i];
                }
            }
            let proj = &vt * a;
            let s = proj.singular_values().iter().fold(f64::INFINITY, |m, &v| m.min(v));
            Some((s, idx))
        })
        .reduce_with(|a, b| if b.0 < a.0 || (b.0 == a.0 && b.1 < a.1) { b } else { a })
        .ok_or_else(|| Error::Config("empty grid".into()))?;
    let n_points = (0..total)
        .filter(|&i| point(i).iter().map(|v| v * v).sum::<f64>().sqrt() <= radius + reach)
        .count();
    let slack = lip * reach;
    let beta = best.0 - slack;
    Ok(BetaFloor {
        grid_min: best.0,
        argmin: point(best.1),
        slack,
        beta,
        n_points,
        degenerate: !(beta > 0.0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::Shape;

    const PHI: f64 = 0.618_033_988_749_894_9;

    fn unit(v: &[f64]) -> Vec<f64> {
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter().map(|x| x / n).collect()
    }

    fn zero(d: usize) -> FtSeries {
        FtSeries::zero(Shape::new(d, 8, 2, 0.3, 1.0).unwrap()).unwrap()
    }

    #[test]
    fn linear_frequency_squared_gives_one_dimensional_span() {
        let w = unit(&[1.0, PHI]);
        let lin = zero(2).with_linear(&w).unwrap();
        let sq = lin.mul(&lin).unwrap().value;
        let n = lin.add(&sq).unwrap();
        let g = span_and_order(&n, 4, DEFAULT_RANK_TOL).unwrap();
        assert_eq!((g.l, g.m_star), (1, 1));
        assert_eq!(g.alphas, vec![vec![0, 0]]);
    }

    #[test]
    fn full_twist_gives_full_span_at_order_two() {
        for d in 2..=4 {
            let w: Vec<f64> = (0..d).map(|j| 2f64.powf(j as f64 / d as f64)).collect();
            let mut n = zero(d).with_linear(&unit(&w)).unwrap();
            for j in 0..d {
                let mut a = vec![0; d];
                a[j] = 2;
                n = n.with_monomial(&a, 0.5).unwrap();
            }
            let g = span_and_order(&n, 4, DEFAULT_RANK_TOL).unwrap();
            assert_eq!((g.l, g.m_star), (d, 2));
            assert!(g.b.is_empty());
        }
    }

    #[test]
    fn single_square_in_three_dimensions() {
        let w = unit(&[1.0, 2f64.cbrt(), 4f64.cbrt()]);
        let n = zero(3).with_linear(&w).unwrap().with_monomial(&[2, 0, 0], 1.0).unwrap();
        let g = span_and_order(&n, 4, DEFAULT_RANK_TOL).unwrap();
        assert_eq!((g.l, g.m_star), (2, 2));
        assert_eq!(g.alphas, vec![vec![0, 0, 0], vec![1, 0, 0]]);
        // omega and e_1 lie in V
        for v in [w.clone(), vec![1.0, 0.0, 0.0]] {
            let proj: Vec<f64> = (0..2)
                .map(|i| g.v_basis[i].iter().zip(&v).map(|(a, b)| a * b).sum())
                .collect();
            let resid = v.iter().map(|x| x * x).sum::<f64>() - proj.iter().map(|x| x * x).sum::<f64>();
            assert!(resid.abs() < 1e-12);
        }
        assert_eq!(g.b.len(), 1);
    }

    #[test]
    fn constant_frequency_has_unit_floor() {
        let w = unit(&[1.0, PHI]);
        let n = zero(2).with_linear(&w).unwrap();
        let g = span_and_order(&n, 3, DEFAULT_RANK_TOL).unwrap();
        for r in [0.01, 0.1, 1.0] {
            let bf = beta_floor(&g, &g.f, r, 11).unwrap();
            assert!((bf.beta - 1.0).abs() < 1e-12);
            assert_eq!(bf.slack, 0.0);
        }
    }

    #[test]
    fn floor_shrinks_with_radius() {
        let w = unit(&[1.0, 2f64.cbrt(), 4f64.cbrt()]);
        let n = zero(3).with_linear(&w).unwrap().with_monomial(&[2, 0, 0], 1.0).unwrap();
        let g = span_and_order(&n, 3, DEFAULT_RANK_TOL).unwrap();
        let a = beta_floor(&g, &g.f, 0.05, 21).unwrap();
        let b = beta_floor(&g, &g.f, 0.1, 21).unwrap();
        assert!(a.grid_min >= b.grid_min);
        assert!(a.beta >= b.beta);
    }

    #[test]
    fn inconclusive_when_rank_still_growing() {
        let w = unit(&[1.0, 2f64.cbrt(), 4f64.cbrt()]);
        let n = zero(3)
            .with_linear(&w)
            .unwrap()
            .with_monomial(&[2, 0, 0], 1.0)
            .unwrap()
            .with_monomial(&[0, 3, 0], 1.0)
            .unwrap();
        assert!(matches!(
            span_and_order(&n, 2, DEFAULT_RANK_TOL),
            Err(Error::InconclusiveOrder { .. })
        ));
        assert_eq!(span_and_order(&n, 4, DEFAULT_RANK_TOL).unwrap().m_star, 3);
    }
}
