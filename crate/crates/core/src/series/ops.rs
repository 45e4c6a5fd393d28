//! Arithmetic on truncated series.
//!
//! Bilinear operations only compute coefficients for "upper" modes (`k = 0` or
//! first nonzero component positive) and mirror the rest by conjugation, which
//! keeps results exactly Hermitian and halves the work. Products whose degree
//! exceeds the target cutoff are never formed: their majorant mass is bounded
//! blockwise from per-(degree, |k|_1) sums and reported as truncation loss.

use std::collections::BTreeMap;
use std::f64::consts::TAU;

use num_complex::Complex64;
use rustc_hash::FxHashMap;

use super::{is_upper_mode, FtSeries, Index, Shape, TruncationLoss, MAX_DIM};
use crate::error::{Error, Result};

/// A value together with the majorant mass discarded while computing it.
#[derive(Clone, Debug, PartialEq)]
pub struct WithLoss<T> {
    pub value: T,
    pub loss: TruncationLoss,
}

impl<T> WithLoss<T> {
    pub fn exact(value: T) -> Self {
        WithLoss {
            value,
            loss: TruncationLoss::new(),
        }
    }
}

type Term = (Index, Complex64);

/// Terms grouped by degree, plus per-(degree, |k|_1) sums used for the
/// blockwise loss bounds.
struct Graded {
    by_degree: Vec<Vec<Term>>,
    bins: BTreeMap<(u32, u32), BinSums>,
}

#[derive(Clone, Copy, Default)]
struct BinSums {
    mass: f64,
    mode_weighted: [f64; MAX_DIM],
    degree_weighted: [f64; MAX_DIM],
}

impl Graded {
    fn new(f: &FtSeries) -> Self {
        let mut by_degree: Vec<Vec<Term>> = vec![Vec::new(); f.max_degree() as usize + 1];
        let mut bins: BTreeMap<(u32, u32), BinSums> = BTreeMap::new();
        for (idx, c) in f.iter() {
            let deg = idx.degree();
            by_degree[deg as usize].push((*idx, *c));
            let b = bins.entry((deg, idx.mode_norm())).or_default();
            let m = c.norm();
            b.mass += m;
            for j in 0..MAX_DIM {
                b.mode_weighted[j] += m * (idx.k[j] as f64).abs();
                b.degree_weighted[j] += m * idx.alpha[j] as f64;
            }
        }
        Graded { by_degree, bins }
    }
}

#[inline]
fn add_modes(a: &[i8; MAX_DIM], b: &[i8; MAX_DIM]) -> ([i8; MAX_DIM], u32) {
    let mut k = [0i8; MAX_DIM];
    let mut norm = 0u32;
    for j in 0..MAX_DIM {
        // |a_j|, |b_j| <= 127 and |a_j + b_j| <= K_max <= 127 is checked by the
        // caller through `norm`; the wide sum avoids overflow before that check.
        let s = a[j] as i16 + b[j] as i16;
        norm += s.unsigned_abs() as u32;
        k[j] = s.clamp(-127, 127) as i8;
    }
    (k, norm)
}

fn collect_upper(shape: Shape, acc: FxHashMap<Index, Complex64>) -> FtSeries {
    let mut coeffs = BTreeMap::new();
    for (idx, c) in acc {
        if c == Complex64::default() {
            continue;
        }
        if idx.is_angle_free() {
            coeffs.insert(idx, Complex64::new(c.re, 0.0));
        } else {
            coeffs.insert(idx.conjugate(), c.conj());
            coeffs.insert(idx, c);
        }
    }
    FtSeries::from_map(shape, coeffs)
}

fn merged_shape(f: &FtSeries, g: &FtSeries) -> Result<Shape> {
    if f.d() != g.d() {
        return Err(Error::DimensionMismatch(f.d(), g.d()));
    }
    Ok(f.shape
        .with_cutoffs(f.m_max().max(g.m_max()), f.k_max().max(g.k_max())))
}

/// `a f + b g` on the larger of the two cutoffs (widths taken from `f`).
pub fn lin_combine(a: f64, f: &FtSeries, b: f64, g: &FtSeries) -> Result<FtSeries> {
    let shape = merged_shape(f, g)?;
    let mut coeffs = BTreeMap::new();
    if a != 0.0 {
        for (idx, c) in f.iter() {
            coeffs.insert(*idx, c * a);
        }
    }
    if b != 0.0 {
        for (idx, c) in g.iter() {
            *coeffs.entry(*idx).or_insert_with(Complex64::default) += c * b;
        }
    }
    Ok(FtSeries::from_map(shape, coeffs))
}

impl FtSeries {
    pub fn add(&self, g: &FtSeries) -> Result<FtSeries> {
        lin_combine(1.0, self, 1.0, g)
    }

    pub fn sub(&self, g: &FtSeries) -> Result<FtSeries> {
        lin_combine(1.0, self, -1.0, g)
    }

    pub fn scale(&self, a: f64) -> FtSeries {
        if a == 0.0 {
            return FtSeries::from_map(self.shape, BTreeMap::new());
        }
        FtSeries::from_map(self.shape, self.coeffs.iter().map(|(i, c)| (*i, c * a)).collect())
    }

    /// Cauchy product on the larger of the two cutoffs.
    pub fn mul(&self, g: &FtSeries) -> Result<WithLoss<FtSeries>> {
        let shape = merged_shape(self, g)?;
        self.mul_with(g, shape)
    }

    /// Cauchy product truncated to the cutoffs of `shape`.
    pub fn mul_with(&self, g: &FtSeries, shape: Shape) -> Result<WithLoss<FtSeries>> {
        if self.d() != g.d() || shape.d != self.d() {
            return Err(Error::DimensionMismatch(self.d(), g.d()));
        }
        let (fg, gg) = (Graded::new(self), Graded::new(g));
        let mut loss = TruncationLoss::new();
        for (&(df, kf), bf) in &fg.bins {
            for (&(dg, kg), bg) in &gg.bins {
                if df + dg > shape.m_max {
                    loss.add(df + dg, kf + kg, bf.mass * bg.mass);
                }
            }
        }
        let mut acc: FxHashMap<Index, Complex64> = FxHashMap::default();
        for (df, tf) in fg.by_degree.iter().enumerate() {
            for (dg, tg) in gg.by_degree.iter().enumerate() {
                if (df + dg) as u32 > shape.m_max {
                    break;
                }
                for (i, ci) in tf {
                    for (j, cj) in tg {
                        let (k, norm) = add_modes(&i.k, &j.k);
                        if norm > shape.k_max {
                            loss.add((df + dg) as u32, norm, ci.norm() * cj.norm());
                            continue;
                        }
                        if !is_upper_mode(&k) {
                            continue;
                        }
                        let mut alpha = [0u8; MAX_DIM];
                        for m in 0..MAX_DIM {
                            alpha[m] = i.alpha[m] + j.alpha[m];
                        }
                        *acc.entry(Index::from_parts(k, alpha)).or_default() += ci * cj;
                    }
                }
            }
        }
        Ok(WithLoss {
            value: collect_upper(shape, acc),
            loss,
        })
    }

    /// Poisson bracket `{f, g} = sum_j d_theta_j f d_I_j g - d_I_j f d_theta_j g`
    /// on the larger of the two cutoffs.
    pub fn poisson_bracket(&self, g: &FtSeries) -> Result<WithLoss<FtSeries>> {
        let shape = merged_shape(self, g)?;
        self.bracket_with(g, shape)
    }

    /// Poisson bracket truncated to the cutoffs of `shape`.
    pub fn bracket_with(&self, g: &FtSeries, shape: Shape) -> Result<WithLoss<FtSeries>> {
        if self.d() != g.d() || shape.d != self.d() {
            return Err(Error::DimensionMismatch(self.d(), g.d()));
        }
        let d = self.d();
        let (fg, gg) = (Graded::new(self), Graded::new(g));
        let mut loss = TruncationLoss::new();
        for (&(df, kf), bf) in &fg.bins {
            for (&(dg, kg), bg) in &gg.bins {
                if df + dg == 0 || df + dg - 1 <= shape.m_max {
                    continue;
                }
                let mass: f64 = (0..d)
                    .map(|j| {
                        bf.mode_weighted[j] * bg.degree_weighted[j]
                            + bf.degree_weighted[j] * bg.mode_weighted[j]
                    })
                    .sum();
                loss.add(df + dg - 1, kf + kg, TAU * mass);
            }
        }
        let mut acc: FxHashMap<Index, Complex64> = FxHashMap::default();
        for (df, tf) in fg.by_degree.iter().enumerate() {
            for (dg, tg) in gg.by_degree.iter().enumerate() {
                if df + dg == 0 {
                    continue;
                }
                if (df + dg - 1) as u32 > shape.m_max {
                    break;
                }
                for (i, ci) in tf {
                    for (j, cj) in tg {
                        let (k, norm) = add_modes(&i.k, &j.k);
                        if norm > shape.k_max {
                            let w: f64 = (0..d)
                                .map(|m| {
                                    (i.k[m] as f64).abs() * j.alpha[m] as f64
                                        + i.alpha[m] as f64 * (j.k[m] as f64).abs()
                                })
                                .sum();
                            loss.add((df + dg - 1) as u32, norm, TAU * w * ci.norm() * cj.norm());
                            continue;
                        }
                        if !is_upper_mode(&k) {
                            continue;
                        }
                        let prod = ci * cj;
                        let mut base = [0u8; MAX_DIM];
                        for m in 0..MAX_DIM {
                            base[m] = i.alpha[m] + j.alpha[m];
                        }
                        for m in 0..d {
                            let w = i.k[m] as f64 * j.alpha[m] as f64
                                - i.alpha[m] as f64 * j.k[m] as f64;
                            if w == 0.0 {
                                continue;
                            }
                            let mut alpha = base;
                            alpha[m] -= 1;
                            // 2 pi i * w * prod
                            let c = Complex64::new(-prod.im, prod.re) * (TAU * w);
                            *acc.entry(Index::from_parts(k, alpha)).or_default() += c;
                        }
                    }
                }
            }
        }
        Ok(WithLoss {
            value: collect_upper(shape, acc),
            loss,
        })
    }

    fn filtered(&self, keep: impl Fn(&Index) -> bool) -> FtSeries {
        FtSeries::from_map(
            self.shape,
            self.coeffs
                .iter()
                .filter(|(i, _)| keep(i))
                .map(|(i, c)| (*i, *c))
                .collect(),
        )
    }

    /// The `k = 0` part.
    pub fn angle_average(&self) -> FtSeries {
        self.filtered(Index::is_angle_free)
    }

    /// Everything except the `k = 0` part.
    pub fn zero_mean_part(&self) -> FtSeries {
        self.filtered(|i| !i.is_angle_free())
    }

    /// Terms of total degree exactly `s`.
    pub fn degree_part(&self, s: u32) -> FtSeries {
        self.filtered(|i| i.degree() == s)
    }

    /// Terms with `lo <= |alpha| <= hi`.
    pub fn degree_range(&self, lo: u32, hi: u32) -> FtSeries {
        self.filtered(|i| (lo..=hi).contains(&i.degree()))
    }

    /// `d/dI_j`.
    pub fn d_action(&self, j: usize) -> FtSeries {
        assert!(j < self.d());
        let mut coeffs = BTreeMap::new();
        for (idx, c) in &self.coeffs {
            let a = idx.alpha[j];
            if a == 0 {
                continue;
            }
            let mut alpha = idx.alpha;
            alpha[j] -= 1;
            coeffs.insert(Index::from_parts(idx.k, alpha), c * a as f64);
        }
        FtSeries::from_map(self.shape, coeffs)
    }

    /// `d/dtheta_j`.
    pub fn d_angle(&self, j: usize) -> FtSeries {
        assert!(j < self.d());
        let mut coeffs = BTreeMap::new();
        for (idx, c) in &self.coeffs {
            let kj = idx.k[j];
            if kj != 0 {
                coeffs.insert(*idx, Complex64::new(-c.im, c.re) * (TAU * kj as f64));
            }
        }
        FtSeries::from_map(self.shape, coeffs)
    }

    /// Re-expands around a new action origin: returns `g(theta, J) = f(theta,
    /// center + J)`. Degrees never increase, so the result is exact.
    pub fn recentered(&self, center: &[f64], shape: Shape) -> Result<FtSeries> {
        if center.len() != self.d() {
            return Err(Error::DimensionMismatch(self.d(), center.len()));
        }
        if shape.d != self.d() {
            return Err(Error::DimensionMismatch(self.d(), shape.d));
        }
        let d = self.d();
        let max_deg = self.max_degree() as usize;
        // binom[n][b] and powers center_j^p
        let mut binom = vec![vec![0.0f64; max_deg + 1]; max_deg + 1];
        for n in 0..=max_deg {
            binom[n][0] = 1.0;
            for b in 1..=n {
                binom[n][b] = binom[n - 1][b - 1] + if b < n { binom[n - 1][b] } else { 0.0 };
            }
        }
        let pow: Vec<Vec<f64>> = center
            .iter()
            .map(|&c| (0..=max_deg).map(|p| c.powi(p as i32)).collect())
            .collect();
        let mut acc: FxHashMap<Index, Complex64> = FxHashMap::default();
        for (idx, c) in &self.coeffs {
            if !idx.is_upper() {
                continue;
            }
            let mut partial: Vec<([u8; MAX_DIM], f64)> = vec![([0; MAX_DIM], 1.0)];
            for j in 0..d {
                let a = idx.alpha[j] as usize;
                let mut next = Vec::with_capacity(partial.len() * (a + 1));
                for (beta, w) in &partial {
                    for b in 0..=a {
                        let f = binom[a][b] * pow[j][a - b];
                        if f == 0.0 {
                            continue;
                        }
                        let mut nb = *beta;
                        nb[j] = b as u8;
                        next.push((nb, w * f));
                    }
                }
                partial = next;
            }
            for (beta, w) in partial {
                *acc.entry(Index::from_parts(idx.k, beta)).or_default() += c * w;
            }
        }
        Ok(collect_upper(shape, acc))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const PHI: f64 = 0.618_033_988_749_894_9;

    fn shape() -> Shape {
        Shape::new(2, 8, 6, 0.3, 0.5).unwrap()
    }

    fn zero() -> FtSeries {
        FtSeries::zero(shape()).unwrap()
    }

    fn close(a: Complex64, b: Complex64) -> bool {
        (a - b).norm() <= 1e-14 * (1.0 + b.norm())
    }

    #[test]
    fn lin_combine_examples() {
        let i1 = zero().with_monomial(&[1, 0], 1.0).unwrap();
        let two = lin_combine(1.0, &i1, 1.0, &i1).unwrap();
        assert_eq!(two, zero().with_monomial(&[1, 0], 2.0).unwrap());
        assert!(lin_combine(1.0, &i1, -1.0, &i1).unwrap().is_empty());
        let c = zero().with_cos(&[1, 0], &[0, 0], 1.0).unwrap();
        let c2 = lin_combine(2.0, &c, 0.0, &i1).unwrap();
        assert_eq!(c2, zero().with_cos(&[1, 0], &[0, 0], 2.0).unwrap());
    }

    #[test]
    fn product_to_sum() {
        let c = zero().with_cos(&[1, 0], &[0, 0], 1.0).unwrap();
        let p = c.mul(&c).unwrap();
        let expected = zero()
            .with_monomial(&[0, 0], 0.5)
            .unwrap()
            .with_cos(&[2, 0], &[0, 0], 0.5)
            .unwrap();
        assert!(p.loss.is_empty());
        for (idx, v) in expected.iter() {
            assert!(close(p.value.coeffs[idx], *v));
        }
        assert_eq!(p.value.len(), expected.len());
    }

    #[test]
    fn square_of_linear_form() {
        let w = zero().with_linear(&[1.0, PHI]).unwrap();
        let p = w.mul(&w).unwrap().value;
        assert!(close(p.coeff(&[0, 0], &[2, 0]), Complex64::new(1.0, 0.0)));
        assert!(close(p.coeff(&[0, 0], &[1, 1]), Complex64::new(2.0 * PHI, 0.0)));
        assert!(close(p.coeff(&[0, 0], &[0, 2]), Complex64::new(PHI * PHI, 0.0)));
        assert_eq!(p.len(), 3);
    }

    #[test]
    fn bracket_examples() {
        let i1 = zero().with_monomial(&[1, 0], 1.0).unwrap();
        let i2 = zero().with_monomial(&[0, 1], 1.0).unwrap();
        assert!(i1.poisson_bracket(&i2).unwrap().value.is_empty());
        let s = zero().with_sin(&[1, 0], &[0, 0], 1.0).unwrap();
        let b = s.poisson_bracket(&i1).unwrap().value;
        let expected = zero().with_cos(&[1, 0], &[0, 0], TAU).unwrap();
        assert!(b.sub(&expected).unwrap().majorant_norm(0.0, 1.0).value < 1e-13);
    }

    #[test]
    fn product_beyond_degree_cap_is_reported() {
        let small = Shape::new(2, 2, 6, 0.3, 0.5).unwrap();
        let f = FtSeries::zero(small).unwrap().with_monomial(&[2, 0], 3.0).unwrap();
        let g = FtSeries::zero(small).unwrap().with_cos(&[0, 1], &[1, 0], 2.0).unwrap();
        let p = f.mul(&g).unwrap();
        assert!(p.value.is_empty());
        // |3| * (|1| + |1|) at degree 3, |k| = 1
        assert!((p.loss.value(0.0, 1.0) - 6.0).abs() < 1e-14);
    }

    #[test]
    fn mode_cutoff_loss_is_reported() {
        let s = Shape::new(2, 4, 1, 0.3, 0.5).unwrap();
        let c = FtSeries::zero(s).unwrap().with_cos(&[1, 0], &[0, 0], 1.0).unwrap();
        let p = c.mul(&c).unwrap();
        assert!(close(p.value.coeff(&[0, 0], &[0, 0]), Complex64::new(0.5, 0.0)));
        assert_eq!(p.value.len(), 1);
        assert!((p.loss.value(0.0, 1.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn recentering_matches_shift() {
        let f = zero()
            .with_cos(&[1, -1], &[2, 1], 0.7)
            .unwrap()
            .with_monomial(&[3, 0], -0.2)
            .unwrap();
        let c = [0.1, -0.05];
        let g = f.recentered(&c, f.shape()).unwrap();
        let theta = [0.3, 0.8];
        let j = [0.02, 0.03];
        let a = f.evaluate(&theta, &[c[0] + j[0], c[1] + j[1]]).unwrap();
        let b = g.evaluate(&theta, &j).unwrap();
        assert!((a - b).abs() < 1e-14);
    }
}
