//! Truncated Fourier–Taylor series on `T^d x B_r`.
//!
//! A series is a finite sum `sum c_{k,alpha} e^{2 pi i k.theta} I^alpha` with
//! `|k|_1 <= K_max` and `|alpha| <= m_max`. Coefficients are stored sparsely in
//! canonical form: zero coefficients are never stored and the map is kept
//! Hermitian (`c_{-k,alpha} = conj(c_{k,alpha})`), so equality of series is
//! equality of maps and every series is real on real arguments.
//!
//! Sizes are measured with the weighted l1 majorant
//! `sum |c| e^{2 pi |k|_1 rho} r^{|alpha|}`, which dominates the sup-norm on
//! the complex strip `|Im theta| < rho` times the polydisc `|I_j| < r`.

mod eval;
mod json;
mod ops;

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::hash::{Hash, Hasher};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use eval::{Jet, SeriesEvaluator};
pub use json::{SeriesDoc, TermDoc};
pub use ops::{lin_combine, WithLoss};

/// Largest supported number of degrees of freedom.
pub const MAX_DIM: usize = 4;
/// Largest supported Fourier cutoff (modes are stored as `i8` components).
pub const MAX_MODE: u32 = 127;
/// Largest supported Taylor degree per action variable.
pub const MAX_DEGREE: u32 = 255;

/// Coefficients below this fraction of the majorant of their own degree are
/// dropped. The comparison is per degree because a divergent expansion can
/// span far more than the f64 range across degrees.
pub(crate) const DROP_TOLERANCE: f64 = 1e-30;

/// A (mode, multi-index) pair. Orders lexicographically by `k`, then `alpha`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Index {
    k: [i8; MAX_DIM],
    alpha: [u8; MAX_DIM],
}

impl Hash for Index {
    fn hash<H: Hasher>(&self, state: &mut H) {
        state.write_u64(self.packed());
    }
}

impl Index {
    pub fn new(k: &[i32], alpha: &[u32]) -> Result<Self> {
        if k.len() != alpha.len() {
            return Err(Error::DimensionMismatch(k.len(), alpha.len()));
        }
        if k.len() > MAX_DIM {
            return Err(Error::InvalidSeries(format!(
                "dimension {} exceeds the supported maximum {MAX_DIM}",
                k.len()
            )));
        }
        let mut idx = Index {
            k: [0; MAX_DIM],
            alpha: [0; MAX_DIM],
        };
        for (j, (&kj, &aj)) in k.iter().zip(alpha).enumerate() {
            if kj.unsigned_abs() > MAX_MODE {
                return Err(Error::InvalidSeries(format!("mode component {kj} out of range")));
            }
            if aj > MAX_DEGREE {
                return Err(Error::InvalidSeries(format!("exponent {aj} out of range")));
            }
            idx.k[j] = kj as i8;
            idx.alpha[j] = aj as u8;
        }
        Ok(idx)
    }

    pub(crate) fn from_parts(k: [i8; MAX_DIM], alpha: [u8; MAX_DIM]) -> Self {
        Index { k, alpha }
    }

    #[inline]
    fn packed(&self) -> u64 {
        let mut bytes = [0u8; 8];
        for j in 0..MAX_DIM {
            bytes[j] = self.k[j] as u8;
            bytes[MAX_DIM + j] = self.alpha[j];
        }
        u64::from_le_bytes(bytes)
    }

    #[inline]
    pub fn k(&self) -> &[i8; MAX_DIM] {
        &self.k
    }

    #[inline]
    pub fn alpha(&self) -> &[u8; MAX_DIM] {
        &self.alpha
    }

    pub fn k_vec(&self, d: usize) -> Vec<i32> {
        self.k[..d].iter().map(|&v| v as i32).collect()
    }

    pub fn alpha_vec(&self, d: usize) -> Vec<u32> {
        self.alpha[..d].iter().map(|&v| v as u32).collect()
    }

    #[inline]
    pub fn degree(&self) -> u32 {
        self.alpha.iter().map(|&a| a as u32).sum()
    }

    #[inline]
    pub fn mode_norm(&self) -> u32 {
        self.k.iter().map(|&v| v.unsigned_abs() as u32).sum()
    }

    #[inline]
    pub fn is_angle_free(&self) -> bool {
        self.k == [0; MAX_DIM]
    }

    /// Index of the Hermitian partner term (`k -> -k`).
    #[inline]
    pub fn conjugate(&self) -> Index {
        let mut k = self.k;
        for v in k.iter_mut() {
            *v = -*v;
        }
        Index { k, alpha: self.alpha }
    }

    /// True when `k = 0` or the first nonzero component of `k` is positive.
    #[inline]
    pub(crate) fn is_upper(&self) -> bool {
        is_upper_mode(&self.k)
    }
}

#[inline]
pub(crate) fn is_upper_mode(k: &[i8; MAX_DIM]) -> bool {
    for &v in k {
        if v != 0 {
            return v > 0;
        }
    }
    true
}

/// Dimension, cutoffs and analyticity widths shared by a family of series.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Shape {
    pub d: usize,
    pub m_max: u32,
    pub k_max: u32,
    pub rho: f64,
    pub r: f64,
}

impl Shape {
    pub fn new(d: usize, m_max: u32, k_max: u32, rho: f64, r: f64) -> Result<Self> {
        let shape = Shape {
            d,
            m_max,
            k_max,
            rho,
            r,
        };
        shape.validate()?;
        Ok(shape)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d < 2 || self.d > MAX_DIM {
            return Err(Error::InvalidSeries(format!(
                "dimension must lie in 2..={MAX_DIM}, got {}",
                self.d
            )));
        }
        if self.k_max > MAX_MODE {
            return Err(Error::InvalidSeries(format!("K_max {} exceeds {MAX_MODE}", self.k_max)));
        }
        if self.m_max > MAX_DEGREE {
            return Err(Error::InvalidSeries(format!("m_max {} exceeds {MAX_DEGREE}", self.m_max)));
        }
        if !(self.rho > 0.0 && self.rho.is_finite()) || !(self.r > 0.0 && self.r.is_finite()) {
            return Err(Error::InvalidSeries(format!(
                "widths must be positive and finite (rho = {}, r = {})",
                self.rho, self.r
            )));
        }
        Ok(())
    }

    pub fn with_cutoffs(self, m_max: u32, k_max: u32) -> Self {
        Shape { m_max, k_max, ..self }
    }

    pub fn with_widths(self, rho: f64, r: f64) -> Self {
        Shape { rho, r, ..self }
    }

    pub(crate) fn admits(&self, idx: &Index) -> bool {
        idx.degree() <= self.m_max && idx.mode_norm() <= self.k_max
    }
}

/// Certified upper bound for the sup-norm on the stated widths.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MajorantNorm {
    pub value: f64,
    pub rho: f64,
    pub r: f64,
}

/// Majorant mass of discarded coefficients, binned by (degree, |k|_1) so that
/// it can be evaluated at any widths afterwards.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TruncationLoss {
    bins: BTreeMap<(u32, u32), f64>,
}

impl TruncationLoss {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, degree: u32, mode_norm: u32, mass: f64) {
        if mass > 0.0 {
            *self.bins.entry((degree, mode_norm)).or_insert(0.0) += mass;
        }
    }

    pub fn merge(&mut self, other: &TruncationLoss) {
        for (&(deg, kn), &m) in &other.bins {
            self.add(deg, kn, m);
        }
    }

    pub fn scaled(&self, factor: f64) -> TruncationLoss {
        TruncationLoss {
            bins: self.bins.iter().map(|(&key, &m)| (key, m * factor.abs())).collect(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    pub fn value(&self, rho: f64, r: f64) -> f64 {
        self.bins
            .iter()
            .map(|(&(deg, kn), &m)| m * (TAU * kn as f64 * rho).exp() * r.powi(deg as i32))
            .sum()
    }

    pub fn bins(&self) -> impl Iterator<Item = ((u32, u32), f64)> + '_ {
        self.bins.iter().map(|(&k, &v)| (k, v))
    }
}

/// A truncated Fourier–Taylor series. Immutable after construction; every
/// operation returns a fresh value.
#[derive(Clone, Debug, PartialEq)]
pub struct FtSeries {
    shape: Shape,
    coeffs: BTreeMap<Index, Complex64>,
}

impl FtSeries {
    pub fn zero(shape: Shape) -> Result<Self> {
        shape.validate()?;
        Ok(FtSeries {
            shape,
            coeffs: BTreeMap::new(),
        })
    }

    /// Builds a series from explicit terms. Every stored term must come with its
    /// Hermitian partner (up to a relative tolerance of 1e-12); partners are
    /// then made exactly conjugate.
    pub fn from_terms<I>(shape: Shape, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Vec<i32>, Vec<u32>, Complex64)>,
    {
        shape.validate()?;
        let mut coeffs = BTreeMap::new();
        for (k, alpha, c) in terms {
            if k.len() != shape.d || alpha.len() != shape.d {
                return Err(Error::DimensionMismatch(shape.d, k.len().max(alpha.len())));
            }
            let idx = Index::new(&k, &alpha)?;
            if !shape.admits(&idx) {
                return Err(Error::InvalidSeries(format!(
                    "term k = {k:?}, alpha = {alpha:?} exceeds the cutoffs"
                )));
            }
            if !(c.re.is_finite() && c.im.is_finite()) {
                return Err(Error::InvalidSeries("non-finite coefficient".into()));
            }
            if coeffs.insert(idx, c).is_some() {
                return Err(Error::InvalidSeries(format!(
                    "duplicate term k = {k:?}, alpha = {alpha:?}"
                )));
            }
        }
        let mut series = FtSeries { shape, coeffs };
        series.enforce_hermitian(1e-12)?;
        series.canonicalize();
        Ok(series)
    }

    /// Wraps a map that is Hermitian by construction.
    pub(crate) fn from_map(shape: Shape, coeffs: BTreeMap<Index, Complex64>) -> Self {
        let mut s = FtSeries { shape, coeffs };
        s.canonicalize();
        s
    }

    fn enforce_hermitian(&mut self, rel_tol: f64) -> Result<()> {
        let scale = self.coeffs.values().map(|c| c.norm()).fold(0.0, f64::max);
        let tol = rel_tol * scale.max(f64::MIN_POSITIVE);
        let keys: Vec<Index> = self.coeffs.keys().copied().collect();
        for idx in keys {
            let c = self.coeffs[&idx];
            if idx.is_angle_free() {
                if c.im.abs() > tol {
                    return Err(Error::BrokenSymmetry {
                        residue: c.im.abs(),
                        tolerance: tol,
                    });
                }
                self.coeffs.insert(idx, Complex64::new(c.re, 0.0));
            } else if idx.is_upper() {
                let partner = idx.conjugate();
                let p = self.coeffs.get(&partner).copied().unwrap_or_default();
                let defect = (p - c.conj()).norm();
                if defect > tol {
                    return Err(Error::BrokenSymmetry {
                        residue: defect,
                        tolerance: tol,
                    });
                }
                let avg = (c + p.conj()) * 0.5;
                self.coeffs.insert(idx, avg);
                self.coeffs.insert(partner, avg.conj());
            }
        }
        Ok(())
    }

    /// Drops zeros and coefficients negligible within their degree.
    pub(crate) fn canonicalize(&mut self) {
        let (rho, r) = (self.shape.rho, self.shape.r);
        let weight = |idx: &Index| (TAU * idx.mode_norm() as f64 * rho).exp() * r.powi(idx.degree() as i32);
        let mut per_degree: BTreeMap<u32, f64> = BTreeMap::new();
        for (idx, c) in &self.coeffs {
            *per_degree.entry(idx.degree()).or_default() += c.norm() * weight(idx);
        }
        self.coeffs.retain(|idx, c| {
            // no negative zeros, so equal series serialize identically
            c.re += 0.0;
            c.im += 0.0;
            let m = c.norm() * weight(idx);
            m != 0.0 && m >= DROP_TOLERANCE * per_degree[&idx.degree()]
        });
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn d(&self) -> usize {
        self.shape.d
    }

    pub fn m_max(&self) -> u32 {
        self.shape.m_max
    }

    pub fn k_max(&self) -> u32 {
        self.shape.k_max
    }

    pub fn rho(&self) -> f64 {
        self.shape.rho
    }

    pub fn r(&self) -> f64 {
        self.shape.r
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Sorted by `(k, alpha)`.
    pub fn iter(&self) -> impl Iterator<Item = (&Index, &Complex64)> + '_ {
        self.coeffs.iter()
    }

    pub fn coeff(&self, k: &[i32], alpha: &[u32]) -> Complex64 {
        match Index::new(k, alpha) {
            Ok(idx) => self.coeffs.get(&idx).copied().unwrap_or_default(),
            Err(_) => Complex64::default(),
        }
    }

    /// Same coefficients, different widths/cutoffs metadata. Terms that no
    /// longer fit the cutoffs are dropped and reported.
    pub fn reshaped(&self, shape: Shape) -> Result<WithLoss<FtSeries>> {
        if shape.d != self.shape.d {
            return Err(Error::DimensionMismatch(self.shape.d, shape.d));
        }
        shape.validate()?;
        let mut loss = TruncationLoss::new();
        let mut coeffs = BTreeMap::new();
        for (idx, c) in &self.coeffs {
            if shape.admits(idx) {
                coeffs.insert(*idx, *c);
            } else {
                loss.add(idx.degree(), idx.mode_norm(), c.norm());
            }
        }
        Ok(WithLoss {
            value: FtSeries::from_map(shape, coeffs),
            loss,
        })
    }

    pub fn is_angle_free(&self) -> bool {
        self.coeffs.keys().all(Index::is_angle_free)
    }

    /// Largest `|k|_1` among stored terms.
    pub fn max_mode(&self) -> u32 {
        self.coeffs.keys().map(Index::mode_norm).max().unwrap_or(0)
    }

    /// Largest `|alpha|` among stored terms.
    pub fn max_degree(&self) -> u32 {
        self.coeffs.keys().map(Index::degree).max().unwrap_or(0)
    }

    fn majorant_value(&self, rho: f64, r: f64) -> f64 {
        self.coeffs
            .iter()
            .map(|(idx, c)| {
                c.norm() * (TAU * idx.mode_norm() as f64 * rho).exp() * r.powi(idx.degree() as i32)
            })
            .sum()
    }

    /// Weighted l1 majorant `sum |c| e^{2 pi |k|_1 rho} r^{|alpha|}`.
    pub fn majorant_norm(&self, rho: f64, r: f64) -> MajorantNorm {
        MajorantNorm {
            value: self.majorant_value(rho, r),
            rho,
            r,
        }
    }

    /// Unweighted coefficient mass binned by (degree, |k|_1).
    pub fn mass_profile(&self) -> TruncationLoss {
        let mut p = TruncationLoss::new();
        for (idx, c) in &self.coeffs {
            p.add(idx.degree(), idx.mode_norm(), c.norm());
        }
        p
    }

    /// Largest deviation from exact Hermitian symmetry (0 for canonical series).
    pub fn hermitian_defect(&self) -> f64 {
        self.coeffs
            .iter()
            .map(|(idx, c)| {
                if idx.is_angle_free() {
                    c.im.abs()
                } else {
                    let p = self.coeffs.get(&idx.conjugate()).copied().unwrap_or_default();
                    (p - c.conj()).norm()
                }
            })
            .fold(0.0, f64::max)
    }

    // ----- builders -------------------------------------------------------

    fn insert_add(&mut self, idx: Index, c: Complex64) -> Result<()> {
        if !self.shape.admits(&idx) {
            return Err(Error::InvalidSeries(format!(
                "term {:?}/{:?} exceeds the cutoffs",
                idx.k_vec(self.d()),
                idx.alpha_vec(self.d())
            )));
        }
        *self.coeffs.entry(idx).or_default() += c;
        Ok(())
    }

    /// Adds `a * I^alpha`.
    pub fn with_monomial(mut self, alpha: &[u32], a: f64) -> Result<Self> {
        self.check_len(alpha.len())?;
        let idx = Index::new(&vec![0; self.d()], alpha)?;
        self.insert_add(idx, Complex64::new(a, 0.0))?;
        self.canonicalize();
        Ok(self)
    }

    /// Adds `a * cos(2 pi k.theta) * I^alpha`.
    pub fn with_cos(mut self, k: &[i32], alpha: &[u32], a: f64) -> Result<Self> {
        self.check_len(k.len())?;
        self.check_len(alpha.len())?;
        let idx = Index::new(k, alpha)?;
        if idx.is_angle_free() {
            self.insert_add(idx, Complex64::new(a, 0.0))?;
        } else {
            self.insert_add(idx, Complex64::new(0.5 * a, 0.0))?;
            self.insert_add(idx.conjugate(), Complex64::new(0.5 * a, 0.0))?;
        }
        self.canonicalize();
        Ok(self)
    }

    /// Adds `a * sin(2 pi k.theta) * I^alpha`.
    pub fn with_sin(mut self, k: &[i32], alpha: &[u32], a: f64) -> Result<Self> {
        self.check_len(k.len())?;
        self.check_len(alpha.len())?;
        let idx = Index::new(k, alpha)?;
        if !idx.is_angle_free() {
            self.insert_add(idx, Complex64::new(0.0, -0.5 * a))?;
            self.insert_add(idx.conjugate(), Complex64::new(0.0, 0.5 * a))?;
        }
        self.canonicalize();
        Ok(self)
    }

    /// Adds `omega . I`.
    pub fn with_linear(mut self, omega: &[f64]) -> Result<Self> {
        self.check_len(omega.len())?;
        let d = self.d();
        for (j, &w) in omega.iter().enumerate() {
            let mut alpha = vec![0u32; d];
            alpha[j] = 1;
            self.insert_add(Index::new(&vec![0; d], &alpha)?, Complex64::new(w, 0.0))?;
        }
        self.canonicalize();
        Ok(self)
    }

    fn check_len(&self, n: usize) -> Result<()> {
        if n != self.d() {
            Err(Error::DimensionMismatch(self.d(), n))
        } else {
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shape() -> Shape {
        Shape::new(2, 6, 4, 0.5, 1.0).unwrap()
    }

    #[test]
    fn index_order_is_lexicographic_in_k_then_alpha() {
        let a = Index::new(&[-1, 0], &[3, 0]).unwrap();
        let b = Index::new(&[0, -2], &[0, 0]).unwrap();
        let c = Index::new(&[0, -2], &[0, 1]).unwrap();
        assert!(a < b && b < c);
    }

    #[test]
    fn builders_store_hermitian_pairs() {
        let f = FtSeries::zero(shape())
            .unwrap()
            .with_cos(&[1, 0], &[1, 0], 2.0)
            .unwrap()
            .with_sin(&[0, 1], &[0, 0], 1.0)
            .unwrap();
        assert_eq!(f.len(), 4);
        assert_eq!(f.hermitian_defect(), 0.0);
        assert_eq!(f.coeff(&[1, 0], &[1, 0]), Complex64::new(1.0, 0.0));
        assert_eq!(f.coeff(&[0, -1], &[0, 0]), Complex64::new(0.0, 0.5));
    }

    #[test]
    fn from_terms_rejects_missing_partner() {
        let err = FtSeries::from_terms(shape(), vec![(vec![1, 0], vec![0, 0], Complex64::new(1.0, 0.0))]);
        assert!(matches!(err, Err(Error::BrokenSymmetry { .. })));
    }

    #[test]
    fn from_terms_rejects_terms_beyond_cutoffs() {
        let err = FtSeries::from_terms(shape(), vec![(vec![0, 0], vec![7, 0], Complex64::new(1.0, 0.0))]);
        assert!(matches!(err, Err(Error::InvalidSeries(_))));
    }

    #[test]
    fn zeros_are_not_stored() {
        let f = FtSeries::zero(shape())
            .unwrap()
            .with_monomial(&[1, 0], 1.0)
            .unwrap()
            .with_monomial(&[1, 0], -1.0)
            .unwrap();
        assert!(f.is_empty());
    }

    #[test]
    fn loss_evaluates_with_weights() {
        let mut loss = TruncationLoss::new();
        loss.add(2, 1, 3.0);
        let v = loss.value(0.1, 0.5);
        assert!((v - 3.0 * (TAU * 0.1).exp() * 0.25).abs() < 1e-15);
    }
}
