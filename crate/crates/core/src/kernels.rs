//! Product kernels `K(z) = Π_j k(z_j)` and their partial derivatives.
//!
//! A kernel is described by a one-dimensional [`Profile`]; the builtins are
//! the Gaussian, Epanechnikov and quartic (biweight) profiles. Everything the
//! rate functions need from the kernel (`∫[∂^[α]K]²`, `‖∂^[α]K‖_∞`, the moment
//! order `q`, the Lebesgue measures of `{K > 0}` and `{K < 0}`) is filled at
//! construction, in closed form when one exists and by quadrature otherwise.

use alloc::string::ToString;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;
use num_traits::Float;

use crate::error::{Error, Result};
use crate::quadrature::{integrate_box, integrate_fn, QuadratureOptions};
use crate::special::{factorial, std_normal_derivative, FRAC_1_SQRT_2PI};

/// A derivative multi-index `[α] = (α_1, …, α_d)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MultiIndex {
    alpha: Vec<u32>,
}

impl MultiIndex {
    pub fn new(alpha: Vec<u32>) -> Result<Self> {
        if alpha.is_empty() {
            return Err(Error::InvalidDimension(0));
        }
        Ok(Self { alpha })
    }

    /// The zero multi-index (the density itself) in dimension `d`.
    pub fn zero(d: usize) -> Result<Self> {
        Self::new(alloc::vec![0; d])
    }

    pub fn dim(&self) -> usize {
        self.alpha.len()
    }

    /// `|α| = α_1 + … + α_d`.
    pub fn order(&self) -> u32 {
        self.alpha.iter().sum()
    }

    pub fn components(&self) -> &[u32] {
        &self.alpha
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        for (i, a) in self.alpha.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{a}")?;
        }
        f.write_str(")")
    }
}

/// Lebesgue measure of a set, possibly infinite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SupportMeasure {
    Finite(f64),
    Infinite,
}

impl SupportMeasure {
    pub fn is_zero(&self) -> bool {
        matches!(self, SupportMeasure::Finite(x) if *x == 0.0)
    }

    pub fn as_f64(&self) -> f64 {
        match self {
            SupportMeasure::Finite(x) => *x,
            SupportMeasure::Infinite => f64::INFINITY,
        }
    }
}

/// One-dimensional kernel profile `k` and its derivatives.
pub trait Profile: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;

    /// `k^{(order)}(y)`.
    fn eval(&self, order: u32, y: f64) -> f64;

    /// Highest derivative order that exists everywhere.
    fn max_order(&self) -> u32;

    /// `|k^{(m)}|` is negligible outside `[-radius, radius]` for every supported `m`.
    fn radius(&self) -> f64;

    /// The `q` such that moments `1..q-1` vanish.
    fn moment_order(&self) -> u32;

    fn is_even(&self) -> bool {
        true
    }

    fn l2_norm_sq(&self, _order: u32) -> Option<f64> {
        None
    }

    fn sup_norm(&self, _order: u32) -> Option<f64> {
        None
    }

    /// Measures of `{k > 0}` and `{k < 0}` on the real line.
    fn sign_measures(&self) -> Option<(SupportMeasure, SupportMeasure)> {
        None
    }
}

#[derive(Debug, Clone, Copy)]
struct GaussianProfile;

impl Profile for GaussianProfile {
    fn name(&self) -> &str {
        "gaussian"
    }

    fn eval(&self, order: u32, y: f64) -> f64 {
        std_normal_derivative(order, y)
    }

    fn max_order(&self) -> u32 {
        6
    }

    fn radius(&self) -> f64 {
        // 2·Φ(-9) ≈ 2e-19; He_6(9)·φ(9) stays below 1e-12.
        9.0
    }

    fn moment_order(&self) -> u32 {
        2
    }

    fn l2_norm_sq(&self, order: u32) -> Option<f64> {
        // ∫ [φ^{(m)}]² = (2m)! / (2^{2m+1} m! √π)
        let m = order;
        Some(factorial(2 * m) / (2f64.powi(2 * m as i32 + 1) * factorial(m) * core::f64::consts::PI.sqrt()))
    }

    fn sup_norm(&self, order: u32) -> Option<f64> {
        match order {
            0 | 2 => Some(FRAC_1_SQRT_2PI),
            1 => Some(FRAC_1_SQRT_2PI * (-0.5f64).exp()),
            _ => None,
        }
    }

    fn sign_measures(&self) -> Option<(SupportMeasure, SupportMeasure)> {
        Some((SupportMeasure::Infinite, SupportMeasure::Finite(0.0)))
    }
}

#[derive(Debug, Clone, Copy)]
struct EpanechnikovProfile;

impl Profile for EpanechnikovProfile {
    fn name(&self) -> &str {
        "epanechnikov"
    }

    fn eval(&self, order: u32, y: f64) -> f64 {
        if order > 0 || y.abs() >= 1.0 {
            return 0.0;
        }
        0.75 * (1.0 - y * y)
    }

    fn max_order(&self) -> u32 {
        0
    }

    fn radius(&self) -> f64 {
        1.0
    }

    fn moment_order(&self) -> u32 {
        2
    }

    fn l2_norm_sq(&self, order: u32) -> Option<f64> {
        (order == 0).then_some(0.6)
    }

    fn sup_norm(&self, order: u32) -> Option<f64> {
        (order == 0).then_some(0.75)
    }

    fn sign_measures(&self) -> Option<(SupportMeasure, SupportMeasure)> {
        Some((SupportMeasure::Finite(2.0), SupportMeasure::Finite(0.0)))
    }
}

#[derive(Debug, Clone, Copy)]
struct QuarticProfile;

impl Profile for QuarticProfile {
    fn name(&self) -> &str {
        "quartic"
    }

    fn eval(&self, order: u32, y: f64) -> f64 {
        if y.abs() >= 1.0 {
            return 0.0;
        }
        let w = 1.0 - y * y;
        match order {
            0 => 0.9375 * w * w,
            1 => -3.75 * y * w,
            _ => 0.0,
        }
    }

    fn max_order(&self) -> u32 {
        1
    }

    fn radius(&self) -> f64 {
        1.0
    }

    fn moment_order(&self) -> u32 {
        2
    }

    fn l2_norm_sq(&self, order: u32) -> Option<f64> {
        match order {
            0 => Some(5.0 / 7.0),
            1 => Some(15.0 / 7.0),
            _ => None,
        }
    }

    fn sup_norm(&self, order: u32) -> Option<f64> {
        match order {
            0 => Some(0.9375),
            1 => Some(2.5 / 3f64.sqrt()),
            _ => None,
        }
    }

    fn sign_measures(&self) -> Option<(SupportMeasure, SupportMeasure)> {
        Some((SupportMeasure::Finite(2.0), SupportMeasure::Finite(0.0)))
    }
}

/// Names of the shipped kernels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelKind {
    Gaussian,
    Epanechnikov,
    Quartic,
}

impl KernelKind {
    pub fn name(&self) -> &'static str {
        match self {
            KernelKind::Gaussian => "gaussian",
            KernelKind::Epanechnikov => "epanechnikov",
            KernelKind::Quartic => "quartic",
        }
    }

    fn profile(&self) -> Arc<dyn Profile> {
        match self {
            KernelKind::Gaussian => Arc::new(GaussianProfile),
            KernelKind::Epanechnikov => Arc::new(EpanechnikovProfile),
            KernelKind::Quartic => Arc::new(QuarticProfile),
        }
    }
}

impl FromStr for KernelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gaussian" | "normal" => Ok(KernelKind::Gaussian),
            "epanechnikov" => Ok(KernelKind::Epanechnikov),
            "quartic" | "biweight" => Ok(KernelKind::Quartic),
            other => Err(Error::UnsupportedKernel(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct OrderConstants {
    l2_norm_sq: f64,
    sup_norm: f64,
}

/// An immutable product kernel in dimension `d` with its analytic constants.
#[derive(Debug, Clone)]
pub struct KernelModel {
    dim: usize,
    profile: Arc<dyn Profile>,
    per_order: Vec<OrderConstants>,
    positive_measure: SupportMeasure,
    negative_measure: SupportMeasure,
}

/// Instantiates one of the shipped kernels in dimension `d`.
pub fn builtin_kernel(kind: KernelKind, d: usize) -> Result<KernelModel> {
    KernelModel::from_profile(kind.profile(), d)
}

impl KernelModel {
    pub fn builtin(kind: KernelKind, d: usize) -> Result<Self> {
        builtin_kernel(kind, d)
    }

    /// Builds the product kernel of `profile` in dimension `d`. Constants the
    /// profile does not provide in closed form are computed numerically.
    pub fn from_profile(profile: Arc<dyn Profile>, d: usize) -> Result<Self> {
        if d < 1 {
            return Err(Error::InvalidDimension(d));
        }
        let opts = QuadratureOptions::default().with_abs_tol(1e-12);
        let radius = profile.radius();
        let mut per_order = Vec::new();
        for m in 0..=profile.max_order() {
            let l2 = match profile.l2_norm_sq(m) {
                Some(v) => v,
                None => integrate_fn(|y| profile.eval(m, y).powi(2), -radius, radius, &opts)?,
            };
            let sup = match profile.sup_norm(m) {
                Some(v) => v,
                None => scan_sup(|y| profile.eval(m, y).abs(), -radius, radius),
            };
            per_order.push(OrderConstants {
                l2_norm_sq: l2,
                sup_norm: sup,
            });
        }
        let (p1, n1) = profile
            .sign_measures()
            .unwrap_or_else(|| scan_sign_measures(&*profile, radius));
        let (positive_measure, negative_measure) = product_sign_measures(p1, n1, d);
        Ok(Self {
            dim: d,
            profile,
            per_order,
            positive_measure,
            negative_measure,
        })
    }

    pub fn name(&self) -> &str {
        self.profile.name()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn profile(&self) -> &dyn Profile {
        &*self.profile
    }

    /// `K(z)`.
    #[inline]
    pub fn eval(&self, z: &[f64]) -> f64 {
        z.iter().map(|&zj| self.profile.eval(0, zj)).product()
    }

    /// `∂^[α]K(z)`. `alpha` must be supported (see [`KernelModel::check_alpha`]).
    #[inline]
    pub fn deriv_eval(&self, alpha: &MultiIndex, z: &[f64]) -> f64 {
        debug_assert_eq!(alpha.dim(), z.len());
        alpha
            .components()
            .iter()
            .zip(z)
            .map(|(&m, &zj)| self.profile.eval(m, zj))
            .product()
    }

    /// One factor `k^{(order)}(y)` of the product.
    #[inline]
    pub fn factor(&self, order: u32, y: f64) -> f64 {
        self.profile.eval(order, y)
    }

    pub fn supports(&self, alpha: &MultiIndex) -> bool {
        alpha.dim() == self.dim && alpha.components().iter().all(|&m| m <= self.profile.max_order())
    }

    pub fn check_alpha(&self, alpha: &MultiIndex) -> Result<()> {
        if alpha.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: alpha.dim(),
            });
        }
        match alpha.components().iter().find(|&&m| m > self.profile.max_order()) {
            Some(&m) => Err(Error::UnsupportedDerivative {
                kernel: self.profile.name().to_string(),
                order: m,
            }),
            None => Ok(()),
        }
    }

    /// `∫[∂^[α]K(z)]² dz`.
    pub fn l2_norm_sq(&self, alpha: &MultiIndex) -> Result<f64> {
        self.check_alpha(alpha)?;
        Ok(alpha
            .components()
            .iter()
            .map(|&m| self.per_order[m as usize].l2_norm_sq)
            .product())
    }

    /// `‖∂^[α]K‖_∞`.
    pub fn sup_norm(&self, alpha: &MultiIndex) -> Result<f64> {
        self.check_alpha(alpha)?;
        Ok(alpha
            .components()
            .iter()
            .map(|&m| self.per_order[m as usize].sup_norm)
            .product())
    }

    pub fn moment_order(&self) -> u32 {
        self.profile.moment_order()
    }

    /// `λ(S₊)` with `S₊ = {K > 0}`.
    pub fn positive_support_measure(&self) -> SupportMeasure {
        self.positive_measure
    }

    /// `λ(S₋)` with `S₋ = {K < 0}`.
    pub fn negative_support_measure(&self) -> SupportMeasure {
        self.negative_measure
    }

    pub fn is_nonnegative(&self) -> bool {
        self.negative_measure.is_zero()
    }

    pub fn support_radius(&self) -> f64 {
        self.profile.radius()
    }

    /// `∫ y_j^s K(y) dy` (coordinate `j` is zero-based).
    pub fn kernel_moment(&self, s: u32, j: usize) -> Result<f64> {
        if s < 1 {
            return Err(Error::InvalidParameter("moment order s must be >= 1".to_string()));
        }
        if j >= self.dim {
            return Err(Error::InvalidParameter(alloc::format!(
                "coordinate {j} out of range for d = {}",
                self.dim
            )));
        }
        let opts = QuadratureOptions::default();
        let r = self.support_radius();
        let moment = integrate_fn(|y| y.powi(s as i32) * self.factor(0, y), -r, r, &opts)?;
        let mass = integrate_fn(|y| self.factor(0, y), -r, r, &opts)?;
        Ok(moment * mass.powi(self.dim as i32 - 1))
    }

    /// `∫ K(z) dz` by quadrature over the truncation box.
    pub fn total_mass(&self) -> Result<f64> {
        let r = self.support_radius();
        let lo = alloc::vec![-r; self.dim];
        let hi = alloc::vec![r; self.dim];
        integrate_box(|z| Ok(self.eval(z)), &lo, &hi, &QuadratureOptions::default())
    }

    /// `∫ ‖z‖^q |K(z)| dz` with the Euclidean norm.
    pub fn abs_norm_moment(&self, q: u32) -> Result<f64> {
        let r = self.support_radius();
        let lo = alloc::vec![-r; self.dim];
        let hi = alloc::vec![r; self.dim];
        integrate_box(
            |z| {
                let norm_sq: f64 = z.iter().map(|v| v * v).sum();
                Ok(norm_sq.sqrt().powi(q as i32) * self.eval(z).abs())
            },
            &lo,
            &hi,
            &QuadratureOptions::default(),
        )
    }

    /// Largest discrepancy between `∂^[α]K(x)` and the central difference
    /// (step `h`) of `∂^[α - e_j]K` along each coordinate `j` with `α_j ≥ 1`.
    pub fn finite_difference_check(&self, alpha: &MultiIndex, x: &[f64], h: f64) -> f64 {
        let exact = self.deriv_eval(alpha, x);
        let mut worst: f64 = 0.0;
        let mut lowered = alpha.components().to_vec();
        let mut probe = x.to_vec();
        for j in 0..alpha.dim() {
            if alpha.components()[j] == 0 {
                continue;
            }
            lowered[j] -= 1;
            let lower = MultiIndex { alpha: lowered.clone() };
            probe[j] = x[j] + h;
            let plus = self.deriv_eval(&lower, &probe);
            probe[j] = x[j] - h;
            let minus = self.deriv_eval(&lower, &probe);
            probe[j] = x[j];
            lowered[j] += 1;
            worst = worst.max((exact - (plus - minus) / (2.0 * h)).abs());
        }
        worst
    }
}

fn scan_sup<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64) -> f64 {
    const STEPS: usize = 4000;
    let step = (hi - lo) / STEPS as f64;
    let mut best_i = 0;
    let mut best = f64::NEG_INFINITY;
    for i in 0..=STEPS {
        let v = f(lo + step * i as f64);
        if v > best {
            best = v;
            best_i = i;
        }
    }
    // golden-section refinement around the best grid point
    let (mut a, mut b) = (lo + step * (best_i as f64 - 1.0), lo + step * (best_i as f64 + 1.0));
    let g = 0.618_033_988_749_895;
    for _ in 0..80 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if f(c) > f(d) {
            b = d;
        } else {
            a = c;
        }
    }
    best.max(f(0.5 * (a + b)))
}

fn scan_sign_measures(profile: &dyn Profile, radius: f64) -> (SupportMeasure, SupportMeasure) {
    const STEPS: usize = 200_000;
    let step = 2.0 * radius / STEPS as f64;
    let (mut pos, mut neg) = (0.0, 0.0);
    for i in 0..STEPS {
        let v = profile.eval(0, -radius + step * (i as f64 + 0.5));
        if v > 0.0 {
            pos += step;
        } else if v < 0.0 {
            neg += step;
        }
    }
    (SupportMeasure::Finite(pos), SupportMeasure::Finite(neg))
}

/// Measures of `{Π k(z_j) > 0}` and `{Π k(z_j) < 0}` from the 1-D measures.
fn product_sign_measures(p: SupportMeasure, n: SupportMeasure, d: usize) -> (SupportMeasure, SupportMeasure) {
    use SupportMeasure::{Finite, Infinite};
    if d == 1 {
        return (p, n);
    }
    match (p, n) {
        (Finite(p), Finite(n)) => {
            let total = (p + n).powi(d as i32);
            let diff = (p - n).powi(d as i32);
            (Finite(0.5 * (total + diff)), Finite(0.5 * (total - diff)))
        }
        (p, n) if n.is_zero() => match p {
            Finite(p) => (Finite(p.powi(d as i32)), Finite(0.0)),
            Infinite => (Infinite, Finite(0.0)),
        },
        (p, _) if p.is_zero() => {
            // every coordinate negative: sign is (-1)^d
            if d.is_multiple_of(2) {
                (Infinite, Finite(0.0))
            } else {
                (Finite(0.0), Infinite)
            }
        }
        _ => (Infinite, Infinite),
    }
}

/// Convenience constructor used by config code.
pub fn kernel_by_name(name: &str, d: usize) -> Result<KernelModel> {
    builtin_kernel(name.parse::<KernelKind>()?, d)
}

impl fmt::Display for KernelModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(d={})", self.profile.name(), self.dim)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn gaussian(d: usize) -> KernelModel {
        builtin_kernel(KernelKind::Gaussian, d).unwrap()
    }

    #[test]
    fn multi_index_order_is_component_sum() {
        let a = MultiIndex::new(vec![1, 0, 2]).unwrap();
        assert_eq!(a.order(), 3);
        assert_eq!(a.dim(), 3);
        assert!(MultiIndex::new(vec![]).is_err());
    }

    #[test]
    fn rejects_bad_name_and_dimension() {
        assert!(matches!("triangle".parse::<KernelKind>(), Err(Error::UnsupportedKernel(_))));
        assert_eq!(builtin_kernel(KernelKind::Gaussian, 0).unwrap_err(), Error::InvalidDimension(0));
    }

    #[test]
    fn builtins_integrate_to_one() {
        for kind in [KernelKind::Gaussian, KernelKind::Epanechnikov, KernelKind::Quartic] {
            for d in 1..=2 {
                let k = builtin_kernel(kind, d).unwrap();
                assert!((k.total_mass().unwrap() - 1.0).abs() < 1e-9, "{kind:?} d={d}");
            }
        }
    }

    #[test]
    fn gaussian_l2_matches_quadrature() {
        let k = gaussian(1);
        let opts = QuadratureOptions::default().with_abs_tol(1e-13);
        for m in 0..=4u32 {
            let alpha = MultiIndex::new(vec![m]).unwrap();
            let oracle = integrate_fn(|y| std_normal_derivative(m, y).powi(2), -12.0, 12.0, &opts).unwrap();
            assert!((k.l2_norm_sq(&alpha).unwrap() - oracle).abs() < 1e-12, "m={m}");
        }
        let l2 = k.l2_norm_sq(&MultiIndex::zero(1).unwrap()).unwrap();
        assert!((l2 - 0.282_094_791_773_878_14).abs() < 1e-15);
    }

    #[test]
    fn compact_l2_and_sup_match_numerics() {
        let opts = QuadratureOptions::default().with_abs_tol(1e-13);
        for kind in [KernelKind::Epanechnikov, KernelKind::Quartic] {
            let k = builtin_kernel(kind, 1).unwrap();
            for m in 0..=k.profile().max_order() {
                let alpha = MultiIndex::new(vec![m]).unwrap();
                let l2 = integrate_fn(|y| k.factor(m, y).powi(2), -1.0, 1.0, &opts).unwrap();
                assert!((k.l2_norm_sq(&alpha).unwrap() - l2).abs() < 1e-12);
                let sup = scan_sup(|y| k.factor(m, y).abs(), -1.0, 1.0);
                assert!((k.sup_norm(&alpha).unwrap() - sup).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn support_measures() {
        let e = builtin_kernel(KernelKind::Epanechnikov, 1).unwrap();
        assert_eq!(e.negative_support_measure(), SupportMeasure::Finite(0.0));
        assert_eq!(e.positive_support_measure(), SupportMeasure::Finite(2.0));
        let e2 = builtin_kernel(KernelKind::Quartic, 2).unwrap();
        assert_eq!(e2.positive_support_measure(), SupportMeasure::Finite(4.0));
        assert_eq!(gaussian(3).positive_support_measure(), SupportMeasure::Infinite);
        assert!(gaussian(3).is_nonnegative());
    }

    #[test]
    fn kernel_moments() {
        let g = gaussian(1);
        assert!(g.kernel_moment(1, 0).unwrap().abs() < 1e-12);
        assert!((g.kernel_moment(2, 0).unwrap() - 1.0).abs() < 1e-10);
        let e = builtin_kernel(KernelKind::Epanechnikov, 1).unwrap();
        assert!((e.kernel_moment(2, 0).unwrap() - 0.2).abs() < 1e-12);
        assert!(e.kernel_moment(0, 0).is_err());
        assert!(e.kernel_moment(1, 1).is_err());
    }

    #[test]
    fn finite_differences() {
        let g = gaussian(1);
        let a1 = MultiIndex::new(vec![1]).unwrap();
        assert!(g.finite_difference_check(&a1, &[0.0], 1e-4) <= 1e-6);
        assert!(g.finite_difference_check(&a1, &[1.0], 1e-4) <= 1e-6);
        let q = builtin_kernel(KernelKind::Quartic, 1).unwrap();
        assert!(q.finite_difference_check(&a1, &[0.5], 1e-4) <= 1e-6);
        let g2 = gaussian(2);
        let a = MultiIndex::new(vec![2, 1]).unwrap();
        assert!(g2.finite_difference_check(&a, &[0.3, -0.7], 1e-4) <= 1e-6);
    }

    #[test]
    fn unsupported_derivative_is_reported() {
        let e = builtin_kernel(KernelKind::Epanechnikov, 1).unwrap();
        let a1 = MultiIndex::new(vec![1]).unwrap();
        assert!(matches!(e.l2_norm_sq(&a1), Err(Error::UnsupportedDerivative { order: 1, .. })));
        let wrong_dim = MultiIndex::zero(2).unwrap();
        assert!(matches!(e.check_alpha(&wrong_dim), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn abs_norm_moment_gaussian() {
        assert!((gaussian(1).abs_norm_moment(2).unwrap() - 1.0).abs() < 1e-9);
        assert!((gaussian(2).abs_norm_moment(2).unwrap() - 2.0).abs() < 1e-8);
    }
}
