//! The normalized cumulant generating function of the centered estimator,
//!
//! `Λ_{n,x}(u) = (v_n²/a_n) log E[exp(u (a_n/v_n) Ψ_n(x))]`,  `a_n = Σ_{i≤n} h_i^{d+2|α|}`,
//!
//! computed term by term against the true density, and its two limits
//! `Λ^L_x(u) = f(x)(1-ad)(ψ(u) - u/(1-ad))` (when `v_n ≡ 1`, `|α| = 0`) and
//! `Λ^M_x(u) = u² f(x) ∫[∂^[α]K]² / (2(1 - a²(d+2|α|)²))` otherwise.
//!
//! With `Y_i = ∂^[α]K((x - X_i)/h_i)` and `θ_i = u a_n / (n v_n h_i^{d+|α|})`,
//! the i-th term is `log E[e^{θ_i Y_i}] - θ_i E[Y_i] = (log(1+m_i) - m_i) + r_i`
//! where, after the change of variables `y = x - h_i z`,
//!
//! - `m_i = h_i^d ∫ (e^{θ_i ∂K(z)} - 1) f(x - h_i z) dz`
//! - `r_i = h_i^d ∫ (e^{θ_i ∂K(z)} - 1 - θ_i ∂K(z)) f(x - h_i z) dz`.
//!
//! Both integrands vanish off the kernel support and neither subtraction
//! cancels catastrophically.

use alloc::format;
use alloc::vec::Vec;
use num_traits::Float;

use crate::bandwidth::{BandwidthSchedule, ScalingSequence};
use crate::density::TrueDensity;
use crate::error::{Error, Result};
use crate::kernels::{KernelModel, MultiIndex};
use crate::quadrature::{integrate_box, QuadratureOptions};
use crate::ratefn::PsiEvaluator;
use crate::special::{expm1_minus_linear, ln1p_minus_linear};
use crate::sum::NeumaierSum;

/// Largest admissible `|θ_i|·sup|∂^[α]K|`.
pub const EXPONENT_LIMIT: f64 = 700.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CgfRegime {
    /// `v_n ≡ 1` and `|α| = 0`: the limit involves `ψ`.
    Ldp,
    /// Any other combination: the limit is quadratic.
    Quadratic,
}

/// Everything `Λ_{n,x}` depends on.
#[derive(Debug, Clone)]
pub struct CgfSpec {
    kernel: KernelModel,
    schedule: BandwidthSchedule,
    scaling: ScalingSequence,
    alpha: MultiIndex,
    x: Vec<f64>,
    density: TrueDensity,
    regime: CgfRegime,
    psi: Option<PsiEvaluator>,
    l2: f64,
    sup: f64,
    f_x: f64,
    opts: QuadratureOptions,
}

impl CgfSpec {
    pub fn new(
        kernel: KernelModel,
        schedule: BandwidthSchedule,
        scaling: ScalingSequence,
        alpha: MultiIndex,
        x: Vec<f64>,
        density: TrueDensity,
    ) -> Result<Self> {
        kernel.check_alpha(&alpha)?;
        density.validate()?;
        let d = kernel.dim();
        if x.len() != d || density.dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: if x.len() != d { x.len() } else { density.dim() },
            });
        }
        let beta = d as f64 + 2.0 * f64::from(alpha.order());
        if !(schedule.a() > 0.0 && schedule.a() * beta < 1.0) {
            return Err(Error::ExponentConstraint(format!(
                "need 0 < a < 1/(d+2|α|) = {}, got a = {}",
                1.0 / beta,
                schedule.a()
            )));
        }
        let regime = if scaling.is_constant() && alpha.order() == 0 {
            CgfRegime::Ldp
        } else {
            CgfRegime::Quadratic
        };
        let psi = match regime {
            CgfRegime::Ldp => Some(PsiEvaluator::new(kernel.clone(), schedule.a())?),
            CgfRegime::Quadratic => None,
        };
        let l2 = kernel.l2_norm_sq(&alpha)?;
        let sup = kernel.sup_norm(&alpha)?;
        let f_x = density.value(&x);
        Ok(Self {
            kernel,
            schedule,
            scaling,
            alpha,
            x,
            density,
            regime,
            psi,
            l2,
            sup,
            f_x,
            opts: QuadratureOptions {
                abs_tol: 1e-300,
                rel_tol: 1e-11,
                max_subdivisions: 2000,
            },
        })
    }

    pub fn regime(&self) -> CgfRegime {
        self.regime
    }

    pub fn kernel(&self) -> &KernelModel {
        &self.kernel
    }

    pub fn schedule(&self) -> &BandwidthSchedule {
        &self.schedule
    }

    pub fn scaling(&self) -> &ScalingSequence {
        &self.scaling
    }

    pub fn alpha(&self) -> &MultiIndex {
        &self.alpha
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn density(&self) -> &TrueDensity {
        &self.density
    }

    /// `f(x)`.
    pub fn density_at_x(&self) -> f64 {
        self.f_x
    }

    /// `∫[∂^[α]K]²`.
    pub fn l2(&self) -> f64 {
        self.l2
    }

    /// The `ψ` evaluator of the LDP regime.
    pub fn psi(&self) -> Option<&PsiEvaluator> {
        self.psi.as_ref()
    }

    /// `d + 2|α|`.
    pub fn beta(&self) -> f64 {
        self.kernel.dim() as f64 + 2.0 * f64::from(self.alpha.order())
    }

    /// `a_n = Σ_{i≤n} h_i^{d+2|α|}`.
    pub fn a_n(&self, n: u64) -> f64 {
        self.schedule.power_sum(self.beta(), n)
    }

    /// The deviation speed `a_n / v_n²`.
    pub fn speed(&self, n: u64) -> f64 {
        let v = self.scaling.value(n);
        self.a_n(n) / (v * v)
    }

    /// `log E[e^{θ_i (Y_i - E Y_i)}]` for observation `i ≤ n`; `a_n` is
    /// passed in because it is shared by all terms.
    pub fn term(&self, u: f64, n: u64, i: u64, a_n: f64) -> Result<f64> {
        let d = self.kernel.dim();
        let h = self.schedule.h(i);
        let theta = u * a_n / (n as f64 * self.scaling.value(n) * h.powi(d as i32 + self.alpha.order() as i32));
        let exponent = theta.abs() * self.sup;
        if exponent > EXPONENT_LIMIT {
            return Err(Error::ExponentOverflow {
                index: i,
                exponent,
                limit: EXPONENT_LIMIT,
            });
        }
        let Some((lo, hi)) = self.region(h) else {
            return Ok(0.0);
        };
        let hd = h.powi(d as i32);
        let mut shifted = alloc::vec![0.0; d];
        let mut weighted = |z: &[f64], g: &dyn Fn(f64) -> f64| -> Result<f64> {
            let k = self.kernel.deriv_eval(&self.alpha, z);
            if k == 0.0 {
                return Ok(0.0);
            }
            for j in 0..d {
                shifted[j] = self.x[j] - h * z[j];
            }
            Ok(g(theta * k) * self.density.value(&shifted))
        };
        let r = hd * integrate_box(|z| weighted(z, &expm1_minus_linear), &lo, &hi, &self.opts)?;
        let m = hd * integrate_box(|z| weighted(z, &|y: f64| y.exp_m1()), &lo, &hi, &self.opts)?;
        Ok(ln1p_minus_linear(m) + r)
    }

    /// The `z` box where `∂^[α]K(z) f(x - hz)` can be nonzero, or `None`.
    fn region(&self, h: f64) -> Option<(Vec<f64>, Vec<f64>)> {
        let r = self.kernel.support_radius();
        let d = self.kernel.dim();
        let mut lo = alloc::vec![-r; d];
        let mut hi = alloc::vec![r; d];
        if let TrueDensity::UniformBox { lo: blo, hi: bhi } = &self.density {
            // x - h z ∈ [blo, bhi]  ⇔  z ∈ [(x - bhi)/h, (x - blo)/h]
            for j in 0..d {
                lo[j] = lo[j].max((self.x[j] - bhi[j]) / h);
                hi[j] = hi[j].min((self.x[j] - blo[j]) / h);
                if lo[j] >= hi[j] {
                    return None;
                }
            }
        }
        Some((lo, hi))
    }
}

/// `Λ_{n,x}(u)`.
pub fn cgf_finite_n(spec: &CgfSpec, u: f64, n: u64) -> Result<f64> {
    if n < 1 {
        return Err(Error::InvalidParameter("Λ_n needs n >= 1".into()));
    }
    if u == 0.0 {
        return Ok(0.0);
    }
    let a_n = spec.a_n(n);
    let mut acc = NeumaierSum::new();
    for i in 1..=n {
        acc.add(spec.term(u, n, i, a_n)?);
    }
    Ok(normalize(spec, n, a_n, acc.value()))
}

/// `(v_n²/a_n)·Σ terms`, for callers that sum the terms themselves.
pub fn normalize(spec: &CgfSpec, n: u64, a_n: f64, sum_of_terms: f64) -> f64 {
    let v = spec.scaling.value(n);
    v * v / a_n * sum_of_terms
}

/// `Λ^L_x(u)` or `Λ^M_x(u)` according to the regime.
pub fn cgf_limit(spec: &CgfSpec, u: f64) -> Result<f64> {
    match (spec.regime, spec.psi.as_ref()) {
        (CgfRegime::Ldp, Some(psi)) => Ok(spec.f_x * psi.one_minus_ad() * psi.psi_excess(u)?),
        _ => {
            let ab = spec.schedule.a() * spec.beta();
            Ok(u * u * spec.f_x * spec.l2 / (2.0 * (1.0 - ab * ab)))
        }
    }
}

/// One row of the convergence diagnostic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgfPoint {
    pub n: u64,
    pub u: f64,
    pub lambda_n: f64,
    pub lambda_limit: f64,
    pub abs_error: f64,
}

/// `(n, Λ_{n,x}(u), |Λ_{n,x}(u) - Λ_x(u)|)` for each `n`.
pub fn convergence_diagnostic(spec: &CgfSpec, u: f64, n_list: &[u64]) -> Result<Vec<CgfPoint>> {
    if n_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter("n_list must be strictly increasing".into()));
    }
    let limit = cgf_limit(spec, u)?;
    n_list
        .iter()
        .map(|&n| {
            let lambda_n = cgf_finite_n(spec, u, n)?;
            Ok(CgfPoint {
                n,
                u,
                lambda_n,
                lambda_limit: limit,
                abs_error: (lambda_n - limit).abs(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::KernelKind;
    use crate::quadrature::integrate_fn;

    fn spec(scaling: ScalingSequence, a: f64, density: TrueDensity, x: f64) -> CgfSpec {
        CgfSpec::new(
            KernelModel::builtin(KernelKind::Gaussian, 1).unwrap(),
            BandwidthSchedule::power(1.0, a).unwrap(),
            scaling,
            MultiIndex::zero(1).unwrap(),
            alloc::vec![x],
            density,
        )
        .unwrap()
    }

    #[test]
    fn zero_at_origin() {
        let s = spec(ScalingSequence::ConstantOne, 0.3, TrueDensity::standard_gaussian(1), 0.0);
        assert_eq!(cgf_finite_n(&s, 0.0, 50).unwrap(), 0.0);
        assert_eq!(cgf_limit(&s, 0.0).unwrap(), 0.0);
        let q = spec(ScalingSequence::Power { b: 0.1 }, 0.3, TrueDensity::standard_gaussian(1), 0.0);
        assert_eq!(cgf_limit(&q, 0.0).unwrap(), 0.0);
        assert!(convergence_diagnostic(&q, 0.0, &[10, 100]).unwrap().iter().all(|p| p.abs_error == 0.0));
    }

    #[test]
    fn single_term_matches_direct_quadrature() {
        // n = 1, v ≡ 1: Λ_1 = h^{-d} (log E e^{u Y} - u E Y) with h_1 = c
        let s = CgfSpec::new(
            KernelModel::builtin(KernelKind::Gaussian, 1).unwrap(),
            BandwidthSchedule::power(0.7, 0.3).unwrap(),
            ScalingSequence::ConstantOne,
            MultiIndex::zero(1).unwrap(),
            alloc::vec![0.4],
            TrueDensity::standard_gaussian(1),
        )
        .unwrap();
        let u = 1.3;
        let h = 0.7;
        let k = s.kernel().clone();
        let f = s.density().clone();
        let opts = QuadratureOptions::default().with_abs_tol(1e-13);
        let mgf = integrate_fn(|y| (u * k.eval(&[(0.4 - y) / h])).exp() * f.value(&[y]), -12.0, 12.0, &opts).unwrap();
        let mean = integrate_fn(|y| k.eval(&[(0.4 - y) / h]) * f.value(&[y]), -12.0, 12.0, &opts).unwrap();
        let oracle = (mgf.ln() - u * mean) / h;
        let got = cgf_finite_n(&s, u, 1).unwrap();
        assert!((got - oracle).abs() < 1e-10, "{got} vs {oracle}");
    }

    #[test]
    fn convex_in_u() {
        let s = spec(ScalingSequence::ConstantOne, 0.3, TrueDensity::standard_gaussian(1), 0.2);
        let l = |u| cgf_finite_n(&s, u, 100).unwrap();
        assert!(l(-1.0) + l(1.0) >= 2.0 * l(0.0));
        assert!(l(0.0) + l(2.0) >= 2.0 * l(1.0));
    }

    #[test]
    fn ldp_limit_is_nonnegative_and_convex() {
        let s = spec(ScalingSequence::ConstantOne, 0.3, TrueDensity::standard_gaussian(1), 0.0);
        let vals: Vec<f64> = [-3.0, -1.0, 1.0, 3.0].iter().map(|&u| cgf_limit(&s, u).unwrap()).collect();
        assert!(vals.iter().all(|&v| v >= 0.0));
        assert!(vals[0] + vals[2] >= 2.0 * cgf_limit(&s, -1.0).unwrap() - 1e-15);
    }

    #[test]
    fn quadratic_limit_value() {
        let dens = TrueDensity::Gaussian {
            mean: alloc::vec![0.0],
            sd: 1.0 / (2.0 * core::f64::consts::PI).sqrt(),
        };
        // f(0) = 1
        let s = spec(ScalingSequence::Power { b: 0.1 }, 0.5, dens, 0.0);
        assert!((s.density_at_x() - 1.0).abs() < 1e-15);
        let l = cgf_limit(&s, 1.0).unwrap();
        assert!((l - 0.28209479177387814 / 1.5).abs() < 1e-12);
        assert!((l - 0.18806).abs() < 1e-5);
    }

    #[test]
    fn constant_density_converges() {
        let dens = TrueDensity::UniformBox {
            lo: alloc::vec![-1.0],
            hi: alloc::vec![1.0],
        };
        let s = spec(ScalingSequence::ConstantOne, 0.3, dens, 0.0);
        let diag = convergence_diagnostic(&s, 0.5, &[100, 10_000]).unwrap();
        assert!(diag[1].abs_error < diag[0].abs_error, "{diag:?}");
    }

    #[test]
    fn overflow_guard() {
        let s = spec(ScalingSequence::ConstantOne, 0.3, TrueDensity::standard_gaussian(1), 0.0);
        assert!(matches!(cgf_finite_n(&s, 5000.0, 3), Err(Error::ExponentOverflow { .. })));
    }
}
