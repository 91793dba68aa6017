//! Rate functions of the deviation principles.
//!
//! With `p = ad` the limiting log-Laplace transform is
//!
//! `ψ(u) = ∫_{ℝ^d} ∫_0^1 s^{-p} (exp(s^p u K(z)/(1-p)) - 1) ds dz`.
//!
//! The substitution `w = s^p` turns the inner integral into a confluent
//! series in `c = u K(z)/(1-p)`, so only the `z` integral needs quadrature:
//!
//! - `F0(c) = r ∫_0^1 (e^{wc} - 1) w^{r-2} dw = r Σ_{k≥1} c^k / (k! (k+r-1))`
//! - `F1(c) = r ∫_0^1 e^{wc} w^{r-1} dw = F0'(c)`
//! - `F2(c) = r ∫_0^1 e^{wc} w^r dw = F1'(c)`
//!
//! where `r = 1/p`. For `c ≥ 0` the series has positive terms; for `c < 0`
//! the incomplete gamma function is used instead of the alternating series.

use alloc::vec;
use num_traits::Float;

use crate::error::{Error, Result};
use crate::kernels::{KernelModel, SupportMeasure};
use crate::quadrature::{integrate_box, QuadratureOptions};
use crate::special::scaled_lower_gamma;

/// A value in `[0, +∞]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RateValue {
    Finite(f64),
    Infinite,
}

impl RateValue {
    pub fn is_finite(&self) -> bool {
        matches!(self, RateValue::Finite(_))
    }

    /// The value as a float, with `+∞` mapped to `f64::INFINITY`.
    pub fn value(&self) -> f64 {
        match *self {
            RateValue::Finite(v) => v,
            RateValue::Infinite => f64::INFINITY,
        }
    }

    pub fn finite(&self) -> Option<f64> {
        match *self {
            RateValue::Finite(v) => Some(v),
            RateValue::Infinite => None,
        }
    }

    fn scale(self, k: f64) -> Self {
        match self {
            RateValue::Finite(v) => RateValue::Finite(k * v),
            RateValue::Infinite => RateValue::Infinite,
        }
    }

    pub fn min(self, other: Self) -> Self {
        match (self, other) {
            (RateValue::Finite(a), RateValue::Finite(b)) => RateValue::Finite(a.min(b)),
            (RateValue::Infinite, x) | (x, RateValue::Infinite) => x,
        }
    }
}

// Series for c ≥ -1, from index `start`, of r Σ c^k/(k!(k + r - 1 + shift)).
fn confluent_series(c: f64, r: f64, shift: f64, start: u32) -> f64 {
    if c == 0.0 {
        return if start == 0 { r / (r - 1.0 + shift) } else { 0.0 };
    }
    let mut power = 1.0; // c^k / k!
    let mut acc = 0.0;
    let mut k = 0u32;
    loop {
        if k >= start {
            let term = power / (f64::from(k) + r - 1.0 + shift);
            acc += term;
            if f64::from(k) > c.abs() && term.abs() <= 1e-17 * acc.abs() {
                break;
            }
        }
        k += 1;
        power *= c / f64::from(k);
        if !power.is_finite() || k > 5000 {
            return if c > 0.0 { f64::INFINITY } else { r * acc };
        }
    }
    r * acc
}

fn f1(c: f64, r: f64) -> f64 {
    if c >= -1.0 {
        confluent_series(c, r, 1.0, 0)
    } else {
        r * scaled_lower_gamma(r, -c)
    }
}

fn f2(c: f64, r: f64) -> f64 {
    if c >= -1.0 {
        confluent_series(c, r, 2.0, 0)
    } else {
        r * scaled_lower_gamma(r + 1.0, -c)
    }
}

// F0(c) - c, which is nonnegative.
fn f0_excess(c: f64, r: f64) -> f64 {
    if c >= -1.0 {
        confluent_series(c, r, 0.0, 2)
    } else {
        // integration by parts: F0 = r/(r-1) (e^c - 1 - c F1(c)/r)
        let f0 = r / (r - 1.0) * (c.exp_m1() - c * f1(c, r) / r);
        (f0 - c).max(0.0)
    }
}

fn f0(c: f64, r: f64) -> f64 {
    if c >= -1.0 {
        confluent_series(c, r, 0.0, 1)
    } else {
        r / (r - 1.0) * (c.exp_m1() - c * f1(c, r) / r)
    }
}

/// `ψ` and its first two derivatives for a kernel and bandwidth exponent.
///
/// Immutable; every method may be called concurrently.
#[derive(Debug, Clone)]
pub struct PsiEvaluator {
    kernel: KernelModel,
    a: f64,
    p: f64,
    r: f64,
    opts: QuadratureOptions,
}

/// Target accuracy of `(ψ')^{-1}`: `|ψ'(u) - t| ≤ ROOT_TOL`.
pub const ROOT_TOL: f64 = 1e-10;

impl PsiEvaluator {
    pub fn new(kernel: KernelModel, a: f64) -> Result<Self> {
        let p = a * kernel.dim() as f64;
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::ExponentConstraint(alloc::format!(
                "need 0 < ad < 1, got a = {a}, d = {}",
                kernel.dim()
            )));
        }
        Ok(Self {
            kernel,
            a,
            p,
            r: 1.0 / p,
            opts: QuadratureOptions {
                abs_tol: 1e-13,
                rel_tol: 1e-13,
                max_subdivisions: 2000,
            },
        })
    }

    pub fn with_quadrature(mut self, opts: QuadratureOptions) -> Self {
        self.opts = opts;
        self
    }

    pub fn kernel(&self) -> &KernelModel {
        &self.kernel
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn d(&self) -> usize {
        self.kernel.dim()
    }

    /// `1 - ad`.
    pub fn one_minus_ad(&self) -> f64 {
        1.0 - self.p
    }

    /// `1/(1 - ad) = ψ'(0)`, the minimizer of `I`.
    pub fn mean_slope(&self) -> f64 {
        1.0 / (1.0 - self.p)
    }

    fn integrate_kernel<F: FnMut(f64) -> f64>(&self, mut g: F) -> Result<f64> {
        let d = self.kernel.dim();
        let radius = self.kernel.support_radius();
        if self.kernel.profile().is_even() {
            let fold = f64::from(1u32 << d);
            let v = integrate_box(
                |z| {
                    let k = self.kernel.eval(z);
                    Ok(if k == 0.0 { 0.0 } else { g(k) })
                },
                &vec![0.0; d],
                &vec![radius; d],
                &self.opts,
            )?;
            Ok(fold * v)
        } else {
            integrate_box(
                |z| {
                    let k = self.kernel.eval(z);
                    Ok(if k == 0.0 { 0.0 } else { g(k) })
                },
                &vec![-radius; d],
                &vec![radius; d],
                &self.opts,
            )
        }
    }

    pub fn psi(&self, u: f64) -> Result<f64> {
        if u == 0.0 {
            return Ok(0.0);
        }
        let (r, scale) = (self.r, u / (1.0 - self.p));
        self.integrate_kernel(|k| f0(scale * k, r))
    }

    /// `ψ(u) - u/(1-ad) ≥ 0`, computed without the cancellation of the
    /// difference.
    pub fn psi_excess(&self, u: f64) -> Result<f64> {
        if u == 0.0 {
            return Ok(0.0);
        }
        let (r, scale) = (self.r, u / (1.0 - self.p));
        // the linear part integrates against the kernel mass, which is 1
        self.integrate_kernel(|k| f0_excess(scale * k, r))
    }

    pub fn psi_prime(&self, u: f64) -> Result<f64> {
        let (r, scale) = (self.r, u / (1.0 - self.p));
        Ok(self.integrate_kernel(|k| k * f1(scale * k, r))? / (1.0 - self.p))
    }

    pub fn psi_second(&self, u: f64) -> Result<f64> {
        let (r, scale) = (self.r, u / (1.0 - self.p));
        let q = 1.0 - self.p;
        Ok(self.integrate_kernel(|k| k * k * f2(scale * k, r))? / (q * q))
    }

    /// Solves `ψ'(u) = t`.
    pub fn psi_prime_inverse(&self, t: f64) -> Result<f64> {
        let fail = |reason| Error::RootFinding { target: t, reason };
        if !t.is_finite() {
            return Err(fail("target is not finite"));
        }
        if self.kernel.is_nonnegative() && t <= 0.0 {
            return Err(fail("target below the range of ψ' for a nonnegative kernel"));
        }
        let g0 = self.psi_prime(0.0)? - t;
        if g0.abs() <= ROOT_TOL {
            return Ok(0.0);
        }
        // bracket by doubling away from 0
        let dir = if g0 < 0.0 { 1.0 } else { -1.0 };
        let (mut lo, mut hi) = (0.0, 0.0);
        let (mut g_lo, mut g_hi) = (g0, g0);
        let mut step = 1.0;
        let mut bracketed = false;
        for _ in 0..80 {
            let u = dir * step;
            let g = self.psi_prime(u)? - t;
            if g.abs() <= ROOT_TOL {
                return Ok(u);
            }
            if (g > 0.0) == (dir > 0.0) {
                if dir > 0.0 {
                    hi = u;
                    g_hi = g;
                } else {
                    lo = u;
                    g_lo = g;
                }
                bracketed = true;
                break;
            }
            if dir > 0.0 {
                lo = u;
                g_lo = g;
            } else {
                hi = u;
                g_hi = g;
            }
            step *= 2.0;
        }
        if !bracketed {
            return Err(fail("no bracket within the doubling budget"));
        }
        debug_assert!(g_lo < 0.0 && g_hi > 0.0);

        // Newton steps kept inside the bracket, bisection otherwise.
        let mut u = if g_hi - g_lo > 0.0 { lo - g_lo * (hi - lo) / (g_hi - g_lo) } else { 0.5 * (lo + hi) };
        for _ in 0..200 {
            let g = self.psi_prime(u)? - t;
            if g.abs() <= ROOT_TOL {
                return Ok(u);
            }
            if g < 0.0 {
                lo = u;
            } else {
                hi = u;
            }
            if hi - lo <= 4.0 * f64::EPSILON * u.abs().max(1.0) {
                return Ok(u);
            }
            let slope = self.psi_second(u)?;
            let newton = u - g / slope;
            u = if slope > 0.0 && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
        }
        Err(fail("iteration budget exhausted"))
    }

    /// Legendre transform `I(t) = sup_u (ut - ψ(u))`.
    pub fn legendre_i(&self, t: f64) -> Result<RateValue> {
        if self.kernel.is_nonnegative() {
            if t < 0.0 {
                return Ok(RateValue::Infinite);
            }
            if t == 0.0 {
                return Ok(match self.kernel.positive_support_measure() {
                    SupportMeasure::Infinite => RateValue::Infinite,
                    SupportMeasure::Finite(m) => RateValue::Finite(m / (1.0 - self.p)),
                });
            }
        }
        let u = self.psi_prime_inverse(t)?;
        Ok(RateValue::Finite(self.legendre_at(t, u)?))
    }

    /// `ut - ψ(u)` written as `(t - 1/(1-ad)) u - (ψ(u) - u/(1-ad))`.
    fn legendre_at(&self, t: f64, u: f64) -> Result<f64> {
        Ok(((t - self.mean_slope()) * u - self.psi_excess(u)?).max(0.0))
    }
}

/// `I_x(t) = f(x)(1-ad) I(1/(1-ad) + t/(f(x)(1-ad)))`; degenerate when `f(x) = 0`.
pub fn pointwise_rate_density(ev: &PsiEvaluator, f_x: f64, t: f64) -> Result<RateValue> {
    if !(f_x >= 0.0) {
        return Err(Error::InvalidParameter(alloc::format!("density value must be ≥ 0, got {f_x}")));
    }
    if f_x == 0.0 {
        return Ok(if t == 0.0 { RateValue::Finite(0.0) } else { RateValue::Infinite });
    }
    let q = ev.one_minus_ad();
    let scale = f_x * q;
    Ok(ev.legendre_i(ev.mean_slope() + t / scale)?.scale(scale))
}

/// `J(t) = t²(1 - a²(d+2|α|)²) / (2 f(x) l2)` with `l2 = ∫[∂^[α]K]²`.
pub fn quadratic_rate(f_x: f64, a: f64, d: usize, alpha_order: u32, l2: f64, t: f64) -> Result<RateValue> {
    let beta = d as f64 + 2.0 * f64::from(alpha_order);
    if !(a > 0.0 && a * beta < 1.0) {
        return Err(Error::ExponentConstraint(alloc::format!(
            "need 0 < a < 1/(d+2|α|) = {}, got a = {a}",
            1.0 / beta
        )));
    }
    if !(l2 > 0.0) {
        return Err(Error::InvalidParameter(alloc::format!("kernel L2 norm must be > 0, got {l2}")));
    }
    if !(f_x >= 0.0) {
        return Err(Error::InvalidParameter(alloc::format!("density value must be ≥ 0, got {f_x}")));
    }
    if f_x == 0.0 {
        return Ok(if t == 0.0 { RateValue::Finite(0.0) } else { RateValue::Infinite });
    }
    Ok(RateValue::Finite(t * t * (1.0 - a * a * beta * beta) / (2.0 * f_x * l2)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UniformMode {
    /// `|α| = 0` and `v_n ≡ 1`: rates built from `I`.
    LdpDensity,
    /// Any other combination: quadratic rates.
    Quadratic,
}

/// Parameters of the uniform rate `g_U`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformRateSpec {
    /// `‖f‖_{U,∞}`.
    pub sup_density: f64,
    pub a: f64,
    pub d: usize,
    pub alpha_order: u32,
    pub mode: UniformMode,
}

/// `g_U(δ)`, `g_U(-δ)` and `g̃_U(δ) = min(g_U(δ), g_U(-δ))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformRates {
    pub plus: RateValue,
    pub minus: RateValue,
    pub tilde: RateValue,
}

impl UniformRateSpec {
    fn check(&self, ev: Option<&PsiEvaluator>) -> Result<()> {
        if !(self.sup_density >= 0.0) {
            return Err(Error::InvalidParameter(alloc::format!(
                "sup of the density must be ≥ 0, got {}",
                self.sup_density
            )));
        }
        if self.mode == UniformMode::LdpDensity {
            if self.alpha_order != 0 {
                return Err(Error::ModeMismatch("the density LDP mode needs |α| = 0".into()));
            }
            match ev {
                None => return Err(Error::ModeMismatch("the density LDP mode needs a ψ evaluator".into())),
                Some(ev) if ev.d() != self.d || ev.a() != self.a => {
                    return Err(Error::ModeMismatch("ψ evaluator built for other (a, d)".into()))
                }
                Some(_) => {}
            }
        }
        Ok(())
    }

    fn one_sided(&self, ev: Option<&PsiEvaluator>, l2: f64, t: f64) -> Result<RateValue> {
        match (self.mode, ev) {
            (UniformMode::LdpDensity, Some(ev)) => pointwise_rate_density(ev, self.sup_density, t),
            (UniformMode::LdpDensity, None) => Err(Error::ModeMismatch("missing ψ evaluator".into())),
            (UniformMode::Quadratic, _) => quadratic_rate(self.sup_density, self.a, self.d, self.alpha_order, l2, t),
        }
    }
}

pub fn uniform_rate(spec: &UniformRateSpec, ev: Option<&PsiEvaluator>, l2: f64, delta: f64) -> Result<UniformRates> {
    spec.check(ev)?;
    let plus = spec.one_sided(ev, l2, delta)?;
    let minus = match spec.mode {
        UniformMode::Quadratic => plus,
        UniformMode::LdpDensity => spec.one_sided(ev, l2, -delta)?,
    };
    Ok(UniformRates {
        plus,
        minus,
        tilde: plus.min(minus),
    })
}

/// The `u > 0` attaining `g_U(δ) = sup_u (uδ - sup_x Λ_x(u))`.
pub fn phi_maximizer(spec: &UniformRateSpec, ev: Option<&PsiEvaluator>, l2: f64, delta: f64) -> Result<f64> {
    spec.check(ev)?;
    if !(delta > 0.0) {
        return Err(Error::InvalidParameter(alloc::format!("δ must be > 0, got {delta}")));
    }
    if !(spec.sup_density > 0.0) {
        return Err(Error::InvalidParameter("φ(δ) needs a positive density sup".into()));
    }
    match (spec.mode, ev) {
        (UniformMode::LdpDensity, Some(ev)) => {
            let q = ev.one_minus_ad();
            ev.psi_prime_inverse(delta / (spec.sup_density * q) + 1.0 / q)
        }
        (UniformMode::LdpDensity, None) => Err(Error::ModeMismatch("missing ψ evaluator".into())),
        (UniformMode::Quadratic, _) => {
            let beta = spec.d as f64 + 2.0 * f64::from(spec.alpha_order);
            Ok(delta * (1.0 - spec.a * spec.a * beta * beta) / (spec.sup_density * l2))
        }
    }
}
