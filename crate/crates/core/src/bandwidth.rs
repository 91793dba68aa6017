//! Bandwidth schedules `h_n` and scaling sequences `v_n`.
//!
//! Two regularly varying families are shipped: `h_n = c·n^{-a}` and
//! `h_n = c·n^{-a}·ln(n+1)`. Partial sums `Σ_{i≤n} h_i^β` are accumulated with
//! compensated summation and may be cached eagerly for the exponents an
//! experiment needs.

use alloc::format;
use alloc::string::ToString;
use alloc::vec::Vec;
use core::str::FromStr;
use num_traits::Float;

use crate::error::{Error, Result};
use crate::sum::NeumaierSum;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BandwidthKind {
    /// `h_n = c·n^{-a}`
    Power,
    /// `h_n = c·n^{-a}·ln(n+1)`
    PowerLog,
}

impl BandwidthKind {
    pub fn name(&self) -> &'static str {
        match self {
            BandwidthKind::Power => "power",
            BandwidthKind::PowerLog => "power_log",
        }
    }
}

impl FromStr for BandwidthKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "power" => Ok(BandwidthKind::Power),
            "power_log" => Ok(BandwidthKind::PowerLog),
            other => Err(Error::InvalidParameter(format!(
                "unknown bandwidth kind `{other}` (expected power or power_log)"
            ))),
        }
    }
}

/// The scaling sequence `v_n`; `ConstantOne` is the large deviations case.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScalingSequence {
    ConstantOne,
    /// `v_n = n^b`
    Power { b: f64 },
}

impl ScalingSequence {
    pub fn value(&self, n: u64) -> f64 {
        match *self {
            ScalingSequence::ConstantOne => 1.0,
            ScalingSequence::Power { b } => (n as f64).powf(b),
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, ScalingSequence::ConstantOne)
    }
}

/// What a schedule is going to be used for; drives the exponent checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Usage {
    pub d: usize,
    pub alpha_order: u32,
    /// Kernel moment order `q`, used for the bias constraint `b < a·q`.
    pub q: u32,
    pub scaling: ScalingSequence,
    /// Require `v_n·Σh_i^q / n → 0` (only meaningful for `v_n → ∞`).
    pub bias_control: bool,
}

#[derive(Debug, Clone, PartialEq)]
struct CachedSums {
    beta: f64,
    /// `prefix[n] = Σ_{i≤n} h_i^β`, `prefix[0] = 0`.
    prefix: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BandwidthSchedule {
    kind: BandwidthKind,
    c: f64,
    a: f64,
    cache: Vec<CachedSums>,
}

impl BandwidthSchedule {
    /// Basic schedule; only `c > 0` and `a ≥ 0` are checked here.
    pub fn new(kind: BandwidthKind, c: f64, a: f64) -> Result<Self> {
        if !(c.is_finite() && c > 0.0) {
            return Err(Error::InvalidParameter(format!("bandwidth c must be > 0, got {c}")));
        }
        if !(a.is_finite() && a >= 0.0) {
            return Err(Error::InvalidParameter(format!("bandwidth a must be >= 0, got {a}")));
        }
        Ok(Self {
            kind,
            c,
            a,
            cache: Vec::new(),
        })
    }

    pub fn power(c: f64, a: f64) -> Result<Self> {
        Self::new(BandwidthKind::Power, c, a)
    }

    /// Schedule validated against the `(d, |α|, q, v_n)` it will be used with.
    pub fn for_usage(kind: BandwidthKind, c: f64, a: f64, usage: &Usage) -> Result<Self> {
        let s = Self::new(kind, c, a)?;
        s.validate_usage(usage)?;
        Ok(s)
    }

    pub fn validate_usage(&self, usage: &Usage) -> Result<()> {
        let beta = usage.d as f64 + 2.0 * f64::from(usage.alpha_order);
        if !(self.a > 0.0 && self.a * beta < 1.0) {
            return Err(Error::ExponentConstraint(format!(
                "need 0 < a < 1/(d+2|α|) = {:.6}, got a = {}",
                1.0 / beta,
                self.a
            )));
        }
        if let ScalingSequence::Power { b } = usage.scaling {
            let bound = (1.0 - self.a * beta) / 2.0;
            if !(b > 0.0 && b < bound) {
                return Err(Error::ExponentConstraint(format!(
                    "need 0 < b < (1-a(d+2|α|))/2 = {bound:.6}, got b = {b}"
                )));
            }
            if usage.bias_control {
                let bias_bound = self.a * f64::from(usage.q);
                if b >= bias_bound {
                    return Err(Error::ExponentConstraint(format!(
                        "need b < a·q = {bias_bound:.6} for bias control, got b = {b}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn kind(&self) -> BandwidthKind {
        self.kind
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    /// `h_n` for `n ≥ 1`.
    #[inline]
    pub fn h(&self, n: u64) -> f64 {
        let nf = n as f64;
        let base = self.c * nf.powf(-self.a);
        match self.kind {
            BandwidthKind::Power => base,
            BandwidthKind::PowerLog => base * (nf + 1.0).ln(),
        }
    }

    /// Eagerly caches `Σ_{i≤n} h_i^β` for `n ≤ n_max` and every `β` given.
    pub fn with_cached_sums(mut self, betas: &[f64], n_max: usize) -> Self {
        for &beta in betas {
            if self.cache.iter().any(|c| c.beta == beta && c.prefix.len() > n_max) {
                continue;
            }
            self.cache.retain(|c| c.beta != beta);
            let prefix = self.prefix_sums(beta, n_max);
            self.cache.push(CachedSums { beta, prefix });
        }
        self
    }

    /// `[0, h_1^β, h_1^β + h_2^β, …]` up to `n_max`, compensated.
    pub fn prefix_sums(&self, beta: f64, n_max: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(n_max + 1);
        out.push(0.0);
        let mut acc = NeumaierSum::new();
        for i in 1..=n_max as u64 {
            acc.add(self.h(i).powf(beta));
            out.push(acc.value());
        }
        out
    }

    /// `Σ_{i≤n} h_i^β`, from the cache when available.
    pub fn power_sum(&self, beta: f64, n: u64) -> f64 {
        if let Some(c) = self.cache.iter().find(|c| c.beta == beta && (n as usize) < c.prefix.len()) {
            return c.prefix[n as usize];
        }
        let mut acc = NeumaierSum::new();
        for i in 1..=n {
            acc.add(self.h(i).powf(beta));
        }
        acc.value()
    }
}

/// The deviation speed `Σ_{i≤n} h_i^{d+2|α|} / v_n²`.
pub fn speed(
    schedule: &BandwidthSchedule,
    scaling: &ScalingSequence,
    alpha_order: u32,
    d: usize,
    n: u64,
) -> Result<f64> {
    if n < 1 {
        return Err(Error::InvalidParameter("speed needs n >= 1".to_string()));
    }
    let beta = d as f64 + 2.0 * f64::from(alpha_order);
    if schedule.a() * beta >= 1.0 {
        return Err(Error::ExponentConstraint(format!(
            "a(d+2|α|) = {} >= 1: Σ h_i^(d+2|α|) must diverge",
            schedule.a() * beta
        )));
    }
    let v = scaling.value(n);
    Ok(schedule.power_sum(beta, n) / (v * v))
}

/// `(1/(n·h_n^β))·Σ_{i≤n} h_i^β` for each `n`; tends to `1/(1-aβ)`.
pub fn regular_variation_limit_check(
    schedule: &BandwidthSchedule,
    beta: f64,
    n_list: &[u64],
) -> Result<Vec<f64>> {
    if schedule.a() * beta >= 1.0 {
        return Err(Error::ExponentConstraint(format!(
            "a·β = {} >= 1: the normalized sum has no finite limit",
            schedule.a() * beta
        )));
    }
    let n_max = n_list.iter().copied().max().unwrap_or(0);
    let prefix = schedule.prefix_sums(beta, n_max as usize);
    n_list
        .iter()
        .map(|&n| {
            if n == 0 {
                return Err(Error::InvalidParameter("n must be >= 1".to_string()));
            }
            Ok(prefix[n as usize] / (n as f64 * schedule.h(n).powf(beta)))
        })
        .collect()
}

/// `1/(1-aβ)`.
pub fn regular_variation_limit(a: f64, beta: f64) -> f64 {
    1.0 / (1.0 - a * beta)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn speed_examples() {
        let s = BandwidthSchedule::power(1.0, 0.5).unwrap();
        let one = ScalingSequence::ConstantOne;
        assert_eq!(speed(&s, &one, 0, 1, 1).unwrap(), 1.0);
        let direct = 1.0 + 2f64.powf(-0.5) + 3f64.powf(-0.5) + 0.5;
        assert!((speed(&s, &one, 0, 1, 4).unwrap() - direct).abs() < 1e-15);
        assert!((direct - 2.784_457_050_376_173).abs() < 1e-12);

        let s = BandwidthSchedule::power(1.0, 0.25).unwrap();
        let v = ScalingSequence::Power { b: 0.1 };
        let mut naive = 0.0;
        for i in 1..=100u32 {
            naive += f64::from(i).powf(-0.25);
        }
        let expected = naive / 100f64.powf(0.2);
        assert!((speed(&s, &v, 0, 1, 100).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn speed_rejects_convergent_series() {
        let s = BandwidthSchedule::power(1.0, 0.5).unwrap();
        let r = speed(&s, &ScalingSequence::ConstantOne, 1, 1, 10);
        assert!(matches!(r, Err(Error::ExponentConstraint(_))));
    }

    #[test]
    fn constant_bandwidth_normalized_sum_is_one() {
        let s = BandwidthSchedule::power(0.7, 0.0).unwrap();
        let out = regular_variation_limit_check(&s, 1.0, &[1, 10, 1000]).unwrap();
        for v in out {
            assert!((v - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn regular_variation_limits() {
        let s = BandwidthSchedule::power(1.0, 0.2).unwrap();
        let out = regular_variation_limit_check(&s, 1.0, &[100_000]).unwrap();
        assert!((out[0] / 1.25 - 1.0).abs() < 0.01);
        assert_eq!(regular_variation_limit(0.5, 1.0), 2.0);
        let bad = regular_variation_limit_check(&s, 5.0, &[10]);
        assert!(bad.is_err());
    }

    #[test]
    fn cache_matches_naive_sum() {
        let s = BandwidthSchedule::new(BandwidthKind::PowerLog, 0.8, 0.3)
            .unwrap()
            .with_cached_sums(&[1.0, 3.0], 5000);
        for &n in &[1u64, 17, 999, 5000] {
            let mut naive = 0.0;
            for i in 1..=n {
                naive += s.h(i).powf(3.0);
            }
            let cached = s.power_sum(3.0, n);
            assert!((cached - naive).abs() <= 1e-12 * naive.abs());
        }
    }

    #[test]
    fn usage_validation() {
        let usage = Usage {
            d: 1,
            alpha_order: 1,
            q: 2,
            scaling: ScalingSequence::ConstantOne,
            bias_control: false,
        };
        assert!(BandwidthSchedule::for_usage(BandwidthKind::Power, 1.0, 0.5, &usage).is_err());
        assert!(BandwidthSchedule::for_usage(BandwidthKind::Power, 1.0, 0.3, &usage).is_ok());
        let mdp = Usage {
            alpha_order: 0,
            scaling: ScalingSequence::Power { b: 0.3 },
            bias_control: true,
            ..usage
        };
        assert!(BandwidthSchedule::for_usage(BandwidthKind::Power, 1.0, 0.25, &mdp).is_ok());
        let too_big = Usage {
            scaling: ScalingSequence::Power { b: 0.4 },
            ..mdp
        };
        assert!(BandwidthSchedule::for_usage(BandwidthKind::Power, 1.0, 0.25, &too_big).is_err());
    }

    #[test]
    fn bandwidth_is_positive_and_decreasing() {
        let s = BandwidthSchedule::power(2.0, 0.3).unwrap();
        let mut prev = f64::INFINITY;
        for n in 1..200 {
            let h = s.h(n);
            assert!(h > 0.0 && h < prev);
            prev = h;
        }
    }
}
