//! The recursive estimator `∂^[α] f_n(x) = (1/n) Σ_i h_i^{-(d+|α|)} ∂^[α]K((x - X_i)/h_i)`
//! on a fixed evaluation grid.
//!
//! Each observation is absorbed once and discarded. The estimator keeps one
//! compensated running sum per grid point; `f_n = S_n / n`, which is the
//! recursion `f_n = ((n-1)/n) f_{n-1} + (1/(n h_n^{d+|α|})) ∂^[α]K(·)` without
//! the rounding drift of repeated rescaling. Because the kernel is a product,
//! an update evaluates one factor per grid coordinate and only touches grid
//! points within `support_radius · h_n` of the observation.

use alloc::format;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use num_traits::Float;

use crate::bandwidth::BandwidthSchedule;
use crate::density::TrueDensity;
use crate::error::{Error, Result};
use crate::kernels::{KernelModel, MultiIndex};
use crate::quadrature::{integrate_box, QuadratureOptions};
use crate::sum::NeumaierSum;

/// One axis of a regular grid: `points` values from `min` to `max` inclusive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl Axis {
    pub fn new(min: f64, max: f64, points: usize) -> Result<Self> {
        if points == 0 {
            return Err(Error::InvalidParameter("grid axis needs at least one point".into()));
        }
        if !(min.is_finite() && max.is_finite()) || max < min || (points > 1 && max == min) {
            return Err(Error::InvalidParameter(format!(
                "grid axis needs finite min < max (got {min}, {max})"
            )));
        }
        Ok(Self { min, max, points })
    }

    fn step(&self) -> f64 {
        if self.points > 1 {
            (self.max - self.min) / (self.points - 1) as f64
        } else {
            0.0
        }
    }

    #[inline]
    pub fn value(&self, k: usize) -> f64 {
        if k + 1 == self.points {
            self.max
        } else {
            self.min + self.step() * k as f64
        }
    }

    /// Inclusive index range of grid values within `radius` of `center`.
    fn window(&self, center: f64, radius: f64) -> Option<(usize, usize)> {
        if self.points == 1 {
            return ((self.min - center).abs() <= radius).then_some((0, 0));
        }
        let step = self.step();
        let lo = ((center - radius - self.min) / step).ceil().max(0.0);
        let hi = ((center + radius - self.min) / step).floor().min((self.points - 1) as f64);
        if lo > hi || !lo.is_finite() || !hi.is_finite() {
            return None;
        }
        Some((lo as usize, hi as usize))
    }
}

/// A tensor-product grid; points are enumerated with the last axis fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    axes: Vec<Axis>,
}

impl Grid {
    pub fn new(axes: Vec<Axis>) -> Result<Self> {
        if axes.is_empty() {
            return Err(Error::InvalidDimension(0));
        }
        Ok(Self { axes })
    }

    /// A grid made of the single point `x`.
    pub fn single(x: &[f64]) -> Result<Self> {
        Self::new(x.iter().map(|&v| Axis { min: v, max: v, points: 1 }).collect())
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.points).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    /// Coordinates of the point with flat index `idx`.
    pub fn point(&self, idx: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        let mut rest = idx;
        for (j, axis) in self.axes.iter().enumerate().rev() {
            out[j] = axis.value(rest % axis.points);
            rest /= axis.points;
        }
        out
    }

    pub fn points(&self) -> impl Iterator<Item = Vec<f64>> + '_ {
        (0..self.len()).map(move |i| self.point(i))
    }
}

/// Streaming state of `∂^[α] f_n` over a grid.
#[derive(Debug, Clone)]
pub struct RecursiveEstimator {
    kernel: KernelModel,
    schedule: BandwidthSchedule,
    alpha: MultiIndex,
    grid: Grid,
    n: u64,
    sums: Vec<NeumaierSum>,
    bandwidths: Option<Arc<[f64]>>,
    factors: Vec<Vec<f64>>,
    windows: Vec<(usize, usize)>,
    cursor: Vec<usize>,
}

impl RecursiveEstimator {
    pub fn new(kernel: KernelModel, schedule: BandwidthSchedule, alpha: MultiIndex, grid: Grid) -> Result<Self> {
        kernel.check_alpha(&alpha)?;
        if grid.dim() != kernel.dim() {
            return Err(Error::DimensionMismatch {
                expected: kernel.dim(),
                got: grid.dim(),
            });
        }
        let len = grid.len();
        let factors = grid.axes().iter().map(|a| vec![0.0; a.points]).collect();
        let windows = vec![(0, 0); grid.dim()];
        let cursor = vec![0; grid.dim()];
        Ok(Self {
            kernel,
            schedule,
            alpha,
            grid,
            n: 0,
            sums: vec![NeumaierSum::new(); len],
            bandwidths: None,
            factors,
            windows,
            cursor,
        })
    }

    /// Uses `table[i-1]` as `h_i` while `i ≤ table.len()`, instead of
    /// recomputing the schedule. The table must come from the same schedule.
    pub fn with_bandwidth_table(mut self, table: Arc<[f64]>) -> Self {
        self.bandwidths = Some(table);
        self
    }

    /// Forgets every observation, keeping grid and buffers.
    pub fn reset(&mut self) {
        self.n = 0;
        self.sums.iter_mut().for_each(|s| *s = NeumaierSum::new());
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn kernel(&self) -> &KernelModel {
        &self.kernel
    }

    pub fn schedule(&self) -> &BandwidthSchedule {
        &self.schedule
    }

    pub fn alpha(&self) -> &MultiIndex {
        &self.alpha
    }

    /// Absorbs the observation `x_new`.
    pub fn update(&mut self, x_new: &[f64]) -> Result<()> {
        let d = self.grid.dim();
        if x_new.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: x_new.len(),
            });
        }
        self.n += 1;
        let h = match &self.bandwidths {
            Some(t) if self.n as usize <= t.len() => t[self.n as usize - 1],
            _ => self.schedule.h(self.n),
        };
        let scale = h.powi(-(d as i32 + self.alpha.order() as i32));
        let reach = self.kernel.support_radius() * h;

        for j in 0..d {
            let axis = self.grid.axes[j];
            let Some((lo, hi)) = axis.window(x_new[j], reach) else {
                return Ok(());
            };
            self.windows[j] = (lo, hi);
            let m = self.alpha.components()[j];
            for k in lo..=hi {
                self.factors[j][k] = self.kernel.factor(m, (axis.value(k) - x_new[j]) / h);
            }
        }

        // odometer over the window box
        let idx = &mut self.cursor;
        for (i, w) in idx.iter_mut().zip(&self.windows) {
            *i = w.0;
        }
        loop {
            let mut flat = 0;
            let mut value = scale;
            for j in 0..d {
                flat = flat * self.grid.axes[j].points + idx[j];
                value *= self.factors[j][idx[j]];
            }
            self.sums[flat].add(value);

            let mut j = d;
            loop {
                if j == 0 {
                    return Ok(());
                }
                j -= 1;
                if idx[j] < self.windows[j].1 {
                    idx[j] += 1;
                    break;
                }
                idx[j] = self.windows[j].0;
            }
        }
    }

    /// `∂^[α] f_n` at grid point `idx`.
    pub fn value_at(&self, idx: usize) -> Result<f64> {
        if self.n == 0 {
            return Err(Error::EmptyEstimate);
        }
        Ok(self.sums[idx].value() / self.n as f64)
    }

    pub fn values(&self) -> Result<Vec<f64>> {
        if self.n == 0 {
            return Err(Error::EmptyEstimate);
        }
        let n = self.n as f64;
        Ok(self.sums.iter().map(|s| s.value() / n).collect())
    }

    /// Splits `∂^[α] f_n(x) - ∂^[α] f(x)` at grid point `idx` into the
    /// centered part `Ψ_n` and the bias `B_n`.
    pub fn decompose(&self, idx: usize, density: &TrueDensity) -> Result<CenteredDecomposition> {
        let estimate = self.value_at(idx)?;
        let x = self.grid.point(idx);
        let truth = density.derivative(&self.alpha, &x)?;
        let series = BiasSeries::compute(&self.kernel, &self.schedule, &self.alpha, &x, density, self.n)?;
        let bias_term = series.bias(self.n);
        let deviation = estimate - truth;
        Ok(CenteredDecomposition {
            estimate,
            truth,
            deviation,
            psi_term: deviation - bias_term,
            bias_term,
        })
    }
}

/// `∂^[α] f_n(x) - ∂^[α] f(x) = Ψ_n^[α](x) + B_n^[α](x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CenteredDecomposition {
    pub estimate: f64,
    pub truth: f64,
    pub deviation: f64,
    pub psi_term: f64,
    pub bias_term: f64,
}

/// `h_1, …, h_n` as a shareable table.
pub fn bandwidth_table(schedule: &BandwidthSchedule, n: u64) -> Arc<[f64]> {
    (1..=n).map(|i| schedule.h(i)).collect()
}

/// Per-observation bias contributions `b_i = ∫ K(y)[g(x - h_i y) - g(x)] dy`
/// with `g = ∂^[α] f`, accumulated so that `B_n(x) = (1/n)·Σ_{i≤n} b_i` can
/// be read for every `n` up to the length of the series.
#[derive(Debug, Clone, PartialEq)]
pub struct BiasSeries {
    truth: f64,
    prefix: Vec<f64>,
}

impl BiasSeries {
    pub fn compute(
        kernel: &KernelModel,
        schedule: &BandwidthSchedule,
        alpha: &MultiIndex,
        x: &[f64],
        density: &TrueDensity,
        n_max: u64,
    ) -> Result<Self> {
        let d = kernel.dim();
        if x.len() != d || density.dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: if x.len() != d { x.len() } else { density.dim() },
            });
        }
        let truth = density.derivative(alpha, x)?;
        let r = kernel.support_radius();
        let even = kernel.profile().is_even();
        let (lo, hi) = if even { (vec![0.0; d], vec![r; d]) } else { (vec![-r; d], vec![r; d]) };
        let opts = QuadratureOptions {
            abs_tol: 1e-14,
            rel_tol: 1e-10,
            ..QuadratureOptions::default()
        };
        let mut shifted = vec![0.0; d];
        let mut prefix = Vec::with_capacity(n_max as usize + 1);
        prefix.push(0.0);
        let mut acc = NeumaierSum::new();
        for i in 1..=n_max {
            let h = schedule.h(i);
            let b = integrate_box(
                |y| {
                    let k = kernel.eval(y);
                    if k == 0.0 {
                        return Ok(0.0);
                    }
                    let mut total = 0.0;
                    if even {
                        // sum over the 2^d sign patterns of y
                        for signs in 0..(1u32 << d) {
                            for j in 0..d {
                                let s = if signs >> j & 1 == 1 { -1.0 } else { 1.0 };
                                shifted[j] = x[j] - h * s * y[j];
                            }
                            total += density.derivative(alpha, &shifted)? - truth;
                        }
                    } else {
                        for j in 0..d {
                            shifted[j] = x[j] - h * y[j];
                        }
                        total = density.derivative(alpha, &shifted)? - truth;
                    }
                    Ok(k * total)
                },
                &lo,
                &hi,
                &opts,
            )?;
            acc.add(b);
            prefix.push(acc.value());
        }
        Ok(Self { truth, prefix })
    }

    pub fn len(&self) -> u64 {
        self.prefix.len() as u64 - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `∂^[α] f(x)`.
    pub fn truth(&self) -> f64 {
        self.truth
    }

    /// `B_n(x)`.
    pub fn bias(&self, n: u64) -> f64 {
        if n == 0 {
            return 0.0;
        }
        self.prefix[n as usize] / n as f64
    }

    /// `E[∂^[α] f_n(x)] = ∂^[α] f(x) + B_n(x)`.
    pub fn expectation(&self, n: u64) -> f64 {
        self.truth + self.bias(n)
    }
}

/// `E[∂^[α] f_n(x)] = (1/n) Σ_i ∫ K(y) ∂^[α] f(x - h_i y) dy`.
pub fn expected_estimate(
    kernel: &KernelModel,
    schedule: &BandwidthSchedule,
    alpha: &MultiIndex,
    x: &[f64],
    density: &TrueDensity,
    n: u64,
) -> Result<f64> {
    if n == 0 {
        return Err(Error::EmptyEstimate);
    }
    Ok(BiasSeries::compute(kernel, schedule, alpha, x, density, n)?.expectation(n))
}
