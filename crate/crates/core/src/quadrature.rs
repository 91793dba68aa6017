//! Adaptive Gauss–Kronrod quadrature.
//!
//! Every interval is integrated with the 7-point Gauss rule nested in the
//! 15-point Kronrod extension; their difference drives a QUADPACK-style error
//! estimate. The interval with the largest error is bisected until the total
//! error meets `max(abs_tol, rel_tol·|I|)`. Running out of the subdivision
//! budget is reported as [`Error::Quadrature`], never as a best effort.

use alloc::vec;
use alloc::vec::Vec;
use num_traits::Float;

use crate::error::{Error, Result};
use crate::sum::NeumaierSum;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
// Gauss weights for XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Tolerances and budget for one adaptive integral.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// Maximum number of subintervals before giving up.
    pub max_subdivisions: usize,
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        Self {
            abs_tol: 1e-10,
            rel_tol: 0.0,
            max_subdivisions: 400,
        }
    }
}

impl QuadratureOptions {
    pub fn with_abs_tol(mut self, abs_tol: f64) -> Self {
        self.abs_tol = abs_tol;
        self
    }

    pub fn with_rel_tol(mut self, rel_tol: f64) -> Self {
        self.rel_tol = rel_tol;
        self
    }
}

/// Value of an integral with its error estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
    pub subdivisions: usize,
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

fn kronrod<F>(f: &mut F, a: f64, b: f64) -> Result<Segment>
where
    F: FnMut(f64) -> Result<f64>,
{
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut fv1 = [0.0; 7];
    let mut fv2 = [0.0; 7];

    let fc = f(center)?;
    let mut resg = fc * WG[3];
    let mut resk = fc * WGK[7];
    let mut resabs = resk.abs();
    for j in 0..3 {
        let jtw = 2 * j + 1;
        let dx = half * XGK[jtw];
        let f1 = f(center - dx)?;
        let f2 = f(center + dx)?;
        fv1[jtw] = f1;
        fv2[jtw] = f2;
        resg += WG[j] * (f1 + f2);
        resk += WGK[jtw] * (f1 + f2);
        resabs += WGK[jtw] * (f1.abs() + f2.abs());
    }
    for j in 0..4 {
        let jtwm1 = 2 * j;
        let dx = half * XGK[jtwm1];
        let f1 = f(center - dx)?;
        let f2 = f(center + dx)?;
        fv1[jtwm1] = f1;
        fv2[jtwm1] = f2;
        resk += WGK[jtwm1] * (f1 + f2);
        resabs += WGK[jtwm1] * (f1.abs() + f2.abs());
    }
    let reskh = resk * 0.5;
    let mut resasc = WGK[7] * (fc - reskh).abs();
    for j in 0..7 {
        resasc += WGK[j] * ((fv1[j] - reskh).abs() + (fv2[j] - reskh).abs());
    }
    let value = resk * half;
    let resabs = resabs * half.abs();
    let resasc = resasc * half.abs();
    let mut error = ((resk - resg) * half).abs();
    if resasc != 0.0 && error != 0.0 {
        error = resasc * (200.0 * error / resasc).powf(1.5).min(1.0);
    }
    if resabs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        error = error.max(50.0 * f64::EPSILON * resabs);
    }
    if !value.is_finite() {
        return Err(Error::Quadrature {
            estimate: value,
            error_estimate: f64::INFINITY,
            tolerance: 0.0,
            subdivisions: 1,
        });
    }
    Ok(Segment { a, b, value, error })
}

/// Integrates a fallible integrand over `[a, b]`.
pub fn integrate<F>(mut f: F, a: f64, b: f64, opts: &QuadratureOptions) -> Result<Estimate>
where
    F: FnMut(f64) -> Result<f64>,
{
    if a == b {
        return Ok(Estimate {
            value: 0.0,
            error: 0.0,
            subdivisions: 0,
        });
    }
    let mut segments: Vec<Segment> = vec![kronrod(&mut f, a, b)?];
    loop {
        let value: f64 = segments.iter().map(|s| s.value).collect::<NeumaierSum>().value();
        let error: f64 = segments.iter().map(|s| s.error).sum();
        let tolerance = opts.abs_tol.max(opts.rel_tol * value.abs());
        if error <= tolerance {
            return Ok(Estimate {
                value,
                error,
                subdivisions: segments.len(),
            });
        }
        let (worst, _) = segments
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |(bi, be), (i, s)| {
                if s.error > be {
                    (i, s.error)
                } else {
                    (bi, be)
                }
            });
        let seg = segments[worst];
        let mid = 0.5 * (seg.a + seg.b);
        let too_narrow = (seg.b - seg.a).abs()
            <= 16.0 * f64::EPSILON * seg.a.abs().max(seg.b.abs()).max(f64::MIN_POSITIVE);
        if segments.len() >= opts.max_subdivisions || too_narrow {
            return Err(Error::Quadrature {
                estimate: value,
                error_estimate: error,
                tolerance,
                subdivisions: segments.len(),
            });
        }
        let left = kronrod(&mut f, seg.a, mid)?;
        let right = kronrod(&mut f, mid, seg.b)?;
        segments[worst] = left;
        segments.push(right);
    }
}

/// Integrates an infallible integrand over `[a, b]` and returns the value.
pub fn integrate_fn<F>(mut f: F, a: f64, b: f64, opts: &QuadratureOptions) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    integrate(|x| Ok(f(x)), a, b, opts).map(|e| e.value)
}

/// Nested (tensor-product) adaptive integration over the box `[lo, hi]` in
/// `d <= 3` dimensions. Inner integrals get their tolerance divided by the
/// width of the enclosing axes so the outer error budget is respected.
pub fn integrate_box<F>(mut f: F, lo: &[f64], hi: &[f64], opts: &QuadratureOptions) -> Result<f64>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if lo.len() != hi.len() {
        return Err(Error::DimensionMismatch {
            expected: lo.len(),
            got: hi.len(),
        });
    }
    let d = lo.len();
    if d == 0 {
        return Err(Error::InvalidDimension(0));
    }
    if d > 3 {
        return Err(Error::DimensionTooLarge(d));
    }
    let mut point = vec![0.0; d];
    nested(&mut f, lo, hi, 0, &mut point, opts)
}

fn nested<F>(
    f: &mut F,
    lo: &[f64],
    hi: &[f64],
    axis: usize,
    point: &mut Vec<f64>,
    opts: &QuadratureOptions,
) -> Result<f64>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let last = axis + 1 == lo.len();
    if last {
        return integrate(
            |x| {
                point[axis] = x;
                f(point)
            },
            lo[axis],
            hi[axis],
            opts,
        )
        .map(|e| e.value);
    }
    let width = (hi[axis] - lo[axis]).abs().max(1.0);
    let inner = QuadratureOptions {
        abs_tol: opts.abs_tol / (4.0 * width),
        rel_tol: opts.rel_tol / 4.0,
        ..*opts
    };
    let value = integrate(
        |x| {
            point[axis] = x;
            nested(f, lo, hi, axis + 1, point, &inner)
        },
        lo[axis],
        hi[axis],
        opts,
    )?
    .value;
    Ok(value)
}
