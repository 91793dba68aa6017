//! Reference densities with known values and partial derivatives.

use alloc::format;
use alloc::string::ToString;
use alloc::vec::Vec;
use num_traits::Float;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::kernels::MultiIndex;
use crate::special::std_normal_derivative;

#[derive(Debug, Clone, PartialEq)]
pub struct MixtureComponent {
    pub weight: f64,
    pub mean: Vec<f64>,
    pub sd: f64,
}

/// A density `f` on `ℝ^d` used as ground truth.
#[derive(Debug, Clone, PartialEq)]
pub enum TrueDensity {
    /// Isotropic normal `N(mean, sd²·I)`.
    Gaussian { mean: Vec<f64>, sd: f64 },
    GaussianMixture { components: Vec<MixtureComponent> },
    /// Uniform on the box `[lo, hi]`.
    UniformBox { lo: Vec<f64>, hi: Vec<f64> },
}

impl TrueDensity {
    pub fn standard_gaussian(d: usize) -> Self {
        TrueDensity::Gaussian {
            mean: alloc::vec![0.0; d],
            sd: 1.0,
        }
    }

    /// Checks parameters; every constructor path should go through this.
    pub fn validate(&self) -> Result<()> {
        match self {
            TrueDensity::Gaussian { mean, sd } => {
                if mean.is_empty() {
                    return Err(Error::InvalidDimension(0));
                }
                if !(*sd > 0.0) {
                    return Err(Error::InvalidParameter(format!("gaussian sd must be > 0, got {sd}")));
                }
            }
            TrueDensity::GaussianMixture { components } => {
                let first = components
                    .first()
                    .ok_or_else(|| Error::InvalidParameter("mixture needs at least one component".to_string()))?;
                let d = first.mean.len();
                if d == 0 {
                    return Err(Error::InvalidDimension(0));
                }
                let mut total = 0.0;
                for c in components {
                    if c.mean.len() != d {
                        return Err(Error::DimensionMismatch {
                            expected: d,
                            got: c.mean.len(),
                        });
                    }
                    if !(c.sd > 0.0 && c.weight > 0.0) {
                        return Err(Error::InvalidParameter(
                            "mixture weights and sds must be > 0".to_string(),
                        ));
                    }
                    total += c.weight;
                }
                if (total - 1.0).abs() > 1e-12 {
                    return Err(Error::InvalidParameter(format!("mixture weights sum to {total}, not 1")));
                }
            }
            TrueDensity::UniformBox { lo, hi } => {
                if lo.is_empty() {
                    return Err(Error::InvalidDimension(0));
                }
                if lo.len() != hi.len() {
                    return Err(Error::DimensionMismatch {
                        expected: lo.len(),
                        got: hi.len(),
                    });
                }
                if lo.iter().zip(hi).any(|(l, h)| !(h > l)) {
                    return Err(Error::InvalidParameter("uniform box needs lo < hi".to_string()));
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        match self {
            TrueDensity::Gaussian { mean, .. } => mean.len(),
            TrueDensity::GaussianMixture { components } => components.first().map_or(0, |c| c.mean.len()),
            TrueDensity::UniformBox { lo, .. } => lo.len(),
        }
    }

    /// `f(x)`.
    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            TrueDensity::UniformBox { lo, hi } => {
                let inside = x.iter().zip(lo.iter().zip(hi)).all(|(v, (l, h))| *v >= *l && *v <= *h);
                if inside {
                    1.0 / lo.iter().zip(hi).map(|(l, h)| h - l).product::<f64>()
                } else {
                    0.0
                }
            }
            _ => gaussian_like_derivative(self, None, x),
        }
    }

    /// `∂^[α] f(x)`. The uniform box only has `|α| = 0`.
    pub fn derivative(&self, alpha: &MultiIndex, x: &[f64]) -> Result<f64> {
        if alpha.dim() != self.dim() || x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: if alpha.dim() != self.dim() { alpha.dim() } else { x.len() },
            });
        }
        match self {
            TrueDensity::UniformBox { .. } if alpha.order() > 0 => Err(Error::InvalidParameter(
                "uniform_box density is not differentiable; only |α| = 0 is available".to_string(),
            )),
            TrueDensity::UniformBox { .. } => Ok(self.value(x)),
            _ => Ok(gaussian_like_derivative(self, Some(alpha), x)),
        }
    }

    /// Whether `∫‖x‖^ξ f(x) dx < ∞` for every `ξ`.
    pub fn all_moments_finite(&self) -> bool {
        true
    }

    /// Draws one observation into `out`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        match self {
            TrueDensity::Gaussian { mean, sd } => {
                for (o, m) in out.iter_mut().zip(mean) {
                    let z: f64 = rng.sample(StandardNormal);
                    *o = m + sd * z;
                }
            }
            TrueDensity::GaussianMixture { components } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut chosen = components.last().expect("validated mixture");
                for c in components {
                    acc += c.weight;
                    if u < acc {
                        chosen = c;
                        break;
                    }
                }
                for (o, m) in out.iter_mut().zip(&chosen.mean) {
                    let z: f64 = rng.sample(StandardNormal);
                    *o = m + chosen.sd * z;
                }
            }
            TrueDensity::UniformBox { lo, hi } => {
                for (o, (l, h)) in out.iter_mut().zip(lo.iter().zip(hi)) {
                    let u: f64 = rng.random();
                    *o = l + (h - l) * u;
                }
            }
        }
    }

    /// `sup_x |f^{(order)}(x)|` for a one-dimensional density, by a dense scan
    /// with golden-section refinement. Supplies `M_q` for bias bounds.
    pub fn max_abs_derivative_1d(&self, order: u32) -> Result<f64> {
        if self.dim() != 1 {
            return Err(Error::InvalidParameter("max_abs_derivative_1d needs d = 1".to_string()));
        }
        let alpha = MultiIndex::new(alloc::vec![order])?;
        let (lo, hi) = match self {
            TrueDensity::Gaussian { mean, sd } => (mean[0] - 12.0 * sd, mean[0] + 12.0 * sd),
            TrueDensity::GaussianMixture { components } => components.iter().fold(
                (f64::INFINITY, f64::NEG_INFINITY),
                |(l, h), c| (l.min(c.mean[0] - 12.0 * c.sd), h.max(c.mean[0] + 12.0 * c.sd)),
            ),
            TrueDensity::UniformBox { lo, hi } => (lo[0], hi[0]),
        };
        let f = |x: f64| self.derivative(&alpha, &[x]).map(|v| v.abs());
        const STEPS: usize = 20_000;
        let step = (hi - lo) / STEPS as f64;
        let (mut best_x, mut best) = (lo, f(lo)?);
        for i in 1..=STEPS {
            let x = lo + step * i as f64;
            let v = f(x)?;
            if v > best {
                best = v;
                best_x = x;
            }
        }
        let (mut a, mut b) = (best_x - step, best_x + step);
        let g = 0.618_033_988_749_895;
        for _ in 0..80 {
            let c = b - g * (b - a);
            let d = a + g * (b - a);
            if f(c)? > f(d)? {
                b = d;
            } else {
                a = c;
            }
        }
        Ok(best.max(f(0.5 * (a + b))?))
    }
}

fn gaussian_like_derivative(density: &TrueDensity, alpha: Option<&MultiIndex>, x: &[f64]) -> f64 {
    let component = |mean: &[f64], sd: f64| -> f64 {
        x.iter()
            .zip(mean)
            .enumerate()
            .map(|(j, (xj, mj))| {
                let m = alpha.map_or(0, |a| a.components()[j]);
                std_normal_derivative(m, (xj - mj) / sd) / sd.powi(m as i32 + 1)
            })
            .product()
    };
    match density {
        TrueDensity::Gaussian { mean, sd } => component(mean, *sd),
        TrueDensity::GaussianMixture { components } => components
            .iter()
            .map(|c| c.weight * component(&c.mean, c.sd))
            .sum(),
        TrueDensity::UniformBox { .. } => unreachable!("handled by caller"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn gaussian_value_and_derivatives() {
        let f = TrueDensity::Gaussian { mean: vec![1.0], sd: 2.0 };
        let x = [0.3];
        let h = 1e-4;
        let a1 = MultiIndex::new(vec![1]).unwrap();
        let a2 = MultiIndex::new(vec![2]).unwrap();
        let fd1 = (f.value(&[x[0] + h]) - f.value(&[x[0] - h])) / (2.0 * h);
        assert!((f.derivative(&a1, &x).unwrap() - fd1).abs() < 1e-8);
        let fd2 = (f.derivative(&a1, &[x[0] + h]).unwrap() - f.derivative(&a1, &[x[0] - h]).unwrap()) / (2.0 * h);
        assert!((f.derivative(&a2, &x).unwrap() - fd2).abs() < 1e-8);
    }

    #[test]
    fn standard_gaussian_m2_at_origin() {
        let f = TrueDensity::standard_gaussian(1);
        let m2 = f.max_abs_derivative_1d(2).unwrap();
        assert!((m2 - 0.398_942_280_401_432_7).abs() < 1e-12);
    }

    #[test]
    fn uniform_box_and_mixture() {
        let u = TrueDensity::UniformBox { lo: vec![0.0, 0.0], hi: vec![2.0, 0.5] };
        u.validate().unwrap();
        assert_eq!(u.value(&[1.0, 0.25]), 1.0);
        assert_eq!(u.value(&[3.0, 0.25]), 0.0);
        assert!(u.derivative(&MultiIndex::new(vec![1, 0]).unwrap(), &[1.0, 0.2]).is_err());

        let m = TrueDensity::GaussianMixture {
            components: vec![
                MixtureComponent { weight: 0.3, mean: vec![-1.0], sd: 0.5 },
                MixtureComponent { weight: 0.7, mean: vec![2.0], sd: 1.0 },
            ],
        };
        m.validate().unwrap();
        let bad = TrueDensity::GaussianMixture {
            components: vec![MixtureComponent { weight: 0.3, mean: vec![0.0], sd: 1.0 }],
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn samples_have_the_right_mean() {
        let f = TrueDensity::Gaussian { mean: vec![3.0], sd: 0.5 };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut out = [0.0];
        let mut acc = 0.0;
        for _ in 0..20_000 {
            f.sample(&mut rng, &mut out);
            acc += out[0];
        }
        assert!((acc / 20_000.0 - 3.0).abs() < 0.02);
    }
}
