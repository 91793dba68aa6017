//! Recursive kernel estimators of a multivariate density and its partial
//! derivatives, together with the exact rate functions that govern their
//! large and moderate deviations.
//!
//! The crate is `no_std` (it needs `alloc`) and carries no IO. It provides:
//!
//! - [`kernels`]: product kernels, their partial derivatives and the analytic
//!   constants (`∫K²`, sup norms, moment order, measures of `{K>0}`/`{K<0}`).
//! - [`bandwidth`]: bandwidth schedules `h_n` and scaling sequences `v_n`,
//!   with compensated prefix sums of `h_i^β` and the deviation speed.
//! - [`density`]: reference densities with known derivatives, used as the
//!   ground truth of every experiment.
//! - [`estimator`]: the streaming estimator `∂^[α] f_n` on a fixed grid, plus
//!   its expectation and the centered/bias split.
//! - [`ratefn`]: `ψ`, `ψ'`, `ψ''`, the Legendre transform `I`, the pointwise
//!   rates `I_x`, `J_[α],x`, the uniform rates `g_U`, `g̃_U` and the maximizer `φ`.
//! - [`cgf`]: the finite-n normalized cumulant generating function and its limits.
//! - [`deviations`]: Monte Carlo tail probabilities, bias studies and
//!   finite-n Chernoff curves.
//!
//! Numerical integration goes through [`quadrature`], an adaptive
//! Gauss–Kronrod (7/15) rule that fails loudly when it cannot meet its
//! tolerance.

#![no_std]
// Once std is linked anywhere in the graph (tests, std dependents), its
// inherent float methods shadow the `Float` trait imports.
#![allow(unused_imports)]
// `!(x > 0.0)` rejects NaN along with the out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;

pub mod bandwidth;
pub mod cgf;
pub mod density;
pub mod deviations;
pub mod error;
pub mod estimator;
pub mod kernels;
pub mod quadrature;
pub mod ratefn;
pub mod sum;

mod special;

pub use bandwidth::{BandwidthKind, BandwidthSchedule, ScalingSequence};
pub use cgf::{CgfRegime, CgfSpec};
pub use density::TrueDensity;
pub use error::{Error, Result};
pub use estimator::{Grid, RecursiveEstimator};
pub use kernels::{KernelKind, KernelModel, MultiIndex};
pub use ratefn::{PsiEvaluator, RateValue, UniformMode, UniformRateSpec};
