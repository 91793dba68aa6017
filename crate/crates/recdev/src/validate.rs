//! Cross-field hypothesis checks, run before any subcommand.
//!
//! Each violation carries the tag of the hypothesis it breaks so the message
//! can be looked up directly. Checks depend on the subcommand: `estimate` only
//! needs a differentiable kernel, the deviation studies need the bandwidth and
//! scaling constraints of the regime they run in.

use std::fmt;

use recdev_core::bandwidth::{BandwidthKind, ScalingSequence};

use crate::config::{ExperimentConfig, SimulateMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subcommand {
    Estimate,
    Rate,
    Cgf,
    Simulate,
    Bias,
    Chernoff,
}

impl Subcommand {
    pub fn name(&self) -> &'static str {
        match self {
            Subcommand::Estimate => "estimate",
            Subcommand::Rate => "rate",
            Subcommand::Cgf => "cgf",
            Subcommand::Simulate => "simulate",
            Subcommand::Bias => "bias",
            Subcommand::Chernoff => "chernoff",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub tag: &'static str,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.tag, self.message)
    }
}

/// Short decimal form: `0.19999999999999998` prints as `0.2`.
fn short(x: f64) -> String {
    let s = format!("{x:.6}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.into()
    }
}

/// `1/k` for an integer `k`, `1` when `k = 1`.
fn reciprocal(k: f64) -> String {
    if k == 1.0 {
        "1".into()
    } else {
        format!("1/{}", short(k))
    }
}

/// All violations for `command`; empty iff every referenced hypothesis holds.
pub fn validate(cfg: &ExperimentConfig, command: Subcommand) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |tag: &'static str, message: String| out.push(Violation { tag, message });

    let d = cfg.d as f64;
    let order = cfg.alpha_order();
    let beta = d + 2.0 * f64::from(order);
    let a = cfg.a;

    if cfg.alpha.len() != cfg.d {
        push("(H4)", format!("α has {} entries but d = {}", cfg.alpha.len(), cfg.d));
    } else if let (Ok(kernel), Ok(alpha)) = (cfg.kernel_model(), cfg.multi_index()) {
        if let Err(e) = kernel.check_alpha(&alpha) {
            push("(H4)", format!("∂^[α]K must exist and be bounded: {e}"));
        }
    }
    if command == Subcommand::Estimate {
        if !(cfg.c > 0.0) {
            push("(H3)", format!("c must be > 0, got {}", short(cfg.c)));
        }
        return out;
    }

    let h_name = if cfg.bandwidth_kind == BandwidthKind::Power { "(H2)" } else { "(H3)" };
    if !(cfg.c > 0.0) {
        push(h_name, format!("c must be > 0, got {}", short(cfg.c)));
    }
    if cfg.is_density_ldp() {
        if cfg.bandwidth_kind != BandwidthKind::Power {
            push("(H2)", "LDP density case requires h_n=cn^{−a}".into());
        }
        if !(a > 0.0 && a * d < 1.0) {
            push("(H2)", format!("a < 1/d={} and a > 0, got a={}", reciprocal(d), short(a)));
        }
    } else {
        if order == 0 && cfg.bandwidth_kind != BandwidthKind::Power {
            push("(H2)", "the density MDP requires h_n=cn^{−a}".into());
        }
        if !(a > 0.0 && a * beta < 1.0) {
            push("(H3)", format!("a < 1/(d+2|α|)={} and a > 0, got a={}", reciprocal(beta), short(a)));
        }
    }

    if let ScalingSequence::Power { b } = cfg.scaling {
        let bound = (1.0 - a * beta) / 2.0;
        if !(b > 0.0) {
            push("(H6)", format!("v_n=n^b must diverge: b must be > 0, got b={}", short(b)));
        }
        if !(b < bound) {
            push("(H6)", format!("b must be < (1−a(d+2|α|))/2 = {}, got b={}", short(bound), short(b)));
        }
        let studies_truth = matches!(command, Subcommand::Simulate | Subcommand::Chernoff);
        if studies_truth {
            let q = cfg.kernel_model().map(|k| k.moment_order()).unwrap_or(2);
            let aq = a * f64::from(q);
            if !(b < aq) {
                push("(H7)ii)", format!("b must be < aq = {} (q = {q}), got b={}", short(aq), short(b)));
            }
        }
        if command == Subcommand::Simulate && cfg.simulate_mode == SimulateMode::Uniform && !(b < bound) {
            push(
                "(H10)",
                format!("v_n² log(1/h_n)/Σh_i^(d+2|α|) → 0 needs b < (1−a(d+2|α|))/2 = {}", short(bound)),
            );
        }
    }

    if command == Subcommand::Simulate && cfg.simulate_mode == SimulateMode::Uniform
        && !cfg.bounded {
            match cfg.xi {
                Some(xi) if !(xi > 0.0) => push("(H8)i)", format!("ξ must be > 0, got {}", short(xi))),
                None if !cfg.density.all_moments_finite() => {
                    push("(H8)i)", "an unbounded U needs ξ > 0 with ∫‖x‖^ξ f < ∞; set `xi`".into())
                }
                _ => {}
            }
        }
    out
}
