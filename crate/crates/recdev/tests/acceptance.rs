//! Acceptance suite. Prints one `PASS`/`FAIL` line per criterion and exits
//! nonzero when any criterion fails.

use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use recdev::commands::{run, Invocation};
use recdev::runner::{cgf_finite_n_parallel, RayonRunner};
use recdev::Subcommand;
use recdev_core::bandwidth::regular_variation_limit_check;
use recdev_core::cgf::cgf_limit;
use recdev_core::deviations::{
    chernoff_report, pointwise_report, run_bias_study, run_pointwise, run_uniform, simulate, uniform_report,
    DeviationExperiment, ModelSetup, Policy, PointwiseMode,
};
use recdev_core::estimator::Axis;
use recdev_core::sum::NeumaierSum;
use recdev_core::{
    BandwidthSchedule, Grid, KernelKind, KernelModel, MultiIndex, PsiEvaluator, RateValue, RecursiveEstimator,
    ScalingSequence, TrueDensity,
};
use serde_json::json;

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn gaussian_kernel() -> KernelModel {
    KernelModel::builtin(KernelKind::Gaussian, 1).unwrap()
}

fn linspace(lo: f64, hi: f64, m: usize) -> Vec<f64> {
    (0..m).map(|k| lo + (hi - lo) * k as f64 / (m - 1) as f64).collect()
}

/// `I(t)` against the sup of `ut - ψ(u)` over a 10⁴-point grid.
fn legendre_duality() -> Outcome {
    let mut worst = 0.0f64;
    let mut minimum = 0.0f64;
    for (kind, hi) in [(KernelKind::Gaussian, 4.0), (KernelKind::Epanechnikov, 3.0)] {
        for a in [0.2, 0.25, 0.4] {
            let ev = PsiEvaluator::new(KernelModel::builtin(kind, 1).unwrap(), a).unwrap();
            let us = linspace(-10.0, hi, 10_000);
            let psi: Vec<f64> = us.iter().map(|&u| ev.psi(u).unwrap()).collect();
            for u0 in linspace(-9.0, hi - 1.0, 50) {
                let t = ev.psi_prime(u0).unwrap();
                let grid_sup = us.iter().zip(&psi).map(|(u, p)| u * t - p).fold(f64::NEG_INFINITY, f64::max);
                let i = ev.legendre_i(t).unwrap().finite().expect("finite t");
                worst = worst.max((i - grid_sup).abs());
            }
            let at_mean = ev.legendre_i(1.0 / (1.0 - a)).unwrap().value();
            minimum = minimum.max(at_mean);
        }
    }
    outcome(
        worst <= 1e-6 && minimum <= 1e-10,
        format!("max |I - grid sup| = {worst:.2e} (≤ 1e-6); max I(1/(1-ad)) = {minimum:.2e} (≤ 1e-10)"),
    )
}

fn branches() -> Outcome {
    let mut ok = true;
    let mut notes = Vec::new();
    for a in [0.2, 0.25, 0.4] {
        let g = PsiEvaluator::new(gaussian_kernel(), a).unwrap();
        for t in [-1.0, -0.1, -1e-9, 0.0] {
            if g.legendre_i(t).unwrap() != RateValue::Infinite {
                ok = false;
                notes.push(format!("gaussian a={a}: I({t}) finite"));
            }
        }
        let e = PsiEvaluator::new(KernelModel::builtin(KernelKind::Epanechnikov, 1).unwrap(), a).unwrap();
        let i0 = e.legendre_i(0.0).unwrap();
        if i0 != RateValue::Finite(2.0 / (1.0 - a)) {
            ok = false;
            notes.push(format!("epanechnikov a={a}: I(0) = {i0:?}"));
        }
        if e.legendre_i(-0.5).unwrap() != RateValue::Infinite {
            ok = false;
            notes.push(format!("epanechnikov a={a}: I(-0.5) finite"));
        }
    }
    let detail = if ok {
        "gaussian I(t<0) = I(0) = +inf; epanechnikov I(0) = 2/(1-ad) exactly".to_string()
    } else {
        notes.join("; ")
    };
    outcome(ok, detail)
}

fn derivative_identity() -> Outcome {
    let mut worst = 0.0f64;
    for kind in [KernelKind::Gaussian, KernelKind::Epanechnikov] {
        let ev = PsiEvaluator::new(KernelModel::builtin(kind, 1).unwrap(), 0.25).unwrap();
        for t in linspace(0.2, 4.0, 20) {
            let h = 1e-4;
            let slope = (ev.legendre_i(t + h).unwrap().value() - ev.legendre_i(t - h).unwrap().value()) / (2.0 * h);
            let inverse = ev.psi_prime_inverse(t).unwrap();
            worst = worst.max((slope - inverse).abs());
        }
    }
    outcome(worst <= 1e-5, format!("max |I'(t) - (ψ')⁻¹(t)| = {worst:.2e} over 20 t per kernel (≤ 1e-5)"))
}

fn streaming_batch() -> Outcome {
    let n = 10_000;
    let mut worst = 0.0f64;
    let cases = [
        (Grid::new(vec![Axis::new(-2.0, 2.0, 20).unwrap()]).unwrap(), vec![0]),
        (
            Grid::new(vec![Axis::new(-1.5, 1.5, 4).unwrap(), Axis::new(-2.0, 2.0, 5).unwrap()]).unwrap(),
            vec![1, 0],
        ),
    ];
    for (grid, alpha) in cases {
        let d = grid.dim();
        let kernel = KernelModel::builtin(KernelKind::Gaussian, d).unwrap();
        let schedule = BandwidthSchedule::power(1.0, 0.2).unwrap();
        let alpha = MultiIndex::new(alpha).unwrap();
        // Observations from a fixed deterministic sequence.
        let obs: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..d).map(|j| (((i * 7919 + j * 104_729) % 10_007) as f64 / 10_007.0 - 0.5) * 5.0).collect())
            .collect();
        let mut est = RecursiveEstimator::new(kernel.clone(), schedule.clone(), alpha.clone(), grid.clone()).unwrap();
        for x in &obs {
            est.update(x).unwrap();
        }
        let got = est.values().unwrap();
        for (x, g) in grid.points().zip(&got) {
            let mut acc = NeumaierSum::new();
            for (i, xi) in obs.iter().enumerate() {
                let h = schedule.h(i as u64 + 1);
                let z: Vec<f64> = x.iter().zip(xi).map(|(p, q)| (p - q) / h).collect();
                acc.add(kernel.deriv_eval(&alpha, &z) / h.powi((d as u32 + alpha.order()) as i32));
            }
            let want = acc.value() / n as f64;
            worst = worst.max((g - want).abs() / want.abs().max(1.0));
        }
    }
    outcome(worst <= 1e-12, format!("max deviation {worst:.2e} at n = 10^4, d ∈ {{1, 2}}, 20 points each (≤ 1e-12)"))
}

/// ζ(s) for 0 < s < 1 by Euler–Maclaurin with cutoff N = 1000.
fn zeta(s: f64) -> f64 {
    let big = 1000.0f64;
    let head: f64 = (1..1000).map(|k| (k as f64).powf(-s)).sum();
    head + big.powf(1.0 - s) / (s - 1.0) + 0.5 * big.powf(-s) + s * big.powf(-s - 1.0) / 12.0
}

fn regular_variation() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for (a, beta) in [(0.5, 1.0), (0.2, 1.0), (0.3, 3.0)] {
        let schedule = BandwidthSchedule::power(1.0, a).unwrap();
        let got = regular_variation_limit_check(&schedule, beta, &[100_000]).unwrap()[0];
        let limit = 1.0 / (1.0 - a * beta);
        let rel = (got / limit - 1.0).abs();
        ok &= rel < 0.01;
        // Σ_{i≤n} i^{-s} = n^{1-s}/(1-s) + ζ(s) + O(n^{-s}), so the shortfall is ζ(aβ)·n^{aβ-1}.
        let s = a * beta;
        let predicted = limit + zeta(s) * 100_000f64.powf(s - 1.0);
        parts.push(format!("(a={a}, β={beta}): {got:.4} vs {limit:.4}, rel {rel:.2e}, two-term expansion {predicted:.4}"));
    }
    outcome(ok, parts.join("; "))
}

fn cgf_convergence(runner: &RayonRunner) -> Outcome {
    let n_list = [100u64, 1_000, 10_000, 100_000];
    let mut ok = true;
    let mut parts = Vec::new();
    for (label, scaling) in [("quadratic", ScalingSequence::Power { b: 0.1 }), ("ldp", ScalingSequence::ConstantOne)] {
        let setup = ModelSetup {
            kernel: gaussian_kernel(),
            schedule: BandwidthSchedule::power(1.0, 0.3).unwrap(),
            scaling,
            alpha: MultiIndex::zero(1).unwrap(),
            density: TrueDensity::standard_gaussian(1),
        };
        let spec = setup.cgf_spec(&[0.0]).unwrap();
        for u in [0.5, 1.0] {
            let limit = cgf_limit(&spec, u).unwrap();
            if label == "quadratic" {
                // Λ^M(u) = u² f(x) ∫K² / (2(1 - a²)) with ∫K² = 1/(2√π)
                let oracle = u * u * FRAC_1_SQRT_2PI * (0.5 / std::f64::consts::PI.sqrt()) / (2.0 * (1.0 - 0.09));
                if (limit - oracle).abs() > 1e-12 * oracle {
                    ok = false;
                    parts.push(format!("Λ^M({u}) = {limit} vs closed form {oracle}"));
                }
            }
            let errors: Vec<f64> = n_list
                .iter()
                .map(|&n| (cgf_finite_n_parallel(runner, &spec, u, n).unwrap() - limit).abs())
                .collect();
            let decreasing = errors.windows(2).all(|w| w[1] < w[0]);
            let rel = errors[3] / limit.abs();
            let good = decreasing && (label == "ldp" || rel < 0.05);
            ok &= good;
            parts.push(format!("{label} u={u}: rel errors {:?}", errors.iter().map(|e| format!("{:.3}", e / limit.abs())).collect::<Vec<_>>()));
        }
    }
    outcome(ok, parts.join("; "))
}

fn mdp_setup(c: f64) -> ModelSetup {
    ModelSetup {
        kernel: gaussian_kernel(),
        schedule: BandwidthSchedule::power(c, 0.3).unwrap(),
        scaling: ScalingSequence::Power { b: 0.1 },
        alpha: MultiIndex::zero(1).unwrap(),
        density: TrueDensity::standard_gaussian(1),
    }
}

fn bias_rate() -> Outcome {
    let exp = DeviationExperiment {
        setup: mdp_setup(1.0),
        point: vec![0.0],
        region: Some(Grid::new(vec![Axis::new(-3.0, 3.0, 25).unwrap()]).unwrap()),
        delta: 0.2,
        n_list: vec![1_000, 10_000, 50_000, 100_000],
        replications: 1,
        seed: 0,
        xi: None,
        policy: Policy::default(),
    };
    let report = run_bias_study(&exp).unwrap();
    // Gaussian f and K: E f_n(0) = (1/n) Σ φ(0)/√(1 + h_i²).
    let schedule = &exp.setup.schedule;
    let mut acc = NeumaierSum::new();
    let mut oracle_ok = true;
    let mut i = 0u64;
    for row in &report.rows {
        while i < row.n {
            i += 1;
            acc.add(FRAC_1_SQRT_2PI / (1.0 + schedule.h(i).powi(2)).sqrt());
        }
        let oracle = acc.value() / row.n as f64 - FRAC_1_SQRT_2PI;
        oracle_ok &= (row.bias - oracle).abs() <= 1e-9 * oracle.abs();
    }
    // (M_2/2!) ∫z²|K| with M_2 = sup|φ''| = φ(0) and ∫z²φ = 1.
    let bound_oracle = FRAC_1_SQRT_2PI / 2.0;
    let bound_ok = report.bound.is_some_and(|b| (b - bound_oracle).abs() < 1e-9);
    let ratios: Vec<String> = report.rows.iter().map(|r| format!("{:.4}", r.ratio)).collect();
    let sup = report.rows.last().and_then(|r| r.sup_ratio).unwrap_or(f64::NAN);
    let passed = report.verdicts.iter().all(|v| v.passed) && oracle_ok && bound_ok;
    outcome(
        passed,
        format!(
            "ratios {ratios:?}; sup ratio {sup:.5} ≤ bound {:.5}; closed-form bias match {oracle_ok}; verdicts {:?}",
            report.bound.unwrap_or(f64::NAN),
            report.verdicts.iter().map(|v| (v.name.as_str(), v.passed)).collect::<Vec<_>>()
        ),
    )
}

fn quadratic_rate_oracle(delta: f64, f: f64) -> f64 {
    // J(δ) = δ²(1 - a²β²)/(2 f ∫K²), a = 0.3, β = 1
    delta * delta * (1.0 - 0.09) / (2.0 * f * (0.5 / std::f64::consts::PI.sqrt()))
}

fn mdp_slope(runner: &RayonRunner) -> Outcome {
    let exp = DeviationExperiment {
        setup: mdp_setup(0.35),
        point: vec![0.0],
        region: None,
        delta: 0.2,
        n_list: vec![500, 2_000, 8_000],
        replications: 100_000,
        seed: 42,
        xi: None,
        policy: Policy::default(),
    };
    let samples = simulate(&exp.setup, &Grid::single(&exp.point).unwrap(), &exp.n_list, exp.replications, exp.seed, runner).unwrap();
    let report = pointwise_report(&exp, PointwiseMode::Mdp, &samples).unwrap();
    let chernoff = chernoff_report(&exp, Some(&samples)).unwrap();
    let j = report.rate.value();
    let j_ok = (j - quadratic_rate_oracle(0.2, FRAC_1_SQRT_2PI)).abs() < 1e-12;
    let normalized: Vec<String> = report.rows.iter().map(|r| format!("{:.4}", r.normalized_log_prob)).collect();
    let passed = report.passed() && chernoff.passed() && j_ok;
    outcome(
        passed,
        format!(
            "normalized log-probs {normalized:?} vs -J = {:.4}; verdicts {:?}; chernoff {}/{} within 3σ",
            -j,
            report.verdicts.iter().map(|v| (v.name.as_str(), v.passed)).collect::<Vec<_>>(),
            chernoff.verdicts.iter().filter(|v| v.passed).count(),
            chernoff.verdicts.len()
        ),
    )
}

fn uniform_sandwich(runner: &RayonRunner) -> Outcome {
    let exp = DeviationExperiment {
        setup: mdp_setup(0.35),
        point: vec![0.0],
        region: Some(Grid::new(vec![Axis::new(-1.0, 1.0, 21).unwrap()]).unwrap()),
        delta: 0.2,
        n_list: vec![500, 2_000, 8_000],
        replications: 20_000,
        seed: 42,
        xi: None,
        policy: Policy::default(),
    };
    let grid = exp.region.clone().unwrap();
    let samples = simulate(&exp.setup, &grid, &exp.n_list, exp.replications, exp.seed, runner).unwrap();
    let report = uniform_report(&exp, true, &samples).unwrap();
    let g = report.rate.value();
    let g_ok = (g - quadratic_rate_oracle(0.2, FRAC_1_SQRT_2PI)).abs() < 1e-12;
    let last = report.rows.last().unwrap().normalized_log_prob;
    let below = last <= -0.7 * g && !report.rows.last().unwrap().censored;

    // A singleton U reproduces the pointwise study bit for bit.
    let small = DeviationExperiment {
        region: Some(Grid::single(&[0.0]).unwrap()),
        replications: 3_000,
        ..exp.clone()
    };
    let uni = run_uniform(&small, true, runner).unwrap();
    let point = run_pointwise(&small, PointwiseMode::Mdp, runner).unwrap();
    let same = uni.rows.len() == point.rows.len()
        && uni.rows.iter().zip(&point.rows).all(|(u, p)| {
            u.exceedances == p.exceedances && u.normalized_log_prob.to_bits() == p.normalized_log_prob.to_bits()
        });
    outcome(
        below && same && g_ok,
        format!("final normalized log-prob {last:.4} ≤ -0.7·g̃ = {:.4}: {below}; singleton U = pointwise bitwise: {same}", -0.7 * g),
    )
}

fn determinism() -> Outcome {
    let root = tempfile::tempdir().unwrap();
    let mut ok = true;
    let mut parts = Vec::new();
    for command in [Subcommand::Simulate, Subcommand::Chernoff] {
        let mut outputs = Vec::new();
        for threads in [1usize, 4] {
            let dir = root.path().join(format!("{}-{threads}", command.name()));
            let flags = vec![
                ("bandwidth.c".to_string(), json!(0.35)),
                ("scaling.kind".to_string(), json!("power")),
                ("scaling.b".to_string(), json!(0.1)),
                ("n_list".to_string(), json!([200, 800])),
                ("replications".to_string(), json!(2000)),
                ("seed".to_string(), json!(42)),
            ];
            let inv = Invocation::build(command, None, &[], flags, dir.clone()).unwrap();
            run(&inv, &RayonRunner::new(Some(threads))).unwrap();
            let name = command.name();
            outputs.push((
                std::fs::read(dir.join(format!("{name}.csv"))).unwrap(),
                std::fs::read(dir.join(format!("{name}_summary.json"))).unwrap(),
            ));
        }
        let same = outputs[0] == outputs[1];
        ok &= same;
        parts.push(format!("{}: identical = {same}", command.name()));
    }
    outcome(ok, format!("{} (seed 42, 1 vs 4 threads)", parts.join(", ")))
}

type Criterion = Box<dyn Fn() -> Outcome>;

fn main() {
    let runner = RayonRunner::from_env();
    let criteria: Vec<(&str, Duration, Criterion)> = vec![
        ("legendre duality", Duration::from_secs(60), Box::new(legendre_duality)),
        ("rate function branches", Duration::MAX, Box::new(branches)),
        ("derivative identity", Duration::MAX, Box::new(derivative_identity)),
        ("streaming equals batch", Duration::from_secs(30), Box::new(streaming_batch)),
        ("regular variation limit", Duration::MAX, Box::new(regular_variation)),
        ("CGF convergence", Duration::from_secs(300), Box::new(move || cgf_convergence(&runner))),
        ("bias rate", Duration::from_secs(120), Box::new(bias_rate)),
        ("MDP slope", Duration::from_secs(900), Box::new(move || mdp_slope(&runner))),
        ("uniform sandwich", Duration::MAX, Box::new(move || uniform_sandwich(&runner))),
        ("determinism", Duration::MAX, Box::new(determinism)),
    ];
    let mut failures = 0;
    let mut err = std::io::stderr();
    for (k, (name, limit, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        let elapsed = start.elapsed();
        let in_time = elapsed <= *limit;
        let passed = result.passed && in_time;
        failures += usize::from(!passed);
        let budget = if *limit == Duration::MAX { String::new() } else { format!(", budget {}s", limit.as_secs()) };
        let line = format!(
            "[{}] criterion {:>2} {name}: {} ({:.1}s{budget})\n",
            if passed { "PASS" } else { "FAIL" },
            k + 1,
            result.detail,
            elapsed.as_secs_f64()
        );
        let _ = err.write_all(line.as_bytes());
    }
    let _ = err.write_all(format!("acceptance: {} of {} criteria passed\n", criteria.len() - failures, criteria.len()).as_bytes());
    if failures > 0 {
        std::process::exit(1);
    }
}
