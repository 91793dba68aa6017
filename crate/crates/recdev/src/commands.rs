//! Subcommand execution: builds the core objects from a validated
//! configuration, runs them and writes `<command>.csv` and
//! `<command>_summary.json` into the output directory.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use recdev_core::cgf::cgf_limit;
use recdev_core::deviations::{
    chernoff_report, pointwise_report, run_bias_study, simulate, uniform_report, uniform_spec, DeviationExperiment,
    DeviationReport, ModelSetup, Policy, PointwiseMode, SerialRunner, Verdict,
};
use recdev_core::estimator::RecursiveEstimator;
use recdev_core::ratefn::{pointwise_rate_density, quadratic_rate, uniform_rate, UniformMode, UniformRateSpec};
use recdev_core::{Error, Grid, PsiEvaluator};
use serde_json::{json, Map, Value};

use crate::config::{t_values, ConfigError, ExperimentConfig, FlatConfig, SimulateMode};
use crate::output::{json_num, num, rate, write_json, write_text, Csv};
use crate::runner::{cgf_finite_n_parallel, RayonRunner};
use crate::validate::{validate, Subcommand, Violation};

/// Everything a subcommand needs: the typed config, the raw effective
/// key/values, and the overrides in the order they were given.
#[derive(Debug, Clone)]
pub struct Invocation {
    pub command: Subcommand,
    pub config: ExperimentConfig,
    pub flat: FlatConfig,
    pub overrides: Vec<(String, Value)>,
    pub out_dir: PathBuf,
}

#[derive(Debug, thiserror::Error)]
pub enum InvocationError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("configuration violates the hypotheses of `{command}`:\n{}", list(.violations))]
    Hypotheses {
        command: &'static str,
        violations: Vec<Violation>,
    },
}

fn list(v: &[Violation]) -> String {
    v.iter().map(|v| format!("  {v}")).collect::<Vec<_>>().join("\n")
}

impl Invocation {
    /// Loads `config` (if any), then applies `--set` entries and the
    /// dedicated flags, in that order, and validates the result.
    pub fn build(
        command: Subcommand,
        config: Option<&Path>,
        sets: &[String],
        flags: Vec<(String, Value)>,
        out_dir: PathBuf,
    ) -> Result<Self, InvocationError> {
        let mut flat = match config {
            Some(path) => FlatConfig::load(path)?,
            None => FlatConfig::default(),
        };
        let mut overrides = Vec::new();
        for s in sets {
            overrides.push(flat.apply_override(s)?);
        }
        for (k, v) in flags {
            flat.set(&k, v.clone());
            overrides.push((k, v));
        }
        let cfg = ExperimentConfig::from_flat(&flat)?;
        let violations = validate(&cfg, command);
        if !violations.is_empty() {
            return Err(InvocationError::Hypotheses {
                command: command.name(),
                violations,
            });
        }
        Ok(Self {
            command,
            config: cfg,
            flat,
            overrides,
            out_dir,
        })
    }
}

/// What a subcommand produced.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub verdicts: Vec<Verdict>,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.passed)
    }

    /// `0` iff every verdict passed.
    pub fn exit_code(&self) -> i32 {
        if self.passed() {
            0
        } else {
            1
        }
    }
}

pub fn run(inv: &Invocation, runner: &RayonRunner) -> anyhow::Result<Outcome> {
    let result = match inv.command {
        Subcommand::Estimate => estimate(inv),
        Subcommand::Rate => rate_table(inv),
        Subcommand::Cgf => cgf(inv, runner),
        Subcommand::Simulate => simulate_tails(inv, runner),
        Subcommand::Bias => bias(inv),
        Subcommand::Chernoff => chernoff(inv, runner),
    };
    result.with_context(|| format!("`{}` failed", inv.command.name()))
}

fn setup(cfg: &ExperimentConfig) -> anyhow::Result<ModelSetup> {
    Ok(ModelSetup {
        kernel: cfg.kernel_model().context("kernel")?,
        schedule: cfg.schedule().context("bandwidth")?,
        scaling: cfg.scaling,
        alpha: cfg.multi_index().context("alpha")?,
        density: cfg.density.clone(),
    })
}

fn experiment(cfg: &ExperimentConfig, delta: f64) -> anyhow::Result<DeviationExperiment> {
    let exp = DeviationExperiment {
        setup: setup(cfg)?,
        point: cfg.point.clone(),
        region: cfg.region().context("grid")?,
        delta,
        n_list: cfg.n_list.clone(),
        replications: cfg.replications,
        seed: cfg.seed,
        xi: cfg.xi,
        policy: cfg.policy,
    };
    exp.validate().context("experiment parameters")?;
    Ok(exp)
}

fn policy_json(p: &Policy) -> Value {
    json!({
        "rate_tolerance": p.rate_tolerance,
        "bias_stability": p.bias_stability,
        "sigma_slack": p.sigma_slack,
        "sandwich_slack": p.sandwich_slack,
    })
}

fn verdict_json(v: &Verdict, delta: Option<f64>) -> Value {
    let mut m = Map::new();
    if let Some(d) = delta {
        m.insert("delta".into(), json_num(d));
    }
    m.insert("name".into(), Value::String(v.name.clone()));
    m.insert("passed".into(), Value::Bool(v.passed));
    m.insert("detail".into(), Value::String(v.detail.clone()));
    Value::Object(m)
}

/// Writes the CSV and the summary and collects the verdicts.
fn finish(inv: &Invocation, csv: &Csv, per_n: Vec<Value>, verdicts: Vec<(Option<f64>, Verdict)>, extra: Map<String, Value>) -> anyhow::Result<Outcome> {
    let name = inv.command.name();
    let mut summary = Map::new();
    summary.insert("command".into(), Value::String(name.into()));
    summary.insert("config".into(), inv.config.to_json());
    summary.insert(
        "overrides".into(),
        Value::Array(inv.overrides.iter().map(|(k, v)| json!({"key": k, "value": v})).collect()),
    );
    summary.insert("policy".into(), policy_json(&inv.config.policy));
    summary.insert("per_n".into(), Value::Array(per_n));
    summary.insert(
        "verdicts".into(),
        Value::Array(verdicts.iter().map(|(d, v)| verdict_json(v, *d)).collect()),
    );
    summary.extend(extra);
    let csv_path = write_text(&inv.out_dir, &format!("{name}.csv"), csv.as_str())
        .with_context(|| format!("writing {name}.csv into {}", inv.out_dir.display()))?;
    let json_path = write_json(&inv.out_dir, &format!("{name}_summary.json"), &Value::Object(summary))
        .with_context(|| format!("writing {name}_summary.json into {}", inv.out_dir.display()))?;
    Ok(Outcome {
        files: vec![csv_path, json_path],
        verdicts: verdicts.into_iter().map(|(_, v)| v).collect(),
    })
}

fn coordinate_header(d: usize) -> Vec<String> {
    (1..=d).map(|j| format!("x_{j}")).collect()
}

fn estimate(inv: &Invocation) -> anyhow::Result<Outcome> {
    let cfg = &inv.config;
    let setup = setup(cfg)?;
    let grid = match cfg.region().context("grid")? {
        Some(g) => g,
        None => Grid::single(&cfg.point).context("point")?,
    };
    let mut header: Vec<String> = vec!["n".into()];
    header.extend(coordinate_header(cfg.d));
    header.push("estimate".into());
    let mut per_n = Vec::new();

    let mut csv;
    if let Some(path) = &cfg.observations {
        let obs = crate::observations::load(path, cfg.d).with_context(|| format!("reading {}", path.display()))?;
        if obs.is_empty() {
            bail!("{} holds no observations", path.display());
        }
        let total = obs.len() as u64;
        let mut checkpoints: Vec<u64> = cfg.n_list.iter().copied().filter(|&n| n >= 1 && n < total).collect();
        checkpoints.push(total);
        csv = Csv::new(&header.iter().map(String::as_str).collect::<Vec<_>>());
        let mut est = RecursiveEstimator::new(setup.kernel, setup.schedule, setup.alpha, grid.clone())?;
        for (i, x) in obs.iter().enumerate() {
            est.update(x).with_context(|| format!("observation {}", i + 1))?;
            if checkpoints.contains(&est.n()) {
                let values = est.values()?;
                for (p, v) in grid.points().zip(&values) {
                    let mut row = vec![est.n().to_string()];
                    row.extend(p.iter().map(|&c| num(c)));
                    row.push(num(*v));
                    csv.row(&row);
                }
                per_n.push(json!({"n": est.n(), "grid_points": grid.len()}));
            }
        }
    } else {
        // Draws a sample from the configured density; stream 0 of the seed,
        // the same stream as replication 0 of `simulate`.
        header.push("truth".into());
        csv = Csv::new(&header.iter().map(String::as_str).collect::<Vec<_>>());
        let n_list = strictly_increasing(&cfg.n_list)?;
        let samples = simulate(&setup, &grid, &n_list, 1, cfg.seed, &SerialRunner)?;
        let truth: Vec<f64> = grid
            .points()
            .map(|x| setup.density.derivative(&setup.alpha, &x))
            .collect::<recdev_core::Result<_>>()?;
        for (k, &n) in n_list.iter().enumerate() {
            let values = samples.at(0, k);
            let mut worst = 0.0f64;
            for ((p, &v), &t) in grid.points().zip(values).zip(&truth) {
                let mut row = vec![n.to_string()];
                row.extend(p.iter().map(|&c| num(c)));
                row.push(num(v));
                row.push(num(t));
                csv.row(&row);
                worst = worst.max((v - t).abs());
            }
            per_n.push(json!({"n": n, "max_abs_error": json_num(worst)}));
        }
    }
    finish(inv, &csv, per_n, Vec::new(), Map::new())
}

fn strictly_increasing(n_list: &[u64]) -> anyhow::Result<Vec<u64>> {
    if n_list.is_empty() || n_list[0] < 1 || n_list.windows(2).any(|w| w[0] >= w[1]) {
        bail!("n_list must be nonempty, ≥ 1 and strictly increasing, got {n_list:?}");
    }
    Ok(n_list.to_vec())
}

fn rate_table(inv: &Invocation) -> anyhow::Result<Outcome> {
    let cfg = &inv.config;
    let setup = setup(cfg)?;
    let ev = PsiEvaluator::new(setup.kernel.clone(), cfg.a).context("ψ")?;
    let l2 = setup.kernel.l2_norm_sq(&setup.alpha)?;
    let f_x = setup.density.value(&cfg.point);
    let spec = match cfg.region()? {
        Some(grid) => uniform_spec(&setup, &grid)?,
        None => UniformRateSpec {
            sup_density: f_x,
            a: cfg.a,
            d: cfg.d,
            alpha_order: cfg.alpha_order(),
            mode: if cfg.is_density_ldp() {
                UniformMode::LdpDensity
            } else {
                UniformMode::Quadratic
            },
        },
    };
    let mut csv = Csv::new(&["t_or_delta", "I", "I_x", "J", "g_U", "g_tilde"]);
    for t in t_values(cfg.t_grid) {
        let i = ev.legendre_i(t).with_context(|| format!("I({t})"))?;
        let ix = pointwise_rate_density(&ev, f_x, t).with_context(|| format!("I_x({t})"))?;
        let j = quadratic_rate(f_x, cfg.a, cfg.d, cfg.alpha_order(), l2, t)?;
        let g = uniform_rate(&spec, Some(&ev), l2, t)?.plus;
        let tilde = uniform_rate(&spec, Some(&ev), l2, t.abs())?.tilde;
        csv.row(&[num(t), rate(i), rate(ix), rate(j), rate(g), rate(tilde)]);
    }
    let mut extra = Map::new();
    extra.insert("density_at_x".into(), json_num(f_x));
    extra.insert("sup_density".into(), json_num(spec.sup_density));
    extra.insert("l2_norm_sq".into(), json_num(l2));
    finish(inv, &csv, Vec::new(), Vec::new(), extra)
}

fn cgf(inv: &Invocation, runner: &RayonRunner) -> anyhow::Result<Outcome> {
    let cfg = &inv.config;
    let n_list = strictly_increasing(&cfg.n_list)?;
    let spec = setup(cfg)?.cgf_spec(&cfg.point)?;
    let mut csv = Csv::new(&["n", "u", "lambda_n", "lambda_limit", "abs_error"]);
    let mut per_n = Vec::new();
    let mut verdicts = Vec::new();
    for &u in &cfg.u {
        let limit = cgf_limit(&spec, u).with_context(|| format!("limit at u = {u}"))?;
        let mut errors = Vec::with_capacity(n_list.len());
        for &n in &n_list {
            let lambda = cgf_finite_n_parallel(runner, &spec, u, n).with_context(|| format!("Λ_n at n = {n}, u = {u}"))?;
            let err = (lambda - limit).abs();
            errors.push(err);
            csv.row(&[n.to_string(), num(u), num(lambda), num(limit), num(err)]);
            per_n.push(json!({"n": n, "u": json_num(u), "lambda_n": json_num(lambda), "lambda_limit": json_num(limit), "abs_error": json_num(err)}));
        }
        if u != 0.0 && errors.len() > 1 {
            verdicts.push((
                None,
                Verdict {
                    name: "abs_error_decreasing".into(),
                    passed: errors.windows(2).all(|w| w[1] < w[0]),
                    detail: format!("u = {u}: |Λ_n - Λ| per n: {errors:?}"),
                },
            ));
        }
    }
    let regime = format!("{:?}", spec.regime()).to_lowercase();
    let mut extra = Map::new();
    extra.insert("regime".into(), Value::String(regime));
    finish(inv, &csv, per_n, verdicts, extra)
}

fn simulation_grid(cfg: &ExperimentConfig) -> anyhow::Result<Grid> {
    match cfg.simulate_mode {
        SimulateMode::Pointwise => Ok(Grid::single(&cfg.point)?),
        SimulateMode::Uniform => cfg
            .region()?
            .context("simulate.mode = uniform needs a region: set grid.min, grid.max and grid.points"),
    }
}

fn simulate_tails(inv: &Invocation, runner: &RayonRunner) -> anyhow::Result<Outcome> {
    let cfg = &inv.config;
    if cfg.deltas.is_empty() {
        bail!("no δ given");
    }
    let base = experiment(cfg, cfg.deltas[0])?;
    let grid = simulation_grid(cfg)?;
    let samples = simulate(&base.setup, &grid, &base.n_list, base.replications, base.seed, runner)
        .context("Monte Carlo simulation")?;
    let mode = if cfg.is_density_ldp() { PointwiseMode::Ldp } else { PointwiseMode::Mdp };

    let mut csv = Csv::new(&[
        "delta",
        "n",
        "speed",
        "exceedances",
        "p_hat",
        "censored",
        "normalized_log_prob",
        "theoretical",
        "sandwich_lower",
        "sandwich_upper",
    ]);
    let mut per_n = Vec::new();
    let mut verdicts = Vec::new();
    for &delta in &cfg.deltas {
        let exp = DeviationExperiment { delta, ..base.clone() };
        let report = match cfg.simulate_mode {
            SimulateMode::Pointwise => pointwise_report(&exp, mode, &samples),
            SimulateMode::Uniform => uniform_report(&exp, cfg.bounded, &samples),
        };
        let report: DeviationReport = match report {
            Ok(r) => r,
            Err(e @ Error::Underpowered { .. }) => {
                verdicts.push((
                    Some(delta),
                    Verdict {
                        name: "underpowered".into(),
                        passed: false,
                        detail: e.to_string(),
                    },
                ));
                continue;
            }
            Err(e) => return Err(e).with_context(|| format!("δ = {delta}")),
        };
        for row in &report.rows {
            let (lo, hi) = row.sandwich.map_or((String::new(), String::new()), |(l, h)| (num(l), num(h)));
            csv.row(&[
                num(delta),
                row.n.to_string(),
                num(row.speed),
                row.exceedances.to_string(),
                num(row.p_hat),
                row.censored.to_string(),
                num(row.normalized_log_prob),
                num(row.theoretical),
                lo,
                hi,
            ]);
            per_n.push(json!({
                "delta": json_num(delta),
                "n": row.n,
                "speed": json_num(row.speed),
                "exceedances": row.exceedances,
                "p_hat": json_num(row.p_hat),
                "censored": row.censored,
                "normalized_log_prob": json_num(row.normalized_log_prob),
                "theoretical": json_num(row.theoretical),
                "rate": rate(report.rate),
            }));
        }
        verdicts.extend(report.verdicts.into_iter().map(|v| (Some(delta), v)));
    }
    let mut extra = Map::new();
    extra.insert(
        "mode".into(),
        Value::String(match cfg.simulate_mode {
            SimulateMode::Pointwise => format!("pointwise_{}", if mode == PointwiseMode::Ldp { "ldp" } else { "mdp" }),
            SimulateMode::Uniform => format!("uniform_{}", if cfg.bounded { "bounded" } else { "unbounded" }),
        }),
    );
    finish(inv, &csv, per_n, verdicts, extra)
}

fn bias(inv: &Invocation) -> anyhow::Result<Outcome> {
    let cfg = &inv.config;
    let exp = experiment(cfg, cfg.deltas.first().copied().unwrap_or(1.0))?;
    let report = run_bias_study(&exp)?;
    let mut csv = Csv::new(&["n", "bias", "scale", "ratio", "sup_ratio"]);
    let mut per_n = Vec::new();
    for row in &report.rows {
        csv.row(&[
            row.n.to_string(),
            num(row.bias),
            num(row.scale),
            num(row.ratio),
            row.sup_ratio.map(num).unwrap_or_default(),
        ]);
        per_n.push(json!({
            "n": row.n,
            "bias": json_num(row.bias),
            "scale": json_num(row.scale),
            "ratio": json_num(row.ratio),
            "sup_ratio": row.sup_ratio.map(json_num),
        }));
    }
    let mut extra = Map::new();
    extra.insert("q".into(), json!(report.q));
    extra.insert("bound".into(), report.bound.map(json_num).unwrap_or(Value::Null));
    finish(inv, &csv, per_n, report.verdicts.into_iter().map(|v| (None, v)).collect(), extra)
}

fn chernoff(inv: &Invocation, runner: &RayonRunner) -> anyhow::Result<Outcome> {
    let cfg = &inv.config;
    if cfg.deltas.is_empty() {
        bail!("no δ given");
    }
    // `replications = 0` asks for the bounds alone.
    let with_samples = cfg.replications > 0;
    let mut base_cfg = cfg.clone();
    base_cfg.replications = cfg.replications.max(1);
    let base = experiment(&base_cfg, cfg.deltas[0])?;
    let samples = if with_samples {
        let grid = Grid::single(&base.point)?;
        Some(
            simulate(&base.setup, &grid, &base.n_list, base.replications, base.seed, runner)
                .context("Monte Carlo simulation")?,
        )
    } else {
        None
    };
    let mut csv = Csv::new(&[
        "delta",
        "n",
        "speed",
        "u_plus",
        "u_minus",
        "lambda_n_plus",
        "lambda_n_minus",
        "bound_plus",
        "bound_minus",
        "bound",
        "limit_part",
        "correction",
        "p_hat",
        "sigma",
    ]);
    let mut per_n = Vec::new();
    let mut verdicts = Vec::new();
    for &delta in &cfg.deltas {
        let exp = DeviationExperiment { delta, ..base.clone() };
        let report = chernoff_report(&exp, samples.as_ref()).with_context(|| format!("δ = {delta}"))?;
        for row in &report.rows {
            csv.row(&[
                num(delta),
                row.n.to_string(),
                num(row.speed),
                num(row.u_plus),
                num(row.u_minus),
                num(row.lambda_n_plus),
                num(row.lambda_n_minus),
                num(row.bound_plus),
                num(row.bound_minus),
                num(row.bound),
                num(row.limit_part),
                num(row.correction),
                row.p_hat.map(num).unwrap_or_default(),
                num(row.sigma),
            ]);
            per_n.push(json!({
                "delta": json_num(delta),
                "n": row.n,
                "bound": json_num(row.bound),
                "limit_part": json_num(row.limit_part),
                "correction": json_num(row.correction),
                "p_hat": row.p_hat.map(json_num),
            }));
        }
        verdicts.extend(report.verdicts.into_iter().map(|v| (Some(delta), v)));
    }
    finish(inv, &csv, per_n, verdicts, Map::new())
}
