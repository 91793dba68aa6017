//! Monte Carlo tail probabilities of the estimator against the theoretical
//! rates, bias studies and finite-n Chernoff bounds.
//!
//! Replication `r` draws its observations from `ChaCha8Rng` seeded with the
//! experiment seed on stream `r`, so results do not depend on how
//! replications are scheduled. Tail probabilities are read off one stream of
//! `max(n_list)` observations per replication, at every `n` of the list.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use num_traits::Float;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::bandwidth::{BandwidthSchedule, ScalingSequence};
use crate::cgf::{cgf_finite_n, cgf_limit, CgfRegime, CgfSpec};
use crate::density::TrueDensity;
use crate::error::{Error, Result};
use crate::estimator::{bandwidth_table, BiasSeries, Grid, RecursiveEstimator};
use crate::kernels::{KernelModel, MultiIndex};
use crate::ratefn::{
    phi_maximizer, pointwise_rate_density, quadratic_rate, uniform_rate, PsiEvaluator, RateValue, UniformMode,
    UniformRateSpec,
};
use crate::special::factorial;

/// The model shared by every experiment: kernel, bandwidths, scaling,
/// derivative order and the density that generates the data.
#[derive(Debug, Clone)]
pub struct ModelSetup {
    pub kernel: KernelModel,
    pub schedule: BandwidthSchedule,
    pub scaling: ScalingSequence,
    pub alpha: MultiIndex,
    pub density: TrueDensity,
}

impl ModelSetup {
    pub fn dim(&self) -> usize {
        self.kernel.dim()
    }

    pub fn cgf_spec(&self, x: &[f64]) -> Result<CgfSpec> {
        CgfSpec::new(
            self.kernel.clone(),
            self.schedule.clone(),
            self.scaling,
            self.alpha.clone(),
            x.to_vec(),
            self.density.clone(),
        )
    }

    /// `v_n ≡ 1` and `|α| = 0`.
    pub fn is_density_ldp(&self) -> bool {
        self.scaling.is_constant() && self.alpha.order() == 0
    }

    /// `Σ_{i≤n} h_i^{d+2|α|} / v_n²`.
    pub fn speed(&self, n: u64) -> Result<f64> {
        crate::bandwidth::speed(&self.schedule, &self.scaling, self.alpha.order(), self.dim(), n)
    }

    fn psi(&self) -> Result<PsiEvaluator> {
        PsiEvaluator::new(self.kernel.clone(), self.schedule.a())
    }
}

/// Tolerances used to turn reports into verdicts. They are acceptance policy
/// of this crate and are echoed in every report.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Policy {
    /// Allowed `|normalized log-prob - (-rate)| / rate` at the largest `n`.
    pub rate_tolerance: f64,
    /// Allowed relative change of the bias ratio over the last two `n`.
    pub bias_stability: f64,
    /// Monte Carlo slack, in standard errors, for the Chernoff comparison.
    pub sigma_slack: f64,
    /// Slack around the uniform bounds, as a fraction of `g̃_U(δ)`.
    pub sandwich_slack: f64,
}

impl Default for Policy {
    fn default() -> Self {
        Self {
            rate_tolerance: 0.30,
            bias_stability: 0.10,
            sigma_slack: 3.0,
            sandwich_slack: 0.30,
        }
    }
}

/// One Monte Carlo experiment.
#[derive(Debug, Clone)]
pub struct DeviationExperiment {
    pub setup: ModelSetup,
    /// Evaluation point of the pointwise studies.
    pub point: Vec<f64>,
    /// The set `U` of the uniform studies, as a grid.
    pub region: Option<Grid>,
    pub delta: f64,
    pub n_list: Vec<u64>,
    pub replications: u64,
    pub seed: u64,
    /// Moment exponent `ξ` of the unbounded-`U` bound.
    pub xi: Option<f64>,
    pub policy: Policy,
}

impl DeviationExperiment {
    pub fn validate(&self) -> Result<()> {
        if self.replications < 1 {
            return Err(Error::InvalidParameter("at least one replication is needed".into()));
        }
        if !(self.delta > 0.0) {
            return Err(Error::InvalidParameter(format!("δ must be > 0, got {}", self.delta)));
        }
        if self.n_list.is_empty() || self.n_list[0] < 1 || self.n_list.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter("n_list must be nonempty, ≥ 1 and strictly increasing".into()));
        }
        if self.point.len() != self.setup.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.setup.dim(),
                got: self.point.len(),
            });
        }
        if let Some(g) = &self.region {
            if g.dim() != self.setup.dim() {
                return Err(Error::DimensionMismatch {
                    expected: self.setup.dim(),
                    got: g.dim(),
                });
            }
        }
        if let Some(xi) = self.xi {
            if !(xi > 0.0) {
                return Err(Error::InvalidParameter(format!("ξ must be > 0, got {xi}")));
            }
        }
        self.setup.density.validate()
    }

    fn n_max(&self) -> u64 {
        *self.n_list.last().expect("validated n_list")
    }
}

/// Runs independent replications and returns their outputs in index order.
pub trait ReplicationRunner: Sync {
    fn run(&self, replications: u64, job: &(dyn Fn(u64) -> Result<Vec<f64>> + Sync)) -> Result<Vec<Vec<f64>>>;
}

/// Runs replications one after the other.
#[derive(Debug, Clone, Copy, Default)]
pub struct SerialRunner;

impl ReplicationRunner for SerialRunner {
    fn run(&self, replications: u64, job: &(dyn Fn(u64) -> Result<Vec<f64>> + Sync)) -> Result<Vec<Vec<f64>>> {
        (0..replications).map(job).collect()
    }
}

/// Estimates `∂^[α] f_n` over a grid at every `n` of a list, per replication.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateSamples {
    pub n_list: Vec<u64>,
    pub grid: Grid,
    /// `values[r][k·|grid| + g]`: replication `r`, `n = n_list[k]`, grid point `g`.
    pub values: Vec<Vec<f64>>,
}

impl EstimateSamples {
    pub fn replications(&self) -> u64 {
        self.values.len() as u64
    }

    pub fn at(&self, rep: usize, k: usize) -> &[f64] {
        let m = self.grid.len();
        &self.values[rep][k * m..(k + 1) * m]
    }
}

/// Simulates `replications` independent streams and records the estimator on
/// `grid` at every `n` of `n_list`.
pub fn simulate(
    setup: &ModelSetup,
    grid: &Grid,
    n_list: &[u64],
    replications: u64,
    seed: u64,
    runner: &dyn ReplicationRunner,
) -> Result<EstimateSamples> {
    let n_max = *n_list.last().ok_or_else(|| Error::InvalidParameter("empty n_list".into()))?;
    let table = bandwidth_table(&setup.schedule, n_max);
    let template = RecursiveEstimator::new(
        setup.kernel.clone(),
        setup.schedule.clone(),
        setup.alpha.clone(),
        grid.clone(),
    )?
    .with_bandwidth_table(Arc::clone(&table));
    let d = setup.dim();
    let job = |rep: u64| -> Result<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(rep);
        let mut est = template.clone();
        let mut x = vec![0.0; d];
        let mut out = Vec::with_capacity(n_list.len() * grid.len());
        for &n in n_list {
            while est.n() < n {
                setup.density.sample(&mut rng, &mut x);
                est.update(&x)?;
            }
            out.extend(est.values()?);
        }
        Ok(out)
    };
    let values = runner.run(replications, &job)?;
    Ok(EstimateSamples {
        n_list: n_list.to_vec(),
        grid: grid.clone(),
        values,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointwiseMode {
    /// Density LDP: `v_n ≡ 1`, `|α| = 0`, rate `I_x`.
    Ldp,
    /// Moderate deviations: rate `J_[α],x`.
    Mdp,
}

/// A named pass/fail check.
#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Verdict {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self {
            name: name.into(),
            passed,
            detail,
        }
    }
}

/// Tail statistics at one `n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailRow {
    pub n: u64,
    pub speed: f64,
    pub exceedances: u64,
    pub p_hat: f64,
    /// `p̂ = 0`: the normalized value below is the bound `log(1/R)/speed`.
    pub censored: bool,
    pub normalized_log_prob: f64,
    /// `-rate`, possibly `-∞`.
    pub theoretical: f64,
    /// `(-g̃_U(δ), -ξ/(ξ+d)·g̃_U(δ))` for uniform studies.
    pub sandwich: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeviationReport {
    pub delta: f64,
    pub replications: u64,
    pub rate: RateValue,
    pub rows: Vec<TailRow>,
    pub verdicts: Vec<Verdict>,
    pub policy: Policy,
}

impl DeviationReport {
    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.passed)
    }
}

/// Counts `v_n·max_{x∈grid} |est(x) - target(x)| ≥ δ` and normalizes.
fn tail_rows(
    exp: &DeviationExperiment,
    samples: &EstimateSamples,
    targets: &[f64],
    rate: RateValue,
    sandwich: Option<(f64, f64)>,
) -> Result<Vec<TailRow>> {
    let r = samples.replications();
    let mut rows = Vec::with_capacity(samples.n_list.len());
    for (k, &n) in samples.n_list.iter().enumerate() {
        let v = exp.setup.scaling.value(n);
        let mut count = 0u64;
        for rep in 0..samples.values.len() {
            let sup = samples
                .at(rep, k)
                .iter()
                .zip(targets)
                .fold(0.0f64, |m, (e, t)| m.max((e - t).abs()));
            if v * sup >= exp.delta {
                count += 1;
            }
        }
        let speed = exp.setup.speed(n)?;
        let p_hat = count as f64 / r as f64;
        let censored = count == 0;
        let normalized_log_prob = if censored {
            (1.0 / r as f64).ln() / speed
        } else {
            p_hat.ln() / speed
        };
        rows.push(TailRow {
            n,
            speed,
            exceedances: count,
            p_hat,
            censored,
            normalized_log_prob,
            theoretical: -rate.value(),
            sandwich,
        });
    }
    Ok(rows)
}

fn underpowered(rows: &[TailRow], rate: RateValue, replications: u64) -> Result<()> {
    if rate.is_finite() && rows.iter().all(|r| r.censored) {
        return Err(Error::Underpowered { replications });
    }
    Ok(())
}

/// Checks that `|normalized - theoretical|` shrinks along `n` and ends within
/// the policy tolerance.
fn convergence_verdicts(rows: &[TailRow], rate: RateValue, policy: &Policy) -> Vec<Verdict> {
    let Some(target) = rate.finite() else {
        let all_zero = rows.iter().all(|r| r.censored);
        return vec![Verdict::new(
            "infinite_rate",
            all_zero,
            format!("rate is +inf; exceedances per n: {:?}", rows.iter().map(|r| r.exceedances).collect::<Vec<_>>()),
        )];
    };
    let gaps: Vec<f64> = rows.iter().map(|r| (r.normalized_log_prob + target).abs()).collect();
    let shrinking = gaps.windows(2).all(|w| w[1] < w[0]) && rows.iter().all(|r| !r.censored);
    let last = *gaps.last().expect("nonempty rows");
    let tol = policy.rate_tolerance * target;
    vec![
        Verdict::new("gap_decreasing", shrinking, format!("|normalized + rate| per n: {gaps:?}")),
        Verdict::new(
            "final_gap",
            last <= tol && !rows.last().expect("nonempty").censored,
            format!("final gap {last} vs allowed {tol} (rate {target})"),
        ),
    ]
}

/// The two-sided pointwise rate `min(I_x(δ), I_x(-δ))` or `J(δ)`.
pub fn pointwise_rate(setup: &ModelSetup, x: &[f64], delta: f64, mode: PointwiseMode) -> Result<RateValue> {
    let f_x = setup.density.value(x);
    match mode {
        PointwiseMode::Ldp => {
            if !setup.is_density_ldp() {
                return Err(Error::ModeMismatch("the density LDP needs v_n ≡ 1 and |α| = 0".into()));
            }
            let psi = setup.psi()?;
            let plus = pointwise_rate_density(&psi, f_x, delta)?;
            let minus = pointwise_rate_density(&psi, f_x, -delta)?;
            Ok(plus.min(minus))
        }
        PointwiseMode::Mdp => {
            if setup.is_density_ldp() {
                return Err(Error::ModeMismatch("moderate deviations need v_n → ∞ or |α| > 0".into()));
            }
            let l2 = setup.kernel.l2_norm_sq(&setup.alpha)?;
            quadratic_rate(f_x, setup.schedule.a(), setup.dim(), setup.alpha.order(), l2, delta)
        }
    }
}

/// Tail report at the experiment point from existing samples on a
/// single-point grid.
pub fn pointwise_report(exp: &DeviationExperiment, mode: PointwiseMode, samples: &EstimateSamples) -> Result<DeviationReport> {
    exp.validate()?;
    let rate = pointwise_rate(&exp.setup, &exp.point, exp.delta, mode)?;
    let truth = exp.setup.density.derivative(&exp.setup.alpha, &exp.point)?;
    let rows = tail_rows(exp, samples, &[truth], rate, None)?;
    underpowered(&rows, rate, exp.replications)?;
    let verdicts = convergence_verdicts(&rows, rate, &exp.policy);
    Ok(DeviationReport {
        delta: exp.delta,
        replications: exp.replications,
        rate,
        rows,
        verdicts,
        policy: exp.policy,
    })
}

/// Simulates and reports `P[v_n |∂^[α] f_n(x) - ∂^[α] f(x)| ≥ δ]` against the
/// pointwise rate.
pub fn run_pointwise(exp: &DeviationExperiment, mode: PointwiseMode, runner: &dyn ReplicationRunner) -> Result<DeviationReport> {
    exp.validate()?;
    let grid = Grid::single(&exp.point)?;
    let samples = simulate(&exp.setup, &grid, &exp.n_list, exp.replications, exp.seed, runner)?;
    pointwise_report(exp, mode, &samples)
}

/// `g_U` ingredients for a grid: `‖f‖_{U,∞}` on the grid and the mode.
pub fn uniform_spec(setup: &ModelSetup, grid: &Grid) -> Result<UniformRateSpec> {
    let mut sup = 0.0f64;
    for x in grid.points() {
        sup = sup.max(setup.density.value(&x));
    }
    Ok(UniformRateSpec {
        sup_density: sup,
        a: setup.schedule.a(),
        d: setup.dim(),
        alpha_order: setup.alpha.order(),
        mode: if setup.is_density_ldp() {
            UniformMode::LdpDensity
        } else {
            UniformMode::Quadratic
        },
    })
}

/// Tail report of the sup over the experiment region from existing samples.
pub fn uniform_report(exp: &DeviationExperiment, bounded: bool, samples: &EstimateSamples) -> Result<DeviationReport> {
    exp.validate()?;
    let grid = exp
        .region
        .as_ref()
        .ok_or_else(|| Error::InvalidParameter("uniform studies need a region grid".into()))?;
    let spec = uniform_spec(&exp.setup, grid)?;
    let psi = match spec.mode {
        UniformMode::LdpDensity => Some(exp.setup.psi()?),
        UniformMode::Quadratic => None,
    };
    let l2 = exp.setup.kernel.l2_norm_sq(&exp.setup.alpha)?;
    let g = uniform_rate(&spec, psi.as_ref(), l2, exp.delta)?.tilde;
    let d = exp.setup.dim() as f64;

    // With all moments finite and no ξ given, the limit is -g̃ itself.
    let ratio = match (bounded, exp.xi) {
        (true, _) => 1.0,
        (false, Some(xi)) => xi / (xi + d),
        (false, None) if exp.setup.density.all_moments_finite() => 1.0,
        (false, None) => return Err(Error::InvalidParameter("unbounded U needs ξ".into())),
    };
    let sandwich = g.finite().map(|g| (-g, -ratio * g));

    let targets = grid
        .points()
        .map(|x| exp.setup.density.derivative(&exp.setup.alpha, &x))
        .collect::<Result<Vec<f64>>>()?;
    let rows = tail_rows(exp, samples, &targets, g, sandwich)?;
    underpowered(&rows, g, exp.replications)?;

    let verdicts = match g.finite() {
        None => convergence_verdicts(&rows, g, &exp.policy),
        Some(gv) => {
            let last = rows.last().expect("nonempty rows");
            let slack = exp.policy.sandwich_slack * gv;
            let upper = -ratio * gv + slack;
            let mut v = vec![Verdict::new(
                "upper_member",
                last.normalized_log_prob <= upper,
                format!("final normalized {} vs upper member {upper}", last.normalized_log_prob),
            )];
            if !bounded {
                let lower = -gv - slack;
                v.push(Verdict::new(
                    "sandwich",
                    !last.censored && last.normalized_log_prob >= lower && last.normalized_log_prob <= upper,
                    format!("final normalized {} vs [{lower}, {upper}]", last.normalized_log_prob),
                ));
            }
            v
        }
    };
    Ok(DeviationReport {
        delta: exp.delta,
        replications: exp.replications,
        rate: g,
        rows,
        verdicts,
        policy: exp.policy,
    })
}

/// Simulates and reports `P[sup_{x∈U} v_n |∂^[α] f_n(x) - ∂^[α] f(x)| ≥ δ]`
/// against `g̃_U(δ)`.
pub fn run_uniform(exp: &DeviationExperiment, bounded: bool, runner: &dyn ReplicationRunner) -> Result<DeviationReport> {
    exp.validate()?;
    let grid = exp
        .region
        .as_ref()
        .ok_or_else(|| Error::InvalidParameter("uniform studies need a region grid".into()))?;
    let samples = simulate(&exp.setup, grid, &exp.n_list, exp.replications, exp.seed, runner)?;
    uniform_report(exp, bounded, &samples)
}

/// Bias at one `n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiasRow {
    pub n: u64,
    /// `B_n(x)` at the experiment point.
    pub bias: f64,
    /// `(1/n) Σ_{i≤n} h_i^q`.
    pub scale: f64,
    /// `B_n(x) / scale`.
    pub ratio: f64,
    /// `max_{x∈U} |B_n(x)| / scale`, when a region is given.
    pub sup_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiasReport {
    pub q: u32,
    /// `(M_q/q!)·∫‖z‖^q |K(z)| dz`, when `M_q` is available.
    pub bound: Option<f64>,
    pub rows: Vec<BiasRow>,
    pub verdicts: Vec<Verdict>,
    pub policy: Policy,
}

/// `sup |f^{(q+|α|)}|` for one-dimensional densities.
pub fn derivative_sup(setup: &ModelSetup, q: u32) -> Result<f64> {
    setup.density.max_abs_derivative_1d(q + setup.alpha.order())
}

/// Bias of the estimator at the experiment point (and over the region) for
/// each `n`, normalized by `(1/n) Σ h_i^q` with `q` the kernel order.
pub fn run_bias_study(exp: &DeviationExperiment) -> Result<BiasReport> {
    if exp.n_list.is_empty() || exp.n_list.windows(2).any(|w| w[0] >= w[1]) || exp.n_list[0] < 1 {
        return Err(Error::InvalidParameter("n_list must be nonempty, ≥ 1 and strictly increasing".into()));
    }
    let setup = &exp.setup;
    let q = setup.kernel.moment_order();
    let n_max = exp.n_max();
    let prefix = setup.schedule.prefix_sums(f64::from(q), n_max as usize);
    let scale = |n: u64| prefix[n as usize] / n as f64;

    let at_point = BiasSeries::compute(&setup.kernel, &setup.schedule, &setup.alpha, &exp.point, &setup.density, n_max)?;
    let region_series = match &exp.region {
        Some(grid) => Some(
            grid.points()
                .map(|x| BiasSeries::compute(&setup.kernel, &setup.schedule, &setup.alpha, &x, &setup.density, n_max))
                .collect::<Result<Vec<_>>>()?,
        ),
        None => None,
    };

    let rows: Vec<BiasRow> = exp
        .n_list
        .iter()
        .map(|&n| {
            let s = scale(n);
            let bias = at_point.bias(n);
            BiasRow {
                n,
                bias,
                scale: s,
                ratio: bias / s,
                sup_ratio: region_series
                    .as_ref()
                    .map(|all| all.iter().fold(0.0f64, |m, b| m.max(b.bias(n).abs())) / s),
            }
        })
        .collect();

    let bound = if setup.dim() == 1 {
        let m_q = derivative_sup(setup, q)?;
        Some(m_q / factorial(q) * setup.kernel.abs_norm_moment(q)?)
    } else {
        None
    };

    let mut verdicts = Vec::new();
    if rows.len() >= 2 {
        let (prev, last) = (rows[rows.len() - 2].ratio, rows[rows.len() - 1].ratio);
        let change = (last - prev).abs() / prev.abs().max(f64::MIN_POSITIVE);
        verdicts.push(Verdict::new(
            "ratio_stable",
            change < exp.policy.bias_stability,
            format!("relative change {change} between n = {} and n = {}", rows[rows.len() - 2].n, rows[rows.len() - 1].n),
        ));
    }
    if let Some(b) = bound {
        for row in &rows {
            if let Some(sr) = row.sup_ratio {
                verdicts.push(Verdict::new(
                    "sup_bound",
                    sr <= b,
                    format!("n = {}: normalized sup {sr} vs bound {b}", row.n),
                ));
            }
        }
    }
    Ok(BiasReport {
        q,
        bound,
        rows,
        verdicts,
        policy: exp.policy,
    })
}

/// The finite-n Chernoff bound at one `n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChernoffRow {
    pub n: u64,
    pub speed: f64,
    pub u_plus: f64,
    pub u_minus: f64,
    pub lambda_n_plus: f64,
    pub lambda_n_minus: f64,
    /// `exp(-b_n (u δ - Λ_{n,x}(u)))` at `u = φ(δ)`.
    pub bound_plus: f64,
    pub bound_minus: f64,
    /// `min(1, bound_plus + bound_minus)`, a bound on `P[|S_n(x)| ≥ δ]`.
    pub bound: f64,
    /// `exp(-b_n g(δ))`, the limit part of `bound_plus`.
    pub limit_part: f64,
    /// `exp(b_n (Λ_{n,x}(u) - Λ_x(u)))`, so that `bound_plus = limit_part·correction`.
    pub correction: f64,
    /// Empirical `P[|S_n(x)| ≥ δ]`, `S_n = v_n (∂^[α] f_n(x) - E ∂^[α] f_n(x))`.
    pub p_hat: Option<f64>,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChernoffReport {
    pub delta: f64,
    pub rows: Vec<ChernoffRow>,
    pub verdicts: Vec<Verdict>,
    pub policy: Policy,
}

impl ChernoffReport {
    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.passed)
    }
}

/// Pointwise `g(δ)` and `φ(δ)` with `‖f‖` replaced by `f(x)`.
fn pointwise_uniform_spec(setup: &ModelSetup, x: &[f64]) -> UniformRateSpec {
    UniformRateSpec {
        sup_density: setup.density.value(x),
        a: setup.schedule.a(),
        d: setup.dim(),
        alpha_order: setup.alpha.order(),
        mode: if setup.is_density_ldp() {
            UniformMode::LdpDensity
        } else {
            UniformMode::Quadratic
        },
    }
}

fn lower_tail_u(spec: &UniformRateSpec, psi: Option<&PsiEvaluator>, l2: f64, delta: f64, cgf: &CgfSpec, n: u64, speed: f64) -> Result<(f64, f64)> {
    let exact = match (spec.mode, psi) {
        (UniformMode::Quadratic, _) => Some(-phi_maximizer(spec, psi, l2, delta)?),
        (UniformMode::LdpDensity, Some(psi)) => {
            let q = psi.one_minus_ad();
            let target = 1.0 / q - delta / (spec.sup_density * q);
            if target > 0.0 || !psi.kernel().is_nonnegative() {
                Some(psi.psi_prime_inverse(target)?)
            } else {
                None
            }
        }
        (UniformMode::LdpDensity, None) => return Err(Error::ModeMismatch("missing ψ evaluator".into())),
    };
    if let Some(u) = exact {
        return Ok((u, cgf_finite_n(cgf, u, n)?));
    }
    // No stationary point: any u < 0 gives a valid bound; take the best of a
    // few, skipping those that overflow.
    let mut best: Option<(f64, f64, f64)> = None;
    for k in 0..7 {
        let u = -f64::from(1u32 << k);
        match cgf_finite_n(cgf, u, n) {
            Ok(l) => {
                let exponent = -speed * (-u * delta - l);
                if best.is_none_or(|b| exponent < b.2) {
                    best = Some((u, l, exponent));
                }
            }
            Err(Error::ExponentOverflow { .. }) => break,
            Err(e) => return Err(e),
        }
    }
    best.map(|(u, l, _)| (u, l))
        .ok_or(Error::RootFinding {
            target: -delta,
            reason: "no admissible u < 0 for the lower tail",
        })
}

/// Chernoff bounds for `P[|S_n(x)| ≥ δ]` at every `n`; with `samples` (on the
/// single-point grid of the experiment point) the empirical tail of the
/// centered statistic is compared against them.
pub fn chernoff_report(exp: &DeviationExperiment, samples: Option<&EstimateSamples>) -> Result<ChernoffReport> {
    exp.validate()?;
    let setup = &exp.setup;
    let cgf = setup.cgf_spec(&exp.point)?;
    let spec = pointwise_uniform_spec(setup, &exp.point);
    let psi = match cgf.regime() {
        CgfRegime::Ldp => Some(setup.psi()?),
        CgfRegime::Quadratic => None,
    };
    let l2 = cgf.l2();
    let g = uniform_rate(&spec, psi.as_ref(), l2, exp.delta)?.plus.value();
    let u_plus = phi_maximizer(&spec, psi.as_ref(), l2, exp.delta)?;
    let limit_plus = cgf_limit(&cgf, u_plus)?;
    let n_max = exp.n_max();
    let bias = match samples {
        Some(_) => Some(BiasSeries::compute(&setup.kernel, &setup.schedule, &setup.alpha, &exp.point, &setup.density, n_max)?),
        None => None,
    };

    let mut rows = Vec::with_capacity(exp.n_list.len());
    for (k, &n) in exp.n_list.iter().enumerate() {
        let speed = cgf.speed(n);
        let lambda_plus = cgf_finite_n(&cgf, u_plus, n)?;
        let bound_plus = (-speed * (u_plus * exp.delta - lambda_plus)).exp().min(1.0);
        let (u_minus, lambda_minus) = lower_tail_u(&spec, psi.as_ref(), l2, exp.delta, &cgf, n, speed)?;
        let bound_minus = (-speed * (-u_minus * exp.delta - lambda_minus)).exp().min(1.0);
        let bound = (bound_plus + bound_minus).min(1.0);
        let p_hat = match (samples, &bias) {
            (Some(s), Some(b)) => {
                let mean = b.expectation(n);
                let v = setup.scaling.value(n);
                let hits = (0..s.values.len()).filter(|&rep| (v * (s.at(rep, k)[0] - mean)).abs() >= exp.delta).count();
                Some(hits as f64 / s.replications() as f64)
            }
            _ => None,
        };
        let r = exp.replications as f64;
        rows.push(ChernoffRow {
            n,
            speed,
            u_plus,
            u_minus,
            lambda_n_plus: lambda_plus,
            lambda_n_minus: lambda_minus,
            bound_plus,
            bound_minus,
            bound,
            limit_part: (-speed * g).exp(),
            correction: (speed * (lambda_plus - limit_plus)).exp(),
            p_hat,
            sigma: (bound * (1.0 - bound) / r).sqrt(),
        });
    }

    let mut verdicts = Vec::new();
    if samples.is_some() {
        for row in &rows {
            let p = row.p_hat.expect("samples given");
            let allowed = row.bound + exp.policy.sigma_slack * row.sigma;
            verdicts.push(Verdict::new(
                "chernoff_domination",
                p <= allowed,
                format!("n = {}: p̂ {p} vs bound {} (+{}σ = {allowed})", row.n, row.bound, exp.policy.sigma_slack),
            ));
        }
    }
    Ok(ChernoffReport {
        delta: exp.delta,
        rows,
        verdicts,
        policy: exp.policy,
    })
}

/// Simulates at the experiment point and compares with the Chernoff bounds.
pub fn chernoff_upper_curve(exp: &DeviationExperiment, runner: &dyn ReplicationRunner) -> Result<ChernoffReport> {
    exp.validate()?;
    let grid = Grid::single(&exp.point)?;
    let samples = simulate(&exp.setup, &grid, &exp.n_list, exp.replications, exp.seed, runner)?;
    chernoff_report(exp, Some(&samples))
}
