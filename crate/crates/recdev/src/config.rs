//! Experiment configuration: a flat JSON object with dotted keys.
//!
//! Nested objects are accepted and flattened, so `{"bandwidth": {"a": 0.3}}`
//! and `{"bandwidth.a": 0.3}` are the same document. Every key has a default;
//! an empty object is a valid configuration.
//!
//! | key | meaning | default |
//! |---|---|---|
//! | `kernel` | `gaussian`, `epanechnikov` or `quartic` | `gaussian` |
//! | `d` | dimension | `1` |
//! | `bandwidth.kind` | `power` (`c n^-a`) or `power_log` (`c n^-a ln(n+1)`) | `power` |
//! | `bandwidth.c`, `bandwidth.a` | constants of `h_n` | `1`, `0.3` |
//! | `scaling.kind` | `one` (`v_n ≡ 1`) or `power` (`v_n = n^b`) | `one` |
//! | `scaling.b` | exponent of `v_n` | `0.1` |
//! | `alpha` | derivative multi-index | zeros |
//! | `density.kind` | `gaussian`, `gaussian_mixture` or `uniform_box` | `gaussian` |
//! | `density.mean`, `density.sd` | gaussian parameters | origin, `1` |
//! | `density.components` | mixture: list of `{weight, mean, sd}` | |
//! | `density.lo`, `density.hi` | uniform box corners | `-1`, `1` |
//! | `point` | evaluation point `x` | origin |
//! | `grid.min`, `grid.max`, `grid.points` | region `U` (scalars broadcast over axes) | none |
//! | `region.bounded` | uniform study on a bounded `U` | `true` |
//! | `xi` | moment exponent `ξ` of the unbounded bound | none |
//! | `delta` | threshold or list of thresholds | `[0.2]` |
//! | `n_list` | sample sizes | `[100, 1000, 10000]` |
//! | `replications`, `seed` | Monte Carlo size and seed | `10000`, `0` |
//! | `u` | CGF arguments | `[1]` |
//! | `t_grid` | `"start:stop:step"` for `rate` | `"-1:3:0.1"` |
//! | `simulate.mode` | `pointwise` or `uniform` | `pointwise` |
//! | `observations` | data file for `estimate` | none |
//! | `policy.rate_tolerance`, `policy.bias_stability`, `policy.sigma_slack`, `policy.sandwich_slack` | verdict tolerances | `0.3`, `0.1`, `3`, `0.3` |

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use recdev_core::bandwidth::{BandwidthKind, BandwidthSchedule, ScalingSequence};
use recdev_core::density::{MixtureComponent, TrueDensity};
use recdev_core::deviations::Policy;
use recdev_core::estimator::{Axis, Grid};
use recdev_core::kernels::{KernelKind, KernelModel, MultiIndex};
use serde_json::{json, Map, Value};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: JSON syntax error at line {line}, column {column}: {message}")]
    Syntax {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("configuration must be a JSON object")]
    NotAnObject,
    #[error("field `{field}`: {message}")]
    Field { field: String, message: String },
    #[error("override `{0}` must look like key=value")]
    Override(String),
}

fn field_error(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Field {
        field: field.to_string(),
        message: message.into(),
    }
}

/// Raw key/value pairs, flattened.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FlatConfig {
    entries: BTreeMap<String, Value>,
}

impl FlatConfig {
    pub fn from_value(value: &Value) -> Result<Self, ConfigError> {
        let Value::Object(map) = value else {
            return Err(ConfigError::NotAnObject);
        };
        let mut entries = BTreeMap::new();
        flatten("", map, &mut entries);
        Ok(Self { entries })
    }

    pub fn from_str(text: &str, path: &Path) -> Result<Self, ConfigError> {
        let value: Value = serde_json::from_str(text).map_err(|e| ConfigError::Syntax {
            path: path.to_path_buf(),
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        Self::from_value(&value)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_str(&text, path)
    }

    pub fn set(&mut self, key: &str, value: Value) {
        match value {
            Value::Object(map) => flatten(key, &map, &mut self.entries),
            v => {
                self.entries.insert(key.to_string(), v);
            }
        }
    }

    /// Applies `key=value`; the value is read as JSON when it parses and as a
    /// string otherwise. Returns the parsed pair.
    pub fn apply_override(&mut self, spec: &str) -> Result<(String, Value), ConfigError> {
        let (key, raw) = spec.split_once('=').ok_or_else(|| ConfigError::Override(spec.to_string()))?;
        let key = key.trim();
        if key.is_empty() {
            return Err(ConfigError::Override(spec.to_string()));
        }
        let value = serde_json::from_str(raw.trim()).unwrap_or_else(|_| Value::String(raw.trim().to_string()));
        self.set(key, value.clone());
        Ok((key.to_string(), value))
    }

    pub fn get(&self, key: &str) -> Option<&Value> {
        self.entries.get(key)
    }

    pub fn to_value(&self) -> Value {
        Value::Object(self.entries.iter().map(|(k, v)| (k.clone(), v.clone())).collect())
    }
}

fn flatten(prefix: &str, map: &Map<String, Value>, out: &mut BTreeMap<String, Value>) {
    for (k, v) in map {
        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match v {
            Value::Object(inner) if !inner.is_empty() => flatten(&key, inner, out),
            _ => {
                out.insert(key, v.clone());
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimulateMode {
    Pointwise,
    Uniform,
}

/// Region `U` as a regular grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    pub points: Vec<usize>,
}

impl GridSpec {
    pub fn to_grid(&self) -> recdev_core::Result<Grid> {
        let axes = self
            .min
            .iter()
            .zip(&self.max)
            .zip(&self.points)
            .map(|((&lo, &hi), &m)| Axis::new(lo, hi, m))
            .collect::<recdev_core::Result<Vec<_>>>()?;
        Grid::new(axes)
    }
}

/// The typed configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub kernel: KernelKind,
    pub d: usize,
    pub bandwidth_kind: BandwidthKind,
    pub c: f64,
    pub a: f64,
    pub scaling: ScalingSequence,
    pub alpha: Vec<u32>,
    pub density: TrueDensity,
    pub point: Vec<f64>,
    pub grid: Option<GridSpec>,
    pub bounded: bool,
    pub xi: Option<f64>,
    pub deltas: Vec<f64>,
    pub n_list: Vec<u64>,
    pub replications: u64,
    pub seed: u64,
    pub u: Vec<f64>,
    pub t_grid: (f64, f64, f64),
    pub simulate_mode: SimulateMode,
    pub observations: Option<PathBuf>,
    pub policy: Policy,
}

struct Reader<'a> {
    flat: &'a FlatConfig,
}

impl Reader<'_> {
    fn f64(&self, key: &str, default: f64) -> Result<f64, ConfigError> {
        match self.flat.get(key) {
            None => Ok(default),
            Some(v) => as_f64(key, v),
        }
    }

    fn opt_f64(&self, key: &str) -> Result<Option<f64>, ConfigError> {
        match self.flat.get(key) {
            None | Some(Value::Null) => Ok(None),
            Some(v) => as_f64(key, v).map(Some),
        }
    }

    fn u64(&self, key: &str, default: u64) -> Result<u64, ConfigError> {
        match self.flat.get(key) {
            None => Ok(default),
            Some(v) => as_u64(key, v),
        }
    }

    fn string(&self, key: &str, default: &str) -> Result<String, ConfigError> {
        match self.flat.get(key) {
            None => Ok(default.to_string()),
            Some(Value::String(s)) => Ok(s.clone()),
            Some(other) => Err(field_error(key, format!("expected a string, got {other}"))),
        }
    }

    fn bool(&self, key: &str, default: bool) -> Result<bool, ConfigError> {
        match self.flat.get(key) {
            None => Ok(default),
            Some(Value::Bool(b)) => Ok(*b),
            Some(other) => Err(field_error(key, format!("expected true or false, got {other}"))),
        }
    }

    /// A list of numbers; a scalar counts as a one-element list.
    fn f64_list(&self, key: &str) -> Result<Option<Vec<f64>>, ConfigError> {
        match self.flat.get(key) {
            None | Some(Value::Null) => Ok(None),
            Some(Value::Array(items)) => items.iter().map(|v| as_f64(key, v)).collect::<Result<_, _>>().map(Some),
            Some(Value::String(s)) => parse_f64_list(s).map(Some).map_err(|m| field_error(key, m)),
            Some(v) => Ok(Some(vec![as_f64(key, v)?])),
        }
    }

    fn u64_list(&self, key: &str) -> Result<Option<Vec<u64>>, ConfigError> {
        match self.flat.get(key) {
            None | Some(Value::Null) => Ok(None),
            Some(Value::Array(items)) => items.iter().map(|v| as_u64(key, v)).collect::<Result<_, _>>().map(Some),
            Some(Value::String(s)) => parse_u64_list(s).map(Some).map_err(|m| field_error(key, m)),
            Some(v) => Ok(Some(vec![as_u64(key, v)?])),
        }
    }

    /// A per-axis vector; scalars broadcast to `d` entries.
    fn axis_vec(&self, key: &str, d: usize, default: f64) -> Result<Vec<f64>, ConfigError> {
        let v = self.f64_list(key)?.unwrap_or_else(|| vec![default]);
        broadcast(key, v, d)
    }
}

fn broadcast<T: Clone>(key: &str, v: Vec<T>, d: usize) -> Result<Vec<T>, ConfigError> {
    match v.len() {
        1 => Ok(vec![v[0].clone(); d]),
        n if n == d => Ok(v),
        n => Err(field_error(key, format!("expected 1 or d = {d} entries, got {n}"))),
    }
}

fn as_f64(key: &str, v: &Value) -> Result<f64, ConfigError> {
    match v {
        Value::Number(n) => n.as_f64().ok_or_else(|| field_error(key, "number out of range")),
        Value::String(s) => parse_number(s).map_err(|m| field_error(key, m)),
        other => Err(field_error(key, format!("expected a number, got {other}"))),
    }
}

fn as_u64(key: &str, v: &Value) -> Result<u64, ConfigError> {
    match v {
        Value::Number(n) => n
            .as_u64()
            .or_else(|| n.as_f64().filter(|x| x.fract() == 0.0 && *x >= 0.0 && *x < 1.8e19).map(|x| x as u64))
            .ok_or_else(|| field_error(key, format!("expected a nonnegative integer, got {n}"))),
        Value::String(s) => s
            .trim()
            .parse::<f64>()
            .ok()
            .filter(|x| x.fract() == 0.0 && *x >= 0.0)
            .map(|x| x as u64)
            .ok_or_else(|| field_error(key, format!("expected a nonnegative integer, got {s:?}"))),
        other => Err(field_error(key, format!("expected a nonnegative integer, got {other}"))),
    }
}

/// Parses a number, accepting `inf`/`-inf` and exponent forms like `1e5`.
pub fn parse_number(s: &str) -> Result<f64, String> {
    s.trim().parse::<f64>().map_err(|_| format!("not a number: {s:?}"))
}

/// `"1,2,3"` or `"1 2 3"`.
pub fn parse_f64_list(s: &str) -> Result<Vec<f64>, String> {
    s.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(parse_number)
        .collect()
}

pub fn parse_u64_list(s: &str) -> Result<Vec<u64>, String> {
    parse_f64_list(s)?
        .into_iter()
        .map(|x| {
            if x.fract() == 0.0 && (0.0..1.8e19).contains(&x) {
                Ok(x as u64)
            } else {
                Err(format!("not a nonnegative integer: {x}"))
            }
        })
        .collect()
}

/// `"start:stop:step"`, inclusive of `stop` up to rounding.
pub fn parse_t_grid(s: &str) -> Result<(f64, f64, f64), String> {
    let parts: Vec<&str> = s.split(':').collect();
    let [a, b, step] = parts.as_slice() else {
        return Err(format!("expected start:stop:step, got {s:?}"));
    };
    let (a, b, step) = (parse_number(a)?, parse_number(b)?, parse_number(step)?);
    if !(step > 0.0) || !(b >= a) || !a.is_finite() || !b.is_finite() {
        return Err(format!("need start <= stop and step > 0, got {s:?}"));
    }
    Ok((a, b, step))
}

/// The points of a `start:stop:step` grid, rounded to 12 decimals so that
/// `0.1·3` prints as `0.3`.
pub fn t_values((a, b, step): (f64, f64, f64)) -> Vec<f64> {
    let count = ((b - a) / step + 1e-9).floor() as usize + 1;
    (0..count)
        .map(|k| {
            let t = a + step * k as f64;
            let r = (t * 1e12).round() / 1e12;
            if r == 0.0 {
                0.0
            } else {
                r
            }
        })
        .collect()
}

impl ExperimentConfig {
    pub fn from_flat(flat: &FlatConfig) -> Result<Self, ConfigError> {
        let r = Reader { flat };
        let kernel: KernelKind = r
            .string("kernel", "gaussian")?
            .parse()
            .map_err(|e: recdev_core::Error| field_error("kernel", e.to_string()))?;
        let d = r.u64("d", 1)? as usize;
        if d == 0 {
            return Err(field_error("d", "dimension must be at least 1"));
        }
        let bandwidth_kind: BandwidthKind = r
            .string("bandwidth.kind", "power")?
            .parse()
            .map_err(|e: recdev_core::Error| field_error("bandwidth.kind", e.to_string()))?;
        let c = r.f64("bandwidth.c", 1.0)?;
        let a = r.f64("bandwidth.a", 0.3)?;
        let scaling = match r.string("scaling.kind", "one")?.as_str() {
            "one" | "constant" => ScalingSequence::ConstantOne,
            "power" => ScalingSequence::Power {
                b: r.f64("scaling.b", 0.1)?,
            },
            other => return Err(field_error("scaling.kind", format!("expected one or power, got {other:?}"))),
        };
        let alpha = match r.u64_list("alpha")? {
            None => vec![0; d],
            Some(v) => broadcast("alpha", v, d)?.into_iter().map(|x| x as u32).collect(),
        };
        let density = read_density(&r, d)?;
        let point = r.axis_vec("point", d, 0.0)?;
        let grid = if flat.get("grid.min").is_some() || flat.get("grid.max").is_some() || flat.get("grid.points").is_some() {
            let points = broadcast("grid.points", r.u64_list("grid.points")?.unwrap_or(vec![21]), d)?;
            Some(GridSpec {
                min: r.axis_vec("grid.min", d, -1.0)?,
                max: r.axis_vec("grid.max", d, 1.0)?,
                points: points.into_iter().map(|p| p as usize).collect(),
            })
        } else {
            None
        };
        let simulate_mode = match r.string("simulate.mode", "pointwise")?.as_str() {
            "pointwise" => SimulateMode::Pointwise,
            "uniform" => SimulateMode::Uniform,
            other => return Err(field_error("simulate.mode", format!("expected pointwise or uniform, got {other:?}"))),
        };
        let t_grid = parse_t_grid(&r.string("t_grid", "-1:3:0.1")?).map_err(|m| field_error("t_grid", m))?;
        Ok(Self {
            kernel,
            d,
            bandwidth_kind,
            c,
            a,
            scaling,
            alpha,
            density,
            point,
            grid,
            bounded: r.bool("region.bounded", true)?,
            xi: r.opt_f64("xi")?,
            deltas: r.f64_list("delta")?.unwrap_or(vec![0.2]),
            n_list: r.u64_list("n_list")?.unwrap_or(vec![100, 1000, 10_000]),
            replications: r.u64("replications", 10_000)?,
            seed: r.u64("seed", 0)?,
            u: r.f64_list("u")?.unwrap_or(vec![1.0]),
            t_grid,
            simulate_mode,
            observations: flat.get("observations").and_then(Value::as_str).map(PathBuf::from),
            policy: read_policy(&r)?,
        })
    }

    pub fn multi_index(&self) -> recdev_core::Result<MultiIndex> {
        MultiIndex::new(self.alpha.clone())
    }

    pub fn alpha_order(&self) -> u32 {
        self.alpha.iter().sum()
    }

    pub fn kernel_model(&self) -> recdev_core::Result<KernelModel> {
        KernelModel::builtin(self.kernel, self.d)
    }

    pub fn schedule(&self) -> recdev_core::Result<BandwidthSchedule> {
        BandwidthSchedule::new(self.bandwidth_kind, self.c, self.a)
    }

    pub fn region(&self) -> recdev_core::Result<Option<Grid>> {
        self.grid.as_ref().map(GridSpec::to_grid).transpose()
    }

    /// `v_n ≡ 1` and `|α| = 0`.
    pub fn is_density_ldp(&self) -> bool {
        self.scaling.is_constant() && self.alpha_order() == 0
    }

    /// The resolved configuration, defaults included, as flat dotted keys.
    /// Loading it back gives the same configuration.
    pub fn to_json(&self) -> Value {
        let mut m = Map::new();
        let mut put = |k: &str, v: Value| {
            m.insert(k.to_string(), v);
        };
        put("kernel", json!(self.kernel.name()));
        put("d", json!(self.d));
        put("bandwidth.kind", json!(self.bandwidth_kind.name()));
        put("bandwidth.c", json!(self.c));
        put("bandwidth.a", json!(self.a));
        match self.scaling {
            ScalingSequence::ConstantOne => put("scaling.kind", json!("one")),
            ScalingSequence::Power { b } => {
                put("scaling.kind", json!("power"));
                put("scaling.b", json!(b));
            }
        }
        put("alpha", json!(self.alpha));
        match &self.density {
            TrueDensity::Gaussian { mean, sd } => {
                put("density.kind", json!("gaussian"));
                put("density.mean", json!(mean));
                put("density.sd", json!(sd));
            }
            TrueDensity::UniformBox { lo, hi } => {
                put("density.kind", json!("uniform_box"));
                put("density.lo", json!(lo));
                put("density.hi", json!(hi));
            }
            TrueDensity::GaussianMixture { components } => {
                put("density.kind", json!("gaussian_mixture"));
                let c: Vec<Value> = components
                    .iter()
                    .map(|c| json!({"weight": c.weight, "mean": c.mean, "sd": c.sd}))
                    .collect();
                put("density.components", Value::Array(c));
            }
        }
        put("point", json!(self.point));
        if let Some(g) = &self.grid {
            put("grid.min", json!(g.min));
            put("grid.max", json!(g.max));
            put("grid.points", json!(g.points));
        }
        put("region.bounded", json!(self.bounded));
        if let Some(xi) = self.xi {
            put("xi", json!(xi));
        }
        put("delta", json!(self.deltas));
        put("n_list", json!(self.n_list));
        put("replications", json!(self.replications));
        put("seed", json!(self.seed));
        put("u", json!(self.u));
        let (a, b, step) = self.t_grid;
        put("t_grid", json!(format!("{a}:{b}:{step}")));
        put(
            "simulate.mode",
            json!(match self.simulate_mode {
                SimulateMode::Pointwise => "pointwise",
                SimulateMode::Uniform => "uniform",
            }),
        );
        if let Some(p) = &self.observations {
            put("observations", json!(p.display().to_string()));
        }
        put("policy.rate_tolerance", json!(self.policy.rate_tolerance));
        put("policy.bias_stability", json!(self.policy.bias_stability));
        put("policy.sigma_slack", json!(self.policy.sigma_slack));
        put("policy.sandwich_slack", json!(self.policy.sandwich_slack));
        Value::Object(m)
    }
}

fn read_policy(r: &Reader<'_>) -> Result<Policy, ConfigError> {
    let p = Policy::default();
    Ok(Policy {
        rate_tolerance: r.f64("policy.rate_tolerance", p.rate_tolerance)?,
        bias_stability: r.f64("policy.bias_stability", p.bias_stability)?,
        sigma_slack: r.f64("policy.sigma_slack", p.sigma_slack)?,
        sandwich_slack: r.f64("policy.sandwich_slack", p.sandwich_slack)?,
    })
}

fn read_density(r: &Reader<'_>, d: usize) -> Result<TrueDensity, ConfigError> {
    let density = match r.string("density.kind", "gaussian")?.as_str() {
        "gaussian" | "normal" => TrueDensity::Gaussian {
            mean: r.axis_vec("density.mean", d, 0.0)?,
            sd: r.f64("density.sd", 1.0)?,
        },
        "uniform_box" | "uniform" => TrueDensity::UniformBox {
            lo: r.axis_vec("density.lo", d, -1.0)?,
            hi: r.axis_vec("density.hi", d, 1.0)?,
        },
        "gaussian_mixture" | "mixture" => {
            let key = "density.components";
            let Some(Value::Array(items)) = r.flat.get(key) else {
                return Err(field_error(key, "a mixture needs a list of {weight, mean, sd} objects"));
            };
            let mut components = Vec::with_capacity(items.len());
            for (i, item) in items.iter().enumerate() {
                let Value::Object(obj) = item else {
                    return Err(field_error(key, format!("component {i} is not an object")));
                };
                let get = |name: &str| obj.get(name).ok_or_else(|| field_error(key, format!("component {i} lacks `{name}`")));
                let mean = match get("mean")? {
                    Value::Array(v) => v.iter().map(|x| as_f64(key, x)).collect::<Result<Vec<_>, _>>()?,
                    v => vec![as_f64(key, v)?],
                };
                components.push(MixtureComponent {
                    weight: as_f64(key, get("weight")?)?,
                    mean: broadcast(key, mean, d)?,
                    sd: as_f64(key, get("sd")?)?,
                });
            }
            TrueDensity::GaussianMixture { components }
        }
        other => {
            return Err(field_error(
                "density.kind",
                format!("expected gaussian, gaussian_mixture or uniform_box, got {other:?}"),
            ))
        }
    };
    density.validate().map_err(|e| field_error("density", e.to_string()))?;
    Ok(density)
}
