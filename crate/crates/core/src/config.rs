//! Flat `section.key = value` experiment configs.
//!
//! The grammar is the dotted-key subset of TOML, so documents are parsed
//! with the `toml` crate and then flattened; every key must appear in
//! [`KEYS`]. Regularizer groups are 1-based in the file and 0-based in code.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::PathBuf;

use thiserror::Error;

use crate::estimator::{check_vanishing_domain, SolverConfig, StartSpec};
use crate::mlp_lab::{MlpTrainConfig, Scheme};
use crate::model_zoo::ModelFamily;
use crate::rate_lab::Schedule;
use crate::regularizers::Regularizer;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("config syntax: {0}")]
    Syntax(String),
    #[error("unknown key `{key}`{}", suggestion.as_ref().map(|s| format!(" (did you mean `{s}`?)")).unwrap_or_default())]
    UnknownKey { key: String, suggestion: Option<String> },
    #[error("key `{key}` expects {expected}")]
    Type { key: String, expected: &'static str },
    #[error("missing required key `{0}`")]
    Missing(&'static str),
    #[error("key `{key}`: {reason}")]
    Invalid { key: &'static str, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Str,
    UInt,
    Float,
    UIntList,
    FloatList,
    /// List of lists of 1-based indices.
    Groups,
}

impl Kind {
    fn describe(self) -> &'static str {
        match self {
            Kind::Str => "a string",
            Kind::UInt => "a nonnegative integer",
            Kind::Float => "a number",
            Kind::UIntList => "a list of nonnegative integers",
            Kind::FloatList => "a list of numbers",
            Kind::Groups => "a list of lists of 1-based indices",
        }
    }
}

/// Every accepted key and its value type.
const KEYS: &[(&str, Kind)] = &[
    ("command", Kind::Str),
    ("family", Kind::Str),
    ("master_seed", Kind::UInt),
    ("out_dir", Kind::Str),
    ("regularizer.kind", Kind::Str),
    ("regularizer.delta", Kind::Float),
    ("regularizer.groups", Kind::Groups),
    ("solver.grad_tol", Kind::Float),
    ("solver.max_iters", Kind::UInt),
    ("solver.window", Kind::Float),
    ("solver.starts_per_axis", Kind::UInt),
    ("schedule.kind", Kind::Str),
    ("schedule.lambda", Kind::Float),
    ("schedule.B0", Kind::Float),
    ("schedule.Delta", Kind::Float),
    ("schedule.Delta_max", Kind::Float),
    ("schedule.tau", Kind::Float),
    ("schedule.scale", Kind::Float),
    ("rate.n_grid", Kind::UIntList),
    ("rate.trials", Kind::UInt),
    ("mlp.hidden", Kind::UInt),
    ("mlp.lr", Kind::Float),
    ("mlp.epochs", Kind::UInt),
    ("mlp.scheme", Kind::Str),
    ("mlp.trials", Kind::UInt),
    ("mlp.runs", Kind::UInt),
    ("mlp.alpha_list", Kind::FloatList),
    ("bound.n_list", Kind::UIntList),
    ("oracle.instances", Kind::UInt),
];

#[derive(Debug, Clone, PartialEq)]
enum Value {
    Str(String),
    UInt(u64),
    Float(f64),
    UIntList(Vec<u64>),
    FloatList(Vec<f64>),
    Groups(Vec<Vec<u64>>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Rate,
    Mlp,
    Assumptions,
    Oracle,
    Bound,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Rate => "rate",
            Command::Mlp => "mlp",
            Command::Assumptions => "assumptions",
            Command::Oracle => "oracle",
            Command::Bound => "bound",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub command: Command,
    pub family_name: String,
    pub master_seed: u64,
    pub out_dir: PathBuf,
    pub regularizer: Regularizer,
    pub solver: SolverConfig,
    pub schedule: Schedule,
    pub n_grid: Vec<usize>,
    pub rate_trials: usize,
    pub mlp: MlpTrainConfig,
    pub mlp_scheme: Scheme,
    pub mlp_trials: usize,
    pub mlp_runs: usize,
    pub bound_n_list: Vec<usize>,
    pub oracle_instances: usize,
}

impl ExperimentConfig {
    pub fn family(&self) -> ModelFamily {
        ModelFamily::by_name(&self.family_name).expect("validated at parse time")
    }

    /// Half-width of the solver's start grid.
    pub fn window(&self) -> f64 {
        match self.solver.starts {
            StartSpec::Grid { window, .. } => window,
            StartSpec::Explicit(_) => 2.0 * PI,
        }
    }
}

pub const DEFAULT_N_GRID: [usize; 7] = [250, 500, 1000, 2000, 4000, 8000, 16000];

fn flatten(prefix: &str, table: &toml::Table, out: &mut Vec<(String, toml::Value)>) {
    for (k, v) in table {
        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match v {
            toml::Value::Table(t) => flatten(&key, t, out),
            other => out.push((key, other.clone())),
        }
    }
}

fn nearest_key(key: &str) -> Option<String> {
    KEYS.iter()
        .map(|(k, _)| (strsim::levenshtein(key, k), *k))
        .min()
        .filter(|(d, _)| *d <= 3.max(key.len() / 3))
        .map(|(_, k)| k.to_string())
}

fn as_uint(v: &toml::Value) -> Option<u64> {
    v.as_integer().and_then(|i| u64::try_from(i).ok())
}

fn as_float(v: &toml::Value) -> Option<f64> {
    v.as_float().or_else(|| v.as_integer().map(|i| i as f64))
}

fn convert(key: &str, kind: Kind, v: &toml::Value) -> Result<Value, ConfigError> {
    let err = || ConfigError::Type {
        key: key.to_string(),
        expected: kind.describe(),
    };
    let list = |v: &toml::Value| v.as_array().cloned().ok_or_else(err);
    Ok(match kind {
        Kind::Str => Value::Str(v.as_str().ok_or_else(err)?.to_string()),
        Kind::UInt => Value::UInt(as_uint(v).ok_or_else(err)?),
        Kind::Float => Value::Float(as_float(v).ok_or_else(err)?),
        Kind::UIntList => Value::UIntList(list(v)?.iter().map(|x| as_uint(x).ok_or_else(err)).collect::<Result<_, _>>()?),
        Kind::FloatList => {
            Value::FloatList(list(v)?.iter().map(|x| as_float(x).ok_or_else(err)).collect::<Result<_, _>>()?)
        }
        Kind::Groups => Value::Groups(
            list(v)?
                .iter()
                .map(|g| list(g)?.iter().map(|x| as_uint(x).ok_or_else(err)).collect())
                .collect::<Result<_, _>>()?,
        ),
    })
}

struct Doc(BTreeMap<String, Value>);

impl Doc {
    fn str(&self, key: &str) -> Option<&str> {
        match self.0.get(key) {
            Some(Value::Str(s)) => Some(s),
            _ => None,
        }
    }

    fn uint(&self, key: &str) -> Option<u64> {
        match self.0.get(key) {
            Some(Value::UInt(u)) => Some(*u),
            _ => None,
        }
    }

    fn usize_or(&self, key: &'static str, default: usize) -> Result<usize, ConfigError> {
        match self.uint(key) {
            None => Ok(default),
            Some(u) => usize::try_from(u).map_err(|_| ConfigError::Invalid {
                key,
                reason: format!("{u} is too large"),
            }),
        }
    }

    fn float(&self, key: &str) -> Option<f64> {
        match self.0.get(key) {
            Some(Value::Float(f)) => Some(*f),
            _ => None,
        }
    }

    fn uint_list(&self, key: &str) -> Option<Vec<usize>> {
        match self.0.get(key) {
            Some(Value::UIntList(l)) => Some(l.iter().map(|&u| u as usize).collect()),
            _ => None,
        }
    }

    fn float_list(&self, key: &str) -> Option<&[f64]> {
        match self.0.get(key) {
            Some(Value::FloatList(l)) => Some(l),
            _ => None,
        }
    }

    fn groups(&self, key: &str) -> Option<&[Vec<u64>]> {
        match self.0.get(key) {
            Some(Value::Groups(g)) => Some(g),
            _ => None,
        }
    }
}

fn invalid(key: &'static str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key,
        reason: reason.into(),
    }
}

fn require<T>(v: Option<T>, key: &'static str) -> Result<T, ConfigError> {
    v.ok_or(ConfigError::Missing(key))
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Syntax(e.to_string()))?;
    let mut flat = Vec::new();
    flatten("", &table, &mut flat);
    let mut doc = BTreeMap::new();
    for (key, v) in flat {
        let Some((_, kind)) = KEYS.iter().find(|(k, _)| *k == key) else {
            return Err(ConfigError::UnknownKey {
                suggestion: nearest_key(&key),
                key,
            });
        };
        let value = convert(&key, *kind, &v)?;
        doc.insert(key, value);
    }
    build(&Doc(doc))
}

fn build(doc: &Doc) -> Result<ExperimentConfig, ConfigError> {
    let command = match require(doc.str("command"), "command")? {
        "rate" => Command::Rate,
        "mlp" => Command::Mlp,
        "assumptions" => Command::Assumptions,
        "oracle" => Command::Oracle,
        "bound" => Command::Bound,
        other => {
            return Err(invalid(
                "command",
                format!("`{other}` is not one of rate, mlp, assumptions, oracle, bound"),
            ))
        }
    };
    let family_name = doc.str("family").unwrap_or("sinusoidal_link").to_string();
    let family = ModelFamily::by_name(&family_name).map_err(|e| invalid("family", e.to_string()))?;

    let regularizer = match doc.str("regularizer.kind").unwrap_or("squared_l2") {
        "squared_l2" => Regularizer::SquaredL2,
        "group_squared_l2" => {
            let groups = require(doc.groups("regularizer.groups"), "regularizer.groups")?;
            let zero_based = groups
                .iter()
                .map(|g| {
                    g.iter()
                        .map(|&i| {
                            (i as usize)
                                .checked_sub(1)
                                .ok_or_else(|| invalid("regularizer.groups", "indices are 1-based"))
                        })
                        .collect::<Result<Vec<_>, _>>()
                })
                .collect::<Result<Vec<_>, _>>()?;
            Regularizer::group_squared_l2(zero_based).map_err(|e| invalid("regularizer.groups", e.to_string()))?
        }
        "huberized_l1" => {
            let delta = doc.float("regularizer.delta").unwrap_or(Regularizer::DEFAULT_HUBER_DELTA);
            Regularizer::huberized_l1(delta).map_err(|e| invalid("regularizer.delta", e.to_string()))?
        }
        other => {
            return Err(invalid(
                "regularizer.kind",
                format!("`{other}` is not one of squared_l2, group_squared_l2, huberized_l1"),
            ))
        }
    };
    regularizer
        .validate(family.d())
        .map_err(|e| invalid("regularizer.groups", e.to_string()))?;

    let defaults = SolverConfig::default();
    let solver = SolverConfig {
        grad_tol: doc.float("solver.grad_tol").unwrap_or(defaults.grad_tol),
        max_iters: doc.usize_or("solver.max_iters", defaults.max_iters)?,
        starts: StartSpec::Grid {
            window: doc.float("solver.window").unwrap_or(2.0 * PI),
            per_axis: doc.usize_or("solver.starts_per_axis", 17)?,
        },
        ..defaults
    };
    solver.validate().map_err(|e| invalid("solver", e.to_string()))?;

    let b0 = doc.float("schedule.B0").unwrap_or(1.0);
    let schedule = match doc.str("schedule.kind").unwrap_or("constant_gap") {
        "constant_gap" => {
            let delta = doc.float("schedule.Delta");
            if !(b0 > 0.0) || delta.is_some_and(|d| !(d > 0.0)) {
                return Err(invalid("schedule", "constant_gap needs B0 > 0 and Delta > 0"));
            }
            Schedule::ConstantGap { b0, delta }
        }
        "vanishing_gap" => {
            let delta_max = require(doc.float("schedule.Delta_max"), "schedule.Delta_max")?;
            let tau = require(doc.float("schedule.tau"), "schedule.tau")?;
            check_vanishing_domain(b0, delta_max, tau).map_err(|e| invalid("schedule", e.to_string()))?;
            Schedule::VanishingGap { b0, delta_max, tau }
        }
        "fixed" => {
            let lambda = require(doc.float("schedule.lambda"), "schedule.lambda")?;
            if !(lambda >= 0.0 && lambda.is_finite()) {
                return Err(invalid("schedule.lambda", "must be finite and >= 0"));
            }
            Schedule::Fixed { lambda }
        }
        "sqrt_log_n" => {
            let scale = doc.float("schedule.scale").unwrap_or(1.0);
            if !(scale >= 0.0 && scale.is_finite()) {
                return Err(invalid("schedule.scale", "must be finite and >= 0"));
            }
            Schedule::SqrtLogN { scale }
        }
        other => {
            return Err(invalid(
                "schedule.kind",
                format!("`{other}` is not one of constant_gap, vanishing_gap, fixed, sqrt_log_n"),
            ))
        }
    };

    let n_grid = doc.uint_list("rate.n_grid").unwrap_or_else(|| DEFAULT_N_GRID.to_vec());
    if n_grid.is_empty() || n_grid.windows(2).any(|w| w[0] >= w[1]) || n_grid[0] < 2 {
        return Err(invalid("rate.n_grid", "must be strictly increasing with every n >= 2"));
    }
    let rate_trials = doc.usize_or("rate.trials", 50)?;
    if rate_trials == 0 {
        return Err(invalid("rate.trials", "must be at least 1"));
    }

    let mlp = MlpTrainConfig {
        hidden: doc.usize_or("mlp.hidden", 128)?,
        lr: doc.float("mlp.lr").unwrap_or(5e-5),
        epochs: doc.usize_or("mlp.epochs", 40_000)?,
        ..MlpTrainConfig::default()
    };
    mlp.validate().map_err(|e| invalid("mlp", e.to_string()))?;
    let mlp_scheme = match doc.str("mlp.scheme").unwrap_or("identity") {
        "identity" => Scheme::Identity,
        "uniform" => Scheme::Uniform,
        "permutation" => Scheme::Permutation,
        "flipped" => Scheme::Flipped,
        "interpolation" => {
            let alphas = doc.float_list("mlp.alpha_list").unwrap_or(&[0.0, 0.5, 1.0]).to_vec();
            if alphas.is_empty() || alphas.iter().any(|a| !(0.0..=1.0).contains(a)) {
                return Err(invalid("mlp.alpha_list", "needs at least one alpha, each in [0, 1]"));
            }
            Scheme::Interpolation { alphas }
        }
        other => {
            return Err(invalid(
                "mlp.scheme",
                format!("`{other}` is not one of identity, uniform, permutation, flipped, interpolation"),
            ))
        }
    };
    let mlp_trials = doc.usize_or("mlp.trials", 1)?;
    let mlp_runs = doc.usize_or("mlp.runs", 10)?;
    if mlp_trials == 0 || mlp_runs == 0 {
        return Err(invalid("mlp", "trials and runs must be at least 1"));
    }

    let bound_n_list = doc.uint_list("bound.n_list").unwrap_or_else(|| DEFAULT_N_GRID.to_vec());
    if bound_n_list.iter().any(|&n| n < 2) {
        return Err(invalid("bound.n_list", "every n must be at least 2"));
    }
    let oracle_instances = doc.usize_or("oracle.instances", 20)?;
    if oracle_instances == 0 {
        return Err(invalid("oracle.instances", "must be at least 1"));
    }

    Ok(ExperimentConfig {
        command,
        family_name,
        master_seed: doc.uint("master_seed").unwrap_or(0),
        out_dir: PathBuf::from(doc.str("out_dir").unwrap_or("out")),
        regularizer,
        solver,
        schedule,
        n_grid,
        rate_trials,
        mlp,
        mlp_scheme,
        mlp_trials,
        mlp_runs,
        bound_n_list,
        oracle_instances,
    })
}
