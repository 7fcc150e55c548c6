//! Command dispatch: each command writes its artifacts under `out_dir`
//! atomically and returns the paths it wrote.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use crate::analysis::{
    assumption_report, bound_constant_gap, bound_vanishing_gap, simplicity_gap, AnalysisError, AssumptionConstants,
    BoundTerms, FisherReport, DEFAULT_RANK_TOL,
};
use crate::config::{Command, ExperimentConfig};
use crate::estimator::{minimize, ridge_closed_form, EstimatorError, SolverConfig};
use crate::io::{fmt_f64, write_atomic};
use crate::mlp_lab::{self, MlpError};
use crate::model_zoo::{Domain, ModelFamily};
use crate::rate_lab::{self, RateConfig, RateError, Schedule};
use crate::regularizers::{Regularizer, SimplicityMeasure};
use crate::seeding::{derive_seed, rng_from};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Rate(#[from] RateError),
    #[error(transparent)]
    Mlp(#[from] MlpError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error("writing {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl RunError {
    pub fn kind(&self) -> &'static str {
        match self {
            RunError::Rate(_) => "rate",
            RunError::Mlp(_) => "mlp",
            RunError::Analysis(_) => "analysis",
            RunError::Estimator(_) => "estimator",
            RunError::Io { .. } => "io",
        }
    }
}

struct Emitter {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl Emitter {
    fn text(&mut self, name: &str, contents: &str) -> Result<(), RunError> {
        let path = self.dir.join(name);
        write_atomic(&path, contents).map_err(|source| RunError::Io {
            path: path.clone(),
            source,
        })?;
        self.written.push(path);
        Ok(())
    }

    /// Keys come out sorted: `serde_json::Map` is ordered.
    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), RunError> {
        let v = serde_json::to_value(value).expect("artifact types serialize");
        self.text(name, &serde_json::to_string_pretty(&v).expect("values serialize"))
    }
}

pub fn run(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>, RunError> {
    let mut out = Emitter {
        dir: cfg.out_dir.clone(),
        written: Vec::new(),
    };
    match cfg.command {
        Command::Rate => run_rate(cfg, &mut out)?,
        Command::Mlp => run_mlp(cfg, &mut out)?,
        Command::Assumptions => run_assumptions(cfg, &mut out)?,
        Command::Oracle => run_oracle(cfg, &mut out)?,
        Command::Bound => run_bound(cfg, &mut out)?,
    }
    Ok(out.written)
}

/// Machine-readable failure report.
pub fn error_json(command: Option<Command>, kind: &str, message: &str) -> Value {
    json!({
        "status": "error",
        "command": command.map(Command::name),
        "kind": kind,
        "message": message,
    })
}

pub fn write_error(out_dir: &Path, report: &Value) -> std::io::Result<()> {
    write_atomic(&out_dir.join("error.json"), &serde_json::to_string_pretty(report).expect("values serialize"))
}

fn run_rate(cfg: &ExperimentConfig, out: &mut Emitter) -> Result<(), RunError> {
    let rc = RateConfig {
        family: cfg.family(),
        reg: cfg.regularizer.clone(),
        schedule: cfg.schedule,
        solver: cfg.solver.clone(),
        n_grid: cfg.n_grid.clone(),
        trials_per_n: cfg.rate_trials,
        master_seed: cfg.master_seed,
        window: 2.0 * cfg.window(),
    };
    let records = rate_lab::sweep(&rc)?;
    out.text("records.csv", &rate_lab::records_csv(&records))?;
    let fit = rate_lab::fit_rate(&records)?;
    out.json("summary.json", &rate_lab::summary_json(&fit, &records))
}

fn run_mlp(cfg: &ExperimentConfig, out: &mut Emitter) -> Result<(), RunError> {
    let records = mlp_lab::run_scheme(&cfg.mlp_scheme, cfg.mlp_trials, cfg.mlp_runs, &cfg.mlp, cfg.master_seed)?;
    out.text("records.csv", &mlp_lab::records_csv(&records))?;
    out.json("summary.json", &mlp_lab::summary_json(&records))
}

fn constants_for(cfg: &ExperimentConfig) -> AssumptionConstants {
    let mut c = AssumptionConstants {
        l: cfg.regularizer.smoothness(),
        ..AssumptionConstants::default()
    };
    match cfg.schedule {
        Schedule::ConstantGap { b0, delta } => {
            c.b0 = b0;
            c.delta = delta;
        }
        Schedule::VanishingGap { b0, delta_max, tau } => {
            c.b0 = b0;
            c.delta_max = Some(delta_max);
            c.tau = Some(tau);
        }
        Schedule::Fixed { .. } | Schedule::SqrtLogN { .. } => {}
    }
    c
}

fn run_assumptions(cfg: &ExperimentConfig, out: &mut Emitter) -> Result<(), RunError> {
    let family = cfg.family();
    let report = assumption_report(&family, &cfg.regularizer, &constants_for(cfg), cfg.window(), cfg.master_seed)?;
    let mut v = serde_json::to_value(&report).expect("report serializes");
    v["family"] = json!(family.name());
    v["regularizer"] = json!(cfg.regularizer.name());
    out.json("assumptions.json", &v)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundRow {
    pub n: usize,
    #[serde(flatten)]
    pub terms: BoundTerms,
}

/// Bound terms over `n_list` for the configured schedule's regime.
pub fn bound_rows(cfg: &ExperimentConfig) -> Result<(FisherReport, Vec<BoundRow>), RunError> {
    let family = cfg.family();
    let fisher = FisherReport::at_star(&family, DEFAULT_RANK_TOL)?;
    let grad = cfg
        .regularizer
        .gradient(family.beta_star())
        .map_err(AnalysisError::from)?;
    let rows = cfg
        .bound_n_list
        .iter()
        .map(|&n| {
            let terms = match cfg.schedule {
                Schedule::VanishingGap { b0, delta_max, tau } => {
                    bound_vanishing_gap(&fisher, &grad, b0, delta_max, tau, n)?
                }
                Schedule::ConstantGap { b0, delta } => {
                    let delta = match delta {
                        Some(d) => d,
                        None => simplicity_gap(&family, &cfg.regularizer, cfg.window())?,
                    };
                    bound_constant_gap(&fisher, &grad, b0, delta, n)?
                }
                Schedule::Fixed { .. } | Schedule::SqrtLogN { .. } => {
                    let delta = simplicity_gap(&family, &cfg.regularizer, cfg.window())?;
                    bound_constant_gap(&fisher, &grad, 1.0, delta, n)?
                }
            };
            Ok(BoundRow { n, terms })
        })
        .collect::<Result<Vec<_>, AnalysisError>>()?;
    Ok((fisher, rows))
}

fn run_bound(cfg: &ExperimentConfig, out: &mut Emitter) -> Result<(), RunError> {
    let (fisher, rows) = bound_rows(cfg)?;
    out.json(
        "bound.json",
        &json!({
            "family": cfg.family_name,
            "trace_term": fisher.trace_term(),
            "rank_S": fisher.rank_s,
            "d_S": fisher.d_s,
            "rows": rows,
        }),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleRow {
    pub instance: usize,
    pub family: String,
    pub n: usize,
    pub d: usize,
    pub lambda: f64,
    /// `||beta_iterative - beta_closed_form||_inf`.
    pub max_abs_diff: f64,
}

/// Random symmetric positive-definite `k x k` matrix, well conditioned.
fn random_spd(k: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let a = DMatrix::from_fn(k, k, |_, _| rng.sample::<f64, _>(StandardNormal));
    (&a * a.transpose()) / k as f64 + DMatrix::identity(k, k) * 0.2
}

/// Random linear instance `i`: even instances dense, odd degenerate.
pub fn oracle_instance(master_seed: u64, i: usize) -> Result<(ModelFamily, usize, f64), EstimatorError> {
    let mut rng = rng_from(derive_seed(master_seed, &[i as u64]));
    let d = rng.gen_range(2..=8usize);
    let n = rng.gen_range(20..=500usize);
    let lambda = [0.01, 0.1, 1.0][i % 3];
    let mut beta = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let target = random_spd(d, &mut rng);
    let family = if i.is_multiple_of(2) {
        ModelFamily::dense_linear(beta, random_spd(d, &mut rng), target)?
    } else {
        let k = rng.gen_range(1..=d / 2);
        let mut null: Vec<usize> = sample(&mut rng, d, k).into_vec();
        null.sort_unstable();
        let active: Vec<usize> = (0..d).filter(|j| !null.contains(j)).collect();
        let block = random_spd(active.len(), &mut rng);
        let mut cov = DMatrix::zeros(d, d);
        for (a, &ra) in active.iter().enumerate() {
            for (b, &rb) in active.iter().enumerate() {
                cov[(ra, rb)] = block[(a, b)];
            }
        }
        for &j in &null {
            beta[j] = 0.0;
        }
        ModelFamily::degenerate_linear(beta, null, cov, target)?
    };
    Ok((family, n, lambda))
}

/// Iterative solver against the ridge closed form on random linear instances.
pub fn oracle_comparison(master_seed: u64, instances: usize) -> Result<Vec<OracleRow>, EstimatorError> {
    let solver = SolverConfig::default();
    (0..instances)
        .map(|i| {
            let (family, n, lambda) = oracle_instance(master_seed, i)?;
            let data = family.sample_dataset(Domain::Source, n, derive_seed(master_seed, &[i as u64, 1]))?;
            let iterative = minimize(&family, &data, &Regularizer::SquaredL2, lambda, &solver)?;
            let closed = ridge_closed_form(&data, lambda)?;
            Ok(OracleRow {
                instance: i,
                family: family.name().to_string(),
                n,
                d: family.d(),
                lambda,
                max_abs_diff: (&iterative.beta_hat - closed).amax(),
            })
        })
        .collect()
}

fn run_oracle(cfg: &ExperimentConfig, out: &mut Emitter) -> Result<(), RunError> {
    let rows = oracle_comparison(cfg.master_seed, cfg.oracle_instances)?;
    let mut csv = String::from("instance,family,n,d,lambda,max_abs_diff\n");
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.instance,
            r.family,
            r.n,
            r.d,
            fmt_f64(r.lambda),
            fmt_f64(r.max_abs_diff)
        ));
    }
    out.text("oracle.csv", &csv)?;
    let max = rows.iter().map(|r| r.max_abs_diff).fold(0.0, f64::max);
    out.json("oracle.json", &json!({ "instances": rows.len(), "max_abs_diff": max }))
}
