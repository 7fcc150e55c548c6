//! Repeated-trial sweeps over `n`: excess risk of the regularized estimator,
//! basin classification and log-log rate fits.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;
use thiserror::Error;

use crate::analysis::{excess_risk, ols, simplicity_gap, AnalysisError};
use crate::estimator::{lambda_constant_gap, lambda_vanishing_gap, minimize, EstimatorError, SolverConfig};
use crate::io::{fmt_f64, fmt_vec};
use crate::model_zoo::{Domain, MinimizerKind, ModelFamily};
use crate::regularizers::Regularizer;
use crate::seeding::derive_seed;

/// Estimates within this Euclidean distance of a minimizer belong to its basin.
pub const BASIN_RADIUS: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RateError {
    #[error("trial n={n} seed={seed}: {source}")]
    Trial {
        n: usize,
        seed: u64,
        #[source]
        source: EstimatorError,
    },
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error("{0}")]
    Schedule(String),
    #[error("degenerate rate fit: {0}")]
    DegenerateFit(String),
    #[error("{0}")]
    Config(String),
}

/// How `lambda` depends on `n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Schedule {
    /// `8 B0 / Delta * sqrt(ln n / n)`; `delta = None` uses the family's
    /// simplicity gap over the solver window.
    ConstantGap { b0: f64, delta: Option<f64> },
    VanishingGap { b0: f64, delta_max: f64, tau: f64 },
    Fixed { lambda: f64 },
    /// `scale * sqrt(ln n / n)`.
    SqrtLogN { scale: f64 },
}

impl Schedule {
    pub fn lambda(&self, family: &ModelFamily, reg: &Regularizer, window: f64, n: usize) -> Result<f64, RateError> {
        match *self {
            Schedule::ConstantGap { b0, delta } => {
                let delta = match delta {
                    Some(d) => d,
                    None => simplicity_gap(family, reg, window)?,
                };
                if !(delta.is_finite() && delta > 0.0) {
                    return Err(RateError::Schedule(format!(
                        "constant-gap schedule needs a finite positive Delta, got {delta}"
                    )));
                }
                Ok(lambda_constant_gap(b0, delta, n)?)
            }
            Schedule::VanishingGap { b0, delta_max, tau } => Ok(lambda_vanishing_gap(b0, delta_max, tau, n)?),
            Schedule::Fixed { lambda } => {
                if !(lambda >= 0.0 && lambda.is_finite()) {
                    return Err(RateError::Schedule(format!("fixed lambda must be finite and >= 0, got {lambda}")));
                }
                Ok(lambda)
            }
            Schedule::SqrtLogN { scale } => {
                if !(scale >= 0.0 && scale.is_finite()) || n < 2 {
                    return Err(RateError::Schedule(format!(
                        "sqrt_log_n schedule needs scale >= 0 and n >= 2 (got {scale}, {n})"
                    )));
                }
                let nf = n as f64;
                Ok(scale * (nf.ln() / nf).sqrt())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Basin {
    True,
    Spurious,
    Other,
}

impl Basin {
    pub fn as_str(self) -> &'static str {
        match self {
            Basin::True => "true",
            Basin::Spurious => "spurious",
            Basin::Other => "other",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub family: String,
    pub n: usize,
    pub trial: usize,
    pub seed: u64,
    pub lambda: f64,
    pub excess: f64,
    pub objective: f64,
    pub basin: Basin,
    pub beta_hat: Vec<f64>,
}

/// Label an estimate by its nearest source minimizer.
///
/// Isolated sets use the enumerated minimizers in `window`. For an affine
/// set, `true` means within the radius of `beta*` and `spurious` within the
/// radius of some other point of the set.
pub fn classify_basin(family: &ModelFamily, beta_hat: &DVector<f64>, window: f64) -> Basin {
    let set = family.minimizer_set(window);
    let star = family.beta_star();
    if (beta_hat - star).norm() <= BASIN_RADIUS {
        return Basin::True;
    }
    match set.kind {
        MinimizerKind::Singleton => Basin::Other,
        MinimizerKind::IsolatedList => {
            let nearest = set
                .elements
                .iter()
                .map(|e| (beta_hat - e).norm())
                .enumerate()
                .min_by(|a, b| a.1.total_cmp(&b.1));
            match nearest {
                Some((0, d)) if d <= BASIN_RADIUS => Basin::True,
                Some((_, d)) if d <= BASIN_RADIUS => Basin::Spurious,
                _ => Basin::Other,
            }
        }
        MinimizerKind::AffineSubspace => {
            // Residual after projecting onto the (orthonormal) free directions.
            let diff = beta_hat - &set.anchor;
            let along = &set.basis * (set.basis.transpose() * &diff);
            if (diff - along).norm() <= BASIN_RADIUS {
                Basin::Spurious
            } else {
                Basin::Other
            }
        }
    }
}

/// One draw of the full pipeline: sample, set `lambda`, minimize, score.
pub fn run_trial(
    family: &ModelFamily,
    reg: &Regularizer,
    n: usize,
    schedule: &Schedule,
    solver: &SolverConfig,
    window: f64,
    seed: u64,
) -> Result<TrialRecord, RateError> {
    let lambda = schedule.lambda(family, reg, window, n)?;
    let with_ctx = |source: EstimatorError| RateError::Trial { n, seed, source };
    let data = family
        .sample_dataset(Domain::Source, n, seed)
        .map_err(|e| with_ctx(e.into()))?;
    let est = minimize(family, &data, reg, lambda, solver).map_err(with_ctx)?;
    Ok(TrialRecord {
        family: family.name().to_string(),
        n,
        trial: 0,
        seed,
        lambda,
        excess: excess_risk(family, &est.beta_hat)?,
        objective: est.objective,
        basin: classify_basin(family, &est.beta_hat, window),
        beta_hat: est.beta_hat.iter().copied().collect(),
    })
}

#[derive(Debug, Clone)]
pub struct RateConfig {
    pub family: ModelFamily,
    pub reg: Regularizer,
    pub schedule: Schedule,
    pub solver: SolverConfig,
    pub n_grid: Vec<usize>,
    pub trials_per_n: usize,
    pub master_seed: u64,
    /// Window for the simplicity gap and basin enumeration.
    pub window: f64,
}

impl RateConfig {
    pub fn validate(&self) -> Result<(), RateError> {
        if self.n_grid.is_empty() || self.n_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(RateError::Config(format!(
                "n_grid must be nonempty and strictly increasing, got {:?}",
                self.n_grid
            )));
        }
        if self.trials_per_n == 0 {
            return Err(RateError::Config("trials_per_n must be at least 1".into()));
        }
        self.reg.validate(self.family.d()).map_err(AnalysisError::from)?;
        self.solver.validate()?;
        Ok(())
    }
}

/// Every `(n, trial)` pair, in parallel, sorted by `(n, trial)`.
pub fn sweep(cfg: &RateConfig) -> Result<Vec<TrialRecord>, RateError> {
    cfg.validate()?;
    let jobs: Vec<(usize, usize)> = cfg
        .n_grid
        .iter()
        .flat_map(|&n| (0..cfg.trials_per_n).map(move |t| (n, t)))
        .collect();
    let mut records = jobs
        .par_iter()
        .map(|&(n, trial)| {
            let seed = derive_seed(cfg.master_seed, &[n as u64, trial as u64]);
            run_trial(&cfg.family, &cfg.reg, n, &cfg.schedule, &cfg.solver, cfg.window, seed)
                .map(|r| TrialRecord { trial, ..r })
        })
        .collect::<Result<Vec<_>, _>>()?;
    records.sort_by_key(|r| (r.n, r.trial));
    Ok(records)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub n_grid: Vec<usize>,
    pub medians: Vec<f64>,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

fn group_by_n<T>(records: &[TrialRecord], f: impl Fn(&[&TrialRecord]) -> T) -> (Vec<usize>, Vec<T>) {
    let mut ns: Vec<usize> = records.iter().map(|r| r.n).collect();
    ns.sort_unstable();
    ns.dedup();
    let vals = ns
        .iter()
        .map(|&n| f(&records.iter().filter(|r| r.n == n).collect::<Vec<_>>()))
        .collect();
    (ns, vals)
}

/// Per-`n` median excess risk and its OLS fit in log-log space.
pub fn fit_rate(records: &[TrialRecord]) -> Result<RateFit, RateError> {
    let (n_grid, medians) = group_by_n(records, |rs| median(rs.iter().map(|r| r.excess).collect()));
    if n_grid.len() < 3 {
        return Err(RateError::DegenerateFit(format!(
            "need at least 3 distinct n, got {}",
            n_grid.len()
        )));
    }
    if let Some((n, m)) = n_grid.iter().zip(&medians).find(|(_, m)| !(**m > 0.0)) {
        return Err(RateError::DegenerateFit(format!(
            "median excess at n={n} is {m}; exact recovery leaves nothing to fit, use more noise or smaller n"
        )));
    }
    let xs: Vec<f64> = n_grid.iter().map(|&n| (n as f64).ln()).collect();
    let ys: Vec<f64> = medians.iter().map(|m| m.ln()).collect();
    let (slope, intercept, r_squared) = ols(&xs, &ys);
    Ok(RateFit {
        slope,
        intercept,
        r_squared,
        n_grid,
        medians,
    })
}

pub fn basin_true_fraction_by_n(records: &[TrialRecord]) -> Vec<f64> {
    group_by_n(records, |rs| {
        rs.iter().filter(|r| r.basin == Basin::True).count() as f64 / rs.len() as f64
    })
    .1
}

pub fn records_csv(records: &[TrialRecord]) -> String {
    let mut out = String::from("family,n,trial,seed,lambda,excess,objective,basin,beta_hat\n");
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.family,
            r.n,
            r.trial,
            r.seed,
            fmt_f64(r.lambda),
            fmt_f64(r.excess),
            fmt_f64(r.objective),
            r.basin.as_str(),
            fmt_vec(&r.beta_hat)
        ));
    }
    out
}

pub fn summary_json(fit: &RateFit, records: &[TrialRecord]) -> serde_json::Value {
    json!({
        "slope": fit.slope,
        "intercept": fit.intercept,
        "r_squared": fit.r_squared,
        "n_grid": fit.n_grid,
        "medians": fit.medians,
        "basin_true_fraction_by_n": basin_true_fraction_by_n(records),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;
    use std::f64::consts::PI;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_vec(xs.to_vec())
    }

    fn synthetic(ns: &[usize], f: impl Fn(f64) -> f64) -> Vec<TrialRecord> {
        ns.iter()
            .map(|&n| TrialRecord {
                family: "synthetic".into(),
                n,
                trial: 0,
                seed: 0,
                lambda: 0.0,
                excess: f(n as f64),
                objective: 0.0,
                basin: Basin::True,
                beta_hat: vec![],
            })
            .collect()
    }

    #[test]
    fn fit_rate_recovers_exact_power_laws() {
        let fit = fit_rate(&synthetic(&[100, 1000, 10000], |n| 0.01 * 100.0 / n)).unwrap();
        assert_abs_diff_eq!(fit.slope, -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.r_squared, 1.0, epsilon = 1e-12);
        let fit = fit_rate(&synthetic(&[100, 1000, 10000], |n| 3.0 / n.sqrt())).unwrap();
        assert_abs_diff_eq!(fit.slope, -0.5, epsilon = 1e-12);
        assert_eq!(fit.n_grid.len(), fit.medians.len());
    }

    #[test]
    fn fit_rate_rejects_degenerate_input() {
        assert!(matches!(
            fit_rate(&synthetic(&[100, 1000], |n| 1.0 / n)),
            Err(RateError::DegenerateFit(_))
        ));
        assert!(matches!(
            fit_rate(&synthetic(&[100, 1000, 10000], |_| 0.0)),
            Err(RateError::DegenerateFit(_))
        ));
    }

    #[test]
    fn median_uses_middle_pair() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0, 3.0, 2.0]), 2.5);
    }

    #[test]
    fn basin_examples() {
        let fam = ModelFamily::sinusoidal_link_default();
        let w = 2.0 * PI;
        assert_eq!(classify_basin(&fam, &v(&[1.01, PI / 6.0 - 0.02]), w), Basin::True);
        assert_eq!(classify_basin(&fam, &v(&[1.0, 5.0 * PI / 6.0 + 0.01]), w), Basin::Spurious);
        assert_eq!(classify_basin(&fam, &v(&[1.0, 2.0]), w), Basin::Other);
        assert_eq!(classify_basin(&fam, &v(&[1.0, PI / 6.0 - 2.0 * PI]), w), Basin::Spurious);

        let degen = ModelFamily::degenerate_linear_default();
        assert_eq!(classify_basin(&degen, &v(&[1.0, -0.5, 3.0, 0.0]), 1.0), Basin::Spurious);
        assert_eq!(classify_basin(&degen, &v(&[2.0, -0.5, 0.0, 0.0]), 1.0), Basin::Other);
    }

    #[test]
    fn schedules_resolve() {
        let fam = ModelFamily::sinusoidal_link_default();
        let reg = Regularizer::SquaredL2;
        let implicit = Schedule::ConstantGap { b0: 1.0, delta: None }.lambda(&fam, &reg, 2.0 * PI, 4000).unwrap();
        let explicit = lambda_constant_gap(1.0, 2.0 * PI * PI / 3.0, 4000).unwrap();
        assert_abs_diff_eq!(implicit, explicit, epsilon = 1e-14);
        let dense = ModelFamily::dense_linear_default();
        assert!(Schedule::ConstantGap { b0: 1.0, delta: None }.lambda(&dense, &reg, 1.0, 100).is_err());
        assert!(Schedule::VanishingGap { b0: 1.0, delta_max: 0.5, tau: 8.0 }.lambda(&fam, &reg, 1.0, 100).is_err());
        assert!(Schedule::Fixed { lambda: -1.0 }.lambda(&fam, &reg, 1.0, 100).is_err());
        let l = Schedule::SqrtLogN { scale: 1.0 }.lambda(&fam, &reg, 1.0, 1000).unwrap();
        assert_abs_diff_eq!(l, (1000f64.ln() / 1000.0).sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn sinusoidal_trial_picks_true_basin() {
        let fam = ModelFamily::sinusoidal_link_default();
        let schedule = Schedule::ConstantGap { b0: 1.0, delta: Some(2.0 * PI * PI / 3.0) };
        let r = run_trial(&fam, &Regularizer::SquaredL2, 4000, &schedule, &SolverConfig::default(), 4.0 * PI, 7).unwrap();
        assert_eq!(r.basin, Basin::True);
        assert!(r.excess >= 0.0);
    }

    #[test]
    fn degenerate_trial_keeps_null_coordinates() {
        let fam = ModelFamily::degenerate_linear_default();
        let r = run_trial(
            &fam,
            &Regularizer::SquaredL2,
            300,
            &Schedule::Fixed { lambda: 0.1 },
            &SolverConfig::default(),
            1.0,
            11,
        )
        .unwrap();
        assert!(r.beta_hat[2].abs() <= 1e-6 && r.beta_hat[3].abs() <= 1e-6);
    }

    fn small_cfg(seed: u64) -> RateConfig {
        RateConfig {
            family: ModelFamily::dense_linear(v(&[1.0, -0.5]), DMatrix::identity(2, 2), DMatrix::identity(2, 2) * 2.0)
                .unwrap(),
            reg: Regularizer::SquaredL2,
            schedule: Schedule::SqrtLogN { scale: 1.0 },
            solver: SolverConfig::default(),
            n_grid: vec![250, 500],
            trials_per_n: 3,
            master_seed: seed,
            window: 1.0,
        }
    }

    #[test]
    fn sweep_is_ordered_and_reproducible() {
        let a = sweep(&small_cfg(5)).unwrap();
        let keys: Vec<(usize, usize)> = a.iter().map(|r| (r.n, r.trial)).collect();
        assert_eq!(keys, vec![(250, 0), (250, 1), (250, 2), (500, 0), (500, 1), (500, 2)]);
        let b = sweep(&small_cfg(5)).unwrap();
        assert_eq!(records_csv(&a), records_csv(&b));
        assert_ne!(records_csv(&a), records_csv(&sweep(&small_cfg(6)).unwrap()));
        let mut bad = small_cfg(5);
        bad.n_grid = vec![500, 250];
        assert!(sweep(&bad).is_err());
    }

    #[test]
    fn csv_layout() {
        let csv = records_csv(&sweep(&small_cfg(1)).unwrap());
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "family,n,trial,seed,lambda,excess,objective,basin,beta_hat");
        let row: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(row.len(), 9);
        assert_eq!(row[0], "dense_linear");
        assert_eq!(row[8].split(';').count(), 2);
        assert!(csv.ends_with('\n'));
    }
}
