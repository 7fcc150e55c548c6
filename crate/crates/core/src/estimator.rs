//! Regularized maximum-likelihood estimation.
//!
//! The estimator is the global minimizer of `l_n(beta) + lambda * R(beta)`.
//! It is approximated by multi-start gradient descent with Armijo
//! backtracking. The objective seen by the solver is compiled once from
//! Gaussian sufficient statistics (a Gram matrix for the linear families,
//! per-support-point moments for finite-support families), so each iteration
//! costs O(d^2) instead of O(n).
//!
//! Near convergence the per-step decrease is far below one ulp of the
//! objective, so the line search compares *changes* computed from
//! difference formulas rather than differences of two rounded values.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::model_zoo::{Dataset, ModelFamily, ZooError, HALF_LN_2PI};
use crate::regularizers::{RegError, Regularizer, SimplicityMeasure};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimatorError {
    #[error(transparent)]
    Zoo(#[from] ZooError),
    #[error(transparent)]
    Reg(#[from] RegError),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("lambda must be nonnegative and finite, got {0}")]
    NegativeLambda(f64),
    #[error("schedule constants out of domain: {0}")]
    ScheduleDomain(String),
    #[error("invalid solver config: {0}")]
    Config(String),
    #[error("objective is not finite at start {index}")]
    NonFiniteStart { index: usize },
    #[error(
        "no start converged within {max_iters} iterations (best objective {best_objective:.6e}, \
         gradient norm {best_grad_norm:.3e} at start {best_start})"
    )]
    NonConvergence {
        max_iters: usize,
        best_objective: f64,
        best_grad_norm: f64,
        best_start: usize,
        best_beta: Vec<f64>,
    },
    #[error("normal equations are singular; use lambda > 0")]
    Singular,
}

/// Where local runs start.
#[derive(Debug, Clone, PartialEq)]
pub enum StartSpec {
    Explicit(Vec<DVector<f64>>),
    /// Family-aware grid from [`default_starts`].
    Grid { window: f64, per_axis: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub grad_tol: f64,
    pub max_iters: usize,
    pub armijo_c: f64,
    pub backtrack_factor: f64,
    pub init_step: f64,
    pub starts: StartSpec,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            grad_tol: 1e-9,
            max_iters: 100_000,
            armijo_c: 1e-4,
            backtrack_factor: 0.5,
            init_step: 1.0,
            starts: StartSpec::Grid {
                window: 2.0 * std::f64::consts::PI,
                per_axis: 17,
            },
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), EstimatorError> {
        let bad = |m: &str| Err(EstimatorError::Config(m.into()));
        if !(self.grad_tol > 0.0) {
            return bad("grad_tol must be positive");
        }
        if !(self.backtrack_factor > 0.0 && self.backtrack_factor < 1.0) {
            return bad("backtrack_factor must lie in (0, 1)");
        }
        if !(self.armijo_c > 0.0 && self.armijo_c < 1.0) {
            return bad("armijo_c must lie in (0, 1)");
        }
        if !(self.init_step > 0.0) {
            return bad("init_step must be positive");
        }
        if self.max_iters == 0 {
            return bad("max_iters must be at least 1");
        }
        match &self.starts {
            StartSpec::Explicit(s) if s.is_empty() => bad("at least one start is required"),
            StartSpec::Grid { window, per_axis } if !(*window > 0.0) || *per_axis < 2 => {
                bad("grid starts need window > 0 and at least 2 points per axis")
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateResult {
    pub beta_hat: DVector<f64>,
    pub objective: f64,
    pub lambda: f64,
    pub n: usize,
    pub grad_norm: f64,
    pub start_index: usize,
    pub iters: usize,
}

/// `(1/n) sum_i l(x_i, y_i, beta)`, summed sample by sample.
pub fn empirical_loss(family: &ModelFamily, data: &Dataset, beta: &DVector<f64>) -> Result<f64, EstimatorError> {
    if data.is_empty() {
        return Err(EstimatorError::EmptyDataset);
    }
    let mut total = 0.0;
    for s in &data.samples {
        total += family.loss(s, beta)?;
    }
    Ok(total / data.len() as f64)
}

/// `(1/n) sum_i grad l(x_i, y_i, beta)`.
pub fn empirical_grad(
    family: &ModelFamily,
    data: &Dataset,
    beta: &DVector<f64>,
) -> Result<DVector<f64>, EstimatorError> {
    if data.is_empty() {
        return Err(EstimatorError::EmptyDataset);
    }
    let mut total = DVector::zeros(family.d());
    for s in &data.samples {
        total += family.loss_grad(s, beta)?;
    }
    Ok(total / data.len() as f64)
}

/// Value and gradient of `l_n(beta) + lambda R(beta)` by direct summation.
pub fn regularized_objective(
    family: &ModelFamily,
    data: &Dataset,
    reg: &Regularizer,
    lambda: f64,
    beta: &DVector<f64>,
) -> Result<(f64, DVector<f64>), EstimatorError> {
    check_lambda(lambda)?;
    let value = empirical_loss(family, data, beta)? + lambda * reg.value(beta)?;
    let grad = empirical_grad(family, data, beta)? + reg.gradient(beta)? * lambda;
    Ok((value, grad))
}

fn check_lambda(lambda: f64) -> Result<(), EstimatorError> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(EstimatorError::NegativeLambda(lambda));
    }
    Ok(())
}

/// `lambda = (8 B0 / Delta) sqrt(ln n / n)`.
pub fn lambda_constant_gap(b0: f64, delta: f64, n: usize) -> Result<f64, EstimatorError> {
    if !(b0 > 0.0 && delta > 0.0) || !b0.is_finite() || !delta.is_finite() {
        return Err(EstimatorError::ScheduleDomain(format!(
            "constant-gap schedule needs finite B0 > 0 and Delta > 0 (got B0 = {b0}, Delta = {delta})"
        )));
    }
    if n < 2 {
        return Err(EstimatorError::ScheduleDomain(format!("need n >= 2, got {n}")));
    }
    let nf = n as f64;
    Ok(8.0 * b0 / delta * (nf.ln() / nf).sqrt())
}

/// `lambda = (8 B0 / Delta_max) sqrt(ln n / n^(1 - 2 / (3 tau)))`.
pub fn lambda_vanishing_gap(b0: f64, delta_max: f64, tau: f64, n: usize) -> Result<f64, EstimatorError> {
    check_vanishing_domain(b0, delta_max, tau)?;
    if n < 2 {
        return Err(EstimatorError::ScheduleDomain(format!("need n >= 2, got {n}")));
    }
    let nf = n as f64;
    let exponent = 1.0 - 2.0 / (3.0 * tau);
    Ok(8.0 * b0 / delta_max * (nf.ln() / nf.powf(exponent)).sqrt())
}

pub(crate) fn check_vanishing_domain(b0: f64, delta_max: f64, tau: f64) -> Result<(), EstimatorError> {
    if !(b0 > 0.0) {
        return Err(EstimatorError::ScheduleDomain(format!("B0 must be positive, got {b0}")));
    }
    if !(delta_max > 0.0 && delta_max < 1.0) {
        return Err(EstimatorError::ScheduleDomain(format!(
            "Delta_max must lie in (0, 1), got {delta_max}"
        )));
    }
    if !(tau >= 9.0) {
        return Err(EstimatorError::ScheduleDomain(format!("tau must be at least 9, got {tau}")));
    }
    Ok(())
}

/// Exact minimizer of `l_n + lambda ||beta||^2` for a linear-Gaussian dataset:
/// solves `(X^T X / n + 2 lambda I) beta = X^T y / n`.
pub fn ridge_closed_form(data: &Dataset, lambda: f64) -> Result<DVector<f64>, EstimatorError> {
    check_lambda(lambda)?;
    if data.is_empty() {
        return Err(EstimatorError::EmptyDataset);
    }
    let (gram, xty, _) = linear_moments(data);
    let d = gram.nrows();
    let system = gram + DMatrix::identity(d, d) * (2.0 * lambda);
    let chol = system.cholesky().ok_or(EstimatorError::Singular)?;
    Ok(chol.solve(&xty))
}

/// `(X^T X / n, X^T y / n, y^T y / n)`.
fn linear_moments(data: &Dataset) -> (DMatrix<f64>, DVector<f64>, f64) {
    let p = data.covariate_dim();
    let n = data.len() as f64;
    let mut gram = DMatrix::zeros(p, p);
    let mut xty = DVector::zeros(p);
    let mut yty = 0.0;
    for s in &data.samples {
        gram.ger(1.0, &s.x, &s.x, 1.0);
        xty.axpy(s.y, &s.x, 1.0);
        yty += s.y * s.y;
    }
    (gram / n, xty / n, yty / n)
}

/// Minimum-norm least-squares fit `G^+ X^T y / n`. Null directions of the
/// Gram matrix get exactly zero.
fn least_squares_point(data: &Dataset) -> DVector<f64> {
    let (gram, xty, _) = linear_moments(data);
    let p = gram.nrows();
    // Restrict to coordinates that carry signal so exact-zero columns stay 0.
    let active: Vec<usize> = (0..p).filter(|&i| gram[(i, i)] > 0.0).collect();
    let sub = DMatrix::from_fn(active.len(), active.len(), |a, b| gram[(active[a], active[b])]);
    let rhs = DVector::from_fn(active.len(), |a, _| xty[active[a]]);
    let sol = sub
        .clone()
        .cholesky()
        .map(|c| c.solve(&rhs))
        .or_else(|| sub.svd(true, true).solve(&rhs, 1e-12).ok())
        .unwrap_or_else(|| DVector::zeros(active.len()));
    let mut out = DVector::zeros(p);
    for (a, &i) in active.iter().enumerate() {
        out[i] = sol[a];
    }
    out
}

/// Family-aware deterministic start points; never uses `beta*`.
///
/// Sinusoidal family: a `count_per_axis` grid on `b2 in [-window, window]`
/// crossed with the least-squares `b1` from the `e1` samples. Linear
/// families: the origin and the least-squares point.
pub fn default_starts(
    family: &ModelFamily,
    data: &Dataset,
    window: f64,
    count_per_axis: usize,
) -> Result<Vec<DVector<f64>>, EstimatorError> {
    if data.is_empty() {
        return Err(EstimatorError::EmptyDataset);
    }
    if !(window > 0.0) || count_per_axis < 2 {
        return Err(EstimatorError::Config(
            "default starts need window > 0 and count_per_axis >= 2".into(),
        ));
    }
    if family.is_linear() {
        return Ok(vec![DVector::zeros(family.d()), least_squares_point(data)]);
    }
    let (mut sum, mut count) = (0.0, 0usize);
    for s in &data.samples {
        if s.x[0] != 0.0 {
            sum += s.y / s.x[0];
            count += 1;
        }
    }
    let b1 = if count > 0 { sum / count as f64 } else { 0.0 };
    let step = 2.0 * window / (count_per_axis - 1) as f64;
    Ok((0..count_per_axis)
        .map(|i| DVector::from_vec(vec![b1, -window + step * i as f64]))
        .collect())
}

/// Objective interface used by the descent loop.
pub trait Objective {
    fn dim(&self) -> usize;
    fn value(&self, beta: &DVector<f64>) -> f64;
    fn gradient(&self, beta: &DVector<f64>) -> DVector<f64>;
    /// `f(to) - f(from)`.
    fn change(&self, from: &DVector<f64>, to: &DVector<f64>) -> f64 {
        self.value(to) - self.value(from)
    }
}

#[derive(Debug, Clone)]
enum SufficientStats {
    /// `l_n = 0.5 beta^T G beta - beta^T b + 0.5 yty + const`.
    Linear {
        gram: DMatrix<f64>,
        xty: DVector<f64>,
        yty: f64,
    },
    /// One entry per distinct covariate value.
    Grouped(Vec<SupportGroup>),
}

#[derive(Debug, Clone)]
struct SupportGroup {
    x: DVector<f64>,
    weight: f64,
    mean_y: f64,
    /// Within-group mean of `(y - mean_y)^2`.
    spread: f64,
}

/// `l_n(beta) + lambda R(beta)` compiled from sufficient statistics.
#[derive(Debug, Clone)]
pub struct CompiledObjective<'a> {
    family: &'a ModelFamily,
    reg: &'a Regularizer,
    lambda: f64,
    stats: SufficientStats,
}

impl<'a> CompiledObjective<'a> {
    pub fn new(
        family: &'a ModelFamily,
        data: &Dataset,
        reg: &'a Regularizer,
        lambda: f64,
    ) -> Result<Self, EstimatorError> {
        check_lambda(lambda)?;
        if data.is_empty() {
            return Err(EstimatorError::EmptyDataset);
        }
        reg.validate(family.d())?;
        if data.covariate_dim() != family.covariate_dim() {
            return Err(ZooError::CovariateDim {
                expected: family.covariate_dim(),
                actual: data.covariate_dim(),
            }
            .into());
        }
        let stats = if family.is_linear() {
            let (gram, xty, yty) = linear_moments(data);
            SufficientStats::Linear { gram, xty, yty }
        } else {
            SufficientStats::Grouped(group_moments(data))
        };
        Ok(Self {
            family,
            reg,
            lambda,
            stats,
        })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    fn data_value(&self, beta: &DVector<f64>) -> f64 {
        match &self.stats {
            SufficientStats::Linear { gram, xty, yty } => {
                0.5 * (gram * beta).dot(beta) - beta.dot(xty) + 0.5 * yty + HALF_LN_2PI
            }
            SufficientStats::Grouped(groups) => {
                groups
                    .iter()
                    .map(|g| {
                        let r = self.family.mean(&g.x, beta) - g.mean_y;
                        0.5 * g.weight * (r * r + g.spread)
                    })
                    .sum::<f64>()
                    + HALF_LN_2PI
            }
        }
    }

    fn data_gradient(&self, beta: &DVector<f64>) -> DVector<f64> {
        match &self.stats {
            SufficientStats::Linear { gram, xty, .. } => gram * beta - xty,
            SufficientStats::Grouped(groups) => {
                let mut g = DVector::zeros(self.family.d());
                for grp in groups {
                    let r = self.family.mean(&grp.x, beta) - grp.mean_y;
                    g.axpy(grp.weight * r, &self.family.mean_grad(&grp.x, beta), 1.0);
                }
                g
            }
        }
    }

    fn data_change(&self, from: &DVector<f64>, to: &DVector<f64>) -> f64 {
        match &self.stats {
            SufficientStats::Linear { gram, xty, .. } => {
                let step = to - from;
                let grad = gram * from - xty;
                step.dot(&grad) + 0.5 * (gram * &step).dot(&step)
            }
            SufficientStats::Grouped(groups) => groups
                .iter()
                .map(|g| {
                    let dm = self.family.mean_change(&g.x, from, to);
                    let rf = self.family.mean(&g.x, from) - g.mean_y;
                    // 0.5 w [(rf + dm)^2 - rf^2]
                    0.5 * g.weight * dm * (2.0 * rf + dm)
                })
                .sum(),
        }
    }
}

fn group_moments(data: &Dataset) -> Vec<SupportGroup> {
    let n = data.len() as f64;
    let mut map: BTreeMap<Vec<u64>, (DVector<f64>, Vec<f64>)> = BTreeMap::new();
    for s in &data.samples {
        let key: Vec<u64> = s.x.iter().map(|v| (v + 0.0).to_bits()).collect();
        map.entry(key).or_insert_with(|| (s.x.clone(), Vec::new())).1.push(s.y);
    }
    map.into_values()
        .map(|(x, ys)| {
            let k = ys.len() as f64;
            let mean_y = ys.iter().sum::<f64>() / k;
            let spread = ys.iter().map(|y| (y - mean_y).powi(2)).sum::<f64>() / k;
            SupportGroup {
                x,
                weight: k / n,
                mean_y,
                spread,
            }
        })
        .collect()
}

impl Objective for CompiledObjective<'_> {
    fn dim(&self) -> usize {
        self.family.d()
    }

    fn value(&self, beta: &DVector<f64>) -> f64 {
        let r = self.reg.value(beta).expect("validated at construction");
        self.data_value(beta) + self.lambda * r
    }

    fn gradient(&self, beta: &DVector<f64>) -> DVector<f64> {
        let r = self.reg.gradient(beta).expect("validated at construction");
        self.data_gradient(beta) + r * self.lambda
    }

    fn change(&self, from: &DVector<f64>, to: &DVector<f64>) -> f64 {
        let r = self.reg.change(from, to).expect("validated at construction");
        self.data_change(from, to) + self.lambda * r
    }
}

/// Outcome of one local descent run.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalRun {
    pub beta: DVector<f64>,
    pub objective: f64,
    pub grad_norm: f64,
    pub iters: usize,
    pub converged: bool,
    /// Objective after every accepted step, tracked as the start value plus
    /// accumulated accepted changes (each strictly negative).
    pub trace: Vec<f64>,
}

/// Gradient descent with Armijo backtracking from a single start.
pub fn descend<O: Objective + ?Sized>(obj: &O, start: &DVector<f64>, cfg: &SolverConfig) -> LocalRun {
    let mut beta = start.clone();
    let mut tracked = obj.value(&beta);
    let mut trace = vec![tracked];
    let mut grad = obj.gradient(&beta);
    let mut gnorm = grad.norm();
    let mut iters = 0;
    let mut converged = gnorm <= cfg.grad_tol;
    while !converged && iters < cfg.max_iters {
        let g2 = gnorm * gnorm;
        let mut step = cfg.init_step;
        let mut accepted = None;
        while step > 1e-30 {
            let cand = &beta - &grad * step;
            let delta = obj.change(&beta, &cand);
            if delta <= -cfg.armijo_c * step * g2 {
                accepted = Some((cand, delta));
                break;
            }
            step *= cfg.backtrack_factor;
        }
        let Some((cand, delta)) = accepted else {
            break;
        };
        beta = cand;
        tracked += delta;
        trace.push(tracked);
        grad = obj.gradient(&beta);
        gnorm = grad.norm();
        iters += 1;
        converged = gnorm <= cfg.grad_tol;
    }
    LocalRun {
        objective: obj.value(&beta),
        beta,
        grad_norm: gnorm,
        iters,
        converged,
        trace,
    }
}

/// Relative spread within which two start objectives count as tied.
const TIE_TOL: f64 = 1e-12;

/// Compute `beta_hat_lambda` by multi-start descent.
///
/// The winner is the converged run with the lowest objective; runs within
/// `1e-12` of each other tie, and ties go to the lower start index.
pub fn minimize(
    family: &ModelFamily,
    data: &Dataset,
    reg: &Regularizer,
    lambda: f64,
    cfg: &SolverConfig,
) -> Result<EstimateResult, EstimatorError> {
    cfg.validate()?;
    let obj = CompiledObjective::new(family, data, reg, lambda)?;
    let starts = match &cfg.starts {
        StartSpec::Explicit(s) => s.clone(),
        StartSpec::Grid { window, per_axis } => default_starts(family, data, *window, *per_axis)?,
    };
    for s in &starts {
        family.check_beta(s)?;
    }
    let mut best: Option<(usize, LocalRun)> = None;
    let mut best_any: Option<(usize, LocalRun)> = None;
    for (i, s) in starts.iter().enumerate() {
        if !obj.value(s).is_finite() {
            return Err(EstimatorError::NonFiniteStart { index: i });
        }
        let run = descend(&obj, s, cfg);
        let better = |cur: &Option<(usize, LocalRun)>| match cur {
            None => true,
            Some((_, b)) => run.objective < b.objective - TIE_TOL * (1.0 + b.objective.abs()),
        };
        if better(&best_any) {
            best_any = Some((i, run.clone()));
        }
        if run.converged && better(&best) {
            best = Some((i, run));
        }
    }
    match best {
        Some((start_index, run)) => Ok(EstimateResult {
            beta_hat: run.beta,
            objective: run.objective,
            lambda,
            n: data.len(),
            grad_norm: run.grad_norm,
            start_index,
            iters: run.iters,
        }),
        None => {
            let (i, run) = best_any.expect("at least one start");
            Err(EstimatorError::NonConvergence {
                max_iters: cfg.max_iters,
                best_objective: run.objective,
                best_grad_norm: run.grad_norm,
                best_start: i,
                best_beta: run.beta.iter().copied().collect(),
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model_zoo::{Domain, Sample};
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_vec(xs.to_vec())
    }

    fn one_dim_data() -> Dataset {
        Dataset::new(
            vec![Sample::new(v(&[1.0]), 1.0), Sample::new(v(&[1.0]), 1.0)],
            Domain::Source,
            0,
        )
        .unwrap()
    }

    #[test]
    fn empirical_loss_examples() {
        let fam = ModelFamily::dense_linear_default();
        let s = Sample::new(v(&[0.3, -1.2]), 0.7);
        let beta = v(&[0.4, 0.1]);
        let one = Dataset::new(vec![s.clone()], Domain::Source, 0).unwrap();
        assert_eq!(empirical_loss(&fam, &one, &beta).unwrap(), fam.loss(&s, &beta).unwrap());
        let data = fam.sample_dataset(Domain::Source, 30, 2).unwrap();
        let mut doubled = data.clone();
        doubled.samples.extend(data.samples.iter().cloned());
        assert_abs_diff_eq!(
            empirical_loss(&fam, &doubled, &beta).unwrap(),
            empirical_loss(&fam, &data, &beta).unwrap(),
            epsilon = 1e-14
        );
        let empty = Dataset {
            samples: vec![],
            domain: Domain::Source,
            seed: 0,
        };
        assert_eq!(empirical_loss(&fam, &empty, &beta), Err(EstimatorError::EmptyDataset));
    }

    #[test]
    fn sinusoidal_reflection_tie() {
        let fam = ModelFamily::sinusoidal_link_default();
        let data = fam.sample_dataset(Domain::Source, 200, 8).unwrap();
        for (b1, b2) in [(0.3, 0.2), (-1.0, 2.5), (2.0, -4.0)] {
            let a = empirical_loss(&fam, &data, &v(&[b1, b2])).unwrap();
            let b = empirical_loss(&fam, &data, &v(&[b1, PI - b2])).unwrap();
            assert!((a - b).abs() <= 1e-12 * a.abs());
        }
    }

    #[test]
    fn objective_examples() {
        let fam = ModelFamily::dense_linear_default();
        let data = fam.sample_dataset(Domain::Source, 40, 4).unwrap();
        let beta = v(&[0.2, 0.9]);
        let (val, grad) = regularized_objective(&fam, &data, &Regularizer::SquaredL2, 0.0, &beta).unwrap();
        assert_eq!(val, empirical_loss(&fam, &data, &beta).unwrap());
        assert_eq!(grad, empirical_grad(&fam, &data, &beta).unwrap());
        let zero = DVector::zeros(2);
        let (val, _) = regularized_objective(&fam, &data, &Regularizer::SquaredL2, 0.7, &zero).unwrap();
        assert_eq!(val, empirical_loss(&fam, &data, &zero).unwrap());
        assert_eq!(
            regularized_objective(&fam, &data, &Regularizer::SquaredL2, -1.0, &zero).unwrap_err(),
            EstimatorError::NegativeLambda(-1.0)
        );
    }

    #[test]
    fn compiled_objective_matches_direct_summation() {
        let reg = Regularizer::SquaredL2;
        for fam in [
            ModelFamily::dense_linear_default(),
            ModelFamily::degenerate_linear_default(),
            ModelFamily::sinusoidal_link_default(),
        ] {
            let data = fam.sample_dataset(Domain::Source, 257, 6).unwrap();
            let obj = CompiledObjective::new(&fam, &data, &reg, 0.3).unwrap();
            let a = DVector::from_fn(fam.d(), |i, _| 0.3 * i as f64 - 0.4);
            let b = DVector::from_fn(fam.d(), |i, _| 0.1 - 0.2 * i as f64);
            let (val, grad) = regularized_objective(&fam, &data, &reg, 0.3, &a).unwrap();
            assert_abs_diff_eq!(obj.value(&a), val, epsilon = 1e-12);
            assert!((obj.gradient(&a) - grad).amax() <= 1e-12);
            assert_abs_diff_eq!(obj.change(&a, &b), obj.value(&b) - obj.value(&a), epsilon = 1e-12);
        }
    }

    #[test]
    fn constant_gap_schedule_examples() {
        // 4 sqrt(ln 100 / 100) and 8 sqrt(ln 1e4 / 1e4), evaluated by hand.
        assert_abs_diff_eq!(lambda_constant_gap(1.0, 2.0, 100).unwrap(), 0.858_386_4, epsilon = 1e-7);
        assert_abs_diff_eq!(lambda_constant_gap(1.0, 1.0, 10_000).unwrap(), 0.242_788_3, epsilon = 1e-7);
        let a = lambda_constant_gap(1.3, 0.7, 777).unwrap();
        let b = lambda_constant_gap(1.3, 1.4, 777).unwrap();
        assert_eq!(a, 2.0 * b);
        assert!(lambda_constant_gap(1.0, 1.0, 1).is_err());
        assert!(lambda_constant_gap(1.0, f64::INFINITY, 10).is_err());
    }

    #[test]
    fn vanishing_gap_schedule_examples() {
        // Exponent 25/27: 16 sqrt(ln 1e4 / 1e4^(25/27)).
        assert_abs_diff_eq!(lambda_vanishing_gap(1.0, 0.5, 9.0, 10_000).unwrap(), 0.682_976_8, epsilon = 1e-7);
        let limit = lambda_vanishing_gap(1.0, 0.5, 1e12, 5000).unwrap();
        assert_abs_diff_eq!(limit, lambda_constant_gap(1.0, 0.5, 5000).unwrap(), epsilon = 1e-10);
        assert!(matches!(
            lambda_vanishing_gap(1.0, 0.5, 8.9, 100),
            Err(EstimatorError::ScheduleDomain(_))
        ));
        assert!(lambda_vanishing_gap(1.0, 1.0, 9.0, 100).is_err());
    }

    #[test]
    fn ridge_examples() {
        let data = one_dim_data();
        assert_abs_diff_eq!(ridge_closed_form(&data, 0.0).unwrap()[0], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(ridge_closed_form(&data, 0.5).unwrap()[0], 0.5, epsilon = 1e-15);
        let fam = ModelFamily::degenerate_linear_default();
        let data = fam.sample_dataset(Domain::Source, 100, 1).unwrap();
        let b = ridge_closed_form(&data, 0.1).unwrap();
        assert_eq!(b[2], 0.0);
        assert_eq!(b[3], 0.0);
        assert_eq!(ridge_closed_form(&data, 0.0), Err(EstimatorError::Singular));
    }

    #[test]
    fn default_start_examples() {
        let sin = ModelFamily::sinusoidal_link_default();
        let data = sin.sample_dataset(Domain::Source, 100, 2).unwrap();
        let starts = default_starts(&sin, &data, 2.0 * PI, 9).unwrap();
        assert_eq!(starts.len(), 9);
        for w in starts.windows(2) {
            assert_abs_diff_eq!(w[1][1] - w[0][1], PI / 2.0, epsilon = 1e-12);
            assert_eq!(w[1][0], w[0][0]);
        }
        assert_eq!(starts, default_starts(&sin, &data, 2.0 * PI, 9).unwrap());
        let dense = ModelFamily::dense_linear_default();
        let data = dense.sample_dataset(Domain::Source, 50, 2).unwrap();
        let starts = default_starts(&dense, &data, 1.0, 5).unwrap();
        assert_eq!(starts.len(), 2);
        assert!((&starts[1] - ridge_closed_form(&data, 0.0).unwrap()).amax() < 1e-10);
    }

    #[test]
    fn minimize_recovers_least_squares_and_ridge() {
        let fam = ModelFamily::dense_linear_default();
        let data = fam.sample_dataset(Domain::Source, 200, 12).unwrap();
        let cfg = SolverConfig {
            starts: StartSpec::Explicit(vec![DVector::zeros(2)]),
            ..SolverConfig::default()
        };
        let ls = minimize(&fam, &data, &Regularizer::SquaredL2, 0.0, &cfg).unwrap();
        assert!((&ls.beta_hat - ridge_closed_form(&data, 0.0).unwrap()).amax() <= 1e-6);
        assert!(ls.grad_norm <= cfg.grad_tol);
        let ridge = minimize(&fam, &data, &Regularizer::SquaredL2, 0.25, &cfg).unwrap();
        assert!((&ridge.beta_hat - ridge_closed_form(&data, 0.25).unwrap()).amax() <= 1e-6);
    }

    #[test]
    fn descent_is_monotone() {
        let fam = ModelFamily::sinusoidal_link_default();
        let data = fam.sample_dataset(Domain::Source, 500, 3).unwrap();
        let reg = Regularizer::SquaredL2;
        let obj = CompiledObjective::new(&fam, &data, &reg, 0.05).unwrap();
        let run = descend(&obj, &v(&[0.0, 3.0]), &SolverConfig::default());
        assert!(run.converged);
        for w in run.trace.windows(2) {
            assert!(w[1] <= w[0]);
        }
        let direct = obj.value(&run.beta);
        assert_abs_diff_eq!(*run.trace.last().unwrap(), direct, epsilon = 1e-12);
    }

    #[test]
    fn regularization_picks_the_simpler_basin() {
        let fam = ModelFamily::sinusoidal_link_default();
        let data = fam.sample_dataset(Domain::Source, 4000, 21).unwrap();
        let lambda = lambda_constant_gap(1.0, 2.0 * PI * PI / 3.0, 4000).unwrap();
        let est = minimize(&fam, &data, &Regularizer::SquaredL2, lambda, &SolverConfig::default()).unwrap();
        let b2 = est.beta_hat[1];
        for spurious in fam.minimizer_set(2.0 * PI).elements.iter().skip(1) {
            assert!((b2 - PI / 6.0).abs() < (b2 - spurious[1]).abs());
        }
        // The winner beats every start.
        let obj = CompiledObjective::new(&fam, &data, &Regularizer::SquaredL2, lambda).unwrap();
        for s in default_starts(&fam, &data, 2.0 * PI, 17).unwrap() {
            assert!(est.objective <= obj.value(&s));
        }
    }

    #[test]
    fn nonconvergence_carries_diagnostics() {
        let fam = ModelFamily::dense_linear_default();
        let data = fam.sample_dataset(Domain::Source, 50, 1).unwrap();
        let cfg = SolverConfig {
            max_iters: 1,
            starts: StartSpec::Explicit(vec![v(&[5.0, 5.0])]),
            ..SolverConfig::default()
        };
        match minimize(&fam, &data, &Regularizer::SquaredL2, 0.0, &cfg) {
            Err(EstimatorError::NonConvergence { best_start, best_beta, .. }) => {
                assert_eq!(best_start, 0);
                assert_eq!(best_beta.len(), 2);
            }
            other => panic!("expected nonconvergence, got {other:?}"),
        }
        let bad = SolverConfig {
            backtrack_factor: 1.5,
            ..SolverConfig::default()
        };
        assert!(matches!(
            minimize(&fam, &data, &Regularizer::SquaredL2, 0.0, &bad),
            Err(EstimatorError::Config(_))
        ));
    }
}
