//! Fisher information, pseudoinverses, exact excess risk, the two
//! excess-risk bounds and numerical probes of the simplicity assumptions.
//!
//! Bounds are reported with the absolute constant set to 1; only their order
//! in `n` is meaningful.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::estimator::{check_vanishing_domain, EstimatorError};
use crate::model_zoo::{Domain, MinimizerKind, ModelFamily, ZooError};
use crate::regularizers::{check_a4, A4Report, RegError, Regularizer, SimplicityMeasure};
use crate::seeding::rng_from;

/// Eigenvalues below `DEFAULT_RANK_TOL * max_eigenvalue` count as zero.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error(transparent)]
    Zoo(#[from] ZooError),
    #[error(transparent)]
    Reg(#[from] RegError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error("matrix is not symmetric (max asymmetry {0:.3e})")]
    NotSymmetric(f64),
    #[error("source Fisher information is singular (rank {rank} < d = {d}); use the vanishing-gap bound")]
    SingularSource { rank: usize, d: usize },
    #[error("Monte-Carlo Fisher estimate needs m >= 1000, got {0}")]
    TooFewSamples(usize),
    #[error("tau probe needs a minimizer continuum through beta*, but the family has {0:?} minimizers")]
    NoContinuum(MinimizerKind),
    #[error("{0}")]
    Domain(String),
}

/// Eigendecomposition of a symmetric matrix, plus its numerical rank.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub eigenvalues: DVector<f64>,
    pub eigenvectors: DMatrix<f64>,
    pub rank: usize,
    pub smallest_nonzero: f64,
}

fn asymmetry(m: &DMatrix<f64>) -> f64 {
    if m.nrows() != m.ncols() {
        return f64::INFINITY;
    }
    (m - m.transpose()).amax()
}

pub fn spectrum(m: &DMatrix<f64>, rank_tol: f64) -> Result<Spectrum, AnalysisError> {
    let asym = asymmetry(m);
    if asym > 1e-8 {
        return Err(AnalysisError::NotSymmetric(asym));
    }
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let max = eig.eigenvalues.iter().fold(0.0f64, |a, &b| a.max(b));
    let cutoff = rank_tol * max;
    let kept: Vec<f64> = eig
        .eigenvalues
        .iter()
        .copied()
        .filter(|&l| max > 0.0 && l >= cutoff)
        .collect();
    Ok(Spectrum {
        rank: kept.len(),
        smallest_nonzero: kept.iter().copied().fold(f64::INFINITY, f64::min),
        eigenvalues: eig.eigenvalues,
        eigenvectors: eig.eigenvectors,
    })
}

/// Moore-Penrose pseudoinverse of a symmetric matrix: invert eigenvalues at
/// or above `rank_tol * max_eigenvalue`, zero the rest.
pub fn pseudoinverse(m: &DMatrix<f64>, rank_tol: f64) -> Result<DMatrix<f64>, AnalysisError> {
    if !(rank_tol > 0.0) {
        return Err(AnalysisError::Domain(format!("rank_tol must be positive, got {rank_tol}")));
    }
    let eig = spectrum(m, rank_tol)?;
    let max = eig.eigenvalues.iter().fold(0.0f64, |a, &b| a.max(b));
    let inv = eig
        .eigenvalues
        .map(|l| if max > 0.0 && l >= rank_tol * max { 1.0 / l } else { 0.0 });
    let v = &eig.eigenvectors;
    Ok(v * DMatrix::from_diagonal(&inv) * v.transpose())
}

/// Exact `E[hess l]` under the domain's covariate law.
pub fn fisher_analytic(family: &ModelFamily, domain: Domain, beta: &DVector<f64>) -> Result<DMatrix<f64>, AnalysisError> {
    Ok(family.expected_hessian(domain, beta)?)
}

/// Average per-sample Hessian over `m` draws `(x, y)`, symmetrized.
pub fn fisher_monte_carlo(
    family: &ModelFamily,
    domain: Domain,
    beta: &DVector<f64>,
    m: usize,
    seed: u64,
) -> Result<DMatrix<f64>, AnalysisError> {
    if m < 1000 {
        return Err(AnalysisError::TooFewSamples(m));
    }
    let data = family.sample_dataset(domain, m, seed)?;
    let d = family.d();
    let mut acc = DMatrix::zeros(d, d);
    for s in &data.samples {
        acc += family.loss_hessian(s, beta)?;
    }
    acc /= m as f64;
    Ok((&acc + acc.transpose()) * 0.5)
}

/// Source and target Fisher information at `beta*`.
#[derive(Debug, Clone, PartialEq)]
pub struct FisherReport {
    pub i_s: DMatrix<f64>,
    pub i_t: DMatrix<f64>,
    pub i_s_pinv: DMatrix<f64>,
    pub rank_s: usize,
    /// Smallest nonzero eigenvalue of `I_S` (the `alpha` estimate).
    pub smallest_nonzero_eig: f64,
    /// `d - rank_S`.
    pub d_s: usize,
}

impl FisherReport {
    pub fn at_star(family: &ModelFamily, rank_tol: f64) -> Result<Self, AnalysisError> {
        let star = family.beta_star();
        let i_s = fisher_analytic(family, Domain::Source, star)?;
        let i_t = fisher_analytic(family, Domain::Target, star)?;
        let eig = spectrum(&i_s, rank_tol)?;
        Ok(Self {
            i_s_pinv: pseudoinverse(&i_s, rank_tol)?,
            rank_s: eig.rank,
            smallest_nonzero_eig: eig.smallest_nonzero,
            d_s: family.d() - eig.rank,
            i_s,
            i_t,
        })
    }

    /// `Tr(I_T I_S^+)`.
    pub fn trace_term(&self) -> f64 {
        (&self.i_t * &self.i_s_pinv).trace()
    }
}

/// Target excess risk `E_T[l(beta)] - E_T[l(beta*)]`, exact.
pub fn excess_risk(family: &ModelFamily, beta: &DVector<f64>) -> Result<f64, AnalysisError> {
    Ok(0.5 * family.mean_gap_sq(Domain::Target, beta)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundRegime {
    ConstantGap,
    VanishingGap,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundTerms {
    pub term1: f64,
    pub term2: f64,
    pub total: f64,
    pub regime: BoundRegime,
}

/// `||I_T^{1/2} w||^2 = w^T I_T w`.
fn target_weighted_sq(i_t: &DMatrix<f64>, w: &DVector<f64>) -> f64 {
    (i_t * w).dot(w).max(0.0)
}

fn log_ratio(n: usize) -> Result<f64, AnalysisError> {
    if n < 2 {
        return Err(AnalysisError::Domain(format!("bounds need n >= 2, got {n}")));
    }
    Ok((n as f64).ln() / n as f64)
}

/// Constant-gap bound: `Tr(I_T I_S^-1) ln n / n` plus
/// `B0^2 ||I_T^{1/2} I_S^-1 grad R(beta*)||^2 ln n / (Delta^2 n)`.
/// An infinite `delta` (unique minimizer) zeroes the second term.
pub fn bound_constant_gap(
    fisher: &FisherReport,
    reg_grad_at_star: &DVector<f64>,
    b0: f64,
    delta: f64,
    n: usize,
) -> Result<BoundTerms, AnalysisError> {
    let d = fisher.i_s.nrows();
    if fisher.rank_s < d {
        return Err(AnalysisError::SingularSource { rank: fisher.rank_s, d });
    }
    if !(b0 > 0.0 && delta > 0.0) {
        return Err(AnalysisError::Domain(format!(
            "constant-gap bound needs B0 > 0 and Delta > 0 (got {b0}, {delta})"
        )));
    }
    let lr = log_ratio(n)?;
    let inv = fisher
        .i_s
        .clone()
        .cholesky()
        .map(|c| c.inverse())
        .unwrap_or_else(|| fisher.i_s_pinv.clone());
    let term1 = (&fisher.i_t * &inv).trace() * lr;
    let w = &inv * reg_grad_at_star;
    let term2 = if delta.is_infinite() {
        0.0
    } else {
        b0 * b0 * target_weighted_sq(&fisher.i_t, &w) * lr / (delta * delta)
    };
    Ok(BoundTerms {
        term1,
        term2,
        total: term1 + term2,
        regime: BoundRegime::ConstantGap,
    })
}

/// Vanishing-gap bound with pseudoinverses:
/// `Tr(I_T I_S^+) ln n / n` plus
/// `B0^2 ||I_T^{1/2} I_S^+ grad R(beta*)||^2 ln n / (Delta_max^2 n^(1 - 2/(3 tau)))`.
pub fn bound_vanishing_gap(
    fisher: &FisherReport,
    reg_grad_at_star: &DVector<f64>,
    b0: f64,
    delta_max: f64,
    tau: f64,
    n: usize,
) -> Result<BoundTerms, AnalysisError> {
    check_vanishing_domain(b0, delta_max, tau)?;
    let lr = log_ratio(n)?;
    let nf = n as f64;
    let term1 = fisher.trace_term() * lr;
    let w = &fisher.i_s_pinv * reg_grad_at_star;
    let term2 = b0 * b0 * target_weighted_sq(&fisher.i_t, &w) * nf.ln()
        / (delta_max * delta_max * nf.powf(1.0 - 2.0 / (3.0 * tau)));
    Ok(BoundTerms {
        term1,
        term2,
        total: term1 + term2,
        regime: BoundRegime::VanishingGap,
    })
}

/// Minimum of `R(anchor + V c) - R(anchor)` over `c`, by gradient descent in
/// the subspace coordinates. `V` has orthonormal columns.
fn affine_reg_floor(reg: &Regularizer, anchor: &DVector<f64>, basis: &DMatrix<f64>) -> Result<f64, AnalysisError> {
    let k = basis.ncols();
    let step = 1.0 / reg.smoothness();
    let mut c = DVector::zeros(k);
    let mut best: f64 = 0.0;
    for _ in 0..20_000 {
        let beta = anchor + basis * &c;
        let g = basis.transpose() * reg.gradient(&beta)?;
        if g.norm() <= 1e-14 {
            break;
        }
        c -= g * step;
        best = best.min(reg.change(anchor, &(anchor + basis * &c))?);
    }
    Ok(best)
}

/// Smallest simplicity excess of a spurious source minimizer over `beta*`.
///
/// `+inf` for a singleton set; for an affine set, the infimum over the
/// subspace (0 when `beta*` is its simplest point, signalling a vanishing
/// gap).
pub fn simplicity_gap(family: &ModelFamily, reg: &Regularizer, window: f64) -> Result<f64, AnalysisError> {
    let set = family.minimizer_set(window);
    let star = family.beta_star();
    match set.kind {
        MinimizerKind::Singleton => Ok(f64::INFINITY),
        MinimizerKind::IsolatedList => {
            let mut gap = f64::INFINITY;
            for e in set.elements.iter().filter(|e| *e != star) {
                gap = gap.min(reg.change(star, e)?);
            }
            Ok(gap)
        }
        MinimizerKind::AffineSubspace => {
            let floor = affine_reg_floor(reg, &set.anchor, &set.basis)?;
            Ok(if floor < 0.0 { floor } else { 0.0 })
        }
    }
}

/// Empirical exponent linking distance and simplicity gap along the
/// minimizer continuum: the least-squares slope of `ln dist` on `ln gap` for
/// `k` points at log-spaced distances in `[1e-4, 1e-1]` from `beta*`.
pub fn estimate_tau(family: &ModelFamily, reg: &Regularizer, k: usize, seed: u64) -> Result<f64, AnalysisError> {
    if k < 10 {
        return Err(AnalysisError::Domain(format!("tau probe needs k >= 10, got {k}")));
    }
    let set = family.minimizer_set(1.0);
    if set.kind != MinimizerKind::AffineSubspace {
        return Err(AnalysisError::NoContinuum(set.kind));
    }
    let star = family.beta_star();
    let mut rng = rng_from(seed);
    let coeffs = DVector::from_fn(set.basis.ncols(), |_, _| rng.sample::<f64, _>(StandardNormal));
    let mut dir = &set.basis * coeffs;
    dir /= dir.norm();
    // Walk uphill in R if the subspace sees its gradient at all.
    let g = reg.gradient(star)?;
    if dir.dot(&g) < 0.0 {
        dir = -dir;
    }
    let mut xs = Vec::with_capacity(k);
    let mut ys = Vec::with_capacity(k);
    for i in 0..k {
        let t = 10f64.powf(-4.0 + 3.0 * i as f64 / (k - 1) as f64);
        let point = star + &dir * t;
        let gap = reg.change(star, &point)?;
        if !(gap > 0.0) {
            return Err(AnalysisError::Domain(format!(
                "simplicity does not increase along the minimizer set (gap {gap:.3e} at distance {t:.1e})"
            )));
        }
        xs.push(gap.ln());
        ys.push(t.ln());
    }
    Ok(ols(&xs, &ys).0)
}

/// Ordinary least squares `y = slope x + intercept`; returns
/// `(slope, intercept, r_squared)`.
pub fn ols(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    (slope, intercept, r2)
}

/// Constants the assumptions are stated in. Values used by the schedules
/// are user-supplied; the rest are only echoed in reports.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub struct AssumptionConstants {
    #[serde(rename = "B0")]
    pub b0: f64,
    #[serde(rename = "B1")]
    pub b1: f64,
    #[serde(rename = "B2")]
    pub b2: f64,
    #[serde(rename = "B3")]
    pub b3: f64,
    #[serde(rename = "L")]
    pub l: f64,
    pub alpha: f64,
    #[serde(rename = "G")]
    pub g: f64,
    #[serde(rename = "Delta")]
    pub delta: Option<f64>,
    #[serde(rename = "Delta_max")]
    pub delta_max: Option<f64>,
    pub tau: Option<f64>,
}

impl Default for AssumptionConstants {
    fn default() -> Self {
        Self {
            b0: 1.0,
            b1: 1.0,
            b2: 1.0,
            b3: 1.0,
            l: 2.0,
            alpha: 1.0,
            g: 1.0,
            delta: None,
            delta_max: None,
            tau: None,
        }
    }
}

impl AssumptionConstants {
    pub fn validate(&self) -> Result<(), AnalysisError> {
        let named = [
            ("B0", Some(self.b0)),
            ("B1", Some(self.b1)),
            ("B2", Some(self.b2)),
            ("B3", Some(self.b3)),
            ("L", Some(self.l)),
            ("alpha", Some(self.alpha)),
            ("G", Some(self.g)),
            ("Delta", self.delta),
            ("Delta_max", self.delta_max),
            ("tau", self.tau),
        ];
        for (name, v) in named {
            if let Some(v) = v {
                if !(v > 0.0) {
                    return Err(AnalysisError::Domain(format!("{name} must be positive, got {v}")));
                }
            }
        }
        if let Some(dm) = self.delta_max {
            if dm >= 1.0 {
                return Err(AnalysisError::Domain(format!("Delta_max must be below 1, got {dm}")));
            }
        }
        Ok(())
    }
}

fn ser_gap<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    if v.is_infinite() && *v > 0.0 {
        s.serialize_str("inf")
    } else {
        s.serialize_f64(*v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssumptionReport {
    pub a4: A4Report,
    pub alpha_hat: f64,
    #[serde(rename = "rank_S")]
    pub rank_s: usize,
    #[serde(rename = "d_S")]
    pub d_s: usize,
    pub rank_consistent: bool,
    /// `+inf` (serialized as `"inf"`) iff the minimizer set is a singleton.
    #[serde(serialize_with = "ser_gap")]
    pub delta_hat: f64,
    /// `None` when the minimizer set has no continuum through `beta*`.
    pub tau_hat: Option<f64>,
    pub constants: AssumptionConstants,
}

/// Aggregate the executable assumption probes for one family/regularizer.
pub fn assumption_report(
    family: &ModelFamily,
    reg: &Regularizer,
    constants: &AssumptionConstants,
    window: f64,
    seed: u64,
) -> Result<AssumptionReport, AnalysisError> {
    constants.validate()?;
    let d = family.d();
    let a4 = check_a4(reg, d, 1000, seed)?;
    let set = family.minimizer_set(window);
    let d_s = set.manifold_dim();
    let mut probes: Vec<DVector<f64>> = set.elements.clone();
    for c in 0..set.basis.ncols() {
        for t in [-1.0, 1.0] {
            probes.push(&set.anchor + set.basis.column(c) * t);
        }
    }
    let mut alpha_hat = f64::INFINITY;
    let mut rank_consistent = true;
    for p in &probes {
        let eig = spectrum(&fisher_analytic(family, Domain::Source, p)?, DEFAULT_RANK_TOL)?;
        alpha_hat = alpha_hat.min(eig.smallest_nonzero);
        rank_consistent &= eig.rank == d - d_s;
    }
    let fisher = FisherReport::at_star(family, DEFAULT_RANK_TOL)?;
    let delta_hat = simplicity_gap(family, reg, window)?;
    let tau_hat = match set.kind {
        MinimizerKind::AffineSubspace => Some(estimate_tau(family, reg, 20, seed)?),
        _ => None,
    };
    Ok(AssumptionReport {
        a4,
        alpha_hat,
        rank_s: fisher.rank_s,
        d_s,
        rank_consistent,
        delta_hat,
        tau_hat,
        constants: *constants,
    })
}
