//! Well-specified Gaussian-mean model families.
//!
//! Every family has `y | x ~ Normal(m(x; beta), 1)`, so the per-sample loss is
//! `0.5 * (y - m)^2 + 0.5 * ln(2 pi)`. Population quantities (source/target
//! loss, Fisher information, excess risk) are available in closed form: a
//! quadratic form for the linear families and a finite sum for the
//! finite-support family.
//!
//! Three families live here:
//!
//! * `dense_linear`: `m = beta . x`, full-rank source covariance, unique
//!   source minimizer.
//! * `degenerate_linear`: as above but the source covariates are exactly zero
//!   on a fixed coordinate set, so the source minimizers form an affine
//!   subspace through `beta*`.
//! * `sinusoidal_link`: `m = b1 x1 + sin(b2) x2 + cos(b2) x3` with covariates on
//!   the standard basis of R^3. Source data only sees `e1, e2`, which cannot
//!   tell `b2` from `pi - b2`; the target also sees `e3`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::io::fmt_f64;
use crate::seeding::{derive_seed, rng_from};

/// `0.5 * ln(2 pi)`, the loss at zero residual.
pub const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ZooError {
    #[error("parameter dimension mismatch: expected {expected}, got {actual}")]
    ParamDim { expected: usize, actual: usize },
    #[error("covariate dimension mismatch: expected {expected}, got {actual}")]
    CovariateDim { expected: usize, actual: usize },
    #[error("cannot sample an empty dataset (n = 0)")]
    EmptyDataset,
    #[error("invalid family configuration: {0}")]
    Config(String),
    #[error("unknown family `{0}` (expected dense_linear, degenerate_linear or sinusoidal_link)")]
    UnknownFamily(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Source,
    Target,
}

impl Domain {
    fn tag(self) -> u64 {
        match self {
            Domain::Source => 0x5352_4345,
            Domain::Target => 0x5447_4554,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub x: DVector<f64>,
    pub y: f64,
}

impl Sample {
    pub fn new(x: DVector<f64>, y: f64) -> Self {
        Self { x, y }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub domain: Domain,
    pub seed: u64,
}

impl Dataset {
    /// Build a dataset, checking that every sample shares one covariate
    /// dimension and is finite.
    pub fn new(samples: Vec<Sample>, domain: Domain, seed: u64) -> Result<Self, ZooError> {
        let first = samples.first().ok_or(ZooError::EmptyDataset)?;
        let p = first.x.len();
        for s in &samples {
            if s.x.len() != p {
                return Err(ZooError::CovariateDim {
                    expected: p,
                    actual: s.x.len(),
                });
            }
            if !s.y.is_finite() || s.x.iter().any(|v| !v.is_finite()) {
                return Err(ZooError::Config("non-finite sample".into()));
            }
        }
        Ok(Self {
            samples,
            domain,
            seed,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn covariate_dim(&self) -> usize {
        self.samples.first().map_or(0, |s| s.x.len())
    }

    /// CSV with header `x1,...,xp,y` and 17 significant digits per value.
    pub fn to_csv(&self) -> String {
        let p = self.covariate_dim();
        let mut out = String::new();
        let header: Vec<String> = (1..=p).map(|i| format!("x{i}")).chain(["y".into()]).collect();
        out.push_str(&header.join(","));
        out.push('\n');
        for s in &self.samples {
            let row: Vec<String> = s
                .x
                .iter()
                .map(|&v| fmt_f64(v))
                .chain([fmt_f64(s.y)])
                .collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// Marginal law of the covariates in one domain.
#[derive(Debug, Clone, PartialEq)]
pub enum CovariateLaw {
    /// `x ~ Normal(0, cov)`, sampled as `factor * z`. Coordinates with zero
    /// variance have all-zero factor rows, so they come out exactly 0.
    Gaussian {
        cov: DMatrix<f64>,
        factor: DMatrix<f64>,
    },
    /// Uniform over a finite support.
    Discrete { support: Vec<DVector<f64>> },
}

impl CovariateLaw {
    pub fn gaussian(cov: DMatrix<f64>) -> Result<Self, ZooError> {
        let p = cov.nrows();
        if cov.ncols() != p {
            return Err(ZooError::Config("covariance must be square".into()));
        }
        if (&cov - cov.transpose()).amax() > 1e-12 {
            return Err(ZooError::Config("covariance must be symmetric".into()));
        }
        // Coordinates with zero variance must be identically zero.
        let active: Vec<usize> = (0..p).filter(|&i| cov[(i, i)] != 0.0).collect();
        for i in (0..p).filter(|i| !active.contains(i)) {
            if cov.row(i).iter().any(|&v| v != 0.0) {
                return Err(ZooError::Config(format!(
                    "coordinate {} has zero variance but nonzero covariance",
                    i + 1
                )));
            }
        }
        let sub = DMatrix::from_fn(active.len(), active.len(), |a, b| cov[(active[a], active[b])]);
        let chol = sub
            .cholesky()
            .ok_or_else(|| ZooError::Config("covariance is not positive semidefinite".into()))?;
        let l = chol.l();
        let mut factor = DMatrix::zeros(p, p);
        for (a, &i) in active.iter().enumerate() {
            for (b, &j) in active.iter().enumerate() {
                factor[(i, j)] = l[(a, b)];
            }
        }
        Ok(CovariateLaw::Gaussian { cov, factor })
    }

    pub fn dim(&self) -> usize {
        match self {
            CovariateLaw::Gaussian { cov, .. } => cov.nrows(),
            CovariateLaw::Discrete { support } => support[0].len(),
        }
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> DVector<f64> {
        match self {
            CovariateLaw::Gaussian { factor, .. } => {
                let p = factor.nrows();
                let z = DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal));
                // `+ 0.0` turns the -0.0 produced by zero factor rows into +0.0.
                (factor * z).map(|v| v + 0.0)
            }
            CovariateLaw::Discrete { support } => support[rng.gen_range(0..support.len())].clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FamilyKind {
    DenseLinear,
    /// `null_coords` are 0-based.
    DegenerateLinear { null_coords: Vec<usize> },
    SinusoidalLink,
}

/// One well-specified conditional model with its source and target laws.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelFamily {
    name: String,
    kind: FamilyKind,
    beta_star: DVector<f64>,
    source: CovariateLaw,
    target: CovariateLaw,
    noise_sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MinimizerKind {
    Singleton,
    IsolatedList,
    AffineSubspace,
}

/// Analytic description of the source minimizer set.
#[derive(Debug, Clone, PartialEq)]
pub struct MinimizerSetDescription {
    pub kind: MinimizerKind,
    /// Enumerated minimizers (for isolated kinds, those inside the window).
    /// The first element is always `beta*`.
    pub elements: Vec<DVector<f64>>,
    /// Columns span the free directions (affine kind only; otherwise 0 columns).
    pub basis: DMatrix<f64>,
    pub anchor: DVector<f64>,
}

impl MinimizerSetDescription {
    /// `d_S`, the dimension of the minimizer manifold.
    pub fn manifold_dim(&self) -> usize {
        self.basis.ncols()
    }
}

fn basis_vec(p: usize, i: usize) -> DVector<f64> {
    let mut v = DVector::zeros(p);
    v[i] = 1.0;
    v
}

impl ModelFamily {
    /// Linear-Gaussian family with full-rank source covariance.
    pub fn dense_linear(
        beta_star: DVector<f64>,
        sigma_source: DMatrix<f64>,
        sigma_target: DMatrix<f64>,
    ) -> Result<Self, ZooError> {
        let d = beta_star.len();
        check_cov_dim(&sigma_source, d)?;
        check_cov_dim(&sigma_target, d)?;
        if sigma_source.clone().cholesky().is_none() {
            return Err(ZooError::Config(
                "dense_linear needs a full-rank source covariance".into(),
            ));
        }
        Ok(Self {
            name: "dense_linear".into(),
            kind: FamilyKind::DenseLinear,
            beta_star,
            source: CovariateLaw::gaussian(sigma_source)?,
            target: CovariateLaw::gaussian(sigma_target)?,
            noise_sigma: 1.0,
        })
    }

    /// Default dense family: d = 2, mild covariate shift between domains.
    pub fn dense_linear_default() -> Self {
        Self::dense_linear(
            DVector::from_vec(vec![1.0, -0.5]),
            DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.5])),
            DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, 2.0])),
        )
        .expect("default dense family is valid")
    }

    /// Linear-Gaussian family whose source covariates vanish on `null_coords`
    /// (0-based). `sigma_source` must have zero rows/columns there; `beta*`
    /// must be zero there.
    pub fn degenerate_linear(
        beta_star: DVector<f64>,
        null_coords: Vec<usize>,
        sigma_source: DMatrix<f64>,
        sigma_target: DMatrix<f64>,
    ) -> Result<Self, ZooError> {
        let d = beta_star.len();
        check_cov_dim(&sigma_source, d)?;
        check_cov_dim(&sigma_target, d)?;
        if null_coords.is_empty() {
            return Err(ZooError::Config("degenerate_linear needs at least one null coordinate".into()));
        }
        for &k in &null_coords {
            if k >= d {
                return Err(ZooError::Config(format!("null coordinate {} out of range", k + 1)));
            }
            if sigma_source.row(k).iter().any(|&v| v != 0.0) {
                return Err(ZooError::Config(format!(
                    "source covariance must vanish on null coordinate {}",
                    k + 1
                )));
            }
            if beta_star[k] != 0.0 {
                return Err(ZooError::Config(format!(
                    "beta* must be zero on null coordinate {}",
                    k + 1
                )));
            }
        }
        Self::affine_unchecked("degenerate_linear", beta_star, null_coords, sigma_source, sigma_target)
    }

    /// Affine-minimizer family without the zero-`beta*` check on the null
    /// coordinates. Used to build fixtures where `beta*` is not the simplest
    /// point of its minimizer set.
    pub fn affine_fixture(
        beta_star: DVector<f64>,
        null_coords: Vec<usize>,
        sigma_source: DMatrix<f64>,
        sigma_target: DMatrix<f64>,
    ) -> Result<Self, ZooError> {
        let d = beta_star.len();
        check_cov_dim(&sigma_source, d)?;
        check_cov_dim(&sigma_target, d)?;
        let mut fam =
            Self::affine_unchecked("affine_fixture", beta_star, null_coords, sigma_source, sigma_target)?;
        fam.name = "affine_fixture".into();
        Ok(fam)
    }

    fn affine_unchecked(
        name: &str,
        beta_star: DVector<f64>,
        mut null_coords: Vec<usize>,
        sigma_source: DMatrix<f64>,
        sigma_target: DMatrix<f64>,
    ) -> Result<Self, ZooError> {
        null_coords.sort_unstable();
        null_coords.dedup();
        let target = CovariateLaw::gaussian(sigma_target.clone())?;
        if sigma_target.cholesky().is_none() {
            return Err(ZooError::Config("target covariance must be full rank".into()));
        }
        Ok(Self {
            name: name.into(),
            kind: FamilyKind::DegenerateLinear { null_coords },
            beta_star,
            source: CovariateLaw::gaussian(sigma_source)?,
            target,
            noise_sigma: 1.0,
        })
    }

    /// Default degenerate family: d = 4, null coordinates {3, 4},
    /// `Sigma_S = diag(1, 1, 0, 0)`, `Sigma_T = I`.
    pub fn degenerate_linear_default() -> Self {
        Self::degenerate_linear(
            DVector::from_vec(vec![1.0, -0.5, 0.0, 0.0]),
            vec![2, 3],
            DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1.0, 0.0, 0.0])),
            DMatrix::identity(4, 4),
        )
        .expect("default degenerate family is valid")
    }

    /// Sinusoidal-link family with `beta* = (b1, b2)`.
    pub fn sinusoidal_link(beta_star: DVector<f64>) -> Result<Self, ZooError> {
        if beta_star.len() != 2 {
            return Err(ZooError::ParamDim {
                expected: 2,
                actual: beta_star.len(),
            });
        }
        let e = |i| basis_vec(3, i);
        Ok(Self {
            name: "sinusoidal_link".into(),
            kind: FamilyKind::SinusoidalLink,
            beta_star,
            source: CovariateLaw::Discrete {
                support: vec![e(0), e(1)],
            },
            target: CovariateLaw::Discrete {
                support: vec![e(0), e(1), e(2)],
            },
            noise_sigma: 1.0,
        })
    }

    /// Default sinusoidal family, `beta* = (1, pi/6)`.
    pub fn sinusoidal_link_default() -> Self {
        Self::sinusoidal_link(DVector::from_vec(vec![1.0, PI / 6.0])).expect("valid")
    }

    /// Family with its default parameters, by config name.
    pub fn by_name(name: &str) -> Result<Self, ZooError> {
        match name {
            "dense_linear" => Ok(Self::dense_linear_default()),
            "degenerate_linear" => Ok(Self::degenerate_linear_default()),
            "sinusoidal_link" => Ok(Self::sinusoidal_link_default()),
            other => Err(ZooError::UnknownFamily(other.to_string())),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> &FamilyKind {
        &self.kind
    }

    /// Parameter dimension `d`.
    pub fn d(&self) -> usize {
        self.beta_star.len()
    }

    /// Covariate dimension (3 for the sinusoidal family, `d` otherwise).
    pub fn covariate_dim(&self) -> usize {
        self.source.dim()
    }

    pub fn beta_star(&self) -> &DVector<f64> {
        &self.beta_star
    }

    pub fn noise_sigma(&self) -> f64 {
        self.noise_sigma
    }

    pub fn law(&self, domain: Domain) -> &CovariateLaw {
        match domain {
            Domain::Source => &self.source,
            Domain::Target => &self.target,
        }
    }

    pub fn is_linear(&self) -> bool {
        !matches!(self.kind, FamilyKind::SinusoidalLink)
    }

    fn check(&self, x: &DVector<f64>, beta: &DVector<f64>) -> Result<(), ZooError> {
        self.check_beta(beta)?;
        if x.len() != self.covariate_dim() {
            return Err(ZooError::CovariateDim {
                expected: self.covariate_dim(),
                actual: x.len(),
            });
        }
        Ok(())
    }

    pub fn check_beta(&self, beta: &DVector<f64>) -> Result<(), ZooError> {
        if beta.len() != self.d() {
            return Err(ZooError::ParamDim {
                expected: self.d(),
                actual: beta.len(),
            });
        }
        Ok(())
    }

    /// Conditional mean `m(x; beta)`. Dimensions are assumed checked.
    pub fn mean(&self, x: &DVector<f64>, beta: &DVector<f64>) -> f64 {
        match self.kind {
            FamilyKind::SinusoidalLink => {
                beta[0] * x[0] + beta[1].sin() * x[1] + beta[1].cos() * x[2]
            }
            _ => beta.dot(x),
        }
    }

    /// `m(x; to) - m(x; from)` without cancellation between the two means.
    pub fn mean_change(&self, x: &DVector<f64>, from: &DVector<f64>, to: &DVector<f64>) -> f64 {
        match self.kind {
            FamilyKind::SinusoidalLink => {
                let half = 0.5 * (to[1] - from[1]);
                let mid = 0.5 * (to[1] + from[1]);
                let dsin = 2.0 * mid.cos() * half.sin();
                let dcos = -2.0 * mid.sin() * half.sin();
                (to[0] - from[0]) * x[0] + dsin * x[1] + dcos * x[2]
            }
            _ => (to - from).dot(x),
        }
    }

    /// `grad_beta m(x; beta)`.
    pub fn mean_grad(&self, x: &DVector<f64>, beta: &DVector<f64>) -> DVector<f64> {
        match self.kind {
            FamilyKind::SinusoidalLink => DVector::from_vec(vec![
                x[0],
                beta[1].cos() * x[1] - beta[1].sin() * x[2],
            ]),
            _ => x.clone(),
        }
    }

    /// `hess_beta m(x; beta)`.
    pub fn mean_hessian(&self, x: &DVector<f64>, beta: &DVector<f64>) -> DMatrix<f64> {
        let d = self.d();
        let mut h = DMatrix::zeros(d, d);
        if let FamilyKind::SinusoidalLink = self.kind {
            h[(1, 1)] = -beta[1].sin() * x[1] - beta[1].cos() * x[2];
        }
        h
    }

    /// Negative log-likelihood of one sample.
    pub fn loss(&self, s: &Sample, beta: &DVector<f64>) -> Result<f64, ZooError> {
        self.check(&s.x, beta)?;
        let r = s.y - self.mean(&s.x, beta);
        Ok(0.5 * r * r + HALF_LN_2PI)
    }

    /// `-(y - m) grad m`.
    pub fn loss_grad(&self, s: &Sample, beta: &DVector<f64>) -> Result<DVector<f64>, ZooError> {
        self.check(&s.x, beta)?;
        let r = s.y - self.mean(&s.x, beta);
        Ok(self.mean_grad(&s.x, beta) * (-r))
    }

    /// `grad m grad m^T - (y - m) hess m`.
    pub fn loss_hessian(&self, s: &Sample, beta: &DVector<f64>) -> Result<DMatrix<f64>, ZooError> {
        self.check(&s.x, beta)?;
        let r = s.y - self.mean(&s.x, beta);
        let g = self.mean_grad(&s.x, beta);
        Ok(&g * g.transpose() - self.mean_hessian(&s.x, beta) * r)
    }

    /// Draw `n` samples from the domain's covariate law with responses
    /// `m(x; beta*) + Normal(0, 1)`. Deterministic per (family, domain, n, seed).
    pub fn sample_dataset(&self, domain: Domain, n: usize, seed: u64) -> Result<Dataset, ZooError> {
        if n == 0 {
            return Err(ZooError::EmptyDataset);
        }
        let mut rng = rng_from(derive_seed(seed, &[domain.tag(), n as u64]));
        let law = self.law(domain);
        let samples = (0..n)
            .map(|_| {
                let x = law.draw(&mut rng);
                let noise: f64 = rng.sample(StandardNormal);
                let y = self.mean(&x, &self.beta_star) + self.noise_sigma * noise;
                Sample { x, y }
            })
            .collect();
        Ok(Dataset {
            samples,
            domain,
            seed,
        })
    }

    /// `E_x[(m(x; beta) - m(x; beta*))^2]` under the domain's covariate law, exact.
    pub fn mean_gap_sq(&self, domain: Domain, beta: &DVector<f64>) -> Result<f64, ZooError> {
        self.check_beta(beta)?;
        Ok(match self.law(domain) {
            CovariateLaw::Gaussian { cov, .. } => {
                let delta = beta - &self.beta_star;
                (cov * &delta).dot(&delta)
            }
            CovariateLaw::Discrete { support } => {
                support
                    .iter()
                    .map(|x| self.mean_change(x, &self.beta_star, beta).powi(2))
                    .sum::<f64>()
                    / support.len() as f64
            }
        })
    }

    /// Population loss `E[l(x, y, beta)]` in the given domain, exact.
    pub fn population_loss(&self, domain: Domain, beta: &DVector<f64>) -> Result<f64, ZooError> {
        let gap = self.mean_gap_sq(domain, beta)?;
        Ok(0.5 * (self.noise_sigma * self.noise_sigma + gap) + HALF_LN_2PI)
    }

    /// `E[hess l(x, y, beta)]` in the given domain, exact. Uses
    /// `E[y | x] = m(x; beta*)`, so the curvature term carries
    /// `m(x; beta*) - m(x; beta)`.
    pub fn expected_hessian(&self, domain: Domain, beta: &DVector<f64>) -> Result<DMatrix<f64>, ZooError> {
        self.check_beta(beta)?;
        Ok(match self.law(domain) {
            CovariateLaw::Gaussian { cov, .. } => cov.clone(),
            CovariateLaw::Discrete { support } => {
                let d = self.d();
                let mut acc = DMatrix::zeros(d, d);
                for x in support {
                    let g = self.mean_grad(x, beta);
                    let resid = self.mean_change(x, beta, &self.beta_star);
                    acc += &g * g.transpose() - self.mean_hessian(x, beta) * resid;
                }
                acc / support.len() as f64
            }
        })
    }

    /// Analytic description of the source minimizer set. `window` bounds
    /// the enumeration box `|beta|_inf <= window` for isolated kinds.
    pub fn minimizer_set(&self, window: f64) -> MinimizerSetDescription {
        let d = self.d();
        match &self.kind {
            FamilyKind::DenseLinear => MinimizerSetDescription {
                kind: MinimizerKind::Singleton,
                elements: vec![self.beta_star.clone()],
                basis: DMatrix::zeros(d, 0),
                anchor: self.beta_star.clone(),
            },
            FamilyKind::DegenerateLinear { null_coords } => {
                let mut basis = DMatrix::zeros(d, null_coords.len());
                for (c, &k) in null_coords.iter().enumerate() {
                    basis[(k, c)] = 1.0;
                }
                MinimizerSetDescription {
                    kind: MinimizerKind::AffineSubspace,
                    elements: vec![self.beta_star.clone()],
                    basis,
                    anchor: self.beta_star.clone(),
                }
            }
            FamilyKind::SinusoidalLink => {
                let b1 = self.beta_star[0];
                let b2 = self.beta_star[1];
                let mut angles = Vec::new();
                let kmax = (window / (2.0 * PI)).ceil() as i64 + 1;
                for base in [b2, PI - b2] {
                    for k in -kmax..=kmax {
                        let b = base + 2.0 * PI * k as f64;
                        if b.abs() <= window + 1e-12 && b1.abs() <= window + 1e-12 {
                            angles.push(b);
                        }
                    }
                }
                angles.sort_by(|a, b| {
                    let da = (a - b2).abs();
                    let db = (b - b2).abs();
                    da.total_cmp(&db).then(a.total_cmp(b))
                });
                angles.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
                // beta* itself always heads the list, window or not.
                if angles.first().is_none_or(|a| (a - b2).abs() > 1e-9) {
                    angles.insert(0, b2);
                }
                angles[0] = b2;
                let elements: Vec<DVector<f64>> = angles
                    .into_iter()
                    .map(|b| DVector::from_vec(vec![b1, b]))
                    .collect();
                MinimizerSetDescription {
                    kind: if elements.len() > 1 {
                        MinimizerKind::IsolatedList
                    } else {
                        MinimizerKind::Singleton
                    },
                    elements,
                    basis: DMatrix::zeros(d, 0),
                    anchor: self.beta_star.clone(),
                }
            }
        }
    }
}

fn check_cov_dim(cov: &DMatrix<f64>, d: usize) -> Result<(), ZooError> {
    if cov.nrows() != d || cov.ncols() != d {
        return Err(ZooError::Config(format!(
            "covariance must be {d}x{d}, got {}x{}",
            cov.nrows(),
            cov.ncols()
        )));
    }
    Ok(())
}
