//! Simplicity measures `R(beta)`: convex, L-smooth, nonnegative, zero at the
//! origin.

use nalgebra::DVector;
use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::seeding::rng_from;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegError {
    #[error("group partition does not cover coordinates 1..={d} exactly once: {detail}")]
    BadPartition { d: usize, detail: String },
    #[error("huber threshold must be positive, got {0}")]
    BadDelta(f64),
    #[error("unknown regularizer `{0}` (expected squared_l2, group_squared_l2 or huberized_l1)")]
    Unknown(String),
}

/// Anything that can serve as a simplicity measure. Implemented by
/// [`Regularizer`] and by test fixtures.
pub trait SimplicityMeasure: Send + Sync {
    fn value(&self, beta: &DVector<f64>) -> Result<f64, RegError>;
    fn gradient(&self, beta: &DVector<f64>) -> Result<DVector<f64>, RegError>;
    /// Declared Lipschitz constant of the gradient.
    fn smoothness(&self) -> f64;
    /// `R(to) - R(from)`. Implementations may override this with a formula
    /// that avoids cancellation when the two points are close.
    fn change(&self, from: &DVector<f64>, to: &DVector<f64>) -> Result<f64, RegError> {
        Ok(self.value(to)? - self.value(from)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Regularizer {
    /// `sum beta_i^2`, L = 2.
    SquaredL2,
    /// `sum_g ||beta_g||_2^2` over a partition of the coordinates (0-based
    /// groups), L = 2.
    GroupSquaredL2 { groups: Vec<Vec<usize>> },
    /// `sum h_delta(beta_i)`, quadratic inside `[-delta, delta]`, linear
    /// outside; L = 1 / delta.
    HuberizedL1 { delta: f64 },
}

impl Regularizer {
    pub const DEFAULT_HUBER_DELTA: f64 = 1.0;

    /// Group regularizer over 0-based index groups. Groups must be nonempty
    /// and pairwise disjoint; coverage is checked against `d` on use.
    pub fn group_squared_l2(groups: Vec<Vec<usize>>) -> Result<Self, RegError> {
        let d = groups.iter().map(Vec::len).sum();
        let reg = Regularizer::GroupSquaredL2 { groups };
        reg.validate(d)?;
        Ok(reg)
    }

    pub fn huberized_l1(delta: f64) -> Result<Self, RegError> {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(RegError::BadDelta(delta));
        }
        Ok(Regularizer::HuberizedL1 { delta })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Regularizer::SquaredL2 => "squared_l2",
            Regularizer::GroupSquaredL2 { .. } => "group_squared_l2",
            Regularizer::HuberizedL1 { .. } => "huberized_l1",
        }
    }

    /// Check that the groups partition `0..d`.
    pub fn validate(&self, d: usize) -> Result<(), RegError> {
        if let Regularizer::GroupSquaredL2 { groups } = self {
            let mut seen = vec![false; d];
            for g in groups {
                if g.is_empty() {
                    return Err(RegError::BadPartition {
                        d,
                        detail: "empty group".into(),
                    });
                }
                for &i in g {
                    if i >= d {
                        return Err(RegError::BadPartition {
                            d,
                            detail: format!("index {} out of range", i + 1),
                        });
                    }
                    if std::mem::replace(&mut seen[i], true) {
                        return Err(RegError::BadPartition {
                            d,
                            detail: format!("index {} appears twice", i + 1),
                        });
                    }
                }
            }
            if let Some(missing) = seen.iter().position(|&s| !s) {
                return Err(RegError::BadPartition {
                    d,
                    detail: format!("index {} is not covered", missing + 1),
                });
            }
        }
        Ok(())
    }
}

fn huber(t: f64, delta: f64) -> f64 {
    if t.abs() <= delta {
        t * t / (2.0 * delta)
    } else {
        t.abs() - 0.5 * delta
    }
}

fn huber_grad(t: f64, delta: f64) -> f64 {
    if t.abs() <= delta {
        t / delta
    } else {
        t.signum()
    }
}

fn huber_change(from: f64, to: f64, delta: f64) -> f64 {
    let (qf, qt) = (from.abs() <= delta, to.abs() <= delta);
    if qf && qt {
        (to - from) * (to + from) / (2.0 * delta)
    } else if !qf && !qt && from.signum() == to.signum() {
        (to - from) * to.signum()
    } else {
        huber(to, delta) - huber(from, delta)
    }
}

impl SimplicityMeasure for Regularizer {
    fn value(&self, beta: &DVector<f64>) -> Result<f64, RegError> {
        self.validate(beta.len())?;
        Ok(match self {
            Regularizer::SquaredL2 => beta.norm_squared(),
            Regularizer::GroupSquaredL2 { groups } => groups
                .iter()
                .map(|g| g.iter().map(|&i| beta[i] * beta[i]).sum::<f64>())
                .sum(),
            Regularizer::HuberizedL1 { delta } => beta.iter().map(|&t| huber(t, *delta)).sum(),
        })
    }

    fn gradient(&self, beta: &DVector<f64>) -> Result<DVector<f64>, RegError> {
        self.validate(beta.len())?;
        Ok(match self {
            Regularizer::SquaredL2 | Regularizer::GroupSquaredL2 { .. } => beta * 2.0,
            Regularizer::HuberizedL1 { delta } => beta.map(|t| huber_grad(t, *delta)),
        })
    }

    fn smoothness(&self) -> f64 {
        match self {
            Regularizer::SquaredL2 | Regularizer::GroupSquaredL2 { .. } => 2.0,
            Regularizer::HuberizedL1 { delta } => 1.0 / delta,
        }
    }

    fn change(&self, from: &DVector<f64>, to: &DVector<f64>) -> Result<f64, RegError> {
        self.validate(from.len())?;
        Ok(match self {
            Regularizer::SquaredL2 | Regularizer::GroupSquaredL2 { .. } => from
                .iter()
                .zip(to.iter())
                .map(|(&f, &t)| (t - f) * (t + f))
                .sum(),
            Regularizer::HuberizedL1 { delta } => from
                .iter()
                .zip(to.iter())
                .map(|(&f, &t)| huber_change(f, t, *delta))
                .sum(),
        })
    }
}

/// Outcome of the randomized convexity/smoothness probe.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct A4Report {
    pub origin_ok: bool,
    pub nonneg_ok: bool,
    pub convex_ok: bool,
    #[serde(rename = "smooth_L_estimate")]
    pub smooth_l_estimate: f64,
    #[serde(rename = "declared_L")]
    pub declared_l: f64,
    pub passed: bool,
}

/// Probe `R(0) = 0`, nonnegativity, midpoint convexity and the gradient
/// Lipschitz constant on `trials` random pairs.
///
/// Pairs are drawn at log-uniform scales in `[1e-6, 10]`, so kinks near the
/// origin show up as a diverging Lipschitz estimate.
pub fn check_a4<R: SimplicityMeasure + ?Sized>(
    reg: &R,
    d: usize,
    trials: usize,
    seed: u64,
) -> Result<A4Report, RegError> {
    let trials = trials.max(100);
    let mut rng = rng_from(seed);
    let zero = DVector::zeros(d);
    let origin_ok = reg.value(&zero)? == 0.0 && reg.gradient(&zero)?.iter().all(|&g| g == 0.0);
    let mut nonneg_ok = true;
    let mut convex_ok = true;
    let mut smooth = 0.0f64;
    for _ in 0..trials {
        let scale = 10f64.powf(rng.gen_range(-6.0..1.0));
        let a = DVector::from_fn(d, |_, _| scale * rng.gen_range(-1.0..1.0));
        let b = DVector::from_fn(d, |_, _| scale * rng.gen_range(-1.0..1.0));
        let (ra, rb) = (reg.value(&a)?, reg.value(&b)?);
        let mid = reg.value(&((&a + &b) * 0.5))?;
        nonneg_ok &= ra >= 0.0 && rb >= 0.0 && mid >= 0.0;
        convex_ok &= mid <= 0.5 * (ra + rb) + 1e-12;
        let dist = (&a - &b).norm();
        if dist > 0.0 {
            let ratio = (reg.gradient(&a)? - reg.gradient(&b)?).norm() / dist;
            smooth = smooth.max(ratio);
        }
    }
    let declared_l = reg.smoothness();
    let passed = origin_ok && nonneg_ok && convex_ok && smooth <= declared_l * (1.0 + 1e-9);
    Ok(A4Report {
        origin_ok,
        nonneg_ok,
        convex_ok,
        smooth_l_estimate: smooth,
        declared_l,
        passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_vec(xs.to_vec())
    }

    /// Negative control: `||beta||_2` is convex but has no Lipschitz gradient
    /// at the origin.
    struct PlainNorm;

    impl SimplicityMeasure for PlainNorm {
        fn value(&self, beta: &DVector<f64>) -> Result<f64, RegError> {
            Ok(beta.norm())
        }
        fn gradient(&self, beta: &DVector<f64>) -> Result<DVector<f64>, RegError> {
            let n = beta.norm();
            Ok(if n == 0.0 { beta.clone() } else { beta / n })
        }
        fn smoothness(&self) -> f64 {
            1.0
        }
    }

    #[test]
    fn value_examples() {
        assert_eq!(Regularizer::SquaredL2.value(&v(&[1.0, 2.0])).unwrap(), 5.0);
        let h = Regularizer::huberized_l1(1.0).unwrap();
        assert_abs_diff_eq!(h.value(&v(&[0.5, 2.0])).unwrap(), 1.625, epsilon = 1e-15);
        let g = Regularizer::group_squared_l2(vec![vec![0, 2], vec![1]]).unwrap();
        for reg in [Regularizer::SquaredL2, h, g] {
            assert_eq!(reg.value(&DVector::zeros(3)).unwrap(), 0.0);
        }
    }

    #[test]
    fn gradient_examples() {
        assert_eq!(Regularizer::SquaredL2.gradient(&v(&[1.0, -1.0])).unwrap(), v(&[2.0, -2.0]));
        let h = Regularizer::huberized_l1(1.0).unwrap();
        assert_eq!(h.gradient(&v(&[0.5, 2.0])).unwrap(), v(&[0.5, 1.0]));
    }

    #[test]
    fn bad_partitions_are_configuration_errors() {
        assert!(Regularizer::group_squared_l2(vec![vec![0, 1], vec![1]]).is_err());
        assert!(Regularizer::group_squared_l2(vec![vec![0], vec![]]).is_err());
        let reg = Regularizer::group_squared_l2(vec![vec![0], vec![1]]).unwrap();
        let err = reg.value(&v(&[1.0, 2.0, 3.0])).unwrap_err();
        assert!(matches!(err, RegError::BadPartition { d: 3, .. }));
        assert!(Regularizer::huberized_l1(0.0).is_err());
    }

    #[test]
    fn check_a4_examples() {
        let r = check_a4(&Regularizer::SquaredL2, 4, 200, 1).unwrap();
        assert!(r.convex_ok && r.passed);
        assert!(r.smooth_l_estimate <= 2.0 * (1.0 + 1e-9));
        let r = check_a4(&Regularizer::huberized_l1(0.5).unwrap(), 3, 500, 2).unwrap();
        assert!(r.passed, "{r:?}");
        assert!(r.smooth_l_estimate <= 2.0 * (1.0 + 1e-9));
        let g = Regularizer::group_squared_l2(vec![vec![0, 1], vec![2]]).unwrap();
        assert!(check_a4(&g, 3, 100, 3).unwrap().passed);
    }

    #[test]
    fn check_a4_rejects_plain_norm() {
        let r = check_a4(&PlainNorm, 3, 500, 4).unwrap();
        assert!(r.convex_ok && r.origin_ok);
        assert!(r.smooth_l_estimate > 1e3, "{r:?}");
        assert!(!r.passed);
    }

    #[test]
    fn change_matches_naive_difference() {
        let h = Regularizer::huberized_l1(0.7).unwrap();
        let a = v(&[0.1, -2.0, 0.69, 1.0]);
        let b = v(&[0.3, -1.5, 0.72, -1.0]);
        for reg in [Regularizer::SquaredL2, h] {
            let naive = reg.value(&b).unwrap() - reg.value(&a).unwrap();
            assert_abs_diff_eq!(reg.change(&a, &b).unwrap(), naive, epsilon = 1e-14);
        }
    }

    fn vec_strategy() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-5.0f64..5.0, 1..8)
    }

    proptest! {
        #[test]
        fn group_form_equals_squared_l2(xs in vec_strategy(), split in 0usize..8) {
            let d = xs.len();
            let cut = split.min(d - 1) + 1;
            let groups = if cut >= d { vec![(0..d).rev().collect()] }
                         else { vec![(cut..d).collect(), (0..cut).collect()] };
            let g = Regularizer::group_squared_l2(groups).unwrap();
            let beta = DVector::from_vec(xs);
            let diff = g.value(&beta).unwrap() - Regularizer::SquaredL2.value(&beta).unwrap();
            prop_assert!(diff.abs() <= 1e-12);
        }

        #[test]
        fn gradient_bounded_by_smoothness_times_norm(xs in vec_strategy(), delta in 0.05f64..3.0) {
            let beta = DVector::from_vec(xs);
            for reg in [Regularizer::SquaredL2, Regularizer::huberized_l1(delta).unwrap()] {
                let g = reg.gradient(&beta).unwrap();
                prop_assert!(g.norm() <= reg.smoothness() * beta.norm() * (1.0 + 1e-12));
                prop_assert!(reg.value(&beta).unwrap() >= 0.0);
            }
        }
    }
}
