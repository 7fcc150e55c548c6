//! Finite-difference oracles shared by the gradient tests and the
//! acceptance suite. Each check returns the worst error over its probes.

#![allow(dead_code)]

pub mod cli;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use simplicity_ood::estimator::regularized_objective;
use simplicity_ood::mlp_lab::{init_params, mse, mse_loss_and_grad, MlpParams, Vec3};
use simplicity_ood::model_zoo::{Domain, ModelFamily};
use simplicity_ood::regularizers::{Regularizer, SimplicityMeasure};
use simplicity_ood::seeding::{derive_seed, rng_from, LabRng};

pub const PROBES: usize = 100;

/// `||a - b|| / max(||b||, 1)`: relative for large gradients, absolute
/// near zero.
pub fn rel_err(approx: &[f64], exact: &[f64]) -> f64 {
    let diff: f64 = approx.iter().zip(exact).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let scale: f64 = exact.iter().map(|b| b * b).sum::<f64>().sqrt();
    diff / scale.max(1.0)
}

fn step(v: f64) -> f64 {
    1e-6 * (1.0 + v.abs())
}

/// Central differences of a scalar function.
pub fn fd_gradient(f: impl Fn(&DVector<f64>) -> f64, beta: &DVector<f64>) -> DVector<f64> {
    DVector::from_fn(beta.len(), |i, _| {
        let h = step(beta[i]);
        let (mut up, mut down) = (beta.clone(), beta.clone());
        up[i] += h;
        down[i] -= h;
        (f(&up) - f(&down)) / (2.0 * h)
    })
}

/// Central differences of a vector function; column `i` is `d g / d beta_i`.
pub fn fd_jacobian(g: impl Fn(&DVector<f64>) -> DVector<f64>, beta: &DVector<f64>) -> DMatrix<f64> {
    let d = beta.len();
    let mut out = DMatrix::zeros(d, d);
    for i in 0..d {
        let h = step(beta[i]);
        let (mut up, mut down) = (beta.clone(), beta.clone());
        up[i] += h;
        down[i] -= h;
        out.set_column(i, &((g(&up) - g(&down)) / (2.0 * h)));
    }
    out
}

fn random_beta(family: &ModelFamily, rng: &mut LabRng) -> DVector<f64> {
    DVector::from_fn(family.d(), |_, _| 2.0 * rng.sample::<f64, _>(StandardNormal))
}

pub fn zoo() -> Vec<ModelFamily> {
    vec![
        ModelFamily::dense_linear_default(),
        ModelFamily::degenerate_linear_default(),
        ModelFamily::sinusoidal_link_default(),
    ]
}

/// Worst `(gradient error, Hessian error)` for one family over random
/// `(sample, beta)` probes from both domains.
pub fn family_errors(family: &ModelFamily, seed: u64) -> (f64, f64) {
    let mut rng = rng_from(seed);
    let (mut g_err, mut h_err) = (0.0f64, 0.0f64);
    for i in 0..PROBES {
        let domain = if i % 2 == 0 { Domain::Source } else { Domain::Target };
        let data = family.sample_dataset(domain, 1, derive_seed(seed, &[i as u64])).unwrap();
        let s = &data.samples[0];
        let beta = random_beta(family, &mut rng);
        let fd = fd_gradient(|b| family.loss(s, b).unwrap(), &beta);
        let exact = family.loss_grad(s, &beta).unwrap();
        g_err = g_err.max(rel_err(fd.as_slice(), exact.as_slice()));
        let fd_h = fd_jacobian(|b| family.loss_grad(s, b).unwrap(), &beta);
        let exact_h = family.loss_hessian(s, &beta).unwrap();
        h_err = h_err.max(rel_err(fd_h.as_slice(), exact_h.as_slice()));
    }
    (g_err, h_err)
}

pub fn regularizers_for(d: usize) -> Vec<Regularizer> {
    let half = d / 2;
    vec![
        Regularizer::SquaredL2,
        Regularizer::group_squared_l2(vec![(0..half).collect(), (half..d).collect()]).unwrap(),
        Regularizer::huberized_l1(Regularizer::DEFAULT_HUBER_DELTA).unwrap(),
        Regularizer::huberized_l1(0.3).unwrap(),
    ]
}

/// Worst gradient error of `reg` over random `beta` in dimension `d`.
pub fn regularizer_error(reg: &Regularizer, d: usize, seed: u64) -> f64 {
    let mut rng = rng_from(seed);
    (0..PROBES)
        .map(|_| {
            let beta = DVector::from_fn(d, |_, _| 2.0 * rng.sample::<f64, _>(StandardNormal));
            let fd = fd_gradient(|b| reg.value(b).unwrap(), &beta);
            rel_err(fd.as_slice(), reg.gradient(&beta).unwrap().as_slice())
        })
        .fold(0.0, f64::max)
}

/// Worst gradient error of the regularized empirical objective.
pub fn objective_error(family: &ModelFamily, seed: u64) -> f64 {
    let mut rng = rng_from(seed);
    let reg = Regularizer::SquaredL2;
    (0..PROBES)
        .map(|i| {
            let data = family
                .sample_dataset(Domain::Source, 5 + i % 20, derive_seed(seed, &[i as u64]))
                .unwrap();
            let beta = random_beta(family, &mut rng);
            let lambda = 0.1;
            let fd = fd_gradient(|b| regularized_objective(family, &data, &reg, lambda, b).unwrap().0, &beta);
            let (_, exact) = regularized_objective(family, &data, &reg, lambda, &beta).unwrap();
            rel_err(fd.as_slice(), exact.as_slice())
        })
        .fold(0.0, f64::max)
}

/// Worst MLP backprop error on random `h = 4` networks and small batches.
pub fn mlp_error(seed: u64) -> f64 {
    let mut rng = rng_from(seed);
    let mut worst = 0.0f64;
    for i in 0..PROBES {
        let p = init_params(4, derive_seed(seed, &[i as u64]));
        let batch = 1 + i % 6;
        let xs: Vec<Vec3> = (0..batch).map(|_| [rng.gen(), rng.gen(), rng.gen()]).collect();
        let ys: Vec<Vec3> = (0..batch).map(|_| [rng.gen(), rng.gen(), rng.gen()]).collect();
        let (_, exact) = mse_loss_and_grad(&p, &xs, &ys).unwrap();
        let mut fd = vec![0.0; p.as_slice().len()];
        for (k, slot) in fd.iter_mut().enumerate() {
            let h = step(p.as_slice()[k]);
            let mut up: MlpParams = p.clone();
            let mut down: MlpParams = p.clone();
            up.as_mut_slice()[k] += h;
            down.as_mut_slice()[k] -= h;
            *slot = (mse(&up, &xs, &ys).unwrap() - mse(&down, &xs, &ys).unwrap()) / (2.0 * h);
        }
        // Relative in the plain sense: MLP gradients are never near zero here.
        let diff: f64 = fd.iter().zip(exact.as_slice()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let norm: f64 = exact.as_slice().iter().map(|b| b * b).sum::<f64>().sqrt();
        worst = worst.max(diff / norm);
    }
    worst
}

/// Every gradient check with its tolerance: `(label, worst error, tolerance)`.
pub fn all_gradient_checks(seed: u64) -> Vec<(String, f64, f64)> {
    let mut out = Vec::new();
    for fam in zoo() {
        let (g, h) = family_errors(&fam, seed);
        out.push((format!("{} loss gradient", fam.name()), g, 1e-5));
        out.push((format!("{} loss Hessian", fam.name()), h, 1e-4));
        out.push((format!("{} regularized objective", fam.name()), objective_error(&fam, seed), 1e-5));
    }
    for reg in regularizers_for(4) {
        let label = match &reg {
            Regularizer::HuberizedL1 { delta } => format!("huberized_l1(delta={delta})"),
            other => other.name().to_string(),
        };
        out.push((format!("{label} gradient"), regularizer_error(&reg, 4, seed), 1e-6));
    }
    out.push(("mlp backprop".to_string(), mlp_error(seed), 1e-4));
    out
}
