//! Two-layer ReLU networks on the hypercube-center task: the identity map
//! versus label maps that fit the source centers but not the targets.
//!
//! Parameters live in one flat buffer so Adam and the norm are plain slice
//! loops. Layout, with `h` hidden units:
//! `[W1 (3*h, input-major) | b1 (h) | W2 (3*h, output-major) | b2 (3)]`,
//! i.e. `W1[j][k]` sits at `k*h + j` and `W2[o][j]` at `4h + o*h + j`.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde_json::json;
use thiserror::Error;

use crate::io::fmt_f64;
use crate::seeding::{derive_seed, rng_from, LabRng};

pub type Vec3 = [f64; 3];

/// Source centers, in label/order convention `000, 001, 010, 100`.
pub const SOURCE_CENTERS: [Vec3; 4] = [[0.0, 0.0, 0.0], [0.0, 0.0, 1.0], [0.0, 1.0, 0.0], [1.0, 0.0, 0.0]];
/// Target centers, in CSV column order `110, 101, 011, 111`.
pub const TARGET_CENTERS: [Vec3; 4] = [[1.0, 1.0, 0.0], [1.0, 0.0, 1.0], [0.0, 1.0, 1.0], [1.0, 1.0, 1.0]];
pub const TARGET_LABELS: [&str; 4] = ["110", "101", "011", "111"];

const TRAIN_PER_CENTER: usize = 100;
const TRAIN_STD: f64 = 0.1;
const TEST_PER_CENTER: usize = 20;
// sqrt(0.001)
const TEST_STD: f64 = 0.031_622_776_601_683_79;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MlpError {
    #[error("empty batch")]
    EmptyBatch,
    #[error("training diverged: non-finite loss at epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("{0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    hidden: usize,
    data: Vec<f64>,
}

impl MlpParams {
    pub fn zeros(hidden: usize) -> Self {
        Self {
            hidden,
            data: vec![0.0; 7 * hidden + 3],
        }
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn w1(&self, j: usize, k: usize) -> f64 {
        self.data[k * self.hidden + j]
    }

    pub fn set_w1(&mut self, j: usize, k: usize, v: f64) {
        self.data[k * self.hidden + j] = v;
    }

    pub fn b1(&self) -> &[f64] {
        &self.data[3 * self.hidden..4 * self.hidden]
    }

    pub fn b1_mut(&mut self) -> &mut [f64] {
        &mut self.data[3 * self.hidden..4 * self.hidden]
    }

    pub fn w2(&self, o: usize, j: usize) -> f64 {
        self.data[4 * self.hidden + o * self.hidden + j]
    }

    pub fn set_w2(&mut self, o: usize, j: usize, v: f64) {
        self.data[4 * self.hidden + o * self.hidden + j] = v;
    }

    pub fn b2(&self) -> &[f64] {
        &self.data[7 * self.hidden..]
    }

    pub fn b2_mut(&mut self) -> &mut [f64] {
        &mut self.data[7 * self.hidden..]
    }

    fn w1_cols(&self) -> (&[f64], &[f64], &[f64]) {
        let h = self.hidden;
        (&self.data[..h], &self.data[h..2 * h], &self.data[2 * h..3 * h])
    }

    fn w2_rows(&self) -> (&[f64], &[f64], &[f64]) {
        let h = self.hidden;
        let w = &self.data[4 * h..7 * h];
        (&w[..h], &w[h..2 * h], &w[2 * h..])
    }
}

/// Label map applied on the target centers (sources always map to `x`).
#[derive(Debug, Clone, PartialEq)]
pub enum MapSpec {
    /// Train on the source centers only.
    Identity,
    /// `y = r_j + x - t_j`, `r_j` in `[0, 2]^3`.
    Uniform { r: [Vec3; 4] },
    /// `y = r_j + x - t_j`, `r_j` a hypercube vertex other than `t_j`.
    Permutation { r: [Vec3; 4] },
    /// `y = (1,1,1) - x`.
    Flipped,
    /// `y = alpha ((1,1,1) - x) + (1 - alpha) x`.
    Interpolated { alpha: f64 },
}

impl MapSpec {
    pub fn validate(&self) -> Result<(), MlpError> {
        match self {
            MapSpec::Uniform { r } if r.iter().flatten().any(|v| !(0.0..=2.0).contains(v)) => {
                Err(MlpError::Config("uniform map vectors must lie in [0, 2]^3".into()))
            }
            MapSpec::Permutation { r } => {
                for (j, rj) in r.iter().enumerate() {
                    if rj.iter().any(|v| *v != 0.0 && *v != 1.0) || *rj == TARGET_CENTERS[j] {
                        return Err(MlpError::Config(format!(
                            "permutation target {j} must be a hypercube vertex other than its own center"
                        )));
                    }
                }
                Ok(())
            }
            MapSpec::Interpolated { alpha } if !(0.0..=1.0).contains(alpha) => {
                Err(MlpError::Config(format!("alpha must lie in [0, 1], got {alpha}")))
            }
            _ => Ok(()),
        }
    }

    fn label(&self, target_index: usize, x: &Vec3) -> Vec3 {
        let t = &TARGET_CENTERS[target_index];
        match self {
            MapSpec::Identity => *x,
            MapSpec::Uniform { r } | MapSpec::Permutation { r } => {
                let r = &r[target_index];
                [r[0] + x[0] - t[0], r[1] + x[1] - t[1], r[2] + x[2] - t[2]]
            }
            MapSpec::Flipped => [1.0 - x[0], 1.0 - x[1], 1.0 - x[2]],
            MapSpec::Interpolated { alpha } => {
                let a = *alpha;
                [
                    a * (1.0 - x[0]) + (1.0 - a) * x[0],
                    a * (1.0 - x[1]) + (1.0 - a) * x[1],
                    a * (1.0 - x[2]) + (1.0 - a) * x[2],
                ]
            }
        }
    }
}

/// Covariate/label pairs; `center[i]` indexes the generating center
/// (sources 0..4, targets 4..8 for training sets; targets 0..4 for test sets).
#[derive(Debug, Clone, PartialEq)]
pub struct MlpDataset {
    pub x: Vec<Vec3>,
    pub y: Vec<Vec3>,
    pub center: Vec<usize>,
}

impl MlpDataset {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }
}

fn jitter(rng: &mut LabRng, c: &Vec3, std: f64) -> Vec3 {
    let mut x = *c;
    for v in &mut x {
        let z: f64 = StandardNormal.sample(rng);
        *v += std * z;
    }
    x
}

pub fn generate_train_set(map: &MapSpec, seed: u64) -> MlpDataset {
    let mut rng = rng_from(seed);
    let mut out = MlpDataset {
        x: Vec::new(),
        y: Vec::new(),
        center: Vec::new(),
    };
    for (ci, c) in SOURCE_CENTERS.iter().enumerate() {
        for _ in 0..TRAIN_PER_CENTER {
            let x = jitter(&mut rng, c, TRAIN_STD);
            out.x.push(x);
            out.y.push(x);
            out.center.push(ci);
        }
    }
    if *map != MapSpec::Identity {
        for (ti, t) in TARGET_CENTERS.iter().enumerate() {
            for _ in 0..TRAIN_PER_CENTER {
                let x = jitter(&mut rng, t, TRAIN_STD);
                out.y.push(map.label(ti, &x));
                out.x.push(x);
                out.center.push(4 + ti);
            }
        }
    }
    out
}

/// Identity-labelled draws around the target centers.
pub fn generate_test_set(seed: u64) -> MlpDataset {
    let mut rng = rng_from(seed);
    let mut out = MlpDataset {
        x: Vec::new(),
        y: Vec::new(),
        center: Vec::new(),
    };
    for (ti, t) in TARGET_CENTERS.iter().enumerate() {
        for _ in 0..TEST_PER_CENTER {
            let x = jitter(&mut rng, t, TEST_STD);
            out.x.push(x);
            out.y.push(x);
            out.center.push(ti);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MlpTrainConfig {
    pub hidden: usize,
    pub lr: f64,
    pub epochs: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
}

impl Default for MlpTrainConfig {
    fn default() -> Self {
        Self {
            hidden: 128,
            lr: 5e-5,
            epochs: 40_000,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
        }
    }
}

impl MlpTrainConfig {
    /// The shortened profile used by the acceptance suite.
    pub fn acceptance() -> Self {
        Self {
            epochs: 10_000,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), MlpError> {
        let bad = |m: String| Err(MlpError::Config(m));
        if self.hidden == 0 {
            return bad("hidden must be at least 1".into());
        }
        if !(self.lr > 0.0) {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return bad("Adam betas must lie in [0, 1)".into());
        }
        if !(self.adam_eps > 0.0) {
            return bad("adam_eps must be positive".into());
        }
        Ok(())
    }
}

/// `U(-sqrt(1/fan_in), sqrt(1/fan_in))` per layer, biases included.
pub fn init_params(hidden: usize, seed: u64) -> MlpParams {
    let mut rng = rng_from(seed);
    let mut p = MlpParams::zeros(hidden);
    let a1 = (1.0f64 / 3.0).sqrt();
    let a2 = (1.0 / hidden as f64).sqrt();
    let split = 4 * hidden;
    for (i, v) in p.data.iter_mut().enumerate() {
        let a = if i < split { a1 } else { a2 };
        *v = rng.gen_range(-a..=a);
    }
    p
}

/// Four-lane dot product; fixed summation order keeps results reproducible.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..4 {
            acc[l] += x[l] * y[l];
        }
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Hidden pre-activations into `z`, activations into `a`, returns the output.
fn forward_into(p: &MlpParams, x: &Vec3, z: &mut [f64], a: &mut [f64]) -> Vec3 {
    let (c0, c1, c2) = p.w1_cols();
    for ((((zj, b), w0), w1), w2) in z.iter_mut().zip(p.b1()).zip(c0).zip(c1).zip(c2) {
        *zj = b + w0 * x[0] + w1 * x[1] + w2 * x[2];
    }
    for (aj, zj) in a.iter_mut().zip(z.iter()) {
        *aj = zj.max(0.0);
    }
    let (r0, r1, r2) = p.w2_rows();
    let b2 = p.b2();
    [b2[0] + dot(r0, a), b2[1] + dot(r1, a), b2[2] + dot(r2, a)]
}

pub fn forward(p: &MlpParams, x: &Vec3) -> Vec3 {
    let mut ws = Workspace::new(p.hidden);
    forward_into(p, x, &mut ws.z, &mut ws.a)
}

/// Mean squared error over all `3 n` output scalars.
pub fn mse(p: &MlpParams, xs: &[Vec3], ys: &[Vec3]) -> Result<f64, MlpError> {
    if xs.is_empty() {
        return Err(MlpError::EmptyBatch);
    }
    let mut ws = Workspace::new(p.hidden);
    let mut total = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        let out = forward_into(p, x, &mut ws.z, &mut ws.a);
        total += (0..3).map(|o| (out[o] - y[o]).powi(2)).sum::<f64>();
    }
    Ok(total / (3 * xs.len()) as f64)
}

/// Reusable backprop buffers.
#[derive(Debug, Clone)]
pub struct Workspace {
    z: Vec<f64>,
    a: Vec<f64>,
}

impl Workspace {
    pub fn new(hidden: usize) -> Self {
        Self {
            z: vec![0.0; hidden],
            a: vec![0.0; hidden],
        }
    }
}

/// Loss and exact gradient, written into `grad` (same layout as `p`).
/// `relu'(0) = 0`.
pub fn mse_loss_and_grad_into(
    p: &MlpParams,
    xs: &[Vec3],
    ys: &[Vec3],
    grad: &mut MlpParams,
    ws: &mut Workspace,
) -> Result<f64, MlpError> {
    if xs.is_empty() {
        return Err(MlpError::EmptyBatch);
    }
    let h = p.hidden;
    grad.data.iter_mut().for_each(|g| *g = 0.0);
    let scale = 2.0 / (3 * xs.len()) as f64;
    let mut total = 0.0;
    let (r0, r1, r2) = p.w2_rows();
    let Workspace { z, a } = ws;
    for (x, y) in xs.iter().zip(ys) {
        let out = forward_into(p, x, z, a);
        let e = [out[0] - y[0], out[1] - y[1], out[2] - y[2]];
        total += e[0] * e[0] + e[1] * e[1] + e[2] * e[2];
        let g = [scale * e[0], scale * e[1], scale * e[2]];
        let (gw1, rest) = grad.data.split_at_mut(3 * h);
        let (gb1, rest) = rest.split_at_mut(h);
        let (gw2, gb2) = rest.split_at_mut(3 * h);
        let (g10, rest) = gw1.split_at_mut(h);
        let (g11, g12) = rest.split_at_mut(h);
        let (g20, rest) = gw2.split_at_mut(h);
        let (g21, g22) = rest.split_at_mut(h);
        let (z, a) = (&z[..h], &a[..h]);
        let (r0, r1, r2) = (&r0[..h], &r1[..h], &r2[..h]);
        for j in 0..h {
            let back = g[0] * r0[j] + g[1] * r1[j] + g[2] * r2[j];
            let d = if z[j] > 0.0 { back } else { 0.0 };
            g10[j] += d * x[0];
            g11[j] += d * x[1];
            g12[j] += d * x[2];
            gb1[j] += d;
            g20[j] += g[0] * a[j];
            g21[j] += g[1] * a[j];
            g22[j] += g[2] * a[j];
        }
        for o in 0..3 {
            gb2[o] += g[o];
        }
    }
    Ok(total / (3 * xs.len()) as f64)
}

pub fn mse_loss_and_grad(p: &MlpParams, xs: &[Vec3], ys: &[Vec3]) -> Result<(f64, MlpParams), MlpError> {
    let mut grad = MlpParams::zeros(p.hidden);
    let mut ws = Workspace::new(p.hidden);
    let loss = mse_loss_and_grad_into(p, xs, ys, &mut grad, &mut ws)?;
    Ok((loss, grad))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }

    /// Bias-corrected Adam step `t >= 1`, applied in place.
    pub fn step(&mut self, params: &mut MlpParams, grads: &MlpParams, cfg: &MlpTrainConfig, t: usize) {
        let (b1, b2) = (cfg.adam_beta1, cfg.adam_beta2);
        let c1 = 1.0 - b1.powi(t as i32);
        let c2 = 1.0 - b2.powi(t as i32);
        let (lr, eps) = (cfg.lr, cfg.adam_eps);
        for (((p, g), m), v) in params
            .data
            .iter_mut()
            .zip(&grads.data)
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
        }
    }
}

/// Pure form of [`AdamState::step`].
pub fn adam_update(
    params: &MlpParams,
    grads: &MlpParams,
    state: &AdamState,
    cfg: &MlpTrainConfig,
    step_index: usize,
) -> (MlpParams, AdamState) {
    assert!(step_index >= 1, "Adam steps are 1-based");
    let (mut p, mut s) = (params.clone(), state.clone());
    s.step(&mut p, grads, cfg, step_index);
    (p, s)
}

/// Sum of squares of every weight and bias.
pub fn weight_norm(p: &MlpParams) -> f64 {
    dot(&p.data, &p.data)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub params: MlpParams,
    /// Full-batch loss before each epoch's update.
    pub loss_trace: Vec<f64>,
    /// Loss at the final parameters.
    pub final_train_mse: f64,
}

/// Full-batch Adam from a seed; data and init seeds are derived from it.
pub fn train(map: &MapSpec, cfg: &MlpTrainConfig, seed: u64) -> Result<TrainOutcome, MlpError> {
    cfg.validate()?;
    map.validate()?;
    let data = generate_train_set(map, derive_seed(seed, &[1]));
    let params = init_params(cfg.hidden, derive_seed(seed, &[2]));
    train_on(&data, params, cfg)
}

fn train_on(data: &MlpDataset, mut params: MlpParams, cfg: &MlpTrainConfig) -> Result<TrainOutcome, MlpError> {
    let mut grad = MlpParams::zeros(cfg.hidden);
    let mut ws = Workspace::new(cfg.hidden);
    let mut adam = AdamState::new(params.data.len());
    let mut trace = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let loss = mse_loss_and_grad_into(&params, &data.x, &data.y, &mut grad, &mut ws)?;
        if !loss.is_finite() {
            return Err(MlpError::Diverged { epoch });
        }
        trace.push(loss);
        adam.step(&mut params, &grad, cfg, epoch);
    }
    let final_train_mse = mse(&params, &data.x, &data.y)?;
    if !final_train_mse.is_finite() {
        return Err(MlpError::Diverged { epoch: cfg.epochs });
    }
    Ok(TrainOutcome {
        params,
        loss_trace: trace,
        final_train_mse,
    })
}

/// Per-target-center test MSE, in [`TARGET_CENTERS`] order.
pub fn per_center_test_mse(p: &MlpParams, test: &MlpDataset) -> Result<[f64; 4], MlpError> {
    let mut out = [0.0; 4];
    for (c, slot) in out.iter_mut().enumerate() {
        let idx: Vec<usize> = (0..test.len()).filter(|&i| test.center[i] == c).collect();
        let xs: Vec<Vec3> = idx.iter().map(|&i| test.x[i]).collect();
        let ys: Vec<Vec3> = idx.iter().map(|&i| test.y[i]).collect();
        *slot = mse(p, &xs, &ys)?;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Scheme {
    Identity,
    Uniform,
    Permutation,
    Flipped,
    /// One trial per alpha.
    Interpolation { alphas: Vec<f64> },
}

impl Scheme {
    pub fn name(&self) -> &'static str {
        match self {
            Scheme::Identity => "identity",
            Scheme::Uniform => "uniform",
            Scheme::Permutation => "permutation",
            Scheme::Flipped => "flipped",
            Scheme::Interpolation { .. } => "interpolation",
        }
    }

    fn tag(&self) -> u64 {
        match self {
            Scheme::Identity => 1,
            Scheme::Uniform => 2,
            Scheme::Permutation => 3,
            Scheme::Flipped => 4,
            Scheme::Interpolation { .. } => 5,
        }
    }

    /// Map for trial `trial`, drawing any randomness from `rng`.
    pub fn draw_map(&self, trial: usize, rng: &mut LabRng) -> MapSpec {
        match self {
            Scheme::Identity => MapSpec::Identity,
            Scheme::Flipped => MapSpec::Flipped,
            Scheme::Uniform => {
                let mut r = [[0.0; 3]; 4];
                for v in r.iter_mut().flatten() {
                    *v = rng.gen_range(0.0..=2.0);
                }
                MapSpec::Uniform { r }
            }
            Scheme::Permutation => {
                let vertices: Vec<Vec3> = SOURCE_CENTERS.iter().chain(&TARGET_CENTERS).copied().collect();
                let mut r = [[0.0; 3]; 4];
                for (j, rj) in r.iter_mut().enumerate() {
                    let others: Vec<&Vec3> = vertices.iter().filter(|v| **v != TARGET_CENTERS[j]).collect();
                    *rj = *others[rng.gen_range(0..others.len())];
                }
                MapSpec::Permutation { r }
            }
            Scheme::Interpolation { alphas } => MapSpec::Interpolated { alpha: alphas[trial] },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpTrialRecord {
    pub scheme: String,
    pub trial: usize,
    pub run: usize,
    /// Set for the interpolation scheme.
    pub alpha: Option<f64>,
    pub final_train_mse: f64,
    pub weight_norm: f64,
    /// In [`TARGET_CENTERS`] order.
    pub test_mse: [f64; 4],
}

/// Train `runs` networks per trial and score them on a shared test set.
///
/// Each trial redraws the map; each run redraws data and initialization.
/// For the interpolation scheme every alpha is one trial and `trials` is
/// ignored.
pub fn run_scheme(
    scheme: &Scheme,
    trials: usize,
    runs: usize,
    cfg: &MlpTrainConfig,
    master_seed: u64,
) -> Result<Vec<MlpTrialRecord>, MlpError> {
    cfg.validate()?;
    let trials = match scheme {
        Scheme::Interpolation { alphas } => {
            if alphas.is_empty() {
                return Err(MlpError::Config("interpolation needs at least one alpha".into()));
            }
            alphas.len()
        }
        _ => trials,
    };
    if trials == 0 || runs == 0 {
        return Err(MlpError::Config("trials and runs must be at least 1".into()));
    }
    let test = generate_test_set(derive_seed(master_seed, &[0]));
    let maps: Vec<MapSpec> = (0..trials)
        .map(|t| scheme.draw_map(t, &mut rng_from(derive_seed(master_seed, &[scheme.tag(), t as u64]))))
        .collect();
    for m in &maps {
        m.validate()?;
    }
    let cells: Vec<(usize, usize)> = (0..trials).flat_map(|t| (0..runs).map(move |r| (t, r))).collect();
    let mut records = cells
        .par_iter()
        .map(|&(t, r)| {
            let seed = derive_seed(master_seed, &[scheme.tag(), t as u64, r as u64]);
            let out = train(&maps[t], cfg, seed)?;
            Ok(MlpTrialRecord {
                scheme: scheme.name().to_string(),
                trial: t,
                run: r,
                alpha: match maps[t] {
                    MapSpec::Interpolated { alpha } => Some(alpha),
                    _ => None,
                },
                final_train_mse: out.final_train_mse,
                weight_norm: weight_norm(&out.params),
                test_mse: per_center_test_mse(&out.params, &test)?,
            })
        })
        .collect::<Result<Vec<_>, MlpError>>()?;
    records.sort_by_key(|r| (r.trial, r.run));
    Ok(records)
}

pub fn records_csv(records: &[MlpTrialRecord]) -> String {
    let mut out = String::from(
        "scheme,trial,run,final_train_mse,weight_norm,test_mse_110,test_mse_101,test_mse_011,test_mse_111\n",
    );
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.scheme,
            r.trial,
            r.run,
            fmt_f64(r.final_train_mse),
            fmt_f64(r.weight_norm),
            r.test_mse.map(fmt_f64).join(",")
        ));
    }
    out
}

fn mean(xs: impl IntoIterator<Item = f64>) -> f64 {
    let (s, c) = xs.into_iter().fold((0.0, 0usize), |(s, c), x| (s + x, c + 1));
    s / c as f64
}

/// Mean weight norm of each trial, in trial order.
pub fn trial_mean_norms(records: &[MlpTrialRecord]) -> Vec<f64> {
    let trials = records.iter().map(|r| r.trial).max().map_or(0, |t| t + 1);
    (0..trials)
        .map(|t| mean(records.iter().filter(|r| r.trial == t).map(|r| r.weight_norm)))
        .collect()
}

pub fn summary_json(records: &[MlpTrialRecord]) -> serde_json::Value {
    let test: serde_json::Map<String, serde_json::Value> = TARGET_LABELS
        .iter()
        .enumerate()
        .map(|(c, name)| (name.to_string(), json!(mean(records.iter().map(|r| r.test_mse[c])))))
        .collect();
    let alphas: Vec<f64> = {
        let mut seen: Vec<(usize, f64)> = records.iter().filter_map(|r| r.alpha.map(|a| (r.trial, a))).collect();
        seen.dedup_by_key(|p| p.0);
        seen.into_iter().map(|p| p.1).collect()
    };
    json!({
        "scheme": records.first().map(|r| r.scheme.clone()),
        "records": records.len(),
        "mean_weight_norm": mean(records.iter().map(|r| r.weight_norm)),
        "trial_mean_weight_norms": trial_mean_norms(records),
        "mean_final_train_mse": mean(records.iter().map(|r| r.final_train_mse)),
        "max_final_train_mse": records.iter().map(|r| r.final_train_mse).fold(0.0, f64::max),
        "mean_test_mse": test,
        "alpha_list": alphas,
    })
}
