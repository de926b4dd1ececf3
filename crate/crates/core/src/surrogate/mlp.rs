//! Multilayer perceptron with hand-rolled reverse-mode differentiation:
//! tanh hidden layers, identity output, mini-batch training with adaptive
//! moment estimation, and exact gradients with respect to the inputs for
//! the designer.

use super::{metrics, Metrics, Predictor, Standardizer};
use crate::error::{Error, Result};
use crate::seeding::stream_rng;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    /// `[input, hidden..., 1]`.
    layer_sizes: Vec<usize>,
    /// Per layer, row-major `out x in`.
    weights: Vec<Vec<f64>>,
    /// Per layer, length `out`.
    biases: Vec<Vec<f64>>,
    standardizer: Standardizer,
}

impl MlpModel {
    /// Glorot-uniform initialization, biases at zero, deterministic under
    /// `seed`.
    pub fn new_random(
        input_width: usize,
        hidden: &[usize],
        standardizer: Standardizer,
        seed: u64,
    ) -> Result<Self> {
        if input_width == 0 || hidden.iter().any(|&h| h == 0) {
            return Err(Error::ModelShape(
                "layer widths must all be positive".into(),
            ));
        }
        let mut layer_sizes = Vec::with_capacity(hidden.len() + 2);
        layer_sizes.push(input_width);
        layer_sizes.extend_from_slice(hidden);
        layer_sizes.push(1);

        let mut rng = stream_rng(seed, 0);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for w in layer_sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            weights.push(
                (0..fan_in * fan_out)
                    .map(|_| rng.gen_range(-limit..limit))
                    .collect(),
            );
            biases.push(vec![0.0; fan_out]);
        }
        Ok(MlpModel {
            layer_sizes,
            weights,
            biases,
            standardizer,
        })
    }

    /// Build from explicit parameters (shape-checked).
    pub fn from_parameters(
        layer_sizes: Vec<usize>,
        weights: Vec<Vec<f64>>,
        biases: Vec<Vec<f64>>,
        standardizer: Standardizer,
    ) -> Result<Self> {
        let model = MlpModel {
            layer_sizes,
            weights,
            biases,
            standardizer,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn n_parameters(&self) -> usize {
        self.weights.iter().map(Vec::len).sum::<usize>()
            + self.biases.iter().map(Vec::len).sum::<usize>()
    }

    pub fn validate(&self) -> Result<()> {
        let ls = &self.layer_sizes;
        if ls.len() < 2 || *ls.last().unwrap() != 1 || ls.iter().any(|&s| s == 0) {
            return Err(Error::ModelShape(format!("layer sizes {ls:?} invalid")));
        }
        if self.weights.len() != ls.len() - 1 || self.biases.len() != ls.len() - 1 {
            return Err(Error::ModelShape("layer count mismatch".into()));
        }
        for (l, w) in ls.windows(2).enumerate() {
            if self.weights[l].len() != w[0] * w[1] || self.biases[l].len() != w[1] {
                return Err(Error::ModelShape(format!("layer {l} dimensions mismatch")));
            }
        }
        let finite = self
            .weights
            .iter()
            .chain(&self.biases)
            .all(|v| v.iter().all(|p| p.is_finite()));
        if !finite {
            return Err(Error::ModelShape("non-finite parameter".into()));
        }
        Standardizer::new(self.standardizer.mean_c).map(|_| ())
    }

    fn n_layers(&self) -> usize {
        self.weights.len()
    }

    /// Forward pass in standardized space; `acts[l]` receives the layer-l
    /// activation (`acts[0]` = input). Returns the scalar output.
    fn forward_std(&self, z: &[f64], acts: &mut Vec<Vec<f64>>) -> f64 {
        acts.resize(self.n_layers() + 1, Vec::new());
        acts[0].clear();
        acts[0].extend_from_slice(z);
        for l in 0..self.n_layers() {
            let (in_dim, out_dim) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            let input = std::mem::take(&mut acts[l]);
            let mut out = std::mem::take(&mut acts[l + 1]);
            out.clear();
            let last = l == self.n_layers() - 1;
            for (row, &b) in self.weights[l].chunks_exact(in_dim).zip(&self.biases[l]) {
                let pre = row.iter().zip(&input).map(|(w, a)| w * a).sum::<f64>() + b;
                out.push(if last { pre } else { pre.tanh() });
            }
            debug_assert_eq!(out.len(), out_dim);
            acts[l] = input;
            acts[l + 1] = out;
        }
        acts[self.n_layers()][0]
    }

    /// Backward pass from a seed gradient on the output; accumulates into
    /// `grads` when given and returns the gradient with respect to the
    /// standardized input.
    fn backward(
        &self,
        acts: &[Vec<f64>],
        d_out: f64,
        mut grads: Option<&mut ParamGrads>,
    ) -> Vec<f64> {
        let mut delta = vec![d_out];
        for l in (0..self.n_layers()).rev() {
            let in_dim = self.layer_sizes[l];
            if let Some(g) = grads.as_deref_mut() {
                for (i, &d) in delta.iter().enumerate() {
                    let row = &mut g.w[l][i * in_dim..(i + 1) * in_dim];
                    for (gw, &a) in row.iter_mut().zip(&acts[l]) {
                        *gw += d * a;
                    }
                    g.b[l][i] += d;
                }
            }
            let mut prev = vec![0.0; in_dim];
            for (i, &d) in delta.iter().enumerate() {
                let row = &self.weights[l][i * in_dim..(i + 1) * in_dim];
                for (p, &w) in prev.iter_mut().zip(row) {
                    *p += w * d;
                }
            }
            if l > 0 {
                // acts[l] holds tanh outputs; tanh' = 1 - tanh^2.
                for (p, &a) in prev.iter_mut().zip(&acts[l]) {
                    *p *= 1.0 - a * a;
                }
            }
            delta = prev;
        }
        delta
    }
}

impl Predictor for MlpModel {
    fn input_width(&self) -> usize {
        self.layer_sizes[0]
    }

    fn predict(&self, c: &[f64]) -> Result<f64> {
        if c.len() != self.input_width() {
            return Err(Error::ModelShape(format!(
                "input width {} does not match model width {}",
                c.len(),
                self.input_width()
            )));
        }
        let z = self.standardizer.apply(c);
        let mut acts = Vec::new();
        Ok(self.forward_std(&z, &mut acts))
    }

    fn input_gradient(&self, c: &[f64]) -> Result<Vec<f64>> {
        if c.len() != self.input_width() {
            return Err(Error::ModelShape(format!(
                "input width {} does not match model width {}",
                c.len(),
                self.input_width()
            )));
        }
        let z = self.standardizer.apply(c);
        let mut acts = Vec::new();
        self.forward_std(&z, &mut acts);
        let grad_z = self.backward(&acts, 1.0, None);
        let scale = self.standardizer.input_scale();
        Ok(grad_z.into_iter().map(|g| g * scale).collect())
    }
}

/// Parameter-shaped gradient accumulator.
struct ParamGrads {
    w: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
}

impl ParamGrads {
    fn zeros_like(model: &MlpModel) -> Self {
        ParamGrads {
            w: model.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            b: model.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    fn clear(&mut self) {
        for v in self.w.iter_mut().chain(self.b.iter_mut()) {
            v.iter_mut().for_each(|x| *x = 0.0);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Optimizer {
    /// Adaptive per-parameter moment estimation.
    Adam { beta1: f64, beta2: f64, epsilon: f64 },
    /// Plain gradient descent at a fixed rate.
    Sgd,
}

impl Default for Optimizer {
    fn default() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Per-epoch learning-rate schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LrSchedule {
    /// Base rate for every epoch.
    #[default]
    Constant,
    /// Half-cosine anneal from the base rate down to 1% of it across the
    /// run; squeezes the last factor of a few out of a fixed epoch budget.
    Cosine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    #[serde(default)]
    pub schedule: LrSchedule,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 400,
            batch_size: 64,
            learning_rate: 1e-3,
            optimizer: Optimizer::default(),
            schedule: LrSchedule::default(),
            seed: 0,
        }
    }
}

/// One row of the training log (`epoch 0` is the initialization).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainLogRow {
    pub epoch: usize,
    pub train_mse: f64,
    pub val_mse: f64,
}

pub struct TrainOutcome {
    /// Best-validation checkpoint over the run.
    pub model: MlpModel,
    pub log: Vec<TrainLogRow>,
    pub train_metrics: Metrics,
    pub val_metrics: Metrics,
}

/// Train an MLP with `hidden` layer widths on (x, y), checkpointing on the
/// validation set. Deterministic for a fixed config and seed.
pub fn mlp_train(
    standardizer: &Standardizer,
    x: &[Vec<f64>],
    y: &[f64],
    x_val: &[Vec<f64>],
    y_val: &[f64],
    hidden: &[usize],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    if x.is_empty() || x.len() != y.len() || x_val.is_empty() || x_val.len() != y_val.len() {
        return Err(Error::InvalidParameter(
            "training and validation sets must be nonempty and label-matched".into(),
        ));
    }
    let width = x[0].len();
    if x.iter().chain(x_val).any(|r| r.len() != width) {
        return Err(Error::InvalidParameter("ragged inputs".into()));
    }
    if cfg.batch_size == 0 {
        return Err(Error::InvalidParameter("batch_size must be >= 1".into()));
    }
    if !(cfg.learning_rate.is_finite() && cfg.learning_rate > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "learning_rate must be finite and > 0, got {}",
            cfg.learning_rate
        )));
    }

    let mut model = MlpModel::new_random(width, hidden, *standardizer, cfg.seed)?;
    let zx: Vec<Vec<f64>> = x.iter().map(|r| standardizer.apply(r)).collect();
    let zv: Vec<Vec<f64>> = x_val.iter().map(|r| standardizer.apply(r)).collect();

    let mut acts: Vec<Vec<f64>> = Vec::new();
    let eval = |m: &MlpModel, acts: &mut Vec<Vec<f64>>, zs: &[Vec<f64>], ys: &[f64]| -> f64 {
        let mut sum = 0.0;
        for (z, &t) in zs.iter().zip(ys) {
            let p = m.forward_std(z, acts);
            sum += (p - t) * (p - t);
        }
        sum / zs.len() as f64
    };

    let mut log = Vec::with_capacity(cfg.epochs + 1);
    let train0 = eval(&model, &mut acts, &zx, y);
    let val0 = eval(&model, &mut acts, &zv, y_val);
    log.push(TrainLogRow {
        epoch: 0,
        train_mse: train0,
        val_mse: val0,
    });
    let mut best = model.clone();
    let mut best_val = val0;

    let mut grads = ParamGrads::zeros_like(&model);
    let mut adam_m = ParamGrads::zeros_like(&model);
    let mut adam_v = ParamGrads::zeros_like(&model);
    let mut step_count = 0u64;
    let mut order: Vec<usize> = (0..x.len()).collect();
    let mut rng = stream_rng(cfg.seed, 1);
    let batch = cfg.batch_size.min(x.len());

    for epoch in 1..=cfg.epochs {
        let lr = epoch_rate(cfg, epoch);
        for i in (1..order.len()).rev() {
            let j = rng.gen_range(0..=i);
            order.swap(i, j);
        }
        for chunk in order.chunks(batch) {
            grads.clear();
            let scale = 2.0 / chunk.len() as f64;
            for &idx in chunk {
                let p = model.forward_std(&zx[idx], &mut acts);
                model.backward(&acts, scale * (p - y[idx]), Some(&mut grads));
            }
            step_count += 1;
            apply_step(
                &mut model, &grads, &mut adam_m, &mut adam_v, step_count, lr, cfg,
            );
        }

        let train_mse = eval(&model, &mut acts, &zx, y);
        let val_mse = eval(&model, &mut acts, &zv, y_val);
        if !train_mse.is_finite() || !val_mse.is_finite() {
            return Err(Error::TrainingDiverged {
                epoch,
                learning_rate: cfg.learning_rate,
            });
        }
        log.push(TrainLogRow {
            epoch,
            train_mse,
            val_mse,
        });
        if val_mse < best_val {
            best_val = val_mse;
            best = model.clone();
        }
    }

    let predict_all = |m: &MlpModel, zs: &[Vec<f64>]| -> Vec<f64> {
        let mut a = Vec::new();
        zs.iter().map(|z| m.forward_std(z, &mut a)).collect()
    };
    let train_metrics = metrics(y, &predict_all(&best, &zx))?;
    let val_metrics = metrics(y_val, &predict_all(&best, &zv))?;
    Ok(TrainOutcome {
        model: best,
        log,
        train_metrics,
        val_metrics,
    })
}

/// Learning rate for a 1-based epoch index under the configured schedule.
fn epoch_rate(cfg: &TrainConfig, epoch: usize) -> f64 {
    match cfg.schedule {
        LrSchedule::Constant => cfg.learning_rate,
        LrSchedule::Cosine => {
            if cfg.epochs <= 1 {
                return cfg.learning_rate;
            }
            let floor = 0.01 * cfg.learning_rate;
            let t = (epoch - 1) as f64 / (cfg.epochs - 1) as f64;
            floor + 0.5 * (cfg.learning_rate - floor) * (1.0 + (std::f64::consts::PI * t).cos())
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn apply_step(
    model: &mut MlpModel,
    grads: &ParamGrads,
    m1: &mut ParamGrads,
    m2: &mut ParamGrads,
    t: u64,
    lr: f64,
    cfg: &TrainConfig,
) {
    match cfg.optimizer {
        Optimizer::Sgd => {
            for l in 0..model.weights.len() {
                for (p, &g) in model.weights[l].iter_mut().zip(&grads.w[l]) {
                    *p -= lr * g;
                }
                for (p, &g) in model.biases[l].iter_mut().zip(&grads.b[l]) {
                    *p -= lr * g;
                }
            }
        }
        Optimizer::Adam {
            beta1,
            beta2,
            epsilon,
        } => {
            let bc1 = 1.0 - beta1.powi(t as i32);
            let bc2 = 1.0 - beta2.powi(t as i32);
            let update = |p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
                for i in 0..p.len() {
                    m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                    v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                    let mhat = m[i] / bc1;
                    let vhat = v[i] / bc2;
                    p[i] -= lr * mhat / (vhat.sqrt() + epsilon);
                }
            };
            for l in 0..model.weights.len() {
                update(
                    &mut model.weights[l],
                    &grads.w[l],
                    &mut m1.w[l],
                    &mut m2.w[l],
                );
                update(
                    &mut model.biases[l],
                    &grads.b[l],
                    &mut m1.b[l],
                    &mut m2.b[l],
                );
            }
        }
    }
}

/// Write the training log as CSV (`epoch,train_mse,val_mse`).
pub fn write_train_log<W: std::io::Write>(log: &[TrainLogRow], mut w: W) -> std::io::Result<()> {
    writeln!(w, "epoch,train_mse,val_mse")?;
    for row in log {
        writeln!(w, "{},{},{}", row.epoch, row.train_mse, row.val_mse)?;
    }
    Ok(())
}
