//! Plain ReLU multilayer perceptrons `R^{d_H} -> R^{d_Y}` with a clamp
//! domain, reverse-mode gradients, deterministic minibatch training, and
//! the closed-form architecture sizing bounds.
//!
//! The network is the textbook affine-ReLU chain with a linear last layer,
//! extended by one domain rule: inputs outside the box `[-M, M]^{d_H}` map
//! to the zero vector (and contribute zero gradient), with `M = R/sqrt(d_H)`
//! chosen so the box contains every admissible encoded input. The ReLU
//! subgradient at 0 is fixed to 0; together with seeded ChaCha streams for
//! initialization and shuffling this makes training bit-reproducible.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fs;
use std::io;
use std::path::Path;
use thiserror::Error;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum MlpError {
    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("data shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("training loss became non-finite at epoch {epoch}, step {step}")]
    Diverged { epoch: usize, step: usize },
    #[error("parameter bound {required:.6e} exceeds the budget of {budget} parameters")]
    BudgetExceeded { required: f64, budget: u64 },
    #[error("model i/o on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("model metadata error: {0}")]
    Meta(#[from] serde_json::Error),
    #[error("weights payload holds {got} values, architecture needs {expected}")]
    WeightCount { expected: usize, got: usize },
    #[error("unsupported model format version {got}, this build reads {expected}")]
    VersionMismatch { got: u32, expected: u32 },
}

/// Layer shape list plus the clamp half-width `M`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpArchitecture {
    pub input_dim: usize,
    pub output_dim: usize,
    /// Hidden layer widths; empty means a single affine layer.
    pub hidden: Vec<usize>,
    /// Clamp half-width; inputs outside `[-clamp, clamp]^input_dim` map to 0.
    pub clamp: f64,
}

impl MlpArchitecture {
    pub fn validate(&self) -> Result<(), MlpError> {
        if self.input_dim == 0 || self.output_dim == 0 {
            return Err(MlpError::InvalidArchitecture(
                "input and output dimensions must be positive".into(),
            ));
        }
        if self.hidden.contains(&0) {
            return Err(MlpError::InvalidArchitecture(
                "hidden widths must be positive".into(),
            ));
        }
        if !self.clamp.is_finite() || self.clamp < 0.0 {
            return Err(MlpError::InvalidArchitecture(
                "clamp bound must be nonnegative and finite".into(),
            ));
        }
        Ok(())
    }

    /// Widths of all activations: input, hidden layers, output.
    pub fn dims(&self) -> Vec<usize> {
        let mut dims = Vec::with_capacity(self.hidden.len() + 2);
        dims.push(self.input_dim);
        dims.extend_from_slice(&self.hidden);
        dims.push(self.output_dim);
        dims
    }

    /// Number of affine layers (the network depth `L`).
    pub fn depth(&self) -> usize {
        self.hidden.len() + 1
    }

    /// Exact count of trainable scalars.
    pub fn param_count(&self) -> usize {
        let dims = self.dims();
        dims.windows(2).map(|w| w[1] * w[0] + w[1]).sum()
    }
}

/// Weight matrices (row-major, `out x in`) and bias vectors per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub arch: MlpArchitecture,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl MlpParams {
    /// Glorot-uniform weights, zero biases, drawn from a seeded stream.
    pub fn init(arch: &MlpArchitecture, seed: u64) -> Result<MlpParams, MlpError> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dims = arch.dims();
        let mut weights = Vec::with_capacity(dims.len() - 1);
        let mut biases = Vec::with_capacity(dims.len() - 1);
        for pair in dims.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let w: Vec<f64> = (0..fan_in * fan_out)
                .map(|_| rng.random_range(-bound..=bound))
                .collect();
            weights.push(w);
            biases.push(vec![0.0; fan_out]);
        }
        Ok(MlpParams {
            arch: arch.clone(),
            weights,
            biases,
        })
    }

    pub fn zeros(arch: &MlpArchitecture) -> Result<MlpParams, MlpError> {
        arch.validate()?;
        let dims = arch.dims();
        Ok(MlpParams {
            arch: arch.clone(),
            weights: dims.windows(2).map(|p| vec![0.0; p[1] * p[0]]).collect(),
            biases: dims.windows(2).map(|p| vec![0.0; p[1]]).collect(),
        })
    }

    fn input_clamped(&self, a: &[f64]) -> bool {
        a.iter().any(|&v| v.abs() > self.arch.clamp)
    }

    /// Network output; zero vector outside the clamp box.
    pub fn forward(&self, a: &[f64]) -> Vec<f64> {
        assert_eq!(a.len(), self.arch.input_dim, "input width mismatch");
        if self.input_clamped(a) {
            return vec![0.0; self.arch.output_dim];
        }
        let n_layers = self.weights.len();
        let mut h = a.to_vec();
        for l in 0..n_layers {
            let mut z = affine(&self.weights[l], &self.biases[l], &h);
            if l + 1 < n_layers {
                for v in &mut z {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
            }
            h = z;
        }
        h
    }

    /// Forward pass retaining every activation, for backprop. Returns
    /// `None` when the input is clamped (constant zero output).
    fn forward_trace(&self, a: &[f64]) -> Option<Vec<Vec<f64>>> {
        if self.input_clamped(a) {
            return None;
        }
        let n_layers = self.weights.len();
        let mut acts = Vec::with_capacity(n_layers + 1);
        acts.push(a.to_vec());
        for l in 0..n_layers {
            let mut z = affine(&self.weights[l], &self.biases[l], acts.last().unwrap());
            if l + 1 < n_layers {
                for v in &mut z {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
            }
            acts.push(z);
        }
        Some(acts)
    }
}

fn affine(weight: &[f64], bias: &[f64], input: &[f64]) -> Vec<f64> {
    let out_dim = bias.len();
    let in_dim = input.len();
    debug_assert_eq!(weight.len(), out_dim * in_dim);
    let mut out = bias.to_vec();
    for r in 0..out_dim {
        let row = &weight[r * in_dim..(r + 1) * in_dim];
        let mut acc = 0.0;
        for (w, x) in row.iter().zip(input) {
            acc += w * x;
        }
        out[r] += acc;
    }
    out
}

/// Parameter-shaped gradient accumulator.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl Gradients {
    fn zeros_like(params: &MlpParams) -> Gradients {
        Gradients {
            weights: params.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            biases: params.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    fn scale(&mut self, s: f64) {
        for w in &mut self.weights {
            for v in w {
                *v *= s;
            }
        }
        for b in &mut self.biases {
            for v in b {
                *v *= s;
            }
        }
    }

    /// Zero every layer's gradient except the last affine layer's.
    fn freeze_hidden(&mut self) {
        let last = self.weights.len() - 1;
        for l in 0..last {
            self.weights[l].iter_mut().for_each(|v| *v = 0.0);
            self.biases[l].iter_mut().for_each(|v| *v = 0.0);
        }
    }
}

fn check_batch(params: &MlpParams, inputs: &[f64], targets: &[f64]) -> Result<usize, MlpError> {
    let d_in = params.arch.input_dim;
    let d_out = params.arch.output_dim;
    if d_in == 0 || !inputs.len().is_multiple_of(d_in) {
        return Err(MlpError::ShapeMismatch(format!(
            "input buffer of {} values is not a multiple of input dim {d_in}",
            inputs.len()
        )));
    }
    let n = inputs.len() / d_in;
    if targets.len() != n * d_out {
        return Err(MlpError::ShapeMismatch(format!(
            "target buffer holds {} values, expected {n} rows x {d_out}",
            targets.len()
        )));
    }
    if n == 0 {
        return Err(MlpError::ShapeMismatch("batch must be nonempty".into()));
    }
    Ok(n)
}

/// Mean over the batch of the squared Euclidean output error.
pub fn loss(params: &MlpParams, inputs: &[f64], targets: &[f64]) -> f64 {
    let n = check_batch(params, inputs, targets).expect("batch shapes must match architecture");
    let d_in = params.arch.input_dim;
    let d_out = params.arch.output_dim;
    let mut total = 0.0;
    for i in 0..n {
        let out = params.forward(&inputs[i * d_in..(i + 1) * d_in]);
        let target = &targets[i * d_out..(i + 1) * d_out];
        total += out
            .iter()
            .zip(target)
            .map(|(o, t)| (o - t) * (o - t))
            .sum::<f64>();
    }
    total / n as f64
}

/// Add one sample's gradient of the sum-squared error (no 1/n factor).
fn backprop_sample(params: &MlpParams, g: &mut Gradients, x: &[f64], y: &[f64]) {
    let Some(acts) = params.forward_trace(x) else {
        return; // clamped input: constant zero output, zero gradient
    };
    let n_layers = params.weights.len();
    let out = acts.last().unwrap();
    let mut delta: Vec<f64> = out.iter().zip(y).map(|(o, t)| 2.0 * (o - t)).collect();
    for l in (0..n_layers).rev() {
        let input = &acts[l];
        let in_dim = input.len();
        for (r, &d) in delta.iter().enumerate() {
            let row = &mut g.weights[l][r * in_dim..(r + 1) * in_dim];
            for (gw, &h) in row.iter_mut().zip(input) {
                *gw += d * h;
            }
            g.biases[l][r] += d;
        }
        if l == 0 {
            break;
        }
        // Propagate through W_l and the ReLU that produced acts[l].
        // acts[l] stores post-ReLU values, so "active" means value > 0;
        // the subgradient at exactly 0 is taken as 0.
        let w = &params.weights[l];
        let mut prev = vec![0.0; in_dim];
        for (c, p) in prev.iter_mut().enumerate() {
            if input[c] > 0.0 {
                let mut acc = 0.0;
                for (r, &d) in delta.iter().enumerate() {
                    acc += d * w[r * in_dim + c];
                }
                *p = acc;
            }
        }
        delta = prev;
    }
}

/// Exact reverse-mode gradient of [`loss`].
pub fn grad(params: &MlpParams, inputs: &[f64], targets: &[f64]) -> Result<Gradients, MlpError> {
    let n = check_batch(params, inputs, targets)?;
    let d_in = params.arch.input_dim;
    let d_out = params.arch.output_dim;
    let mut g = Gradients::zeros_like(params);
    for i in 0..n {
        backprop_sample(
            params,
            &mut g,
            &inputs[i * d_in..(i + 1) * d_in],
            &targets[i * d_out..(i + 1) * d_out],
        );
    }
    g.scale(1.0 / n as f64);
    Ok(g)
}

/// Gradient over fixed-size sample chunks combined by a pairwise tree.
///
/// The chunking and the reduction tree are functions of `(n, chunk_size)`
/// alone, so the result is bitwise identical whether chunks are evaluated
/// in parallel or sequentially; a test pins that contract.
pub fn grad_chunked(
    params: &MlpParams,
    inputs: &[f64],
    targets: &[f64],
    chunk_size: usize,
    parallel: bool,
) -> Result<Gradients, MlpError> {
    let n = check_batch(params, inputs, targets)?;
    if chunk_size == 0 {
        return Err(MlpError::InvalidConfig("chunk size must be positive".into()));
    }
    let d_in = params.arch.input_dim;
    let d_out = params.arch.output_dim;
    let ranges: Vec<(usize, usize)> = (0..n)
        .step_by(chunk_size)
        .map(|lo| (lo, (lo + chunk_size).min(n)))
        .collect();
    let chunk_grad = |&(lo, hi): &(usize, usize)| -> Gradients {
        let mut g = Gradients::zeros_like(params);
        for i in lo..hi {
            backprop_sample(
                params,
                &mut g,
                &inputs[i * d_in..(i + 1) * d_in],
                &targets[i * d_out..(i + 1) * d_out],
            );
        }
        g
    };

    #[cfg(feature = "parallel")]
    let mut partials: Vec<Gradients> = if parallel {
        ranges.par_iter().map(chunk_grad).collect()
    } else {
        ranges.iter().map(chunk_grad).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let mut partials: Vec<Gradients> = {
        let _ = parallel;
        ranges.iter().map(chunk_grad).collect()
    };

    // Pairwise tree reduction in index order.
    while partials.len() > 1 {
        let mut next = Vec::with_capacity(partials.len().div_ceil(2));
        let mut iter = partials.into_iter();
        while let Some(mut left) = iter.next() {
            if let Some(right) = iter.next() {
                left.add_assign(&right);
            }
            next.push(left);
        }
        partials = next;
    }
    let mut total = partials.pop().unwrap();
    total.scale(1.0 / n as f64);
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Optimizer {
    Sgd,
    Momentum { beta: f64 },
    Adam { beta1: f64, beta2: f64, epsilon: f64 },
}

impl Optimizer {
    pub fn momentum() -> Optimizer {
        Optimizer::Momentum { beta: 0.9 }
    }

    pub fn adam() -> Optimizer {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    pub seed: u64,
    /// Fraction of records held out for validation, in [0, 0.5].
    pub validation_fraction: f64,
    /// Stop after this many epochs without validation improvement.
    pub patience: Option<usize>,
    /// Update only the last affine layer.
    pub freeze_hidden: bool,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), MlpError> {
        if self.epochs == 0 {
            return Err(MlpError::InvalidConfig("epoch count must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(MlpError::InvalidConfig("batch size must be positive".into()));
        }
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return Err(MlpError::InvalidConfig(
                "learning rate must be positive and finite".into(),
            ));
        }
        if !(0.0..=0.5).contains(&self.validation_fraction) {
            return Err(MlpError::InvalidConfig(
                "validation fraction must lie in [0, 0.5]".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainHistory {
    pub train_loss: Vec<f64>,
    /// Empty when validation_fraction is 0.
    pub val_loss: Vec<f64>,
    /// Epoch (0-based) whose parameters were returned.
    pub best_epoch: usize,
    pub stopped_early: bool,
}

struct OptimizerState {
    step: u64,
    first: Gradients,
    second: Gradients,
}

fn update_params(
    params: &mut MlpParams,
    g: &Gradients,
    cfg: &TrainConfig,
    state: &mut OptimizerState,
) {
    state.step += 1;
    let lr = cfg.learning_rate;
    match cfg.optimizer {
        Optimizer::Sgd => {
            apply(params, g, |theta, g, _, _| *theta -= lr * g);
        }
        Optimizer::Momentum { beta } => {
            apply_with_state(params, g, &mut state.first, |theta, g, v| {
                *v = beta * *v + g;
                *theta -= lr * *v;
            });
        }
        Optimizer::Adam {
            beta1,
            beta2,
            epsilon,
        } => {
            let t = state.step as i32;
            let bc1 = 1.0 - beta1.powi(t);
            let bc2 = 1.0 - beta2.powi(t);
            apply_with_two_states(
                params,
                g,
                &mut state.first,
                &mut state.second,
                |theta, g, m, v| {
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    let m_hat = *m / bc1;
                    let v_hat = *v / bc2;
                    *theta -= lr * m_hat / (v_hat.sqrt() + epsilon);
                },
            );
        }
    }
}

fn apply<F: FnMut(&mut f64, f64, usize, usize)>(params: &mut MlpParams, g: &Gradients, mut f: F) {
    for l in 0..params.weights.len() {
        for (i, theta) in params.weights[l].iter_mut().enumerate() {
            f(theta, g.weights[l][i], l, i);
        }
        for (i, theta) in params.biases[l].iter_mut().enumerate() {
            f(theta, g.biases[l][i], l, i);
        }
    }
}

fn apply_with_state<F: FnMut(&mut f64, f64, &mut f64)>(
    params: &mut MlpParams,
    g: &Gradients,
    s: &mut Gradients,
    mut f: F,
) {
    for l in 0..params.weights.len() {
        for i in 0..params.weights[l].len() {
            f(&mut params.weights[l][i], g.weights[l][i], &mut s.weights[l][i]);
        }
        for i in 0..params.biases[l].len() {
            f(&mut params.biases[l][i], g.biases[l][i], &mut s.biases[l][i]);
        }
    }
}

fn apply_with_two_states<F: FnMut(&mut f64, f64, &mut f64, &mut f64)>(
    params: &mut MlpParams,
    g: &Gradients,
    s1: &mut Gradients,
    s2: &mut Gradients,
    mut f: F,
) {
    for l in 0..params.weights.len() {
        for i in 0..params.weights[l].len() {
            f(
                &mut params.weights[l][i],
                g.weights[l][i],
                &mut s1.weights[l][i],
                &mut s2.weights[l][i],
            );
        }
        for i in 0..params.biases[l].len() {
            f(
                &mut params.biases[l][i],
                g.biases[l][i],
                &mut s1.biases[l][i],
                &mut s2.biases[l][i],
            );
        }
    }
}

/// In-place Fisher-Yates driven by the training stream; hand-rolled so the
/// byte-determinism contract does not depend on rand's shuffle internals.
fn shuffle<T>(items: &mut [T], rng: &mut ChaCha8Rng) {
    for i in (1..items.len()).rev() {
        let j = rng.random_range(0..=i);
        items.swap(i, j);
    }
}

fn gather(rows: &[usize], data: &[f64], width: usize, out: &mut Vec<f64>) {
    out.clear();
    for &r in rows {
        out.extend_from_slice(&data[r * width..(r + 1) * width]);
    }
}

/// Minibatch training with a held-out validation split and early stopping.
/// Returns the best-validation parameters (best-train when there is no
/// split) and the per-epoch loss history.
pub fn train(
    inputs: &[f64],
    targets: &[f64],
    arch: &MlpArchitecture,
    cfg: &TrainConfig,
) -> Result<(MlpParams, TrainHistory), MlpError> {
    cfg.validate()?;
    let mut params = MlpParams::init(arch, cfg.seed)?;
    let n = check_batch(&params, inputs, targets)?;
    let d_in = arch.input_dim;
    let d_out = arch.output_dim;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5DEE_CE66_D1CE_5EED);
    let mut order: Vec<usize> = (0..n).collect();
    shuffle(&mut order, &mut rng);
    let n_val = ((n as f64) * cfg.validation_fraction).floor() as usize;
    let (val_rows, train_rows) = order.split_at(n_val);
    let val_rows = val_rows.to_vec();
    let mut train_order = train_rows.to_vec();
    if train_order.is_empty() {
        return Err(MlpError::InvalidConfig(
            "validation split leaves no training rows".into(),
        ));
    }

    let mut val_inputs = Vec::new();
    let mut val_targets = Vec::new();
    gather(&val_rows, inputs, d_in, &mut val_inputs);
    gather(&val_rows, targets, d_out, &mut val_targets);
    let mut train_inputs = Vec::new();
    let mut train_targets = Vec::new();

    let mut state = OptimizerState {
        step: 0,
        first: Gradients::zeros_like(&params),
        second: Gradients::zeros_like(&params),
    };

    let mut history = TrainHistory {
        train_loss: Vec::with_capacity(cfg.epochs),
        val_loss: Vec::with_capacity(if n_val > 0 { cfg.epochs } else { 0 }),
        best_epoch: 0,
        stopped_early: false,
    };
    let mut best_params = params.clone();
    let mut best_score = f64::INFINITY;
    let mut epochs_since_best = 0usize;
    let mut batch_in = Vec::new();
    let mut batch_tg = Vec::new();

    for epoch in 0..cfg.epochs {
        shuffle(&mut train_order, &mut rng);
        for (step_in_epoch, batch_rows) in train_order.chunks(cfg.batch_size).enumerate() {
            gather(batch_rows, inputs, d_in, &mut batch_in);
            gather(batch_rows, targets, d_out, &mut batch_tg);
            let mut g = grad(&params, &batch_in, &batch_tg)?;
            if cfg.freeze_hidden {
                g.freeze_hidden();
            }
            update_params(&mut params, &g, cfg, &mut state);
            if params
                .weights
                .iter()
                .chain(&params.biases)
                .any(|layer| layer.iter().any(|v| !v.is_finite()))
            {
                return Err(MlpError::Diverged {
                    epoch,
                    step: step_in_epoch,
                });
            }
        }

        gather(&train_order, inputs, d_in, &mut train_inputs);
        gather(&train_order, targets, d_out, &mut train_targets);
        let train_loss = loss(&params, &train_inputs, &train_targets);
        if !train_loss.is_finite() {
            return Err(MlpError::Diverged { epoch, step: 0 });
        }
        history.train_loss.push(train_loss);

        let score = if n_val > 0 {
            let val_loss = loss(&params, &val_inputs, &val_targets);
            history.val_loss.push(val_loss);
            val_loss
        } else {
            train_loss
        };

        if score < best_score {
            best_score = score;
            best_params = params.clone();
            history.best_epoch = epoch;
            epochs_since_best = 0;
        } else {
            epochs_since_best += 1;
            if let Some(patience) = cfg.patience {
                if epochs_since_best > patience {
                    history.stopped_early = true;
                    break;
                }
            }
        }
    }

    Ok((best_params, history))
}

/// Depth and parameter bounds for a target sup-accuracy `delta`, plus a
/// uniform hidden width realizing the parameter budget at that depth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SizeEstimate {
    pub depth: usize,
    pub params: u64,
    pub hidden_width: usize,
}

/// Evaluate the architecture-sizing bounds
/// `L <= c*(ln(R*sqrt(d_y)/(delta*sqrt(d_h))) + 1)` and
/// `r <= c*(delta*sqrt(d_h)/(2R))^(-d_h)*(ln(...) + 1)`, ceiled to integers
/// (natural logarithm). `budget` caps the admissible parameter count.
pub fn size_for_accuracy(
    delta: f64,
    d_h: usize,
    d_y: usize,
    radius: f64,
    c: f64,
    budget: Option<u64>,
) -> Result<SizeEstimate, MlpError> {
    let positive = |v: f64| v.is_finite() && v > 0.0;
    if !positive(delta) || !positive(c) || !positive(radius) || d_h == 0 || d_y == 0 {
        return Err(MlpError::InvalidConfig(
            "size_for_accuracy needs positive finite delta, c, radius and nonzero dimensions"
                .into(),
        ));
    }
    let scale = radius * (d_y as f64).sqrt() / (delta * (d_h as f64).sqrt());
    let bracket = scale.ln() + 1.0;
    let depth = (c * bracket).ceil().max(1.0) as usize;
    let pow_term = (delta * (d_h as f64).sqrt() / (2.0 * radius)).powi(-(d_h as i32));
    let params_real = (c * pow_term * bracket).max(1.0);
    let cap = budget.unwrap_or(u64::MAX / 2);
    if !params_real.is_finite() || params_real.ceil() > cap as f64 {
        return Err(MlpError::BudgetExceeded {
            required: params_real,
            budget: cap,
        });
    }
    let params = params_real.ceil() as u64;
    Ok(SizeEstimate {
        depth,
        params,
        hidden_width: width_for_budget(d_h, d_y, depth, params),
    })
}

/// Largest uniform hidden width whose parameter count stays within `budget`
/// at the given depth; at least 1 for any depth that has hidden layers.
fn width_for_budget(d_h: usize, d_y: usize, depth: usize, budget: u64) -> usize {
    if depth == 1 {
        return 0; // single affine layer has no hidden width
    }
    let count = |w: u64| -> u64 {
        let (d_h, d_y, depth) = (d_h as u64, d_y as u64, depth as u64);
        w * (d_h + 1) + (depth - 2) * w * (w + 1) + d_y * (w + 1)
    };
    let mut lo = 1u64; // maximal w with count(w) <= budget, or 1
    let mut hi = 1u64 << 20;
    if count(lo) > budget {
        return 1;
    }
    while count(hi) <= budget {
        hi <<= 4;
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if count(mid) <= budget {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo as usize
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelMeta {
    pub version: u32,
    pub arch: MlpArchitecture,
    pub train: Option<TrainConfig>,
}

/// Write `model.json` plus `weights.f64` (per layer: row-major weight
/// matrix, then bias, little-endian doubles) into `dir`.
pub fn save_model(
    params: &MlpParams,
    train_cfg: Option<&TrainConfig>,
    dir: &Path,
) -> Result<(), MlpError> {
    let io_err = |path: &Path, source: io::Error| MlpError::Io {
        path: path.display().to_string(),
        source,
    };
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let meta = ModelMeta {
        version: MODEL_FORMAT_VERSION,
        arch: params.arch.clone(),
        train: train_cfg.copied(),
    };
    let meta_path = dir.join("model.json");
    let mut text = serde_json::to_string_pretty(&meta)?;
    text.push('\n');
    fs::write(&meta_path, text).map_err(|e| io_err(&meta_path, e))?;

    let mut flat = Vec::with_capacity(params.arch.param_count());
    for (w, b) in params.weights.iter().zip(&params.biases) {
        flat.extend_from_slice(w);
        flat.extend_from_slice(b);
    }
    let weights_path = dir.join("weights.f64");
    fs::write(&weights_path, crate::dataset::f64s_to_le_bytes(&flat))
        .map_err(|e| io_err(&weights_path, e))?;
    Ok(())
}

/// Read back a model written by [`save_model`].
pub fn load_model(dir: &Path) -> Result<(MlpParams, ModelMeta), MlpError> {
    let io_err = |path: &Path, source: io::Error| MlpError::Io {
        path: path.display().to_string(),
        source,
    };
    let meta_path = dir.join("model.json");
    let text = fs::read_to_string(&meta_path).map_err(|e| io_err(&meta_path, e))?;
    let meta: ModelMeta = serde_json::from_str(&text)?;
    if meta.version != MODEL_FORMAT_VERSION {
        return Err(MlpError::VersionMismatch {
            got: meta.version,
            expected: MODEL_FORMAT_VERSION,
        });
    }
    let weights_path = dir.join("weights.f64");
    let bytes = fs::read(&weights_path).map_err(|e| io_err(&weights_path, e))?;
    let flat = crate::dataset::le_bytes_to_f64s(&bytes);
    let expected = meta.arch.param_count();
    if flat.len() != expected {
        return Err(MlpError::WeightCount {
            expected,
            got: flat.len(),
        });
    }
    let mut params = MlpParams::zeros(&meta.arch)?;
    let mut cursor = 0;
    for l in 0..params.weights.len() {
        let wl = params.weights[l].len();
        params.weights[l].copy_from_slice(&flat[cursor..cursor + wl]);
        cursor += wl;
        let bl = params.biases[l].len();
        params.biases[l].copy_from_slice(&flat[cursor..cursor + bl]);
        cursor += bl;
    }
    Ok((params, meta))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_arch() -> MlpArchitecture {
        MlpArchitecture {
            input_dim: 3,
            output_dim: 2,
            hidden: vec![5, 4],
            clamp: 10.0,
        }
    }

    #[test]
    fn param_count_is_exact() {
        let arch = small_arch();
        // (5*3+5) + (4*5+4) + (2*4+2) = 20 + 24 + 10 = 54
        assert_eq!(arch.param_count(), 54);
        let affine_only = MlpArchitecture {
            input_dim: 4,
            output_dim: 3,
            hidden: vec![],
            clamp: 1.0,
        };
        assert_eq!(affine_only.param_count(), 15);
    }

    #[test]
    fn zero_params_give_zero_output() {
        let params = MlpParams::zeros(&small_arch()).unwrap();
        assert_eq!(params.forward(&[0.5, -0.5, 1.0]), vec![0.0, 0.0]);
    }

    #[test]
    fn clamped_input_maps_to_zero() {
        let arch = MlpArchitecture {
            input_dim: 3,
            output_dim: 2,
            hidden: vec![],
            clamp: 10.0,
        };
        let mut params = MlpParams::zeros(&arch).unwrap();
        params.biases[0] = vec![1.0, -2.0];
        let inside = params.forward(&[9.9, 0.0, 0.0]);
        assert_eq!(inside, vec![1.0, -2.0]);
        // The boundary belongs to the domain; beyond it the output is 0.
        assert_eq!(params.forward(&[10.0, -10.0, 10.0]), vec![1.0, -2.0]);
        assert_eq!(params.forward(&[10.1, 0.0, 0.0]), vec![0.0, 0.0]);
        assert_eq!(params.forward(&[0.0, -10.2, 0.0]), vec![0.0, 0.0]);
    }

    #[test]
    fn identity_single_layer_reproduces_nonnegative_input() {
        let arch = MlpArchitecture {
            input_dim: 3,
            output_dim: 3,
            hidden: vec![3],
            clamp: 100.0,
        };
        let mut params = MlpParams::zeros(&arch).unwrap();
        for i in 0..3 {
            params.weights[0][i * 3 + i] = 1.0;
            params.weights[1][i * 3 + i] = 1.0;
        }
        let x = [0.3, 0.0, 2.5];
        let y = params.forward(&x);
        for (a, b) in x.iter().zip(&y) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn loss_examples() {
        let arch = MlpArchitecture {
            input_dim: 2,
            output_dim: 1,
            hidden: vec![],
            clamp: 5.0,
        };
        let params = MlpParams::zeros(&arch).unwrap();
        // Zero network, unit targets: loss 1.
        let inputs = [0.1, 0.2, 0.3, 0.4];
        let targets = [1.0, 1.0];
        assert_eq!(loss(&params, &inputs, &targets), 1.0);
        // Permutation invariance.
        let swapped_inputs = [0.3, 0.4, 0.1, 0.2];
        let swapped_targets = [1.0, 1.0];
        assert_eq!(
            loss(&params, &inputs, &targets),
            loss(&params, &swapped_inputs, &swapped_targets)
        );
    }

    #[test]
    fn gradient_matches_central_differences() {
        let arch = small_arch();
        let params = MlpParams::init(&arch, 123).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 4;
        let inputs: Vec<f64> = (0..n * 3).map(|_| rng.random_range(-2.0..2.0)).collect();
        let targets: Vec<f64> = (0..n * 2).map(|_| rng.random_range(-1.0..1.0)).collect();
        let g = grad(&params, &inputs, &targets).unwrap();

        let h = 1e-6;
        let check = |l: usize, idx: usize, is_bias: bool, analytic: f64| {
            let mut plus = params.clone();
            let mut minus = params.clone();
            if is_bias {
                plus.biases[l][idx] += h;
                minus.biases[l][idx] -= h;
            } else {
                plus.weights[l][idx] += h;
                minus.weights[l][idx] -= h;
            }
            let fd = (loss(&plus, &inputs, &targets) - loss(&minus, &inputs, &targets)) / (2.0 * h);
            let denom = analytic.abs().max(fd.abs()).max(1e-8);
            assert!(
                (fd - analytic).abs() / denom < 1e-5,
                "layer {l} idx {idx} bias={is_bias}: fd {fd} vs analytic {analytic}"
            );
        };
        for l in 0..params.weights.len() {
            for idx in 0..params.weights[l].len() {
                check(l, idx, false, g.weights[l][idx]);
            }
            for idx in 0..params.biases[l].len() {
                check(l, idx, true, g.biases[l][idx]);
            }
        }
    }

    #[test]
    fn zero_loss_batch_has_zero_gradient() {
        let arch = MlpArchitecture {
            input_dim: 2,
            output_dim: 2,
            hidden: vec![],
            clamp: 5.0,
        };
        let params = MlpParams::zeros(&arch).unwrap();
        let inputs = [0.5, -0.5, 1.0, 2.0];
        let targets = [0.0, 0.0, 0.0, 0.0];
        let g = grad(&params, &inputs, &targets).unwrap();
        assert!(g.weights.iter().all(|w| w.iter().all(|&v| v == 0.0)));
        assert!(g.biases.iter().all(|b| b.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn dead_relu_units_receive_no_gradient() {
        let arch = MlpArchitecture {
            input_dim: 1,
            output_dim: 1,
            hidden: vec![2],
            clamp: 10.0,
        };
        let mut params = MlpParams::zeros(&arch).unwrap();
        // Unit 0 is dead on positive inputs (weight -1, bias 0), unit 1 alive.
        params.weights[0] = vec![-1.0, 1.0];
        params.weights[1] = vec![1.0, 1.0];
        let inputs = [1.0, 2.0];
        let targets = [5.0, 5.0];
        let g = grad(&params, &inputs, &targets).unwrap();
        assert_eq!(g.weights[0][0], 0.0, "dead unit's incoming weight");
        assert_eq!(g.biases[0][0], 0.0, "dead unit's bias");
        assert!(g.weights[0][1] != 0.0, "active unit still learns");
    }

    #[test]
    fn chunked_gradients_match_sequential_tree_bitwise() {
        let arch = small_arch();
        let params = MlpParams::init(&arch, 55).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 23; // deliberately not a multiple of the chunk size
        let inputs: Vec<f64> = (0..n * 3).map(|_| rng.random_range(-2.0..2.0)).collect();
        let targets: Vec<f64> = (0..n * 2).map(|_| rng.random_range(-1.0..1.0)).collect();
        let seq = grad_chunked(&params, &inputs, &targets, 4, false).unwrap();
        let par = grad_chunked(&params, &inputs, &targets, 4, true).unwrap();
        assert_eq!(seq, par, "tree reduction must not depend on scheduling");
    }

    #[test]
    fn training_is_reproducible() {
        let arch = MlpArchitecture {
            input_dim: 2,
            output_dim: 1,
            hidden: vec![8],
            clamp: 4.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 64;
        let inputs: Vec<f64> = (0..n * 2).map(|_| rng.random_range(-1.0..1.0)).collect();
        let targets: Vec<f64> = inputs
            .chunks(2)
            .map(|p| 0.5 * p[0] - 0.25 * p[1])
            .collect();
        let cfg = TrainConfig {
            epochs: 20,
            batch_size: 8,
            learning_rate: 1e-2,
            optimizer: Optimizer::adam(),
            seed: 77,
            validation_fraction: 0.25,
            patience: None,
            freeze_hidden: false,
        };
        let (p1, h1) = train(&inputs, &targets, &arch, &cfg).unwrap();
        let (p2, h2) = train(&inputs, &targets, &arch, &cfg).unwrap();
        assert_eq!(p1, p2);
        assert_eq!(h1.train_loss, h2.train_loss);
        assert_eq!(h1.val_loss, h2.val_loss);
    }

    #[test]
    fn sgd_on_affine_net_is_monotone() {
        // No hidden layers: least squares, plain gradient descent with a
        // small step decreases the objective every epoch.
        let arch = MlpArchitecture {
            input_dim: 2,
            output_dim: 1,
            hidden: vec![],
            clamp: 4.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 32;
        let inputs: Vec<f64> = (0..n * 2).map(|_| rng.random_range(-1.0..1.0)).collect();
        let targets: Vec<f64> = inputs.chunks(2).map(|p| 1.5 * p[0] + 0.5).collect();
        let cfg = TrainConfig {
            epochs: 40,
            batch_size: n, // full batch
            learning_rate: 5e-2,
            optimizer: Optimizer::Sgd,
            seed: 3,
            validation_fraction: 0.0,
            patience: None,
            freeze_hidden: false,
        };
        let (_, hist) = train(&inputs, &targets, &arch, &cfg).unwrap();
        for pair in hist.train_loss.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-12, "loss increased: {pair:?}");
        }
    }

    #[test]
    fn frozen_hidden_layers_do_not_move() {
        let arch = MlpArchitecture {
            input_dim: 2,
            output_dim: 1,
            hidden: vec![6],
            clamp: 4.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 16;
        let inputs: Vec<f64> = (0..n * 2).map(|_| rng.random_range(-1.0..1.0)).collect();
        let targets: Vec<f64> = inputs.chunks(2).map(|p| p[0] - p[1]).collect();
        let cfg = TrainConfig {
            epochs: 10,
            batch_size: 4,
            learning_rate: 1e-2,
            optimizer: Optimizer::Sgd,
            seed: 5,
            validation_fraction: 0.0,
            patience: None,
            freeze_hidden: true,
        };
        let init = MlpParams::init(&arch, cfg.seed).unwrap();
        let (trained, _) = train(&inputs, &targets, &arch, &cfg).unwrap();
        assert_eq!(trained.weights[0], init.weights[0]);
        assert_eq!(trained.biases[0], init.biases[0]);
        assert_ne!(trained.weights[1], init.weights[1]);
    }

    #[test]
    fn sizing_formulas_scale_as_stated() {
        let (d_h, d_y, radius, c) = (3, 5, 2.0, 1.0);
        let coarse = size_for_accuracy(0.5, d_h, d_y, radius, c, None).unwrap();
        let fine = size_for_accuracy(0.25, d_h, d_y, radius, c, None).unwrap();
        // Halving delta adds at most ceil(c*ln 2) + 1 to the depth bound.
        assert!(fine.depth >= coarse.depth);
        assert!(fine.depth <= coarse.depth + (c * 2f64.ln()).ceil() as usize + 1);
        assert!(fine.params > coarse.params);

        // At the log-term boundary the depth bound collapses to c.
        let delta_boundary = radius * (d_y as f64).sqrt() / (d_h as f64).sqrt();
        let est = size_for_accuracy(delta_boundary, d_h, d_y, radius, c, None).unwrap();
        assert!(est.depth <= c.ceil() as usize);

        // Dimension growth follows the power term.
        let low = size_for_accuracy(0.1, 2, d_y, radius, c, None).unwrap();
        let high = size_for_accuracy(0.1, 3, d_y, radius, c, None).unwrap();
        assert!(high.params > low.params);

        let err = size_for_accuracy(1e-6, 8, d_y, radius, c, Some(1_000_000)).unwrap_err();
        match err {
            MlpError::BudgetExceeded { required, .. } => assert!(required > 1e6),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn suggested_width_realizes_the_budget() {
        let est = size_for_accuracy(0.05, 4, 6, 1.0, 1.0, None).unwrap();
        assert!(est.depth >= 2);
        let arch = |w: usize| MlpArchitecture {
            input_dim: 4,
            output_dim: 6,
            hidden: vec![w; est.depth - 1],
            clamp: 1.0,
        };
        assert!(arch(est.hidden_width).param_count() as u64 <= est.params);
        assert!(arch(est.hidden_width + 1).param_count() as u64 > est.params);
    }

    #[test]
    fn model_roundtrip_preserves_weights_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let params = MlpParams::init(&small_arch(), 99).unwrap();
        save_model(&params, None, dir.path()).unwrap();
        let (back, meta) = load_model(dir.path()).unwrap();
        assert_eq!(params, back);
        assert_eq!(meta.arch, small_arch());
    }

    #[test]
    fn truncated_weights_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let params = MlpParams::init(&small_arch(), 99).unwrap();
        save_model(&params, None, dir.path()).unwrap();
        let weights_path = dir.path().join("weights.f64");
        let bytes = fs::read(&weights_path).unwrap();
        fs::write(&weights_path, &bytes[..bytes.len() - 8]).unwrap();
        let err = load_model(dir.path()).unwrap_err();
        assert!(matches!(err, MlpError::WeightCount { .. }));
    }
}
