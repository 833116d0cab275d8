//! Feed-forward delta-state dynamics model: predicts the change in joint
//! state per control period from `(q, qdot, u)`. Fixed architecture
//! 3n -> 25 -> 25 -> 2n with ReLU hidden layers and a tanh output that is
//! de-scaled back to physical units. Trained from scratch (MSE, Adam).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::JointState;
use crate::scalar::{all_finite, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    fn apply<T: Scalar>(self, z: T) -> T {
        match self {
            Activation::Relu => z.max(T::zero()),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the activation output `a`.
    #[inline]
    fn derivative_from_output<T: Scalar>(self, a: T) -> T {
        match self {
            Activation::Relu => {
                if a > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Tanh => T::one() - a * a,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer<T> {
    pub in_dim: usize,
    pub out_dim: usize,
    /// Row-major `out_dim x in_dim`.
    pub weights: Vec<T>,
    pub biases: Vec<T>,
    pub activation: Activation,
}

impl<T: Scalar> Layer<T> {
    fn forward(&self, x: &[T], out: &mut Vec<T>) {
        out.clear();
        for r in 0..self.out_dim {
            let row = &self.weights[r * self.in_dim..(r + 1) * self.in_dim];
            let z: T = self.biases[r] + row.iter().zip(x).map(|(&w, &xi)| w * xi).sum();
            out.push(self.activation.apply(z));
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkParams<T> {
    pub layers: Vec<Layer<T>>,
    /// Z-score normalization of the 3n input, stored with the model.
    pub input_mean: Vec<T>,
    pub input_scale: Vec<T>,
    /// Physical units of each output component; the tanh output is
    /// multiplied by this, so every prediction is bounded by it.
    pub output_scale: Vec<T>,
}

impl<T: Scalar> NetworkParams<T> {
    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, |l| l.in_dim)
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.out_dim)
    }

    pub fn dof(&self) -> usize {
        self.output_dim() / 2
    }

    pub fn validate(&self) -> Result<(), NnError> {
        if self.layers.is_empty() {
            return Err(NnError::InvalidModel("no layers".into()));
        }
        let mut prev = self.layers[0].in_dim;
        for (i, l) in self.layers.iter().enumerate() {
            if l.in_dim != prev {
                return Err(NnError::InvalidModel(format!(
                    "layer {i}: in_dim {} does not match previous out_dim {prev}",
                    l.in_dim
                )));
            }
            if l.weights.len() != l.in_dim * l.out_dim || l.biases.len() != l.out_dim {
                return Err(NnError::InvalidModel(format!("layer {i}: shape mismatch")));
            }
            if !all_finite(&l.weights) || !all_finite(&l.biases) {
                return Err(NnError::InvalidModel(format!("layer {i}: non-finite parameters")));
            }
            prev = l.out_dim;
        }
        let din = self.input_dim();
        let dout = self.output_dim();
        if self.input_mean.len() != din || self.input_scale.len() != din {
            return Err(NnError::InvalidModel("normalization vector length mismatch".into()));
        }
        if self.output_scale.len() != dout {
            return Err(NnError::InvalidModel("output scale length mismatch".into()));
        }
        if !all_finite(&self.input_mean) || !all_finite(&self.input_scale) {
            return Err(NnError::InvalidModel("non-finite normalization".into()));
        }
        if self.input_scale.iter().any(|&s| !(s > T::zero()))
            || self.output_scale.iter().any(|&s| !(s > T::zero()))
        {
            return Err(NnError::InvalidModel("scales must be strictly positive".into()));
        }
        if self.layers.last().unwrap().activation != Activation::Tanh {
            return Err(NnError::InvalidModel("output layer must be tanh".into()));
        }
        Ok(())
    }

    /// Seed-deterministic He-style uniform initialization.
    pub fn init(dof: usize, hidden: &[usize], seed: u64) -> Self {
        let din = 3 * dof;
        let dout = 2 * dof;
        let mut dims = vec![din];
        dims.extend_from_slice(hidden);
        dims.push(dout);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n_layers = dims.len() - 1;
        let layers = (0..n_layers)
            .map(|i| {
                let (fan_in, fan_out) = (dims[i], dims[i + 1]);
                let limit = (6.0 / fan_in as f64).sqrt();
                let weights = (0..fan_in * fan_out)
                    .map(|_| T::c(rng.gen_range(-limit..limit)))
                    .collect();
                Layer {
                    in_dim: fan_in,
                    out_dim: fan_out,
                    weights,
                    biases: vec![T::zero(); fan_out],
                    activation: if i + 1 == n_layers { Activation::Tanh } else { Activation::Relu },
                }
            })
            .collect();
        NetworkParams {
            layers,
            input_mean: vec![T::zero(); din],
            input_scale: vec![T::one(); din],
            output_scale: vec![T::one(); dout],
        }
    }

    pub fn normalize_input(&self, x: &[T]) -> Vec<T> {
        x.iter()
            .zip(self.input_mean.iter().zip(&self.input_scale))
            .map(|(&xi, (&m, &s))| (xi - m) / s)
            .collect()
    }

    pub fn denormalize_input(&self, xn: &[T]) -> Vec<T> {
        xn.iter()
            .zip(self.input_mean.iter().zip(&self.input_scale))
            .map(|(&xi, (&m, &s))| xi * s + m)
            .collect()
    }

    /// Forward pass on a normalized input; returns the tanh output in [-1,1].
    pub fn forward_normalized(&self, xn: &[T]) -> Vec<T> {
        let mut cur = xn.to_vec();
        let mut next = Vec::new();
        for l in &self.layers {
            l.forward(&cur, &mut next);
            std::mem::swap(&mut cur, &mut next);
        }
        cur
    }

    /// Flatten all weights and biases, layer by layer.
    pub fn flatten(&self) -> Vec<T> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.biases);
        }
        out
    }

    pub fn set_from_flat(&mut self, flat: &[T]) {
        let mut off = 0;
        for l in &mut self.layers {
            let nw = l.weights.len();
            l.weights.copy_from_slice(&flat[off..off + nw]);
            off += nw;
            let nb = l.biases.len();
            l.biases.copy_from_slice(&flat[off..off + nb]);
            off += nb;
        }
        assert_eq!(off, flat.len());
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum NnError {
    #[error("non-finite input to the network")]
    NonFiniteInput,
    #[error("rollout diverged at step {step}")]
    RolloutDiverged { step: usize },
    #[error("training diverged (NaN loss) at epoch {epoch}")]
    TrainingDiverged { epoch: usize },
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("model file schema error: {0}")]
    Schema(String),
    #[error("dataset error: {0}")]
    Dataset(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One-step prediction of `(dq, dqdot)` in physical units.
pub fn predict_delta<T: Scalar>(
    net: &NetworkParams<T>,
    state: &JointState<T>,
    u: &[T],
) -> Result<(Vec<T>, Vec<T>), NnError> {
    let n = net.dof();
    if state.dof() != n || u.len() != n {
        return Err(NnError::InvalidModel(format!(
            "expected {n} joints, got state {} / command {}",
            state.dof(),
            u.len()
        )));
    }
    if !state.is_finite() || !all_finite(u) {
        return Err(NnError::NonFiniteInput);
    }
    let mut x = Vec::with_capacity(3 * n);
    x.extend_from_slice(&state.q);
    x.extend_from_slice(&state.qdot);
    x.extend_from_slice(u);
    let y = net.forward_normalized(&net.normalize_input(&x));
    let delta: Vec<T> = y.iter().zip(&net.output_scale).map(|(&yi, &s)| yi * s).collect();
    Ok((delta[..n].to_vec(), delta[n..].to_vec()))
}

/// Multi-step open-loop rollout: `s_{k+1} = s_k + g(s_k, u_k)`.
/// Returns the N predicted states (not including the initial one).
pub fn rollout<T: Scalar>(
    net: &NetworkParams<T>,
    state: &JointState<T>,
    u_seq: &[Vec<T>],
) -> Result<Vec<JointState<T>>, NnError> {
    assert!(!u_seq.is_empty(), "u_seq must contain at least one command");
    let mut out = Vec::with_capacity(u_seq.len());
    let mut s = state.clone();
    for (k, u) in u_seq.iter().enumerate() {
        let (dq, dqd) = predict_delta(net, &s, u).map_err(|e| match e {
            NnError::NonFiniteInput => NnError::RolloutDiverged { step: k },
            other => other,
        })?;
        let q = s.q.iter().zip(&dq).map(|(&a, &b)| a + b).collect();
        let qdot = s.qdot.iter().zip(&dqd).map(|(&a, &b)| a + b).collect();
        s = JointState { q, qdot };
        if !s.is_finite() {
            return Err(NnError::RolloutDiverged { step: k });
        }
        out.push(s.clone());
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig<T> {
    pub learning_rate: T,
    pub beta1: T,
    pub beta2: T,
    pub epsilon: T,
    pub batch_size: usize,
    pub epochs: usize,
    /// Fraction of rows held out for validation, in (0,1).
    pub val_split: T,
    pub seed: u64,
    pub hidden: Vec<usize>,
}

impl<T: Scalar> Default for TrainingConfig<T> {
    fn default() -> Self {
        TrainingConfig {
            learning_rate: T::c(0.001),
            beta1: T::c(0.9),
            beta2: T::c(0.999),
            epsilon: T::c(1e-8),
            batch_size: 64,
            epochs: 150,
            val_split: T::c(0.2),
            seed: 0,
            hidden: vec![25, 25],
        }
    }
}

impl<T: Scalar> TrainingConfig<T> {
    pub fn validate(&self) -> Result<(), NnError> {
        if !(self.learning_rate > T::zero()) {
            return Err(NnError::InvalidConfig("learning rate must be > 0".into()));
        }
        if !(self.val_split > T::zero() && self.val_split < T::one()) {
            return Err(NnError::InvalidConfig("val split must be in (0,1)".into()));
        }
        if self.batch_size == 0 || self.epochs == 0 || self.hidden.is_empty() {
            return Err(NnError::InvalidConfig("batch size, epochs, hidden sizes must be non-zero".into()));
        }
        Ok(())
    }
}

/// One transition sample: state and command at t, state delta to t+1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataRow<T> {
    pub q: Vec<T>,
    pub qdot: Vec<T>,
    pub u: Vec<T>,
    pub dq: Vec<T>,
    pub dqdot: Vec<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub sample_period_s: f64,
    pub seed: u64,
    pub scenario: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    pub rows: Vec<DataRow<T>>,
    pub meta: DatasetMeta,
}

impl<T: Scalar> Dataset<T> {
    pub fn dof(&self) -> usize {
        self.rows.first().map_or(0, |r| r.q.len())
    }

    fn input(&self, i: usize) -> Vec<T> {
        let r = &self.rows[i];
        let mut x = Vec::with_capacity(3 * r.q.len());
        x.extend_from_slice(&r.q);
        x.extend_from_slice(&r.qdot);
        x.extend_from_slice(&r.u);
        x
    }

    fn target(&self, i: usize) -> Vec<T> {
        let r = &self.rows[i];
        let mut y = Vec::with_capacity(2 * r.dq.len());
        y.extend_from_slice(&r.dq);
        y.extend_from_slice(&r.dqdot);
        y
    }
}

#[derive(Debug, Clone)]
pub struct TrainingReport<T> {
    /// Per-epoch mean training loss (normalized target space).
    pub train_loss: Vec<T>,
    /// Per-epoch validation loss (normalized target space).
    pub val_loss: Vec<T>,
    /// Final per-component validation MSE in physical units.
    pub val_mse: Vec<T>,
    /// Per-component variance of the validation targets in physical units.
    pub target_variance: Vec<T>,
    pub train_rows: usize,
    pub val_rows: usize,
}

/// Mean squared error and its gradient w.r.t. all flattened parameters, over
/// the given rows of pre-normalized inputs/targets.
///
/// Loss = mean over rows and components of `(y - t)^2`.
pub fn loss_and_grad<T: Scalar>(
    net: &NetworkParams<T>,
    inputs: &[Vec<T>],
    targets: &[Vec<T>],
    rows: &[usize],
) -> (T, Vec<T>) {
    let mut grads = vec![T::zero(); net.param_count()];
    let mut loss = T::zero();
    let dout = net.output_dim();
    let denom = T::from_usize(rows.len() * dout).unwrap();
    // activations per layer for backprop
    let n_layers = net.layers.len();
    for &row in rows {
        let x = &inputs[row];
        let t = &targets[row];
        let mut acts: Vec<Vec<T>> = Vec::with_capacity(n_layers + 1);
        acts.push(x.clone());
        for l in &net.layers {
            let mut out = Vec::new();
            l.forward(acts.last().unwrap(), &mut out);
            acts.push(out);
        }
        let y = acts.last().unwrap();
        let mut delta: Vec<T> = y
            .iter()
            .zip(t)
            .map(|(&yi, &ti)| {
                let e = yi - ti;
                loss = loss + e * e / denom;
                T::two() * e / denom
            })
            .collect();
        // backward
        let mut off_end = grads.len();
        for (li, l) in net.layers.iter().enumerate().rev() {
            let a_out = &acts[li + 1];
            let a_in = &acts[li];
            // pre-activation gradient
            for (d, &a) in delta.iter_mut().zip(a_out) {
                *d = *d * l.activation.derivative_from_output(a);
            }
            let wb = l.weights.len() + l.biases.len();
            let off = off_end - wb;
            let (gw, gb) = grads[off..off_end].split_at_mut(l.weights.len());
            for r in 0..l.out_dim {
                let dr = delta[r];
                gb[r] = gb[r] + dr;
                let grow = &mut gw[r * l.in_dim..(r + 1) * l.in_dim];
                for (g, &ai) in grow.iter_mut().zip(a_in) {
                    *g = *g + dr * ai;
                }
            }
            if li > 0 {
                let mut prev = vec![T::zero(); l.in_dim];
                for r in 0..l.out_dim {
                    let dr = delta[r];
                    let wrow = &l.weights[r * l.in_dim..(r + 1) * l.in_dim];
                    for (p, &w) in prev.iter_mut().zip(wrow) {
                        *p = *p + dr * w;
                    }
                }
                delta = prev;
            }
            off_end = off;
        }
    }
    (loss, grads)
}

/// Standard Adam update with bias correction, over flat parameter slices.
/// `step_index` is 1-based.
pub fn adam_step<T: Scalar>(
    params: &mut [T],
    grads: &[T],
    m: &mut [T],
    v: &mut [T],
    cfg: &TrainingConfig<T>,
    step_index: usize,
) {
    assert_eq!(params.len(), grads.len());
    assert_eq!(params.len(), m.len());
    assert_eq!(params.len(), v.len());
    let t = T::from_usize(step_index).unwrap();
    let bc1 = T::one() - self_pow(cfg.beta1, t);
    let bc2 = T::one() - self_pow(cfg.beta2, t);
    for i in 0..params.len() {
        let g = grads[i];
        m[i] = cfg.beta1 * m[i] + (T::one() - cfg.beta1) * g;
        v[i] = cfg.beta2 * v[i] + (T::one() - cfg.beta2) * g * g;
        let mhat = m[i] / bc1;
        let vhat = v[i] / bc2;
        params[i] = params[i] - cfg.learning_rate * mhat / (vhat.sqrt() + cfg.epsilon);
    }
}

#[inline]
fn self_pow<T: Scalar>(base: T, t: T) -> T {
    base.powf(t)
}

/// Train a delta-state model from scratch. Deterministic given the seed.
pub fn train<T: Scalar>(
    data: &Dataset<T>,
    cfg: &TrainingConfig<T>,
) -> Result<(NetworkParams<T>, TrainingReport<T>), NnError> {
    cfg.validate()?;
    let dof = data.dof();
    let din = 3 * dof;
    if data.rows.is_empty() {
        return Err(NnError::Dataset("empty dataset".into()));
    }
    if data.rows.len() < 10 * din {
        return Err(NnError::Dataset(format!(
            "need at least {} rows (10x input dim), got {}",
            10 * din,
            data.rows.len()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut indices: Vec<usize> = (0..data.rows.len()).collect();
    shuffle(&mut indices, &mut rng);
    let n_val = ((data.rows.len() as f64) * cfg.val_split.to_f64().unwrap()).round() as usize;
    let n_val = n_val.clamp(1, data.rows.len() - 1);
    let (val_idx, train_idx) = indices.split_at(n_val);
    let val_idx = val_idx.to_vec();
    let train_idx = train_idx.to_vec();

    // normalization statistics from the training split only
    let raw_inputs: Vec<Vec<T>> = (0..data.rows.len()).map(|i| data.input(i)).collect();
    let raw_targets: Vec<Vec<T>> = (0..data.rows.len()).map(|i| data.target(i)).collect();
    let dout = 2 * dof;
    let mut net = NetworkParams::<T>::init(dof, &cfg.hidden, cfg.seed.wrapping_add(1));
    let (mean, std) = mean_std(&raw_inputs, &train_idx, din);
    net.input_mean = mean;
    net.input_scale = std.into_iter().map(|s| s.max(T::c(1e-8))).collect();
    let mut out_scale = vec![T::zero(); dout];
    for &i in &train_idx {
        for (s, &t) in out_scale.iter_mut().zip(&raw_targets[i]) {
            *s = s.max(t.abs());
        }
    }
    net.output_scale = out_scale
        .into_iter()
        .map(|s| (T::c(1.25) * s).max(T::c(1e-6)))
        .collect();

    let inputs: Vec<Vec<T>> = raw_inputs.iter().map(|x| net.normalize_input(x)).collect();
    let targets: Vec<Vec<T>> = raw_targets
        .iter()
        .map(|t| t.iter().zip(&net.output_scale).map(|(&v, &s)| v / s).collect())
        .collect();

    let pcount = net.param_count();
    let mut flat = net.flatten();
    let mut m = vec![T::zero(); pcount];
    let mut v = vec![T::zero(); pcount];
    let mut adam_t = 0usize;
    let mut order = train_idx.clone();
    let mut report = TrainingReport {
        train_loss: Vec::with_capacity(cfg.epochs),
        val_loss: Vec::with_capacity(cfg.epochs),
        val_mse: Vec::new(),
        target_variance: Vec::new(),
        train_rows: train_idx.len(),
        val_rows: val_idx.len(),
    };

    for epoch in 0..cfg.epochs {
        shuffle(&mut order, &mut rng);
        let mut epoch_loss = T::zero();
        let mut batches = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            net.set_from_flat(&flat);
            let (loss, grads) = loss_and_grad(&net, &inputs, &targets, batch);
            if !loss.is_finite() {
                return Err(NnError::TrainingDiverged { epoch });
            }
            adam_t += 1;
            adam_step(&mut flat, &grads, &mut m, &mut v, cfg, adam_t);
            epoch_loss = epoch_loss + loss;
            batches += 1;
        }
        net.set_from_flat(&flat);
        let (val_loss, _) = loss_and_grad(&net, &inputs, &targets, &val_idx);
        if !val_loss.is_finite() {
            return Err(NnError::TrainingDiverged { epoch });
        }
        report.train_loss.push(epoch_loss / T::from_usize(batches.max(1)).unwrap());
        report.val_loss.push(val_loss);
    }
    net.set_from_flat(&flat);

    // final per-component validation MSE and target variance, physical units
    let mut mse = vec![T::zero(); dout];
    let mut mean_t = vec![T::zero(); dout];
    let nv = T::from_usize(val_idx.len()).unwrap();
    for &i in &val_idx {
        let y = net.forward_normalized(&inputs[i]);
        for c in 0..dout {
            let pred = y[c] * net.output_scale[c];
            let e = pred - raw_targets[i][c];
            mse[c] = mse[c] + e * e / nv;
            mean_t[c] = mean_t[c] + raw_targets[i][c] / nv;
        }
    }
    let mut var = vec![T::zero(); dout];
    for &i in &val_idx {
        for c in 0..dout {
            let e = raw_targets[i][c] - mean_t[c];
            var[c] = var[c] + e * e / nv;
        }
    }
    report.val_mse = mse;
    report.target_variance = var;
    net.validate()?;
    Ok((net, report))
}

fn mean_std<T: Scalar>(xs: &[Vec<T>], rows: &[usize], dim: usize) -> (Vec<T>, Vec<T>) {
    let n = T::from_usize(rows.len()).unwrap();
    let mut mean = vec![T::zero(); dim];
    for &i in rows {
        for (m, &x) in mean.iter_mut().zip(&xs[i]) {
            *m = *m + x / n;
        }
    }
    let mut var = vec![T::zero(); dim];
    for &i in rows {
        for (v, (&x, &m)) in var.iter_mut().zip(xs[i].iter().zip(&mean)) {
            let e = x - m;
            *v = *v + e * e / n;
        }
    }
    (mean, var.into_iter().map(|v| v.sqrt()).collect())
}

/// Fisher-Yates with the crate's seeded RNG (kept local so the shuffle order
/// is stable across `rand` versions).
fn shuffle(xs: &mut [usize], rng: &mut ChaCha8Rng) {
    for i in (1..xs.len()).rev() {
        let j = rng.gen_range(0..=i);
        xs.swap(i, j);
    }
}

// ---------------------------------------------------------------------------
// Model file I/O
// ---------------------------------------------------------------------------

/// Portable model file (structured text). Version is checked on load.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    format_version: u32,
    layer_dims: Vec<usize>,
    activations: Vec<Activation>,
    /// Row-major weight matrices, one per layer.
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
    input_mean: Vec<f64>,
    input_scale: Vec<f64>,
    output_scale: Vec<f64>,
}

const MODEL_FORMAT_VERSION: u32 = 1;

pub fn model_to_string<T: Scalar>(net: &NetworkParams<T>) -> Result<String, NnError> {
    net.validate()?;
    let to64 = |v: &[T]| -> Vec<f64> { v.iter().map(|x| x.to_f64().unwrap()).collect() };
    let mut dims = vec![net.input_dim()];
    dims.extend(net.layers.iter().map(|l| l.out_dim));
    let file = ModelFile {
        format_version: MODEL_FORMAT_VERSION,
        layer_dims: dims,
        activations: net.layers.iter().map(|l| l.activation).collect(),
        weights: net.layers.iter().map(|l| to64(&l.weights)).collect(),
        biases: net.layers.iter().map(|l| to64(&l.biases)).collect(),
        input_mean: to64(&net.input_mean),
        input_scale: to64(&net.input_scale),
        output_scale: to64(&net.output_scale),
    };
    toml::to_string(&file).map_err(|e| NnError::Schema(e.to_string()))
}

pub fn model_from_string<T: Scalar>(text: &str) -> Result<NetworkParams<T>, NnError> {
    let file: ModelFile = toml::from_str(text).map_err(|e| NnError::Schema(e.to_string()))?;
    if file.format_version != MODEL_FORMAT_VERSION {
        return Err(NnError::Schema(format!(
            "unsupported format_version {}",
            file.format_version
        )));
    }
    if file.layer_dims.len() < 2
        || file.activations.len() != file.layer_dims.len() - 1
        || file.weights.len() != file.activations.len()
        || file.biases.len() != file.activations.len()
    {
        return Err(NnError::Schema("inconsistent layer arrays".into()));
    }
    let fromv = |v: &[f64]| -> Vec<T> { v.iter().map(|&x| T::c(x)).collect() };
    let layers = (0..file.activations.len())
        .map(|i| Layer {
            in_dim: file.layer_dims[i],
            out_dim: file.layer_dims[i + 1],
            weights: fromv(&file.weights[i]),
            biases: fromv(&file.biases[i]),
            activation: file.activations[i],
        })
        .collect();
    let net = NetworkParams {
        layers,
        input_mean: fromv(&file.input_mean),
        input_scale: fromv(&file.input_scale),
        output_scale: fromv(&file.output_scale),
    };
    net.validate().map_err(|e| NnError::Schema(e.to_string()))?;
    Ok(net)
}

pub fn save_model<T: Scalar>(net: &NetworkParams<T>, path: &std::path::Path) -> Result<(), NnError> {
    let s = model_to_string(net)?;
    std::fs::write(path, s)?;
    Ok(())
}

pub fn load_model<T: Scalar>(path: &std::path::Path) -> Result<NetworkParams<T>, NnError> {
    let text = std::fs::read_to_string(path)?;
    model_from_string(&text)
}
