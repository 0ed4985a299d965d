//! Dense feed-forward ReLU network trained with Adam on an L2 loss.
//!
//! Everything is f64 and deterministic given the seed: initialization,
//! the validation split, and the per-epoch mini-batch shuffles all draw
//! from one seeded generator.

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct MlpNetwork {
    pub dims: Vec<usize>,
    /// One (out x in) matrix per affine layer.
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl MlpNetwork {
    /// Weights uniform in +-1/sqrt(fan_in), biases zero.
    pub fn init(dims: &[usize], seed: u64) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::Invalid(format!("invalid layer dims {dims:?}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::with_capacity(dims.len() - 1);
        let mut biases = Vec::with_capacity(dims.len() - 1);
        for w in dims.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            let m = Array2::from_shape_fn((fan_out, fan_in), |_| rng.gen_range(-bound..bound));
            weights.push(m);
            biases.push(Array1::zeros(fan_out));
        }
        Ok(MlpNetwork { dims: dims.to_vec(), weights, biases })
    }

    pub fn num_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn param_count(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>()
            + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    /// Batch forward pass; rows are samples.
    pub fn forward(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.dims[0] {
            return Err(Error::Dimension(format!(
                "input width {} does not match d_in {}",
                x.ncols(),
                self.dims[0]
            )));
        }
        let mut a = x.to_owned();
        let last = self.num_layers() - 1;
        for (i, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            a = a.dot(&w.t()) + b;
            if i < last {
                a.mapv_inplace(|v| v.max(0.0));
            }
        }
        Ok(a)
    }

    /// Activations after every layer (ReLU applied on hidden layers);
    /// index 0 is the input itself.
    fn forward_trace(&self, x: &Array2<f64>) -> Vec<Array2<f64>> {
        let mut acts = Vec::with_capacity(self.num_layers() + 1);
        acts.push(x.to_owned());
        let last = self.num_layers() - 1;
        for (i, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut a = acts.last().unwrap().dot(&w.t()) + b;
            if i < last {
                a.mapv_inplace(|v| v.max(0.0));
            }
            acts.push(a);
        }
        acts
    }
}

/// Mean squared error over all batch entries and output coordinates.
pub fn mse(pred: &Array2<f64>, target: &Array2<f64>) -> f64 {
    let diff = pred - target;
    diff.mapv(|v| v * v).mean().unwrap_or(0.0)
}

#[derive(Debug, Clone)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

/// Reverse-mode gradient of the batch MSE. The ReLU subgradient at 0 is 0.
pub fn gradients(
    net: &MlpNetwork,
    x: &Array2<f64>,
    y: &Array2<f64>,
) -> Result<(Gradients, f64)> {
    if x.nrows() == 0 {
        return Err(Error::Invalid("empty batch".into()));
    }
    if y.nrows() != x.nrows() || y.ncols() != *net.dims.last().unwrap() {
        return Err(Error::Dimension(format!(
            "target shape {:?} does not match batch {} x {}",
            y.dim(),
            x.nrows(),
            net.dims.last().unwrap()
        )));
    }
    let acts = net.forward_trace(x);
    let pred = acts.last().unwrap();
    let loss = mse(pred, y);
    let scale = 2.0 / (x.nrows() * y.ncols()) as f64;
    let mut delta = (pred - y) * scale;

    let layers = net.num_layers();
    let mut gw = vec![Array2::zeros((0, 0)); layers];
    let mut gb = vec![Array1::zeros(0); layers];
    for i in (0..layers).rev() {
        gw[i] = delta.t().dot(&acts[i]);
        gb[i] = delta.sum_axis(Axis(0));
        if i > 0 {
            let mut back = delta.dot(&net.weights[i]);
            back.zip_mut_with(&acts[i], |d, &a| {
                if a <= 0.0 {
                    *d = 0.0;
                }
            });
            delta = back;
        }
    }
    Ok((Gradients { weights: gw, biases: gb }, loss))
}

#[derive(Debug, Clone)]
pub struct AdamState {
    pub lr: f64,
    pub t: u64,
    m_w: Vec<Array2<f64>>,
    v_w: Vec<Array2<f64>>,
    m_b: Vec<Array1<f64>>,
    v_b: Vec<Array1<f64>>,
}

impl AdamState {
    pub fn new(net: &MlpNetwork, lr: f64) -> Self {
        AdamState {
            lr,
            t: 0,
            m_w: net.weights.iter().map(|w| Array2::zeros(w.dim())).collect(),
            v_w: net.weights.iter().map(|w| Array2::zeros(w.dim())).collect(),
            m_b: net.biases.iter().map(|b| Array1::zeros(b.len())).collect(),
            v_b: net.biases.iter().map(|b| Array1::zeros(b.len())).collect(),
        }
    }
}

fn adam_update(theta: &mut f64, g: f64, m: &mut f64, v: &mut f64, lr: f64, t: u64) {
    *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
    *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
    let m_hat = *m / (1.0 - ADAM_BETA1.powi(t as i32));
    let v_hat = *v / (1.0 - ADAM_BETA2.powi(t as i32));
    *theta -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
}

/// One bias-corrected Adam step in place.
pub fn adam_step(net: &mut MlpNetwork, grads: &Gradients, state: &mut AdamState) {
    state.t += 1;
    let t = state.t;
    let lr = state.lr;
    for i in 0..net.num_layers() {
        ndarray::Zip::from(&mut net.weights[i])
            .and(&grads.weights[i])
            .and(&mut state.m_w[i])
            .and(&mut state.v_w[i])
            .for_each(|theta, &g, m, v| adam_update(theta, g, m, v, lr, t));
        ndarray::Zip::from(&mut net.biases[i])
            .and(&grads.biases[i])
            .and(&mut state.m_b[i])
            .and(&mut state.v_b[i])
            .for_each(|theta, &g, m, v| adam_update(theta, g, m, v, lr, t));
    }
}

/// Per-feature min-max scaler; constant features map to 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl Scaler {
    pub fn fit(features: &Array2<f64>) -> Result<Self> {
        if features.nrows() == 0 {
            return Err(Error::Invalid("cannot fit scaler on empty data".into()));
        }
        let min = features.fold_axis(Axis(0), f64::INFINITY, |a, &b| a.min(b)).to_vec();
        let max = features.fold_axis(Axis(0), f64::NEG_INFINITY, |a, &b| a.max(b)).to_vec();
        Ok(Scaler { min, max })
    }

    pub fn transform(&self, features: &Array2<f64>) -> Result<Array2<f64>> {
        if features.ncols() != self.min.len() {
            return Err(Error::Dimension(format!(
                "feature width {} does not match scaler width {}",
                features.ncols(),
                self.min.len()
            )));
        }
        let mut out = features.to_owned();
        for (j, mut col) in out.axis_iter_mut(Axis(1)).enumerate() {
            let range = self.max[j] - self.min[j];
            if range > 0.0 {
                col.mapv_inplace(|v| (v - self.min[j]) / range);
            } else {
                col.fill(0.0);
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub validation_fraction: f64,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 256,
            max_epochs: 1000,
            patience: 20,
            validation_fraction: 0.1,
            learning_rate: 1e-3,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Invalid("batch_size must be >= 1".into()));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::Invalid("validation fraction must lie in (0, 1)".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Invalid("learning rate must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default)]
pub struct TrainHistory {
    pub train_mse: Vec<f64>,
    pub val_mse: Vec<f64>,
    pub best_epoch: usize,
}

fn select_rows(data: &Array2<f64>, idx: &[usize]) -> Array2<f64> {
    let mut out = Array2::zeros((idx.len(), data.ncols()));
    for (r, &i) in idx.iter().enumerate() {
        out.row_mut(r).assign(&data.row(i));
    }
    out
}

/// Trains a copy of `net`; features are min-max scaled with statistics
/// from the training split only, targets stay in price units. Stops when
/// the validation MSE has not improved for `patience` epochs and returns
/// the parameters of the best validation epoch.
pub fn fit(
    net: &MlpNetwork,
    features: &Array2<f64>,
    targets: &Array2<f64>,
    config: &TrainConfig,
) -> Result<(MlpNetwork, Scaler, TrainHistory)> {
    config.validate()?;
    let n = features.nrows();
    if n == 0 {
        return Err(Error::Invalid("empty dataset".into()));
    }
    if targets.nrows() != n {
        return Err(Error::Dimension("feature/target row counts differ".into()));
    }
    if features.ncols() != net.dims[0] || targets.ncols() != *net.dims.last().unwrap() {
        return Err(Error::Dimension(format!(
            "dataset widths ({}, {}) do not match network ({}, {})",
            features.ncols(),
            targets.ncols(),
            net.dims[0],
            net.dims.last().unwrap()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let n_val = ((n as f64) * config.validation_fraction).round() as usize;
    let n_val = n_val.clamp(1, n.saturating_sub(1));
    if n < 2 {
        return Err(Error::Invalid("need at least 2 samples for a validation split".into()));
    }
    let (train_idx, val_idx) = order.split_at(n - n_val);

    let train_x_raw = select_rows(features, train_idx);
    let train_y = select_rows(targets, train_idx);
    let val_x_raw = select_rows(features, val_idx);
    let val_y = select_rows(targets, val_idx);

    let scaler = Scaler::fit(&train_x_raw)?;
    let train_x = scaler.transform(&train_x_raw)?;
    let val_x = scaler.transform(&val_x_raw)?;

    let mut model = net.clone();
    let mut adam = AdamState::new(&model, config.learning_rate);
    let mut history = TrainHistory::default();
    let mut best = f64::INFINITY;
    let mut best_model = model.clone();
    let mut since_best = 0usize;

    let n_train = train_x.nrows();
    let mut batch_order: Vec<usize> = (0..n_train).collect();
    for epoch in 0..config.max_epochs {
        batch_order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for chunk in batch_order.chunks(config.batch_size) {
            let bx = select_rows(&train_x, chunk);
            let by = select_rows(&train_y, chunk);
            let (grads, loss) = gradients(&model, &bx, &by)?;
            if !loss.is_finite() {
                return Err(Error::Numerical(format!(
                    "non-finite training loss at epoch {epoch}"
                )));
            }
            adam_step(&mut model, &grads, &mut adam);
            epoch_loss += loss;
            batches += 1;
        }
        history.train_mse.push(epoch_loss / batches as f64);
        let val_loss = mse(&model.forward(&val_x)?, &val_y);
        if !val_loss.is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite validation loss at epoch {epoch}"
            )));
        }
        history.val_mse.push(val_loss);
        if val_loss < best {
            best = val_loss;
            best_model = model.clone();
            history.best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best > config.patience {
                break;
            }
        }
    }
    Ok((best_model, scaler, history))
}

/// Scale then forward; row order is preserved.
pub fn predict(net: &MlpNetwork, scaler: &Scaler, features: &Array2<f64>) -> Result<Array2<f64>> {
    net.forward(&scaler.transform(features)?)
}
