//! A fixed [in, 35, 2, 1] rectifier network trained with mini-batch Adam on
//! squared error. Inputs and targets are standardized with training-set
//! statistics stored in the model.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use super::{check_training_set, Matrix};
use crate::error::{Error, Result};
use crate::rng::StreamRng;

pub const HIDDEN: [usize; 2] = [35, 2];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MlpHyperparams {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for MlpHyperparams {
    fn default() -> Self {
        MlpHyperparams {
            epochs: 200,
            batch_size: 64,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl MlpHyperparams {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::config("mlp.batch_size", "must be ≥ 1"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::config("mlp.learning_rate", "must be > 0"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::config("mlp.beta", "moment coefficients must lie in [0, 1)"));
        }
        Ok(())
    }
}

/// Dense layer, weights row-major `[out][in]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub n_in: usize,
    pub n_out: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    fn glorot(n_in: usize, n_out: usize, rng: &mut StreamRng) -> Layer {
        let a = (6.0 / (n_in + n_out) as f64).sqrt();
        Layer {
            n_in,
            n_out,
            weights: (0..n_in * n_out).map(|_| rng.random_range(-a..a)).collect(),
            bias: vec![0.0; n_out],
        }
    }

    fn forward(&self, x: &[f64], out: &mut [f64], relu: bool) {
        for (o, (w, b)) in out.iter_mut().zip(self.weights.chunks_exact(self.n_in).zip(&self.bias)) {
            let z = b + w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
            *o = if relu { z.max(0.0) } else { z };
        }
    }

    fn n_params(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub input_dim: usize,
    pub layers: Vec<Layer>,
    pub input_mean: Vec<f64>,
    pub input_std: Vec<f64>,
    pub target_mean: f64,
    pub target_std: f64,
}

/// Scratch activations for one sample.
struct Acts {
    x: Vec<f64>,
    h1: Vec<f64>,
    h2: Vec<f64>,
}

impl MlpModel {
    fn init(input_dim: usize, rng: &mut StreamRng) -> MlpModel {
        let sizes = [input_dim, HIDDEN[0], HIDDEN[1], 1];
        MlpModel {
            input_dim,
            layers: sizes.windows(2).map(|w| Layer::glorot(w[0], w[1], rng)).collect(),
            input_mean: vec![0.0; input_dim],
            input_std: vec![1.0; input_dim],
            target_mean: 0.0,
            target_std: 1.0,
        }
    }

    fn acts(&self) -> Acts {
        Acts {
            x: vec![0.0; self.input_dim],
            h1: vec![0.0; HIDDEN[0]],
            h2: vec![0.0; HIDDEN[1]],
        }
    }

    /// Output in standardized target units for an already standardized input.
    fn forward_std(&self, a: &mut Acts) -> f64 {
        self.layers[0].forward(&a.x, &mut a.h1, true);
        self.layers[1].forward(&a.h1, &mut a.h2, true);
        let mut out = [0.0];
        self.layers[2].forward(&a.h2, &mut out, false);
        out[0]
    }

    fn standardize_into(&self, row: &[f64], x: &mut [f64]) {
        for (j, v) in row.iter().enumerate() {
            x[j] = (v - self.input_mean[j]) / self.input_std[j];
        }
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut a = self.acts();
        self.standardize_into(row, &mut a.x);
        self.target_mean + self.target_std * self.forward_std(&mut a)
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(Layer::n_params).sum()
    }

    pub fn params_finite(&self) -> bool {
        self.layers.iter().all(|l| l.weights.iter().chain(&l.bias).all(|v| v.is_finite()))
    }

    /// Flattened parameters: per layer, weights then biases.
    pub fn flat_params(&self) -> Vec<f64> {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(&l.bias).copied()).collect()
    }

    pub fn set_flat_params(&mut self, p: &[f64]) {
        let mut k = 0;
        for l in &mut self.layers {
            for v in l.weights.iter_mut().chain(l.bias.iter_mut()) {
                *v = p[k];
                k += 1;
            }
        }
    }

    /// Mean squared error over a batch of standardized rows and its gradient
    /// with respect to the flattened parameters.
    pub fn loss_and_grad(&self, xs: &[&[f64]], ys: &[f64], grad: &mut [f64]) -> f64 {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let [l1, l2, l3] = [&self.layers[0], &self.layers[1], &self.layers[2]];
        let (o1w, o1b) = (0, l1.weights.len());
        let o2w = o1b + l1.bias.len();
        let o2b = o2w + l2.weights.len();
        let o3w = o2b + l2.bias.len();
        let o3b = o3w + l3.weights.len();
        let scale = 2.0 / xs.len() as f64;
        let mut a = self.acts();
        let mut d1 = vec![0.0; HIDDEN[0]];
        let mut loss = 0.0;
        for (x, &y) in xs.iter().zip(ys) {
            a.x.copy_from_slice(x);
            let out = self.forward_std(&mut a);
            let err = out - y;
            loss += err * err;
            let d_out = scale * err;
            grad[o3b] += d_out;
            let mut d2 = [0.0; HIDDEN[1]];
            for k in 0..HIDDEN[1] {
                grad[o3w + k] += d_out * a.h2[k];
                d2[k] = if a.h2[k] > 0.0 { d_out * l3.weights[k] } else { 0.0 };
            }
            d1.iter_mut().for_each(|d| *d = 0.0);
            for k in 0..HIDDEN[1] {
                if d2[k] == 0.0 {
                    continue;
                }
                grad[o2b + k] += d2[k];
                let row = &l2.weights[k * HIDDEN[0]..(k + 1) * HIDDEN[0]];
                let g = &mut grad[o2w + k * HIDDEN[0]..o2w + (k + 1) * HIDDEN[0]];
                for j in 0..HIDDEN[0] {
                    g[j] += d2[k] * a.h1[j];
                    d1[j] += d2[k] * row[j];
                }
            }
            let n_in = l1.n_in;
            for j in 0..HIDDEN[0] {
                if a.h1[j] <= 0.0 || d1[j] == 0.0 {
                    continue;
                }
                grad[o1b + j] += d1[j];
                let g = &mut grad[o1w + j * n_in..o1w + (j + 1) * n_in];
                for (gi, xi) in g.iter_mut().zip(x.iter()) {
                    *gi += d1[j] * xi;
                }
            }
        }
        loss / xs.len() as f64
    }
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn nonzero(std: f64) -> f64 {
    if std > 1e-12 {
        std
    } else {
        1.0
    }
}

pub fn train_mlp(x: &Matrix, y: &[f64], hp: &MlpHyperparams, seed: u64) -> Result<MlpModel> {
    hp.validate()?;
    check_training_set(x, y)?;
    let n = x.n_rows;
    let d = x.n_cols;
    let mut rng = StreamRng::seed_from_u64(seed);
    let mut model = MlpModel::init(d, &mut rng);
    for j in 0..d {
        let (m, s) = mean_std((0..n).map(|i| x.data[i * d + j]));
        model.input_mean[j] = m;
        model.input_std[j] = nonzero(s);
    }
    let (tm, ts) = mean_std(y.iter().copied());
    model.target_mean = tm;
    // A constant target gives a zero output scale: the model then predicts
    // the mean exactly, whatever the (still trained) weights are.
    model.target_std = if ts > 1e-12 { ts } else { 0.0 };

    let mut xs = vec![0.0; n * d];
    for i in 0..n {
        model.standardize_into(x.row(i), &mut xs[i * d..(i + 1) * d]);
    }
    let ys: Vec<f64> = y.iter().map(|v| (v - tm) / nonzero(ts)).collect();

    let n_params = model.n_params();
    let mut params = model.flat_params();
    let mut grad = vec![0.0; n_params];
    let mut m1 = vec![0.0; n_params];
    let mut m2 = vec![0.0; n_params];
    let mut order: Vec<usize> = (0..n).collect();
    let mut t = 0i32;
    let mut batch_x: Vec<&[f64]> = Vec::with_capacity(hp.batch_size);
    let mut batch_y: Vec<f64> = Vec::with_capacity(hp.batch_size);
    for epoch in 0..hp.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(hp.batch_size) {
            batch_x.clear();
            batch_y.clear();
            for &i in chunk {
                batch_x.push(&xs[i * d..(i + 1) * d]);
                batch_y.push(ys[i]);
            }
            let loss = model.loss_and_grad(&batch_x, &batch_y, &mut grad);
            epoch_loss += loss * chunk.len() as f64;
            t += 1;
            let c1 = 1.0 - hp.beta1.powi(t);
            let c2 = 1.0 - hp.beta2.powi(t);
            for k in 0..n_params {
                m1[k] = hp.beta1 * m1[k] + (1.0 - hp.beta1) * grad[k];
                m2[k] = hp.beta2 * m2[k] + (1.0 - hp.beta2) * grad[k] * grad[k];
                params[k] -= hp.learning_rate * (m1[k] / c1) / ((m2[k] / c2).sqrt() + hp.epsilon);
            }
            model.set_flat_params(&params);
        }
        if !epoch_loss.is_finite() {
            return Err(Error::Divergence { epoch });
        }
    }
    if !model.params_finite() {
        return Err(Error::Divergence { epoch: hp.epochs });
    }
    Ok(model)
}
