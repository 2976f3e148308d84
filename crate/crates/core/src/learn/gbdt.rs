//! Squared-error gradient boosting.

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use super::tree::{fit_tree, Presorted, RegressionTree};
use super::{check_training_set, mse, Matrix};
use crate::error::{Error, Result};
use crate::rng::StreamRng;
use rand::SeedableRng;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GbdtHyperparams {
    pub n_rounds: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    /// Fraction of rows used to choose each tree's splits.
    pub subsample: f64,
}

impl Default for GbdtHyperparams {
    fn default() -> Self {
        GbdtHyperparams {
            n_rounds: 200,
            max_depth: 3,
            learning_rate: 0.05,
            subsample: 0.8,
        }
    }
}

impl GbdtHyperparams {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::config("gbdt.learning_rate", "must lie in (0, 1]"));
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return Err(Error::config("gbdt.subsample", "must lie in (0, 1]"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GbdtModel {
    pub trees: Vec<RegressionTree>,
    pub learning_rate: f64,
    pub base_prediction: f64,
    pub input_dim: usize,
    /// Training MSE before the first round and after each round.
    pub train_mse: Vec<f64>,
}

impl GbdtModel {
    /// A model with no trees that always predicts `value`.
    pub fn constant(value: f64, input_dim: usize) -> GbdtModel {
        GbdtModel {
            trees: Vec::new(),
            learning_rate: 1.0,
            base_prediction: value,
            input_dim,
            train_mse: Vec::new(),
        }
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        let s: f64 = self.trees.iter().map(|t| t.predict(row)).sum();
        self.base_prediction + self.learning_rate * s
    }
}

/// Each round draws a row subsample, grows a tree on the current residuals
/// using that subsample, and sets leaf values from all rows. Because leaf
/// values are residual means over the full training set, training MSE never
/// increases with lr ≤ 1.
pub fn train_gbdt(x: &Matrix, y: &[f64], hp: &GbdtHyperparams, seed: u64) -> Result<GbdtModel> {
    hp.validate()?;
    check_training_set(x, y)?;
    let n = x.n_rows;
    let base = y.iter().sum::<f64>() / n as f64;
    let mut pred = vec![base; n];
    let mut model = GbdtModel {
        trees: Vec::with_capacity(hp.n_rounds),
        learning_rate: hp.learning_rate,
        base_prediction: base,
        input_dim: x.n_cols,
        train_mse: vec![mse(&pred, y)],
    };
    if hp.n_rounds == 0 {
        return Ok(model);
    }
    let data = Presorted::new(x);
    let mut rng = StreamRng::seed_from_u64(seed);
    let n_bag = ((n as f64 * hp.subsample).floor() as usize).clamp(1, n);
    let mut in_bag = vec![true; n];
    let mut residual = vec![0.0; n];
    for _ in 0..hp.n_rounds {
        if n_bag < n {
            in_bag.iter_mut().for_each(|b| *b = false);
            for i in sample(&mut rng, n, n_bag) {
                in_bag[i] = true;
            }
        }
        for i in 0..n {
            residual[i] = y[i] - pred[i];
        }
        let (tree, leaf_of) = fit_tree(&data, &residual, &in_bag, hp.max_depth);
        for i in 0..n {
            if let super::tree::Node::Leaf { value } = tree.nodes[leaf_of[i] as usize] {
                pred[i] += hp.learning_rate * value;
            }
        }
        model.train_mse.push(mse(&pred, y));
        model.trees.push(tree);
    }
    Ok(model)
}
