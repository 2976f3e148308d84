//! Supervised learners written from scratch — regression trees, gradient
//! boosting, a small MLP trained with Adam — and the autoregressive chain
//! that stacks three of them.

pub mod chain;
pub mod gbdt;
pub mod mlp;
pub mod tree;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use chain::{predict_chain, rmse_by_dimension, train_chain, AutoregressiveChain, ChainHyperparams, ModelFile};
pub use gbdt::{train_gbdt, GbdtHyperparams, GbdtModel};
pub use mlp::{train_mlp, MlpHyperparams, MlpModel};
pub use tree::RegressionTree;

/// Dense row-major matrix of training inputs.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Matrix {
    pub n_rows: usize,
    pub n_cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn new(n_cols: usize) -> Matrix {
        Matrix {
            n_rows: 0,
            n_cols,
            data: Vec::new(),
        }
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Matrix> {
        let n_cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut m = Matrix::new(n_cols);
        for r in rows {
            m.push_row(r.as_ref())?;
        }
        Ok(m)
    }

    pub fn push_row(&mut self, row: &[f64]) -> Result<()> {
        if row.len() != self.n_cols {
            return Err(Error::DimensionMismatch {
                expected: self.n_cols,
                got: row.len(),
            });
        }
        self.data.extend_from_slice(row);
        self.n_rows += 1;
        Ok(())
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n_rows).map(|i| self.data[i * self.n_cols + j]).collect()
    }

    /// Copy with one extra column appended.
    pub fn with_column(&self, col: &[f64]) -> Matrix {
        assert_eq!(col.len(), self.n_rows);
        let mut data = Vec::with_capacity(self.n_rows * (self.n_cols + 1));
        for (i, &c) in col.iter().enumerate() {
            data.extend_from_slice(self.row(i));
            data.push(c);
        }
        Matrix {
            n_rows: self.n_rows,
            n_cols: self.n_cols + 1,
            data,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Gbdt,
    Mlp,
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<ModelKind> {
        match s.to_ascii_lowercase().as_str() {
            "gbdt" => Ok(ModelKind::Gbdt),
            "mlp" => Ok(ModelKind::Mlp),
            _ => Err(Error::InvalidArgument(format!("unknown model kind `{s}` (expected gbdt or mlp)"))),
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelKind::Gbdt => "gbdt",
            ModelKind::Mlp => "mlp",
        })
    }
}

/// One scalar regressor of either kind.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "model", rename_all = "lowercase")]
pub enum Regressor {
    Gbdt(GbdtModel),
    Mlp(MlpModel),
}

impl Regressor {
    pub fn kind(&self) -> ModelKind {
        match self {
            Regressor::Gbdt(_) => ModelKind::Gbdt,
            Regressor::Mlp(_) => ModelKind::Mlp,
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            Regressor::Gbdt(m) => m.input_dim,
            Regressor::Mlp(m) => m.input_dim,
        }
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        match self {
            Regressor::Gbdt(m) => m.predict(row),
            Regressor::Mlp(m) => m.predict(row),
        }
    }
}

pub(crate) fn check_training_set(x: &Matrix, y: &[f64]) -> Result<()> {
    if x.n_rows == 0 {
        return Err(Error::EmptyDataset("no training rows".into()));
    }
    if x.n_rows < 10 {
        return Err(Error::InvalidArgument(format!("need at least 10 training rows, got {}", x.n_rows)));
    }
    if y.len() != x.n_rows {
        return Err(Error::DimensionMismatch {
            expected: x.n_rows,
            got: y.len(),
        });
    }
    if y.iter().any(|v| !v.is_finite()) || x.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("training data must be finite".into()));
    }
    Ok(())
}

pub(crate) fn mse(pred: &[f64], y: &[f64]) -> f64 {
    pred.iter().zip(y).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / y.len() as f64
}
