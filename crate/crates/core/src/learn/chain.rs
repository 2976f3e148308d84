//! The G_x → G_y → G_r regressor cascade.

use serde::{Deserialize, Serialize};

use super::{train_gbdt, train_mlp, GbdtHyperparams, GbdtModel, Matrix, MlpHyperparams, ModelKind, Regressor};
use crate::datagen::{Dataset, NoiseConfig, TrainingPair};
use crate::error::{Error, Result};
use crate::features::{FeatureVector, FEATURE_DIM};
use crate::rng::derive_seed;
use crate::FORMAT_VERSION;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChainHyperparams {
    pub gbdt: GbdtHyperparams,
    pub mlp: MlpHyperparams,
    /// Feed ground-truth upstream deltas to G_y and G_r during training
    /// (otherwise the upstream models' own predictions).
    pub teacher_forcing: bool,
}

impl Default for ChainHyperparams {
    fn default() -> Self {
        ChainHyperparams {
            gbdt: GbdtHyperparams::default(),
            mlp: MlpHyperparams::default(),
            teacher_forcing: true,
        }
    }
}

impl ChainHyperparams {
    pub fn new() -> Self {
        Self::default()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AutoregressiveChain {
    pub kind: ModelKind,
    pub feature_dim: usize,
    pub noise: NoiseConfig,
    pub hyperparams: ChainHyperparams,
    pub seed: u64,
    pub g_x: Regressor,
    pub g_y: Regressor,
    pub g_r: Regressor,
}

impl AutoregressiveChain {
    /// A chain that always predicts `delta`; `[0, 0, 0]` makes the optimizer
    /// a no-op.
    pub fn constant(delta: [f64; 3]) -> AutoregressiveChain {
        let g = |v: f64, d: usize| Regressor::Gbdt(GbdtModel::constant(v, d));
        AutoregressiveChain {
            kind: ModelKind::Gbdt,
            feature_dim: FEATURE_DIM,
            noise: NoiseConfig::default(),
            hyperparams: ChainHyperparams::new(),
            seed: 0,
            g_x: g(delta[0], FEATURE_DIM),
            g_y: g(delta[1], FEATURE_DIM + 1),
            g_r: g(delta[2], FEATURE_DIM + 2),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [self.g_x.input_dim(), self.g_y.input_dim(), self.g_r.input_dim()];
        let want = [self.feature_dim, self.feature_dim + 1, self.feature_dim + 2];
        for (got, expected) in dims.into_iter().zip(want) {
            if got != expected {
                return Err(Error::DimensionMismatch { expected, got });
            }
        }
        if [&self.g_x, &self.g_y, &self.g_r].iter().any(|g| g.kind() != self.kind) {
            return Err(Error::Format("chain members must share one model kind".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&ModelFile {
            format_version: FORMAT_VERSION,
            chain: self.clone(),
        })?)
    }

    pub fn from_json(text: &str) -> Result<AutoregressiveChain> {
        #[derive(Deserialize)]
        struct Probe {
            format_version: u32,
        }
        let probe: Probe = serde_json::from_str(text).map_err(|e| Error::Format(format!("model file: {e}")))?;
        if probe.format_version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "model format version {} is not supported (expected {FORMAT_VERSION})",
                probe.format_version
            )));
        }
        let file: ModelFile = serde_json::from_str(text).map_err(|e| Error::Format(format!("model file: {e}")))?;
        file.chain.validate()?;
        Ok(file.chain)
    }
}

/// On-disk model document.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub chain: AutoregressiveChain,
}

fn fit(kind: ModelKind, x: &Matrix, y: &[f64], hp: &ChainHyperparams, seed: u64) -> Result<Regressor> {
    Ok(match kind {
        ModelKind::Gbdt => Regressor::Gbdt(train_gbdt(x, y, &hp.gbdt, seed)?),
        ModelKind::Mlp => Regressor::Mlp(train_mlp(x, y, &hp.mlp, seed)?),
    })
}

fn targets(pairs: &[TrainingPair], k: usize) -> Vec<f64> {
    pairs.iter().map(|p| p.delta[k]).collect()
}

/// Trains the three members on the dataset's training side.
pub fn train_chain(dataset: &Dataset, kind: ModelKind, hp: &ChainHyperparams, seed: u64) -> Result<AutoregressiveChain> {
    let pairs = &dataset.train;
    if pairs.is_empty() {
        return Err(Error::EmptyDataset("training split is empty".into()));
    }
    let mut x = Matrix::new(FEATURE_DIM);
    x.data.reserve(pairs.len() * FEATURE_DIM);
    for p in pairs {
        x.push_row(p.phi.values())?;
    }
    let (tx, ty, tr) = (targets(pairs, 0), targets(pairs, 1), targets(pairs, 2));
    let seeds = [derive_seed(seed, "g_x", 0), derive_seed(seed, "g_y", 0), derive_seed(seed, "g_r", 0)];

    let (g_x, g_y, g_r) = if hp.teacher_forcing {
        // Members are independent given true upstream targets.
        let xy = x.with_column(&tx);
        let xyr = xy.with_column(&ty);
        let jobs: [(&Matrix, &[f64], u64); 3] = [(&x, &tx, seeds[0]), (&xy, &ty, seeds[1]), (&xyr, &tr, seeds[2])];
        let mut fitted = crate::par_map(&jobs, |(m, y, s)| fit(kind, m, y, hp, *s)).into_iter();
        (
            fitted.next().unwrap()?,
            fitted.next().unwrap()?,
            fitted.next().unwrap()?,
        )
    } else {
        let g_x = fit(kind, &x, &tx, hp, seeds[0])?;
        let px: Vec<f64> = (0..x.n_rows).map(|i| g_x.predict(x.row(i))).collect();
        let xy = x.with_column(&px);
        let g_y = fit(kind, &xy, &ty, hp, seeds[1])?;
        let py: Vec<f64> = (0..xy.n_rows).map(|i| g_y.predict(xy.row(i))).collect();
        let g_r = fit(kind, &xy.with_column(&py), &tr, hp, seeds[2])?;
        (g_x, g_y, g_r)
    };
    Ok(AutoregressiveChain {
        kind,
        feature_dim: FEATURE_DIM,
        noise: dataset.noise,
        hyperparams: *hp,
        seed,
        g_x,
        g_y,
        g_r,
    })
}

/// (dx, dy, dr) with each member fed the predictions upstream of it.
pub fn predict_chain(chain: &AutoregressiveChain, phi: &FeatureVector) -> Result<[f64; 3]> {
    let v = phi.values();
    if v.len() != chain.feature_dim {
        return Err(Error::DimensionMismatch {
            expected: chain.feature_dim,
            got: v.len(),
        });
    }
    let mut row = Vec::with_capacity(chain.feature_dim + 2);
    row.extend_from_slice(v);
    let dx = chain.g_x.predict(&row);
    row.push(dx);
    let dy = chain.g_y.predict(&row);
    row.push(dy);
    let dr = chain.g_r.predict(&row);
    Ok([dx, dy, dr])
}

/// Held-out RMSE per dimension (m, m, rad) under inference-time inputs.
pub fn rmse_by_dimension(chain: &AutoregressiveChain, pairs: &[TrainingPair]) -> Result<[f64; 3]> {
    if pairs.is_empty() {
        return Err(Error::EmptyDataset("no pairs to evaluate".into()));
    }
    let mut sse = [0.0; 3];
    for p in pairs {
        let pred = predict_chain(chain, &p.phi)?;
        for k in 0..3 {
            sse[k] += (pred[k] - p.delta[k]).powi(2);
        }
    }
    Ok(sse.map(|s| (s / pairs.len() as f64).sqrt()))
}
