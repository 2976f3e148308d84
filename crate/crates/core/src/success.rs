//! Pick-success probability models.
//!
//! [`TrueSuccessModel`] is the simulator's hidden ground truth, a logistic
//! model over the pick features. [`PspModel`] is the scoring model available
//! to the ranker and the optimizer: the truth plus a fixed, feature-keyed
//! pseudo-noise and output quantization, so optimizing it is not the same as
//! optimizing the truth.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{feature_index, FeatureVector, FEATURE_DIM, IDX_BOUNDARY, IDX_KIND};
use crate::rng::splitmix64;
use crate::scene::PackageKind;

pub fn logistic(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

/// Serialized form of the logistic oracle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrueSuccessConfig {
    pub bias: f64,
    /// Linear weights keyed by feature name.
    pub weights: BTreeMap<String, f64>,
    pub kind_penalties: BTreeMap<PackageKind, f64>,
    /// Hinge on proximity to the segment edge:
    /// `edge_weight · max(0, edge_margin − dist_to_boundary)`.
    pub edge_margin: f64,
    pub edge_weight: f64,
}

impl Default for TrueSuccessConfig {
    fn default() -> Self {
        let weights = [
            ("n_active_cups", 0.9),
            ("plane_fit_rmse", -120.0),
            ("cup_align_mean", -2.0),
            ("pkg_height", -1.5),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        TrueSuccessConfig {
            bias: -2.5,
            weights,
            kind_penalties: BTreeMap::from([
                (PackageKind::Box, 0.0),
                (PackageKind::Polybag, -0.4),
                (PackageKind::Envelope, -0.2),
            ]),
            edge_margin: 0.05,
            edge_weight: -3.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TrueSuccessConfig", into = "TrueSuccessConfig")]
pub struct TrueSuccessModel {
    config: TrueSuccessConfig,
    dense: Vec<f64>,
    kind: [f64; 3],
}

impl TryFrom<TrueSuccessConfig> for TrueSuccessModel {
    type Error = Error;

    fn try_from(config: TrueSuccessConfig) -> Result<Self> {
        let mut dense = vec![0.0; FEATURE_DIM];
        for (name, &w) in &config.weights {
            let i = feature_index(name).ok_or_else(|| Error::config(format!("weights.{name}"), "unknown feature name"))?;
            if !w.is_finite() {
                return Err(Error::config(format!("weights.{name}"), "weight must be finite"));
            }
            dense[i] = w;
        }
        let mut kind = [0.0; 3];
        for (k, &p) in &config.kind_penalties {
            kind[k.index()] = p;
        }
        Ok(TrueSuccessModel { config, dense, kind })
    }
}

impl From<TrueSuccessModel> for TrueSuccessConfig {
    fn from(m: TrueSuccessModel) -> Self {
        m.config
    }
}

impl Default for TrueSuccessModel {
    fn default() -> Self {
        TrueSuccessModel::try_from(TrueSuccessConfig::default()).expect("default weights are valid")
    }
}

impl TrueSuccessModel {
    pub fn config(&self) -> &TrueSuccessConfig {
        &self.config
    }

    pub fn logit(&self, phi: &FeatureVector) -> f64 {
        let v = phi.values();
        let mut t = self.config.bias;
        for (w, x) in self.dense.iter().zip(v) {
            if *w != 0.0 {
                t += w * x;
            }
        }
        let deficit = (self.config.edge_margin - v[IDX_BOUNDARY]).max(0.0);
        if self.config.edge_weight != 0.0 && deficit > 0.0 {
            t += self.config.edge_weight * deficit;
        }
        for k in 0..3 {
            if v[IDX_KIND + k] != 0.0 {
                t += self.kind[k] * v[IDX_KIND + k];
            }
        }
        t
    }

    pub fn prob(&self, phi: &FeatureVector) -> f64 {
        logistic(self.logit(phi))
    }
}

pub fn true_prob(model: &TrueSuccessModel, phi: &FeatureVector) -> f64 {
    model.prob(phi)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PspModel {
    pub base: TrueSuccessModel,
    pub noise_amplitude: f64,
    /// Output quantization step; 0 disables quantization.
    pub smoothing: f64,
}

impl Default for PspModel {
    fn default() -> Self {
        PspModel {
            base: TrueSuccessModel::default(),
            noise_amplitude: 0.03,
            smoothing: 0.01,
        }
    }
}

/// Feature values are snapped to this grid before hashing so that
/// last-bit differences in a recomputed φ do not change the noise.
const HASH_QUANTUM: f64 = 1e-7;

/// Fixed pseudo-noise in [−1, 1] keyed by the (quantized) feature values.
pub fn feature_noise(phi: &FeatureVector) -> f64 {
    let mut h: u64 = 0x5EED_0F_F00D;
    for &v in phi.values() {
        let q = (v / HASH_QUANTUM).round() as i64;
        h = splitmix64(h ^ q as u64);
    }
    let u = (h >> 11) as f64 / (1u64 << 53) as f64;
    2.0 * u - 1.0
}

impl PspModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.noise_amplitude >= 0.0) {
            return Err(Error::config("psp.noise_amplitude", "must be ≥ 0"));
        }
        if !(self.smoothing >= 0.0) {
            return Err(Error::config("psp.smoothing", "must be ≥ 0"));
        }
        Ok(())
    }

    pub fn prob(&self, phi: &FeatureVector) -> f64 {
        let mut p = self.base.prob(phi);
        if self.noise_amplitude > 0.0 {
            p += self.noise_amplitude * feature_noise(phi);
        }
        p = p.clamp(0.0, 1.0);
        if self.smoothing > 0.0 {
            p = ((p / self.smoothing).round() * self.smoothing).clamp(0.0, 1.0);
        }
        p
    }
}

pub fn psp_prob(model: &PspModel, phi: &FeatureVector) -> f64 {
    model.prob(phi)
}
