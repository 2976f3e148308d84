//! Training pairs for the refinement chain.
//!
//! Each executed pick is perturbed `n_perturb` times; every (original,
//! perturbed) pair is scored with the PSP model and turned into a step δ that
//! points from the lower-scoring action to the higher-scoring one, together
//! with the features of the lower one.

use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{compute_features, FeatureVector, Perception, FEATURE_DIM};
use crate::pick::{wrap_angle, GripperConfig, PickAction};
use crate::rng::{stream, StreamRng};
use crate::success::PspModel;
use crate::{par_map, FORMAT_VERSION};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseConfig {
    pub sigma_pos: f64,
    pub sigma_rot: f64,
    pub n_perturb: usize,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            sigma_pos: 0.02,
            sigma_rot: 0.30,
            n_perturb: 30,
        }
    }
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_pos > 0.0 && self.sigma_pos.is_finite()) {
            return Err(Error::config("noise.sigma_pos", "must be > 0"));
        }
        if !(self.sigma_rot > 0.0 && self.sigma_rot.is_finite()) {
            return Err(Error::config("noise.sigma_rot", "must be > 0"));
        }
        if self.n_perturb == 0 {
            return Err(Error::config("noise.n_perturb", "must be ≥ 1"));
        }
        Ok(())
    }
}

/// Applies a (dx, dy, dr) step to a pose, wrapping the rotation.
pub fn apply_delta(pose: [f64; 3], delta: [f64; 3]) -> [f64; 3] {
    [pose[0] + delta[0], pose[1] + delta[1], wrap_angle(pose[2] + delta[2])]
}

/// Adds Gaussian noise to (x, y, r) and re-derives everything else. Exactly
/// three normal draws are taken whether or not the result is accepted.
pub fn perturb(
    frame: &crate::scene::SensorFrame,
    gripper: &GripperConfig,
    action: &PickAction,
    noise: &NoiseConfig,
    rng: &mut StreamRng,
) -> Result<PickAction> {
    let pos = Normal::new(0.0, noise.sigma_pos).map_err(|e| Error::config("noise.sigma_pos", e.to_string()))?;
    let rot = Normal::new(0.0, noise.sigma_rot).map_err(|e| Error::config("noise.sigma_rot", e.to_string()))?;
    let (dx, dy, dr) = (pos.sample(rng), pos.sample(rng), rot.sample(rng));
    let x = action.x + dx;
    let y = action.y + dy;
    if frame.segment_at(x, y) != action.target_segment {
        return Err(Error::OffSegment);
    }
    PickAction::new(frame, gripper, x, y, wrap_angle(action.r + dr))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Provenance {
    pub scene_seed: u64,
    pub pick_index: u64,
    pub perturbation_index: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingPair {
    pub phi: FeatureVector,
    pub delta: [f64; 3],
    pub p_low: f64,
    pub p_high: f64,
    /// Pose the features were computed at; `apply_delta(pose_low, delta)`
    /// reproduces the higher-scoring pose up to rounding.
    pub pose_low: [f64; 3],
    pub provenance: Provenance,
}

fn step_between(from: [f64; 3], to: [f64; 3]) -> [f64; 3] {
    [to[0] - from[0], to[1] - from[1], wrap_angle(to[2] - from[2])]
}

/// Labels one pair: δ points from the lower-scoring action to the higher one
/// and φ is taken at the lower one. Ties take the second branch (δ from a_i
/// to a_j, φ at a_i).
pub fn label_pair(
    psp: &PspModel,
    perception: &Perception,
    gripper: &GripperConfig,
    a_i: &PickAction,
    a_j: &PickAction,
) -> Result<TrainingPair> {
    let phi_i = compute_features(perception, gripper, a_i)?;
    let p_i = psp.prob(&phi_i);
    let phi_j = compute_features(perception, gripper, a_j)?;
    let p_j = psp.prob(&phi_j);
    Ok(label_scored((a_i, phi_i, p_i), (a_j, phi_j, p_j)))
}

fn label_scored(i: (&PickAction, FeatureVector, f64), j: (&PickAction, FeatureVector, f64)) -> TrainingPair {
    let ((low, phi, p_low), (high, _, p_high)) = if i.2 > j.2 { (j, i) } else { (i, j) };
    TrainingPair {
        phi,
        delta: step_between(low.pose(), high.pose()),
        p_low,
        p_high,
        pose_low: low.pose(),
        provenance: Provenance::default(),
    }
}

/// An executed pick together with the perception it was planned on.
#[derive(Clone, Debug)]
pub struct ExecutedPick<'a> {
    pub scene_seed: u64,
    pub pick_index: u64,
    pub perception: &'a Perception,
    pub action: PickAction,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub train: Vec<TrainingPair>,
    pub test: Vec<TrainingPair>,
    pub noise: NoiseConfig,
    pub feature_dim: usize,
    pub seed: u64,
    pub split_fraction: f64,
}

/// Train/test sizes under the floor rule.
pub fn split_counts(total: usize, fraction: f64) -> (usize, usize) {
    // The epsilon keeps exact products like 10 · 0.7 = 6.999… at 7.
    let train = ((total as f64 * fraction + 1e-9).floor() as usize).min(total);
    (train, total - train)
}

/// Perturbs and labels one pick; pairs come back in perturbation order.
pub fn pairs_for_pick(
    pick: &ExecutedPick<'_>,
    noise: &NoiseConfig,
    psp: &PspModel,
    gripper: &GripperConfig,
    seed: u64,
) -> Result<Vec<TrainingPair>> {
    let mut rng = stream(seed, "perturb", pick.pick_index);
    let perception = pick.perception;
    let phi0 = compute_features(perception, gripper, &pick.action)?;
    let p0 = psp.prob(&phi0);
    let mut out = Vec::with_capacity(noise.n_perturb);
    for j in 0..noise.n_perturb {
        let perturbed = match perturb(&perception.frame, gripper, &pick.action, noise, &mut rng) {
            Ok(a) => a,
            Err(Error::OffSegment | Error::OutOfBounds { .. }) => continue,
            Err(e) => return Err(e),
        };
        let phi = compute_features(perception, gripper, &perturbed)?;
        let p = psp.prob(&phi);
        let mut pair = label_scored((&pick.action, phi0.clone(), p0), (&perturbed, phi, p));
        pair.provenance = Provenance {
            scene_seed: pick.scene_seed,
            pick_index: pick.pick_index,
            perturbation_index: j as u64,
        };
        out.push(pair);
    }
    Ok(out)
}

/// Builds the full dataset. Off-segment perturbations are skipped, not
/// redrawn. Picks are shuffled and assigned whole to the training side until
/// it holds `floor(total · split_fraction)` pairs, so no pick straddles the
/// split.
pub fn build_dataset(
    picks: &[ExecutedPick<'_>],
    noise: &NoiseConfig,
    psp: &PspModel,
    gripper: &GripperConfig,
    split_fraction: f64,
    seed: u64,
) -> Result<Dataset> {
    noise.validate()?;
    psp.validate()?;
    if !(split_fraction > 0.0 && split_fraction < 1.0) {
        return Err(Error::config("split_fraction", "must lie in (0, 1)"));
    }
    if picks.is_empty() {
        return Err(Error::EmptyDataset("no executed picks".into()));
    }
    let per_pick = par_map(picks, |p| pairs_for_pick(p, noise, psp, gripper, seed));
    let mut groups = Vec::with_capacity(per_pick.len());
    for g in per_pick {
        groups.push(g?);
    }
    let total: usize = groups.iter().map(Vec::len).sum();
    if total == 0 {
        return Err(Error::EmptyDataset("every perturbation was rejected".into()));
    }
    let (target, _) = split_counts(total, split_fraction);

    let mut order: Vec<usize> = (0..groups.len()).collect();
    order.shuffle(&mut stream(seed, "split", 0));
    let mut in_train = vec![false; groups.len()];
    let mut n_train = 0;
    for &g in &order {
        if n_train >= target {
            break;
        }
        in_train[g] = true;
        n_train += groups[g].len();
    }
    let mut train = Vec::with_capacity(n_train);
    let mut test = Vec::with_capacity(total - n_train);
    for (g, pairs) in groups.into_iter().enumerate() {
        if in_train[g] {
            train.extend(pairs);
        } else {
            test.extend(pairs);
        }
    }
    Ok(Dataset {
        train,
        test,
        noise: *noise,
        feature_dim: FEATURE_DIM,
        seed,
        split_fraction,
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct DatasetHeader {
    format_version: u32,
    feature_dim: usize,
    noise: NoiseConfig,
    seed: u64,
    split_fraction: f64,
    n_train: usize,
    n_test: usize,
}

#[derive(Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Side {
    Train,
    Test,
}

#[derive(Serialize, Deserialize)]
struct PairLine<P> {
    split: Side,
    #[serde(flatten)]
    pair: P,
}

impl Dataset {
    pub fn all_pairs(&self) -> impl Iterator<Item = &TrainingPair> {
        self.train.iter().chain(&self.test)
    }

    /// JSON lines: a header, then one pair per line tagged with its side.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        let header = DatasetHeader {
            format_version: FORMAT_VERSION,
            feature_dim: self.feature_dim,
            noise: self.noise,
            seed: self.seed,
            split_fraction: self.split_fraction,
            n_train: self.train.len(),
            n_test: self.test.len(),
        };
        serde_json::to_writer(&mut out, &header)?;
        out.write_all(b"\n")?;
        for (side, pairs) in [(Side::Train, &self.train), (Side::Test, &self.test)] {
            for pair in pairs {
                let line = PairLine { split: side, pair };
                serde_json::to_writer(&mut out, &line)?;
                out.write_all(b"\n")?;
            }
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(input: R) -> Result<Dataset> {
        let mut lines = input.lines();
        let first = lines.next().ok_or_else(|| Error::Format("empty dataset file".into()))??;
        let header: DatasetHeader = serde_json::from_str(&first).map_err(|e| Error::Format(format!("dataset header: {e}")))?;
        if header.format_version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "dataset format version {} is not supported (expected {FORMAT_VERSION})",
                header.format_version
            )));
        }
        if header.feature_dim != FEATURE_DIM {
            return Err(Error::DimensionMismatch {
                expected: FEATURE_DIM,
                got: header.feature_dim,
            });
        }
        let mut ds = Dataset {
            train: Vec::with_capacity(header.n_train),
            test: Vec::with_capacity(header.n_test),
            noise: header.noise,
            feature_dim: header.feature_dim,
            seed: header.seed,
            split_fraction: header.split_fraction,
        };
        for (n, line) in lines.enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let parsed: PairLine<TrainingPair> =
                serde_json::from_str(&line).map_err(|e| Error::Format(format!("dataset line {}: {e}", n + 2)))?;
            parsed.pair.phi.check_dim()?;
            match parsed.split {
                Side::Train => ds.train.push(parsed.pair),
                Side::Test => ds.test.push(parsed.pair),
            }
        }
        if ds.train.len() != header.n_train || ds.test.len() != header.n_test {
            return Err(Error::Format("dataset line count disagrees with header".into()));
        }
        Ok(ds)
    }
}
