//! Iterative pick refinement: step by the chain's predicted delta, re-derive
//! the pick, score it, and keep the best pose seen.

use serde::{Deserialize, Serialize};

use crate::datagen::apply_delta;
use crate::error::{Error, Result};
use crate::features::{compute_features, Perception};
use crate::learn::{predict_chain, AutoregressiveChain};
use crate::pick::{GripperConfig, PickAction};
use crate::success::PspModel;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizeConfig {
    pub iterations: usize,
    /// Multiplier on the predicted delta.
    pub step_size: f64,
    /// Stop once |dx|, |dy| and |dr| all fall below these.
    pub min_step: [f64; 3],
}

impl Default for OptimizeConfig {
    fn default() -> Self {
        OptimizeConfig {
            iterations: 3,
            step_size: 1.0,
            min_step: [1e-4, 1e-4, 1e-3],
        }
    }
}

impl OptimizeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::config("optimize.iterations", "must be ≥ 1"));
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::config("optimize.step_size", "must be > 0"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub action: PickAction,
    pub score: f64,
    pub n_cups: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefinementTrace {
    pub steps: Vec<TraceStep>,
    pub best_index: usize,
    /// Chain evaluations performed, including one that triggered an early
    /// stop.
    pub iterations_run: usize,
    pub early_stopped: bool,
}

/// Index of the first maximal score.
pub fn best_so_far(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

/// Snaps (x, y) to the nearest cell center of `segment` when it lies off it.
fn clamp_to_segment(p: &Perception, segment: i32, x: f64, y: f64) -> Option<(f64, f64)> {
    if p.frame.segment_at(x, y) == segment {
        return Some((x, y));
    }
    let seg = p.segments.get(&segment)?;
    let nx = p.frame.nx;
    seg.cells
        .iter()
        .map(|&k| {
            let (cx, cy) = p.frame.cell_center(k % nx, k / nx);
            ((cx - x).powi(2) + (cy - y).powi(2), cx, cy)
        })
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, cx, cy)| (cx, cy))
}

pub fn optimize_pick(
    perception: &Perception,
    gripper: &GripperConfig,
    initial: &PickAction,
    chain: &AutoregressiveChain,
    psp: &PspModel,
    config: &OptimizeConfig,
) -> Result<(PickAction, RefinementTrace)> {
    config.validate()?;
    let target = initial.target_segment;
    let mut phi = compute_features(perception, gripper, initial)?;
    let mut steps = vec![TraceStep {
        action: *initial,
        score: psp.prob(&phi),
        n_cups: initial.cups.len(),
    }];
    let mut current = *initial;
    let mut iterations_run = 0;
    let mut early_stopped = false;
    for _ in 0..config.iterations {
        iterations_run += 1;
        let delta = predict_chain(chain, &phi)?.map(|d| d * config.step_size);
        if (0..3).all(|k| delta[k].abs() < config.min_step[k]) {
            early_stopped = true;
            break;
        }
        let [x, y, r] = apply_delta(current.pose(), delta);
        let Some((x, y)) = clamp_to_segment(perception, target, x, y) else {
            break;
        };
        let Ok(next) = PickAction::new(&perception.frame, gripper, x, y, r) else {
            break;
        };
        if next.target_segment != target {
            break;
        }
        phi = compute_features(perception, gripper, &next)?;
        steps.push(TraceStep {
            action: next,
            score: psp.prob(&phi),
            n_cups: next.cups.len(),
        });
        current = next;
    }
    let scores: Vec<f64> = steps.iter().map(|s| s.score).collect();
    let best_index = best_so_far(&scores);
    let best = steps[best_index].action;
    Ok((
        best,
        RefinementTrace {
            steps,
            best_index,
            iterations_run,
            early_stopped,
        },
    ))
}

/// Element-wise [`optimize_pick`]; one item's failure does not stop the rest.
pub fn optimize_batch(
    items: &[(&Perception, PickAction)],
    gripper: &GripperConfig,
    chain: &AutoregressiveChain,
    psp: &PspModel,
    config: &OptimizeConfig,
) -> Vec<Result<(PickAction, RefinementTrace)>> {
    crate::par_map(items, |(p, a)| optimize_pick(p, gripper, a, chain, psp, config))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::Perception;
    use crate::scene::{render_sensor, Bounds, PackageKind, PackageSpec, Scene};

    fn perception() -> Perception {
        let packages = vec![
            PackageSpec {
                id: 1,
                kind: PackageKind::Box,
                center: [0.5, 0.5, 0.1],
                yaw: 0.0,
                dims: [0.4, 0.3, 0.2],
                top_tilt: [0.0, 0.0],
            },
            PackageSpec {
                id: 2,
                kind: PackageKind::Polybag,
                center: [0.9, 0.5, 0.05],
                yaw: 0.4,
                dims: [0.25, 0.2, 0.1],
                top_tilt: [0.05, 0.0],
            },
        ];
        Perception::new(
            render_sensor(
                &Scene {
                    packages,
                    conveyor_bounds: Bounds::default(),
                    seed: 0,
                },
                0.005,
            )
            .unwrap(),
        )
    }

    fn action(p: &Perception, x: f64, y: f64, r: f64) -> PickAction {
        PickAction::new(&p.frame, &GripperConfig::default(), x, y, r).unwrap()
    }

    #[test]
    fn zero_chain_is_a_fixed_point() {
        let p = perception();
        let a = action(&p, 0.62, 0.55, 0.3);
        let (best, trace) = optimize_pick(
            &p,
            &GripperConfig::default(),
            &a,
            &AutoregressiveChain::constant([0.0; 3]),
            &PspModel::default(),
            &OptimizeConfig::default(),
        )
        .unwrap();
        assert_eq!(best, a);
        assert_eq!(trace.steps.len(), 1);
        assert!(trace.early_stopped);
    }

    #[test]
    fn fig_four_trajectory_keeps_the_peak() {
        assert_eq!(best_so_far(&[0.30, 0.77, 0.95, 0.94]), 2);
        assert_eq!(best_so_far(&[0.5, 0.5, 0.4]), 0);
    }

    #[test]
    fn constant_step_moves_toward_the_center() {
        // From the box's +x edge, a constant −x step should add cups.
        let p = perception();
        let g = GripperConfig::default();
        let a = action(&p, 0.66, 0.5, 0.0);
        let (best, trace) = optimize_pick(
            &p,
            &g,
            &a,
            &AutoregressiveChain::constant([-0.03, 0.0, 0.0]),
            &PspModel::default(),
            &OptimizeConfig::default(),
        )
        .unwrap();
        assert_eq!(trace.steps.len(), 4);
        assert!(trace.steps[trace.best_index].score >= trace.steps[0].score);
        assert!(best.cups.len() > a.cups.len());
        assert_eq!(best.cups, crate::pick::activate_cups(&p.frame, &g, best.x, best.y, best.r));
    }

    #[test]
    fn steps_off_the_segment_are_clamped() {
        let p = perception();
        let g = GripperConfig::default();
        let a = action(&p, 0.6, 0.5, 0.0);
        let (_, trace) = optimize_pick(
            &p,
            &g,
            &a,
            &AutoregressiveChain::constant([0.5, 0.0, 0.0]),
            &PspModel::default(),
            &OptimizeConfig::default(),
        )
        .unwrap();
        for s in &trace.steps {
            assert_eq!(s.action.target_segment, 1);
            assert!(s.action.x <= 0.7);
        }
        assert!(trace.steps.len() <= 4);
    }

    #[test]
    fn batch_matches_single_and_keeps_order() {
        let p = perception();
        let g = GripperConfig::default();
        let chain = AutoregressiveChain::constant([0.01, -0.01, 0.1]);
        let psp = PspModel::default();
        let cfg = OptimizeConfig::default();
        let acts = [action(&p, 0.6, 0.5, 0.0), action(&p, 0.45, 0.45, 0.5), action(&p, 0.9, 0.5, 0.0)];
        let items: Vec<(&Perception, PickAction)> = acts.iter().map(|a| (&p, *a)).collect();
        let out = optimize_batch(&items, &g, &chain, &psp, &cfg);
        let mut rev = items.clone();
        rev.reverse();
        let out_rev = optimize_batch(&rev, &g, &chain, &psp, &cfg);
        for (i, a) in acts.iter().enumerate() {
            let single = optimize_pick(&p, &g, a, &chain, &psp, &cfg).unwrap();
            assert_eq!(out[i].as_ref().unwrap(), &single);
            assert_eq!(out_rev[2 - i].as_ref().unwrap(), &single);
        }
    }

    #[test]
    fn zero_iterations_rejected() {
        let p = perception();
        let r = optimize_pick(
            &p,
            &GripperConfig::default(),
            &action(&p, 0.5, 0.5, 0.0),
            &AutoregressiveChain::constant([0.0; 3]),
            &PspModel::default(),
            &OptimizeConfig {
                iterations: 0,
                ..Default::default()
            },
        );
        assert!(matches!(r, Err(Error::Config { .. })));
    }
}
