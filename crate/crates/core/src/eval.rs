//! Paired A/B harness: control (heuristic sampler + PSP ranker) against
//! treatment (control followed by the optimizer), over simulated inducts.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{compute_features, Perception};
use crate::learn::AutoregressiveChain;
use crate::optimize::{optimize_pick, OptimizeConfig};
use crate::pick::{
    check_feasible, sample_candidates, simulate_execute, GripperConfig, PickAction, PickOutcome, PickRecord, PickResult,
    WorkspaceConfig, MIN_SEGMENT_CELLS,
};
use crate::rng::{derive_seed, stream, StreamRng};
use crate::scene::{generate_scene, render_sensor, Scene, SceneConfig, SegmentSummary, DEFAULT_RESOLUTION};
use crate::success::{PspModel, TrueSuccessModel};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959964;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CiMethod {
    #[default]
    Normal,
    Wilson,
}

/// Normal-approximation interval p̂ ± z·√(p̂(1−p̂)/n), clamped to [0, 1].
pub fn proportion_ci(k: u64, n: u64, z: f64) -> Result<(f64, f64)> {
    check_counts(k, n)?;
    let p = k as f64 / n as f64;
    let half = z * (p * (1.0 - p) / n as f64).sqrt();
    Ok(((p - half).max(0.0), (p + half).min(1.0)))
}

pub fn wilson_ci(k: u64, n: u64, z: f64) -> Result<(f64, f64)> {
    check_counts(k, n)?;
    let nf = n as f64;
    let p = k as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let center = (p + z2 / (2.0 * nf)) / denom;
    let half = z * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
    Ok(((center - half).max(0.0), (center + half).min(1.0)))
}

fn check_counts(k: u64, n: u64) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidArgument("proportion over zero trials".into()));
    }
    if k > n {
        return Err(Error::InvalidArgument(format!("{k} successes out of {n} trials")));
    }
    Ok(())
}

/// (c − t) / c.
pub fn relative_reduction(c_missed: u64, t_missed: u64) -> Result<f64> {
    if c_missed == 0 {
        return Err(Error::UndefinedBaseline);
    }
    Ok((c_missed as f64 - t_missed as f64) / c_missed as f64)
}

/// Everything needed to plan and execute one pick.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PickingSetup {
    pub resolution: f64,
    pub candidates: usize,
    pub gripper: GripperConfig,
    pub workspace: WorkspaceConfig,
    pub oracle: TrueSuccessModel,
    pub psp: PspModel,
}

impl Default for PickingSetup {
    fn default() -> Self {
        PickingSetup {
            resolution: DEFAULT_RESOLUTION,
            candidates: 8,
            gripper: GripperConfig::default(),
            workspace: WorkspaceConfig::default(),
            oracle: TrueSuccessModel::default(),
            psp: PspModel::default(),
        }
    }
}

impl PickingSetup {
    pub fn validate(&self) -> Result<()> {
        if self.candidates == 0 {
            return Err(Error::config("candidates", "must be ≥ 1"));
        }
        self.psp.validate()
    }

    pub fn perceive(&self, scene: &Scene) -> Result<Perception> {
        Ok(Perception::new(render_sensor(scene, self.resolution)?))
    }

    /// Executes `action` against the hidden oracle.
    pub fn execute(&self, perception: &Perception, action: &PickAction, rng: &mut StreamRng) -> Result<PickOutcome> {
        let p = if check_feasible(action, &self.workspace) {
            self.oracle.prob(&compute_features(perception, &self.gripper, action)?)
        } else {
            0.0
        };
        Ok(simulate_execute(&perception.frame, &self.gripper, &self.workspace, action, |_| p, rng))
    }
}

/// Samples `k` candidates on `segment`, drops infeasible ones and returns the
/// highest-scoring survivor (first on ties), or `None` when none survive.
pub fn run_control_pick(
    perception: &Perception,
    segment: &SegmentSummary,
    k: usize,
    psp: &PspModel,
    gripper: &GripperConfig,
    workspace: &WorkspaceConfig,
    rng: &mut StreamRng,
) -> Result<Option<PickAction>> {
    let mut best: Option<(f64, PickAction)> = None;
    for c in sample_candidates(&perception.frame, gripper, segment, k, rng) {
        if !check_feasible(&c, workspace) {
            continue;
        }
        let s = psp.prob(&compute_features(perception, gripper, &c)?);
        if best.is_none_or(|(b, _)| s > b) {
            best = Some((s, c));
        }
    }
    Ok(best.map(|(_, a)| a))
}

/// Scene, perception and control pick for one induct index.
pub struct PlannedInduct {
    pub scene_seed: u64,
    pub perception: Perception,
    pub control: Option<PickAction>,
}

pub fn plan_induct(scene: &SceneConfig, setup: &PickingSetup, seed: u64, index: u64) -> Result<PlannedInduct> {
    let scene_seed = derive_seed(seed, "induct-scene", index);
    let perception = setup.perceive(&generate_scene(scene, scene_seed)?)?;
    let control = match perception.target_segment(MIN_SEGMENT_CELLS) {
        Some(target) => run_control_pick(
            &perception,
            target,
            setup.candidates,
            &setup.psp,
            &setup.gripper,
            &setup.workspace,
            &mut stream(seed, "induct-candidates", index),
        )?,
        None => None,
    };
    Ok(PlannedInduct {
        scene_seed,
        perception,
        control,
    })
}

/// One logged control-arm pick, as collected for training data.
pub fn collect_pick(scene: &Scene, setup: &PickingSetup, seed: u64, index: u64) -> Result<(PickRecord, Perception)> {
    let perception = setup.perceive(scene)?;
    let action = match perception.target_segment(MIN_SEGMENT_CELLS) {
        Some(t) => run_control_pick(
            &perception,
            t,
            setup.candidates,
            &setup.psp,
            &setup.gripper,
            &setup.workspace,
            &mut stream(seed, "collect-candidates", index),
        )?,
        None => None,
    };
    let outcome = match &action {
        Some(a) => setup.execute(&perception, a, &mut stream(seed, "collect-outcome", index))?,
        None => PickOutcome::infeasible(),
    };
    let record = PickRecord {
        scene_seed: scene.seed,
        pick_index: index,
        action,
        active_cups: action.map(|a| a.cups.into()).unwrap_or_default(),
        outcome: outcome.result,
        multipick: outcome.multipick,
        p_true: outcome.p_true,
    };
    Ok((record, perception))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AbConfig {
    pub inducts: u64,
    pub scene: SceneConfig,
    pub setup: PickingSetup,
    pub optimize: OptimizeConfig,
    pub ci_method: CiMethod,
}

impl Default for AbConfig {
    fn default() -> Self {
        AbConfig {
            inducts: 50_000,
            scene: SceneConfig::default(),
            setup: PickingSetup::default(),
            optimize: OptimizeConfig::default(),
            ci_method: CiMethod::Normal,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateCi {
    pub rate: f64,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArmReport {
    pub inducts: u64,
    pub successes: u64,
    pub missed: u64,
    pub infeasible: u64,
    pub multipick: u64,
    pub missed_rate: RateCi,
    pub infeasible_rate: RateCi,
    pub multipick_rate: RateCi,
    /// Mean oracle success probability over executed picks.
    pub mean_p_true: f64,
}

impl ArmReport {
    pub fn from_outcomes(outcomes: &[PickOutcome], method: CiMethod) -> Result<ArmReport> {
        let n = outcomes.len() as u64;
        let count = |f: &dyn Fn(&PickOutcome) -> bool| outcomes.iter().filter(|o| f(o)).count() as u64;
        let successes = count(&|o| o.result == PickResult::Success);
        let missed = count(&|o| o.result == PickResult::Missed);
        let infeasible = count(&|o| o.result == PickResult::Infeasible);
        let multipick = count(&|o| o.multipick);
        let rate = |k: u64| -> Result<RateCi> {
            let (lo, hi) = match method {
                CiMethod::Normal => proportion_ci(k, n, Z95)?,
                CiMethod::Wilson => wilson_ci(k, n, Z95)?,
            };
            Ok(RateCi {
                rate: k as f64 / n as f64,
                lo,
                hi,
            })
        };
        let executed = n - infeasible;
        let p_sum: f64 = outcomes.iter().filter(|o| o.result != PickResult::Infeasible).map(|o| o.p_true).sum();
        Ok(ArmReport {
            inducts: n,
            successes,
            missed,
            infeasible,
            multipick,
            missed_rate: rate(missed)?,
            infeasible_rate: rate(infeasible)?,
            multipick_rate: rate(multipick)?,
            mean_p_true: if executed > 0 { p_sum / executed as f64 } else { 0.0 },
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AbReport {
    pub seed: u64,
    pub ci_method: CiMethod,
    pub control: ArmReport,
    pub treatment: ArmReport,
    /// `None` when the control arm has no missed picks.
    pub relative_missed_reduction: Option<f64>,
    /// Missed-rate confidence intervals do not overlap.
    pub significant: bool,
}

/// Control and treatment outcomes of one induct. Both arms see the same
/// scene, candidates and outcome draw.
pub fn run_induct(config: &AbConfig, chain: &AutoregressiveChain, seed: u64, index: u64) -> Result<(PickOutcome, PickOutcome)> {
    let setup = &config.setup;
    let plan = plan_induct(&config.scene, setup, seed, index)?;
    let Some(control) = plan.control else {
        return Ok((PickOutcome::infeasible(), PickOutcome::infeasible()));
    };
    let (optimized, _) = optimize_pick(&plan.perception, &setup.gripper, &control, chain, &setup.psp, &config.optimize)?;
    // An optimized pose that fails feasibility falls back to the control pick.
    let treatment = if check_feasible(&optimized, &setup.workspace) {
        optimized
    } else {
        control
    };
    let c = setup.execute(&plan.perception, &control, &mut stream(seed, "induct-outcome", index))?;
    let t = if treatment == control {
        c
    } else {
        setup.execute(&plan.perception, &treatment, &mut stream(seed, "induct-outcome", index))?
    };
    Ok((c, t))
}

pub fn run_ab(config: &AbConfig, chain: &AutoregressiveChain, seed: u64) -> Result<AbReport> {
    config.setup.validate()?;
    config.scene.validate()?;
    config.optimize.validate()?;
    chain.validate()?;
    if config.inducts == 0 {
        return Err(Error::config("inducts", "must be ≥ 1"));
    }
    let indices: Vec<u64> = (0..config.inducts).collect();
    let results = crate::par_map(&indices, |&i| run_induct(config, chain, seed, i));
    let mut c = Vec::with_capacity(results.len());
    let mut t = Vec::with_capacity(results.len());
    for r in results {
        let (a, b) = r?;
        c.push(a);
        t.push(b);
    }
    let control = ArmReport::from_outcomes(&c, config.ci_method)?;
    let treatment = ArmReport::from_outcomes(&t, config.ci_method)?;
    let significant =
        treatment.missed_rate.hi < control.missed_rate.lo || control.missed_rate.hi < treatment.missed_rate.lo;
    Ok(AbReport {
        seed,
        ci_method: config.ci_method,
        relative_missed_reduction: relative_reduction(control.missed, treatment.missed).ok(),
        significant,
        control,
        treatment,
    })
}

impl AbReport {
    /// Plain-text table: one row per metric and group.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<16} {:<5} {:>9} {:>9} {:>9}  {:<22}",
            "Metric", "Group", "Count", "Inducts", "Rate", "95% CI"
        );
        let rows: [(&str, fn(&ArmReport) -> (u64, RateCi)); 3] = [
            ("Missed picks", |a| (a.missed, a.missed_rate)),
            ("Infeasible pick", |a| (a.infeasible, a.infeasible_rate)),
            ("Multi-pick", |a| (a.multipick, a.multipick_rate)),
        ];
        for (name, get) in rows {
            for (group, arm) in [("C", &self.control), ("T", &self.treatment)] {
                let (k, r) = get(arm);
                let _ = writeln!(
                    s,
                    "{:<16} {:<5} {:>9} {:>9} {:>8.2}%  [{:.2}%, {:.2}%]",
                    name,
                    group,
                    k,
                    arm.inducts,
                    100.0 * r.rate,
                    100.0 * r.lo,
                    100.0 * r.hi
                );
            }
        }
        match self.relative_missed_reduction {
            Some(r) => {
                let _ = writeln!(s, "Relative missed-pick reduction: {:.2}%", 100.0 * r);
            }
            None => {
                let _ = writeln!(s, "Relative missed-pick reduction: undefined (no control misses)");
            }
        }
        let _ = writeln!(s, "Missed-rate CIs non-overlapping: {}", if self.significant { "yes" } else { "no" });
        s
    }
}
