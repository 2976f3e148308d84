use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use pickopt::datagen::{build_dataset, Dataset, ExecutedPick};
use pickopt::eval::{collect_pick, plan_induct, run_ab, AbReport};
use pickopt::learn::{rmse_by_dimension, train_chain, AutoregressiveChain, ModelKind};
use pickopt::optimize::{optimize_pick, RefinementTrace};
use pickopt::pick::{PickAction, PickRecord};
use pickopt::rng::derive_seed;
use pickopt::scene::{generate_scene, Scene, SceneConfig, SensorFrame};
use pickopt::{par_map, FORMAT_VERSION};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::io::{io_err, open, read_jsonl, write_atomic, write_jsonl, Header};
use crate::CliError;

pub const SCENES_KIND: &str = "scenes";
pub const PICKS_KIND: &str = "picks";
pub const TRACES_KIND: &str = "traces";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NoMeta {}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenesMeta {
    pub scene_config: SceneConfig,
}

/// Scene `i` of a scene file is generated from `derive_seed(seed, "scene", i)`.
pub fn scene_seed(seed: u64, index: u64) -> u64 {
    derive_seed(seed, "scene", index)
}

pub fn gen_scenes(cfg: &RunConfig, seed: u64, count: u64, out: &Path) -> Result<(), CliError> {
    cfg.scene.validate()?;
    if count == 0 {
        eprintln!("warning: scene count is 0; writing a header-only file");
    }
    let indices: Vec<u64> = (0..count).collect();
    let scenes = par_map(&indices, |&i| generate_scene(&cfg.scene, scene_seed(seed, i)))
        .into_iter()
        .collect::<pickopt::Result<Vec<Scene>>>()?;
    let header = Header {
        format_version: FORMAT_VERSION,
        kind: SCENES_KIND.into(),
        seed,
        count,
        meta: ScenesMeta {
            scene_config: cfg.scene.clone(),
        },
    };
    write_atomic(out, |w| write_jsonl(w, &header, &scenes))
}

pub fn read_scenes(path: &Path) -> Result<Vec<Scene>, CliError> {
    Ok(read_jsonl::<ScenesMeta, Scene>(path, SCENES_KIND)?.1)
}

pub fn read_picks(path: &Path) -> Result<Vec<PickRecord>, CliError> {
    Ok(read_jsonl::<NoMeta, PickRecord>(path, PICKS_KIND)?.1)
}

/// One control-arm pick per scene; record `i` belongs to scene line `i`.
pub fn collect_picks(cfg: &RunConfig, seed: u64, scenes: &Path, out: &Path) -> Result<Vec<PickRecord>, CliError> {
    cfg.setup.validate()?;
    let scenes = read_scenes(scenes)?;
    let indexed: Vec<(u64, &Scene)> = scenes.iter().enumerate().map(|(i, s)| (i as u64, s)).collect();
    let records = par_map(&indexed, |&(i, s)| collect_pick(s, &cfg.setup, seed, i).map(|(r, _)| r))
        .into_iter()
        .collect::<pickopt::Result<Vec<_>>>()?;
    let header = Header {
        format_version: FORMAT_VERSION,
        kind: PICKS_KIND.into(),
        seed,
        count: records.len() as u64,
        meta: NoMeta {},
    };
    write_atomic(out, |w| write_jsonl(w, &header, &records))?;
    Ok(records)
}

fn scene_for<'a>(scenes: &'a [Scene], rec: &PickRecord) -> Result<&'a Scene, CliError> {
    let scene = scenes
        .get(rec.pick_index as usize)
        .ok_or_else(|| CliError::Format(format!("pick {} has no matching scene", rec.pick_index)))?;
    if scene.seed != rec.scene_seed {
        return Err(CliError::Format(format!(
            "pick {} was logged on scene seed {}, but the scene file holds {}",
            rec.pick_index, rec.scene_seed, scene.seed
        )));
    }
    Ok(scene)
}

/// Perturbs and labels every executed pick in the log.
pub fn gen_dataset(cfg: &RunConfig, seed: u64, scenes: &Path, picks: &Path, out: &Path) -> Result<Dataset, CliError> {
    cfg.validate()?;
    let scenes = read_scenes(scenes)?;
    let records = read_picks(picks)?;
    let executed: Vec<(&PickRecord, PickAction)> = records.iter().filter_map(|r| r.action.map(|a| (r, a))).collect();
    for (r, _) in &executed {
        scene_for(&scenes, r)?;
    }
    let perceptions = par_map(&executed, |(r, _)| cfg.setup.perceive(&scenes[r.pick_index as usize]))
        .into_iter()
        .collect::<pickopt::Result<Vec<_>>>()?;
    let picks: Vec<ExecutedPick> = executed
        .iter()
        .zip(&perceptions)
        .map(|((r, a), p)| ExecutedPick {
            scene_seed: r.scene_seed,
            pick_index: r.pick_index,
            perception: p,
            action: *a,
        })
        .collect();
    let ds = build_dataset(&picks, &cfg.noise, &cfg.setup.psp, &cfg.setup.gripper, cfg.split_fraction, seed)?;
    write_atomic(out, |w| ds.write_jsonl(w).map_err(CliError::from))?;
    Ok(ds)
}

pub fn read_dataset(path: &Path) -> Result<Dataset, CliError> {
    Ok(Dataset::read_jsonl(open(path)?)?)
}

pub fn read_model(path: &Path) -> Result<AutoregressiveChain, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Runtime(format!("cannot open {}: {e}", path.display())))?;
    Ok(AutoregressiveChain::from_json(&text)?)
}

pub fn write_model(chain: &AutoregressiveChain, out: &Path) -> Result<(), CliError> {
    let text = chain.to_json()?;
    write_atomic(out, |w| w.write_all(text.as_bytes()).map_err(io_err))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub kind: ModelKind,
    pub n_train: usize,
    pub n_test: usize,
    /// Held-out RMSE of (dx, dy, dr).
    pub rmse: [f64; 3],
}

/// RMSE table with one row per refined dimension.
pub fn rmse_table(summary: &TrainSummary) -> String {
    let mut s = String::new();
    let col = format!("RMSE ({})", summary.kind.to_string().to_uppercase());
    let _ = writeln!(s, "{:<16} {:>12}", "", col);
    for (label, v) in ["p_x (meters)", "p_y (meters)", "r_z (radians)"].iter().zip(summary.rmse) {
        let _ = writeln!(s, "{label:<16} {v:>12.5}");
    }
    s
}

pub fn train(cfg: &RunConfig, seed: u64, dataset: &Path, kind: ModelKind, out: &Path) -> Result<TrainSummary, CliError> {
    cfg.validate()?;
    let ds = read_dataset(dataset)?;
    let chain = train_chain(&ds, kind, &cfg.hyperparams, seed)?;
    let eval_on = if ds.test.is_empty() { &ds.train } else { &ds.test };
    let rmse = rmse_by_dimension(&chain, eval_on)?;
    write_model(&chain, out)?;
    Ok(TrainSummary {
        kind,
        n_train: ds.train.len(),
        n_test: ds.test.len(),
        rmse,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizedPick {
    pub scene_seed: u64,
    pub pick_index: u64,
    pub initial_psp: f64,
    pub best_psp: f64,
    pub trace: RefinementTrace,
}

/// Refines every executed pick in the log with the model.
pub fn optimize(cfg: &RunConfig, seed: u64, model: &Path, scenes: &Path, picks: &Path, out: &Path) -> Result<Vec<OptimizedPick>, CliError> {
    cfg.validate()?;
    let chain = read_model(model)?;
    let scenes = read_scenes(scenes)?;
    let records = read_picks(picks)?;
    let executed: Vec<(&PickRecord, PickAction)> = records.iter().filter_map(|r| r.action.map(|a| (r, a))).collect();
    for (r, _) in &executed {
        scene_for(&scenes, r)?;
    }
    let results = par_map(&executed, |(r, a)| -> pickopt::Result<OptimizedPick> {
        let p = cfg.setup.perceive(&scenes[r.pick_index as usize])?;
        let (_, trace) = optimize_pick(&p, &cfg.setup.gripper, a, &chain, &cfg.setup.psp, &cfg.optimize)?;
        Ok(OptimizedPick {
            scene_seed: r.scene_seed,
            pick_index: r.pick_index,
            initial_psp: trace.steps[0].score,
            best_psp: trace.steps[trace.best_index].score,
            trace,
        })
    })
    .into_iter()
    .collect::<pickopt::Result<Vec<_>>>()?;
    let header = Header {
        format_version: FORMAT_VERSION,
        kind: TRACES_KIND.into(),
        seed,
        count: results.len() as u64,
        meta: NoMeta {},
    };
    write_atomic(out, |w| write_jsonl(w, &header, &results))?;
    Ok(results)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub format_version: u32,
    pub report: AbReport,
}

/// Runs the paired A/B test and writes the JSON and text reports. Neither
/// file is left behind if any stage fails.
pub fn abtest(cfg: &RunConfig, seed: u64, model: &Path, json_out: &Path, text_out: &Path) -> Result<AbReport, CliError> {
    cfg.validate()?;
    let chain = read_model(model)?;
    let report = run_ab(&cfg.ab_config(), &chain, seed)?;
    let file = ReportFile {
        format_version: FORMAT_VERSION,
        report: report.clone(),
    };
    let json = serde_json::to_string_pretty(&file).map_err(|e| CliError::Runtime(e.to_string()))?;
    write_atomic(json_out, |w| w.write_all(json.as_bytes()).map_err(io_err))?;
    if let Err(e) = write_atomic(text_out, |w| w.write_all(report.to_table().as_bytes()).map_err(io_err)) {
        let _ = std::fs::remove_file(json_out);
        return Err(e);
    }
    Ok(report)
}

pub fn read_report(path: &Path) -> Result<AbReport, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Runtime(format!("cannot open {}: {e}", path.display())))?;
    let v: serde_json::Value = serde_json::from_str(&text).map_err(|e| CliError::Format(e.to_string()))?;
    let version = v.get("format_version").and_then(|v| v.as_u64());
    if version != Some(FORMAT_VERSION as u64) {
        return Err(CliError::Format(format!("{}: unsupported report format version {version:?}", path.display())));
    }
    let file: ReportFile = serde_json::from_value(v).map_err(|e| CliError::Format(e.to_string()))?;
    Ok(file.report)
}

/// One induct's refinement: the scene, the control pick and its trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceDump {
    pub format_version: u32,
    pub seed: u64,
    pub index: u64,
    pub scene: Scene,
    pub control: Option<PickAction>,
    pub trace: Option<RefinementTrace>,
    /// Oracle success probability of each trace step.
    pub p_true: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub frame: Option<SensorFrame>,
}

pub fn dump_trace(cfg: &RunConfig, seed: u64, model: &Path, index: u64, with_frame: bool, out: &Path) -> Result<TraceDump, CliError> {
    cfg.validate()?;
    let chain = read_model(model)?;
    let plan = plan_induct(&cfg.scene, &cfg.setup, seed, index)?;
    let scene = generate_scene(&cfg.scene, plan.scene_seed)?;
    let trace = match &plan.control {
        Some(c) => Some(optimize_pick(&plan.perception, &cfg.setup.gripper, c, &chain, &cfg.setup.psp, &cfg.optimize)?.1),
        None => None,
    };
    let mut p_true = Vec::new();
    for step in trace.iter().flat_map(|t| &t.steps) {
        let phi = pickopt::features::compute_features(&plan.perception, &cfg.setup.gripper, &step.action)?;
        p_true.push(cfg.setup.oracle.prob(&phi));
    }
    let dump = TraceDump {
        format_version: FORMAT_VERSION,
        seed,
        index,
        scene,
        control: plan.control,
        trace,
        p_true,
        frame: with_frame.then_some(plan.perception.frame),
    };
    let json = serde_json::to_string_pretty(&dump).map_err(|e| CliError::Runtime(e.to_string()))?;
    write_atomic(out, |w| w.write_all(json.as_bytes()).map_err(io_err))?;
    Ok(dump)
}

/// Outcome counts of a pick log, for the command summary line.
pub fn outcome_counts(records: &[PickRecord]) -> BTreeMap<String, usize> {
    let mut m = BTreeMap::new();
    for r in records {
        *m.entry(format!("{:?}", r.outcome).to_lowercase()).or_insert(0) += 1;
    }
    m
}
