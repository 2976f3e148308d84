//! WebAssembly bindings for the static demo page in `www/`.
//!
//! Three operations: render a generated scene, evaluate the gripper at a
//! chosen pose, and train a small refinement chain to optimize that pose.
//! All logic sits in plain methods (tested natively); the `#[wasm_bindgen]`
//! wrappers only convert results to JSON strings.

use pickopt::datagen::{build_dataset, ExecutedPick, NoiseConfig};
use pickopt::eval::{collect_pick, run_control_pick, PickingSetup};
use pickopt::features::{compute_features, Perception};
use pickopt::learn::{rmse_by_dimension, train_chain, AutoregressiveChain, ChainHyperparams, GbdtHyperparams, ModelKind};
use pickopt::optimize::{optimize_pick, OptimizeConfig};
use pickopt::pick::{check_feasible, evaluate_cups, PickAction, MIN_SEGMENT_CELLS, N_CUPS};
use pickopt::rng::{derive_seed, stream};
use pickopt::scene::{generate_scene, Scene, SceneConfig};
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CupView {
    pub x: f64,
    pub y: f64,
    pub radius: f64,
    pub active: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PickView {
    pub x: f64,
    pub y: f64,
    pub r: f64,
    pub target_segment: i32,
    pub cups: Vec<CupView>,
    pub n_active: usize,
    pub feasible: bool,
    /// Scoring model's estimate.
    pub psp: f64,
    /// Simulator's hidden success probability.
    pub p_true: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrainView {
    pub picks: usize,
    pub pairs: usize,
    /// Held-out RMSE of (dx m, dy m, dr rad).
    pub rmse: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceView {
    pub steps: Vec<PickView>,
    pub best_index: usize,
}

#[wasm_bindgen]
pub struct Demo {
    seed: u64,
    scene_config: SceneConfig,
    setup: PickingSetup,
    scene: Scene,
    perception: Perception,
    chain: Option<AutoregressiveChain>,
}

impl Demo {
    pub fn create(seed: u32) -> Result<Demo, String> {
        let scene_config = SceneConfig::default();
        let setup = PickingSetup::default();
        let scene = generate_scene(&scene_config, derive_seed(seed as u64, "demo-scene", 0)).map_err(|e| e.to_string())?;
        let perception = setup.perceive(&scene).map_err(|e| e.to_string())?;
        Ok(Demo {
            seed: seed as u64,
            scene_config,
            setup,
            scene,
            perception,
            chain: None,
        })
    }

    pub fn scene(&self) -> &Scene {
        &self.scene
    }

    pub fn set_scene(&mut self, index: u32) -> Result<(), String> {
        let scene = generate_scene(&self.scene_config, derive_seed(self.seed, "demo-scene", index as u64)).map_err(|e| e.to_string())?;
        self.perception = self.setup.perceive(&scene).map_err(|e| e.to_string())?;
        self.scene = scene;
        Ok(())
    }

    fn view(&self, a: &PickAction) -> Result<PickView, String> {
        let g = &self.setup.gripper;
        let evals = evaluate_cups(&self.perception.frame, g, a.x, a.y, a.r);
        let cups = (0..N_CUPS)
            .map(|i| {
                let (x, y) = g.eoat.cup_world(i, a.x, a.y, a.r);
                CupView {
                    x,
                    y,
                    radius: g.eoat.cup_radius,
                    active: evals[i].active,
                }
            })
            .collect();
        let phi = compute_features(&self.perception, g, a).map_err(|e| e.to_string())?;
        Ok(PickView {
            x: a.x,
            y: a.y,
            r: a.r,
            target_segment: a.target_segment,
            cups,
            n_active: a.cups.len(),
            feasible: check_feasible(a, &self.setup.workspace),
            psp: self.setup.psp.prob(&phi),
            p_true: self.setup.oracle.prob(&phi),
        })
    }

    /// The gripper at (x, y, r): cup placement, seal state and scores.
    pub fn pick_at(&self, x: f64, y: f64, r: f64) -> Result<PickView, String> {
        let a = PickAction::new(&self.perception.frame, &self.setup.gripper, x, y, r).map_err(|e| e.to_string())?;
        self.view(&a)
    }

    /// The control planner's choice on the current scene, if any.
    pub fn control(&self) -> Result<Option<PickView>, String> {
        let Some(target) = self.perception.target_segment(MIN_SEGMENT_CELLS) else {
            return Ok(None);
        };
        let mut rng = stream(self.seed, "demo-control", self.scene.seed);
        let pick = run_control_pick(
            &self.perception,
            target,
            self.setup.candidates,
            &self.setup.psp,
            &self.setup.gripper,
            &self.setup.workspace,
            &mut rng,
        )
        .map_err(|e| e.to_string())?;
        pick.map(|a| self.view(&a)).transpose()
    }

    /// Trains a small boosted chain from `n_picks` simulated picks. Smaller
    /// than the command-line defaults so it finishes in a browser.
    pub fn train(&mut self, n_picks: u32) -> Result<TrainView, String> {
        let seed = derive_seed(self.seed, "demo-train", 0);
        let mut logged = Vec::new();
        for i in 0..n_picks as u64 {
            let scene = generate_scene(&self.scene_config, derive_seed(seed, "scene", i)).map_err(|e| e.to_string())?;
            logged.push(collect_pick(&scene, &self.setup, seed, i).map_err(|e| e.to_string())?);
        }
        let picks: Vec<ExecutedPick> = logged
            .iter()
            .filter_map(|(rec, p)| {
                rec.action.map(|a| ExecutedPick {
                    scene_seed: rec.scene_seed,
                    pick_index: rec.pick_index,
                    perception: p,
                    action: a,
                })
            })
            .collect();
        let noise = NoiseConfig {
            n_perturb: 15,
            ..NoiseConfig::default()
        };
        let ds = build_dataset(&picks, &noise, &self.setup.psp, &self.setup.gripper, 0.8, seed).map_err(|e| e.to_string())?;
        let hp = ChainHyperparams {
            gbdt: GbdtHyperparams {
                n_rounds: 60,
                ..GbdtHyperparams::default()
            },
            ..ChainHyperparams::default()
        };
        let chain = train_chain(&ds, ModelKind::Gbdt, &hp, seed).map_err(|e| e.to_string())?;
        let rmse = rmse_by_dimension(&chain, if ds.test.is_empty() { &ds.train } else { &ds.test }).map_err(|e| e.to_string())?;
        self.chain = Some(chain);
        Ok(TrainView {
            picks: picks.len(),
            pairs: ds.train.len() + ds.test.len(),
            rmse,
        })
    }

    pub fn is_trained(&self) -> bool {
        self.chain.is_some()
    }

    /// Refines the pose with the trained chain; every visited pose is
    /// reported, with the best-scoring one marked.
    pub fn optimize_from(&self, x: f64, y: f64, r: f64) -> Result<TraceView, String> {
        let chain = self.chain.as_ref().ok_or("train a model first")?;
        let a = PickAction::new(&self.perception.frame, &self.setup.gripper, x, y, r).map_err(|e| e.to_string())?;
        let (_, trace) = optimize_pick(&self.perception, &self.setup.gripper, &a, chain, &self.setup.psp, &OptimizeConfig::default())
            .map_err(|e| e.to_string())?;
        Ok(TraceView {
            steps: trace.steps.iter().map(|s| self.view(&s.action)).collect::<Result<_, _>>()?,
            best_index: trace.best_index,
        })
    }
}

fn js<T: Serialize>(r: Result<T, String>) -> Result<String, JsError> {
    r.and_then(|v| serde_json::to_string(&v).map_err(|e| e.to_string())).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32) -> Result<Demo, JsError> {
        Demo::create(seed).map_err(|e| JsError::new(&e))
    }

    #[wasm_bindgen(js_name = loadScene)]
    pub fn load_scene(&mut self, index: u32) -> Result<(), JsError> {
        self.set_scene(index).map_err(|e| JsError::new(&e))
    }

    #[wasm_bindgen(getter)]
    pub fn nx(&self) -> usize {
        self.perception.frame.nx
    }

    #[wasm_bindgen(getter)]
    pub fn ny(&self) -> usize {
        self.perception.frame.ny
    }

    /// Meters per grid cell.
    #[wasm_bindgen(getter)]
    pub fn resolution(&self) -> f64 {
        self.perception.frame.resolution
    }

    /// [x_min, y_min, x_max, y_max] of the conveyor.
    pub fn bounds(&self) -> Vec<f64> {
        let b = self.perception.frame.bounds;
        vec![b.x_min, b.y_min, b.x_max, b.y_max]
    }

    /// Row-major surface heights.
    pub fn heights(&self) -> Vec<f64> {
        self.perception.frame.heightgrid.clone()
    }

    /// Row-major package ids, −1 for bare conveyor.
    pub fn segments(&self) -> Vec<i32> {
        self.perception.frame.segmentgrid.clone()
    }

    #[wasm_bindgen(js_name = evaluatePick)]
    pub fn evaluate_pick(&self, x: f64, y: f64, r: f64) -> Result<String, JsError> {
        js(self.pick_at(x, y, r))
    }

    #[wasm_bindgen(js_name = controlPick)]
    pub fn control_pick(&self) -> Result<String, JsError> {
        js(self.control())
    }

    #[wasm_bindgen(js_name = trainQuick)]
    pub fn train_quick(&mut self, n_picks: u32) -> Result<String, JsError> {
        js(self.train(n_picks))
    }

    #[wasm_bindgen(getter)]
    pub fn trained(&self) -> bool {
        self.is_trained()
    }

    pub fn optimize(&self, x: f64, y: f64, r: f64) -> Result<String, JsError> {
        js(self.optimize_from(x, y, r))
    }
}
