//! Run configuration: built-in defaults, overridden by a JSON file, overridden
//! by command-line flags.

use std::path::{Path, PathBuf};

use pickopt::datagen::NoiseConfig;
use pickopt::eval::{AbConfig, CiMethod, PickingSetup};
use pickopt::learn::{ChainHyperparams, ModelKind};
use pickopt::optimize::OptimizeConfig;
use pickopt::scene::SceneConfig;
use pickopt::success::{PspModel, TrueSuccessModel};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Seed used when neither a flag, the config file nor `PICKOPT_SEED` sets one.
pub const DEFAULT_SEED: u64 = 20_240_601;
pub const SEED_ENV: &str = "PICKOPT_SEED";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigPaths {
    /// JSON file holding the oracle weights; replaces `setup.oracle`.
    pub oracle_config: Option<PathBuf>,
    /// JSON file holding the PSP parameters; replaces `setup.psp`.
    pub psp_config: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    /// Scenes written by `gen-scenes`.
    pub scene_count: u64,
    pub scene: SceneConfig,
    pub setup: PickingSetup,
    pub noise: NoiseConfig,
    pub split_fraction: f64,
    pub model_kind: ModelKind,
    pub hyperparams: ChainHyperparams,
    pub optimize: OptimizeConfig,
    pub inducts: u64,
    pub ci_method: CiMethod,
    pub paths: ConfigPaths,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: None,
            scene_count: 1000,
            scene: SceneConfig::default(),
            setup: PickingSetup::default(),
            noise: NoiseConfig::default(),
            split_fraction: 0.8,
            model_kind: ModelKind::Gbdt,
            hyperparams: ChainHyperparams::default(),
            optimize: OptimizeConfig::default(),
            inducts: 50_000,
            ci_method: CiMethod::Normal,
            paths: ConfigPaths::default(),
        }
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path, what: &str) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{what} {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{what} {}: {e}", path.display())))
}

impl RunConfig {
    /// Defaults, overlaid by `path` when given. Oracle and PSP files named in
    /// `paths` are applied after the overlay.
    pub fn load(path: Option<&Path>) -> Result<RunConfig, CliError> {
        let mut cfg = match path {
            Some(p) => read_json(p, "config file")?,
            None => RunConfig::default(),
        };
        cfg.apply_model_files()?;
        Ok(cfg)
    }

    pub fn apply_model_files(&mut self) -> Result<(), CliError> {
        if let Some(p) = &self.paths.oracle_config {
            self.setup.oracle = read_json::<TrueSuccessModel>(p, "oracle config")?;
        }
        if let Some(p) = &self.paths.psp_config {
            self.setup.psp = read_json::<PspModel>(p, "psp config")?;
        }
        Ok(())
    }

    /// Checks every field against the owning module's preconditions.
    pub fn validate(&self) -> Result<(), CliError> {
        self.scene.validate()?;
        self.setup.validate()?;
        self.noise.validate()?;
        self.hyperparams.gbdt.validate()?;
        self.hyperparams.mlp.validate()?;
        self.optimize.validate()?;
        if !(self.split_fraction > 0.0 && self.split_fraction < 1.0) {
            return Err(CliError::Config("split_fraction: must lie in (0, 1)".into()));
        }
        Ok(())
    }

    /// flag > config file > `PICKOPT_SEED` > [`DEFAULT_SEED`].
    pub fn resolve_seed(&self, flag: Option<u64>) -> Result<u64, CliError> {
        if let Some(s) = flag.or(self.seed) {
            return Ok(s);
        }
        match std::env::var(SEED_ENV) {
            Ok(v) => v
                .trim()
                .parse()
                .map_err(|_| CliError::Config(format!("{SEED_ENV}={v:?} is not an unsigned integer"))),
            Err(_) => Ok(DEFAULT_SEED),
        }
    }

    pub fn ab_config(&self) -> AbConfig {
        AbConfig {
            inducts: self.inducts,
            scene: self.scene.clone(),
            setup: self.setup.clone(),
            optimize: self.optimize,
            ci_method: self.ci_method,
        }
    }
}
