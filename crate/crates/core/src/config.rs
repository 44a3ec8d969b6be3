//! Run configuration: one sectioned TOML file; every key has a default and
//! unknown keys are rejected.

use crate::eval::{EvalConfig, Harness};
use crate::expert::{DtSampler, ExpertConfig, GenRequest, GenSetup, InitConfig, SamplingMode, TargetSpec};
use crate::nn::model::ModelConfig;
use crate::scene::{CameraIntrinsics, HikeConfig};
use crate::simcore::SimConfig;
use crate::splat::{RendererKind, SplatRenderParams, SplatStyle};
use crate::train::TrainConfig;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneSection {
    pub camera: CameraIntrinsics,
    pub target: TargetSpec,
    pub hike: HikeConfig,
}

impl Default for SceneSection {
    fn default() -> Self {
        Self {
            camera: CameraIntrinsics::desk(),
            target: TargetSpec::default(),
            hike: HikeConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplatSection {
    pub style: SplatStyle,
    pub render: SplatRenderParams,
}

/// Expert controller plus the data-generation settings it drives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExpertSection {
    pub n_traj: usize,
    pub mode: SamplingMode,
    pub renderer: RendererKind,
    /// Retries per trajectory before generation gives up.
    pub max_attempts: usize,
    pub controller: ExpertConfig,
    pub init: InitConfig,
    pub sampler: DtSampler,
}

impl Default for ExpertSection {
    fn default() -> Self {
        Self {
            n_traj: 100,
            mode: SamplingMode::Irregular,
            renderer: RendererKind::Plain,
            max_attempts: 10,
            controller: ExpertConfig::default(),
            init: InitConfig::default(),
            sampler: DtSampler::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub master_seed: u64,
    pub output_dir: PathBuf,
    pub sim: SimConfig,
    pub scene: SceneSection,
    pub splat: SplatSection,
    pub expert: ExpertSection,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            master_seed: 42,
            output_dir: PathBuf::from("out"),
            sim: SimConfig::default(),
            scene: SceneSection::default(),
            splat: SplatSection::default(),
            expert: ExpertSection::default(),
            model: ModelConfig::default(),
            train: TrainConfig::desk(),
            eval: EvalConfig::default(),
        }
    }
}

impl RunConfig {
    /// Keys absent from `text` take the value of `RunConfig::default()`,
    /// including inside partially given sections.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let user: toml::Table = toml::from_str(text)?;
        let mut merged = toml::Table::try_from(Self::default()).expect("defaults serialise");
        merge(&mut merged, user);
        let cfg: Self = toml::Value::Table(merged).try_into()?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always serialisable")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let inv = |e: &dyn std::fmt::Display| ConfigError::Invalid(e.to_string());
        self.sim.validate().map_err(|e| inv(&e))?;
        self.train.validate().map_err(|e| inv(&e))?;
        self.eval.validate(&self.sim).map_err(|e| inv(&e))?;
        let cam = &self.scene.camera;
        if self.model.cnn.input != (3, cam.height, cam.width) {
            return Err(ConfigError::Invalid(format!(
                "model input {:?} does not match the {}x{} camera",
                self.model.cnn.input, cam.width, cam.height
            )));
        }
        // TOML integers are signed 64-bit
        let seeds = [
            ("master_seed", self.master_seed),
            ("splat.style.room_seed", self.splat.style.room_seed),
            ("model.init_seed", self.model.init_seed),
            ("model.ncp.seed", self.model.ncp.seed),
            ("train.seed", self.train.seed),
        ];
        if let Some((name, v)) = seeds.iter().find(|(_, v)| *v > i64::MAX as u64) {
            return Err(ConfigError::Invalid(format!("{name} = {v} exceeds {}", i64::MAX)));
        }
        if self.expert.n_traj == 0 || self.expert.max_attempts == 0 {
            return Err(ConfigError::Invalid("expert.n_traj and expert.max_attempts must be positive".into()));
        }
        Ok(())
    }

    pub fn harness<'a>(&'a self, eval: &'a EvalConfig) -> Harness<'a> {
        Harness {
            sim: &self.sim,
            intr: &self.scene.camera,
            eval,
            expert: &self.expert.controller,
            init: &self.expert.init,
            target: &self.scene.target,
            hike: &self.scene.hike,
            splat_style: &self.splat.style,
            splat_params: &self.splat.render,
        }
    }

    pub fn gen_request(&self) -> GenRequest<'_> {
        GenRequest {
            setup: GenSetup {
                sim: &self.sim,
                expert: &self.expert.controller,
                intr: &self.scene.camera,
                sampler: &self.expert.sampler,
            },
            init: &self.expert.init,
            target: &self.scene.target,
            mode: self.expert.mode,
            renderer: self.expert.renderer,
            splat_style: &self.splat.style,
            splat_params: &self.splat.render,
            master_seed: self.master_seed,
            max_attempts: self.expert.max_attempts,
        }
    }
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}
