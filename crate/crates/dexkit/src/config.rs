//! Run configuration: JSON with full-default fallback, exhaustive
//! validation, and a content hash for run manifests. Every field has a
//! default, so an empty `{}` config is runnable.

use std::fs;
use std::path::{Path, PathBuf};

use dexkit_core::assets::Category;
use dexkit_core::env::EnvConfig;
use dexkit_core::nn::PointNetSpec;
use dexkit_core::rl::PPOConfig;
use dexkit_core::rng::fnv1a;
use dexkit_core::sensing::SensingConfig;
use dexkit_core::sim::SimConfig;
use dexkit_core::tasks::{RewardMode, RewardWeights, TaskSpec};
use serde::{Deserialize, Serialize};

use crate::{DexkitError, Result};

/// Seed override environment variable.
pub const SEED_ENV_VAR: &str = "DEXKIT_SEED";

/// Scale profile: desk defaults keep everything runnable in minutes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Desk,
    Paper,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub task: String,
    /// Split manifest path; generated on the fly when absent.
    pub manifest: Option<PathBuf>,
    pub profile: Profile,
    pub sim: SimConfig,
    pub sensing: SensingConfig,
    pub pointnet: PointNetSpec,
    pub reward: RewardWeights,
    pub reward_mode: RewardMode,
    pub ppo: PPOConfig,
    pub horizon: usize,
    /// Pre-training regime feeding the encoder ("scratch" or a method name).
    pub regime: String,
    pub encoder: Option<PathBuf>,
    pub camera_blind: bool,
    /// Evaluation seeds (and ablation seeds).
    pub seeds: Vec<u64>,
    /// Master seed for everything else.
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Task-scene dataset records per object.
    pub dam_per_object: usize,
    /// Isolated-object dataset records per category.
    pub pmm_per_category: usize,
    pub pretrain_epochs: usize,
    pub pretrain_batch: usize,
    pub eval_episodes: usize,
    pub sweep_episodes: usize,
    /// Rounds between training checkpoints/resume snapshots.
    pub checkpoint_every_rounds: u64,
    /// Worker threads for env stepping.
    pub env_threads: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            task: "laptop".into(),
            manifest: None,
            profile: Profile::Desk,
            sim: SimConfig::default(),
            sensing: SensingConfig::default(),
            pointnet: PointNetSpec::default(),
            reward: RewardWeights::default(),
            reward_mode: RewardMode::Full,
            ppo: PPOConfig::default(),
            horizon: 200,
            regime: "scratch".into(),
            encoder: None,
            camera_blind: false,
            seeds: vec![0, 1, 2],
            seed: 0,
            out_dir: PathBuf::from("runs/default"),
            dam_per_object: 100,
            pmm_per_category: 1000,
            pretrain_epochs: 20,
            pretrain_batch: 32,
            eval_episodes: 100,
            sweep_episodes: 20,
            checkpoint_every_rounds: 5,
            env_threads: 2,
        }
    }
}

impl RunConfig {
    /// Load from JSON (missing fields fall back to defaults) and apply the
    /// `DEXKIT_SEED` override.
    pub fn load(path: &Path) -> Result<RunConfig> {
        let bytes = fs::read(path).map_err(|e| {
            DexkitError::Validation(vec![format!("config {}: {e}", path.display())])
        })?;
        let mut cfg: RunConfig = serde_json::from_slice(&bytes)
            .map_err(|e| DexkitError::Validation(vec![format!("config parse: {e}")]))?;
        cfg.apply_env_overrides();
        Ok(cfg)
    }

    pub fn apply_env_overrides(&mut self) {
        if let Ok(seed) = std::env::var(SEED_ENV_VAR) {
            if let Ok(v) = seed.parse::<u64>() {
                self.seed = v;
            }
        }
    }

    /// Paper-scale profile: full dataset sizes and step budget.
    pub fn apply_profile(&mut self) {
        if self.profile == Profile::Paper {
            self.dam_per_object = 6000;
            self.pmm_per_category = 1000;
            self.ppo.total_steps = self.ppo.total_steps.max(1_000_000);
        }
    }

    pub fn category(&self) -> Option<Category> {
        Category::from_name(&self.task)
    }

    pub fn task_spec(&self) -> Option<TaskSpec> {
        let mut spec = TaskSpec::for_category(self.category()?)?;
        spec.reward_mode = self.reward_mode;
        Some(spec)
    }

    /// Every validation failure, not just the first.
    pub fn validate(&self) -> Result<()> {
        let mut errors = Vec::new();
        match self.category() {
            Some(c) if TaskSpec::for_category(c).is_some() => {}
            Some(c) => errors.push(format!("category {} carries no task", c.name())),
            None => errors.push(format!("unknown task {:?}", self.task)),
        }
        if let Some(m) = &self.manifest {
            if !m.exists() {
                errors.push(format!("manifest path {} does not exist", m.display()));
            }
        }
        if let Some(e) = &self.encoder {
            if !e.exists() {
                errors.push(format!("encoder path {} does not exist", e.display()));
            }
        }
        if self.regime != "scratch"
            && dexkit_core::pretrain::PretrainMethod::from_name(&self.regime).is_none()
        {
            errors.push(format!("unknown regime {:?}", self.regime));
        }
        if let Err(e) = self.ppo.validate() {
            errors.push(e.to_string());
        }
        if self.horizon == 0 {
            errors.push("horizon must be > 0".into());
        }
        if self.sensing.n_observed == 0 || self.sensing.n_imagined == 0 {
            errors.push("sensing point counts must be > 0".into());
        }
        if self.seeds.is_empty() {
            errors.push("seeds must be non-empty".into());
        }
        if self.eval_episodes == 0 {
            errors.push("eval_episodes must be > 0".into());
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(DexkitError::Validation(errors))
        }
    }

    /// Env config for this run's task.
    pub fn env_cfg(&self) -> Result<EnvConfig> {
        let task = self
            .task_spec()
            .ok_or_else(|| DexkitError::Validation(vec![format!("unknown task {:?}", self.task)]))?;
        Ok(EnvConfig {
            sim: self.sim.clone(),
            sensing: self.sensing.clone(),
            task,
            reward: self.reward.clone(),
            horizon: self.horizon,
        })
    }

    /// Stable hash of the serialized config (code-independent inputs).
    pub fn content_hash(&self) -> u64 {
        fnv1a(&serde_json::to_vec(self).expect("config serializes"))
    }
}

/// Run manifest: written before long-running work starts, completed after.
/// Contains no timestamps, so reruns with identical configs are
/// byte-identical.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: RunConfig,
    pub content_hash: String,
    pub artifacts: Vec<String>,
    pub completed: bool,
}

impl RunManifest {
    pub fn begin(cfg: &RunConfig, out_dir: &Path) -> Result<RunManifest> {
        let manifest = RunManifest {
            config: cfg.clone(),
            content_hash: format!("{:016x}", cfg.content_hash()),
            artifacts: Vec::new(),
            completed: false,
        };
        manifest.save(out_dir)?;
        Ok(manifest)
    }

    pub fn complete(mut self, out_dir: &Path, artifacts: Vec<String>) -> Result<()> {
        self.artifacts = artifacts;
        self.completed = true;
        self.save(out_dir)
    }

    fn save(&self, out_dir: &Path) -> Result<()> {
        fs::create_dir_all(out_dir)?;
        fs::write(out_dir.join("run_manifest.json"), serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }
}
