//! Command-line surface. Exit codes: 0 success, 1 validation error,
//! 2 runtime failure. `DEXKIT_SEED` overrides the config seed.

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use dexkit_core::assets::Split;
use dexkit_core::pretrain::PretrainMethod;

use crate::config::RunConfig;
use crate::pipelines::{self, AblationPlanFile, CountOverrides, DatasetKind};
use crate::{DexkitError, Result};

#[derive(Parser, Debug)]
#[command(
    name = "dexkit",
    about = "Desk-scale dexterous-manipulation testbed: procedural articulated objects, point-cloud RL, encoder pre-training, and evaluation protocols."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write the seen/unseen object manifest for a task.
    GenAssets {
        #[arg(long)]
        task: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        n_all: Option<usize>,
        #[arg(long)]
        n_seen: Option<usize>,
        #[arg(long)]
        n_unseen: Option<usize>,
    },
    /// Generate a pre-training dataset (DXPC files + index.json).
    GenPretrainData {
        /// "dam" (task scenes with robot) or "pmm" (isolated objects).
        #[arg(long)]
        dataset: String,
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Task-scene records per object (dam).
        #[arg(long)]
        per_object: Option<usize>,
        /// Records per category (pmm).
        #[arg(long)]
        per_category: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        task: Option<String>,
    },
    /// Train an encoder with one pre-training method.
    Pretrain {
        /// seg-dam | seg-pmm | cls-pmm | recon-dam | simsiam-dam
        #[arg(long)]
        method: String,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// PPO policy training.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        encoder: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Continue from the run's state.dxrs.
        #[arg(long, default_value_t = false)]
        resume: bool,
        /// Stop after this many rounds (resume later).
        #[arg(long)]
        max_rounds: Option<u64>,
    },
    /// Evaluate a checkpoint on seen/unseen splits.
    Eval {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        checkpoint: PathBuf,
        /// seen | unseen | both
        #[arg(long, default_value = "both")]
        split: String,
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a checkpoint under the 35-camera viewpoint grid.
    SweepViewpoints {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        episodes: Option<usize>,
        /// Proprio-only ablation: the policy ignores the point cloud.
        #[arg(long, default_value_t = false)]
        camera_blind: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train and evaluate every variant of an ablation plan.
    Ablate {
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_config(path: &Option<PathBuf>) -> Result<RunConfig> {
    let mut cfg = match path {
        Some(p) => RunConfig::load(p)?,
        None => {
            let mut c = RunConfig::default();
            c.apply_env_overrides();
            c
        }
    };
    cfg.apply_profile();
    Ok(cfg)
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenAssets { task, seed, out, n_all, n_seen, n_unseen } => {
            let path = pipelines::gen_assets(
                &task,
                seed,
                &out,
                CountOverrides { n_all, n_seen, n_unseen },
            )?;
            println!("wrote {}", path.display());
            Ok(())
        }
        Command::GenPretrainData {
            dataset,
            manifest,
            out,
            config,
            per_object,
            per_category,
            seed,
            task,
        } => {
            let kind = DatasetKind::from_name(&dataset).ok_or_else(|| {
                DexkitError::Validation(vec![format!("unknown dataset {dataset:?} (dam|pmm)")])
            })?;
            let mut cfg = load_config(&config)?;
            if let Some(m) = manifest {
                cfg.manifest = Some(m);
            }
            if let Some(p) = per_object {
                cfg.dam_per_object = p;
            }
            if let Some(p) = per_category {
                cfg.pmm_per_category = p;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(t) = task {
                cfg.task = t;
            }
            let index = pipelines::gen_pretrain_data(&cfg, kind, &out)?;
            println!("wrote {}", index.display());
            Ok(())
        }
        Command::Pretrain { method, data, out, config, epochs } => {
            let m = PretrainMethod::from_name(&method).ok_or_else(|| {
                DexkitError::Validation(vec![format!(
                    "unknown method {method:?} (seg-dam|seg-pmm|cls-pmm|recon-dam|simsiam-dam)"
                )])
            })?;
            let mut cfg = load_config(&config)?;
            if let Some(e) = epochs {
                cfg.pretrain_epochs = e;
            }
            let outcome = pipelines::pretrain(&cfg, m, &data, &out)?;
            let last = outcome.metrics.last().expect("metrics");
            println!(
                "wrote {} ({} epochs, final loss {:.6})",
                out.display(),
                last.epoch,
                last.loss
            );
            Ok(())
        }
        Command::Train { config, encoder, out, resume, max_rounds } => {
            let mut cfg = load_config(&config)?;
            if let Some(e) = encoder {
                cfg.encoder = Some(e);
            }
            if let Some(o) = out {
                cfg.out_dir = o;
            }
            let summary = pipelines::train(&cfg, resume, max_rounds)?;
            println!(
                "trained {} rounds / {} env steps -> {}",
                summary.rounds,
                summary.env_steps,
                summary.final_checkpoint.display()
            );
            Ok(())
        }
        Command::Eval { config, checkpoint, split, episodes, out } => {
            let mut cfg = load_config(&config)?;
            if let Some(o) = out {
                cfg.out_dir = o;
            }
            let splits: Vec<Split> = match split.as_str() {
                "seen" => vec![Split::Seen],
                "unseen" => vec![Split::Unseen],
                "both" => vec![Split::Seen, Split::Unseen],
                other => {
                    return Err(DexkitError::Validation(vec![format!(
                        "unknown split {other:?} (seen|unseen|both)"
                    )]))
                }
            };
            let episodes = episodes.unwrap_or(cfg.eval_episodes);
            let reports = pipelines::eval(&cfg, &checkpoint, &splits, episodes)?;
            for r in &reports {
                println!(
                    "{} {:?}: {:.3} ± {}",
                    r.task.name(),
                    r.split,
                    r.mean_success,
                    r.std_success.map(|s| format!("{s:.3}")).unwrap_or_else(|| "-".into())
                );
            }
            Ok(())
        }
        Command::SweepViewpoints { config, checkpoint, episodes, camera_blind, out } => {
            let mut cfg = load_config(&config)?;
            if let Some(o) = out {
                cfg.out_dir = o;
            }
            cfg.camera_blind = camera_blind;
            let episodes = episodes.unwrap_or(cfg.sweep_episodes);
            let grid = pipelines::sweep_viewpoints(&cfg, &checkpoint, episodes)?;
            let (lo, hi) = grid.min_max_rate();
            println!("{} cells, success rate range [{lo:.3}, {hi:.3}]", grid.cells.len());
            Ok(())
        }
        Command::Ablate { plan, config, out } => {
            let mut cfg = load_config(&config)?;
            if let Some(o) = out {
                cfg.out_dir = o;
            }
            let bytes = std::fs::read(&plan).map_err(|e| {
                DexkitError::Validation(vec![format!("plan {}: {e}", plan.display())])
            })?;
            let plan_file: AblationPlanFile = serde_json::from_slice(&bytes)
                .map_err(|e| DexkitError::Validation(vec![format!("plan parse: {e}")]))?;
            let results = pipelines::ablate(&cfg, &plan_file)?;
            for r in &results {
                println!(
                    "{}: seen {:.3}, unseen {:.3}",
                    r.name, r.seen.mean_success, r.unseen.mean_success
                );
            }
            Ok(())
        }
    }
}
