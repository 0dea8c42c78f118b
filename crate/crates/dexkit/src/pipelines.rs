//! End-to-end pipelines behind the CLI subcommands. Every long-running
//! command writes a run manifest before starting and completes it with the
//! artifact inventory; everything is deterministic given its config.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use dexkit_core::assets::{generate_split, Category, CategoryTemplate, Split, SplitManifest};
use dexkit_core::env::Env;
use dexkit_core::eval::{
    self, full_roster, half_roster, AblationResult, EvalReport, VariantSpec, ViewpointGrid,
};
use dexkit_core::nn::{AdamState, ParamStore, PointNetSize, PointNetSpec};
use dexkit_core::pretrain::{
    generate_dam, generate_pmm, train_classification, train_reconstruction, train_segmentation,
    train_simsiam, AugmentationSpec, PretrainConfig, PretrainMethod, PretrainOutcome, TrainCloud,
};
use dexkit_core::rl::{EnvDriver, Policy, Trainer};
use dexkit_core::rng::Rng;
use dexkit_core::sensing::{LabeledPointCloud, PointLabel, PointOrigin};
use dexkit_core::sim::RobotModel;
use serde::{Deserialize, Serialize};

use crate::config::{RunConfig, RunManifest};
use crate::formats::{self, csv, dxpc, resume, DatasetIndex, IndexEntry, ManifestFile};
use crate::parallel::ParallelVecEnv;
use crate::{DexkitError, Result};

/// Category override counts for asset generation.
#[derive(Debug, Clone, Copy, Default)]
pub struct CountOverrides {
    pub n_all: Option<usize>,
    pub n_seen: Option<usize>,
    pub n_unseen: Option<usize>,
}

/// Write the split manifest for one task. Default counts come from the
/// category table; overrides must stay consistent.
pub fn gen_assets(
    task: &str,
    seed: u64,
    out_dir: &Path,
    overrides: CountOverrides,
) -> Result<PathBuf> {
    let category = Category::from_name(task)
        .ok_or_else(|| DexkitError::Validation(vec![format!("unknown task {task:?}")]))?;
    let template = CategoryTemplate::for_category(category);
    let (d_all, d_seen, d_unseen) = category.default_counts();
    let n_all = overrides.n_all.unwrap_or(d_all);
    let n_seen = overrides.n_seen.unwrap_or_else(|| {
        if overrides.n_all.is_some() || overrides.n_unseen.is_some() {
            n_all - overrides.n_unseen.unwrap_or(d_unseen).min(n_all)
        } else {
            d_seen
        }
    });
    let n_unseen = overrides.n_unseen.unwrap_or(n_all.saturating_sub(n_seen));
    let manifest = generate_split(&template, n_all, n_seen, n_unseen, seed)
        .map_err(|e| DexkitError::Validation(vec![e.to_string()]))?;
    fs::create_dir_all(out_dir)?;
    let path = out_dir.join(format!("{}_manifest.json", category.name()));
    ManifestFile::from_core(&manifest, &template).save(&path)?;
    Ok(path)
}

/// Load a manifest file, or generate the default split for the config's
/// task when no path is set.
pub fn load_or_default_manifest(cfg: &RunConfig) -> Result<(SplitManifest, CategoryTemplate)> {
    let category = cfg
        .category()
        .ok_or_else(|| DexkitError::Validation(vec![format!("unknown task {:?}", cfg.task)]))?;
    let template = CategoryTemplate::for_category(category);
    let manifest = match &cfg.manifest {
        Some(path) => {
            let file = ManifestFile::load(path)?;
            if file.category != category {
                return Err(DexkitError::Validation(vec![format!(
                    "manifest category {} does not match task {}",
                    file.category.name(),
                    category.name()
                )]));
            }
            file.to_core()
        }
        None => {
            let (a, s, u) = category.default_counts();
            generate_split(&template, a, s, u, cfg.seed)?
        }
    };
    Ok((manifest, template))
}

/// Which dataset family to generate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetKind {
    Dam,
    Pmm,
}

impl DatasetKind {
    pub fn from_name(s: &str) -> Option<DatasetKind> {
        match s {
            "dam" => Some(DatasetKind::Dam),
            "pmm" => Some(DatasetKind::Pmm),
            _ => None,
        }
    }
}

/// Generate a pre-training dataset directory: DXPC files plus index.json.
pub fn gen_pretrain_data(cfg: &RunConfig, kind: DatasetKind, out_dir: &Path) -> Result<PathBuf> {
    cfg.validate()?;
    fs::create_dir_all(out_dir)?;
    let manifest_run = RunManifest::begin(cfg, out_dir)?;
    let mut artifacts = Vec::new();
    let mut entries = Vec::new();

    match kind {
        DatasetKind::Dam => {
            let (manifest, template) = load_or_default_manifest(cfg)?;
            let task = cfg.task_spec().expect("validated");
            let model = RobotModel::standard(&cfg.sim);
            let records = generate_dam(
                &manifest,
                &template,
                &task,
                &model,
                &cfg.sensing,
                cfg.dam_per_object,
                cfg.seed,
            );
            for (k, rec) in records.iter().enumerate() {
                let name = format!("obj{:03}_rec{:05}.dxpc", rec.object_id, k);
                dxpc::write(&out_dir.join(&name), &rec.cloud)?;
                entries.push(IndexEntry {
                    file: name.clone(),
                    object_id: rec.object_id,
                    category: rec.category,
                    task: rec.category,
                });
                artifacts.push(name);
            }
        }
        DatasetKind::Pmm => {
            let records =
                generate_pmm(&Category::ALL, cfg.pmm_per_category, &cfg.sensing, cfg.seed);
            for (k, rec) in records.iter().enumerate() {
                let cloud = LabeledPointCloud {
                    points: rec.points.clone(),
                    labels: rec
                        .functional_mask
                        .iter()
                        .map(|&f| {
                            if f {
                                PointLabel::ObjectFunctional
                            } else {
                                PointLabel::ObjectRest
                            }
                        })
                        .collect(),
                    origins: vec![PointOrigin::Observed; rec.points.len()],
                };
                let name = format!("{}_rec{:05}.dxpc", rec.category.name(), k);
                dxpc::write(&out_dir.join(&name), &cloud)?;
                entries.push(IndexEntry {
                    file: name.clone(),
                    object_id: 0,
                    category: rec.category,
                    task: rec.category,
                });
                artifacts.push(name);
            }
        }
    }

    let index_path = out_dir.join("index.json");
    DatasetIndex { records: entries }.save(&index_path)?;
    artifacts.push("index.json".into());
    manifest_run.complete(out_dir, artifacts)?;
    Ok(index_path)
}

/// Load a dataset directory into training clouds.
pub fn load_dataset(dir: &Path) -> Result<Vec<TrainCloud>> {
    let index = DatasetIndex::load(&dir.join("index.json"))?;
    let mut clouds = Vec::with_capacity(index.records.len());
    for e in &index.records {
        let file = dir.join(&e.file);
        if !file.exists() {
            return Err(DexkitError::Validation(vec![format!(
                "index references missing file {}",
                file.display()
            )]));
        }
        let cloud = dxpc::read(&file)?;
        clouds.push(TrainCloud::from_cloud(&cloud, e.category.class_index()));
    }
    Ok(clouds)
}

/// Run one pre-training method over a dataset directory; writes the encoder
/// checkpoint and a per-epoch metrics CSV.
pub fn pretrain(
    cfg: &RunConfig,
    method: PretrainMethod,
    data_dir: &Path,
    out_ckpt: &Path,
) -> Result<PretrainOutcome> {
    let clouds = load_dataset(data_dir)?;
    if clouds.is_empty() {
        return Err(DexkitError::Validation(vec![format!(
            "dataset {} is empty",
            data_dir.display()
        )]));
    }
    let pre_cfg = PretrainConfig {
        epochs: cfg.pretrain_epochs,
        batch: cfg.pretrain_batch,
        seed: cfg.seed,
        ..Default::default()
    };
    let outcome = match method {
        PretrainMethod::SegDam | PretrainMethod::SegPmm => {
            train_segmentation(&clouds, &cfg.pointnet, &pre_cfg)?
        }
        PretrainMethod::ClsPmm => {
            train_classification(&clouds, &cfg.pointnet, Category::ALL.len(), &pre_cfg)?
        }
        PretrainMethod::ReconDam => train_reconstruction(&clouds, &cfg.pointnet, &pre_cfg)?,
        PretrainMethod::SimsiamDam => {
            train_simsiam(&clouds, &cfg.pointnet, &AugmentationSpec::default(), &pre_cfg)?
        }
    };
    if let Some(parent) = out_ckpt.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(out_ckpt, &outcome.encoder_checkpoint)?;
    let metrics_path = out_ckpt.with_extension("metrics.csv");
    csv::write_metrics(&metrics_path, &outcome.metrics)?;
    Ok(outcome)
}

/// Build the training env set: n_envs cycling over the seen roster.
fn build_envs(
    cfg: &RunConfig,
    manifest: &SplitManifest,
    template: &CategoryTemplate,
    model: &Arc<RobotModel>,
) -> Result<Vec<Env>> {
    let env_cfg = cfg.env_cfg()?;
    let entries: Vec<_> = manifest.entries(Split::Seen).collect();
    if entries.is_empty() {
        return Err(DexkitError::Validation(vec!["no seen objects".into()]));
    }
    Ok((0..cfg.ppo.n_envs)
        .map(|i| {
            let instance = manifest.build_object(entries[i % entries.len()], template);
            Env::new(env_cfg.clone(), model.clone(), instance, i, cfg.seed)
        })
        .collect())
}

/// Outputs of a training run.
#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub rounds: u64,
    pub env_steps: u64,
    pub log_path: PathBuf,
    pub final_checkpoint: PathBuf,
    pub resumed: bool,
}

/// PPO training with periodic checkpoints and exact resume.
///
/// `max_rounds` limits this invocation (the run can be continued later with
/// `resume = true`); `None` runs to the configured step budget.
pub fn train(cfg: &RunConfig, resume_run: bool, max_rounds: Option<u64>) -> Result<TrainSummary> {
    cfg.validate()?;
    let out_dir = &cfg.out_dir;
    fs::create_dir_all(out_dir)?;
    let run_manifest = RunManifest::begin(cfg, out_dir)?;

    let (manifest, template) = load_or_default_manifest(cfg)?;
    ManifestFile::from_core(&manifest, &template)
        .save(&out_dir.join("objects_manifest.json"))?;
    let model = Arc::new(RobotModel::standard(&cfg.sim));

    let mut policy = Policy::new(cfg.pointnet.clone());
    policy.camera_blind = cfg.camera_blind;
    let mut trainer = Trainer::new(policy, cfg.ppo.clone(), cfg.seed);
    if let Some(encoder) = &cfg.encoder {
        let bytes = fs::read(encoder)?;
        trainer.load_encoder(&bytes)?;
    }

    let mut driver = ParallelVecEnv::new(
        build_envs(cfg, &manifest, &template, &model)?,
        cfg.env_threads,
    );

    let log_path = out_dir.join("log.csv");
    let state_path = out_dir.join("state.dxrs");
    let steps_per_round = (cfg.ppo.horizon * cfg.ppo.n_envs) as u64;
    let total_rounds = cfg.ppo.total_steps.div_ceil(steps_per_round);

    let mut rows_written: u64 = 0;
    let mut resumed = false;
    if resume_run && state_path.exists() {
        let snap = resume::load(&state_path)?;
        if snap.config_hash != cfg.content_hash() {
            return Err(DexkitError::Validation(vec![
                "resume state config hash does not match this config".into(),
            ]));
        }
        trainer.store.load_strict(&snap.params)?;
        trainer.adam = AdamState::decode(&snap.adam, &trainer.store)?;
        trainer.rng = Rng::from_state(snap.rng_state);
        trainer.round = snap.round;
        trainer.env_steps = snap.env_steps;
        for (i, env_snap) in snap.envs.iter().enumerate() {
            let entry = manifest
                .objects
                .iter()
                .find(|e| e.id == env_snap.object_id)
                .ok_or_else(|| DexkitError::runtime("resume object missing from manifest"))?;
            let instance = manifest.build_object(entry, &template);
            driver.env_mut(i).restore(env_snap, instance)?;
        }
        rows_written = snap.rows_written;
        truncate_log(&log_path, rows_written)?;
        resumed = true;
    } else {
        fs::write(&log_path, csv::training_log_header())?;
    }

    let mut rounds_this_run = 0u64;
    while trainer.round < total_rounds {
        if let Some(limit) = max_rounds {
            if rounds_this_run >= limit {
                break;
            }
        }
        let row = trainer.run_round(&mut driver)?;
        let mut f = fs::OpenOptions::new().append(true).open(&log_path)?;
        f.write_all(csv::training_log_row(&row).as_bytes())?;
        drop(f);
        rows_written += 1;
        rounds_this_run += 1;

        let at_checkpoint = trainer.round % cfg.checkpoint_every_rounds == 0
            || trainer.round == total_rounds;
        if at_checkpoint {
            save_training_state(cfg, &trainer, &driver, rows_written, out_dir)?;
            formats::save_checkpoint(
                &trainer.store,
                &out_dir.join(format!("ckpt_round{:06}.dxck", trainer.round)),
            )?;
        }
    }

    // always leave a resumable state and a final checkpoint
    save_training_state(cfg, &trainer, &driver, rows_written, out_dir)?;
    let final_ckpt = out_dir.join("final.dxck");
    formats::save_checkpoint(&trainer.store, &final_ckpt)?;

    run_manifest.complete(
        out_dir,
        vec![
            "objects_manifest.json".into(),
            "log.csv".into(),
            "state.dxrs".into(),
            "final.dxck".into(),
        ],
    )?;
    Ok(TrainSummary {
        rounds: trainer.round,
        env_steps: trainer.env_steps,
        log_path,
        final_checkpoint: final_ckpt,
        resumed,
    })
}

fn save_training_state(
    cfg: &RunConfig,
    trainer: &Trainer,
    driver: &ParallelVecEnv,
    rows_written: u64,
    out_dir: &Path,
) -> Result<()> {
    let snap = resume::TrainSnapshot {
        config_hash: cfg.content_hash(),
        round: trainer.round,
        env_steps: trainer.env_steps,
        rng_state: trainer.rng.state(),
        rows_written,
        params: trainer.store.encode(),
        adam: trainer.adam.encode(),
        envs: driver.inner.envs.iter().map(|e| e.snapshot()).collect(),
    };
    resume::save(&snap, &out_dir.join("state.dxrs"))
}

fn truncate_log(path: &Path, data_rows: u64) -> Result<()> {
    let contents = fs::read_to_string(path)
        .map_err(|e| DexkitError::runtime(format!("resume without log.csv: {e}")))?;
    let keep: Vec<&str> = contents.lines().take(1 + data_rows as usize).collect();
    fs::write(path, format!("{}\n", keep.join("\n")))?;
    Ok(())
}

/// Serializable evaluation report (CSV is written alongside).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReportFile {
    pub task: String,
    pub split: String,
    pub rows: Vec<EvalRowFile>,
    pub mean_success: f64,
    pub std_success: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalRowFile {
    pub seed: u64,
    pub success_rate: f64,
    pub mean_return: f64,
    pub episodes: usize,
}

impl EvalReportFile {
    fn from_core(r: &EvalReport) -> EvalReportFile {
        EvalReportFile {
            task: r.task.name().into(),
            split: format!("{:?}", r.split).to_lowercase(),
            rows: r
                .rows
                .iter()
                .map(|row| EvalRowFile {
                    seed: row.seed,
                    success_rate: row.success_rate,
                    mean_return: row.mean_return,
                    episodes: row.episodes,
                })
                .collect(),
            mean_success: r.mean_success,
            std_success: r.std_success,
        }
    }
}

/// Evaluate a checkpoint on the requested splits; writes eval.csv and
/// eval.json under the out dir.
pub fn eval(
    cfg: &RunConfig,
    checkpoint: &Path,
    splits: &[Split],
    episodes: usize,
) -> Result<Vec<EvalReport>> {
    cfg.validate()?;
    if episodes == 0 {
        return Err(DexkitError::Validation(vec!["episodes must be > 0".into()]));
    }
    let out_dir = &cfg.out_dir;
    fs::create_dir_all(out_dir)?;
    let run_manifest = RunManifest::begin(cfg, out_dir)?;
    let (manifest, template) = load_or_default_manifest(cfg)?;
    let env_cfg = cfg.env_cfg()?;
    let model = Arc::new(RobotModel::standard(&cfg.sim));

    let mut policy = Policy::new(cfg.pointnet.clone());
    policy.camera_blind = cfg.camera_blind;
    let mut store = policy.init_params(cfg.seed, cfg.ppo.init_log_std);
    let bytes = fs::read(checkpoint).map_err(|e| {
        DexkitError::Validation(vec![format!("checkpoint {}: {e}", checkpoint.display())])
    })?;
    store.load_strict(&bytes)?;

    let mut reports = Vec::new();
    for &split in splits {
        reports.push(eval::run_eval(
            &policy, &store, &env_cfg, &model, &manifest, &template, split, episodes, &cfg.seeds,
        )?);
    }
    csv::write_eval_reports(&out_dir.join("eval.csv"), &reports)?;
    let dto: Vec<EvalReportFile> = reports.iter().map(EvalReportFile::from_core).collect();
    fs::write(out_dir.join("eval.json"), serde_json::to_vec_pretty(&dto)?)?;
    run_manifest.complete(out_dir, vec!["eval.csv".into(), "eval.json".into()])?;
    Ok(reports)
}

/// Viewpoint sweep for a checkpoint; writes viewpoint.csv (35 rows).
pub fn sweep_viewpoints(
    cfg: &RunConfig,
    checkpoint: &Path,
    episodes_per_cell: usize,
) -> Result<ViewpointGrid> {
    cfg.validate()?;
    let out_dir = &cfg.out_dir;
    fs::create_dir_all(out_dir)?;
    let run_manifest = RunManifest::begin(cfg, out_dir)?;
    let (manifest, template) = load_or_default_manifest(cfg)?;
    let env_cfg = cfg.env_cfg()?;
    let model = Arc::new(RobotModel::standard(&cfg.sim));

    let mut policy = Policy::new(cfg.pointnet.clone());
    policy.camera_blind = cfg.camera_blind;
    let mut store = policy.init_params(cfg.seed, cfg.ppo.init_log_std);
    let bytes = fs::read(checkpoint).map_err(|e| {
        DexkitError::Validation(vec![format!("checkpoint {}: {e}", checkpoint.display())])
    })?;
    store.load_strict(&bytes)?;

    let grid = eval::run_viewpoint_sweep(
        &policy,
        &store,
        &env_cfg,
        &model,
        &manifest,
        &template,
        episodes_per_cell,
        cfg.seed,
    )?;
    csv::write_viewpoint_grid(&out_dir.join("viewpoint.csv"), &grid)?;
    run_manifest.complete(out_dir, vec!["viewpoint.csv".into()])?;
    Ok(grid)
}

/// Ablation plan file: which axis to sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationPlanFile {
    /// "seen-fraction", "sizes", or "regimes".
    pub axis: String,
    #[serde(default)]
    pub seeds: Option<Vec<u64>>,
    #[serde(default)]
    pub eval_episodes: Option<usize>,
}

/// Run an ablation plan; writes per-variant learning curves and a
/// comparison CSV.
pub fn ablate(cfg: &RunConfig, plan: &AblationPlanFile) -> Result<Vec<AblationResult>> {
    cfg.validate()?;
    let out_dir = &cfg.out_dir;
    fs::create_dir_all(out_dir)?;
    let run_manifest = RunManifest::begin(cfg, out_dir)?;
    let (manifest, template) = load_or_default_manifest(cfg)?;
    let env_cfg = cfg.env_cfg()?;
    let seeds = plan.seeds.clone().unwrap_or_else(|| cfg.seeds.clone());
    let eval_episodes = plan.eval_episodes.unwrap_or(cfg.eval_episodes);

    let variants: Vec<VariantSpec> = match plan.axis.as_str() {
        "seen-fraction" => vec![
            VariantSpec {
                name: "seen-100".into(),
                pointnet: cfg.pointnet.clone(),
                encoder: None,
                train_object_ids: full_roster(&manifest),
            },
            VariantSpec {
                name: "seen-50".into(),
                pointnet: cfg.pointnet.clone(),
                encoder: None,
                train_object_ids: half_roster(&manifest),
            },
        ],
        "sizes" => [PointNetSize::Small, PointNetSize::Medium, PointNetSize::Large]
            .into_iter()
            .map(|size| VariantSpec {
                name: format!("size-{}", size.name()),
                pointnet: PointNetSpec { size, ..cfg.pointnet.clone() },
                encoder: None,
                train_object_ids: full_roster(&manifest),
            })
            .collect(),
        "regimes" => {
            let encoders = pretrain_all_methods(cfg, &manifest, &template, out_dir)?;
            let mut v = vec![VariantSpec {
                name: "scratch".into(),
                pointnet: cfg.pointnet.clone(),
                encoder: None,
                train_object_ids: full_roster(&manifest),
            }];
            for (method, bytes) in encoders {
                v.push(VariantSpec {
                    name: method.name().into(),
                    pointnet: cfg.pointnet.clone(),
                    encoder: Some(bytes),
                    train_object_ids: full_roster(&manifest),
                });
            }
            v
        }
        other => {
            return Err(DexkitError::Validation(vec![format!("unknown ablation axis {other:?}")]))
        }
    };

    let threads = cfg.env_threads;
    let factory = move |envs: Vec<Env>| -> Box<dyn EnvDriver> {
        Box::new(ParallelVecEnv::new(envs, threads))
    };
    let results = eval::run_ablation(
        &variants,
        &manifest,
        &template,
        &env_cfg,
        &cfg.ppo,
        &seeds,
        eval_episodes,
        &factory,
    )?;

    let mut artifacts = Vec::new();
    let mut cmp = String::from("variant,seed,split,success_rate,agg_mean,agg_std\n");
    for r in &results {
        for (i, log) in r.logs.iter().enumerate() {
            let name = format!("{}_seed{}_log.csv", r.name, seeds[i]);
            csv::write_training_log(&out_dir.join(&name), log)?;
            artifacts.push(name);
        }
        for (rep, split) in [(&r.seen, "seen"), (&r.unseen, "unseen")] {
            for row in &rep.rows {
                cmp.push_str(&format!(
                    "{},{},{},{:.6},{:.6},{}\n",
                    r.name,
                    row.seed,
                    split,
                    row.success_rate,
                    rep.mean_success,
                    rep.std_success.map(|s| format!("{s:.6}")).unwrap_or_default(),
                ));
            }
        }
    }
    fs::write(out_dir.join("comparison.csv"), cmp)?;
    artifacts.push("comparison.csv".into());
    run_manifest.complete(out_dir, artifacts)?;
    Ok(results)
}

/// Generate desk-scale datasets and run all five pre-training methods,
/// returning their encoder checkpoints.
fn pretrain_all_methods(
    cfg: &RunConfig,
    manifest: &SplitManifest,
    template: &CategoryTemplate,
    out_dir: &Path,
) -> Result<Vec<(PretrainMethod, Vec<u8>)>> {
    let task = cfg.task_spec().expect("validated");
    let model = RobotModel::standard(&cfg.sim);
    let dam_records = generate_dam(
        manifest,
        template,
        &task,
        &model,
        &cfg.sensing,
        cfg.dam_per_object,
        cfg.seed,
    );
    let dam: Vec<TrainCloud> = dam_records.iter().map(TrainCloud::from_dam).collect();
    let pmm_records =
        generate_pmm(&Category::ALL, cfg.pmm_per_category, &cfg.sensing, cfg.seed);
    let pmm: Vec<TrainCloud> = pmm_records.iter().map(TrainCloud::from_pmm).collect();

    let pre_cfg = PretrainConfig {
        epochs: cfg.pretrain_epochs,
        batch: cfg.pretrain_batch,
        seed: cfg.seed,
        ..Default::default()
    };
    let mut out = Vec::new();
    for method in PretrainMethod::ALL {
        let outcome = match method {
            PretrainMethod::SegDam => train_segmentation(&dam, &cfg.pointnet, &pre_cfg)?,
            PretrainMethod::SegPmm => train_segmentation(&pmm, &cfg.pointnet, &pre_cfg)?,
            PretrainMethod::ClsPmm => {
                train_classification(&pmm, &cfg.pointnet, Category::ALL.len(), &pre_cfg)?
            }
            PretrainMethod::ReconDam => train_reconstruction(&dam, &cfg.pointnet, &pre_cfg)?,
            PretrainMethod::SimsiamDam => {
                train_simsiam(&dam, &cfg.pointnet, &AugmentationSpec::default(), &pre_cfg)?
            }
        };
        let ckpt = out_dir.join(format!("encoder_{}.dxck", method.name()));
        fs::write(&ckpt, &outcome.encoder_checkpoint)?;
        csv::write_metrics(&ckpt.with_extension("metrics.csv"), &outcome.metrics)?;
        out.push((method, outcome.encoder_checkpoint));
    }
    Ok(out)
}

/// Expose the checkpoint loader for tests and downstream code.
pub fn load_policy_store(
    cfg: &RunConfig,
    checkpoint: &Path,
) -> Result<(Policy, ParamStore)> {
    let mut policy = Policy::new(cfg.pointnet.clone());
    policy.camera_blind = cfg.camera_blind;
    let mut store = policy.init_params(cfg.seed, cfg.ppo.init_log_std);
    let bytes = fs::read(checkpoint)?;
    store.load_strict(&bytes)?;
    Ok((policy, store))
}
