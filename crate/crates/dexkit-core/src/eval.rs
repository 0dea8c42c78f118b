//! Evaluation protocols: seen/unseen success rates over seeds, the
//! 35-camera viewpoint sweep, and the ablation driver.
//!
//! All protocols use deterministic mean actions and paired episode seeds, so
//! two conditions differing only in the quantity under study see identical
//! episode draws.

use alloc::boxed::Box;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::assets::{Category, CategoryTemplate, Split, SplitManifest};
use crate::env::{Env, EnvConfig, VecEnv};
use crate::error::CoreError;
use crate::math;
use crate::nn::{ParamStore, PointNetSpec};
use crate::rl::{evaluate_policy, EnvDriver, PPOConfig, Policy, TrainLogRow, Trainer};
use crate::rng::stream_seed_idx;
use crate::sensing::CameraModel;
use crate::sim::RobotModel;

/// Success statistics for one (task, split, seed).
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub seed: u64,
    pub success_rate: f64,
    pub mean_return: f64,
    pub episodes: usize,
}

/// Per-(task, split) report with the seed aggregate.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub task: Category,
    pub split: Split,
    pub rows: Vec<EvalRow>,
    pub mean_success: f64,
    /// Sample std over seeds; omitted below 2 seeds.
    pub std_success: Option<f64>,
}

impl EvalReport {
    fn aggregate(task: Category, split: Split, rows: Vec<EvalRow>) -> EvalReport {
        let n = rows.len() as f64;
        let mean = rows.iter().map(|r| r.success_rate).sum::<f64>() / n;
        let std = if rows.len() >= 2 {
            let var = rows.iter().map(|r| (r.success_rate - mean) * (r.success_rate - mean)).sum::<f64>()
                / (n - 1.0);
            Some(math::sqrt(var))
        } else {
            None
        };
        EvalReport { task, split, rows, mean_success: mean, std_success: std }
    }
}

/// Evaluate a policy on one split: episodes round-robin over the split's
/// objects, deterministic mean actions, mean ± std over seeds.
#[allow(clippy::too_many_arguments)]
pub fn run_eval(
    policy: &Policy,
    store: &ParamStore,
    env_cfg: &EnvConfig,
    model: &Arc<RobotModel>,
    manifest: &SplitManifest,
    template: &CategoryTemplate,
    split: Split,
    n_episodes: usize,
    seeds: &[u64],
) -> Result<EvalReport, CoreError> {
    if n_episodes == 0 {
        return Err(CoreError::InvalidConfig("n_episodes must be > 0".into()));
    }
    if seeds.is_empty() {
        return Err(CoreError::InvalidConfig("at least one seed required".into()));
    }
    let entries: Vec<_> = manifest.entries(split).collect();
    if entries.is_empty() {
        return Err(CoreError::Empty("split objects"));
    }

    let mut rows = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let mut success = 0.0;
        let mut ret = 0.0;
        let mut env: Option<Env> = None;
        let mut current_obj = usize::MAX;
        for ep in 0..n_episodes {
            let obj_idx = ep % entries.len();
            if obj_idx != current_obj {
                let instance = manifest.build_object(entries[obj_idx], template);
                match env.as_mut() {
                    Some(e) => e.set_instance(instance),
                    None => {
                        env = Some(Env::new(env_cfg.clone(), model.clone(), instance, 0, seed));
                    }
                }
                current_obj = obj_idx;
            }
            let env = env.as_mut().unwrap();
            let stats = evaluate_policy(
                env,
                policy,
                store,
                1,
                false,
                stream_seed_idx(seed, "eval-episode", ep as u64),
            )?;
            success += stats.success_rate;
            ret += stats.mean_return;
        }
        rows.push(EvalRow {
            seed,
            success_rate: success / n_episodes as f64,
            mean_return: ret / n_episodes as f64,
            episodes: n_episodes,
        });
    }
    Ok(EvalReport::aggregate(manifest.category, split, rows))
}

/// Camera sampler for the viewpoint sweep: a semi-sphere of radius
/// r = |camera - object| whose center sits r along the optical axis.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraSampler {
    pub radius: f64,
    pub center: crate::geometry::Vec3,
    pub azim0: f64,
    pub polar0: f64,
}

impl CameraSampler {
    /// The training camera must look at the object anchor, which makes the
    /// semi-sphere center coincide with it.
    pub fn from_training_camera(cam: &CameraModel, object_anchor: crate::geometry::Vec3) -> Self {
        let eye = cam.pose.translation;
        let radius = eye.dist(object_anchor);
        let center = eye + cam.optical_axis() * radius;
        let rel = eye - center;
        let polar0 = math::acos((rel.z / radius).clamp(-1.0, 1.0));
        let azim0 = math::atan2(rel.y, rel.x);
        CameraSampler { radius, center, azim0, polar0 }
    }

    /// Camera at spherical offsets (degrees) from the training viewpoint,
    /// re-aimed at the semi-sphere center.
    pub fn camera_at(&self, theta_deg: f64, phi_deg: f64, base: &CameraModel) -> CameraModel {
        let azim = self.azim0 + theta_deg * math::PI / 180.0;
        let polar = self.polar0 + phi_deg * math::PI / 180.0;
        let eye = self.center
            + crate::geometry::Vec3::new(
                self.radius * math::sin(polar) * math::cos(azim),
                self.radius * math::sin(polar) * math::sin(azim),
                self.radius * math::cos(polar),
            );
        CameraModel::look_at(eye, self.center, base.fov_y, base.width, base.height, base.near, base.far)
    }
}

/// Azimuth offsets: -60..=60 degrees in steps of 20 (7 values).
pub const SWEEP_AZIMUTH_DEG: [f64; 7] = [-60.0, -40.0, -20.0, 0.0, 20.0, 40.0, 60.0];
/// Polar offsets: -20..=20 degrees in steps of 10 (5 values; the 7x5 = 35
/// cell grid is the contract).
pub const SWEEP_POLAR_DEG: [f64; 5] = [-20.0, -10.0, 0.0, 10.0, 20.0];

/// One sweep cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewpointCell {
    pub theta_deg: f64,
    pub phi_deg: f64,
    pub camera: CameraModel,
    pub success_rate: f64,
    pub episodes: usize,
}

/// The 7 x 5 sweep grid; cell (0, 0) is the training viewpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewpointGrid {
    pub cells: Vec<ViewpointCell>,
}

impl ViewpointGrid {
    pub fn cell(&self, theta_deg: f64, phi_deg: f64) -> Option<&ViewpointCell> {
        self.cells.iter().find(|c| c.theta_deg == theta_deg && c.phi_deg == phi_deg)
    }

    pub fn min_max_rate(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for c in &self.cells {
            lo = lo.min(c.success_rate);
            hi = hi.max(c.success_rate);
        }
        (lo, hi)
    }
}

/// The 35 sweep cameras for a task's training camera.
pub fn sample_viewpoint_grid(
    training_cam: &CameraModel,
    object_anchor: crate::geometry::Vec3,
) -> Vec<(f64, f64, CameraModel)> {
    let sampler = CameraSampler::from_training_camera(training_cam, object_anchor);
    let mut out = Vec::with_capacity(SWEEP_AZIMUTH_DEG.len() * SWEEP_POLAR_DEG.len());
    for &theta in &SWEEP_AZIMUTH_DEG {
        for &phi in &SWEEP_POLAR_DEG {
            out.push((theta, phi, sampler.camera_at(theta, phi, training_cam)));
        }
    }
    out
}

/// Evaluate one policy under all 35 cameras. Only the camera changes
/// between cells: episode seeds and object order are paired, so a
/// camera-blind policy produces an exactly flat grid.
#[allow(clippy::too_many_arguments)]
pub fn run_viewpoint_sweep(
    policy: &Policy,
    store: &ParamStore,
    env_cfg: &EnvConfig,
    model: &Arc<RobotModel>,
    manifest: &SplitManifest,
    template: &CategoryTemplate,
    n_per_cell: usize,
    seed: u64,
) -> Result<ViewpointGrid, CoreError> {
    if n_per_cell == 0 {
        return Err(CoreError::InvalidConfig("n_per_cell must be > 0".into()));
    }
    let base_cam = env_cfg.sensing.camera(env_cfg.task.camera_eye, env_cfg.task.camera_target);
    let grid = sample_viewpoint_grid(&base_cam, env_cfg.task.camera_target);
    let entries: Vec<_> = manifest.entries(Split::Seen).collect();
    if entries.is_empty() {
        return Err(CoreError::Empty("seen objects"));
    }

    let mut cells = Vec::with_capacity(grid.len());
    for (theta, phi, cam) in grid {
        let mut success = 0.0;
        let mut env: Option<Env> = None;
        let mut current_obj = usize::MAX;
        for ep in 0..n_per_cell {
            let obj_idx = ep % entries.len();
            if obj_idx != current_obj {
                let instance = manifest.build_object(entries[obj_idx], template);
                match env.as_mut() {
                    Some(e) => e.set_instance(instance),
                    None => {
                        env = Some(Env::new(env_cfg.clone(), model.clone(), instance, 0, seed));
                    }
                }
                current_obj = obj_idx;
                env.as_mut().unwrap().set_camera(cam.clone());
            }
            let env = env.as_mut().unwrap();
            let stats = evaluate_policy(
                env,
                policy,
                store,
                1,
                false,
                stream_seed_idx(seed, "sweep-episode", ep as u64),
            )?;
            success += stats.success_rate;
        }
        cells.push(ViewpointCell {
            theta_deg: theta,
            phi_deg: phi,
            camera: cam,
            success_rate: success / n_per_cell as f64,
            episodes: n_per_cell,
        });
    }
    Ok(ViewpointGrid { cells })
}

/// One ablation variant: a name, an encoder setup, and the seen-object
/// subset it trains on.
#[derive(Debug, Clone)]
pub struct VariantSpec {
    pub name: String,
    pub pointnet: PointNetSpec,
    /// Encoder checkpoint to initialize from (None = scratch).
    pub encoder: Option<Vec<u8>>,
    /// Object ids (seen split) this variant trains on.
    pub train_object_ids: Vec<u32>,
}

/// Training + evaluation results for one variant.
#[derive(Debug, Clone)]
pub struct AblationResult {
    pub name: String,
    /// One training log per seed.
    pub logs: Vec<Vec<TrainLogRow>>,
    /// Final evaluation on the shared unseen set (rows = seeds).
    pub unseen: EvalReport,
    /// Final evaluation on the seen set (rows = seeds).
    pub seen: EvalReport,
}

/// Builds an [`EnvDriver`] from a set of envs; the std layer substitutes a
/// thread-fanned driver here.
pub type DriverFactory<'a> = dyn Fn(Vec<Env>) -> Box<dyn EnvDriver> + 'a;

/// Serial driver factory.
pub fn serial_driver(envs: Vec<Env>) -> Box<dyn EnvDriver> {
    Box::new(VecEnv::new(envs))
}

/// First ceil(n/2) seen objects: the "around 50%" roster.
pub fn half_roster(manifest: &SplitManifest) -> Vec<u32> {
    let seen: Vec<u32> = manifest.entries(Split::Seen).map(|e| e.id).collect();
    let half = seen.len().div_ceil(2);
    seen[..half].to_vec()
}

pub fn full_roster(manifest: &SplitManifest) -> Vec<u32> {
    manifest.entries(Split::Seen).map(|e| e.id).collect()
}

/// Train each variant with identical budgets and seeds (differing only on
/// the variant axis) and evaluate every one on the same seen/unseen sets.
#[allow(clippy::too_many_arguments)]
pub fn run_ablation(
    variants: &[VariantSpec],
    manifest: &SplitManifest,
    template: &CategoryTemplate,
    env_cfg: &EnvConfig,
    ppo: &PPOConfig,
    seeds: &[u64],
    eval_episodes: usize,
    make_driver: &DriverFactory,
) -> Result<Vec<AblationResult>, CoreError> {
    ppo.validate()?;
    if variants.is_empty() || seeds.is_empty() {
        return Err(CoreError::Empty("ablation plan"));
    }
    let model = Arc::new(RobotModel::standard(&env_cfg.sim));
    let rounds = ppo.total_steps.div_ceil((ppo.horizon * ppo.n_envs) as u64);

    let mut results = Vec::with_capacity(variants.len());
    for variant in variants {
        let entries: Vec<_> = manifest
            .objects
            .iter()
            .filter(|e| variant.train_object_ids.contains(&e.id))
            .collect();
        if entries.is_empty() {
            return Err(CoreError::Empty("variant training objects"));
        }
        let mut logs = Vec::with_capacity(seeds.len());
        let mut unseen_rows = Vec::with_capacity(seeds.len());
        let mut seen_rows = Vec::with_capacity(seeds.len());
        for &seed in seeds {
            let policy = Policy::new(variant.pointnet.clone());
            let mut trainer = Trainer::new(policy.clone(), ppo.clone(), seed);
            if let Some(enc) = &variant.encoder {
                trainer.load_encoder(enc)?;
            }
            // envs cycle over the variant's training roster
            let envs: Vec<Env> = (0..ppo.n_envs)
                .map(|i| {
                    let entry = entries[i % entries.len()];
                    let instance = manifest.build_object(entry, template);
                    Env::new(env_cfg.clone(), model.clone(), instance, i, seed)
                })
                .collect();
            let mut driver = make_driver(envs);
            let mut log = Vec::with_capacity(rounds as usize);
            for _ in 0..rounds {
                log.push(trainer.run_round(driver.as_mut())?);
            }
            // shared evaluation sets regardless of the training roster
            let unseen = run_eval(
                &policy,
                &trainer.store,
                env_cfg,
                &model,
                manifest,
                template,
                Split::Unseen,
                eval_episodes,
                &[seed],
            )?;
            let seen = run_eval(
                &policy,
                &trainer.store,
                env_cfg,
                &model,
                manifest,
                template,
                Split::Seen,
                eval_episodes,
                &[seed],
            )?;
            unseen_rows.push(unseen.rows.into_iter().next().unwrap());
            seen_rows.push(seen.rows.into_iter().next().unwrap());
            logs.push(log);
        }
        results.push(AblationResult {
            name: variant.name.clone(),
            logs,
            unseen: EvalReport::aggregate(manifest.category, Split::Unseen, unseen_rows),
            seen: EvalReport::aggregate(manifest.category, Split::Seen, seen_rows),
        });
    }
    Ok(results)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assets::generate_split;
    use crate::geometry::Vec3;
    use crate::nn::PointNetSize;
    use crate::sensing::SensingConfig;
    use crate::tasks::TaskSpec;

    fn tiny_env_cfg() -> EnvConfig {
        let mut cfg = EnvConfig::new(TaskSpec::for_category(Category::Laptop).unwrap());
        cfg.horizon = 5;
        cfg.sensing = SensingConfig {
            width: 24,
            height: 24,
            n_observed: 32,
            n_imagined: 8,
            ..Default::default()
        };
        cfg
    }

    fn tiny_policy_store() -> (Policy, ParamStore) {
        let policy = Policy::new(PointNetSpec {
            size: PointNetSize::Small,
            in_dim: 4,
            hidden_width: 8,
            feature_dim: 16,
        });
        let store = policy.init_params(3, -0.5);
        (policy, store)
    }

    #[test]
    fn grid_has_35_cells_on_the_semisphere() {
        let cfg = tiny_env_cfg();
        let cam = cfg.sensing.camera(cfg.task.camera_eye, cfg.task.camera_target);
        let anchor = cfg.task.camera_target;
        let grid = sample_viewpoint_grid(&cam, anchor);
        assert_eq!(grid.len(), 35);
        let r = cam.pose.translation.dist(anchor);
        for (_, _, c) in &grid {
            // distance to center preserved
            let d = c.pose.translation.dist(anchor);
            assert!((d - r).abs() < 1e-9, "radius {d} vs {r}");
            // optical axis passes through the center
            let axis = c.optical_axis();
            let to_center = (anchor - c.pose.translation).normalized(1e-12).unwrap();
            assert!(axis.dist(to_center) < 1e-9);
        }
    }

    #[test]
    fn zero_offset_reproduces_training_camera() {
        let cfg = tiny_env_cfg();
        let cam = cfg.sensing.camera(cfg.task.camera_eye, cfg.task.camera_target);
        let grid = sample_viewpoint_grid(&cam, cfg.task.camera_target);
        let center = grid
            .iter()
            .find(|(t, p, _)| *t == 0.0 && *p == 0.0)
            .map(|(_, _, c)| c)
            .unwrap();
        assert!(center.pose.translation.dist(cam.pose.translation) < 1e-9);
        let probe = Vec3::new(0.3, -0.5, 0.7);
        assert!(center
            .pose
            .rotation
            .rotate(probe)
            .dist(cam.pose.rotation.rotate(probe))
            < 1e-9);
    }

    #[test]
    fn eval_report_structure_and_determinism() {
        let template = CategoryTemplate::for_category(Category::Laptop);
        let manifest = generate_split(&template, 4, 3, 1, 5).unwrap();
        let cfg = tiny_env_cfg();
        let model = Arc::new(RobotModel::standard(&cfg.sim));
        let (policy, store) = tiny_policy_store();
        let run = || {
            run_eval(&policy, &store, &cfg, &model, &manifest, &template, Split::Unseen, 3, &[1, 2])
                .unwrap()
        };
        let a = run();
        let b = run();
        assert_eq!(a, b);
        assert_eq!(a.rows.len(), 2);
        assert!(a.std_success.is_some());
        assert!(a.rows.iter().all(|r| (0.0..=1.0).contains(&r.success_rate)));

        // zero episodes is a hard error
        assert!(run_eval(&policy, &store, &cfg, &model, &manifest, &template, Split::Unseen, 0, &[1])
            .is_err());
    }

    #[test]
    fn eval_never_mutates_parameters() {
        let template = CategoryTemplate::for_category(Category::Laptop);
        let manifest = generate_split(&template, 3, 2, 1, 9).unwrap();
        let cfg = tiny_env_cfg();
        let model = Arc::new(RobotModel::standard(&cfg.sim));
        let (policy, store) = tiny_policy_store();
        let before = store.content_hash();
        let _ =
            run_eval(&policy, &store, &cfg, &model, &manifest, &template, Split::Seen, 2, &[7])
                .unwrap();
        assert_eq!(store.content_hash(), before);
    }

    #[test]
    fn camera_blind_sweep_is_exactly_flat() {
        let template = CategoryTemplate::for_category(Category::Laptop);
        let manifest = generate_split(&template, 2, 2, 0, 3).unwrap();
        let cfg = tiny_env_cfg();
        let model = Arc::new(RobotModel::standard(&cfg.sim));
        let (mut policy, store) = tiny_policy_store();
        policy.camera_blind = true;
        let grid = run_viewpoint_sweep(&policy, &store, &cfg, &model, &manifest, &template, 2, 11)
            .unwrap();
        assert_eq!(grid.cells.len(), 35);
        let (lo, hi) = grid.min_max_rate();
        assert_eq!(lo, hi, "camera-blind grid must be flat");
    }

    #[test]
    fn half_roster_is_strict_subset() {
        let template = CategoryTemplate::for_category(Category::Laptop);
        let manifest = generate_split(&template, 17, 11, 6, 1).unwrap();
        let half = half_roster(&manifest);
        let full = full_roster(&manifest);
        assert_eq!(half.len(), 6);
        assert_eq!(full.len(), 11);
        assert!(half.iter().all(|id| full.contains(id)));
        assert!(half.len() < full.len());
    }

    #[test]
    fn ablation_trains_and_reports_on_shared_sets() {
        let template = CategoryTemplate::for_category(Category::Laptop);
        let manifest = generate_split(&template, 4, 3, 1, 2).unwrap();
        let cfg = tiny_env_cfg();
        let ppo = PPOConfig {
            horizon: 5,
            n_envs: 1,
            minibatch: 5,
            epochs: 1,
            total_steps: 10,
            ..Default::default()
        };
        let pn = PointNetSpec {
            size: PointNetSize::Small,
            in_dim: 4,
            hidden_width: 8,
            feature_dim: 16,
        };
        let variants = [
            VariantSpec {
                name: "full".into(),
                pointnet: pn.clone(),
                encoder: None,
                train_object_ids: full_roster(&manifest),
            },
            VariantSpec {
                name: "half".into(),
                pointnet: pn,
                encoder: None,
                train_object_ids: half_roster(&manifest),
            },
        ];
        let results = run_ablation(
            &variants,
            &manifest,
            &template,
            &cfg,
            &ppo,
            &[1],
            2,
            &serial_driver,
        )
        .unwrap();
        assert_eq!(results.len(), 2);
        for r in &results {
            assert_eq!(r.logs.len(), 1);
            assert_eq!(r.logs[0].len(), 2, "10 steps / 5 per round");
            assert_eq!(r.unseen.rows.len(), 1);
        }
    }
}
