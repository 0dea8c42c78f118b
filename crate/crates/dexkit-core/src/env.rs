//! Gym-style episode loop: simulation stepping, staged rewards, observation
//! assembly, fixed-horizon termination, auto-reset.
//!
//! Coupling is gated on the latched stage: the functional joint may move
//! only on steps that begin in stage 3 (and only while the instantaneous
//! grasp predicate holds), so the per-episode sum of progress rewards
//! telescopes exactly to the total part motion.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::assets::ArticulatedObjectInstance;
use crate::error::CoreError;
use crate::rng::stream_seed_idx;
use crate::sensing::{
    assemble_observation, CameraModel, ImaginedPattern, Observation, SensingConfig,
};
use crate::sim::{
    self, ContactReport, ObjectProxies, RobotModel, SimConfig, SimState, StepInfo,
};
use crate::tasks::{
    check_success, palm_to_grasp, reward_contact, reward_penalty, reward_progress, reward_reach,
    task_progress, total_reward, RewardMode, RewardWeights, StageTracker, TaskSpec,
};

/// Everything an environment needs besides the object instance.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EnvConfig {
    pub sim: SimConfig,
    pub sensing: SensingConfig,
    pub task: TaskSpec,
    pub reward: RewardWeights,
    /// Episode length in steps; episodes always run the full horizon.
    pub horizon: usize,
}

impl EnvConfig {
    pub fn new(task: TaskSpec) -> EnvConfig {
        EnvConfig {
            sim: SimConfig::default(),
            sensing: SensingConfig::default(),
            task,
            reward: RewardWeights::default(),
            horizon: 200,
        }
    }
}

/// Per-step diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvInfo {
    pub stage: u8,
    /// Success criterion met at or before this step.
    pub success: bool,
    pub first_success_step: Option<u64>,
    /// Observed cloud fell back to sentinel points.
    pub sentinel_cloud: bool,
    pub progress: f64,
    pub sim: StepInfo,
}

/// Step output: terminal observations are returned as-is; the auto-reset
/// observation for the next episode is available via [`Env::current_obs`].
#[derive(Debug, Clone)]
pub struct EnvStepOut {
    pub obs: Observation,
    pub reward: f64,
    pub done: bool,
    pub info: EnvInfo,
}

/// One environment instance: owns its object, sim state, stage tracker, and
/// episode seeding. Envs are independent; any number may run concurrently.
#[derive(Debug, Clone)]
pub struct Env {
    pub cfg: EnvConfig,
    model: Arc<RobotModel>,
    pattern: Arc<ImaginedPattern>,
    instance: ArticulatedObjectInstance,
    proxies: ObjectProxies,
    camera: CameraModel,
    state: SimState,
    tracker: StageTracker,
    episode_seed: u64,
    step_in_episode: u64,
    prev_progress: f64,
    first_success: Option<u64>,
    episode_return: f64,
    current_obs: Observation,
    // auto-reset seeding
    env_idx: usize,
    base_seed: u64,
    episode_counter: u64,
}

/// Fixed pattern seed: the imagined-point layout is part of the sensing
/// definition and must match between pre-training data and RL.
pub const PATTERN_SEED: u64 = 0xD17A;

impl Env {
    pub fn new(
        cfg: EnvConfig,
        model: Arc<RobotModel>,
        instance: ArticulatedObjectInstance,
        env_idx: usize,
        base_seed: u64,
    ) -> Env {
        let pattern = Arc::new(ImaginedPattern::build(&model, cfg.sensing.n_imagined, PATTERN_SEED));
        Env::with_pattern(cfg, model, pattern, instance, env_idx, base_seed)
    }

    /// Share one imagined pattern across many envs.
    pub fn with_pattern(
        cfg: EnvConfig,
        model: Arc<RobotModel>,
        pattern: Arc<ImaginedPattern>,
        instance: ArticulatedObjectInstance,
        env_idx: usize,
        base_seed: u64,
    ) -> Env {
        let proxies = ObjectProxies::build(&instance, &cfg.sim);
        let camera = cfg.sensing.camera(cfg.task.camera_eye, cfg.task.camera_target);
        let mut env = Env {
            model,
            pattern,
            proxies,
            camera,
            instance,
            state: SimState {
                robot: sim::RobotState {
                    arm_q: [0.0; 6],
                    hand_q: [0.0; 16],
                    hand_q_target: [0.0; 16],
                    palm_lin_vel: crate::geometry::Vec3::ZERO,
                    palm_ang_vel: crate::geometry::Vec3::ZERO,
                },
                object_root: crate::geometry::Pose::IDENTITY,
                object_q: vec![],
                lift_height: 0.0,
                step_count: 0,
                elapsed: 0.0,
            },
            tracker: StageTracker::default(),
            episode_seed: 0,
            step_in_episode: 0,
            prev_progress: 0.0,
            first_success: None,
            episode_return: 0.0,
            current_obs: Observation {
                proprio: crate::sensing::Proprio([0.0; 35]),
                cloud: crate::sensing::LabeledPointCloud {
                    points: vec![],
                    labels: vec![],
                    origins: vec![],
                },
            },
            cfg,
            env_idx,
            base_seed,
            episode_counter: 0,
        };
        let seed = env.next_episode_seed();
        env.reset_seeded(seed);
        env
    }

    pub fn model(&self) -> &RobotModel {
        &self.model
    }

    pub fn instance(&self) -> &ArticulatedObjectInstance {
        &self.instance
    }

    pub fn state(&self) -> &SimState {
        &self.state
    }

    pub fn stage(&self) -> u8 {
        self.tracker.stage()
    }

    pub fn camera(&self) -> &CameraModel {
        &self.camera
    }

    /// Replace the camera (viewpoint sweep). Takes effect on the next
    /// reset/step observation.
    pub fn set_camera(&mut self, cam: CameraModel) {
        self.camera = cam;
    }

    /// Swap the object (round-robin evaluation). Callers must reset next.
    pub fn set_instance(&mut self, instance: ArticulatedObjectInstance) {
        self.proxies = ObjectProxies::build(&instance, &self.cfg.sim);
        self.instance = instance;
    }

    fn next_episode_seed(&mut self) -> u64 {
        let tag = (self.env_idx as u64) << 40 | self.episode_counter;
        self.episode_counter += 1;
        stream_seed_idx(self.base_seed, "episode", tag)
    }

    /// Reset with an explicit episode seed (evaluation protocols pair
    /// episodes across conditions this way).
    pub fn reset_seeded(&mut self, episode_seed: u64) -> Observation {
        self.episode_seed = episode_seed;
        self.state = sim::reset(
            &self.model,
            &self.instance,
            self.cfg.task.yaw_range,
            self.cfg.task.xy_range,
            episode_seed,
        );
        self.tracker.reset();
        self.step_in_episode = 0;
        self.prev_progress = task_progress(&self.instance, &self.cfg.task, &self.state);
        self.first_success = None;
        self.episode_return = 0.0;
        self.refresh_obs().0
    }

    /// Reset with the next auto-derived episode seed.
    pub fn reset_auto(&mut self) -> Observation {
        let seed = self.next_episode_seed();
        self.reset_seeded(seed)
    }

    fn refresh_obs(&mut self) -> (Observation, bool) {
        let obs_seed = stream_seed_idx(self.episode_seed, "obs", self.step_in_episode);
        let (obs, sentinel) = assemble_observation(
            &self.model,
            &self.instance,
            &self.state,
            &self.camera,
            &self.pattern,
            &self.cfg.sensing,
            obs_seed,
        );
        self.current_obs = obs.clone();
        (obs, sentinel)
    }

    /// Observation the next action should be computed from.
    pub fn current_obs(&self) -> &Observation {
        &self.current_obs
    }

    /// Advance one step; auto-resets after the terminal step (the returned
    /// observation is still the terminal one).
    pub fn step(&mut self, action: &[f64]) -> Result<EnvStepOut, CoreError> {
        let allow_coupling = self.tracker.stage() == 3;
        let prev_hand_q = self.state.robot.hand_q;
        let (next, contacts, sim_info) = sim::step_gated(
            &self.model,
            &self.instance,
            &self.proxies,
            &self.state,
            action,
            &self.cfg.sim,
            allow_coupling,
        )?;
        self.state = next;

        let d = palm_to_grasp(&self.model, &self.instance, &self.state);
        let stage = self.tracker.update(d, &contacts, self.cfg.task.d_reach, self.step_in_episode);
        let progress = task_progress(&self.instance, &self.cfg.task, &self.state);

        let w = &self.cfg.reward;
        let r_reach = reward_reach(stage, d, w);
        let reward = match self.cfg.task.reward_mode {
            RewardMode::ReachOnly => w.w_reach * r_reach,
            RewardMode::Full => {
                let r_contact = reward_contact(stage, &contacts);
                let r_prog = reward_progress(stage, progress, self.prev_progress);
                let mut hand_qd = [0.0; 16];
                for i in 0..16 {
                    hand_qd[i] = (self.state.robot.hand_q[i] - prev_hand_q[i]) / self.cfg.sim.dt;
                }
                let clamped: Vec<f64> = action.iter().map(|a| a.clamp(-1.0, 1.0)).collect();
                let r_pen = reward_penalty(&clamped, &hand_qd, w);
                total_reward(r_reach, r_contact, r_prog, r_pen, w)
            }
        };
        self.prev_progress = progress;
        self.episode_return += reward;

        let success_now = match self.cfg.task.reward_mode {
            RewardMode::ReachOnly => stage >= 2,
            RewardMode::Full => check_success(&self.instance, &self.cfg.task, &self.state),
        };
        if success_now && self.first_success.is_none() {
            self.first_success = Some(self.step_in_episode);
        }

        self.step_in_episode += 1;
        let done = self.step_in_episode >= self.cfg.horizon as u64;
        let (obs, sentinel) = self.refresh_obs();

        let info = EnvInfo {
            stage,
            success: self.first_success.is_some(),
            first_success_step: self.first_success,
            sentinel_cloud: sentinel,
            progress,
            sim: sim_info,
        };
        let out = EnvStepOut { obs, reward, done, info };
        if done {
            self.reset_auto();
        }
        Ok(out)
    }

    pub fn episode_return(&self) -> f64 {
        self.episode_return
    }

    /// Everything needed to restore this env mid-training.
    pub fn snapshot(&self) -> EnvSnapshot {
        EnvSnapshot {
            object_id: self.instance.id,
            episode_seed: self.episode_seed,
            step_in_episode: self.step_in_episode,
            episode_counter: self.episode_counter,
            stage: self.tracker.stage(),
            prev_progress: self.prev_progress,
            first_success: self.first_success,
            episode_return: self.episode_return,
            sim: self.state.clone(),
        }
    }

    /// Restore from a snapshot. The instance must match the snapshot's
    /// object id; the cached observation is recomputed deterministically.
    pub fn restore(
        &mut self,
        snap: &EnvSnapshot,
        instance: ArticulatedObjectInstance,
    ) -> Result<(), CoreError> {
        if instance.id != snap.object_id {
            return Err(CoreError::InvalidConfig(alloc::format!(
                "snapshot object {} vs instance {}",
                snap.object_id,
                instance.id
            )));
        }
        self.set_instance(instance);
        self.episode_seed = snap.episode_seed;
        self.step_in_episode = snap.step_in_episode;
        self.episode_counter = snap.episode_counter;
        self.tracker.restore(snap.stage);
        self.prev_progress = snap.prev_progress;
        self.first_success = snap.first_success;
        self.episode_return = snap.episode_return;
        self.state = snap.sim.clone();
        self.refresh_obs();
        Ok(())
    }
}

/// Serializable env state for exact training resume.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvSnapshot {
    pub object_id: u32,
    pub episode_seed: u64,
    pub step_in_episode: u64,
    pub episode_counter: u64,
    pub stage: u8,
    pub prev_progress: f64,
    pub first_success: Option<u64>,
    pub episode_return: f64,
    pub sim: SimState,
}

/// A set of independent environments stepped together. Serial here; the
/// std-side driver may fan env stepping out across threads (envs share no
/// mutable state) as long as results are collected back in slot order.
#[derive(Debug, Clone)]
pub struct VecEnv {
    pub envs: Vec<Env>,
}

impl VecEnv {
    pub fn new(envs: Vec<Env>) -> VecEnv {
        VecEnv { envs }
    }

    pub fn len(&self) -> usize {
        self.envs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.envs.is_empty()
    }

    pub fn step_all(&mut self, actions: &[Vec<f64>]) -> Result<Vec<EnvStepOut>, CoreError> {
        debug_assert_eq!(actions.len(), self.envs.len());
        self.envs
            .iter_mut()
            .zip(actions)
            .map(|(env, a)| env.step(a))
            .collect()
    }
}

/// Contact predicate re-export for stage logic tests.
pub type Contacts = ContactReport;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assets::{generate_object, Category, CategoryTemplate, Split};
    use crate::rng::Rng;

    fn make_env(category: Category, horizon: usize) -> Env {
        let mut cfg = EnvConfig::new(TaskSpec::for_category(category).unwrap());
        cfg.horizon = horizon;
        cfg.sensing = SensingConfig {
            width: 32,
            height: 32,
            n_observed: 64,
            n_imagined: 16,
            ..Default::default()
        };
        let model = Arc::new(RobotModel::standard(&cfg.sim));
        let template = CategoryTemplate::for_category(category);
        let instance = generate_object(&template, 7, Split::Seen);
        Env::new(cfg, model, instance, 0, 99)
    }

    #[test]
    fn episode_runs_full_horizon_and_auto_resets() {
        let mut env = make_env(Category::Laptop, 10);
        let mut rng = Rng::seed_from(3);
        for t in 0..10 {
            let a: Vec<f64> = (0..22).map(|_| rng.uniform(-1.0, 1.0)).collect();
            let out = env.step(&a).unwrap();
            assert_eq!(out.done, t == 9);
        }
        // auto-reset happened: fresh episode state
        assert_eq!(env.step_in_episode, 0);
        assert_eq!(env.stage(), 1);
    }

    #[test]
    fn deterministic_given_seed_and_actions() {
        let run = || {
            let mut env = make_env(Category::Faucet, 8);
            env.reset_seeded(0xBEEF);
            let mut rng = Rng::seed_from(5);
            let mut rewards = Vec::new();
            for _ in 0..8 {
                let a: Vec<f64> = (0..22).map(|_| rng.uniform(-1.0, 1.0)).collect();
                let out = env.step(&a).unwrap();
                rewards.push(out.reward);
            }
            (rewards, env.current_obs().clone())
        };
        let (r1, o1) = run();
        let (r2, o2) = run();
        assert_eq!(r1, r2);
        assert_eq!(o1, o2);
    }

    #[test]
    fn observation_size_constant_across_steps() {
        let mut env = make_env(Category::Toilet, 6);
        let n = env.cfg.sensing.cloud_size();
        assert_eq!(env.current_obs().cloud.len(), n);
        let mut rng = Rng::seed_from(7);
        for _ in 0..6 {
            let a: Vec<f64> = (0..22).map(|_| rng.uniform(-1.0, 1.0)).collect();
            let out = env.step(&a).unwrap();
            assert_eq!(out.obs.cloud.len(), n);
        }
    }

    #[test]
    fn progress_rewards_telescope_exactly() {
        // joint moves only on latched stage-3 steps, so the progress-reward
        // sum equals total part motion
        let mut rng = Rng::seed_from(11);
        for ep in 0..30 {
            let mut env = make_env(Category::Laptop, 40);
            env.reset_seeded(ep);
            let p0 = task_progress(env.instance(), &env.cfg.task, env.state());
            let mut sum = 0.0;
            let mut last_progress = p0;
            for _ in 0..40 {
                let mut a: Vec<f64> = (0..22).map(|_| rng.uniform(-1.0, 1.0)).collect();
                a[1] = 0.8; // bias toward the object to hit stage 3 sometimes
                a[2] = -0.2;
                let out = env.step(&a).unwrap();
                if out.done {
                    break;
                }
                let now = out.info.progress;
                if out.info.stage == 3 {
                    sum += now - last_progress;
                }
                last_progress = now;
            }
            let total = last_progress - p0;
            assert!((sum - total).abs() < 1e-9, "episode {ep}: {sum} vs {total}");
        }
    }

    #[test]
    fn reach_only_reward_and_success() {
        let mut env = make_env(Category::Laptop, 30);
        env.cfg.task.reward_mode = RewardMode::ReachOnly;
        env.reset_seeded(1);
        // drive straight at the object
        let mut reached = false;
        for _ in 0..30 {
            let mut a = vec![0.0; 22];
            let palm = env.state().palm_pose(env.model()).translation;
            let grasp = env.state().grasp_point(env.instance());
            let d = grasp - palm;
            let n = d.norm().max(1e-9);
            a[0] = (d.x / n).clamp(-1.0, 1.0);
            a[1] = (d.y / n).clamp(-1.0, 1.0);
            a[2] = (d.z / n).clamp(-1.0, 1.0);
            let out = env.step(&a).unwrap();
            assert!(out.reward <= 0.0, "reach-only reward is nonpositive");
            if out.info.success {
                reached = true;
                break;
            }
        }
        assert!(reached, "straight-line servo should reach the grasp point");
    }
}
