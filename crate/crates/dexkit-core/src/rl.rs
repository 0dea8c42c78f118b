//! PPO with generalized advantage estimation over vectorized environments.
//!
//! The policy and value heads share one feature extractor: PointNet over
//! (xyz + origin flag) concatenated with a proprio MLP. Actions come from a
//! diagonal Gaussian with a state-independent learned log-std. Collection is
//! deterministic per seed; updates are single-threaded on one parameter
//! owner.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::env::{Env, EnvStepOut, VecEnv};
use crate::error::CoreError;
use crate::math;
use crate::nn::{
    mlp_forward, mlp_init, pointnet_forward, pointnet_init, AdamState, Init, ParamStore,
    PointNetSpec, Tape, Tensor,
};
use crate::rng::{stream_seed_idx, Rng};
use crate::sensing::{Observation, Proprio};
use crate::sim::ACTION_DIM;

/// PPO hyperparameters. Defaults are standard; the total step budget is a
/// caller decision.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct PPOConfig {
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip_eps: f64,
    pub epochs: usize,
    pub minibatch: usize,
    /// Rollout length per env between updates.
    pub horizon: usize,
    pub n_envs: usize,
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub lr: f64,
    pub total_steps: u64,
    pub init_log_std: f64,
}

impl Default for PPOConfig {
    fn default() -> Self {
        PPOConfig {
            gamma: 0.99,
            gae_lambda: 0.95,
            clip_eps: 0.2,
            epochs: 10,
            minibatch: 256,
            horizon: 200,
            n_envs: 10,
            value_coef: 0.5,
            entropy_coef: 0.0,
            lr: 3e-4,
            total_steps: 1_000_000,
            init_log_std: -0.5,
        }
    }
}

impl PPOConfig {
    pub fn validate(&self) -> Result<(), CoreError> {
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(CoreError::InvalidConfig(format!("gamma {} not in [0,1)", self.gamma)));
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return Err(CoreError::InvalidConfig(format!("lambda {}", self.gae_lambda)));
        }
        if self.clip_eps <= 0.0 {
            return Err(CoreError::InvalidConfig(format!("clip_eps {}", self.clip_eps)));
        }
        if self.horizon == 0 || self.n_envs == 0 || self.minibatch == 0 {
            return Err(CoreError::InvalidConfig("zero-sized rollout".into()));
        }
        Ok(())
    }
}

/// Log-std clamp range.
pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 1.0;

/// Feature extractor + heads. Proprio MLP is fixed at 35 -> 128 -> 128;
/// heads are 2-layer MLPs of width 256.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Policy {
    pub pointnet: PointNetSpec,
    /// Ignore the point cloud (proprio-only ablation).
    pub camera_blind: bool,
}

impl Policy {
    pub fn new(pointnet: PointNetSpec) -> Policy {
        Policy { pointnet, camera_blind: false }
    }

    pub fn proprio_dims(&self) -> [usize; 3] {
        [Proprio::DIM, 128, 128]
    }

    pub fn feature_dim(&self) -> usize {
        self.pointnet.feature_dim + 128
    }

    fn policy_head_dims(&self) -> [usize; 3] {
        [self.feature_dim(), 256, ACTION_DIM]
    }

    fn value_head_dims(&self) -> [usize; 3] {
        [self.feature_dim(), 256, 1]
    }

    /// Fresh parameter store: encoder, proprio MLP, both heads, log-std.
    pub fn init_params(&self, seed: u64, init_log_std: f64) -> ParamStore {
        let mut store = ParamStore::new();
        pointnet_init(&mut store, &self.pointnet, seed);
        mlp_init(&mut store, "proprio", &self.proprio_dims(), seed);
        mlp_init(&mut store, "policy", &self.policy_head_dims(), seed);
        mlp_init(&mut store, "value", &self.value_head_dims(), seed);
        store.add("log_std", 1, ACTION_DIM, Init::Const(init_log_std as f32), seed);
        store
    }

    /// Fused feature F1 ⊕ F2 for a batch: clouds [B*N, 4], proprio [B, 35].
    pub fn extract(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        clouds: Tensor,
        proprio: Tensor,
        batch: usize,
        n_points: usize,
    ) -> Result<Tensor, CoreError> {
        let f1 = if self.camera_blind {
            tape.input(batch, self.pointnet.feature_dim, vec![0.0; batch * self.pointnet.feature_dim])
        } else {
            let (_, global) =
                pointnet_forward(tape, store, &self.pointnet, clouds, batch, n_points)?;
            global
        };
        let f2 = mlp_forward(tape, store, "proprio", &self.proprio_dims(), proprio)?;
        tape.concat_cols(f1, f2)
    }

    /// Full forward: (action mean [B,22], clamped log-std [1,22], value [B,1]).
    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        clouds: Tensor,
        proprio: Tensor,
        batch: usize,
        n_points: usize,
    ) -> Result<(Tensor, Tensor, Tensor), CoreError> {
        let feat = self.extract(tape, store, clouds, proprio, batch, n_points)?;
        let mean = mlp_forward(tape, store, "policy", &self.policy_head_dims(), feat)?;
        let value = mlp_forward(tape, store, "value", &self.value_head_dims(), feat)?;
        let raw_ls = tape.param(store, "log_std")?;
        let log_std = tape.clamp(raw_ls, LOG_STD_MIN, LOG_STD_MAX);
        Ok((mean, log_std, value))
    }
}

/// Build batched tape inputs from observations.
pub fn obs_inputs(tape: &mut Tape, obs: &[&Observation]) -> (Tensor, Tensor, usize) {
    let n_points = obs[0].cloud.len();
    let mut cloud_data = Vec::with_capacity(obs.len() * n_points * 4);
    let mut proprio_data = Vec::with_capacity(obs.len() * Proprio::DIM);
    for o in obs {
        debug_assert_eq!(o.cloud.len(), n_points);
        for f in o.cloud.policy_features() {
            cloud_data.extend_from_slice(&f);
        }
        proprio_data.extend_from_slice(&o.proprio.0);
    }
    let clouds = tape.input(obs.len() * n_points, 4, cloud_data);
    let proprio = tape.input(obs.len(), Proprio::DIM, proprio_data);
    (clouds, proprio, n_points)
}

/// Diagonal-Gaussian log density (plain f64; matches the tape op exactly).
pub fn gaussian_log_prob_scalar(mean: &[f64], log_std: &[f64], action: &[f64]) -> f64 {
    const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;
    let mut lp = 0.0;
    for j in 0..mean.len() {
        let ls = log_std[j];
        let z = (action[j] - mean[j]) * math::exp(-ls);
        lp += -0.5 * z * z - ls - HALF_LN_2PI;
    }
    lp
}

/// On-policy storage for one update: T x E slots in (t, e) order.
#[derive(Debug, Clone, Default)]
pub struct RolloutBuffer {
    pub n_envs: usize,
    pub horizon: usize,
    pub n_points: usize,
    pub cloud_feats: Vec<f32>,
    pub proprio: Vec<f32>,
    pub actions: Vec<f64>,
    pub log_probs: Vec<f64>,
    pub rewards: Vec<f64>,
    pub values: Vec<f64>,
    pub dones: Vec<bool>,
    pub stages: Vec<u8>,
    pub successes: Vec<bool>,
    pub bootstrap_values: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
    /// Episode returns for episodes that ended during collection.
    pub finished_returns: Vec<f64>,
    pub finished_successes: Vec<bool>,
}

impl RolloutBuffer {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    fn slot(&self, t: usize, e: usize) -> usize {
        t * self.n_envs + e
    }
}

/// Abstraction over env stepping so a std-side driver can fan the per-env
/// work out across threads. Results must come back in env order.
pub trait EnvDriver {
    fn n_envs(&self) -> usize;
    fn current_obs(&self, i: usize) -> &Observation;
    fn step_all(&mut self, actions: &[Vec<f64>]) -> Result<Vec<EnvStepOut>, CoreError>;
    fn env_mut(&mut self, i: usize) -> &mut Env;
}

impl EnvDriver for VecEnv {
    fn n_envs(&self) -> usize {
        self.len()
    }

    fn current_obs(&self, i: usize) -> &Observation {
        self.envs[i].current_obs()
    }

    fn step_all(&mut self, actions: &[Vec<f64>]) -> Result<Vec<EnvStepOut>, CoreError> {
        VecEnv::step_all(self, actions)
    }

    fn env_mut(&mut self, i: usize) -> &mut Env {
        &mut self.envs[i]
    }
}

/// Collect `cfg.horizon` steps per env. Actions are sampled from the
/// Gaussian policy; envs auto-reset on done. Deterministic per rng state.
pub fn collect_rollouts(
    driver: &mut dyn EnvDriver,
    policy: &Policy,
    store: &ParamStore,
    cfg: &PPOConfig,
    rng: &mut Rng,
) -> Result<RolloutBuffer, CoreError> {
    let n_envs = driver.n_envs();
    let mut buf = RolloutBuffer {
        n_envs,
        horizon: cfg.horizon,
        ..Default::default()
    };

    for _t in 0..cfg.horizon {
        // snapshot observations and run one batched forward
        let obs: Vec<Observation> =
            (0..n_envs).map(|i| driver.current_obs(i).clone()).collect();
        let obs_refs: Vec<&Observation> = obs.iter().collect();
        let mut tape = Tape::new();
        let (clouds, proprio, n_points) = obs_inputs(&mut tape, &obs_refs);
        buf.n_points = n_points;
        let (mean_t, ls_t, value_t) =
            policy.forward(&mut tape, store, clouds, proprio, n_envs, n_points)?;
        let means = tape.value(mean_t).to_vec();
        let log_std = tape.value(ls_t).to_vec();
        let values = tape.value(value_t).to_vec();

        // sample actions and store the transition inputs
        let mut actions: Vec<Vec<f64>> = Vec::with_capacity(n_envs);
        for e in 0..n_envs {
            let mean_e = &means[e * ACTION_DIM..(e + 1) * ACTION_DIM];
            let mut a = vec![0.0; ACTION_DIM];
            for j in 0..ACTION_DIM {
                a[j] = mean_e[j] + math::exp(log_std[j]) * rng.normal();
            }
            let lp = gaussian_log_prob_scalar(mean_e, &log_std, &a);
            for f in obs[e].cloud.policy_features() {
                buf.cloud_feats.extend(f.iter().map(|&x| x as f32));
            }
            buf.proprio.extend(obs[e].proprio.0.iter().map(|&x| x as f32));
            buf.actions.extend_from_slice(&a);
            buf.log_probs.push(lp);
            buf.values.push(values[e]);
            actions.push(a);
        }

        let outs = driver.step_all(&actions)?;
        for out in &outs {
            buf.rewards.push(out.reward);
            buf.dones.push(out.done);
            buf.stages.push(out.info.stage);
            buf.successes.push(out.info.success);
            if out.done {
                buf.finished_successes.push(out.info.success);
            }
        }
    }

    // bootstrap values from the post-rollout observations
    let obs: Vec<Observation> = (0..n_envs).map(|i| driver.current_obs(i).clone()).collect();
    let obs_refs: Vec<&Observation> = obs.iter().collect();
    let mut tape = Tape::new();
    let (clouds, proprio, n_points) = obs_inputs(&mut tape, &obs_refs);
    let (_, _, value_t) = policy.forward(&mut tape, store, clouds, proprio, n_envs, n_points)?;
    buf.bootstrap_values = tape.value(value_t).to_vec();

    // reconstruct finished-episode returns from the reward stream
    let mut acc = vec![0.0; n_envs];
    for t in 0..cfg.horizon {
        for e in 0..n_envs {
            let i = buf.slot(t, e);
            acc[e] += buf.rewards[i];
            if buf.dones[i] {
                buf.finished_returns.push(acc[e]);
                acc[e] = 0.0;
            }
        }
    }

    Ok(buf)
}

/// GAE: delta_t = r_t + gamma V(s_{t+1}) (1 - done) - V(s_t);
/// A_t = delta_t + gamma lambda (1 - done) A_{t+1}; returns = A + V.
pub fn compute_gae(buf: &mut RolloutBuffer, gamma: f64, lambda: f64) {
    let (t_max, n_envs) = (buf.horizon, buf.n_envs);
    buf.advantages = vec![0.0; buf.len()];
    buf.returns = vec![0.0; buf.len()];
    for e in 0..n_envs {
        let mut next_adv = 0.0;
        for t in (0..t_max).rev() {
            let i = buf.slot(t, e);
            let not_done = if buf.dones[i] { 0.0 } else { 1.0 };
            let next_value = if t + 1 < t_max {
                buf.values[buf.slot(t + 1, e)]
            } else {
                buf.bootstrap_values[e]
            };
            let delta = buf.rewards[i] + gamma * next_value * not_done - buf.values[i];
            next_adv = delta + gamma * lambda * not_done * next_adv;
            buf.advantages[i] = next_adv;
            buf.returns[i] = next_adv + buf.values[i];
        }
    }
}

/// Normalize advantages in place to zero mean, unit std.
pub fn normalize_advantages(buf: &mut RolloutBuffer) {
    let n = buf.advantages.len() as f64;
    let mean: f64 = buf.advantages.iter().sum::<f64>() / n;
    let var: f64 = buf.advantages.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
    let std = math::sqrt(var).max(1e-8);
    for a in buf.advantages.iter_mut() {
        *a = (*a - mean) / std;
    }
}

/// Clipped-surrogate loss over one minibatch of buffer slots. Factored out
/// so gradient oracles can difference it directly.
pub fn ppo_loss(
    tape: &mut Tape,
    policy: &Policy,
    store: &ParamStore,
    buf: &RolloutBuffer,
    idx: &[usize],
    cfg: &PPOConfig,
) -> Result<Tensor, CoreError> {
    let mb = idx.len();
    let n_points = buf.n_points;
    let mut cloud_data = Vec::with_capacity(mb * n_points * 4);
    let mut proprio_data = Vec::with_capacity(mb * Proprio::DIM);
    let mut actions = Vec::with_capacity(mb * ACTION_DIM);
    let mut old_lp = Vec::with_capacity(mb);
    let mut adv = Vec::with_capacity(mb);
    let mut ret = Vec::with_capacity(mb);
    for &i in idx {
        cloud_data.extend(
            buf.cloud_feats[i * n_points * 4..(i + 1) * n_points * 4]
                .iter()
                .map(|&x| x as f64),
        );
        proprio_data.extend(
            buf.proprio[i * Proprio::DIM..(i + 1) * Proprio::DIM].iter().map(|&x| x as f64),
        );
        actions.extend_from_slice(&buf.actions[i * ACTION_DIM..(i + 1) * ACTION_DIM]);
        old_lp.push(buf.log_probs[i]);
        adv.push(buf.advantages[i]);
        ret.push(buf.returns[i]);
    }

    let clouds = tape.input(mb * n_points, 4, cloud_data);
    let proprio = tape.input(mb, Proprio::DIM, proprio_data);
    let (mean, log_std, value) = policy.forward(tape, store, clouds, proprio, mb, n_points)?;

    let lp_new = tape.gaussian_log_prob(mean, log_std, &actions)?;
    let lp_old = tape.input(mb, 1, old_lp);
    let diff = tape.sub(lp_new, lp_old)?;
    let ratio = tape.exp(diff);
    let adv_t = tape.input(mb, 1, adv);
    let surr1 = tape.mul(ratio, adv_t)?;
    let clipped = tape.clamp(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps);
    let surr2 = tape.mul(clipped, adv_t)?;
    let surr = tape.min_elem(surr1, surr2)?;
    let mean_surr = tape.mean(surr);
    let policy_loss = tape.neg(mean_surr);

    let ret_t = tape.input(mb, 1, ret);
    let value_loss = tape.mse(value, ret_t)?;

    // diagonal-Gaussian entropy: sum(log_std) + A/2 (1 + ln 2 pi)
    let ls_sum = tape.sum(log_std);
    let entropy =
        tape.add_const(ls_sum, 0.5 * ACTION_DIM as f64 * (1.0 + math::ln(2.0 * math::PI)));

    let v_term = tape.scale(value_loss, cfg.value_coef);
    let e_term = tape.scale(entropy, -cfg.entropy_coef);
    let l = tape.add(policy_loss, v_term)?;
    tape.add(l, e_term)
}

/// Per-update statistics.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub approx_kl: f64,
}

/// Run `cfg.epochs` passes of minibatch updates over a full buffer.
/// Advantages must already be computed; they are normalized here.
pub fn ppo_update(
    buf: &mut RolloutBuffer,
    policy: &Policy,
    store: &mut ParamStore,
    adam: &mut AdamState,
    cfg: &PPOConfig,
    rng: &mut Rng,
) -> Result<UpdateStats, CoreError> {
    normalize_advantages(buf);
    let n = buf.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut stats = UpdateStats::default();
    let mut batches = 0usize;

    for _epoch in 0..cfg.epochs {
        rng.shuffle(&mut order);
        for chunk in order.chunks(cfg.minibatch) {
            let mut tape = Tape::new();
            let loss = ppo_loss(&mut tape, policy, store, buf, chunk, cfg)?;
            let loss_v = tape.scalar(loss);
            if !loss_v.is_finite() {
                return Err(CoreError::NonFinite("ppo loss"));
            }
            tape.backward(loss, store)?;
            adam.apply(store);

            // stats from plain recomputation on this minibatch
            let (pl, vl, ent, cf, kl) = minibatch_stats(policy, store, buf, chunk, cfg)?;
            stats.policy_loss += pl;
            stats.value_loss += vl;
            stats.entropy += ent;
            stats.clip_fraction += cf;
            stats.approx_kl += kl;
            batches += 1;
        }
    }
    let b = batches.max(1) as f64;
    stats.policy_loss /= b;
    stats.value_loss /= b;
    stats.entropy /= b;
    stats.clip_fraction /= b;
    stats.approx_kl /= b;
    Ok(stats)
}

fn minibatch_stats(
    policy: &Policy,
    store: &ParamStore,
    buf: &RolloutBuffer,
    idx: &[usize],
    cfg: &PPOConfig,
) -> Result<(f64, f64, f64, f64, f64), CoreError> {
    let mb = idx.len();
    let n_points = buf.n_points;
    let mut cloud_data = Vec::with_capacity(mb * n_points * 4);
    let mut proprio_data = Vec::with_capacity(mb * Proprio::DIM);
    for &i in idx {
        cloud_data.extend(
            buf.cloud_feats[i * n_points * 4..(i + 1) * n_points * 4]
                .iter()
                .map(|&x| x as f64),
        );
        proprio_data.extend(
            buf.proprio[i * Proprio::DIM..(i + 1) * Proprio::DIM].iter().map(|&x| x as f64),
        );
    }
    let mut tape = Tape::new();
    let clouds = tape.input(mb * n_points, 4, cloud_data);
    let proprio = tape.input(mb, Proprio::DIM, proprio_data);
    let (mean_t, ls_t, value_t) = policy.forward(&mut tape, store, clouds, proprio, mb, n_points)?;
    let means = tape.value(mean_t);
    let log_std = tape.value(ls_t);
    let values = tape.value(value_t);

    let mut policy_loss = 0.0;
    let mut value_loss = 0.0;
    let mut clip_frac = 0.0;
    let mut kl = 0.0;
    for (row, &i) in idx.iter().enumerate() {
        let mean_e = &means[row * ACTION_DIM..(row + 1) * ACTION_DIM];
        let a = &buf.actions[i * ACTION_DIM..(i + 1) * ACTION_DIM];
        let lp = gaussian_log_prob_scalar(mean_e, log_std, a);
        let ratio = math::exp(lp - buf.log_probs[i]);
        let advantage = buf.advantages[i];
        let clipped = ratio.clamp(1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps);
        policy_loss -= (ratio * advantage).min(clipped * advantage);
        if (ratio - 1.0).abs() > cfg.clip_eps {
            clip_frac += 1.0;
        }
        kl += buf.log_probs[i] - lp;
        let dv = values[row] - buf.returns[i];
        value_loss += dv * dv;
    }
    let entropy: f64 = log_std.iter().sum::<f64>()
        + 0.5 * ACTION_DIM as f64 * (1.0 + math::ln(2.0 * math::PI));
    Ok((
        policy_loss / mb as f64,
        value_loss / mb as f64,
        entropy,
        clip_frac / mb as f64,
        kl / mb as f64,
    ))
}

/// One training-log row (one rollout + update round).
#[derive(Debug, Clone, PartialEq)]
pub struct TrainLogRow {
    pub round: u64,
    pub env_steps: u64,
    /// Mean return over episodes finished this round.
    pub mean_return: f64,
    /// Success fraction over episodes finished this round.
    pub success_rate: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
}

/// Round-driven PPO trainer: one `round()` call collects a full rollout and
/// runs the update. All mutable training state lives here, so a driver can
/// snapshot and restore it for exact resume.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub policy: Policy,
    pub cfg: PPOConfig,
    pub store: ParamStore,
    pub adam: AdamState,
    pub rng: Rng,
    pub round: u64,
    pub env_steps: u64,
}

impl Trainer {
    pub fn new(policy: Policy, cfg: PPOConfig, seed: u64) -> Trainer {
        let store = policy.init_params(seed, cfg.init_log_std);
        let adam = AdamState::new(&store, cfg.lr);
        Trainer {
            policy,
            cfg,
            store,
            adam,
            rng: Rng::seed_from(stream_seed_idx(seed, "trainer", 0)),
            round: 0,
            env_steps: 0,
        }
    }

    /// Initialize the encoder from a pre-training checkpoint.
    pub fn load_encoder(&mut self, bytes: &[u8]) -> Result<usize, CoreError> {
        self.store.load_prefix(bytes, crate::nn::ENCODER_PREFIX)
    }

    /// One rollout + update round.
    pub fn run_round(&mut self, driver: &mut dyn EnvDriver) -> Result<TrainLogRow, CoreError> {
        let mut buf =
            collect_rollouts(driver, &self.policy, &self.store, &self.cfg, &mut self.rng)?;
        compute_gae(&mut buf, self.cfg.gamma, self.cfg.gae_lambda);
        let stats = ppo_update(
            &mut buf,
            &self.policy,
            &mut self.store,
            &mut self.adam,
            &self.cfg,
            &mut self.rng,
        )?;
        self.round += 1;
        self.env_steps += (self.cfg.horizon * driver.n_envs()) as u64;
        let n_fin = buf.finished_returns.len();
        let mean_return = if n_fin > 0 {
            buf.finished_returns.iter().sum::<f64>() / n_fin as f64
        } else {
            0.0
        };
        let success_rate = if n_fin > 0 {
            buf.finished_successes.iter().filter(|&&s| s).count() as f64 / n_fin as f64
        } else {
            0.0
        };
        Ok(TrainLogRow {
            round: self.round,
            env_steps: self.env_steps,
            mean_return,
            success_rate,
            policy_loss: stats.policy_loss,
            value_loss: stats.value_loss,
            entropy: stats.entropy,
            clip_fraction: stats.clip_fraction,
        })
    }
}

/// Evaluation statistics over a batch of episodes.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalStats {
    pub episodes: usize,
    pub success_rate: f64,
    pub mean_return: f64,
    /// Mean first-success step over successful episodes.
    pub mean_first_success_step: Option<f64>,
}

/// Run `n_episodes` on one env (the caller swaps object instances for
/// round-robin protocols). Deterministic mean actions unless `stochastic`.
pub fn evaluate_policy(
    env: &mut Env,
    policy: &Policy,
    store: &ParamStore,
    n_episodes: usize,
    stochastic: bool,
    seed: u64,
) -> Result<EvalStats, CoreError> {
    if n_episodes == 0 {
        return Err(CoreError::InvalidConfig("n_episodes must be > 0".into()));
    }
    let horizon = env.cfg.horizon;
    let mut rng = Rng::seed_from(stream_seed_idx(seed, "eval", 0));
    let mut stats = EvalStats::default();
    let mut success_steps = 0.0;
    let mut n_success = 0usize;
    for ep in 0..n_episodes {
        env.reset_seeded(stream_seed_idx(seed, "eval-ep", ep as u64));
        let mut ep_return = 0.0;
        let mut success = false;
        let mut first_success = None;
        for _ in 0..horizon {
            let obs = [env.current_obs()];
            let mut tape = Tape::new();
            let (clouds, proprio, n_points) = obs_inputs(&mut tape, &obs);
            let (mean_t, ls_t, _) = policy.forward(&mut tape, store, clouds, proprio, 1, n_points)?;
            let mean = tape.value(mean_t).to_vec();
            let action: Vec<f64> = if stochastic {
                let ls = tape.value(ls_t).to_vec();
                (0..ACTION_DIM)
                    .map(|j| mean[j] + math::exp(ls[j]) * rng.normal())
                    .collect()
            } else {
                mean
            };
            let out = env.step(&action)?;
            ep_return += out.reward;
            if out.info.success && !success {
                success = true;
                first_success = out.info.first_success_step;
            }
            if out.done {
                break;
            }
        }
        stats.mean_return += ep_return;
        if success {
            n_success += 1;
            if let Some(s) = first_success {
                success_steps += s as f64;
            }
        }
    }
    stats.episodes = n_episodes;
    stats.success_rate = n_success as f64 / n_episodes as f64;
    stats.mean_return /= n_episodes as f64;
    stats.mean_first_success_step =
        if n_success > 0 { Some(success_steps / n_success as f64) } else { None };
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assets::{generate_object, Category, CategoryTemplate, Split};
    use crate::env::EnvConfig;
    use crate::nn::PointNetSize;
    use crate::sensing::SensingConfig;
    use crate::sim::RobotModel;
    use crate::tasks::TaskSpec;
    use alloc::sync::Arc;

    fn tiny_policy() -> Policy {
        Policy::new(PointNetSpec {
            size: PointNetSize::Small,
            in_dim: 4,
            hidden_width: 8,
            feature_dim: 16,
        })
    }

    fn tiny_vec_env(n_envs: usize, horizon: usize) -> VecEnv {
        let mut cfg = EnvConfig::new(TaskSpec::for_category(Category::Laptop).unwrap());
        cfg.horizon = horizon;
        cfg.sensing = SensingConfig {
            width: 24,
            height: 24,
            n_observed: 32,
            n_imagined: 8,
            ..Default::default()
        };
        let model = Arc::new(RobotModel::standard(&cfg.sim));
        let template = CategoryTemplate::for_category(Category::Laptop);
        let envs = (0..n_envs)
            .map(|i| {
                let instance = generate_object(&template, i as u64, Split::Seen);
                Env::new(cfg.clone(), model.clone(), instance, i, 77)
            })
            .collect();
        VecEnv::new(envs)
    }

    #[test]
    fn feature_dimension_contract() {
        let policy = Policy::new(PointNetSpec::default());
        assert_eq!(policy.feature_dim(), 256 + 128);
    }

    #[test]
    fn extractor_permutation_invariant_and_proprio_separated() {
        let policy = tiny_policy();
        let store = policy.init_params(3, -0.5);
        let mut rng = Rng::seed_from(5);
        let n = 20;
        let cloud: Vec<f64> = (0..n * 4).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let proprio: Vec<f64> = (0..35).map(|_| rng.uniform(-1.0, 1.0)).collect();

        let feat = |cloud_data: &[f64], proprio_data: &[f64]| -> Vec<f64> {
            let mut tape = Tape::new();
            let c = tape.input(n, 4, cloud_data.to_vec());
            let p = tape.input(1, 35, proprio_data.to_vec());
            let f = policy.extract(&mut tape, &store, c, p, 1, n).unwrap();
            tape.value(f).to_vec()
        };

        let base = feat(&cloud, &proprio);
        // permute the cloud
        let mut idx: Vec<usize> = (0..n).collect();
        rng.shuffle(&mut idx);
        let mut perm = Vec::with_capacity(n * 4);
        for &i in &idx {
            perm.extend_from_slice(&cloud[i * 4..(i + 1) * 4]);
        }
        assert_eq!(feat(&perm, &proprio), base);

        // zeroing proprio changes F2 but leaves F1 alone
        let zeroed = feat(&cloud, &vec![0.0; 35]);
        let d = policy.pointnet.feature_dim;
        assert_eq!(&zeroed[..d], &base[..d]);
        assert_ne!(&zeroed[d..], &base[d..]);
    }

    #[test]
    fn rollout_buffer_contracts() {
        let mut venv = tiny_vec_env(2, 5);
        let policy = tiny_policy();
        let store = policy.init_params(1, -0.5);
        let cfg = PPOConfig { horizon: 6, n_envs: 2, ..Default::default() };
        let mut rng = Rng::seed_from(9);
        let buf = collect_rollouts(&mut venv, &policy, &store, &cfg, &mut rng).unwrap();
        assert_eq!(buf.len(), 6 * 2);
        assert_eq!(buf.bootstrap_values.len(), 2);

        // stored log-probs match recomputation from (mean, log_std, action)
        for i in 0..buf.len() {
            let n_points = buf.n_points;
            let mut tape = Tape::new();
            let clouds = tape.input_f32(n_points, 4, &buf.cloud_feats[i * n_points * 4..(i + 1) * n_points * 4]);
            let proprio = tape.input_f32(1, 35, &buf.proprio[i * 35..(i + 1) * 35]);
            let (mean_t, ls_t, _) = policy.forward(&mut tape, &store, clouds, proprio, 1, n_points).unwrap();
            let lp = gaussian_log_prob_scalar(
                tape.value(mean_t),
                tape.value(ls_t),
                &buf.actions[i * ACTION_DIM..(i + 1) * ACTION_DIM],
            );
            assert!((lp - buf.log_probs[i]).abs() < 1e-6, "{lp} vs {}", buf.log_probs[i]);
        }
    }

    #[test]
    fn rollouts_deterministic_per_seed() {
        let run = || {
            let mut venv = tiny_vec_env(2, 4);
            let policy = tiny_policy();
            let store = policy.init_params(1, -0.5);
            let cfg = PPOConfig { horizon: 4, n_envs: 2, ..Default::default() };
            let mut rng = Rng::seed_from(11);
            let buf = collect_rollouts(&mut venv, &policy, &store, &cfg, &mut rng).unwrap();
            (buf.actions.clone(), buf.rewards.clone(), buf.log_probs.clone())
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn gae_hand_rolled_recursion() {
        let mut buf = RolloutBuffer {
            n_envs: 1,
            horizon: 3,
            rewards: vec![1.0, 1.0, 1.0],
            values: vec![0.0, 0.0, 0.0],
            dones: vec![false, false, true],
            bootstrap_values: vec![0.0],
            ..Default::default()
        };
        compute_gae(&mut buf, 1.0, 1.0);
        assert_eq!(buf.advantages, vec![3.0, 2.0, 1.0]);
        assert_eq!(buf.returns, vec![3.0, 2.0, 1.0]);
    }

    #[test]
    fn gae_lambda_zero_is_td_error() {
        let mut buf = RolloutBuffer {
            n_envs: 1,
            horizon: 3,
            rewards: vec![0.5, -0.2, 0.9],
            values: vec![0.1, 0.4, -0.3],
            dones: vec![false, false, false],
            bootstrap_values: vec![0.2],
            ..Default::default()
        };
        let gamma = 0.9;
        compute_gae(&mut buf, gamma, 0.0);
        for t in 0..3 {
            let next_v = if t + 1 < 3 { buf.values[t + 1] } else { 0.2 };
            let delta = buf.rewards[t] + gamma * next_v - buf.values[t];
            assert!((buf.advantages[t] - delta).abs() < 1e-12);
        }
    }

    #[test]
    fn gae_done_masks_the_future() {
        let mut buf = RolloutBuffer {
            n_envs: 1,
            horizon: 4,
            rewards: vec![1.0, 2.0, 3.0, 4.0],
            values: vec![0.0; 4],
            dones: vec![false, true, false, false],
            bootstrap_values: vec![10.0],
            ..Default::default()
        };
        compute_gae(&mut buf, 0.99, 0.95);
        // A_1 must not see rewards at t >= 2
        let a1_isolated = buf.rewards[1]; // delta_1 with V=0, done
        assert!((buf.advantages[1] - a1_isolated).abs() < 1e-12);
        // changing later rewards leaves A_0, A_1 alone
        let (a0, a1) = (buf.advantages[0], buf.advantages[1]);
        buf.rewards[3] = -50.0;
        compute_gae(&mut buf, 0.99, 0.95);
        assert_eq!(buf.advantages[0], a0);
        assert_eq!(buf.advantages[1], a1);
    }

    #[test]
    fn clip_formula_identities() {
        // ratio 1 -> unclipped advantage; ratio 2, eps 0.2, A=1 -> 1.2
        let eps = 0.2;
        let surr = |ratio: f64, a: f64| -> f64 {
            (ratio * a).min(ratio.clamp(1.0 - eps, 1.0 + eps) * a)
        };
        assert_eq!(surr(1.0, 0.7), 0.7);
        assert_eq!(surr(2.0, 1.0), 1.2);
    }

    #[test]
    fn advantage_normalization_bounds() {
        let mut buf = RolloutBuffer {
            n_envs: 1,
            horizon: 64,
            ..Default::default()
        };
        let mut rng = Rng::seed_from(13);
        buf.advantages = (0..64).map(|_| rng.uniform(-3.0, 5.0)).collect();
        normalize_advantages(&mut buf);
        let n = buf.advantages.len() as f64;
        let mean: f64 = buf.advantages.iter().sum::<f64>() / n;
        let var: f64 = buf.advantages.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
        assert!(mean.abs() < 1e-6);
        assert!((var.sqrt() - 1.0).abs() < 1e-6);
    }

    /// 3-step toy buffer for gradient checks.
    fn toy_buffer(policy: &Policy, store: &ParamStore) -> RolloutBuffer {
        let mut venv = tiny_vec_env(1, 3);
        let cfg = PPOConfig { horizon: 3, n_envs: 1, ..Default::default() };
        let mut rng = Rng::seed_from(21);
        let mut buf = collect_rollouts(&mut venv, policy, store, &cfg, &mut rng).unwrap();
        compute_gae(&mut buf, cfg.gamma, cfg.gae_lambda);
        normalize_advantages(&mut buf);
        buf
    }

    #[test]
    fn ppo_gradient_matches_finite_differences() {
        let policy = tiny_policy();
        let mut store = policy.init_params(5, -0.5);
        let buf = toy_buffer(&policy, &store);
        let cfg = PPOConfig { clip_eps: 0.2, value_coef: 0.5, entropy_coef: 0.01, ..Default::default() };
        let idx: Vec<usize> = (0..buf.len()).collect();

        store.zero_grads();
        let mut tape = Tape::new();
        let loss = ppo_loss(&mut tape, &policy, &store, &buf, &idx, &cfg).unwrap();
        tape.backward(loss, &mut store).unwrap();
        let analytic: Vec<Vec<f64>> = store.iter().map(|e| e.grad.clone()).collect();

        let h = 1e-4f32;
        let mut checked = 0usize;
        for p_idx in 0..store.len() {
            let n_vals = store.entry(p_idx).len();
            // spot-check a handful of coordinates per parameter
            for k in (0..n_vals).step_by((n_vals / 4).max(1)) {
                let orig = store.entry(p_idx).data[k];
                store.entry_mut(p_idx).data[k] = orig + h;
                let mut t1 = Tape::new();
                let l1 = ppo_loss(&mut t1, &policy, &store, &buf, &idx, &cfg).unwrap();
                let f_hi = t1.scalar(l1);
                store.entry_mut(p_idx).data[k] = orig - h;
                let mut t2 = Tape::new();
                let l2 = ppo_loss(&mut t2, &policy, &store, &buf, &idx, &cfg).unwrap();
                let f_lo = t2.scalar(l2);
                store.entry_mut(p_idx).data[k] = orig;
                let fd = (f_hi - f_lo) / (((orig + h) as f64) - ((orig - h) as f64));
                let an = analytic[p_idx][k];
                let denom = fd.abs().max(an.abs()).max(1e-5);
                assert!(
                    ((fd - an).abs() / denom) < 1e-3,
                    "{}[{k}]: fd {fd} vs {an}",
                    store.entry(p_idx).name
                );
                checked += 1;
            }
        }
        assert!(checked > 20);
    }

    #[test]
    fn huge_clip_equals_vanilla_surrogate_gradient() {
        let policy = tiny_policy();
        let mut store = policy.init_params(6, -0.5);
        let buf = toy_buffer(&policy, &store);
        let idx: Vec<usize> = (0..buf.len()).collect();
        let cfg_inf = PPOConfig {
            clip_eps: 1e9,
            value_coef: 0.0,
            entropy_coef: 0.0,
            ..Default::default()
        };

        store.zero_grads();
        let mut tape = Tape::new();
        let loss = ppo_loss(&mut tape, &policy, &store, &buf, &idx, &cfg_inf).unwrap();
        tape.backward(loss, &mut store).unwrap();
        let clipped_grads: Vec<Vec<f64>> = store.iter().map(|e| e.grad.clone()).collect();

        // vanilla surrogate: -mean(ratio * A)
        store.zero_grads();
        let mut tape2 = Tape::new();
        let mb = idx.len();
        let n_points = buf.n_points;
        let mut cloud_data = Vec::new();
        let mut proprio_data = Vec::new();
        let mut actions = Vec::new();
        let mut old_lp = Vec::new();
        let mut adv = Vec::new();
        for &i in &idx {
            cloud_data.extend(
                buf.cloud_feats[i * n_points * 4..(i + 1) * n_points * 4]
                    .iter()
                    .map(|&x| x as f64),
            );
            proprio_data.extend(buf.proprio[i * 35..(i + 1) * 35].iter().map(|&x| x as f64));
            actions.extend_from_slice(&buf.actions[i * ACTION_DIM..(i + 1) * ACTION_DIM]);
            old_lp.push(buf.log_probs[i]);
            adv.push(buf.advantages[i]);
        }
        let clouds = tape2.input(mb * n_points, 4, cloud_data);
        let proprio = tape2.input(mb, 35, proprio_data);
        let (mean, ls, _) = policy.forward(&mut tape2, &store, clouds, proprio, mb, n_points).unwrap();
        let lp_new = tape2.gaussian_log_prob(mean, ls, &actions).unwrap();
        let lp_old = tape2.input(mb, 1, old_lp);
        let diff = tape2.sub(lp_new, lp_old).unwrap();
        let ratio = tape2.exp(diff);
        let adv_t = tape2.input(mb, 1, adv);
        let surr = tape2.mul(ratio, adv_t).unwrap();
        let m = tape2.mean(surr);
        let vanilla = tape2.neg(m);
        tape2.backward(vanilla, &mut store).unwrap();

        for (e, cg) in store.iter().zip(&clipped_grads) {
            for (a, b) in e.grad.iter().zip(cg) {
                assert!((a - b).abs() < 1e-12, "{}: {a} vs {b}", e.name);
            }
        }
    }

    #[test]
    fn value_loss_reaches_extractor_gradients() {
        let policy = tiny_policy();
        let mut store = policy.init_params(7, -0.5);
        let buf = toy_buffer(&policy, &store);
        let idx: Vec<usize> = (0..buf.len()).collect();
        // value-only objective
        let cfg = PPOConfig { value_coef: 1.0, entropy_coef: 0.0, ..Default::default() };
        store.zero_grads();
        let mut tape = Tape::new();
        let mb = idx.len();
        let n_points = buf.n_points;
        let mut cloud_data = Vec::new();
        let mut proprio_data = Vec::new();
        let mut ret = Vec::new();
        for &i in &idx {
            cloud_data.extend(
                buf.cloud_feats[i * n_points * 4..(i + 1) * n_points * 4]
                    .iter()
                    .map(|&x| x as f64),
            );
            proprio_data.extend(buf.proprio[i * 35..(i + 1) * 35].iter().map(|&x| x as f64));
            ret.push(buf.returns[i]);
        }
        let clouds = tape.input(mb * n_points, 4, cloud_data);
        let proprio = tape.input(mb, 35, proprio_data);
        let (_, _, value) = policy.forward(&mut tape, &store, clouds, proprio, mb, n_points).unwrap();
        let ret_t = tape.input(mb, 1, ret);
        let vl = tape.mse(value, ret_t).unwrap();
        let loss = tape.scale(vl, cfg.value_coef);
        tape.backward(loss, &mut store).unwrap();
        let pn_grad: f64 = store
            .iter()
            .filter(|e| e.name.starts_with("pointnet."))
            .map(|e| e.grad.iter().map(|g| g.abs()).sum::<f64>())
            .sum();
        assert!(pn_grad > 0.0, "value loss must reach the shared extractor");
    }

    #[test]
    fn update_runs_and_evaluation_bounded() {
        let mut venv = tiny_vec_env(2, 4);
        let policy = tiny_policy();
        let mut store = policy.init_params(8, -0.5);
        let mut adam = AdamState::new(&store, 3e-4);
        let cfg = PPOConfig {
            horizon: 4,
            n_envs: 2,
            minibatch: 4,
            epochs: 2,
            ..Default::default()
        };
        let mut rng = Rng::seed_from(31);
        let mut buf = collect_rollouts(&mut venv, &policy, &store, &cfg, &mut rng).unwrap();
        compute_gae(&mut buf, cfg.gamma, cfg.gae_lambda);
        let stats = ppo_update(&mut buf, &policy, &mut store, &mut adam, &cfg, &mut rng).unwrap();
        assert!(stats.value_loss >= 0.0);
        assert!(stats.clip_fraction >= 0.0 && stats.clip_fraction <= 1.0);

        let stats = evaluate_policy(venv.env_mut(0), &policy, &store, 2, false, 5).unwrap();
        assert!(stats.success_rate >= 0.0 && stats.success_rate <= 1.0);
        assert!(evaluate_policy(venv.env_mut(0), &policy, &store, 0, false, 5).is_err());
    }
}
