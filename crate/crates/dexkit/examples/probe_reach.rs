//! Convergence probe for the reach-only RL sanity config.
use std::sync::Arc;
use std::time::Instant;

use dexkit::parallel::ParallelVecEnv;
use dexkit_core::assets::{generate_split, Category, CategoryTemplate, Split};
use dexkit_core::env::{Env, EnvConfig};
use dexkit_core::nn::{PointNetSize, PointNetSpec};
use dexkit_core::rl::{evaluate_policy, EnvDriver, PPOConfig, Policy, Trainer};
use dexkit_core::sensing::SensingConfig;
use dexkit_core::sim::RobotModel;
use dexkit_core::tasks::{RewardMode, TaskSpec};

fn main() {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let mut task = TaskSpec::for_category(Category::Laptop).unwrap();
    task.reward_mode = RewardMode::ReachOnly;
    let mut env_cfg = EnvConfig::new(task);
    env_cfg.horizon = 100;
    env_cfg.sensing = SensingConfig {
        width: 32,
        height: 32,
        n_observed: 64,
        n_imagined: 16,
        ..Default::default()
    };
    let ppo = PPOConfig {
        horizon: 100,
        n_envs: 8,
        minibatch: 200,
        epochs: 4,
        total_steps: 200_000,
        ..Default::default()
    };
    let pointnet = PointNetSpec {
        size: PointNetSize::Small,
        in_dim: 4,
        hidden_width: 32,
        feature_dim: 64,
    };
    let template = CategoryTemplate::for_category(Category::Laptop);
    let manifest = generate_split(&template, 17, 11, 6, 0).unwrap();
    let entries: Vec<_> = manifest.entries(Split::Seen).collect();
    let model = Arc::new(RobotModel::standard(&env_cfg.sim));
    let envs: Vec<Env> = (0..ppo.n_envs)
        .map(|i| {
            let inst = manifest.build_object(entries[i % entries.len()], &template);
            Env::new(env_cfg.clone(), model.clone(), inst, i, seed)
        })
        .collect();
    let mut driver = ParallelVecEnv::new(envs, 2);
    let policy = Policy::new(pointnet);
    let mut trainer = Trainer::new(policy.clone(), ppo.clone(), seed);

    let t0 = Instant::now();
    let mut eval_env = {
        let inst = manifest.build_object(entries[0], &template);
        Env::new(env_cfg.clone(), model.clone(), inst, 99, seed)
    };
    loop {
        let row = trainer.run_round(&mut driver).unwrap();
        if trainer.round % 5 == 0 || row.success_rate > 0.5 {
            let stats =
                evaluate_policy(&mut eval_env, &policy, &trainer.store, 20, false, 1234).unwrap();
            println!(
                "round {} steps {} train_succ {:.2} eval_succ {:.2} ret {:.2} [{:.1}s]",
                trainer.round,
                trainer.env_steps,
                row.success_rate,
                stats.success_rate,
                row.mean_return,
                t0.elapsed().as_secs_f64()
            );
            if stats.success_rate >= 0.8 {
                println!("CONVERGED at {} steps in {:.1}s", trainer.env_steps, t0.elapsed().as_secs_f64());
                break;
            }
        }
        if trainer.env_steps >= ppo.total_steps {
            println!("FAILED to converge in {} steps", trainer.env_steps);
            break;
        }
    }
}
