//! Full-task training probe: step rate and staged-reward learnability.
use std::sync::Arc;
use std::time::Instant;

use dexkit::parallel::ParallelVecEnv;
use dexkit_core::assets::{generate_split, Category, CategoryTemplate, Split};
use dexkit_core::env::{Env, EnvConfig};
use dexkit_core::nn::{PointNetSize, PointNetSpec};
use dexkit_core::rl::{evaluate_policy, PPOConfig, Policy, Trainer};
use dexkit_core::sensing::SensingConfig;
use dexkit_core::sim::RobotModel;
use dexkit_core::tasks::TaskSpec;

fn main() {
    let cat = Category::Laptop;
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let steps: u64 = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(40_000);
    let task = TaskSpec::for_category(cat).unwrap();
    let mut env_cfg = EnvConfig::new(task);
    env_cfg.horizon = 120;
    env_cfg.sensing = SensingConfig {
        width: 48,
        height: 48,
        n_observed: 128,
        n_imagined: 32,
        ..Default::default()
    };
    let ppo = PPOConfig {
        horizon: 120,
        n_envs: 8,
        minibatch: 240,
        epochs: 4,
        total_steps: steps,
        ..Default::default()
    };
    let pointnet = PointNetSpec {
        size: PointNetSize::Small,
        in_dim: 4,
        hidden_width: 32,
        feature_dim: 64,
    };
    let template = CategoryTemplate::for_category(cat);
    let (a, s, u) = cat.default_counts();
    let manifest = generate_split(&template, a, s, u, 0).unwrap();
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
    while trainer.env_steps < ppo.total_steps {
        let row = trainer.run_round(&mut driver).unwrap();
        if trainer.round % 5 == 0 {
            println!(
                "round {} steps {} train_succ {:.2} ret {:.2} [{:.0}s]",
                trainer.round, trainer.env_steps, row.success_rate, row.mean_return,
                t0.elapsed().as_secs_f64()
            );
        }
    }
    // seen + unseen eval
    let eval = |split: Split, trainer: &Trainer| -> f64 {
        let entries: Vec<_> = manifest.entries(split).collect();
        let mut total = 0.0;
        let n_eps = 12;
        let mut env = Env::new(
            env_cfg.clone(),
            model.clone(),
            manifest.build_object(entries[0], &template),
            50,
            seed,
        );
        for ep in 0..n_eps {
            let inst = manifest.build_object(entries[ep % entries.len()], &template);
            env.set_instance(inst);
            let st = evaluate_policy(&mut env, &policy, &trainer.store, 1, false, 7000 + ep as u64)
                .unwrap();
            total += st.success_rate;
        }
        total / n_eps as f64
    };
    println!(
        "FINAL steps {} seen {:.2} unseen {:.2} wall {:.0}s",
        trainer.env_steps,
        eval(Split::Seen, &trainer),
        eval(Split::Unseen, &trainer),
        t0.elapsed().as_secs_f64()
    );
}
