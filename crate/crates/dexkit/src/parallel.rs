//! Thread-fanned env stepping. Envs are independent, so chunks step on
//! scoped threads and results return in slot order — bit-identical to the
//! serial driver regardless of scheduling.

use dexkit_core::env::{Env, EnvStepOut, VecEnv};
use dexkit_core::rl::EnvDriver;
use dexkit_core::sensing::Observation;
use dexkit_core::CoreError;

pub struct ParallelVecEnv {
    pub inner: VecEnv,
    pub threads: usize,
}

impl ParallelVecEnv {
    pub fn new(envs: Vec<Env>, threads: usize) -> ParallelVecEnv {
        ParallelVecEnv { inner: VecEnv::new(envs), threads: threads.max(1) }
    }
}

impl EnvDriver for ParallelVecEnv {
    fn n_envs(&self) -> usize {
        self.inner.len()
    }

    fn current_obs(&self, i: usize) -> &Observation {
        self.inner.envs[i].current_obs()
    }

    fn step_all(&mut self, actions: &[Vec<f64>]) -> Result<Vec<EnvStepOut>, CoreError> {
        if self.threads <= 1 || self.inner.len() <= 1 {
            return self.inner.step_all(actions);
        }
        let chunk = self.inner.len().div_ceil(self.threads);
        let env_chunks = self.inner.envs.chunks_mut(chunk);
        let act_chunks = actions.chunks(chunk);
        let results: Vec<Result<Vec<EnvStepOut>, CoreError>> = std::thread::scope(|scope| {
            let handles: Vec<_> = env_chunks
                .zip(act_chunks)
                .map(|(envs, acts)| {
                    scope.spawn(move || {
                        envs.iter_mut()
                            .zip(acts)
                            .map(|(env, a)| env.step(a))
                            .collect::<Result<Vec<_>, _>>()
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("env worker panicked")).collect()
        });
        let mut out = Vec::with_capacity(actions.len());
        for r in results {
            out.extend(r?);
        }
        Ok(out)
    }

    fn env_mut(&mut self, i: usize) -> &mut Env {
        &mut self.inner.envs[i]
    }
}
