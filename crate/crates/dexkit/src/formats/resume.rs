//! Training-resume snapshots (`DXRS`): parameters, optimizer moments, RNG
//! state, log position, and full per-env states — everything required to
//! continue a run bit-exactly.

use std::fs;
use std::path::Path;

use dexkit_core::env::EnvSnapshot;
use dexkit_core::geometry::{Pose, UnitQuat, Vec3};
use dexkit_core::sim::{RobotState, SimState};

use crate::{DexkitError, Result};

pub const MAGIC: &[u8; 4] = b"DXRS";
pub const VERSION: u32 = 1;

/// Everything needed to resume a training run exactly where it stopped.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSnapshot {
    pub config_hash: u64,
    pub round: u64,
    pub env_steps: u64,
    pub rng_state: [u64; 4],
    /// Data rows already written to the training log.
    pub rows_written: u64,
    pub params: Vec<u8>,
    pub adam: Vec<u8>,
    pub envs: Vec<EnvSnapshot>,
}

struct W(Vec<u8>);

impl W {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn i64(&mut self, v: i64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn vec3(&mut self, v: Vec3) {
        self.f64(v.x);
        self.f64(v.y);
        self.f64(v.z);
    }
    fn pose(&mut self, p: &Pose) {
        self.f64(p.rotation.w);
        self.f64(p.rotation.x);
        self.f64(p.rotation.y);
        self.f64(p.rotation.z);
        self.vec3(p.translation);
    }
    fn bytes(&mut self, b: &[u8]) {
        self.u64(b.len() as u64);
        self.0.extend_from_slice(b);
    }
}

struct R<'a> {
    b: &'a [u8],
    pos: usize,
}

impl<'a> R<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.b.len() {
            return Err(DexkitError::runtime("truncated resume snapshot"));
        }
        let s = &self.b[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn i64(&mut self) -> Result<i64> {
        Ok(i64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn vec3(&mut self) -> Result<Vec3> {
        Ok(Vec3::new(self.f64()?, self.f64()?, self.f64()?))
    }
    fn pose(&mut self) -> Result<Pose> {
        let rotation = UnitQuat { w: self.f64()?, x: self.f64()?, y: self.f64()?, z: self.f64()? };
        let translation = self.vec3()?;
        Ok(Pose { rotation, translation })
    }
    fn bytes(&mut self) -> Result<Vec<u8>> {
        let n = self.u64()? as usize;
        Ok(self.take(n)?.to_vec())
    }
}

pub fn encode(snap: &TrainSnapshot) -> Vec<u8> {
    let mut w = W(Vec::new());
    w.0.extend_from_slice(MAGIC);
    w.u32(VERSION);
    w.u64(snap.config_hash);
    w.u64(snap.round);
    w.u64(snap.env_steps);
    for s in snap.rng_state {
        w.u64(s);
    }
    w.u64(snap.rows_written);
    w.bytes(&snap.params);
    w.bytes(&snap.adam);
    w.u32(snap.envs.len() as u32);
    for e in &snap.envs {
        w.u32(e.object_id);
        w.u64(e.episode_seed);
        w.u64(e.step_in_episode);
        w.u64(e.episode_counter);
        w.u8(e.stage);
        w.f64(e.prev_progress);
        w.i64(e.first_success.map(|s| s as i64).unwrap_or(-1));
        w.f64(e.episode_return);
        let sim = &e.sim;
        for q in sim.robot.arm_q {
            w.f64(q);
        }
        for q in sim.robot.hand_q {
            w.f64(q);
        }
        for q in sim.robot.hand_q_target {
            w.f64(q);
        }
        w.vec3(sim.robot.palm_lin_vel);
        w.vec3(sim.robot.palm_ang_vel);
        w.pose(&sim.object_root);
        w.u32(sim.object_q.len() as u32);
        for q in &sim.object_q {
            w.f64(*q);
        }
        w.f64(sim.lift_height);
        w.u64(sim.step_count);
        w.f64(sim.elapsed);
    }
    w.0
}

pub fn decode(bytes: &[u8]) -> Result<TrainSnapshot> {
    let mut r = R { b: bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(DexkitError::runtime("bad resume magic"));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(DexkitError::runtime(format!("unsupported resume version {version}")));
    }
    let config_hash = r.u64()?;
    let round = r.u64()?;
    let env_steps = r.u64()?;
    let rng_state = [r.u64()?, r.u64()?, r.u64()?, r.u64()?];
    let rows_written = r.u64()?;
    let params = r.bytes()?;
    let adam = r.bytes()?;
    let n_envs = r.u32()? as usize;
    let mut envs = Vec::with_capacity(n_envs);
    for _ in 0..n_envs {
        let object_id = r.u32()?;
        let episode_seed = r.u64()?;
        let step_in_episode = r.u64()?;
        let episode_counter = r.u64()?;
        let stage = r.u8()?;
        let prev_progress = r.f64()?;
        let fs_raw = r.i64()?;
        let first_success = if fs_raw < 0 { None } else { Some(fs_raw as u64) };
        let episode_return = r.f64()?;
        let mut arm_q = [0.0; 6];
        for q in arm_q.iter_mut() {
            *q = r.f64()?;
        }
        let mut hand_q = [0.0; 16];
        for q in hand_q.iter_mut() {
            *q = r.f64()?;
        }
        let mut hand_q_target = [0.0; 16];
        for q in hand_q_target.iter_mut() {
            *q = r.f64()?;
        }
        let palm_lin_vel = r.vec3()?;
        let palm_ang_vel = r.vec3()?;
        let object_root = r.pose()?;
        let n_q = r.u32()? as usize;
        let mut object_q = Vec::with_capacity(n_q);
        for _ in 0..n_q {
            object_q.push(r.f64()?);
        }
        let lift_height = r.f64()?;
        let step_count = r.u64()?;
        let elapsed = r.f64()?;
        envs.push(EnvSnapshot {
            object_id,
            episode_seed,
            step_in_episode,
            episode_counter,
            stage,
            prev_progress,
            first_success,
            episode_return,
            sim: SimState {
                robot: RobotState {
                    arm_q,
                    hand_q,
                    hand_q_target,
                    palm_lin_vel,
                    palm_ang_vel,
                },
                object_root,
                object_q,
                lift_height,
                step_count,
                elapsed,
            },
        });
    }
    if r.pos != bytes.len() {
        return Err(DexkitError::runtime("trailing bytes in resume snapshot"));
    }
    Ok(TrainSnapshot {
        config_hash,
        round,
        env_steps,
        rng_state,
        rows_written,
        params,
        adam,
        envs,
    })
}

pub fn save(snap: &TrainSnapshot, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, encode(snap))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<TrainSnapshot> {
    decode(&fs::read(path)?)
}
