//! Deterministic desk-scale testbed for dexterous manipulation of
//! articulated objects.
//!
//! The crate is organized bottom-up:
//!
//! - [`geometry`] — vectors, unit quaternions, rigid poses, joint chains,
//!   forward kinematics.
//! - [`shapes`] — analytic primitives (sphere, box, capsule, cylinder),
//!   ray intersection, surface sampling, sphere proxy sets.
//! - [`assets`] — procedural articulated-object templates and seen/unseen
//!   split manifests.
//! - [`sim`] — quasi-static robot + object simulation: palm twist control,
//!   PD hand tracking, sphere-proxy contacts, functional-joint coupling.
//! - [`sensing`] — depth rendering, partial point clouds, imagined robot
//!   points, observation assembly.
//! - [`nn`] — dense-tensor reverse-mode autodiff, PointNet encoders, Adam,
//!   checkpoint encoding.
//! - [`pretrain`] — DAM/PMM-style dataset generation and the five encoder
//!   pre-training regimes.
//! - [`tasks`] — staged reward terms and per-task success criteria.
//! - [`env`] — the gym-style episode loop tying sim, sensing, and tasks
//!   together.
//! - [`rl`] — PPO with GAE over vectorized environments.
//! - [`eval`] — seen/unseen evaluation, viewpoint sweep, ablation drivers.
//!
//! Everything is seed-deterministic: identical seeds and configs produce
//! bit-identical trajectories, datasets, and parameters. The crate is
//! `no_std`-compatible (requires `alloc`; enable the `libm` feature when
//! building without `std`).

#![cfg_attr(not(feature = "std"), no_std)]

#[cfg(all(not(feature = "std"), not(feature = "libm")))]
compile_error!("dexkit-core requires either the `std` or the `libm` feature");

extern crate alloc;

pub mod assets;
pub mod env;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod math;
pub mod nn;
pub mod pretrain;
pub mod rl;
pub mod rng;
pub mod sensing;
pub mod shapes;
pub mod sim;
pub mod tasks;

pub use error::CoreError;
