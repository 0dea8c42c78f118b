//! IO, file formats, run configuration, and experiment pipelines on top of
//! `dexkit-core`.
//!
//! - [`formats`] — DXPC point-cloud files, checkpoint files, dataset
//!   indexes, manifests, CSV writers, training-resume snapshots.
//! - [`config`] — the JSON run configuration with full-default fallback.
//! - [`parallel`] — thread-fanned env stepping behind the core driver trait.
//! - [`pipelines`] — the commands: asset generation, dataset generation,
//!   pre-training, RL training with resume, evaluation, viewpoint sweep,
//!   ablations.
//! - [`cli`] — the `dexkit` command-line surface.

pub mod cli;
pub mod config;
pub mod error;
pub mod formats;
pub mod parallel;
pub mod pipelines;

pub use error::DexkitError;

/// Result alias for the std layer.
pub type Result<T> = std::result::Result<T, DexkitError>;
