//! Dense-tensor reverse-mode autodiff, parameter storage, Adam, PointNet.
//!
//! Values and gradients are computed in f64; parameters and optimizer
//! moments are stored as f32 (matching the checkpoint payload) and promoted
//! on load. Reductions accumulate in f64, so finite-difference gradient
//! checks hold to tight tolerances and training stays bit-deterministic.

mod params;
mod pointnet;
mod tape;

pub use params::{AdamState, Init, ParamStore};
pub use pointnet::{
    encoder_param_names, mlp_forward, mlp_init, pointnet_forward, pointnet_init, PointNetSize,
    PointNetSpec, ENCODER_PREFIX,
};
pub use tape::{Tape, Tensor};
