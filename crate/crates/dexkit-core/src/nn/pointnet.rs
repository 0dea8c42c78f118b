//! PointNet encoders (small/medium/large) and plain MLP helpers.
//!
//! The encoder is a shared per-point MLP followed by max pooling: GELU after
//! every hidden layer, no activation after the projection to the feature
//! dim, no input transform networks. Parameter names are fixed
//! (`pointnet.l{i}.w/b`), so encoder weights transfer between every
//! pre-training head and the RL feature extractor by name.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::CoreError;
use crate::nn::params::{Init, ParamStore};
use crate::nn::tape::{Tape, Tensor};

/// Encoder depth: number of hidden layers in the per-point MLP.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum PointNetSize {
    Small,
    Medium,
    Large,
}

impl PointNetSize {
    pub fn hidden_layers(self) -> usize {
        match self {
            PointNetSize::Small => 1,
            PointNetSize::Medium => 3,
            PointNetSize::Large => 5,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PointNetSize::Small => "small",
            PointNetSize::Medium => "medium",
            PointNetSize::Large => "large",
        }
    }

    pub fn from_name(s: &str) -> Option<PointNetSize> {
        match s {
            "small" => Some(PointNetSize::Small),
            "medium" => Some(PointNetSize::Medium),
            "large" => Some(PointNetSize::Large),
            _ => None,
        }
    }
}

/// Encoder hyperparameters. The global feature dim equals `feature_dim`
/// (max pooling preserves the per-point feature width).
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct PointNetSpec {
    pub size: PointNetSize,
    /// Per-point input features (xyz + origin flag).
    pub in_dim: usize,
    pub hidden_width: usize,
    /// Per-point feature dim D; also the pooled global dim.
    pub feature_dim: usize,
}

impl Default for PointNetSpec {
    fn default() -> Self {
        PointNetSpec {
            size: PointNetSize::Small,
            in_dim: 4,
            hidden_width: 64,
            feature_dim: 256,
        }
    }
}

impl PointNetSpec {
    /// Layer dims: in -> hidden x layers -> feature.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::new();
        let mut prev = self.in_dim;
        for _ in 0..self.size.hidden_layers() {
            dims.push((prev, self.hidden_width));
            prev = self.hidden_width;
        }
        dims.push((prev, self.feature_dim));
        dims
    }
}

/// Encoder parameter name prefix; everything under it transfers.
pub const ENCODER_PREFIX: &str = "pointnet.";

/// Register encoder parameters.
pub fn pointnet_init(store: &mut ParamStore, spec: &PointNetSpec, seed: u64) {
    for (i, (rows, cols)) in spec.layer_dims().into_iter().enumerate() {
        store.add(&format!("pointnet.l{i}.w"), rows, cols, Init::UniformFanIn, seed);
        store.add(&format!("pointnet.l{i}.b"), 1, cols, Init::Zeros, seed);
    }
}

/// Shared per-point MLP + segment max pool.
///
/// `cloud` is [segs*seg_len, in_dim] (a batch of `segs` clouds of fixed
/// size `seg_len`). Returns (per-point features [segs*seg_len, D], global
/// features [segs, D]). The global feature is permutation-invariant within
/// each segment.
pub fn pointnet_forward(
    tape: &mut Tape,
    store: &ParamStore,
    spec: &PointNetSpec,
    cloud: Tensor,
    segs: usize,
    seg_len: usize,
) -> Result<(Tensor, Tensor), CoreError> {
    if seg_len == 0 || segs == 0 {
        return Err(CoreError::Empty("point cloud"));
    }
    if cloud.rows != segs * seg_len || cloud.cols != spec.in_dim {
        return Err(CoreError::ShapeMismatch {
            op: "pointnet_forward",
            lhs: cloud.shape(),
            rhs: (segs * seg_len, spec.in_dim),
        });
    }
    let n_layers = spec.layer_dims().len();
    let mut x = cloud;
    for i in 0..n_layers {
        let w = tape.param(store, &format!("pointnet.l{i}.w"))?;
        let b = tape.param(store, &format!("pointnet.l{i}.b"))?;
        x = tape.matmul(x, w)?;
        x = tape.add_row(x, b)?;
        if i + 1 < n_layers {
            x = tape.gelu(x);
        }
    }
    let global = tape.max_pool_segments(x, segs, seg_len)?;
    Ok((x, global))
}

/// Register a plain MLP (`prefix.l{i}.w/b`) with the given layer sizes.
pub fn mlp_init(store: &mut ParamStore, prefix: &str, dims: &[usize], seed: u64) {
    for i in 0..dims.len() - 1 {
        store.add(&format!("{prefix}.l{i}.w"), dims[i], dims[i + 1], Init::UniformFanIn, seed);
        store.add(&format!("{prefix}.l{i}.b"), 1, dims[i + 1], Init::Zeros, seed);
    }
}

/// Forward through an MLP registered by [`mlp_init`]; GELU between layers,
/// linear output.
pub fn mlp_forward(
    tape: &mut Tape,
    store: &ParamStore,
    prefix: &str,
    dims: &[usize],
    x: Tensor,
) -> Result<Tensor, CoreError> {
    let mut h = x;
    for i in 0..dims.len() - 1 {
        let w = tape.param(store, &format!("{prefix}.l{i}.w"))?;
        let b = tape.param(store, &format!("{prefix}.l{i}.b"))?;
        h = tape.matmul(h, w)?;
        h = tape.add_row(h, b)?;
        if i + 2 < dims.len() {
            h = tape.gelu(h);
        }
    }
    Ok(h)
}

/// Parameter names an encoder checkpoint must carry for a given spec.
pub fn encoder_param_names(spec: &PointNetSpec) -> Vec<String> {
    let mut names = Vec::new();
    for i in 0..spec.layer_dims().len() {
        names.push(format!("pointnet.l{i}.w"));
        names.push(format!("pointnet.l{i}.b"));
    }
    names
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn forward_global(spec: &PointNetSpec, store: &ParamStore, pts: &[f64], n: usize) -> Vec<f64> {
        let mut tape = Tape::new();
        let x = tape.input(n, spec.in_dim, pts.to_vec());
        let (_, global) = pointnet_forward(&mut tape, store, spec, x, 1, n).unwrap();
        tape.value(global).to_vec()
    }

    #[test]
    fn layer_counts_per_size() {
        for (size, hidden) in [
            (PointNetSize::Small, 1),
            (PointNetSize::Medium, 3),
            (PointNetSize::Large, 5),
        ] {
            let spec = PointNetSpec { size, ..Default::default() };
            assert_eq!(spec.layer_dims().len(), hidden + 1);
            assert_eq!(spec.layer_dims()[0].0, 4);
            assert_eq!(spec.layer_dims().last().unwrap().1, 256);
        }
    }

    #[test]
    fn single_point_global_equals_point_feature() {
        let spec = PointNetSpec { feature_dim: 32, hidden_width: 16, ..Default::default() };
        let mut store = ParamStore::new();
        pointnet_init(&mut store, &spec, 3);
        let mut tape = Tape::new();
        let x = tape.input(1, 4, alloc::vec![0.3, -0.2, 0.8, 1.0]);
        let (per_point, global) = pointnet_forward(&mut tape, &store, &spec, x, 1, 1).unwrap();
        assert_eq!(tape.value(per_point), tape.value(global));
    }

    #[test]
    fn duplicated_points_leave_global_unchanged() {
        let spec = PointNetSpec { feature_dim: 32, hidden_width: 16, ..Default::default() };
        let mut store = ParamStore::new();
        pointnet_init(&mut store, &spec, 4);
        let mut rng = Rng::seed_from(5);
        let pts: Vec<f64> = (0..10 * 4).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let mut doubled = pts.clone();
        doubled.extend_from_slice(&pts);
        let a = forward_global(&spec, &store, &pts, 10);
        let b = forward_global(&spec, &store, &doubled, 20);
        assert_eq!(a, b);
    }

    #[test]
    fn permutation_invariance_bit_exact() {
        let spec = PointNetSpec { feature_dim: 64, hidden_width: 32, ..Default::default() };
        let mut store = ParamStore::new();
        pointnet_init(&mut store, &spec, 6);
        let mut rng = Rng::seed_from(7);
        let n = 50;
        let pts: Vec<f64> = (0..n * 4).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let base = forward_global(&spec, &store, &pts, n);
        for _ in 0..100 {
            let mut idx: Vec<usize> = (0..n).collect();
            rng.shuffle(&mut idx);
            let mut perm = Vec::with_capacity(n * 4);
            for &i in &idx {
                perm.extend_from_slice(&pts[i * 4..(i + 1) * 4]);
            }
            let out = forward_global(&spec, &store, &perm, n);
            assert_eq!(base, out, "global feature must be bit-identical");
        }
    }

    #[test]
    fn permutation_leaves_parameter_gradients_unchanged() {
        let spec = PointNetSpec { feature_dim: 16, hidden_width: 8, ..Default::default() };
        let mut store = ParamStore::new();
        pointnet_init(&mut store, &spec, 8);
        let mut rng = Rng::seed_from(9);
        let n = 40;
        let pts: Vec<f64> = (0..n * 4).map(|_| rng.uniform(-1.0, 1.0)).collect();

        let grads_for = |store: &mut ParamStore, data: &[f64]| -> Vec<Vec<f64>> {
            store.zero_grads();
            let mut tape = Tape::new();
            let x = tape.input(n, 4, data.to_vec());
            let (_, global) = pointnet_forward(&mut tape, store, &spec, x, 1, n).unwrap();
            let t = tape.tanh(global);
            let loss = tape.mean(t);
            tape.backward(loss, store).unwrap();
            store.iter().map(|e| e.grad.clone()).collect()
        };

        let base = grads_for(&mut store, &pts);
        let mut idx: Vec<usize> = (0..n).collect();
        rng.shuffle(&mut idx);
        let mut perm = Vec::with_capacity(n * 4);
        for &i in &idx {
            perm.extend_from_slice(&pts[i * 4..(i + 1) * 4]);
        }
        let permuted = grads_for(&mut store, &perm);
        for (a, b) in base.iter().zip(&permuted) {
            for (x, y) in a.iter().zip(b) {
                assert!((x - y).abs() < 1e-9, "{x} vs {y}");
            }
        }
    }

    #[test]
    fn empty_cloud_rejected() {
        let spec = PointNetSpec::default();
        let mut store = ParamStore::new();
        pointnet_init(&mut store, &spec, 1);
        let mut tape = Tape::new();
        let x = tape.input(0, 4, alloc::vec![]);
        assert!(matches!(
            pointnet_forward(&mut tape, &store, &spec, x, 1, 0),
            Err(CoreError::Empty(_))
        ));
    }

    #[test]
    fn batched_segments_match_individual_forward() {
        let spec = PointNetSpec { feature_dim: 16, hidden_width: 8, ..Default::default() };
        let mut store = ParamStore::new();
        pointnet_init(&mut store, &spec, 10);
        let mut rng = Rng::seed_from(11);
        let (segs, seg_len) = (3, 20);
        let data: Vec<f64> = (0..segs * seg_len * 4).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let mut tape = Tape::new();
        let x = tape.input(segs * seg_len, 4, data.clone());
        let (_, global) = pointnet_forward(&mut tape, &store, &spec, x, segs, seg_len).unwrap();
        let batched = tape.value(global).to_vec();
        for s in 0..segs {
            let one = forward_global(
                &spec,
                &store,
                &data[s * seg_len * 4..(s + 1) * seg_len * 4],
                seg_len,
            );
            assert_eq!(&batched[s * 16..(s + 1) * 16], &one[..]);
        }
    }
}
