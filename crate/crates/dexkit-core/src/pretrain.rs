//! Pre-training datasets and the five encoder regimes.
//!
//! Two dataset families: task-scene clouds with the robot in view (per-point
//! 4-group labels) and isolated-object clouds (category label + functional
//! mask). On top of them: part segmentation, category classification,
//! Chamfer reconstruction, and SimSiam, plus the scratch baseline. All five
//! emit encoder-only checkpoints with identical parameter names and shapes.

use alloc::vec;
use alloc::vec::Vec;

use crate::assets::{Category, CategoryTemplate, Split, SplitManifest};
use crate::error::CoreError;
use crate::geometry::Vec3;
use crate::math;
use crate::nn::{
    mlp_forward, mlp_init, pointnet_forward, pointnet_init, AdamState, ParamStore, PointNetSpec,
    Tape, Tensor,
};
use crate::rng::{stream_seed, stream_seed_idx, Rng};
use crate::sensing::{
    assemble_observation, collect_object_scene, crop_and_downsample, depth_to_points,
    render_depth, ImaginedPattern, LabeledPointCloud, PointLabel, PointOrigin, SensingConfig,
};
use crate::sim::{self, RobotModel};
use crate::tasks::TaskSpec;

/// One task-scene record: labeled observed ⊕ imagined cloud from a
/// randomized robot + object state under the fixed task camera.
#[derive(Debug, Clone)]
pub struct DamRecord {
    pub cloud: LabeledPointCloud,
    pub object_id: u32,
    pub category: Category,
}

/// One isolated-object record: no robot, random joint state, random
/// viewpoint on a spherical cap.
#[derive(Debug, Clone)]
pub struct PmmRecord {
    pub points: Vec<Vec3>,
    pub functional_mask: Vec<bool>,
    pub category: Category,
}

/// View augmentations for SimSiam. Two draws from the same spec are
/// independent.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct AugmentationSpec {
    /// Rotation about world z, uniform in ±rot_z (rad), around the centroid.
    pub rot_z: f64,
    /// Per-point Gaussian jitter (m).
    pub jitter_sigma: f64,
    /// Fraction of points dropped (resampled from survivors).
    pub dropout: f64,
    /// Probability of a random half-space crop.
    pub crop_prob: f64,
}

impl Default for AugmentationSpec {
    fn default() -> Self {
        AugmentationSpec { rot_z: math::PI, jitter_sigma: 0.005, dropout: 0.10, crop_prob: 0.3 }
    }
}

/// Training budget shared by all regimes.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct PretrainConfig {
    pub batch: usize,
    pub lr: f64,
    pub epochs: usize,
    pub holdout_frac: f64,
    /// Points emitted by the reconstruction decoder.
    pub recon_points: usize,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            batch: 32,
            lr: 1e-3,
            epochs: 20,
            holdout_frac: 0.1,
            recon_points: 512,
            seed: 0,
        }
    }
}

/// Per-epoch metrics row. Row 0 is the pre-update evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub loss: f64,
    pub accuracy: Option<f64>,
    pub miou: Option<f64>,
    pub chamfer: Option<f64>,
    pub collapse_std: Option<f64>,
}

/// Result of one pre-training run.
#[derive(Debug, Clone)]
pub struct PretrainOutcome {
    /// Encoder-only checkpoint bytes (`pointnet.*`).
    pub encoder_checkpoint: Vec<u8>,
    pub metrics: Vec<EpochMetrics>,
    /// Final holdout confusion matrix (segmentation only):
    /// `confusion[want][pred]`.
    pub confusion: [[u64; 4]; 4],
}

/// The five pre-training regimes (scratch is the absence of one).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum PretrainMethod {
    SegDam,
    SegPmm,
    ClsPmm,
    ReconDam,
    SimsiamDam,
}

impl PretrainMethod {
    pub const ALL: [PretrainMethod; 5] = [
        PretrainMethod::SegDam,
        PretrainMethod::SegPmm,
        PretrainMethod::ClsPmm,
        PretrainMethod::ReconDam,
        PretrainMethod::SimsiamDam,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PretrainMethod::SegDam => "seg-dam",
            PretrainMethod::SegPmm => "seg-pmm",
            PretrainMethod::ClsPmm => "cls-pmm",
            PretrainMethod::ReconDam => "recon-dam",
            PretrainMethod::SimsiamDam => "simsiam-dam",
        }
    }

    pub fn from_name(s: &str) -> Option<PretrainMethod> {
        PretrainMethod::ALL.iter().copied().find(|m| m.name() == s)
    }

    pub fn uses_dam(self) -> bool {
        matches!(
            self,
            PretrainMethod::SegDam | PretrainMethod::ReconDam | PretrainMethod::SimsiamDam
        )
    }
}

/// Bidirectional mean squared Chamfer distance.
pub fn chamfer_distance(a: &[Vec3], b: &[Vec3]) -> Result<f64, CoreError> {
    if a.is_empty() || b.is_empty() {
        return Err(CoreError::Empty("chamfer point set"));
    }
    let one_way = |from: &[Vec3], to: &[Vec3]| -> f64 {
        let mut sum = 0.0;
        for p in from {
            let mut best = f64::INFINITY;
            for q in to {
                best = best.min((*p - *q).norm_sq());
            }
            sum += best;
        }
        sum / from.len() as f64
    };
    Ok(one_way(a, b) + one_way(b, a))
}

/// Generate task-scene records for every seen object in the manifest:
/// robot and object joints uniform in their limits, object base randomized
/// as at reset, fixed task camera.
#[allow(clippy::too_many_arguments)]
pub fn generate_dam(
    manifest: &SplitManifest,
    template: &CategoryTemplate,
    task: &TaskSpec,
    model: &RobotModel,
    sensing: &SensingConfig,
    per_object: usize,
    seed: u64,
) -> Vec<DamRecord> {
    let camera = sensing.camera(task.camera_eye, task.camera_target);
    let pattern = ImaginedPattern::build(model, sensing.n_imagined, crate::env::PATTERN_SEED);
    let mut records = Vec::new();
    for entry in manifest.entries(Split::Seen) {
        let instance = manifest.build_object(entry, template);
        for k in 0..per_object {
            let rec_seed =
                stream_seed_idx(seed, "dam", (entry.id as u64) << 32 | k as u64);
            let mut rng = Rng::seed_from(rec_seed);
            let mut state = sim::reset(model, &instance, task.yaw_range, task.xy_range, rec_seed);
            for (i, lim) in model.arm_limits.iter().enumerate() {
                state.robot.arm_q[i] = rng.uniform(lim[0], lim[1]);
            }
            for (i, lim) in model.hand_limits.iter().enumerate() {
                state.robot.hand_q[i] = rng.uniform(lim[0], lim[1]);
            }
            let jl = instance.functional_joint_limits();
            state.object_q[instance.functional_joint] = rng.uniform(jl[0], jl[1]);
            let (obs, _) = assemble_observation(
                model,
                &instance,
                &state,
                &camera,
                &pattern,
                sensing,
                stream_seed(rec_seed, "obs"),
            );
            records.push(DamRecord {
                cloud: obs.cloud,
                object_id: entry.id,
                category: template.category,
            });
        }
    }
    records
}

/// Generate isolated-object records: fresh instances per record, random
/// joint value, viewpoint uniform on a spherical cap around the object.
pub fn generate_pmm(
    categories: &[Category],
    per_category: usize,
    sensing: &SensingConfig,
    seed: u64,
) -> Vec<PmmRecord> {
    let mut records = Vec::new();
    for &cat in categories {
        let template = CategoryTemplate::for_category(cat);
        for k in 0..per_category {
            let rec_seed = stream_seed_idx(seed, cat.name(), k as u64);
            let mut rng = Rng::seed_from(rec_seed);
            let instance = crate::assets::generate_object(&template, rec_seed, Split::Seen);
            let jl = instance.functional_joint_limits();
            let mut q = vec![instance.init_joint_value; instance.n_joints()];
            q[instance.functional_joint] = rng.uniform(jl[0], jl[1]);

            // viewpoint on a spherical cap: azimuth full circle, polar
            // 20..70 degrees from vertical
            let azim = rng.uniform(0.0, 2.0 * math::PI);
            let polar = rng.uniform(20.0, 70.0) * math::PI / 180.0;
            let r = 1.0;
            let target = Vec3::new(0.0, 0.0, 0.2);
            let eye = target
                + Vec3::new(
                    r * math::sin(polar) * math::cos(azim),
                    r * math::sin(polar) * math::sin(azim),
                    r * math::cos(polar),
                );
            let camera = sensing.camera(eye, target);
            let scene = collect_object_scene(&instance, &instance.chain.root_pose, &q);
            let img = render_depth(&scene, &camera);
            let pts = depth_to_points(&img, &camera);
            let labeled: Vec<(Vec3, PointLabel)> =
                pts.into_iter().map(|(p, id)| (p, scene[id].label)).collect();
            let (sampled, _) = crop_and_downsample(
                &labeled,
                &sensing.workspace,
                sensing.n_observed,
                PointLabel::ObjectRest,
                &mut rng,
            );
            let points: Vec<Vec3> = sampled.iter().map(|(p, _)| *p).collect();
            let functional_mask: Vec<bool> = sampled
                .iter()
                .map(|(_, l)| *l == PointLabel::ObjectFunctional)
                .collect();
            records.push(PmmRecord { points, functional_mask, category: cat });
        }
    }
    records
}

/// Uniform in-memory training cloud: per-point features (xyz + origin
/// flag), per-point 4-group labels, category index, and the observed-only
/// xyz used as the reconstruction target.
#[derive(Debug, Clone)]
pub struct TrainCloud {
    pub feats: Vec<f32>,
    pub labels: Vec<u8>,
    pub category: usize,
    pub n_points: usize,
    pub observed_xyz: Vec<f64>,
}

impl TrainCloud {
    /// Build from any labeled cloud (file loads, both dataset families).
    pub fn from_cloud(cloud: &LabeledPointCloud, category: usize) -> TrainCloud {
        let n = cloud.len();
        let mut feats = Vec::with_capacity(n * 4);
        let mut labels = Vec::with_capacity(n);
        let mut observed = Vec::new();
        for i in 0..n {
            let p = cloud.points[i];
            let o = cloud.origins[i];
            feats.extend_from_slice(&[p.x as f32, p.y as f32, p.z as f32, o.code() as f32]);
            labels.push(cloud.labels[i].code());
            if o == PointOrigin::Observed {
                observed.extend_from_slice(&[p.x, p.y, p.z]);
            }
        }
        TrainCloud { feats, labels, category, n_points: n, observed_xyz: observed }
    }

    pub fn from_dam(rec: &DamRecord) -> TrainCloud {
        TrainCloud::from_cloud(&rec.cloud, rec.category.class_index())
    }

    pub fn from_pmm(rec: &PmmRecord) -> TrainCloud {
        let n = rec.points.len();
        let mut feats = Vec::with_capacity(n * 4);
        let mut labels = Vec::with_capacity(n);
        let mut observed = Vec::with_capacity(n * 3);
        for i in 0..n {
            let p = rec.points[i];
            feats.extend_from_slice(&[p.x as f32, p.y as f32, p.z as f32, 0.0]);
            labels.push(if rec.functional_mask[i] {
                PointLabel::ObjectFunctional.code()
            } else {
                PointLabel::ObjectRest.code()
            });
            observed.extend_from_slice(&[p.x, p.y, p.z]);
        }
        TrainCloud {
            feats,
            labels,
            category: rec.category.class_index(),
            n_points: n,
            observed_xyz: observed,
        }
    }
}

fn split_indices(n: usize, holdout_frac: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = Rng::seed_from(stream_seed(seed, "holdout"));
    rng.shuffle(&mut idx);
    let n_hold = ((n as f64 * holdout_frac) as usize).clamp(1, n.saturating_sub(1).max(1));
    let holdout = idx.split_off(n - n_hold);
    (idx, holdout)
}

fn batch_input(tape: &mut Tape, clouds: &[&TrainCloud]) -> Tensor {
    let n = clouds[0].n_points;
    let mut data = Vec::with_capacity(clouds.len() * n * 4);
    for c in clouds {
        debug_assert_eq!(c.n_points, n, "fixed cloud size per dataset");
        data.extend(c.feats.iter().map(|&x| x as f64));
    }
    tape.input(clouds.len() * n, 4, data)
}

fn check_dataset(clouds: &[TrainCloud]) -> Result<(), CoreError> {
    if clouds.len() < 2 {
        return Err(CoreError::Empty("pre-training dataset"));
    }
    Ok(())
}

const SEG_CLASSES: usize = PointLabel::COUNT;

fn seg_head_dims(spec: &PointNetSpec) -> [usize; 3] {
    [2 * spec.feature_dim, 256, SEG_CLASSES]
}

/// Per-point 4-class segmentation: per-point features ⊕ pooled global ->
/// 2-layer head, cross-entropy. Metrics: holdout point accuracy and mIoU.
pub fn train_segmentation(
    clouds: &[TrainCloud],
    spec: &PointNetSpec,
    cfg: &PretrainConfig,
) -> Result<PretrainOutcome, CoreError> {
    check_dataset(clouds)?;
    let mut store = ParamStore::new();
    pointnet_init(&mut store, spec, cfg.seed);
    mlp_init(&mut store, "seg_head", &seg_head_dims(spec), cfg.seed);
    let mut adam = AdamState::new(&store, cfg.lr);
    let (train, holdout) = split_indices(clouds.len(), cfg.holdout_frac, cfg.seed);
    let mut rng = Rng::seed_from(stream_seed(cfg.seed, "seg"));
    let mut metrics = Vec::new();

    let eval = |store: &ParamStore, idx: &[usize]| -> (f64, f64, f64) {
        let mut correct = 0usize;
        let mut total = 0usize;
        let mut loss = 0.0;
        let mut inter = [0usize; SEG_CLASSES];
        let mut union = [0usize; SEG_CLASSES];
        for &i in idx {
            let c = &clouds[i];
            let mut tape = Tape::new();
            let (logits, labels) = seg_forward(&mut tape, store, spec, &[c]).unwrap();
            let ce = tape.softmax_cross_entropy(logits, &labels).unwrap();
            loss += tape.scalar(ce);
            let v = tape.value(logits);
            for p in 0..c.n_points {
                let row = &v[p * SEG_CLASSES..(p + 1) * SEG_CLASSES];
                let pred = argmax(row);
                let want = c.labels[p] as usize;
                if pred == want {
                    correct += 1;
                    inter[want] += 1;
                    union[want] += 1;
                } else {
                    union[want] += 1;
                    union[pred] += 1;
                }
                total += 1;
            }
        }
        let miou = {
            let mut s = 0.0;
            let mut k = 0;
            for c in 0..SEG_CLASSES {
                if union[c] > 0 {
                    s += inter[c] as f64 / union[c] as f64;
                    k += 1;
                }
            }
            if k > 0 {
                s / k as f64
            } else {
                0.0
            }
        };
        (loss / idx.len() as f64, correct as f64 / total.max(1) as f64, miou)
    };

    let (train_l0, _, _) = eval(&store, &train);
    let (_, a0, m0) = eval(&store, &holdout);
    metrics.push(EpochMetrics {
        epoch: 0,
        loss: train_l0,
        accuracy: Some(a0),
        miou: Some(m0),
        chamfer: None,
        collapse_std: None,
    });

    let mut order = train.clone();
    for epoch in 1..=cfg.epochs {
        rng.shuffle(&mut order);
        let mut epoch_loss = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(cfg.batch) {
            let refs: Vec<&TrainCloud> = chunk.iter().map(|&i| &clouds[i]).collect();
            let mut tape = Tape::new();
            let (logits, labels) = seg_forward(&mut tape, &store, spec, &refs)?;
            let loss = tape.softmax_cross_entropy(logits, &labels)?;
            epoch_loss += tape.scalar(loss);
            batches += 1;
            tape.backward(loss, &mut store)?;
            adam.apply(&mut store);
        }
        let (_, acc, miou) = eval(&store, &holdout);
        metrics.push(EpochMetrics {
            epoch,
            loss: epoch_loss / batches.max(1) as f64,
            accuracy: Some(acc),
            miou: Some(miou),
            chamfer: None,
            collapse_std: None,
        });
    }

    let mut confusion = [[0u64; 4]; 4];
    for &i in &holdout {
        let c = &clouds[i];
        let mut tape = Tape::new();
        let (logits, _) = seg_forward(&mut tape, &store, spec, &[c])?;
        let v = tape.value(logits);
        for p in 0..c.n_points {
            let pred = argmax(&v[p * SEG_CLASSES..(p + 1) * SEG_CLASSES]);
            confusion[c.labels[p] as usize][pred] += 1;
        }
    }
    Ok(PretrainOutcome {
        encoder_checkpoint: store.encode_prefix("pointnet."),
        metrics,
        confusion,
    })
}

fn seg_forward(
    tape: &mut Tape,
    store: &ParamStore,
    spec: &PointNetSpec,
    clouds: &[&TrainCloud],
) -> Result<(Tensor, Vec<usize>), CoreError> {
    let n = clouds[0].n_points;
    let x = batch_input(tape, clouds);
    let (per_point, global) = pointnet_forward(tape, store, spec, x, clouds.len(), n)?;
    let rep = tape.repeat_rows(global, n);
    let joined = tape.concat_cols(per_point, rep)?;
    let logits = mlp_forward(tape, store, "seg_head", &seg_head_dims(spec), joined)?;
    let labels: Vec<usize> =
        clouds.iter().flat_map(|c| c.labels.iter().map(|&l| l as usize)).collect();
    Ok((logits, labels))
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Category classification from the pooled global feature.
pub fn train_classification(
    clouds: &[TrainCloud],
    spec: &PointNetSpec,
    n_classes: usize,
    cfg: &PretrainConfig,
) -> Result<PretrainOutcome, CoreError> {
    check_dataset(clouds)?;
    let dims = [spec.feature_dim, 256, n_classes];
    let mut store = ParamStore::new();
    pointnet_init(&mut store, spec, cfg.seed);
    mlp_init(&mut store, "cls_head", &dims, cfg.seed);
    let mut adam = AdamState::new(&store, cfg.lr);
    let (train, holdout) = split_indices(clouds.len(), cfg.holdout_frac, cfg.seed);
    let mut rng = Rng::seed_from(stream_seed(cfg.seed, "cls"));
    let mut metrics = Vec::new();

    let eval = |store: &ParamStore, idx: &[usize]| -> (f64, f64) {
        let mut loss = 0.0;
        let mut correct = 0usize;
        for chunk in idx.chunks(64) {
            let refs: Vec<&TrainCloud> = chunk.iter().map(|&i| &clouds[i]).collect();
            let labels: Vec<usize> = refs.iter().map(|c| c.category).collect();
            let mut tape = Tape::new();
            let x = batch_input(&mut tape, &refs);
            let (_, global) =
                pointnet_forward(&mut tape, store, spec, x, refs.len(), refs[0].n_points).unwrap();
            let logits = mlp_forward(&mut tape, store, "cls_head", &dims, global).unwrap();
            let ce = tape.softmax_cross_entropy(logits, &labels).unwrap();
            loss += tape.scalar(ce) * refs.len() as f64;
            let v = tape.value(logits);
            for (r, &want) in labels.iter().enumerate() {
                if argmax(&v[r * n_classes..(r + 1) * n_classes]) == want {
                    correct += 1;
                }
            }
        }
        (loss / idx.len() as f64, correct as f64 / idx.len() as f64)
    };

    let (train_l0, _) = eval(&store, &train);
    let (_, a0) = eval(&store, &holdout);
    metrics.push(EpochMetrics {
        epoch: 0,
        loss: train_l0,
        accuracy: Some(a0),
        miou: None,
        chamfer: None,
        collapse_std: None,
    });

    let mut order = train.clone();
    for epoch in 1..=cfg.epochs {
        rng.shuffle(&mut order);
        let mut epoch_loss = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(cfg.batch) {
            let refs: Vec<&TrainCloud> = chunk.iter().map(|&i| &clouds[i]).collect();
            let labels: Vec<usize> = refs.iter().map(|c| c.category).collect();
            let mut tape = Tape::new();
            let x = batch_input(&mut tape, &refs);
            let (_, global) =
                pointnet_forward(&mut tape, &store, spec, x, refs.len(), refs[0].n_points)?;
            let logits = mlp_forward(&mut tape, &store, "cls_head", &dims, global)?;
            let loss = tape.softmax_cross_entropy(logits, &labels)?;
            epoch_loss += tape.scalar(loss);
            batches += 1;
            tape.backward(loss, &mut store)?;
            adam.apply(&mut store);
        }
        let (_, acc) = eval(&store, &holdout);
        metrics.push(EpochMetrics {
            epoch,
            loss: epoch_loss / batches.max(1) as f64,
            accuracy: Some(acc),
            miou: None,
            chamfer: None,
            collapse_std: None,
        });
    }

    Ok(PretrainOutcome {
        encoder_checkpoint: store.encode_prefix("pointnet."),
        metrics,
        confusion: [[0; 4]; 4],
    })
}

/// Encoder-decoder reconstruction: the global embedding decodes to a fixed
/// number of points, trained with Chamfer distance against the observed
/// points of the input cloud.
pub fn train_reconstruction(
    clouds: &[TrainCloud],
    spec: &PointNetSpec,
    cfg: &PretrainConfig,
) -> Result<PretrainOutcome, CoreError> {
    check_dataset(clouds)?;
    let m = cfg.recon_points;
    let dims = [spec.feature_dim, 256, m * 3];
    let mut store = ParamStore::new();
    pointnet_init(&mut store, spec, cfg.seed);
    mlp_init(&mut store, "decoder", &dims, cfg.seed);
    let mut adam = AdamState::new(&store, cfg.lr);
    let (train, holdout) = split_indices(clouds.len(), cfg.holdout_frac, cfg.seed);
    let mut rng = Rng::seed_from(stream_seed(cfg.seed, "recon"));
    let mut metrics = Vec::new();

    let batch_loss = |tape: &mut Tape,
                      store: &ParamStore,
                      refs: &[&TrainCloud]|
     -> Result<Tensor, CoreError> {
        let x = batch_input(tape, refs);
        let (_, global) = pointnet_forward(tape, store, spec, x, refs.len(), refs[0].n_points)?;
        let decoded = mlp_forward(tape, store, "decoder", &dims, global)?;
        let mut total: Option<Tensor> = None;
        for (i, c) in refs.iter().enumerate() {
            let row = tape.slice_rows(decoded, i, 1)?;
            let pred = tape.reshape(row, m, 3)?;
            let cd = tape.chamfer_to_const(pred, &c.observed_xyz)?;
            total = Some(match total {
                Some(t) => tape.add(t, cd)?,
                None => cd,
            });
        }
        Ok(tape.scale(total.unwrap(), 1.0 / refs.len() as f64))
    };

    let eval = |store: &ParamStore, idx: &[usize]| -> f64 {
        let mut s = 0.0;
        for chunk in idx.chunks(32) {
            let refs: Vec<&TrainCloud> = chunk.iter().map(|&i| &clouds[i]).collect();
            let mut tape = Tape::new();
            let loss = batch_loss(&mut tape, store, &refs).unwrap();
            s += tape.scalar(loss) * refs.len() as f64;
        }
        s / idx.len() as f64
    };

    let train_c0 = eval(&store, &train);
    let c0 = eval(&store, &holdout);
    metrics.push(EpochMetrics {
        epoch: 0,
        loss: train_c0,
        accuracy: None,
        miou: None,
        chamfer: Some(c0),
        collapse_std: None,
    });

    let mut order = train.clone();
    for epoch in 1..=cfg.epochs {
        rng.shuffle(&mut order);
        let mut epoch_loss = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(cfg.batch) {
            let refs: Vec<&TrainCloud> = chunk.iter().map(|&i| &clouds[i]).collect();
            let mut tape = Tape::new();
            let loss = batch_loss(&mut tape, &store, &refs)?;
            epoch_loss += tape.scalar(loss);
            batches += 1;
            tape.backward(loss, &mut store)?;
            adam.apply(&mut store);
        }
        let ch = eval(&store, &holdout);
        metrics.push(EpochMetrics {
            epoch,
            loss: epoch_loss / batches.max(1) as f64,
            accuracy: None,
            miou: None,
            chamfer: Some(ch),
            collapse_std: None,
        });
    }

    Ok(PretrainOutcome {
        encoder_checkpoint: store.encode_prefix("pointnet."),
        metrics,
        confusion: [[0; 4]; 4],
    })
}

/// SimSiam projector/predictor dims: projector hidden 256 with a 64-dim
/// output, predictor bottleneck 32.
pub const SIMSIAM_Z_DIM: usize = 64;

fn projector_dims(spec: &PointNetSpec) -> [usize; 3] {
    [spec.feature_dim, 256, SIMSIAM_Z_DIM]
}

const PREDICTOR_DIMS: [usize; 3] = [SIMSIAM_Z_DIM, 32, SIMSIAM_Z_DIM];

/// Negative-cosine SimSiam loss over two projected views with stop-gradient
/// on the target branch. Exposed for the identity-predictor analytic test.
pub fn simsiam_loss(
    tape: &mut Tape,
    p1: Tensor,
    z1: Tensor,
    p2: Tensor,
    z2: Tensor,
) -> Result<Tensor, CoreError> {
    let t2 = tape.stop_grad(z2);
    let t1 = tape.stop_grad(z1);
    let c1 = tape.cosine_rows(p1, t2)?;
    let c2 = tape.cosine_rows(p2, t1)?;
    let m1 = tape.mean(c1);
    let m2 = tape.mean(c2);
    let s = tape.add(m1, m2)?;
    Ok(tape.scale(s, -0.5))
}

/// Two augmented feature views of one cloud.
fn augment_views(cloud: &TrainCloud, aug: &AugmentationSpec, rng: &mut Rng) -> (Vec<f64>, Vec<f64>) {
    let a = augment_once(cloud, aug, rng);
    let b = augment_once(cloud, aug, rng);
    (a, b)
}

fn augment_once(cloud: &TrainCloud, aug: &AugmentationSpec, rng: &mut Rng) -> Vec<f64> {
    let n = cloud.n_points;
    // start from the raw features
    let mut pts: Vec<[f64; 4]> = (0..n)
        .map(|i| {
            [
                cloud.feats[i * 4] as f64,
                cloud.feats[i * 4 + 1] as f64,
                cloud.feats[i * 4 + 2] as f64,
                cloud.feats[i * 4 + 3] as f64,
            ]
        })
        .collect();

    // centroid for rotation / crop pivots
    let mut cx = 0.0;
    let mut cy = 0.0;
    for p in &pts {
        cx += p[0];
        cy += p[1];
    }
    cx /= n as f64;
    cy /= n as f64;

    // rotation about world z through the centroid
    let ang = rng.uniform(-aug.rot_z, aug.rot_z);
    let (s, c) = (math::sin(ang), math::cos(ang));
    for p in pts.iter_mut() {
        let (dx, dy) = (p[0] - cx, p[1] - cy);
        p[0] = cx + c * dx - s * dy;
        p[1] = cy + s * dx + c * dy;
    }

    // per-point jitter
    if aug.jitter_sigma > 0.0 {
        for p in pts.iter_mut() {
            p[0] += rng.normal() * aug.jitter_sigma;
            p[1] += rng.normal() * aug.jitter_sigma;
            p[2] += rng.normal() * aug.jitter_sigma;
        }
    }

    // random half-space crop (keep size by resampling survivors)
    if rng.next_f64() < aug.crop_prob {
        let dir = loop {
            let v = Vec3::new(rng.normal(), rng.normal(), rng.normal());
            if let Some(u) = v.normalized(1e-9) {
                break u;
            }
        };
        let mut cz = 0.0;
        for p in &pts {
            cz += p[2];
        }
        cz /= n as f64;
        let keep: Vec<usize> = (0..n)
            .filter(|&i| {
                let d = (pts[i][0] - cx) * dir.x + (pts[i][1] - cy) * dir.y + (pts[i][2] - cz) * dir.z;
                d >= 0.0
            })
            .collect();
        if !keep.is_empty() && keep.len() < n {
            let mut out = Vec::with_capacity(n);
            for &i in &keep {
                out.push(pts[i]);
            }
            while out.len() < n {
                out.push(pts[keep[rng.below(keep.len())]]);
            }
            pts = out;
        }
    }

    // dropout with resampling
    if aug.dropout > 0.0 {
        let n_drop = (n as f64 * aug.dropout) as usize;
        if n_drop > 0 && n_drop < n {
            let dropped = rng.choose_k(n, n_drop);
            let mut is_dropped = vec![false; n];
            for &i in &dropped {
                is_dropped[i] = true;
            }
            let survivors: Vec<usize> = (0..n).filter(|&i| !is_dropped[i]).collect();
            for &i in &dropped {
                pts[i] = pts[survivors[rng.below(survivors.len())]];
            }
        }
    }

    pts.into_iter().flatten().collect()
}

/// SimSiam on two augmented views, stop-gradient on the target branch.
/// The collapse metric is the mean per-dimension std of L2-normalized
/// embeddings over the holdout (healthy: about 1/sqrt(z_dim)).
pub fn train_simsiam(
    clouds: &[TrainCloud],
    spec: &PointNetSpec,
    aug: &AugmentationSpec,
    cfg: &PretrainConfig,
) -> Result<PretrainOutcome, CoreError> {
    check_dataset(clouds)?;
    let proj_dims = projector_dims(spec);
    let mut store = ParamStore::new();
    pointnet_init(&mut store, spec, cfg.seed);
    mlp_init(&mut store, "projector", &proj_dims, cfg.seed);
    mlp_init(&mut store, "predictor", &PREDICTOR_DIMS, cfg.seed);
    let mut adam = AdamState::new(&store, cfg.lr);
    let (train, holdout) = split_indices(clouds.len(), cfg.holdout_frac, cfg.seed);
    let mut rng = Rng::seed_from(stream_seed(cfg.seed, "simsiam"));
    let mut metrics = Vec::new();

    let collapse = |store: &ParamStore, idx: &[usize]| -> f64 {
        // project holdout clouds without augmentation
        let mut zs: Vec<Vec<f64>> = Vec::new();
        for chunk in idx.chunks(64) {
            let refs: Vec<&TrainCloud> = chunk.iter().map(|&i| &clouds[i]).collect();
            let mut tape = Tape::new();
            let x = batch_input(&mut tape, &refs);
            let (_, global) =
                pointnet_forward(&mut tape, store, spec, x, refs.len(), refs[0].n_points).unwrap();
            let z = mlp_forward(&mut tape, store, "projector", &proj_dims, global).unwrap();
            let v = tape.value(z);
            for r in 0..refs.len() {
                zs.push(v[r * SIMSIAM_Z_DIM..(r + 1) * SIMSIAM_Z_DIM].to_vec());
            }
        }
        // L2-normalize rows, then mean per-dim std over the batch
        for z in zs.iter_mut() {
            let norm = math::sqrt(z.iter().map(|x| x * x).sum::<f64>()).max(1e-12);
            z.iter_mut().for_each(|x| *x /= norm);
        }
        let nb = zs.len() as f64;
        let mut mean_std = 0.0;
        for d in 0..SIMSIAM_Z_DIM {
            let mean: f64 = zs.iter().map(|z| z[d]).sum::<f64>() / nb;
            let var: f64 = zs.iter().map(|z| (z[d] - mean) * (z[d] - mean)).sum::<f64>() / nb;
            mean_std += math::sqrt(var);
        }
        mean_std / SIMSIAM_Z_DIM as f64
    };

    let s0 = collapse(&store, &holdout);
    metrics.push(EpochMetrics {
        epoch: 0,
        loss: 0.0,
        accuracy: None,
        miou: None,
        chamfer: None,
        collapse_std: Some(s0),
    });

    let n_pts = clouds[0].n_points;
    let mut order = train.clone();
    for epoch in 1..=cfg.epochs {
        rng.shuffle(&mut order);
        let mut epoch_loss = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(cfg.batch) {
            let bsz = chunk.len();
            // stack both views: rows [0,B) = view1, [B,2B) = view2
            let mut data = Vec::with_capacity(2 * bsz * n_pts * 4);
            let mut second = Vec::with_capacity(bsz * n_pts * 4);
            for &i in chunk {
                let (v1, v2) = augment_views(&clouds[i], aug, &mut rng);
                data.extend_from_slice(&v1);
                second.extend_from_slice(&v2);
            }
            data.extend_from_slice(&second);

            let mut tape = Tape::new();
            let x = tape.input(2 * bsz * n_pts, 4, data);
            let (_, global) = pointnet_forward(&mut tape, &store, spec, x, 2 * bsz, n_pts)?;
            let z = mlp_forward(&mut tape, &store, "projector", &proj_dims, global)?;
            let z1 = tape.slice_rows(z, 0, bsz)?;
            let z2 = tape.slice_rows(z, bsz, bsz)?;
            let p1 = mlp_forward(&mut tape, &store, "predictor", &PREDICTOR_DIMS, z1)?;
            let p2 = mlp_forward(&mut tape, &store, "predictor", &PREDICTOR_DIMS, z2)?;
            let loss = simsiam_loss(&mut tape, p1, z1, p2, z2)?;
            epoch_loss += tape.scalar(loss);
            batches += 1;
            tape.backward(loss, &mut store)?;
            adam.apply(&mut store);
        }
        let st = collapse(&store, &holdout);
        metrics.push(EpochMetrics {
            epoch,
            loss: epoch_loss / batches.max(1) as f64,
            accuracy: None,
            miou: None,
            chamfer: None,
            collapse_std: Some(st),
        });
    }

    Ok(PretrainOutcome {
        encoder_checkpoint: store.encode_prefix("pointnet."),
        metrics,
        confusion: [[0; 4]; 4],
    })
}
