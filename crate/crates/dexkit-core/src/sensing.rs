//! Depth rendering, partial point clouds, imagined robot points, and
//! observation assembly.
//!
//! Depth values are Euclidean range along the (normalized) pixel ray, so
//! back-projection is exact. Point clouds live in the fixed world frame;
//! per-point segmentation labels exist for pre-training data only and are
//! stripped before anything reaches the policy, which sees xyz plus a 1-bit
//! observed/imagined origin flag.

use alloc::vec;
use alloc::vec::Vec;

use crate::assets::{functional_part_labels, ArticulatedObjectInstance, PartLabel};
use crate::geometry::{forward_kinematics, Pose, UnitQuat, Vec3};
use crate::math;
use crate::rng::{stream_seed_idx, Rng};
use crate::shapes::{ray_intersect, sample_surface, Ray, ShapeKind};
use crate::sim::{RobotModel, RobotPart, SimState};

/// Per-point segmentation label (4 groups).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointLabel {
    ObjectFunctional,
    ObjectRest,
    RobotHand,
    RobotArm,
}

impl PointLabel {
    pub const COUNT: usize = 4;

    pub fn code(self) -> u8 {
        match self {
            PointLabel::ObjectFunctional => 0,
            PointLabel::ObjectRest => 1,
            PointLabel::RobotHand => 2,
            PointLabel::RobotArm => 3,
        }
    }

    pub fn from_code(c: u8) -> Option<PointLabel> {
        match c {
            0 => Some(PointLabel::ObjectFunctional),
            1 => Some(PointLabel::ObjectRest),
            2 => Some(PointLabel::RobotHand),
            3 => Some(PointLabel::RobotArm),
            _ => None,
        }
    }
}

/// Whether a point was observed by the camera or imagined from FK.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointOrigin {
    Observed,
    Imagined,
}

impl PointOrigin {
    pub fn code(self) -> u8 {
        match self {
            PointOrigin::Observed => 0,
            PointOrigin::Imagined => 1,
        }
    }

    pub fn from_code(c: u8) -> Option<PointOrigin> {
        match c {
            0 => Some(PointOrigin::Observed),
            1 => Some(PointOrigin::Imagined),
            _ => None,
        }
    }
}

/// Fixed-size labeled point cloud (observed ⊕ imagined).
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPointCloud {
    pub points: Vec<Vec3>,
    pub labels: Vec<PointLabel>,
    pub origins: Vec<PointOrigin>,
}

impl LabeledPointCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Policy input features: xyz + origin flag, one row per point.
    pub fn policy_features(&self) -> Vec<[f64; 4]> {
        self.points
            .iter()
            .zip(&self.origins)
            .map(|(p, o)| [p.x, p.y, p.z, o.code() as f64])
            .collect()
    }
}

/// Pinhole camera: pose maps camera frame to world, looking along -z with
/// +x right and +y up. Vertical FOV, square pixels.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CameraModel {
    pub pose: Pose,
    pub fov_y: f64,
    pub width: usize,
    pub height: usize,
    pub near: f64,
    pub far: f64,
}

impl CameraModel {
    pub fn look_at(
        eye: Vec3,
        target: Vec3,
        fov_y: f64,
        width: usize,
        height: usize,
        near: f64,
        far: f64,
    ) -> CameraModel {
        CameraModel {
            pose: Pose::new(UnitQuat::look_at(eye, target, Vec3::Z), eye),
            fov_y,
            width,
            height,
            near,
            far,
        }
    }

    /// Direction the camera looks along (world frame).
    pub fn optical_axis(&self) -> Vec3 {
        self.pose.rotation.rotate(-Vec3::Z)
    }

    /// World-frame ray through the center of pixel (col, row).
    pub fn pixel_ray(&self, col: usize, row: usize) -> Ray {
        let tan_y = math::tan(self.fov_y * 0.5);
        let aspect = self.width as f64 / self.height as f64;
        let ndc_x = 2.0 * (col as f64 + 0.5) / self.width as f64 - 1.0;
        let ndc_y = 1.0 - 2.0 * (row as f64 + 0.5) / self.height as f64;
        let dir_cam = Vec3::new(ndc_x * tan_y * aspect, ndc_y * tan_y, -1.0);
        let dir = self
            .pose
            .rotation
            .rotate(dir_cam)
            .normalized(1e-12)
            .expect("pixel ray");
        Ray { origin: self.pose.translation, dir }
    }
}

/// One renderable shape with its world pose and segmentation label.
#[derive(Debug, Clone)]
pub struct SceneShape {
    pub kind: ShapeKind,
    pub world_pose: Pose,
    pub label: PointLabel,
}

/// Range image: per-pixel nearest-hit distance (+inf on miss) and the index
/// of the hit shape (-1 on miss).
#[derive(Debug, Clone, PartialEq)]
pub struct DepthImage {
    pub width: usize,
    pub height: usize,
    pub depth: Vec<f64>,
    pub shape_id: Vec<i32>,
}

impl DepthImage {
    pub fn at(&self, col: usize, row: usize) -> (f64, i32) {
        let i = row * self.width + col;
        (self.depth[i], self.shape_id[i])
    }
}

/// Renderable shapes of the object alone, posed by its chain FK.
pub fn collect_object_scene(
    instance: &ArticulatedObjectInstance,
    root_pose: &Pose,
    object_q: &[f64],
) -> Vec<SceneShape> {
    let mut shapes = Vec::new();
    let labels = functional_part_labels(instance);
    for s in &instance.root_shapes {
        shapes.push(SceneShape {
            kind: s.kind,
            world_pose: s.local_pose.then(root_pose),
            label: PointLabel::ObjectRest,
        });
    }
    let mut chain = instance.chain.clone();
    chain.root_pose = *root_pose;
    let object_poses = forward_kinematics(&chain, object_q).expect("object chain");
    for (li, link_shapes) in instance.link_shapes.iter().enumerate() {
        let label = match labels[li] {
            PartLabel::Functional => PointLabel::ObjectFunctional,
            PartLabel::Rest => PointLabel::ObjectRest,
        };
        for s in link_shapes {
            shapes.push(SceneShape {
                kind: s.kind,
                world_pose: s.local_pose.then(&object_poses[li]),
                label,
            });
        }
    }
    shapes
}

/// All renderable shapes for the current state: object (root + links posed by
/// FK) and robot (posed by FK), each tagged with its point label.
pub fn collect_scene(
    model: &RobotModel,
    instance: &ArticulatedObjectInstance,
    state: &SimState,
) -> Vec<SceneShape> {
    let mut shapes = collect_object_scene(instance, &state.object_root, &state.object_q);
    let robot_poses = model.fk(&state.robot.arm_q, &state.robot.hand_q);
    for link in &model.links {
        let label = match link.part {
            RobotPart::Arm => PointLabel::RobotArm,
            _ => PointLabel::RobotHand,
        };
        shapes.push(SceneShape {
            kind: link.shape.kind,
            world_pose: link.shape.local_pose.then(&robot_poses[link.chain_link]),
            label,
        });
    }
    shapes
}

/// Ray-cast a range image: nearest analytic intersection per pixel between
/// the near and far clip.
pub fn render_depth(shapes: &[SceneShape], cam: &CameraModel) -> DepthImage {
    let n = cam.width * cam.height;
    let mut depth = vec![f64::INFINITY; n];
    let mut shape_id = vec![-1i32; n];
    for row in 0..cam.height {
        for col in 0..cam.width {
            let ray = cam.pixel_ray(col, row);
            let mut best = f64::INFINITY;
            let mut best_id = -1i32;
            for (si, shape) in shapes.iter().enumerate() {
                if let Some(t) = ray_intersect(&shape.kind, &shape.world_pose, &ray) {
                    if t >= cam.near && t <= cam.far && t < best {
                        best = t;
                        best_id = si as i32;
                    }
                }
            }
            let i = row * cam.width + col;
            depth[i] = best;
            shape_id[i] = best_id;
        }
    }
    DepthImage { width: cam.width, height: cam.height, depth, shape_id }
}

/// Back-project finite pixels to world points, carrying the hit shape id.
pub fn depth_to_points(img: &DepthImage, cam: &CameraModel) -> Vec<(Vec3, usize)> {
    let mut out = Vec::new();
    for row in 0..img.height {
        for col in 0..img.width {
            let (d, id) = img.at(col, row);
            if d.is_finite() && id >= 0 {
                let ray = cam.pixel_ray(col, row);
                out.push((ray.origin + ray.dir * d, id as usize));
            }
        }
    }
    out
}

/// Axis-aligned workspace crop box.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CropBox {
    pub min: Vec3,
    pub max: Vec3,
}

impl Default for CropBox {
    fn default() -> Self {
        CropBox {
            min: Vec3::new(-0.7, -0.7, -0.01),
            max: Vec3::new(0.7, 0.7, 0.9),
        }
    }
}

impl CropBox {
    pub fn contains(&self, p: Vec3) -> bool {
        p.x >= self.min.x
            && p.x <= self.max.x
            && p.y >= self.min.y
            && p.y <= self.max.y
            && p.z >= self.min.z
            && p.z <= self.max.z
    }

    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }
}

/// Crop to the workspace box and uniformly downsample to exactly `n_o`
/// points. Fewer survivors than `n_o` are padded by resampling with
/// replacement; zero survivors yield box-center sentinels and a raised flag.
pub fn crop_and_downsample<T: Copy>(
    points: &[(Vec3, T)],
    workspace: &CropBox,
    n_o: usize,
    sentinel_tag: T,
    rng: &mut Rng,
) -> (Vec<(Vec3, T)>, bool) {
    debug_assert!(n_o > 0);
    let inside: Vec<&(Vec3, T)> = points.iter().filter(|(p, _)| workspace.contains(*p)).collect();
    if inside.is_empty() {
        return (vec![(workspace.center(), sentinel_tag); n_o], true);
    }
    let mut out = Vec::with_capacity(n_o);
    if inside.len() >= n_o {
        for idx in rng.choose_k(inside.len(), n_o) {
            out.push(*inside[idx]);
        }
    } else {
        out.extend(inside.iter().map(|&&x| x));
        while out.len() < n_o {
            out.push(*inside[rng.below(inside.len())]);
        }
    }
    (out, false)
}

/// Fixed surface-sample pattern over the robot's shapes: per-link quotas
/// proportional to surface area, local points drawn once from `seed` and
/// re-posed by FK every step.
#[derive(Debug, Clone)]
pub struct ImaginedPattern {
    /// (chain link, label, local points) triples.
    samples: Vec<(usize, PointLabel, Vec<Vec3>)>,
    n_total: usize,
}

/// Hand shapes get this multiple of their surface area when imagined-point
/// quotas are assigned; the imagined cloud exists mainly to supply finger
/// and palm detail that the depth camera misses.
const HAND_QUOTA_WEIGHT: f64 = 4.0;

impl ImaginedPattern {
    pub fn build(model: &RobotModel, n_i: usize, seed: u64) -> ImaginedPattern {
        debug_assert!(n_i > 0);
        let areas: Vec<f64> = model
            .links
            .iter()
            .map(|l| {
                let w = if l.part.is_hand() { HAND_QUOTA_WEIGHT } else { 1.0 };
                w * l.shape.surface_area()
            })
            .collect();
        let total: f64 = areas.iter().sum();
        // largest-remainder quota assignment, exact total
        let raw: Vec<f64> = areas.iter().map(|a| a / total * n_i as f64).collect();
        let mut quotas: Vec<usize> = raw.iter().map(|r| math::floor(*r) as usize).collect();
        let mut leftover = n_i - quotas.iter().sum::<usize>();
        let mut order: Vec<usize> = (0..quotas.len()).collect();
        order.sort_by(|&a, &b| {
            let fa = raw[a] - math::floor(raw[a]);
            let fb = raw[b] - math::floor(raw[b]);
            fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
        });
        let mut k = 0;
        while leftover > 0 {
            quotas[order[k % order.len()]] += 1;
            leftover -= 1;
            k += 1;
        }

        let mut samples = Vec::new();
        for (li, link) in model.links.iter().enumerate() {
            if quotas[li] == 0 {
                continue;
            }
            let mut rng = Rng::seed_from(stream_seed_idx(seed, "imagine", li as u64));
            let local = sample_surface(&link.shape.kind, quotas[li], &mut rng)
                .into_iter()
                .map(|p| link.shape.local_pose.transform_point(p))
                .collect();
            let label = match link.part {
                RobotPart::Arm => PointLabel::RobotArm,
                _ => PointLabel::RobotHand,
            };
            samples.push((link.chain_link, label, local));
        }
        ImaginedPattern { samples, n_total: n_i }
    }

    pub fn len(&self) -> usize {
        self.n_total
    }

    pub fn is_empty(&self) -> bool {
        self.n_total == 0
    }

    /// Re-pose the pattern by the robot's current FK.
    pub fn imagine(&self, model: &RobotModel, state: &SimState) -> Vec<(Vec3, PointLabel)> {
        let poses = model.fk(&state.robot.arm_q, &state.robot.hand_q);
        let mut out = Vec::with_capacity(self.n_total);
        for (chain_link, label, local) in &self.samples {
            let pose = &poses[*chain_link];
            for p in local {
                out.push((pose.transform_point(*p), *label));
            }
        }
        out
    }
}

/// Proprioceptive vector: 22 joint positions, palm linear and angular
/// velocity, palm position, palm orientation quaternion — 35 reals.
#[derive(Debug, Clone, PartialEq)]
pub struct Proprio(pub [f64; Proprio::DIM]);

impl Proprio {
    pub const DIM: usize = 35;

    pub fn from_state(model: &RobotModel, state: &SimState) -> Proprio {
        let mut v = [0.0; Self::DIM];
        v[..6].copy_from_slice(&state.robot.arm_q);
        v[6..22].copy_from_slice(&state.robot.hand_q);
        let palm = state.palm_pose(model);
        v[22] = state.robot.palm_lin_vel.x;
        v[23] = state.robot.palm_lin_vel.y;
        v[24] = state.robot.palm_lin_vel.z;
        v[25] = state.robot.palm_ang_vel.x;
        v[26] = state.robot.palm_ang_vel.y;
        v[27] = state.robot.palm_ang_vel.z;
        v[28] = palm.translation.x;
        v[29] = palm.translation.y;
        v[30] = palm.translation.z;
        v[31] = palm.rotation.w;
        v[32] = palm.rotation.x;
        v[33] = palm.rotation.y;
        v[34] = palm.rotation.z;
        debug_assert!(v.iter().all(|x| x.is_finite()));
        Proprio(v)
    }
}

/// Full observation: proprio + fixed-size labeled cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub proprio: Proprio,
    pub cloud: LabeledPointCloud,
}

/// Sensing parameters.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct SensingConfig {
    pub n_observed: usize,
    pub n_imagined: usize,
    pub width: usize,
    pub height: usize,
    /// Vertical field of view (rad).
    pub fov_y: f64,
    pub near: f64,
    pub far: f64,
    pub workspace: CropBox,
}

impl Default for SensingConfig {
    fn default() -> Self {
        SensingConfig {
            n_observed: 512,
            n_imagined: 96,
            width: 128,
            height: 128,
            fov_y: 60.0 * math::PI / 180.0,
            near: 0.05,
            far: 3.0,
            workspace: CropBox::default(),
        }
    }
}

impl SensingConfig {
    pub fn cloud_size(&self) -> usize {
        self.n_observed + self.n_imagined
    }

    pub fn camera(&self, eye: Vec3, target: Vec3) -> CameraModel {
        CameraModel::look_at(eye, target, self.fov_y, self.width, self.height, self.near, self.far)
    }
}

/// Render, crop, downsample, and append imagined points. Deterministic per
/// (state, camera, seed). Returns the observation and the sentinel flag.
pub fn assemble_observation(
    model: &RobotModel,
    instance: &ArticulatedObjectInstance,
    state: &SimState,
    cam: &CameraModel,
    pattern: &ImaginedPattern,
    cfg: &SensingConfig,
    seed: u64,
) -> (Observation, bool) {
    let scene = collect_scene(model, instance, state);
    let img = render_depth(&scene, cam);
    let raw = depth_to_points(&img, cam);
    let labeled: Vec<(Vec3, PointLabel)> =
        raw.into_iter().map(|(p, id)| (p, scene[id].label)).collect();
    let mut rng = Rng::seed_from(seed);
    let (observed, sentinel) = crop_and_downsample(
        &labeled,
        &cfg.workspace,
        cfg.n_observed,
        PointLabel::ObjectRest,
        &mut rng,
    );

    let mut points = Vec::with_capacity(cfg.cloud_size());
    let mut labels = Vec::with_capacity(cfg.cloud_size());
    let mut origins = Vec::with_capacity(cfg.cloud_size());
    for (p, l) in observed {
        points.push(p);
        labels.push(l);
        origins.push(PointOrigin::Observed);
    }
    for (p, l) in pattern.imagine(model, state) {
        points.push(p);
        labels.push(l);
        origins.push(PointOrigin::Imagined);
    }
    debug_assert_eq!(points.len(), cfg.cloud_size());

    (
        Observation {
            proprio: Proprio::from_state(model, state),
            cloud: LabeledPointCloud { points, labels, origins },
        },
        sentinel,
    )
}
