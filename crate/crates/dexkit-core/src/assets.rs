//! Procedural articulated-object generation.
//!
//! Each category is a template over primitive shapes with one functional
//! joint: randomized dimensions, joint placement, and overall scale give the
//! geometric diversity; the kinematic topology is fixed per category. Unseen
//! objects come from the same templates with disjoint seeds and ranges
//! widened by 15% to create a measurable distribution shift.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::CoreError;
use crate::geometry::{
    forward_kinematics, JointSpec, KinematicChain, Pose, UnitQuat, Vec3,
};
use crate::rng::{stream_seed_idx, Rng};
use crate::shapes::ShapePrimitive;

/// Object categories. The first four carry manipulation tasks; the rest are
/// distractor templates used only by the isolated-object dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Category {
    Faucet,
    Bucket,
    Laptop,
    Toilet,
    Cabinet,
    Door,
    Trashcan,
    Stapler,
}

impl Category {
    pub const TASKS: [Category; 4] =
        [Category::Faucet, Category::Bucket, Category::Laptop, Category::Toilet];

    pub const ALL: [Category; 8] = [
        Category::Faucet,
        Category::Bucket,
        Category::Laptop,
        Category::Toilet,
        Category::Cabinet,
        Category::Door,
        Category::Trashcan,
        Category::Stapler,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Category::Faucet => "faucet",
            Category::Bucket => "bucket",
            Category::Laptop => "laptop",
            Category::Toilet => "toilet",
            Category::Cabinet => "cabinet",
            Category::Door => "door",
            Category::Trashcan => "trashcan",
            Category::Stapler => "stapler",
        }
    }

    pub fn from_name(s: &str) -> Option<Category> {
        Category::ALL.iter().copied().find(|c| c.name() == s)
    }

    /// Stable class index for classification pre-training.
    pub fn class_index(self) -> usize {
        Category::ALL.iter().position(|&c| c == self).unwrap()
    }

    /// Default all/seen/unseen object counts per category.
    pub fn default_counts(self) -> (usize, usize, usize) {
        match self {
            Category::Faucet => (18, 11, 7),
            Category::Bucket => (19, 11, 8),
            Category::Laptop => (17, 11, 6),
            Category::Toilet => (28, 17, 11),
            // distractors are dataset-only; no unseen split needed
            _ => (8, 8, 0),
        }
    }
}

/// Seen/unseen split tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Split {
    Seen,
    Unseen,
}

/// Per-link part label relative to the functional joint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PartLabel {
    Functional,
    Rest,
}

/// Parameter ranges for one category. Any sample stays within these ranges
/// (widened by `unseen_widen` for the unseen split) and yields a grasp point
/// inside the robot workspace.
#[derive(Debug, Clone)]
pub struct CategoryTemplate {
    pub category: Category,
    pub ranges: Vec<(&'static str, [f64; 2])>,
    pub scale_range: [f64; 2],
    pub init_joint_range: [f64; 2],
    pub unseen_widen: f64,
}

impl CategoryTemplate {
    pub fn for_category(category: Category) -> CategoryTemplate {
        let (ranges, scale_range, init_joint_range): (Vec<(&str, [f64; 2])>, _, _) =
            match category {
                Category::Faucet => (
                    vec![
                        ("body_radius", [0.040, 0.070]),
                        ("body_half_h", [0.080, 0.140]),
                        ("handle_half_len", [0.050, 0.090]),
                        ("handle_radius", [0.012, 0.020]),
                    ],
                    [0.90, 1.15],
                    [0.0, 0.0],
                ),
                Category::Bucket => (
                    vec![
                        ("body_radius", [0.070, 0.110]),
                        ("body_half_h", [0.090, 0.130]),
                        ("handle_height", [0.060, 0.100]),
                        ("handle_radius", [0.008, 0.013]),
                    ],
                    [0.90, 1.15],
                    [0.0, 0.0],
                ),
                Category::Laptop => (
                    vec![
                        ("base_half_x", [0.100, 0.160]),
                        ("base_half_y", [0.080, 0.120]),
                        ("base_half_z", [0.008, 0.015]),
                        ("lid_half_y", [0.090, 0.130]),
                    ],
                    [0.90, 1.15],
                    [0.15, 0.35],
                ),
                Category::Toilet => (
                    vec![
                        ("body_half_x", [0.120, 0.180]),
                        ("body_half_y", [0.100, 0.150]),
                        ("body_half_z", [0.060, 0.100]),
                        ("lid_half_z", [0.010, 0.020]),
                    ],
                    [0.90, 1.15],
                    [0.05, 0.20],
                ),
                Category::Cabinet => (
                    vec![
                        ("body_half_x", [0.100, 0.160]),
                        ("body_half_y", [0.090, 0.140]),
                        ("body_half_z", [0.100, 0.180]),
                        ("drawer_travel", [0.080, 0.140]),
                    ],
                    [0.90, 1.15],
                    [0.0, 0.05],
                ),
                Category::Door => (
                    vec![
                        ("panel_half_x", [0.080, 0.140]),
                        ("panel_half_z", [0.180, 0.280]),
                        ("panel_half_y", [0.008, 0.015]),
                        ("frame_width", [0.020, 0.035]),
                    ],
                    [0.90, 1.15],
                    [0.0, 0.3],
                ),
                Category::Trashcan => (
                    vec![
                        ("body_radius", [0.060, 0.100]),
                        ("body_half_h", [0.110, 0.170]),
                        ("lid_half_z", [0.006, 0.012]),
                        ("lid_radius_pad", [0.004, 0.010]),
                    ],
                    [0.90, 1.15],
                    [0.0, 0.15],
                ),
                Category::Stapler => (
                    vec![
                        ("base_half_x", [0.020, 0.030]),
                        ("base_half_y", [0.060, 0.095]),
                        ("base_half_z", [0.008, 0.014]),
                        ("arm_half_z", [0.007, 0.012]),
                    ],
                    [0.90, 1.15],
                    [0.05, 0.35],
                ),
            };
        CategoryTemplate {
            category,
            ranges,
            scale_range,
            init_joint_range,
            unseen_widen: 0.15,
        }
    }

    fn range_for(&self, name: &str, split: Split) -> [f64; 2] {
        let base = self
            .ranges
            .iter()
            .find(|(n, _)| *n == name)
            .unwrap_or_else(|| panic!("unknown template parameter {name}"))
            .1;
        match split {
            Split::Seen => base,
            Split::Unseen => {
                let mid = 0.5 * (base[0] + base[1]);
                let half = 0.5 * (base[1] - base[0]) * (1.0 + self.unseen_widen);
                [(mid - half).max(base[0] * 0.5).max(1e-4), mid + half]
            }
        }
    }
}

/// A generated object: primitive shapes on a one-functional-joint chain,
/// with its annotated grasp point and split tag.
#[derive(Debug, Clone)]
pub struct ArticulatedObjectInstance {
    pub id: u32,
    pub category: Category,
    pub split: Split,
    pub generation_seed: u64,
    /// Chain root pose is the annotated base pose (before reset
    /// randomization).
    pub chain: KinematicChain,
    /// Shapes rigidly attached to the chain root (the static body).
    pub root_shapes: Vec<ShapePrimitive>,
    /// Shapes per chain link.
    pub link_shapes: Vec<Vec<ShapePrimitive>>,
    /// Index of the functional joint (= its link) in the chain.
    pub functional_joint: usize,
    /// Link the grasp point is annotated on.
    pub grasp_link: usize,
    /// Grasp point in the grasp link's frame; lies on a shape surface.
    pub grasp_point_local: Vec3,
    pub init_joint_value: f64,
    /// Bucket only: success lift height (m). Zero for other categories.
    pub lift_target_height: f64,
    /// Resolved template parameters (after scale), for the manifest.
    pub params: Vec<(String, f64)>,
}

impl ArticulatedObjectInstance {
    pub fn n_joints(&self) -> usize {
        self.chain.links.len()
    }

    /// World grasp point for joint values `q` with the chain root at
    /// `root_pose`.
    pub fn grasp_point_world(&self, root_pose: &Pose, q: &[f64]) -> Vec3 {
        let mut chain = self.chain.clone();
        chain.root_pose = *root_pose;
        let poses = forward_kinematics(&chain, q).expect("joint count");
        poses[self.grasp_link].transform_point(self.grasp_point_local)
    }

    pub fn functional_joint_limits(&self) -> [f64; 2] {
        self.chain.links[self.functional_joint].joint.limits
    }
}

/// Per-link functional/rest labels (index = chain link id). Links at or
/// downstream of the functional joint are functional; root shapes are rest.
pub fn functional_part_labels(instance: &ArticulatedObjectInstance) -> Vec<PartLabel> {
    let n = instance.chain.links.len();
    let mut labels = vec![PartLabel::Rest; n];
    labels[instance.functional_joint] = PartLabel::Functional;
    for i in 0..n {
        if let Some(p) = instance.chain.links[i].parent {
            if labels[p] == PartLabel::Functional {
                labels[i] = PartLabel::Functional;
            }
        }
    }
    labels
}

/// Deterministically generate one object from its template and seed.
pub fn generate_object(
    template: &CategoryTemplate,
    seed: u64,
    split: Split,
) -> ArticulatedObjectInstance {
    let mut rng = Rng::seed_from(seed);
    let scale = rng.uniform(template.scale_range[0], template.scale_range[1]);
    let mut params: Vec<(String, f64)> = Vec::new();
    let mut sample = |name: &str, params: &mut Vec<(String, f64)>| -> f64 {
        let r = template.range_for(name, split);
        let v = rng.uniform(r[0], r[1]) * scale;
        params.push((String::from(name), v));
        v
    };

    let mut chain = KinematicChain::default();
    let mut root_shapes = Vec::new();
    let mut link_shapes: Vec<Vec<ShapePrimitive>> = Vec::new();
    let grasp_link;
    let grasp_point_local;
    let mut lift_target_height = 0.0;

    match template.category {
        Category::Faucet => {
            let body_r = sample("body_radius", &mut params);
            let body_h = sample("body_half_h", &mut params);
            let handle_l = sample("handle_half_len", &mut params);
            let handle_r = sample("handle_radius", &mut params);
            chain.root_pose = Pose::from_translation(Vec3::new(0.0, 0.0, body_h));
            root_shapes.push(ShapePrimitive::cylinder(body_h, body_r, Pose::IDENTITY));
            // handle pivots about z on top of the body
            let joint_origin = Pose::from_translation(Vec3::new(0.0, 0.0, body_h + 0.02));
            chain.push_link(JointSpec::revolute(Vec3::Z, joint_origin, [0.0, 1.9]), None);
            // capsule along +x: local z axis rotated onto x
            let cap_pose = Pose::new(
                UnitQuat::from_axis_angle(Vec3::Y, core::f64::consts::FRAC_PI_2),
                Vec3::new(handle_l, 0.0, 0.0),
            );
            link_shapes.push(vec![ShapePrimitive::capsule(handle_l, handle_r, cap_pose)]);
            grasp_link = 0;
            grasp_point_local = Vec3::new(handle_l, 0.0, handle_r);
        }
        Category::Bucket => {
            let body_r = sample("body_radius", &mut params);
            let body_h = sample("body_half_h", &mut params);
            let handle_h = sample("handle_height", &mut params);
            let handle_r = sample("handle_radius", &mut params);
            chain.root_pose = Pose::from_translation(Vec3::new(0.0, 0.0, body_h));
            root_shapes.push(ShapePrimitive::cylinder(body_h, body_r, Pose::IDENTITY));
            // handle bar pivots about x at the rim
            let joint_origin = Pose::from_translation(Vec3::new(0.0, 0.0, body_h));
            chain.push_link(JointSpec::revolute(Vec3::X, joint_origin, [-0.5, 0.5]), None);
            let bar_pose = Pose::new(
                UnitQuat::from_axis_angle(Vec3::Y, core::f64::consts::FRAC_PI_2),
                Vec3::new(0.0, 0.0, handle_h),
            );
            link_shapes.push(vec![ShapePrimitive::capsule(body_r * 0.9, handle_r, bar_pose)]);
            grasp_link = 0;
            grasp_point_local = Vec3::new(0.0, 0.0, handle_h - handle_r);
            lift_target_height = 0.20;
        }
        Category::Laptop => {
            let base_x = sample("base_half_x", &mut params);
            let base_y = sample("base_half_y", &mut params);
            let base_z = sample("base_half_z", &mut params);
            let lid_y = sample("lid_half_y", &mut params);
            let lid_z = 0.006 * scale;
            chain.root_pose = Pose::from_translation(Vec3::new(0.0, 0.0, base_z));
            root_shapes.push(ShapePrimitive::cuboid(
                Vec3::new(base_x, base_y, base_z),
                Pose::IDENTITY,
            ));
            // hinge along the back top edge; opening lifts the lid
            let joint_origin = Pose::from_translation(Vec3::new(0.0, base_y, base_z));
            chain.push_link(JointSpec::revolute(-Vec3::X, joint_origin, [0.0, 2.0]), None);
            let lid_pose = Pose::from_translation(Vec3::new(0.0, -lid_y, lid_z));
            link_shapes.push(vec![ShapePrimitive::cuboid(
                Vec3::new(base_x, lid_y, lid_z),
                lid_pose,
            )]);
            grasp_link = 0;
            // middle of the lid front edge, on the face surface
            grasp_point_local = Vec3::new(0.0, -2.0 * lid_y, lid_z);
        }
        Category::Toilet => {
            let body_x = sample("body_half_x", &mut params);
            let body_y = sample("body_half_y", &mut params);
            let body_z = sample("body_half_z", &mut params);
            let lid_z = sample("lid_half_z", &mut params);
            chain.root_pose = Pose::from_translation(Vec3::new(0.0, 0.0, body_z));
            root_shapes.push(ShapePrimitive::cuboid(
                Vec3::new(body_x, body_y, body_z),
                Pose::IDENTITY,
            ));
            let joint_origin = Pose::from_translation(Vec3::new(0.0, body_y, body_z));
            chain.push_link(JointSpec::revolute(-Vec3::X, joint_origin, [0.0, 1.9]), None);
            let lid_y = body_y * 0.95;
            let lid_pose = Pose::from_translation(Vec3::new(0.0, -lid_y, lid_z));
            link_shapes.push(vec![ShapePrimitive::cuboid(
                Vec3::new(body_x * 0.9, lid_y, lid_z),
                lid_pose,
            )]);
            grasp_link = 0;
            grasp_point_local = Vec3::new(0.0, -2.0 * lid_y, lid_z);
        }
        Category::Cabinet => {
            let body_x = sample("body_half_x", &mut params);
            let body_y = sample("body_half_y", &mut params);
            let body_z = sample("body_half_z", &mut params);
            let travel = sample("drawer_travel", &mut params);
            chain.root_pose = Pose::from_translation(Vec3::new(0.0, 0.0, body_z));
            root_shapes.push(ShapePrimitive::cuboid(
                Vec3::new(body_x, body_y, body_z),
                Pose::IDENTITY,
            ));
            let joint_origin = Pose::from_translation(Vec3::new(0.0, 0.0, body_z * 0.4));
            chain.push_link(
                JointSpec::prismatic(-Vec3::Y, joint_origin, [0.0, travel]),
                None,
            );
            let drawer_pose = Pose::from_translation(Vec3::new(0.0, -body_y, 0.0));
            link_shapes.push(vec![ShapePrimitive::cuboid(
                Vec3::new(body_x * 0.85, body_y * 0.25, body_z * 0.25),
                drawer_pose,
            )]);
            grasp_link = 0;
            grasp_point_local = Vec3::new(0.0, -body_y - body_y * 0.25, 0.0);
        }
        Category::Door => {
            let panel_x = sample("panel_half_x", &mut params);
            let panel_z = sample("panel_half_z", &mut params);
            let panel_y = sample("panel_half_y", &mut params);
            let frame_w = sample("frame_width", &mut params);
            chain.root_pose = Pose::from_translation(Vec3::new(0.0, 0.0, panel_z));
            // frame post the panel hinges on
            root_shapes.push(ShapePrimitive::cuboid(
                Vec3::new(frame_w, frame_w, panel_z),
                Pose::from_translation(Vec3::new(-panel_x - frame_w, 0.0, 0.0)),
            ));
            let joint_origin = Pose::from_translation(Vec3::new(-panel_x, 0.0, 0.0));
            chain.push_link(JointSpec::revolute(Vec3::Z, joint_origin, [0.0, 1.6]), None);
            let panel_pose = Pose::from_translation(Vec3::new(panel_x, 0.0, 0.0));
            link_shapes.push(vec![ShapePrimitive::cuboid(
                Vec3::new(panel_x, panel_y, panel_z),
                panel_pose,
            )]);
            grasp_link = 0;
            grasp_point_local = Vec3::new(panel_x * 1.7, -panel_y, 0.0);
        }
        Category::Trashcan => {
            let body_r = sample("body_radius", &mut params);
            let body_h = sample("body_half_h", &mut params);
            let lid_z = sample("lid_half_z", &mut params);
            let lid_pad = sample("lid_radius_pad", &mut params);
            chain.root_pose = Pose::from_translation(Vec3::new(0.0, 0.0, body_h));
            root_shapes.push(ShapePrimitive::cylinder(body_h, body_r, Pose::IDENTITY));
            let joint_origin = Pose::from_translation(Vec3::new(0.0, body_r, body_h));
            chain.push_link(JointSpec::revolute(-Vec3::X, joint_origin, [0.0, 1.9]), None);
            let lid_pose = Pose::from_translation(Vec3::new(0.0, -body_r, lid_z));
            link_shapes.push(vec![ShapePrimitive::cylinder(lid_z, body_r + lid_pad, lid_pose)]);
            grasp_link = 0;
            // front rim of the lid disc
            grasp_point_local = Vec3::new(0.0, -(2.0 * body_r + lid_pad), lid_z);
        }
        Category::Stapler => {
            let base_x = sample("base_half_x", &mut params);
            let base_y = sample("base_half_y", &mut params);
            let base_z = sample("base_half_z", &mut params);
            let arm_z = sample("arm_half_z", &mut params);
            chain.root_pose = Pose::from_translation(Vec3::new(0.0, 0.0, base_z));
            root_shapes.push(ShapePrimitive::cuboid(
                Vec3::new(base_x, base_y, base_z),
                Pose::IDENTITY,
            ));
            let joint_origin = Pose::from_translation(Vec3::new(0.0, base_y, base_z));
            chain.push_link(JointSpec::revolute(-Vec3::X, joint_origin, [0.0, 1.2]), None);
            let arm_pose = Pose::from_translation(Vec3::new(0.0, -base_y, arm_z));
            link_shapes.push(vec![ShapePrimitive::cuboid(
                Vec3::new(base_x, base_y, arm_z),
                arm_pose,
            )]);
            grasp_link = 0;
            grasp_point_local = Vec3::new(0.0, -2.0 * base_y, arm_z);
        }
    }

    let init_joint_value =
        rng.uniform(template.init_joint_range[0], template.init_joint_range[1]);
    params.push((String::from("scale"), scale));
    params.push((String::from("init_joint_value"), init_joint_value));

    let instance = ArticulatedObjectInstance {
        id: 0,
        category: template.category,
        split,
        generation_seed: seed,
        chain,
        root_shapes,
        link_shapes,
        functional_joint: 0,
        grasp_link,
        grasp_point_local,
        init_joint_value,
        lift_target_height,
        params,
    };
    debug_assert!(grasp_point_in_workspace(&instance));
    instance
}

fn grasp_point_in_workspace(instance: &ArticulatedObjectInstance) -> bool {
    let q = vec![instance.init_joint_value; instance.n_joints()];
    let g = instance.grasp_point_world(&instance.chain.root_pose, &q);
    g.x.abs() < 0.6 && g.y.abs() < 0.6 && g.z > 0.0 && g.z < 0.8
}

/// One manifest entry.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SplitEntry {
    pub id: u32,
    pub seed: u64,
    pub split: Split,
}

/// Seed-deterministic object roster for one category.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SplitManifest {
    pub category: Category,
    pub objects: Vec<SplitEntry>,
}

impl SplitManifest {
    pub fn counts(&self) -> (usize, usize, usize) {
        let seen = self.objects.iter().filter(|o| o.split == Split::Seen).count();
        let unseen = self.objects.len() - seen;
        (self.objects.len(), seen, unseen)
    }

    pub fn entries(&self, split: Split) -> impl Iterator<Item = &SplitEntry> {
        self.objects.iter().filter(move |o| o.split == split)
    }

    /// Instantiate one entry.
    pub fn build_object(
        &self,
        entry: &SplitEntry,
        template: &CategoryTemplate,
    ) -> ArticulatedObjectInstance {
        let mut obj = generate_object(template, entry.seed, entry.split);
        obj.id = entry.id;
        obj
    }
}

/// Build a split manifest with exact counts and disjoint ids/seeds.
pub fn generate_split(
    template: &CategoryTemplate,
    n_all: usize,
    n_seen: usize,
    n_unseen: usize,
    seed: u64,
) -> Result<SplitManifest, CoreError> {
    if n_seen + n_unseen != n_all {
        return Err(CoreError::InvalidConfig(format!(
            "split counts {n_seen}+{n_unseen} != {n_all}"
        )));
    }
    let mut objects = Vec::with_capacity(n_all);
    for i in 0..n_all {
        let split = if i < n_seen { Split::Seen } else { Split::Unseen };
        objects.push(SplitEntry {
            id: i as u32,
            seed: stream_seed_idx(seed, template.category.name(), i as u64),
            split,
        });
    }
    Ok(SplitManifest { category: template.category, objects })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_deterministic() {
        let t = CategoryTemplate::for_category(Category::Faucet);
        let a = generate_object(&t, 42, Split::Seen);
        let b = generate_object(&t, 42, Split::Seen);
        assert_eq!(a.params, b.params);
        assert_eq!(a.chain, b.chain);
        assert_eq!(a.grasp_point_local, b.grasp_point_local);
    }

    #[test]
    fn faucet_handle_lengths_within_range() {
        let t = CategoryTemplate::for_category(Category::Faucet);
        let range = t.range_for("handle_half_len", Split::Seen);
        let scale = t.scale_range;
        for seed in 0..1000u64 {
            let obj = generate_object(&t, seed, Split::Seen);
            let v = obj.params.iter().find(|(n, _)| n == "handle_half_len").unwrap().1;
            assert!(
                v >= range[0] * scale[0] - 1e-12 && v <= range[1] * scale[1] + 1e-12,
                "{v} out of {range:?} x {scale:?}"
            );
        }
    }

    #[test]
    fn laptop_closed_lid_coplanar_with_base_top() {
        let t = CategoryTemplate::for_category(Category::Laptop);
        for seed in [1u64, 7, 99] {
            let obj = generate_object(&t, seed, Split::Seen);
            let poses = forward_kinematics(&obj.chain, &vec![0.0; obj.n_joints()]).unwrap();
            let base_z = obj.params.iter().find(|(n, _)| n == "base_half_z").unwrap().1;
            let base_top = 2.0 * base_z;
            // lid box: local pose z = lid_z, half-extent z = lid_z -> bottom at 0
            let lid = &obj.link_shapes[0][0];
            let lid_half_z = match lid.kind {
                crate::shapes::ShapeKind::Box { half_extents } => half_extents.z,
                _ => panic!("laptop lid should be a box"),
            };
            let lid_center = poses[0].transform_point(lid.local_pose.translation);
            let lid_bottom = lid_center.z - lid_half_z;
            assert!(
                (lid_bottom - base_top).abs() < 1e-6,
                "lid bottom {lid_bottom} vs base top {base_top}"
            );
        }
    }

    #[test]
    fn every_instance_has_functional_and_rest() {
        for cat in Category::ALL {
            let t = CategoryTemplate::for_category(cat);
            let n = if cat == Category::Faucet { 1000 } else { 50 };
            for seed in 0..n {
                let obj = generate_object(&t, seed, Split::Seen);
                let labels = functional_part_labels(&obj);
                assert!(labels.contains(&PartLabel::Functional), "{cat:?}");
                assert!(!obj.root_shapes.is_empty(), "{cat:?} needs a rest body");
                assert!(obj.chain.links.len() == labels.len());
            }
        }
    }

    #[test]
    fn grasp_point_on_functional_surface() {
        use crate::shapes::signed_distance;
        for cat in Category::ALL {
            let t = CategoryTemplate::for_category(cat);
            for seed in 0..50u64 {
                let obj = generate_object(&t, seed, Split::Seen);
                // distance from grasp point to nearest functional-link shape
                let mut best = f64::INFINITY;
                for shape in &obj.link_shapes[obj.grasp_link] {
                    let local = shape.local_pose.inverse().transform_point(obj.grasp_point_local);
                    best = best.min(signed_distance(&shape.kind, local).abs());
                }
                assert!(best < 1e-6, "{cat:?} seed {seed}: grasp {best} off surface");
            }
        }
    }

    #[test]
    fn split_counts_match_defaults() {
        let expected = [
            (Category::Faucet, (18, 11, 7)),
            (Category::Bucket, (19, 11, 8)),
            (Category::Laptop, (17, 11, 6)),
            (Category::Toilet, (28, 17, 11)),
        ];
        for (cat, (all, seen, unseen)) in expected {
            let t = CategoryTemplate::for_category(cat);
            let (a, s, u) = cat.default_counts();
            assert_eq!((a, s, u), (all, seen, unseen));
            let m = generate_split(&t, a, s, u, 7).unwrap();
            assert_eq!(m.counts(), (all, seen, unseen));
            // disjoint ids
            let mut ids: Vec<u32> = m.objects.iter().map(|o| o.id).collect();
            ids.sort_unstable();
            ids.dedup();
            assert_eq!(ids.len(), all);
        }
    }

    #[test]
    fn split_count_mismatch_rejected() {
        let t = CategoryTemplate::for_category(Category::Faucet);
        assert!(generate_split(&t, 10, 5, 6, 1).is_err());
    }

    #[test]
    fn all_seen_when_no_unseen() {
        let t = CategoryTemplate::for_category(Category::Laptop);
        let m = generate_split(&t, 5, 5, 0, 3).unwrap();
        assert!(m.objects.iter().all(|o| o.split == Split::Seen));
        assert_eq!(m.entries(Split::Unseen).count(), 0);
    }

    #[test]
    fn topology_consistent_per_category() {
        for cat in Category::ALL {
            let t = CategoryTemplate::for_category(cat);
            let a = generate_object(&t, 0, Split::Seen);
            for seed in 1..30u64 {
                let b = generate_object(&t, seed, Split::Unseen);
                assert_eq!(a.chain.links.len(), b.chain.links.len());
                for (la, lb) in a.chain.links.iter().zip(&b.chain.links) {
                    assert_eq!(la.joint.kind, lb.joint.kind);
                    assert_eq!(la.parent, lb.parent);
                }
            }
        }
    }
}
