//! Quasi-static robot + articulated-object simulation.
//!
//! The robot is a 6-DoF virtual gantry (3 prismatic + 3 revolute joints whose
//! velocities equal the commanded palm twist) carrying a simplified 4-finger
//! hand (4 revolute joints per finger). Object parts never move under
//! physics; the functional joint advances only through an explicit
//! lever-arm coupling rule while the grasp predicate holds, which keeps every
//! trajectory deterministic.
//!
//! All collision is sphere-proxy vs sphere-proxy, so one distance kernel
//! covers the whole simulator and a brute-force all-pairs oracle stays
//! trivial to write.

use alloc::vec;
use alloc::vec::Vec;

use crate::assets::{functional_part_labels, ArticulatedObjectInstance, Category, PartLabel};
use crate::error::CoreError;
use crate::geometry::{
    forward_kinematics, twist_integrate, JointSpec, KinematicChain, Pose, UnitQuat, Vec3,
};
use crate::rng::Rng;
use crate::shapes::{ProxySphere, ShapePrimitive, SphereProxySet};

/// Controlled degrees of freedom: 6 arm + 16 hand.
pub const ACTION_DIM: usize = 22;
pub const N_ARM_JOINTS: usize = 6;
pub const N_HAND_JOINTS: usize = 16;
pub const N_FINGERS: usize = 4;

/// Simulation parameters. Defaults target stable desk-scale learning.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct SimConfig {
    /// Step length (s).
    pub dt: f64,
    /// First-order hand tracking rate (1/s).
    pub hand_kp: f64,
    /// Hand joint speed limit (rad/s).
    pub hand_qd_max: f64,
    /// Palm linear speed limit (m/s).
    pub palm_v_max: f64,
    /// Palm angular speed limit (rad/s).
    pub palm_w_max: f64,
    /// Proxy-sphere gap at or below which links are in contact (m).
    pub contact_tol: f64,
    /// Penetration accepted without resolution (m).
    pub penetration_tol: f64,
    /// Lever-arm coupling gain.
    pub coupling_gain: f64,
    /// Functional-joint rate limit (rad/s or m/s).
    pub coupling_max_rate: f64,
    /// Proxy spacing bound (m); 0.5 x min finger width.
    pub proxy_spacing: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            dt: 0.05,
            hand_kp: 10.0,
            hand_qd_max: 2.0,
            palm_v_max: 0.5,
            palm_w_max: 1.5,
            contact_tol: 0.002,
            penetration_tol: 0.005,
            coupling_gain: 1.0,
            coupling_max_rate: 2.0,
            proxy_spacing: 0.009,
        }
    }
}

/// Which robot part a collision/render shape belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RobotPart {
    Palm,
    Arm,
    Finger { finger: usize, segment: usize },
}

impl RobotPart {
    pub fn is_hand(self) -> bool {
        !matches!(self, RobotPart::Arm)
    }
}

/// One collidable robot shape bound to a chain link.
#[derive(Debug, Clone)]
pub struct RobotLinkDef {
    pub chain_link: usize,
    pub part: RobotPart,
    pub shape: ShapePrimitive,
    pub proxies: SphereProxySet,
    bound: ProxySphere,
}

/// Fixed robot geometry: gantry limits, hand limits, shapes, proxies.
#[derive(Debug, Clone)]
pub struct RobotModel {
    pub chain: KinematicChain,
    pub links: Vec<RobotLinkDef>,
    pub arm_limits: [[f64; 2]; N_ARM_JOINTS],
    pub hand_limits: [[f64; 2]; N_HAND_JOINTS],
    /// Chain link carrying the palm (and the proprio pose reference).
    pub palm_chain_link: usize,
}

/// Index of hand joint `j` of finger `f` within the 16-vector.
pub fn hand_joint_index(finger: usize, joint: usize) -> usize {
    finger * 4 + joint
}

impl RobotModel {
    /// Build the standard gantry + 4-finger hand.
    pub fn standard(cfg: &SimConfig) -> RobotModel {
        // rotational limits keep palm orientations task-plausible (and well
        // away from the pitch singularity), the way a fixed-base arm's wrist
        // distribution would
        let arm_limits: [[f64; 2]; 6] = [
            [-0.6, 0.6],
            [-0.6, 0.6],
            [0.02, 0.7],
            [-1.6, 1.6], // yaw
            [-1.0, 1.0], // pitch
            [-1.6, 1.6], // roll
        ];
        let abduction = [-0.45, 0.45];
        let flexion = [-0.2, 1.7];
        let mut hand_limits = [[0.0; 2]; 16];
        for f in 0..N_FINGERS {
            hand_limits[hand_joint_index(f, 0)] = abduction;
            for j in 1..4 {
                hand_limits[hand_joint_index(f, j)] = flexion;
            }
        }

        let mut chain = KinematicChain::default();
        // gantry: x, y, z prismatic then yaw(z), pitch(y), roll(x)
        let prism_axes = [Vec3::X, Vec3::Y, Vec3::Z];
        for (i, axis) in prism_axes.iter().enumerate() {
            chain.push_link(
                JointSpec::prismatic(*axis, Pose::IDENTITY, arm_limits[i]),
                if i == 0 { None } else { Some(i - 1) },
            );
        }
        let rev_axes = [Vec3::Z, Vec3::Y, Vec3::X];
        for (i, axis) in rev_axes.iter().enumerate() {
            chain.push_link(
                JointSpec::revolute(*axis, Pose::IDENTITY, arm_limits[3 + i]),
                Some(2 + i),
            );
        }
        let palm_chain_link = 5;

        let palm_half = Vec3::new(0.05, 0.05, 0.015);
        let mut links = Vec::new();
        links.push((
            palm_chain_link,
            RobotPart::Palm,
            ShapePrimitive::cuboid(palm_half, Pose::IDENTITY),
        ));
        // wrist stub extending away from the fingers; offset behind the palm
        // with a clear gap so hand and arm points never blend
        let arm_cap = ShapePrimitive::capsule(
            0.18,
            0.045,
            Pose::new(
                UnitQuat::from_axis_angle(Vec3::X, -core::f64::consts::FRAC_PI_2),
                Vec3::new(0.0, -palm_half.y - 0.05 - 0.18, 0.0),
            ),
        );
        links.push((palm_chain_link, RobotPart::Arm, arm_cap));

        // fingers attach along the +y palm edge and extend +y; flexion about
        // +x curls them toward +z (the grasp side)
        let seg_len = [0.018, 0.045, 0.032, 0.026];
        let finger_r = 0.009;
        let attach_x = [-0.0375, -0.0125, 0.0125, 0.0375];
        for f in 0..N_FINGERS {
            let mut parent = palm_chain_link;
            for s in 0..4 {
                let origin = if s == 0 {
                    Pose::from_translation(Vec3::new(attach_x[f], palm_half.y, 0.0))
                } else {
                    Pose::from_translation(Vec3::new(0.0, seg_len[s - 1], 0.0))
                };
                let axis = if s == 0 { Vec3::Z } else { Vec3::X };
                let limits = hand_limits[hand_joint_index(f, s)];
                let idx = chain.push_link(JointSpec::revolute(axis, origin, limits), Some(parent));
                // capsule along local +y covering the segment
                let cap = ShapePrimitive::capsule(
                    seg_len[s] * 0.5,
                    finger_r,
                    Pose::new(
                        UnitQuat::from_axis_angle(Vec3::X, -core::f64::consts::FRAC_PI_2),
                        Vec3::new(0.0, seg_len[s] * 0.5, 0.0),
                    ),
                );
                links.push((idx, RobotPart::Finger { finger: f, segment: s }, cap));
                parent = idx;
            }
        }

        let links = links
            .into_iter()
            .map(|(chain_link, part, shape)| {
                let proxies = SphereProxySet::for_primitive(&shape, cfg.proxy_spacing);
                let bound = proxies.bounding_sphere();
                RobotLinkDef { chain_link, part, shape, proxies, bound }
            })
            .collect();

        RobotModel { chain, links, arm_limits, hand_limits, palm_chain_link }
    }

    /// Home joint values: palm parked behind the object, hand at mid-range.
    pub fn home_arm_q(&self) -> [f64; N_ARM_JOINTS] {
        [0.0, -0.42, 0.28, 0.0, 0.0, 0.0]
    }

    pub fn home_hand_q(&self) -> [f64; N_HAND_JOINTS] {
        let mut q = [0.0; N_HAND_JOINTS];
        for (i, lim) in self.hand_limits.iter().enumerate() {
            q[i] = 0.5 * (lim[0] + lim[1]);
        }
        q
    }

    /// Joint vector for the full chain (6 arm + 16 hand).
    pub fn chain_q(&self, arm_q: &[f64; 6], hand_q: &[f64; 16]) -> Vec<f64> {
        let mut q = Vec::with_capacity(22);
        q.extend_from_slice(arm_q);
        q.extend_from_slice(hand_q);
        q
    }

    /// World poses for all chain links.
    pub fn fk(&self, arm_q: &[f64; 6], hand_q: &[f64; 16]) -> Vec<Pose> {
        forward_kinematics(&self.chain, &self.chain_q(arm_q, hand_q)).expect("robot chain")
    }

    /// Palm pose for given gantry joints.
    pub fn palm_pose(&self, arm_q: &[f64; 6]) -> Pose {
        Pose {
            rotation: UnitQuat::from_rpy(arm_q[5], arm_q[4], arm_q[3]),
            translation: Vec3::new(arm_q[0], arm_q[1], arm_q[2]),
        }
    }

    /// Gantry joints realizing `pose`, clamped to workspace limits.
    pub fn arm_q_for_pose(&self, pose: &Pose) -> [f64; 6] {
        let (roll, pitch, yaw) = pose.rotation.to_rpy();
        let raw = [
            pose.translation.x,
            pose.translation.y,
            pose.translation.z,
            yaw,
            pitch,
            roll,
        ];
        let mut q = [0.0; 6];
        for i in 0..6 {
            q[i] = raw[i].clamp(self.arm_limits[i][0], self.arm_limits[i][1]);
        }
        q
    }
}

/// Robot joint state plus the last achieved palm twist.
#[derive(Debug, Clone, PartialEq)]
pub struct RobotState {
    pub arm_q: [f64; N_ARM_JOINTS],
    pub hand_q: [f64; N_HAND_JOINTS],
    pub hand_q_target: [f64; N_HAND_JOINTS],
    pub palm_lin_vel: Vec3,
    pub palm_ang_vel: Vec3,
}

/// Full simulation state. The object instance and robot model live outside
/// so states stay cheap to clone and compare.
#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub robot: RobotState,
    /// Object chain root pose (base pose + reset offset + bucket lift).
    pub object_root: Pose,
    pub object_q: Vec<f64>,
    pub lift_height: f64,
    pub step_count: u64,
    pub elapsed: f64,
}

impl SimState {
    pub fn palm_pose(&self, model: &RobotModel) -> Pose {
        model.palm_pose(&self.robot.arm_q)
    }

    /// World grasp point of the object's functional part.
    pub fn grasp_point(&self, instance: &ArticulatedObjectInstance) -> Vec3 {
        instance.grasp_point_world(&self.object_root, &self.object_q)
    }

    /// Functional joint value.
    pub fn functional_q(&self, instance: &ArticulatedObjectInstance) -> f64 {
        self.object_q[instance.functional_joint]
    }
}

/// One resolved contact between a robot link shape and an object part.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Contact {
    /// Index into `RobotModel::links`.
    pub robot_link: usize,
    /// Object chain link, or `None` for the static root body.
    pub object_link: Option<usize>,
    pub point: Vec3,
    /// Outward normal from the object toward the robot.
    pub normal: Vec3,
    /// Penetration depth, >= 0 for reported contacts.
    pub depth: f64,
}

/// Contact summary for one step.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ContactReport {
    pub contacts: Vec<Contact>,
    pub palm_object: bool,
    pub finger_object: [bool; N_FINGERS],
    pub palm_functional: bool,
    pub finger_functional: [bool; N_FINGERS],
}

impl ContactReport {
    /// Grasp predicate: palm plus at least two fingers touch the object.
    pub fn grasp_object(&self) -> bool {
        self.palm_object && self.finger_object.iter().filter(|&&c| c).count() >= 2
    }

    /// Grasp predicate restricted to the functional part.
    pub fn grasp_functional(&self) -> bool {
        self.palm_functional && self.finger_functional.iter().filter(|&&c| c).count() >= 2
    }

    pub fn max_penetration(&self) -> f64 {
        self.contacts.iter().fold(0.0, |m, c| m.max(c.depth))
    }
}

/// Non-fatal diagnostics from one step.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepInfo {
    /// Functional joint (or lift) rate applied this step.
    pub coupling_rate: f64,
    /// Lever arm was degenerate, coupling forced to zero.
    pub coupling_degenerate: bool,
    /// Max penetration left after resolution, if resolution ran.
    pub residual_penetration: f64,
    /// Penetration resolution ran this step.
    pub resolved: bool,
}

/// Deterministic reset: robot at home, object at its annotated pose with a
/// uniform random yaw in ±yaw_range and planar offset in ±xy_range.
pub fn reset(
    model: &RobotModel,
    instance: &ArticulatedObjectInstance,
    yaw_range: f64,
    xy_range: f64,
    seed: u64,
) -> SimState {
    let mut rng = Rng::seed_from(seed);
    let yaw = rng.uniform(-yaw_range, yaw_range);
    let dx = rng.uniform(-xy_range, xy_range);
    let dy = rng.uniform(-xy_range, xy_range);
    // yaw about the object's own vertical axis, then planar offset
    let base = instance.chain.root_pose;
    let object_root = Pose {
        rotation: UnitQuat::from_axis_angle(Vec3::Z, yaw).mul(base.rotation),
        translation: base.translation + Vec3::new(dx, dy, 0.0),
    };
    let hand_q = model.home_hand_q();
    SimState {
        robot: RobotState {
            arm_q: model.home_arm_q(),
            hand_q,
            hand_q_target: hand_q,
            palm_lin_vel: Vec3::ZERO,
            palm_ang_vel: Vec3::ZERO,
        },
        object_root,
        object_q: vec![instance.init_joint_value; instance.n_joints()],
        lift_height: 0.0,
        step_count: 0,
        elapsed: 0.0,
    }
}

/// Precomputed object proxy sets per part; built once per episode.
#[derive(Debug, Clone)]
pub struct ObjectProxies {
    /// (object link or root, proxies, bound), per shape.
    parts: Vec<(Option<usize>, SphereProxySet, ProxySphere)>,
    functional_links: Vec<usize>,
}

impl ObjectProxies {
    pub fn build(instance: &ArticulatedObjectInstance, cfg: &SimConfig) -> ObjectProxies {
        let mut parts = Vec::new();
        for shape in &instance.root_shapes {
            let set = SphereProxySet::for_primitive(shape, cfg.proxy_spacing);
            let bound = set.bounding_sphere();
            parts.push((None, set, bound));
        }
        for (li, shapes) in instance.link_shapes.iter().enumerate() {
            for shape in shapes {
                let set = SphereProxySet::for_primitive(shape, cfg.proxy_spacing);
                let bound = set.bounding_sphere();
                parts.push((Some(li), set, bound));
            }
        }
        let labels = functional_part_labels(instance);
        let functional_links = (0..labels.len())
            .filter(|&i| labels[i] == PartLabel::Functional)
            .collect();
        ObjectProxies { parts, functional_links }
    }

    pub fn is_functional(&self, link: Option<usize>) -> bool {
        match link {
            Some(l) => self.functional_links.contains(&l),
            None => false,
        }
    }
}

fn transform_sphere(pose: &Pose, s: &ProxySphere) -> ProxySphere {
    ProxySphere { center: pose.transform_point(s.center), radius: s.radius }
}

/// Detect robot-object contacts: link pairs whose closest proxy spheres have
/// a surface gap at or below `contact_tol`. One contact (the deepest pair)
/// is reported per (robot link, object part) pair.
pub fn detect_contacts(
    model: &RobotModel,
    instance: &ArticulatedObjectInstance,
    proxies: &ObjectProxies,
    state: &SimState,
    cfg: &SimConfig,
) -> ContactReport {
    let robot_poses = model.fk(&state.robot.arm_q, &state.robot.hand_q);
    let mut object_chain = instance.chain.clone();
    object_chain.root_pose = state.object_root;
    let object_poses = forward_kinematics(&object_chain, &state.object_q).expect("object chain");

    let mut report = ContactReport::default();
    for (ri, rlink) in model.links.iter().enumerate() {
        let rpose = &robot_poses[rlink.chain_link];
        let rbound = transform_sphere(rpose, &rlink.bound);
        for (olink, oset, obound) in &proxies.parts {
            let opose = match olink {
                Some(l) => &object_poses[*l],
                None => &state.object_root,
            };
            let obound_w = transform_sphere(opose, obound);
            // broad phase
            if rbound.center.dist(obound_w.center) - rbound.radius - obound_w.radius
                > cfg.contact_tol
            {
                continue;
            }
            // narrow phase: deepest proxy pair
            let mut best_gap = f64::INFINITY;
            let mut best: Option<(Vec3, Vec3)> = None;
            for rs in &rlink.proxies.spheres {
                let rw = transform_sphere(rpose, rs);
                for os in &oset.spheres {
                    let ow = transform_sphere(opose, os);
                    let d = rw.center.dist(ow.center);
                    let gap = d - rw.radius - ow.radius;
                    if gap < best_gap {
                        best_gap = gap;
                        let n = (rw.center - ow.center).normalized(1e-12).unwrap_or(Vec3::Z);
                        let point = ow.center + n * (ow.radius + gap * 0.5);
                        best = Some((point, n));
                    }
                }
            }
            if best_gap <= cfg.contact_tol {
                let (point, normal) = best.unwrap();
                let depth = (-best_gap).max(0.0);
                report.contacts.push(Contact {
                    robot_link: ri,
                    object_link: *olink,
                    point,
                    normal,
                    depth,
                });
                let functional = proxies.is_functional(*olink);
                match rlink.part {
                    RobotPart::Palm => {
                        report.palm_object = true;
                        if functional {
                            report.palm_functional = true;
                        }
                    }
                    RobotPart::Finger { finger, .. } => {
                        report.finger_object[finger] = true;
                        if functional {
                            report.finger_functional[finger] = true;
                        }
                    }
                    RobotPart::Arm => {}
                }
            }
        }
    }
    report
}

/// Functional-joint velocity from palm motion while the restricted grasp
/// predicate holds. Revolute parts follow the lever-arm rule; the Bucket
/// rises by the palm's upward displacement while hooked.
#[allow(clippy::too_many_arguments)]
pub fn couple_functional_joint(
    instance: &ArticulatedObjectInstance,
    proxies: &ObjectProxies,
    state: &SimState,
    contacts: &ContactReport,
    cfg: &SimConfig,
    v_palm: Vec3,
    palm_dz: f64,
    hand_q: &[f64; N_HAND_JOINTS],
    palm_z: f64,
) -> (f64, bool) {
    if !contacts.grasp_functional() {
        return (0.0, false);
    }

    if instance.category == Category::Bucket {
        // hook condition: palm under the handle bar and >= 2 fingers curled
        let grasp = state.grasp_point(instance);
        let curled = (0..N_FINGERS)
            .filter(|&f| (1..4).map(|j| hand_q[hand_joint_index(f, j)]).sum::<f64>() > 1.0)
            .count();
        if palm_z < grasp.z && curled >= 2 {
            let dh = palm_dz.max(0.0);
            return ((dh / cfg.dt).min(cfg.coupling_max_rate), false);
        }
        return (0.0, false);
    }

    // mean contact point over functional-part contacts
    let mut c = Vec3::ZERO;
    let mut n = 0usize;
    for contact in &contacts.contacts {
        if proxies.is_functional(contact.object_link) {
            c = c + contact.point;
            n += 1;
        }
    }
    if n == 0 {
        return (0.0, false);
    }
    let c = c * (1.0 / n as f64);

    let link = &instance.chain.links[instance.functional_joint];
    // functional joint parent is the root for all templates
    let joint_pose = link.joint.origin.then(&state.object_root);
    let axis = joint_pose.rotation.rotate(link.joint.axis);

    match link.joint.kind {
        crate::geometry::JointKind::Revolute => {
            let p = joint_pose.translation;
            let lever = axis.cross(c - p);
            if lever.norm() < 1e-6 {
                return (0.0, true);
            }
            let omega = cfg.coupling_gain * lever.dot(v_palm) / lever.norm_sq();
            (omega.clamp(-cfg.coupling_max_rate, cfg.coupling_max_rate), false)
        }
        crate::geometry::JointKind::Prismatic => {
            let v = cfg.coupling_gain * axis.dot(v_palm);
            (v.clamp(-cfg.coupling_max_rate, cfg.coupling_max_rate), false)
        }
    }
}

/// Push the palm back along the mean contact normal (and roll the hand
/// joints back toward their previous values) until the worst penetration is
/// within tolerance. Best effort: single pass, <= 8 bisection iterations per
/// phase; the residual is reported, never hidden.
pub fn resolve_penetration(
    model: &RobotModel,
    instance: &ArticulatedObjectInstance,
    proxies: &ObjectProxies,
    state: &SimState,
    cfg: &SimConfig,
    prev_hand_q: &[f64; N_HAND_JOINTS],
) -> (SimState, f64, bool) {
    let report = detect_contacts(model, instance, proxies, state, cfg);
    let pen0 = report.max_penetration();
    if pen0 <= cfg.penetration_tol {
        return (state.clone(), pen0, false);
    }

    let mut normal = Vec3::ZERO;
    for c in &report.contacts {
        normal = normal + c.normal * c.depth;
    }
    let normal = normal.normalized(1e-12).unwrap_or(Vec3::Z);

    let palm0 = state.palm_pose(model);
    let pen_for =
        |s: &SimState| -> f64 { detect_contacts(model, instance, proxies, s, cfg).max_penetration() };
    let with_offset = |base: &SimState, offset: f64| -> SimState {
        let mut s = base.clone();
        let pose = Pose {
            rotation: palm0.rotation,
            translation: palm0.translation + normal * offset,
        };
        s.robot.arm_q = model.arm_q_for_pose(&pose);
        s
    };

    // phase 1: translate the palm out along the mean normal (expand the
    // push distance a few times if the first guess is still penetrating)
    let mut hi = 2.0 * pen0 + cfg.penetration_tol;
    let mut best = with_offset(state, hi);
    let mut best_pen = pen_for(&best);
    for _ in 0..3 {
        if best_pen <= cfg.penetration_tol {
            break;
        }
        hi *= 2.0;
        best = with_offset(state, hi);
        best_pen = pen_for(&best);
    }
    if best_pen <= cfg.penetration_tol {
        // bisect toward the smallest sufficient push
        let (mut lo_s, mut hi_s) = (0.0_f64, hi);
        for _ in 0..8 {
            let mid = 0.5 * (lo_s + hi_s);
            let cand = with_offset(state, mid);
            if pen_for(&cand) <= cfg.penetration_tol {
                hi_s = mid;
                best = cand;
            } else {
                lo_s = mid;
            }
        }
        best_pen = pen_for(&best);
    }

    // phase 2: roll hand joints back toward the previous configuration
    if best_pen > cfg.penetration_tol {
        let target_q = best.robot.hand_q;
        let blend = |t: f64| -> SimState {
            let mut s = best.clone();
            for i in 0..N_HAND_JOINTS {
                s.robot.hand_q[i] = prev_hand_q[i] + t * (target_q[i] - prev_hand_q[i]);
            }
            s
        };
        let full = blend(0.0);
        if pen_for(&full) <= cfg.penetration_tol {
            let (mut lo_t, mut hi_t) = (0.0_f64, 1.0_f64);
            // invariant: blend(lo_t) stays feasible
            for _ in 0..8 {
                let mid = 0.5 * (lo_t + hi_t);
                if pen_for(&blend(mid)) <= cfg.penetration_tol {
                    lo_t = mid;
                } else {
                    hi_t = mid;
                }
            }
            best = blend(lo_t);
        } else {
            best = full;
        }
        best_pen = pen_for(&best);
    }

    // never hand back something worse than the input
    if best_pen > pen0 {
        return (state.clone(), pen0, true);
    }
    (best, best_pen, true)
}

/// Advance one step. Deterministic given (state, action, config).
///
/// Pipeline: clamp + scale action, integrate the palm twist (workspace
/// clamped), track hand targets, detect contacts, couple the functional
/// joint under the grasp predicate, resolve penetrations, re-detect for the
/// final report.
pub fn step(
    model: &RobotModel,
    instance: &ArticulatedObjectInstance,
    proxies: &ObjectProxies,
    state: &SimState,
    action: &[f64],
    cfg: &SimConfig,
) -> Result<(SimState, ContactReport, StepInfo), CoreError> {
    step_gated(model, instance, proxies, state, action, cfg, true)
}

/// [`step`] with an external coupling gate. The episode loop passes its
/// latched stage here so object parts can only move on stage-3 steps.
pub fn step_gated(
    model: &RobotModel,
    instance: &ArticulatedObjectInstance,
    proxies: &ObjectProxies,
    state: &SimState,
    action: &[f64],
    cfg: &SimConfig,
    allow_coupling: bool,
) -> Result<(SimState, ContactReport, StepInfo), CoreError> {
    if action.len() != ACTION_DIM {
        return Err(CoreError::InvalidConfig(alloc::format!(
            "action length {} != {ACTION_DIM}",
            action.len()
        )));
    }
    if action.iter().any(|a| !a.is_finite()) {
        return Err(CoreError::NonFinite("action"));
    }

    let mut next = state.clone();
    let prev_hand_q = state.robot.hand_q;

    // scale to controller ranges
    let a: Vec<f64> = action.iter().map(|x| x.clamp(-1.0, 1.0)).collect();
    let v_cmd = Vec3::new(a[0], a[1], a[2]) * cfg.palm_v_max;
    let w_cmd = Vec3::new(a[3], a[4], a[5]) * cfg.palm_w_max;

    // palm twist integration through the gantry joints
    let palm0 = state.palm_pose(model);
    let target = twist_integrate(&palm0, v_cmd, w_cmd, cfg.dt);
    next.robot.arm_q = model.arm_q_for_pose(&target);
    let palm1 = next.palm_pose(model);
    next.robot.palm_lin_vel = (palm1.translation - palm0.translation) * (1.0 / cfg.dt);
    next.robot.palm_ang_vel =
        palm1.rotation.mul(palm0.rotation.conjugate()).to_scaled_axis() * (1.0 / cfg.dt);

    // hand: first-order tracking toward position targets
    for i in 0..N_HAND_JOINTS {
        let lim = model.hand_limits[i];
        let tgt = lim[0] + 0.5 * (a[6 + i] + 1.0) * (lim[1] - lim[0]);
        next.robot.hand_q_target[i] = tgt;
        let qd =
            (cfg.hand_kp * (tgt - next.robot.hand_q[i])).clamp(-cfg.hand_qd_max, cfg.hand_qd_max);
        next.robot.hand_q[i] = (next.robot.hand_q[i] + qd * cfg.dt).clamp(lim[0], lim[1]);
    }

    // contacts on the moved robot
    let mut report = detect_contacts(model, instance, proxies, &next, cfg);

    // functional-joint coupling under the grasp predicate
    let mut info = StepInfo::default();
    let palm_dz = palm1.translation.z - palm0.translation.z;
    let (rate, degenerate) = if allow_coupling {
        couple_functional_joint(
            instance,
            proxies,
            &next,
            &report,
            cfg,
            next.robot.palm_lin_vel,
            palm_dz,
            &next.robot.hand_q,
            palm1.translation.z,
        )
    } else {
        (0.0, false)
    };
    info.coupling_rate = rate;
    info.coupling_degenerate = degenerate;
    if rate != 0.0 {
        if instance.category == Category::Bucket {
            let dh = rate * cfg.dt;
            next.lift_height += dh;
            next.object_root.translation.z += dh;
        } else {
            let fj = instance.functional_joint;
            let lim = instance.chain.links[fj].joint.limits;
            next.object_q[fj] = (next.object_q[fj] + rate * cfg.dt).clamp(lim[0], lim[1]);
        }
        report = detect_contacts(model, instance, proxies, &next, cfg);
    }

    // penetration resolution
    if report.max_penetration() > cfg.penetration_tol {
        let (resolved, residual, ran) =
            resolve_penetration(model, instance, proxies, &next, cfg, &prev_hand_q);
        next = resolved;
        info.residual_penetration = residual;
        info.resolved = ran;
        report = detect_contacts(model, instance, proxies, &next, cfg);
    }

    next.step_count += 1;
    next.elapsed += cfg.dt;
    Ok((next, report, info))
}
