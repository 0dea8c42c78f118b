//! Vectors, unit quaternions, rigid poses, joint chains, forward kinematics.
//!
//! Conventions: right-handed world frame with z up, lengths in meters,
//! angles in radians. Orientation is quaternion-only; quaternions are
//! renormalized after every composition.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::CoreError;
use crate::math;

/// 3-vector (position in meters, or unitless direction).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 0.0 };
    pub const X: Vec3 = Vec3 { x: 1.0, y: 0.0, z: 0.0 };
    pub const Y: Vec3 = Vec3 { x: 0.0, y: 1.0, z: 0.0 };
    pub const Z: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 1.0 };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        math::sqrt(self.norm_sq())
    }

    /// Unit vector in the same direction; `None` when shorter than `eps`.
    pub fn normalized(self, eps: f64) -> Option<Vec3> {
        let n = self.norm();
        if n < eps {
            None
        } else {
            Some(self * (1.0 / n))
        }
    }

    pub fn dist(self, o: Vec3) -> f64 {
        (self - o).norm()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

impl core::ops::Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl core::ops::Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl core::ops::Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl core::ops::Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

/// Unit quaternion (w, x, y, z). Norm is kept at 1 within 1e-9 by
/// renormalizing after every composition.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct UnitQuat {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Default for UnitQuat {
    fn default() -> Self {
        UnitQuat::IDENTITY
    }
}

impl UnitQuat {
    pub const IDENTITY: UnitQuat = UnitQuat { w: 1.0, x: 0.0, y: 0.0, z: 0.0 };

    /// Rotation of `angle` radians about `axis` (normalized internally).
    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Self {
        let a = axis.normalized(1e-12).unwrap_or(Vec3::Z);
        let (s, c) = (math::sin(angle * 0.5), math::cos(angle * 0.5));
        UnitQuat { w: c, x: a.x * s, y: a.y * s, z: a.z * s }
    }

    /// Exponential map of a rotation vector (axis * angle). Small-angle safe.
    pub fn from_scaled_axis(v: Vec3) -> Self {
        let angle = v.norm();
        if angle < 1e-12 {
            // first-order expansion keeps the map smooth through zero
            UnitQuat { w: 1.0, x: v.x * 0.5, y: v.y * 0.5, z: v.z * 0.5 }.renormalized()
        } else {
            UnitQuat::from_axis_angle(v * (1.0 / angle), angle)
        }
    }

    /// Rotation vector (axis * angle) of the shortest arc, in [0, π].
    pub fn to_scaled_axis(self) -> Vec3 {
        let q = if self.w < 0.0 { self.neg() } else { self };
        let sin_half = math::sqrt((q.x * q.x + q.y * q.y + q.z * q.z).max(0.0));
        if sin_half < 1e-12 {
            Vec3::new(q.x * 2.0, q.y * 2.0, q.z * 2.0)
        } else {
            let angle = 2.0 * math::atan2(sin_half, q.w);
            Vec3::new(q.x, q.y, q.z) * (angle / sin_half)
        }
    }

    fn neg(self) -> UnitQuat {
        UnitQuat { w: -self.w, x: -self.x, y: -self.y, z: -self.z }
    }

    pub fn norm(self) -> f64 {
        math::sqrt(self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z)
    }

    pub fn renormalized(self) -> UnitQuat {
        let n = self.norm();
        debug_assert!(n > 1e-12);
        let inv = 1.0 / n;
        UnitQuat { w: self.w * inv, x: self.x * inv, y: self.y * inv, z: self.z * inv }
    }

    /// Hamilton product `self * o` (renormalized): the rotation that applies
    /// `o` first and `self` second.
    pub fn mul(self, o: UnitQuat) -> UnitQuat {
        UnitQuat {
            w: self.w * o.w - self.x * o.x - self.y * o.y - self.z * o.z,
            x: self.w * o.x + self.x * o.w + self.y * o.z - self.z * o.y,
            y: self.w * o.y - self.x * o.z + self.y * o.w + self.z * o.x,
            z: self.w * o.z + self.x * o.y - self.y * o.x + self.z * o.w,
        }
        .renormalized()
    }

    pub fn conjugate(self) -> UnitQuat {
        UnitQuat { w: self.w, x: -self.x, y: -self.y, z: -self.z }
    }

    /// Rotate a vector.
    pub fn rotate(self, v: Vec3) -> Vec3 {
        // v' = v + 2 q_v x (q_v x v + w v)
        let qv = Vec3::new(self.x, self.y, self.z);
        let t = qv.cross(v) * 2.0;
        v + t * self.w + qv.cross(t)
    }

    /// Column-major 3x3 rotation matrix as three basis vectors.
    pub fn basis(self) -> [Vec3; 3] {
        [self.rotate(Vec3::X), self.rotate(Vec3::Y), self.rotate(Vec3::Z)]
    }

    /// Intrinsic z-y-x Euler composition: yaw about z, then pitch about y,
    /// then roll about x.
    pub fn from_rpy(roll: f64, pitch: f64, yaw: f64) -> UnitQuat {
        UnitQuat::from_axis_angle(Vec3::Z, yaw)
            .mul(UnitQuat::from_axis_angle(Vec3::Y, pitch))
            .mul(UnitQuat::from_axis_angle(Vec3::X, roll))
    }

    /// Inverse of [`UnitQuat::from_rpy`]. Pitch is clamped inside
    /// (-π/2, π/2); callers keep pitch away from the gimbal singularity via
    /// joint limits.
    pub fn to_rpy(self) -> (f64, f64, f64) {
        // entries of the rotation matrix R = Rz Ry Rx
        let ex = self.rotate(Vec3::X);
        let pitch = math::asin((-ex.z).clamp(-1.0, 1.0)); // R[2][0] = -sin(pitch)
        let yaw = math::atan2(ex.y, ex.x); // R[1][0], R[0][0]
        let roll = math::atan2(self.rot_r21(), self.rot_r22());
        (roll, pitch, yaw)
    }

    fn rot_r21(self) -> f64 {
        // R[2][1] = 2(yz + wx)
        2.0 * (self.y * self.z + self.w * self.x)
    }

    fn rot_r22(self) -> f64 {
        // R[2][2] = 1 - 2(x^2 + y^2)
        1.0 - 2.0 * (self.x * self.x + self.y * self.y)
    }

    /// Rotation whose -z axis points from `eye` toward `target` with +y as
    /// close to `up` as possible (camera/look-at convention).
    pub fn look_at(eye: Vec3, target: Vec3, up: Vec3) -> UnitQuat {
        let f = (target - eye).normalized(1e-12).unwrap_or(Vec3::Y);
        let mut s = f.cross(up);
        if s.norm_sq() < 1e-16 {
            // forward parallel to up: pick an arbitrary horizontal right
            s = f.cross(Vec3::X);
            if s.norm_sq() < 1e-16 {
                s = f.cross(Vec3::Y);
            }
        }
        let s = s.normalized(1e-12).unwrap();
        let u = s.cross(f);
        // columns: x = s, y = u, z = -f
        UnitQuat::from_basis(s, u, -f)
    }

    /// Quaternion from an orthonormal right-handed basis (columns).
    pub fn from_basis(x: Vec3, y: Vec3, z: Vec3) -> UnitQuat {
        let trace = x.x + y.y + z.z;
        let q = if trace > 0.0 {
            let s = math::sqrt(trace + 1.0) * 2.0;
            UnitQuat {
                w: 0.25 * s,
                x: (y.z - z.y) / s,
                y: (z.x - x.z) / s,
                z: (x.y - y.x) / s,
            }
        } else if x.x > y.y && x.x > z.z {
            let s = math::sqrt(1.0 + x.x - y.y - z.z) * 2.0;
            UnitQuat {
                w: (y.z - z.y) / s,
                x: 0.25 * s,
                y: (y.x + x.y) / s,
                z: (z.x + x.z) / s,
            }
        } else if y.y > z.z {
            let s = math::sqrt(1.0 + y.y - x.x - z.z) * 2.0;
            UnitQuat {
                w: (z.x - x.z) / s,
                x: (y.x + x.y) / s,
                y: 0.25 * s,
                z: (z.y + y.z) / s,
            }
        } else {
            let s = math::sqrt(1.0 + z.z - x.x - y.y) * 2.0;
            UnitQuat {
                w: (x.y - y.x) / s,
                x: (z.x + x.z) / s,
                y: (z.y + y.z) / s,
                z: 0.25 * s,
            }
        };
        q.renormalized()
    }

    pub fn is_finite(self) -> bool {
        self.w.is_finite() && self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

/// Rigid transform: rotation then translation (p ↦ R p + t).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Pose {
    pub rotation: UnitQuat,
    pub translation: Vec3,
}

impl Pose {
    pub const IDENTITY: Pose = Pose {
        rotation: UnitQuat::IDENTITY,
        translation: Vec3::ZERO,
    };

    pub fn new(rotation: UnitQuat, translation: Vec3) -> Pose {
        Pose { rotation, translation }
    }

    pub fn from_translation(t: Vec3) -> Pose {
        Pose { rotation: UnitQuat::IDENTITY, translation: t }
    }

    pub fn from_rotation(r: UnitQuat) -> Pose {
        Pose { rotation: r, translation: Vec3::ZERO }
    }

    pub fn transform_point(&self, p: Vec3) -> Vec3 {
        self.rotation.rotate(p) + self.translation
    }

    pub fn rotate_dir(&self, d: Vec3) -> Vec3 {
        self.rotation.rotate(d)
    }

    /// Pose applying `self` first and `next` second:
    /// `self.then(next)(p) = next(self(p))`.
    pub fn then(&self, next: &Pose) -> Pose {
        Pose {
            rotation: next.rotation.mul(self.rotation),
            translation: next.rotation.rotate(self.translation) + next.translation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let inv_rot = self.rotation.conjugate();
        Pose {
            rotation: inv_rot,
            translation: inv_rot.rotate(-self.translation),
        }
    }
}

/// Compose two poses: the result applies `a` to points first, then `b`.
pub fn compose_pose(a: &Pose, b: &Pose) -> Pose {
    a.then(b)
}

/// Transform a point set by a pose. Length-preserving isometry.
pub fn transform_points(p: &Pose, pts: &[Vec3]) -> Vec<Vec3> {
    pts.iter().map(|&q| p.transform_point(q)).collect()
}

/// Integrate a world-frame twist over `dt`: translation advances by `v*dt`,
/// rotation is pre-composed with `exp(w*dt)`, then renormalized.
pub fn twist_integrate(p: &Pose, v: Vec3, w: Vec3, dt: f64) -> Pose {
    debug_assert!(dt > 0.0);
    Pose {
        rotation: UnitQuat::from_scaled_axis(w * dt).mul(p.rotation),
        translation: p.translation + v * dt,
    }
}

/// Joint kind: rotation about an axis or translation along it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum JointKind {
    Revolute,
    Prismatic,
}

/// One joint: kind, unit axis in the joint frame, a fixed origin pose in the
/// parent frame, and position limits (radians or meters).
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct JointSpec {
    pub kind: JointKind,
    pub axis: Vec3,
    pub origin: Pose,
    pub limits: [f64; 2],
}

impl JointSpec {
    pub fn revolute(axis: Vec3, origin: Pose, limits: [f64; 2]) -> Self {
        JointSpec { kind: JointKind::Revolute, axis, origin, limits }
    }

    pub fn prismatic(axis: Vec3, origin: Pose, limits: [f64; 2]) -> Self {
        JointSpec { kind: JointKind::Prismatic, axis, origin, limits }
    }

    pub fn clamp(&self, q: f64) -> f64 {
        q.clamp(self.limits[0], self.limits[1])
    }

    /// Child-frame motion for joint value `q` (already clamped by callers).
    pub fn motion(&self, q: f64) -> Pose {
        match self.kind {
            JointKind::Revolute => Pose::from_rotation(UnitQuat::from_axis_angle(self.axis, q)),
            JointKind::Prismatic => Pose::from_translation(self.axis * q),
        }
    }
}

/// A link in a chain: its joint and the index of its parent link
/// (`None` = attached to the chain root).
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ChainLink {
    pub joint: JointSpec,
    pub parent: Option<usize>,
}

/// Tree-structured kinematic chain. Link `i`'s parent must have index < i,
/// so a single forward pass evaluates the whole tree. Exactly one joint per
/// link; joint values are clamped to limits before evaluation.
#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct KinematicChain {
    pub root_pose: Pose,
    pub links: Vec<ChainLink>,
}

impl KinematicChain {
    pub fn n_joints(&self) -> usize {
        self.links.len()
    }

    /// Append a link; returns its id.
    pub fn push_link(&mut self, joint: JointSpec, parent: Option<usize>) -> usize {
        if let Some(p) = parent {
            assert!(p < self.links.len(), "parent link must already exist");
        }
        self.links.push(ChainLink { joint, parent });
        self.links.len() - 1
    }
}

/// World pose of every link for joint values `q` (clamped to limits).
pub fn forward_kinematics(chain: &KinematicChain, q: &[f64]) -> Result<Vec<Pose>, CoreError> {
    if q.len() != chain.links.len() {
        return Err(CoreError::JointCountMismatch {
            expected: chain.links.len(),
            got: q.len(),
        });
    }
    let mut poses = vec![Pose::IDENTITY; chain.links.len()];
    for (i, link) in chain.links.iter().enumerate() {
        let parent_pose = match link.parent {
            Some(p) => poses[p],
            None => chain.root_pose,
        };
        let qi = link.joint.clamp(q[i]);
        // local = motion then origin; world = local then parent
        let local = link.joint.motion(qi).then(&link.joint.origin);
        poses[i] = local.then(&parent_pose);
    }
    Ok(poses)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    const TOL: f64 = 1e-9;

    fn rand_unit(r: &mut Rng) -> Vec3 {
        loop {
            let v = Vec3::new(r.normal(), r.normal(), r.normal());
            if let Some(u) = v.normalized(1e-6) {
                return u;
            }
        }
    }

    fn rand_pose(r: &mut Rng) -> Pose {
        Pose {
            rotation: UnitQuat::from_axis_angle(rand_unit(r), r.uniform(-3.0, 3.0)),
            translation: Vec3::new(r.uniform(-1.0, 1.0), r.uniform(-1.0, 1.0), r.uniform(-1.0, 1.0)),
        }
    }

    /// Independent 4x4 homogeneous matrix oracle.
    mod mat4 {
        use super::*;

        pub type Mat4 = [[f64; 4]; 4];

        pub fn from_pose(p: &Pose) -> Mat4 {
            // rotation matrix from the standard quaternion formula
            let (w, x, y, z) = (p.rotation.w, p.rotation.x, p.rotation.y, p.rotation.z);
            [
                [
                    1.0 - 2.0 * (y * y + z * z),
                    2.0 * (x * y - w * z),
                    2.0 * (x * z + w * y),
                    p.translation.x,
                ],
                [
                    2.0 * (x * y + w * z),
                    1.0 - 2.0 * (x * x + z * z),
                    2.0 * (y * z - w * x),
                    p.translation.y,
                ],
                [
                    2.0 * (x * z - w * y),
                    2.0 * (y * z + w * x),
                    1.0 - 2.0 * (x * x + y * y),
                    p.translation.z,
                ],
                [0.0, 0.0, 0.0, 1.0],
            ]
        }

        pub fn mul(a: &Mat4, b: &Mat4) -> Mat4 {
            let mut out = [[0.0; 4]; 4];
            for i in 0..4 {
                for j in 0..4 {
                    for k in 0..4 {
                        out[i][j] += a[i][k] * b[k][j];
                    }
                }
            }
            out
        }

        pub fn apply(m: &Mat4, p: Vec3) -> Vec3 {
            Vec3::new(
                m[0][0] * p.x + m[0][1] * p.y + m[0][2] * p.z + m[0][3],
                m[1][0] * p.x + m[1][1] * p.y + m[1][2] * p.z + m[1][3],
                m[2][0] * p.x + m[2][1] * p.y + m[2][2] * p.z + m[2][3],
            )
        }
    }

    #[test]
    fn compose_identity() {
        let mut r = Rng::seed_from(1);
        let p = rand_pose(&mut r);
        let c = compose_pose(&Pose::IDENTITY, &p);
        let q = Vec3::new(0.3, -0.2, 0.9);
        assert!(c.transform_point(q).dist(p.transform_point(q)) < TOL);
    }

    #[test]
    fn compose_inverse_is_identity() {
        let mut r = Rng::seed_from(2);
        for _ in 0..50 {
            let p = rand_pose(&mut r);
            let c = compose_pose(&p, &p.inverse());
            let q = Vec3::new(r.uniform(-1.0, 1.0), r.uniform(-1.0, 1.0), r.uniform(-1.0, 1.0));
            assert!(c.transform_point(q).dist(q) < TOL);
            assert!((c.rotation.norm() - 1.0).abs() < TOL);
        }
    }

    #[test]
    fn compose_matches_matrix_oracle() {
        // compose_pose(a, b) applies a first, so its matrix is M_b * M_a
        let mut r = Rng::seed_from(3);
        for _ in 0..200 {
            let a = rand_pose(&mut r);
            let b = rand_pose(&mut r);
            let c = compose_pose(&a, &b);
            let m = mat4::mul(&mat4::from_pose(&b), &mat4::from_pose(&a));
            for _ in 0..4 {
                let p = Vec3::new(r.uniform(-2.0, 2.0), r.uniform(-2.0, 2.0), r.uniform(-2.0, 2.0));
                let err = c.transform_point(p).dist(mat4::apply(&m, p));
                assert!(err < TOL, "err {err}");
            }
        }
    }

    #[test]
    fn quat_norm_after_composition() {
        let mut r = Rng::seed_from(4);
        let mut q = UnitQuat::IDENTITY;
        for _ in 0..10_000 {
            q = q.mul(UnitQuat::from_axis_angle(rand_unit(&mut r), r.uniform(-0.5, 0.5)));
        }
        assert!((q.norm() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn single_revolute_quarter_turn() {
        let mut chain = KinematicChain::default();
        chain.push_link(
            JointSpec::revolute(Vec3::Z, Pose::IDENTITY, [-core::f64::consts::PI, core::f64::consts::PI]),
            None,
        );
        let poses = forward_kinematics(&chain, &[core::f64::consts::FRAC_PI_2]).unwrap();
        let p = poses[0].transform_point(Vec3::X);
        assert!(p.dist(Vec3::Y) < TOL, "{p:?}");
    }

    #[test]
    fn rest_configuration_is_origin_composition() {
        let mut r = Rng::seed_from(5);
        let mut chain = KinematicChain::default();
        chain.root_pose = rand_pose(&mut r);
        let mut expected = chain.root_pose;
        for i in 0..5 {
            let origin = rand_pose(&mut r);
            chain.push_link(
                JointSpec::revolute(rand_unit(&mut r), origin, [-2.0, 2.0]),
                if i == 0 { None } else { Some(i - 1) },
            );
            expected = origin.then(&expected);
            let poses = forward_kinematics(&chain, &vec![0.0; i + 1]).unwrap();
            let got = poses[i];
            let probe = Vec3::new(0.3, 0.1, -0.7);
            assert!(got.transform_point(probe).dist(expected.transform_point(probe)) < TOL);
        }
    }

    #[test]
    fn fk_matches_sequential_matrix_oracle() {
        let mut r = Rng::seed_from(6);
        for _ in 0..100 {
            let mut chain = KinematicChain::default();
            chain.root_pose = rand_pose(&mut r);
            let n = 5;
            for i in 0..n {
                let kind_roll = r.next_f64();
                let joint = if kind_roll < 0.5 {
                    JointSpec::revolute(rand_unit(&mut r), rand_pose(&mut r), [-3.0, 3.0])
                } else {
                    JointSpec::prismatic(rand_unit(&mut r), rand_pose(&mut r), [-1.0, 1.0])
                };
                chain.push_link(joint, if i == 0 { None } else { Some(i - 1) });
            }
            let q: Vec<f64> = (0..n).map(|_| r.uniform(-1.0, 1.0)).collect();
            let poses = forward_kinematics(&chain, &q).unwrap();

            // oracle: sequential homogeneous-matrix composition
            let mut m = mat4::from_pose(&chain.root_pose);
            for (i, link) in chain.links.iter().enumerate() {
                let local = link.joint.motion(link.joint.clamp(q[i])).then(&link.joint.origin);
                m = mat4::mul(&m, &mat4::from_pose(&local));
                let probe = Vec3::new(0.4, -0.2, 0.6);
                let err = poses[i].transform_point(probe).dist(mat4::apply(&m, probe));
                assert!(err < TOL, "link {i} err {err}");
            }
        }
    }

    #[test]
    fn fk_joint_count_error() {
        let mut chain = KinematicChain::default();
        chain.push_link(JointSpec::revolute(Vec3::Z, Pose::IDENTITY, [-1.0, 1.0]), None);
        let err = forward_kinematics(&chain, &[0.0, 0.0]).unwrap_err();
        assert_eq!(err, CoreError::JointCountMismatch { expected: 1, got: 2 });
    }

    #[test]
    fn fk_prefix_independent_of_suffix() {
        let mut r = Rng::seed_from(7);
        let mut chain = KinematicChain::default();
        for i in 0..6 {
            chain.push_link(
                JointSpec::revolute(rand_unit(&mut r), rand_pose(&mut r), [-3.0, 3.0]),
                if i == 0 { None } else { Some(i - 1) },
            );
        }
        let q1: Vec<f64> = (0..6).map(|_| r.uniform(-1.0, 1.0)).collect();
        let mut q2 = q1.clone();
        q2[4] = r.uniform(-1.0, 1.0);
        q2[5] = r.uniform(-1.0, 1.0);
        let p1 = forward_kinematics(&chain, &q1).unwrap();
        let p2 = forward_kinematics(&chain, &q2).unwrap();
        for i in 0..4 {
            assert_eq!(p1[i], p2[i]);
        }
    }

    #[test]
    fn fk_clamps_to_limits() {
        let mut chain = KinematicChain::default();
        chain.push_link(
            JointSpec::revolute(Vec3::Z, Pose::IDENTITY, [0.0, 1.0]),
            None,
        );
        let hi = forward_kinematics(&chain, &[5.0]).unwrap();
        let at_limit = forward_kinematics(&chain, &[1.0]).unwrap();
        assert_eq!(hi[0], at_limit[0]);
    }

    #[test]
    fn twist_pure_translation() {
        let p = twist_integrate(&Pose::IDENTITY, Vec3::X, Vec3::ZERO, 0.1);
        assert!(p.translation.dist(Vec3::new(0.1, 0.0, 0.0)) < TOL);
        assert_eq!(p.rotation, UnitQuat::IDENTITY);
    }

    #[test]
    fn twist_half_turn_about_z() {
        let p = twist_integrate(
            &Pose::IDENTITY,
            Vec3::ZERO,
            Vec3::new(0.0, 0.0, core::f64::consts::PI),
            1.0,
        );
        let v = p.rotation.rotate(Vec3::X);
        assert!(v.dist(Vec3::new(-1.0, 0.0, 0.0)) < TOL);
    }

    #[test]
    fn twist_zero_is_identity() {
        let mut r = Rng::seed_from(8);
        let p = rand_pose(&mut r);
        let q = twist_integrate(&p, Vec3::ZERO, Vec3::ZERO, 0.05);
        assert!(q.translation.dist(p.translation) < TOL);
        assert!(q.rotation.rotate(Vec3::X).dist(p.rotation.rotate(Vec3::X)) < TOL);
    }

    #[test]
    fn twist_many_small_steps_match_closed_form() {
        let mut r = Rng::seed_from(9);
        for _ in 0..20 {
            let v = Vec3::new(r.uniform(-0.5, 0.5), r.uniform(-0.5, 0.5), r.uniform(-0.5, 0.5));
            let w = rand_unit(&mut r) * r.uniform(-1.5, 1.5);
            let total = 1.0;
            let n = 100;
            let dt = total / n as f64;
            let mut p = Pose::IDENTITY;
            for _ in 0..n {
                p = twist_integrate(&p, v, w, dt);
            }
            // world-frame twist closed form: translation v*T, rotation exp(w*T)
            let expect_t = v * total;
            let expect_r = UnitQuat::from_scaled_axis(w * total);
            assert!(p.translation.dist(expect_t) < 1e-3);
            let probe = Vec3::new(0.3, -0.8, 0.5);
            assert!(p.rotation.rotate(probe).dist(expect_r.rotate(probe)) < 1e-3);
        }
    }

    #[test]
    fn transform_points_preserves_distances() {
        let mut r = Rng::seed_from(10);
        let pose = rand_pose(&mut r);
        let pts: Vec<Vec3> = (0..32)
            .map(|_| Vec3::new(r.uniform(-1.0, 1.0), r.uniform(-1.0, 1.0), r.uniform(-1.0, 1.0)))
            .collect();
        let out = transform_points(&pose, &pts);
        assert_eq!(out.len(), pts.len());
        for i in 0..pts.len() {
            for j in (i + 1)..pts.len() {
                let d0 = pts[i].dist(pts[j]);
                let d1 = out[i].dist(out[j]);
                assert!((d0 - d1).abs() < TOL);
            }
        }
    }

    #[test]
    fn transform_points_identity_and_translation() {
        let pts = [Vec3::X, Vec3::Y, Vec3::new(0.1, 0.2, 0.3)];
        let same = transform_points(&Pose::IDENTITY, &pts);
        assert_eq!(&same[..], &pts[..]);
        let t = Vec3::new(0.5, -1.0, 2.0);
        let shifted = transform_points(&Pose::from_translation(t), &pts);
        for (a, b) in pts.iter().zip(&shifted) {
            assert!(b.dist(*a + t) < TOL);
        }
    }

    #[test]
    fn rpy_round_trip() {
        let mut r = Rng::seed_from(11);
        for _ in 0..200 {
            let roll = r.uniform(-2.8, 2.8);
            let pitch = r.uniform(-1.3, 1.3);
            let yaw = r.uniform(-2.8, 2.8);
            let q = UnitQuat::from_rpy(roll, pitch, yaw);
            let (r2, p2, y2) = q.to_rpy();
            assert!((roll - r2).abs() < 1e-9, "roll {roll} vs {r2}");
            assert!((pitch - p2).abs() < 1e-9);
            assert!((yaw - y2).abs() < 1e-9);
        }
    }

    #[test]
    fn look_at_points_minus_z_at_target() {
        let mut r = Rng::seed_from(12);
        for _ in 0..100 {
            let eye = Vec3::new(r.uniform(-2.0, 2.0), r.uniform(-2.0, 2.0), r.uniform(0.1, 2.0));
            let target = Vec3::new(r.uniform(-1.0, 1.0), r.uniform(-1.0, 1.0), r.uniform(0.0, 1.0));
            if eye.dist(target) < 1e-3 {
                continue;
            }
            let q = UnitQuat::look_at(eye, target, Vec3::Z);
            let fwd = q.rotate(-Vec3::Z);
            let want = (target - eye).normalized(1e-12).unwrap();
            assert!(fwd.dist(want) < 1e-9);
            // right-handed basis
            let [x, y, z] = q.basis();
            assert!(x.cross(y).dist(z) < 1e-9);
        }
    }
}
