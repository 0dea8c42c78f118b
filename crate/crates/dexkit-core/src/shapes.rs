//! Analytic shape primitives: ray intersection, surface sampling, and
//! sphere proxy sets for collision.
//!
//! All four kinds (sphere, box, capsule, cylinder) are solved in the shape's
//! local frame; capsule and cylinder axes run along local z. Collision uses
//! sphere proxies only, so the whole simulator needs exactly one distance
//! kernel (sphere-sphere).

use alloc::vec::Vec;

use crate::geometry::{Pose, Vec3};
use crate::math;
use crate::rng::Rng;

/// Shape primitive with its local pose in the owning link's frame.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ShapePrimitive {
    pub kind: ShapeKind,
    /// Pose of the shape frame in the link frame.
    pub local_pose: Pose,
}

/// Dimensions in meters; all must be positive.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum ShapeKind {
    Sphere { radius: f64 },
    /// Half-extents along local x/y/z.
    Box { half_extents: Vec3 },
    /// Segment of half-length `half_len` along local z, inflated by `radius`.
    Capsule { half_len: f64, radius: f64 },
    /// Capped cylinder: axis local z, half-height `half_len`.
    Cylinder { half_len: f64, radius: f64 },
}

impl ShapePrimitive {
    pub fn sphere(radius: f64, local_pose: Pose) -> Self {
        ShapePrimitive { kind: ShapeKind::Sphere { radius }, local_pose }
    }

    pub fn cuboid(half_extents: Vec3, local_pose: Pose) -> Self {
        ShapePrimitive { kind: ShapeKind::Box { half_extents }, local_pose }
    }

    pub fn capsule(half_len: f64, radius: f64, local_pose: Pose) -> Self {
        ShapePrimitive { kind: ShapeKind::Capsule { half_len, radius }, local_pose }
    }

    pub fn cylinder(half_len: f64, radius: f64, local_pose: Pose) -> Self {
        ShapePrimitive { kind: ShapeKind::Cylinder { half_len, radius }, local_pose }
    }

    pub fn dims_positive(&self) -> bool {
        match self.kind {
            ShapeKind::Sphere { radius } => radius > 0.0,
            ShapeKind::Box { half_extents } => {
                half_extents.x > 0.0 && half_extents.y > 0.0 && half_extents.z > 0.0
            }
            ShapeKind::Capsule { half_len, radius } | ShapeKind::Cylinder { half_len, radius } => {
                half_len > 0.0 && radius > 0.0
            }
        }
    }

    /// Surface area; used to distribute surface-sample quotas.
    pub fn surface_area(&self) -> f64 {
        match self.kind {
            ShapeKind::Sphere { radius } => 4.0 * math::PI * radius * radius,
            ShapeKind::Box { half_extents: h } => {
                8.0 * (h.x * h.y + h.y * h.z + h.x * h.z)
            }
            ShapeKind::Capsule { half_len, radius } => {
                4.0 * math::PI * radius * radius + 2.0 * math::PI * radius * (2.0 * half_len)
            }
            ShapeKind::Cylinder { half_len, radius } => {
                2.0 * math::PI * radius * (2.0 * half_len) + 2.0 * math::PI * radius * radius
            }
        }
    }
}

/// Ray with normalized direction. `t` values are Euclidean range.
#[derive(Debug, Clone, Copy)]
pub struct Ray {
    pub origin: Vec3,
    pub dir: Vec3,
}

/// Nearest intersection range `t >= 0` of a world-frame ray with a shape at
/// `shape_world` (shape local pose already folded in by the caller).
pub fn ray_intersect(shape: &ShapeKind, shape_world: &Pose, ray: &Ray) -> Option<f64> {
    // into the local frame; rotation preserves |dir| = 1 so t carries over
    let inv = shape_world.inverse();
    let o = inv.transform_point(ray.origin);
    let d = inv.rotate_dir(ray.dir);
    match *shape {
        ShapeKind::Sphere { radius } => ray_sphere(o, d, Vec3::ZERO, radius),
        ShapeKind::Box { half_extents } => ray_box(o, d, half_extents),
        ShapeKind::Capsule { half_len, radius } => ray_capsule(o, d, half_len, radius),
        ShapeKind::Cylinder { half_len, radius } => ray_cylinder(o, d, half_len, radius),
    }
}

fn ray_sphere(o: Vec3, d: Vec3, center: Vec3, radius: f64) -> Option<f64> {
    let m = o - center;
    let b = m.dot(d);
    let c = m.norm_sq() - radius * radius;
    let disc = b * b - c;
    if disc < 0.0 {
        return None;
    }
    let sq = math::sqrt(disc);
    let t0 = -b - sq;
    let t1 = -b + sq;
    smallest_nonneg(t0, t1)
}

fn ray_box(o: Vec3, d: Vec3, h: Vec3) -> Option<f64> {
    // slab method
    let mut t_min = f64::NEG_INFINITY;
    let mut t_max = f64::INFINITY;
    let os = [o.x, o.y, o.z];
    let ds = [d.x, d.y, d.z];
    let hs = [h.x, h.y, h.z];
    for i in 0..3 {
        if ds[i].abs() < 1e-15 {
            if os[i].abs() > hs[i] {
                return None;
            }
        } else {
            let inv = 1.0 / ds[i];
            let mut t0 = (-hs[i] - os[i]) * inv;
            let mut t1 = (hs[i] - os[i]) * inv;
            if t0 > t1 {
                core::mem::swap(&mut t0, &mut t1);
            }
            t_min = t_min.max(t0);
            t_max = t_max.min(t1);
            if t_min > t_max {
                return None;
            }
        }
    }
    smallest_nonneg(t_min, t_max)
}

fn ray_capsule(o: Vec3, d: Vec3, half_len: f64, radius: f64) -> Option<f64> {
    let mut best: Option<f64> = None;
    // open cylinder side, valid while |z| <= half_len
    if let Some(t) = ray_infinite_cylinder(o, d, radius) {
        let z = o.z + t * d.z;
        if z.abs() <= half_len {
            best = merge_min(best, t);
        }
    }
    // then both cap spheres
    for sz in [-half_len, half_len] {
        if let Some(t) = ray_sphere(o, d, Vec3::new(0.0, 0.0, sz), radius) {
            best = merge_min(best, t);
        }
    }
    best
}

fn ray_cylinder(o: Vec3, d: Vec3, half_len: f64, radius: f64) -> Option<f64> {
    let mut best: Option<f64> = None;
    if let Some(t) = ray_infinite_cylinder(o, d, radius) {
        let z = o.z + t * d.z;
        if z.abs() <= half_len {
            best = merge_min(best, t);
        }
    }
    // flat caps at z = ±half_len
    if d.z.abs() > 1e-15 {
        for sz in [-half_len, half_len] {
            let t = (sz - o.z) / d.z;
            if t >= 0.0 {
                let x = o.x + t * d.x;
                let y = o.y + t * d.y;
                if x * x + y * y <= radius * radius {
                    best = merge_min(best, t);
                }
            }
        }
    }
    best
}

fn ray_infinite_cylinder(o: Vec3, d: Vec3, radius: f64) -> Option<f64> {
    let a = d.x * d.x + d.y * d.y;
    if a < 1e-15 {
        return None; // parallel to the axis; caps handle it
    }
    let b = o.x * d.x + o.y * d.y;
    let c = o.x * o.x + o.y * o.y - radius * radius;
    let disc = b * b - a * c;
    if disc < 0.0 {
        return None;
    }
    let sq = math::sqrt(disc);
    smallest_nonneg((-b - sq) / a, (-b + sq) / a)
}

fn smallest_nonneg(t0: f64, t1: f64) -> Option<f64> {
    if t0 >= 0.0 {
        Some(t0)
    } else if t1 >= 0.0 {
        Some(t1)
    } else {
        None
    }
}

fn merge_min(best: Option<f64>, t: f64) -> Option<f64> {
    match best {
        Some(b) if b <= t => Some(b),
        _ => Some(t),
    }
}

/// Deterministic surface samples in the shape's local frame.
///
/// The pattern is fixed by `rng` at build time and re-posed each step by
/// callers, so imagined clouds are rigid under robot motion.
pub fn sample_surface(kind: &ShapeKind, n: usize, rng: &mut Rng) -> Vec<Vec3> {
    let mut out = Vec::with_capacity(n);
    match *kind {
        ShapeKind::Sphere { radius } => {
            for _ in 0..n {
                out.push(unit_dir(rng) * radius);
            }
        }
        ShapeKind::Box { half_extents: h } => {
            // face picked by area, then uniform in the face rectangle
            let areas = [h.y * h.z, h.y * h.z, h.x * h.z, h.x * h.z, h.x * h.y, h.x * h.y];
            let total: f64 = areas.iter().sum();
            for _ in 0..n {
                let mut pick = rng.next_f64() * total;
                let mut face = 5;
                for (i, a) in areas.iter().enumerate() {
                    if pick < *a {
                        face = i;
                        break;
                    }
                    pick -= a;
                }
                let u = rng.uniform(-1.0, 1.0);
                let v = rng.uniform(-1.0, 1.0);
                out.push(match face {
                    0 => Vec3::new(h.x, u * h.y, v * h.z),
                    1 => Vec3::new(-h.x, u * h.y, v * h.z),
                    2 => Vec3::new(u * h.x, h.y, v * h.z),
                    3 => Vec3::new(u * h.x, -h.y, v * h.z),
                    4 => Vec3::new(u * h.x, v * h.y, h.z),
                    _ => Vec3::new(u * h.x, v * h.y, -h.z),
                });
            }
        }
        ShapeKind::Capsule { half_len, radius } => {
            let side = 2.0 * math::PI * radius * 2.0 * half_len;
            let caps = 4.0 * math::PI * radius * radius;
            for _ in 0..n {
                if rng.next_f64() * (side + caps) < side {
                    let ang = rng.uniform(0.0, 2.0 * math::PI);
                    let z = rng.uniform(-half_len, half_len);
                    out.push(Vec3::new(radius * math::cos(ang), radius * math::sin(ang), z));
                } else {
                    let d = unit_dir(rng);
                    let cz = if d.z >= 0.0 { half_len } else { -half_len };
                    out.push(Vec3::new(d.x * radius, d.y * radius, cz + d.z * radius));
                }
            }
        }
        ShapeKind::Cylinder { half_len, radius } => {
            let side = 2.0 * math::PI * radius * 2.0 * half_len;
            let caps = 2.0 * math::PI * radius * radius;
            for _ in 0..n {
                if rng.next_f64() * (side + caps) < side {
                    let ang = rng.uniform(0.0, 2.0 * math::PI);
                    let z = rng.uniform(-half_len, half_len);
                    out.push(Vec3::new(radius * math::cos(ang), radius * math::sin(ang), z));
                } else {
                    // uniform in disc via sqrt radius
                    let ang = rng.uniform(0.0, 2.0 * math::PI);
                    let rr = radius * math::sqrt(rng.next_f64());
                    let z = if rng.next_f64() < 0.5 { half_len } else { -half_len };
                    out.push(Vec3::new(rr * math::cos(ang), rr * math::sin(ang), z));
                }
            }
        }
    }
    out
}

fn unit_dir(rng: &mut Rng) -> Vec3 {
    loop {
        let v = Vec3::new(rng.normal(), rng.normal(), rng.normal());
        if let Some(u) = v.normalized(1e-9) {
            return u;
        }
    }
}

/// One proxy sphere in the owning link's frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProxySphere {
    pub center: Vec3,
    pub radius: f64,
}

/// Sphere proxy set covering a primitive's surface. Centers lie on or inside
/// the source primitive; neighbor spacing stays at or below `max_spacing`.
#[derive(Debug, Clone, Default)]
pub struct SphereProxySet {
    pub spheres: Vec<ProxySphere>,
}

impl SphereProxySet {
    /// Build proxies for one primitive (centers in the shape's local frame,
    /// then mapped through its local pose into the link frame).
    pub fn for_primitive(shape: &ShapePrimitive, max_spacing: f64) -> SphereProxySet {
        let mut spheres = Vec::new();
        match shape.kind {
            ShapeKind::Sphere { radius } => {
                spheres.push(ProxySphere { center: Vec3::ZERO, radius });
            }
            ShapeKind::Capsule { half_len, radius } => {
                // line of spheres along the segment
                let n = steps_for(2.0 * half_len, max_spacing.min(radius));
                for i in 0..=n {
                    let z = -half_len + 2.0 * half_len * i as f64 / n as f64;
                    spheres.push(ProxySphere { center: Vec3::new(0.0, 0.0, z), radius });
                }
            }
            ShapeKind::Cylinder { half_len, radius } => {
                // rings of spheres with proxy radius r_p inset from the wall
                let rp = (radius * 0.5).min(half_len * 0.9).min(max_spacing);
                let ring_r = radius - rp;
                let n_z = steps_for(2.0 * half_len, max_spacing);
                let n_ang = steps_for(2.0 * math::PI * ring_r.max(1e-6), max_spacing).max(3);
                for iz in 0..=n_z {
                    let z = -half_len + 2.0 * half_len * iz as f64 / n_z as f64;
                    let z = z.clamp(-half_len + rp, half_len - rp);
                    if ring_r < 1e-9 {
                        spheres.push(ProxySphere { center: Vec3::new(0.0, 0.0, z), radius: rp });
                        continue;
                    }
                    for ia in 0..n_ang {
                        let ang = 2.0 * math::PI * ia as f64 / n_ang as f64;
                        spheres.push(ProxySphere {
                            center: Vec3::new(ring_r * math::cos(ang), ring_r * math::sin(ang), z),
                            radius: rp,
                        });
                    }
                }
            }
            ShapeKind::Box { half_extents: h } => {
                // mid-plane grid across the two largest extents, proxy radius
                // equal to the smallest half-extent so spheres kiss the faces
                let dims = [h.x, h.y, h.z];
                let mut order = [0usize, 1, 2];
                // sort ascending by extent; smallest axis is the thickness
                order.sort_by(|&a, &b| dims[a].partial_cmp(&dims[b]).unwrap());
                let thin = order[0];
                let rp = dims[thin];
                let (a, b) = (order[1], order[2]);
                let na = steps_for(2.0 * (dims[a] - rp).max(0.0), max_spacing);
                let nb = steps_for(2.0 * (dims[b] - rp).max(0.0), max_spacing);
                for ia in 0..=na {
                    for ib in 0..=nb {
                        let ca = -(dims[a] - rp) + 2.0 * (dims[a] - rp) * ia as f64 / na as f64;
                        let cb = -(dims[b] - rp) + 2.0 * (dims[b] - rp) * ib as f64 / nb as f64;
                        let mut c = [0.0f64; 3];
                        c[a] = ca;
                        c[b] = cb;
                        spheres.push(ProxySphere {
                            center: Vec3::new(c[0], c[1], c[2]),
                            radius: rp,
                        });
                    }
                }
            }
        }
        // into the link frame
        for s in spheres.iter_mut() {
            s.center = shape.local_pose.transform_point(s.center);
        }
        SphereProxySet { spheres }
    }

    /// Conservative bounding sphere (in the same frame as the proxies).
    pub fn bounding_sphere(&self) -> ProxySphere {
        if self.spheres.is_empty() {
            return ProxySphere { center: Vec3::ZERO, radius: 0.0 };
        }
        let mut c = Vec3::ZERO;
        for s in &self.spheres {
            c = c + s.center;
        }
        let c = c * (1.0 / self.spheres.len() as f64);
        let mut r: f64 = 0.0;
        for s in &self.spheres {
            r = r.max(c.dist(s.center) + s.radius);
        }
        ProxySphere { center: c, radius: r }
    }
}

fn steps_for(span: f64, max_spacing: f64) -> usize {
    if span <= 0.0 {
        return 1;
    }
    (math::floor(span / max_spacing) as usize + 1).max(1)
}

/// Signed distance from a point to the primitive surface (local frame);
/// negative inside. Used by tests and by imagined-point verification.
pub fn signed_distance(kind: &ShapeKind, p: Vec3) -> f64 {
    match *kind {
        ShapeKind::Sphere { radius } => p.norm() - radius,
        ShapeKind::Box { half_extents: h } => {
            let q = Vec3::new(p.x.abs() - h.x, p.y.abs() - h.y, p.z.abs() - h.z);
            let outside = Vec3::new(q.x.max(0.0), q.y.max(0.0), q.z.max(0.0)).norm();
            let inside = q.x.max(q.y).max(q.z).min(0.0);
            outside + inside
        }
        ShapeKind::Capsule { half_len, radius } => {
            let z = p.z.clamp(-half_len, half_len);
            (p - Vec3::new(0.0, 0.0, z)).norm() - radius
        }
        ShapeKind::Cylinder { half_len, radius } => {
            let dr = math::sqrt(p.x * p.x + p.y * p.y) - radius;
            let dz = p.z.abs() - half_len;
            let outside = Vec3::new(dr.max(0.0), dz.max(0.0), 0.0).norm();
            let inside = dr.max(dz).min(0.0);
            outside + inside
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::UnitQuat;

    fn rand_dir(r: &mut Rng) -> Vec3 {
        unit_dir(r)
    }

    #[test]
    fn sphere_ray_head_on() {
        let ray = Ray { origin: Vec3::new(0.0, -2.0, 0.0), dir: Vec3::Y };
        let t = ray_intersect(
            &ShapeKind::Sphere { radius: 0.5 },
            &Pose::IDENTITY,
            &ray,
        )
        .unwrap();
        assert!((t - 1.5).abs() < 1e-12);
    }

    #[test]
    fn box_slab_vs_face_plane_oracle() {
        // oracle: intersect all 6 face planes, keep hits inside the face rect
        let mut r = Rng::seed_from(21);
        let h = Vec3::new(0.3, 0.2, 0.5);
        for _ in 0..2000 {
            let o = Vec3::new(r.uniform(-2.0, 2.0), r.uniform(-2.0, 2.0), r.uniform(-2.0, 2.0));
            if signed_distance(&ShapeKind::Box { half_extents: h }, o) < 0.05 {
                continue;
            }
            let d = rand_dir(&mut r);
            let got = ray_box(o, d, h);
            let mut want: Option<f64> = None;
            let os = [o.x, o.y, o.z];
            let ds = [d.x, d.y, d.z];
            let hs = [h.x, h.y, h.z];
            for axis in 0..3 {
                for sign in [-1.0, 1.0] {
                    if ds[axis].abs() < 1e-15 {
                        continue;
                    }
                    let t = (sign * hs[axis] - os[axis]) / ds[axis];
                    if t < 0.0 {
                        continue;
                    }
                    let hit = [o.x + t * d.x, o.y + t * d.y, o.z + t * d.z];
                    let (a, b) = ((axis + 1) % 3, (axis + 2) % 3);
                    if hit[a].abs() <= hs[a] + 1e-12 && hit[b].abs() <= hs[b] + 1e-12 {
                        want = merge_min(want, t);
                    }
                }
            }
            match (got, want) {
                (Some(g), Some(w)) => assert!((g - w).abs() < 1e-9, "{g} vs {w}"),
                (None, None) => {}
                other => panic!("disagree: {other:?}"),
            }
        }
    }

    #[test]
    fn capsule_and_cylinder_hits_lie_on_surface() {
        let mut r = Rng::seed_from(22);
        let shapes = [
            ShapeKind::Capsule { half_len: 0.3, radius: 0.1 },
            ShapeKind::Cylinder { half_len: 0.25, radius: 0.15 },
        ];
        for kind in &shapes {
            let mut hits = 0;
            for _ in 0..5000 {
                let o = Vec3::new(r.uniform(-2.0, 2.0), r.uniform(-2.0, 2.0), r.uniform(-2.0, 2.0));
                if signed_distance(kind, o) < 0.05 {
                    continue;
                }
                // aim near the shape so a useful fraction of rays hit
                let target =
                    Vec3::new(r.uniform(-0.3, 0.3), r.uniform(-0.3, 0.3), r.uniform(-0.4, 0.4));
                let d = match (target - o).normalized(1e-9) {
                    Some(d) => d,
                    None => continue,
                };
                if let Some(t) = ray_intersect(kind, &Pose::IDENTITY, &Ray { origin: o, dir: d }) {
                    let p = o + d * t;
                    let sd = signed_distance(kind, p);
                    assert!(sd.abs() < 1e-7, "surface residual {sd}");
                    hits += 1;
                }
            }
            assert!(hits > 50, "too few hits to be meaningful");
        }
    }

    #[test]
    fn ray_respects_world_pose() {
        let pose = Pose::new(
            UnitQuat::from_axis_angle(Vec3::X, 0.7),
            Vec3::new(0.5, -0.2, 1.0),
        );
        let kind = ShapeKind::Sphere { radius: 0.3 };
        // aim straight at the transformed center
        let origin = Vec3::new(2.0, 2.0, 2.0);
        let center = pose.transform_point(Vec3::ZERO);
        let dir = (center - origin).normalized(1e-12).unwrap();
        let t = ray_intersect(&kind, &pose, &Ray { origin, dir }).unwrap();
        assert!((t - (origin.dist(center) - 0.3)).abs() < 1e-9);
    }

    #[test]
    fn surface_samples_lie_on_surface() {
        let mut r = Rng::seed_from(23);
        let kinds = [
            ShapeKind::Sphere { radius: 0.2 },
            ShapeKind::Box { half_extents: Vec3::new(0.1, 0.2, 0.3) },
            ShapeKind::Capsule { half_len: 0.2, radius: 0.05 },
            ShapeKind::Cylinder { half_len: 0.15, radius: 0.1 },
        ];
        for kind in &kinds {
            let pts = sample_surface(kind, 500, &mut r);
            assert_eq!(pts.len(), 500);
            for p in pts {
                assert!(signed_distance(kind, p).abs() < 1e-9, "{kind:?} {p:?}");
            }
        }
    }

    #[test]
    fn proxy_centers_inside_primitive() {
        let shapes = [
            ShapePrimitive::sphere(0.1, Pose::IDENTITY),
            ShapePrimitive::cuboid(Vec3::new(0.05, 0.05, 0.015), Pose::IDENTITY),
            ShapePrimitive::capsule(0.2, 0.02, Pose::IDENTITY),
            ShapePrimitive::cylinder(0.12, 0.08, Pose::IDENTITY),
        ];
        for s in &shapes {
            let proxies = SphereProxySet::for_primitive(s, 0.009);
            assert!(!proxies.spheres.is_empty());
            for p in &proxies.spheres {
                // local pose is identity here, so centers are in shape frame
                assert!(
                    signed_distance(&s.kind, p.center) <= 1e-9,
                    "{:?} center outside: {:?}",
                    s.kind,
                    p.center
                );
            }
        }
    }

    #[test]
    fn proxy_spacing_bound() {
        // nearest-neighbor spacing within one primitive's proxy set
        let s = ShapePrimitive::capsule(0.15, 0.02, Pose::IDENTITY);
        let max_spacing = 0.009;
        let proxies = SphereProxySet::for_primitive(&s, max_spacing);
        for (i, a) in proxies.spheres.iter().enumerate() {
            let mut nearest = f64::INFINITY;
            for (j, b) in proxies.spheres.iter().enumerate() {
                if i != j {
                    nearest = nearest.min(a.center.dist(b.center));
                }
            }
            assert!(nearest <= max_spacing + 1e-9, "spacing {nearest}");
        }
    }

    #[test]
    fn bounding_sphere_contains_proxies() {
        let s = ShapePrimitive::cuboid(Vec3::new(0.05, 0.05, 0.015), Pose::IDENTITY);
        let set = SphereProxySet::for_primitive(&s, 0.009);
        let b = set.bounding_sphere();
        for p in &set.spheres {
            assert!(b.center.dist(p.center) + p.radius <= b.radius + 1e-9);
        }
    }
}
