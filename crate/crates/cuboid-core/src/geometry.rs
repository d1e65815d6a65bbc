//! Oriented boxes, pinhole projection with near-plane safety, and the
//! 2D / BEV / 3D IoU family.
//!
//! Frames: the ego frame is x-forward / y-left / z-up; the camera frame is
//! z-forward / x-right / y-down. Boxes are yawed about the ego up-axis
//! (horizontal-ground assumption).

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::Error;
use crate::math;

/// Minimum camera-frame depth for a projectable point, in meters. Points at
/// or behind this plane are clipped rather than projected, which keeps every
/// projected coordinate finite.
pub const NEAR_PLANE: f64 = 0.1;

/// A 3-vector in meters (point or direction, depending on context).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Self = Self { x: 0.0, y: 0.0, z: 0.0 };
    pub const UP: Self = Self { x: 0.0, y: 0.0, z: 1.0 };

    #[inline]
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    #[inline]
    pub fn dot(self, o: Self) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    #[inline]
    pub fn norm(self) -> f64 {
        math::sqrt(self.dot(self))
    }

    #[inline]
    pub fn scale(self, s: f64) -> Self {
        Self::new(self.x * s, self.y * s, self.z * s)
    }

    pub fn normalized(self) -> Self {
        let n = self.norm();
        self.scale(1.0 / n)
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

impl core::ops::Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

/// Row-major 3x3 matrix; used for rotations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat3(pub [[f64; 3]; 3]);

impl Mat3 {
    pub const IDENTITY: Self = Self([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);

    /// Rotation by `yaw` about the up-axis (z).
    pub fn yaw(yaw: f64) -> Self {
        let (s, c) = (math::sin(yaw), math::cos(yaw));
        Self([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    }

    pub fn transpose(self) -> Self {
        let m = self.0;
        Self([
            [m[0][0], m[1][0], m[2][0]],
            [m[0][1], m[1][1], m[2][1]],
            [m[0][2], m[1][2], m[2][2]],
        ])
    }

    pub fn apply(self, v: Vec3) -> Vec3 {
        let m = self.0;
        Vec3::new(
            m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z,
            m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
            m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z,
        )
    }

    /// Frobenius-norm deviation of `R^T R` from identity.
    pub fn orthonormality_error(self) -> f64 {
        let t = self.transpose();
        let mut err: f64 = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                let mut s = 0.0;
                for k in 0..3 {
                    s += t.0[i][k] * self.0[k][j];
                }
                let target = if i == j { 1.0 } else { 0.0 };
                err += (s - target) * (s - target);
            }
        }
        math::sqrt(err)
    }
}

/// Normalize an angle into (-pi, pi].
pub fn normalize_angle(a: f64) -> f64 {
    let two_pi = 2.0 * core::f64::consts::PI;
    let mut r = a % two_pi;
    if r <= -core::f64::consts::PI {
        r += two_pi;
    } else if r > core::f64::consts::PI {
        r -= two_pi;
    }
    r
}

/// 7-DoF oriented box in the ego frame: center, dimensions and yaw about the
/// up-axis. `l` runs along the box x-axis, `w` along box y, `h` along box z.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Box3D {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub l: f64,
    pub w: f64,
    pub h: f64,
    pub yaw: f64,
}

impl Box3D {
    pub fn new(x: f64, y: f64, z: f64, l: f64, w: f64, h: f64, yaw: f64) -> Result<Self, Error> {
        let b = Self { x, y, z, l, w, h, yaw: normalize_angle(yaw) };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<(), Error> {
        for (v, name) in [
            (self.x, "x"),
            (self.y, "y"),
            (self.z, "z"),
            (self.yaw, "yaw"),
        ] {
            if !v.is_finite() {
                return Err(Error::InvalidBox { field: name });
            }
        }
        for (v, name) in [(self.l, "l"), (self.w, "w"), (self.h, "h")] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidBox { field: name });
            }
        }
        Ok(())
    }

    pub fn center(&self) -> Vec3 {
        Vec3::new(self.x, self.y, self.z)
    }

    pub fn volume(&self) -> f64 {
        self.l * self.w * self.h
    }

    /// Transform an ego-frame point into the box frame (center at origin,
    /// x along `l`, y along `w`, z up).
    pub fn to_box_frame(&self, p: Vec3) -> Vec3 {
        Mat3::yaw(-self.yaw).apply(p - self.center())
    }

    /// Inverse of [`Box3D::to_box_frame`].
    pub fn from_box_frame(&self, p: Vec3) -> Vec3 {
        Mat3::yaw(self.yaw).apply(p) + self.center()
    }

    /// Footprint corners in the ground plane, counterclockwise, matching the
    /// bottom face of [`box_corners`].
    pub fn footprint(&self) -> [[f64; 2]; 4] {
        let c = box_corners(self);
        [
            [c[0].x, c[0].y],
            [c[1].x, c[1].y],
            [c[2].x, c[2].y],
            [c[3].x, c[3].y],
        ]
    }
}

/// Axis-aligned image box in continuous pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Box2D {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl Box2D {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self, Error> {
        let b = Self { x_min, y_min, x_max, y_max };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<(), Error> {
        if !(self.x_min.is_finite() && self.x_max.is_finite() && self.x_min <= self.x_max) {
            return Err(Error::InvalidBox { field: "x_min/x_max" });
        }
        if !(self.y_min.is_finite() && self.y_max.is_finite() && self.y_min <= self.y_max) {
            return Err(Error::InvalidBox { field: "y_min/y_max" });
        }
        Ok(())
    }

    pub fn area(&self) -> f64 {
        (self.x_max - self.x_min) * (self.y_max - self.y_min)
    }

    /// Edge values in the fixed order left, top, right, bottom.
    pub fn edges(&self) -> [f64; 4] {
        [self.x_min, self.y_min, self.x_max, self.y_max]
    }
}

/// Rigid ego-to-camera transform: `p_cam = R * p_ego + t`.
#[derive(Debug, Clone, PartialEq)]
pub struct RigidTransform {
    pub rotation: Mat3,
    pub translation: Vec3,
}

impl RigidTransform {
    pub const IDENTITY: Self = Self { rotation: Mat3::IDENTITY, translation: Vec3::ZERO };

    pub fn apply(&self, p: Vec3) -> Vec3 {
        self.rotation.apply(p) + self.translation
    }
}

/// Pinhole camera: intrinsics, image size and ego-to-camera extrinsics.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraModel {
    pub name: String,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    pub ego_to_cam: RigidTransform,
}

impl CameraModel {
    pub fn validate(&self) -> Result<(), Error> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::InvalidBox { field: "fx/fy" });
        }
        if self.ego_to_cam.rotation.orthonormality_error() > 1e-9 {
            return Err(Error::InvalidBox { field: "ego_to_cam.rotation" });
        }
        Ok(())
    }

    /// Camera optical center expressed in the ego frame.
    pub fn optical_center(&self) -> Vec3 {
        -self
            .ego_to_cam
            .rotation
            .transpose()
            .apply(self.ego_to_cam.translation)
    }
}

/// Per-side trust flags for a projected box: a side is legal when its
/// extremum comes from an actual box corner rather than a near-plane clip
/// intersection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EdgeLegality {
    pub left: bool,
    pub right: bool,
    pub top: bool,
    pub bottom: bool,
}

impl EdgeLegality {
    pub const ALL: Self = Self { left: true, right: true, top: true, bottom: true };

    /// Flags in the fixed order left, top, right, bottom (matching
    /// [`Box2D::edges`]).
    pub fn flags(&self) -> [bool; 4] {
        [self.left, self.top, self.right, self.bottom]
    }
}

/// Corner enumeration: 0-3 are the bottom face counterclockwise (seen from
/// above) starting at box-frame (+l/2, +w/2, -h/2); 4-7 are the top face in
/// the same order.
pub fn box_corners(b: &Box3D) -> [Vec3; 8] {
    let (hl, hw, hh) = (b.l / 2.0, b.w / 2.0, b.h / 2.0);
    let signs = [[1.0, 1.0], [-1.0, 1.0], [-1.0, -1.0], [1.0, -1.0]];
    let mut out = [Vec3::ZERO; 8];
    for (i, [sx, sy]) in signs.iter().enumerate() {
        out[i] = b.from_box_frame(Vec3::new(sx * hl, sy * hw, -hh));
        out[i + 4] = b.from_box_frame(Vec3::new(sx * hl, sy * hw, hh));
    }
    out
}

/// The 12 wireframe segments of a box as corner-index pairs: bottom ring,
/// top ring, then the vertical edges.
pub const WIREFRAME_EDGES: [(usize, usize); 12] = [
    (0, 1),
    (1, 2),
    (2, 3),
    (3, 0),
    (4, 5),
    (5, 6),
    (6, 7),
    (7, 4),
    (0, 4),
    (1, 5),
    (2, 6),
    (3, 7),
];

/// Project an ego-frame point. Returns pixel coordinates and camera depth,
/// or `None` when the point is at or behind the near plane.
pub fn project_point(cam: &CameraModel, p: Vec3) -> Option<((f64, f64), f64)> {
    let c = cam.ego_to_cam.apply(p);
    if c.z > NEAR_PLANE {
        Some(((cam.fx * c.x / c.z + cam.cx, cam.fy * c.y / c.z + cam.cy), c.z))
    } else {
        None
    }
}

#[inline]
fn project_cam_point(cam: &CameraModel, c: Vec3) -> (f64, f64) {
    (cam.fx * c.x / c.z + cam.cx, cam.fy * c.y / c.z + cam.cy)
}

/// Project a 3D box to its axis-aligned pixel hull with per-side legality.
///
/// The 12 wireframe segments are clipped against the near plane; the hull is
/// taken over all surviving endpoints (original corners and clip
/// intersections) and is NOT clamped to the image bounds. A side is legal iff
/// its extremum is attained by an original, unclipped corner.
pub fn project_box(cam: &CameraModel, b: &Box3D) -> Result<(Box2D, EdgeLegality), Error> {
    let corners = box_corners(b);
    let mut cam_pts = [Vec3::ZERO; 8];
    for (i, c) in corners.iter().enumerate() {
        cam_pts[i] = cam.ego_to_cam.apply(*c);
    }

    // (pixel, from_original_corner)
    let mut pts: Vec<((f64, f64), bool)> = Vec::with_capacity(16);
    for c in &cam_pts {
        if c.z > NEAR_PLANE {
            pts.push((project_cam_point(cam, *c), true));
        }
    }
    for &(i, j) in &WIREFRAME_EDGES {
        let (a, c) = (cam_pts[i], cam_pts[j]);
        if (a.z - NEAR_PLANE) * (c.z - NEAR_PLANE) < 0.0 {
            let t = (NEAR_PLANE - a.z) / (c.z - a.z);
            let p = a + (c - a).scale(t);
            pts.push((project_cam_point(cam, p), false));
        }
    }
    if pts.is_empty() {
        return Err(Error::EntirelyBehindCamera);
    }

    let mut x_min = f64::INFINITY;
    let mut y_min = f64::INFINITY;
    let mut x_max = f64::NEG_INFINITY;
    let mut y_max = f64::NEG_INFINITY;
    for ((px, py), _) in &pts {
        x_min = x_min.min(*px);
        x_max = x_max.max(*px);
        y_min = y_min.min(*py);
        y_max = y_max.max(*py);
    }

    let tol = 1e-9;
    let mut legal = EdgeLegality { left: false, right: false, top: false, bottom: false };
    for ((px, py), original) in &pts {
        if !original {
            continue;
        }
        legal.left |= (*px - x_min) <= tol;
        legal.right |= (x_max - *px) <= tol;
        legal.top |= (*py - y_min) <= tol;
        legal.bottom |= (y_max - *py) <= tol;
    }

    Ok((Box2D { x_min, y_min, x_max, y_max }, legal))
}

/// Projected wireframe segments of a box, clipped to the near plane. Used
/// for overlay rendering; segments entirely behind the camera are dropped.
pub fn project_wireframe(cam: &CameraModel, b: &Box3D) -> Vec<[(f64, f64); 2]> {
    let corners = box_corners(b);
    let mut cam_pts = [Vec3::ZERO; 8];
    for (i, c) in corners.iter().enumerate() {
        cam_pts[i] = cam.ego_to_cam.apply(*c);
    }
    let mut out = Vec::new();
    for &(i, j) in &WIREFRAME_EDGES {
        let (mut a, mut c) = (cam_pts[i], cam_pts[j]);
        if a.z <= NEAR_PLANE && c.z <= NEAR_PLANE {
            continue;
        }
        if a.z <= NEAR_PLANE || c.z <= NEAR_PLANE {
            let t = (NEAR_PLANE - a.z) / (c.z - a.z);
            let clip = a + (c - a).scale(t);
            if a.z <= NEAR_PLANE {
                a = clip;
            } else {
                c = clip;
            }
        }
        out.push([project_cam_point(cam, a), project_cam_point(cam, c)]);
    }
    out
}

/// Axis-aligned IoU. Defined as 0 when both boxes are degenerate (zero
/// area), avoiding 0/0.
pub fn iou_2d(a: &Box2D, b: &Box2D) -> f64 {
    let ix = (a.x_max.min(b.x_max) - a.x_min.max(b.x_min)).max(0.0);
    let iy = (a.y_max.min(b.y_max) - a.y_min.max(b.y_min)).max(0.0);
    let inter = ix * iy;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// Shoelace area of a polygon (positive for counterclockwise order).
fn polygon_area(poly: &[[f64; 2]]) -> f64 {
    if poly.len() < 3 {
        return 0.0;
    }
    let mut s = 0.0;
    for i in 0..poly.len() {
        let j = (i + 1) % poly.len();
        s += poly[i][0] * poly[j][1] - poly[j][0] * poly[i][1];
    }
    s / 2.0
}

/// Sutherland-Hodgman clip of a convex subject polygon against a
/// counterclockwise convex clip polygon.
fn clip_convex(subject: &[[f64; 2]], clip: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut poly = subject.to_vec();
    for i in 0..clip.len() {
        if poly.is_empty() {
            break;
        }
        let a = clip[i];
        let b = clip[(i + 1) % clip.len()];
        let side = |p: [f64; 2]| (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
        let mut out = Vec::with_capacity(poly.len() + 1);
        for k in 0..poly.len() {
            let s = poly[k];
            let e = poly[(k + 1) % poly.len()];
            let (ss, se) = (side(s), side(e));
            let s_in = ss >= 0.0;
            let e_in = se >= 0.0;
            if s_in != e_in {
                let t = ss / (ss - se);
                out.push([s[0] + (e[0] - s[0]) * t, s[1] + (e[1] - s[1]) * t]);
            }
            if e_in {
                out.push(e);
            }
        }
        poly = out;
    }
    poly
}

/// Intersection area of the two yawed footprint rectangles.
pub fn footprint_intersection_area(a: &Box3D, b: &Box3D) -> f64 {
    let pa = a.footprint();
    let pb = b.footprint();
    polygon_area(&clip_convex(&pa, &pb)).max(0.0)
}

/// Bird's-eye-view IoU of the yawed ground-plane footprints.
pub fn iou_bev(a: &Box3D, b: &Box3D) -> f64 {
    let inter = footprint_intersection_area(a, b);
    let union = a.l * a.w + b.l * b.w - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// 3D IoU: BEV intersection area times vertical overlap over the volume
/// union.
pub fn iou_3d(a: &Box3D, b: &Box3D) -> f64 {
    let inter_area = footprint_intersection_area(a, b);
    let z_lo = (a.z - a.h / 2.0).max(b.z - b.h / 2.0);
    let z_hi = (a.z + a.h / 2.0).min(b.z + b.h / 2.0);
    let inter = inter_area * (z_hi - z_lo).max(0.0);
    let union = a.volume() + b.volume() - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// Euclidean distance from `ref_point` to the nearest point of the solid
/// box; 0 when the point is inside.
pub fn egocentric_distance(b: &Box3D, ref_point: Vec3) -> f64 {
    let p = b.to_box_frame(ref_point);
    let dx = (math::abs(p.x) - b.l / 2.0).max(0.0);
    let dy = (math::abs(p.y) - b.w / 2.0).max(0.0);
    let dz = (math::abs(p.z) - b.h / 2.0).max(0.0);
    math::sqrt(dx * dx + dy * dy + dz * dz)
}

/// Recover (center, dims, yaw) from a corner array produced by
/// [`box_corners`]. Used by tests to close the round-trip.
pub fn box_from_corners(c: &[Vec3; 8]) -> Box3D {
    let mut center = Vec3::ZERO;
    for p in c {
        center = center + p.scale(1.0 / 8.0);
    }
    let along_l = c[0] - c[1];
    let l = along_l.norm();
    let w = (c[1] - c[2]).norm();
    let h = (c[4] - c[0]).norm();
    let yaw = math::atan2(along_l.y, along_l.x);
    Box3D { x: center.x, y: center.y, z: center.z, l, w, h, yaw }
}
