//! View-category classification, anchor point/edge construction, and the
//! four-parameter anchor-edge refinement.
//!
//! The refinement keeps the sensor-facing surface of the box fixed: for a
//! corner view the shared vertical edge between the two visible faces stays
//! put, for a front view the supporting plane of the single visible face
//! stays put. Only the lengths of the four anchor edges change, so the
//! egocentric distance to the object is preserved by construction.

use crate::error::Error;
use crate::geometry::{project_point, Box3D, CameraModel, Vec3};
use crate::math;

/// One of the 8 sensor-object relative views. Even indices see a single side
/// face (front view), odd indices see two adjacent faces (corner view).
///
/// Index assignment, in the box frame: 0 = only +x face visible, then
/// counterclockwise (1 = +x & +y corner, 2 = only +y, 3 = -x & +y,
/// 4 = only -x, 5 = -x & -y, 6 = only -y, 7 = +x & -y).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ViewCategory {
    index: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViewKind {
    /// One visible side face.
    FrontView,
    /// Two visible side faces sharing a vertical edge.
    CornerView,
}

impl ViewCategory {
    pub fn from_index(index: u8) -> Option<Self> {
        (index < 8).then_some(Self { index })
    }

    pub fn index(self) -> u8 {
        self.index
    }

    pub fn kind(self) -> ViewKind {
        if self.index % 2 == 0 {
            ViewKind::FrontView
        } else {
            ViewKind::CornerView
        }
    }

    /// Signs of the visible faces in the box frame: (x_sign, y_sign), where
    /// 0 means the corresponding pair of faces is not visible.
    pub fn face_signs(self) -> (f64, f64) {
        match self.index {
            0 => (1.0, 0.0),
            1 => (1.0, 1.0),
            2 => (0.0, 1.0),
            3 => (-1.0, 1.0),
            4 => (-1.0, 0.0),
            5 => (-1.0, -1.0),
            6 => (0.0, -1.0),
            7 => (1.0, -1.0),
            _ => unreachable!(),
        }
    }
}

/// A directed anchor edge: unit direction in the ego frame plus the length
/// it has before refinement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnchorEdge {
    pub direction: Vec3,
    pub base_len: f64,
}

/// Anchor point and the four anchor edges for one box/view pair.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorSpec {
    pub category: ViewCategory,
    pub anchor_point: Vec3,
    pub edge_left: AnchorEdge,
    pub edge_right: AnchorEdge,
    pub edge_up: AnchorEdge,
    pub edge_down: AnchorEdge,
}

/// The four anchor-edge scale factors, each in the open interval (0, 2).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefineParams {
    pub d_left: f64,
    pub d_right: f64,
    pub d_up: f64,
    pub d_down: f64,
}

impl RefineParams {
    pub const IDENTITY: Self = Self { d_left: 1.0, d_right: 1.0, d_up: 1.0, d_down: 1.0 };

    pub fn new(d_left: f64, d_right: f64, d_up: f64, d_down: f64) -> Result<Self, Error> {
        let p = Self { d_left, d_right, d_up, d_down };
        for (i, v) in p.as_array().into_iter().enumerate() {
            if !(v.is_finite() && v > 0.0 && v < 2.0) {
                return Err(Error::InvalidParam { component: i, value: v });
            }
        }
        Ok(p)
    }

    /// Components in the fixed order left, right, up, down.
    pub fn as_array(self) -> [f64; 4] {
        [self.d_left, self.d_right, self.d_up, self.d_down]
    }

    pub fn from_array(a: [f64; 4]) -> Result<Self, Error> {
        Self::new(a[0], a[1], a[2], a[3])
    }
}

/// Classify the sensor-object relative view.
///
/// The sensor's horizontal position must lie strictly outside the box
/// footprint; a face is visible iff the sensor lies beyond its supporting
/// plane.
pub fn classify_view(b: &Box3D, sensor: Vec3) -> Result<ViewCategory, Error> {
    let p = b.to_box_frame(sensor);
    let px = p.x > b.l / 2.0;
    let nx = p.x < -b.l / 2.0;
    let py = p.y > b.w / 2.0;
    let ny = p.y < -b.w / 2.0;
    let index = match (px, nx, py, ny) {
        (true, _, false, false) => 0,
        (true, _, true, _) => 1,
        (false, false, true, _) => 2,
        (_, true, true, _) => 3,
        (_, true, false, false) => 4,
        (_, true, _, true) => 5,
        (false, false, _, true) => 6,
        (true, _, _, true) => 7,
        _ => return Err(Error::SensorInsideFootprint),
    };
    Ok(ViewCategory { index })
}

// A horizontal anchor edge described in the box frame: it starts at the
// anchor point, runs along `axis` (0 = box x, 1 = box y) with direction
// `sign`, and has base length `base_len`.
#[derive(Debug, Clone, Copy)]
struct BoxFrameEdge {
    axis: usize,
    sign: f64,
    base_len: f64,
}

impl BoxFrameEdge {
    fn direction(&self) -> Vec3 {
        match self.axis {
            0 => Vec3::new(self.sign, 0.0, 0.0),
            _ => Vec3::new(0.0, self.sign, 0.0),
        }
    }
}

fn horizontal_edges(b: &Box3D, cat: ViewCategory) -> (Vec3, BoxFrameEdge, BoxFrameEdge) {
    let (sx, sy) = cat.face_signs();
    match cat.kind() {
        ViewKind::CornerView => {
            // Anchor at the vertical edge shared by the two visible faces.
            let anchor = Vec3::new(sx * b.l / 2.0, sy * b.w / 2.0, 0.0);
            // Along the +-x face the edge runs in -+y; along the +-y face in -+x.
            let along_x_face = BoxFrameEdge { axis: 1, sign: -sy, base_len: b.w };
            let along_y_face = BoxFrameEdge { axis: 0, sign: -sx, base_len: b.l };
            (anchor, along_x_face, along_y_face)
        }
        ViewKind::FrontView => {
            if sx != 0.0 {
                let anchor = Vec3::new(sx * b.l / 2.0, 0.0, 0.0);
                let a = BoxFrameEdge { axis: 1, sign: 1.0, base_len: b.w / 2.0 };
                let c = BoxFrameEdge { axis: 1, sign: -1.0, base_len: b.w / 2.0 };
                (anchor, a, c)
            } else {
                let anchor = Vec3::new(0.0, sy * b.w / 2.0, 0.0);
                let a = BoxFrameEdge { axis: 0, sign: 1.0, base_len: b.l / 2.0 };
                let c = BoxFrameEdge { axis: 0, sign: -1.0, base_len: b.l / 2.0 };
                (anchor, a, c)
            }
        }
    }
}

// Counterclockwise tie-break: the edge whose box-frame direction has the
// larger polar angle is "left".
fn ccw_first(a: &BoxFrameEdge, c: &BoxFrameEdge) -> bool {
    let ang = |e: &BoxFrameEdge| {
        let d = e.direction();
        math::atan2(d.y, d.x)
    };
    ang(a) >= ang(c)
}

/// Build the anchor point and anchor edges for a classified view.
///
/// `left`/`right` are assigned so that the far endpoint of `edge_left`
/// projects to a smaller image x than that of `edge_right`; if either far
/// endpoint cannot be projected, a box-frame counterclockwise tie-break is
/// used instead.
pub fn anchor_spec(b: &Box3D, cat: ViewCategory, cam: &CameraModel) -> AnchorSpec {
    let (anchor_bf, e0, e1) = horizontal_edges(b, cat);
    let anchor = b.from_box_frame(anchor_bf);

    let far = |e: &BoxFrameEdge| {
        b.from_box_frame(anchor_bf + e.direction().scale(e.base_len))
    };
    let px0 = project_point(cam, far(&e0)).map(|((x, _), _)| x);
    let px1 = project_point(cam, far(&e1)).map(|((x, _), _)| x);
    let e0_is_left = match (px0, px1) {
        (Some(x0), Some(x1)) if x0 != x1 => x0 < x1,
        _ => ccw_first(&e0, &e1),
    };
    let (el, er) = if e0_is_left { (e0, e1) } else { (e1, e0) };

    let to_ego_dir = |e: &BoxFrameEdge| crate::geometry::Mat3::yaw(b.yaw).apply(e.direction());
    AnchorSpec {
        category: cat,
        anchor_point: anchor,
        edge_left: AnchorEdge { direction: to_ego_dir(&el), base_len: el.base_len },
        edge_right: AnchorEdge { direction: to_ego_dir(&er), base_len: er.base_len },
        edge_up: AnchorEdge { direction: Vec3::UP, base_len: b.h / 2.0 },
        edge_down: AnchorEdge { direction: -Vec3::UP, base_len: b.h / 2.0 },
    }
}

// Recover the box-frame description of a horizontal anchor edge from its
// ego-frame direction.
fn edge_in_box_frame(b: &Box3D, e: &AnchorEdge) -> BoxFrameEdge {
    let d = crate::geometry::Mat3::yaw(-b.yaw).apply(e.direction);
    if math::abs(d.x) >= math::abs(d.y) {
        BoxFrameEdge { axis: 0, sign: if d.x >= 0.0 { 1.0 } else { -1.0 }, base_len: e.base_len }
    } else {
        BoxFrameEdge { axis: 1, sign: if d.y >= 0.0 { 1.0 } else { -1.0 }, base_len: e.base_len }
    }
}

/// Apply refinement parameters to a box whose anchor spec was derived from
/// it. Yaw is unchanged exactly; the anchored face planes (front view) or
/// the shared vertical edge (corner view) stay fixed.
pub fn apply_refinement(b: &Box3D, spec: &AnchorSpec, d: &RefineParams) -> Box3D {
    let anchor_bf = b.to_box_frame(spec.anchor_point);
    let el = edge_in_box_frame(b, &spec.edge_left);
    let er = edge_in_box_frame(b, &spec.edge_right);

    let mut center = [0.0, 0.0]; // box-frame x, y
    let mut dims = [b.l, b.w];

    match spec.category.kind() {
        ViewKind::CornerView => {
            for (e, scale) in [(&el, d.d_left), (&er, d.d_right)] {
                let a = if e.axis == 0 { anchor_bf.x } else { anchor_bf.y };
                let new_dim = scale * e.base_len;
                dims[e.axis] = new_dim;
                center[e.axis] = a + e.sign * new_dim / 2.0;
            }
        }
        ViewKind::FrontView => {
            // Both horizontal edges share an axis; the perpendicular axis
            // (the visible face's normal) keeps its dimension and center.
            let axis = el.axis;
            let perp = 1 - axis;
            let base = el.base_len;
            let a = if axis == 0 { anchor_bf.x } else { anchor_bf.y };
            let lo = a + el.sign * d.d_left * base;
            let hi = a + er.sign * d.d_right * base;
            dims[axis] = (d.d_left + d.d_right) * base;
            center[axis] = (lo + hi) / 2.0;
            center[perp] = 0.0;
            dims[perp] = if perp == 0 { b.l } else { b.w };
        }
    }

    let new_h = (d.d_up + d.d_down) * b.h / 2.0;
    let center_z = anchor_bf.z + (d.d_up - d.d_down) * b.h / 4.0;

    let c = b.from_box_frame(Vec3::new(center[0], center[1], center_z));
    Box3D { x: c.x, y: c.y, z: c.z, l: dims[0], w: dims[1], h: new_h, yaw: b.yaw }
}

/// Componentwise composition of refinement parameters.
pub fn compose_params(d1: &RefineParams, d2: &RefineParams) -> Result<RefineParams, Error> {
    let a = d1.as_array();
    let b = d2.as_array();
    let mut out = [0.0; 4];
    for i in 0..4 {
        out[i] = a[i] * b[i];
        if !(out[i] > 0.0 && out[i] < 2.0) {
            return Err(Error::OutOfRange { component: i, value: out[i] });
        }
    }
    Ok(RefineParams { d_left: out[0], d_right: out[1], d_up: out[2], d_down: out[3] })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Mat3, RigidTransform};
    use alloc::string::String;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};

    // Camera at the ego origin looking along ego +x (the automotive front
    // camera): cam x = ego -y, cam y = ego -z, cam z = ego +x.
    fn front_camera() -> CameraModel {
        CameraModel {
            name: String::from("front"),
            fx: 1200.0,
            fy: 1200.0,
            cx: 960.0,
            cy: 640.0,
            width: 1920,
            height: 1280,
            ego_to_cam: RigidTransform {
                rotation: Mat3([[0.0, -1.0, 0.0], [0.0, 0.0, -1.0], [1.0, 0.0, 0.0]]),
                translation: crate::geometry::Vec3::ZERO,
            },
        }
    }

    fn rand_box(rng: &mut impl Rng) -> Box3D {
        Box3D::new(
            rng.gen_range(8.0..40.0),
            rng.gen_range(-15.0..15.0),
            rng.gen_range(0.5..1.5),
            rng.gen_range(3.0..6.0),
            rng.gen_range(1.5..2.5),
            rng.gen_range(1.3..2.2),
            rng.gen_range(-3.1..3.1),
        )
        .unwrap()
    }

    #[test]
    fn classify_regions() {
        let b = Box3D::new(0.0, 0.0, 0.0, 4.0, 2.0, 2.0, 0.0).unwrap();
        let cases = [
            ((10.0, 0.0), 0),
            ((10.0, 10.0), 1),
            ((0.0, 10.0), 2),
            ((-10.0, 10.0), 3),
            ((-10.0, 0.0), 4),
            ((-10.0, -10.0), 5),
            ((0.0, -10.0), 6),
            ((10.0, -10.0), 7),
        ];
        for ((x, y), want) in cases {
            let cat = classify_view(&b, Vec3::new(x, y, 0.0)).unwrap();
            assert_eq!(cat.index(), want, "sensor at ({x}, {y})");
            assert_eq!(
                cat.kind(),
                if want % 2 == 0 { ViewKind::FrontView } else { ViewKind::CornerView }
            );
        }
        assert_eq!(
            classify_view(&b, Vec3::new(0.0, 0.0, 0.0)),
            Err(Error::SensorInsideFootprint)
        );
    }

    #[test]
    fn classify_matches_face_normal_visibility() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        for _ in 0..500 {
            let b = rand_box(&mut rng);
            let sensor = Vec3::new(rng.gen_range(-50.0..50.0), rng.gen_range(-50.0..50.0), 1.5);
            let p = b.to_box_frame(sensor);
            if p.x.abs() <= b.l / 2.0 && p.y.abs() <= b.w / 2.0 {
                assert!(classify_view(&b, sensor).is_err());
                continue;
            }
            let cat = classify_view(&b, sensor).unwrap();
            // face-normal visibility: sensor beyond the supporting plane
            let visible = [
                p.x > b.l / 2.0,
                p.y > b.w / 2.0,
                p.x < -b.l / 2.0,
                p.y < -b.w / 2.0,
            ];
            let (sx, sy) = cat.face_signs();
            assert_eq!(visible[0], sx > 0.0);
            assert_eq!(visible[1], sy > 0.0);
            assert_eq!(visible[2], sx < 0.0);
            assert_eq!(visible[3], sy < 0.0);
        }
    }

    #[test]
    fn anchor_front_view_analytic() {
        let cam = front_camera();
        let b = Box3D::new(10.0, 0.0, 0.0, 4.0, 2.0, 2.0, 0.0).unwrap();
        let cat = classify_view(&b, cam.optical_center()).unwrap();
        assert_eq!(cat.index(), 4); // camera at origin sees the -x face
        let spec = anchor_spec(&b, cat, &cam);
        assert_abs_diff_eq!(spec.anchor_point.x, 8.0, epsilon = 1e-12);
        assert_abs_diff_eq!(spec.anchor_point.y, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(spec.anchor_point.z, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(spec.edge_up.base_len, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(spec.edge_left.base_len, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(spec.edge_right.base_len, 1.0, epsilon = 1e-12);
        // left/right by image x: ego +y projects left of ego -y
        assert_abs_diff_eq!(spec.edge_left.direction.y, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(spec.edge_right.direction.y, -1.0, epsilon = 1e-12);
    }

    #[test]
    fn anchor_corner_view_analytic() {
        let cam = front_camera();
        // box ahead and to the left; camera sees the -x and -y faces
        let b = Box3D::new(10.0, 10.0, 0.0, 4.0, 2.0, 2.0, 0.0).unwrap();
        let cat = classify_view(&b, cam.optical_center()).unwrap();
        assert_eq!(cat.index(), 5);
        let spec = anchor_spec(&b, cat, &cam);
        assert_abs_diff_eq!(spec.anchor_point.x, 8.0, epsilon = 1e-12);
        assert_abs_diff_eq!(spec.anchor_point.y, 9.0, epsilon = 1e-12);
        let lens = [spec.edge_left.base_len, spec.edge_right.base_len];
        assert!(lens.contains(&4.0) && lens.contains(&2.0));
        assert_abs_diff_eq!(
            spec.edge_left.direction.dot(spec.edge_right.direction),
            0.0,
            epsilon = 1e-9
        );
    }

    #[test]
    fn corner_anchor_is_nearest_vertical_edge() {
        let cam = front_camera();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let sensor = cam.optical_center();
        let mut seen = 0;
        while seen < 200 {
            let b = rand_box(&mut rng);
            let cat = match classify_view(&b, sensor) {
                Ok(c) => c,
                Err(_) => continue,
            };
            if cat.kind() != ViewKind::CornerView {
                continue;
            }
            seen += 1;
            let spec = anchor_spec(&b, cat, &cam);
            // brute force over the 4 vertical edge midpoints
            let mut best = None;
            for (sx, sy) in [(1.0, 1.0), (-1.0, 1.0), (-1.0, -1.0), (1.0, -1.0)] {
                let m = b.from_box_frame(Vec3::new(sx * b.l / 2.0, sy * b.w / 2.0, 0.0));
                let dist = (m - sensor).norm();
                if best.map_or(true, |(d, _)| dist < d) {
                    best = Some((dist, m));
                }
            }
            let (_, m) = best.unwrap();
            assert_abs_diff_eq!(spec.anchor_point.x, m.x, epsilon = 1e-9);
            assert_abs_diff_eq!(spec.anchor_point.y, m.y, epsilon = 1e-9);
        }
    }

    #[test]
    fn refinement_identity() {
        let cam = front_camera();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let b = rand_box(&mut rng);
            let cat = match classify_view(&b, cam.optical_center()) {
                Ok(c) => c,
                Err(_) => continue,
            };
            let spec = anchor_spec(&b, cat, &cam);
            let r = apply_refinement(&b, &spec, &RefineParams::IDENTITY);
            assert_abs_diff_eq!(r.x, b.x, epsilon = 1e-12);
            assert_abs_diff_eq!(r.y, b.y, epsilon = 1e-12);
            assert_abs_diff_eq!(r.z, b.z, epsilon = 1e-12);
            assert_abs_diff_eq!(r.l, b.l, epsilon = 1e-12);
            assert_abs_diff_eq!(r.w, b.w, epsilon = 1e-12);
            assert_abs_diff_eq!(r.h, b.h, epsilon = 1e-12);
            assert_eq!(r.yaw, b.yaw);
        }
    }

    #[test]
    fn refinement_vertical_update() {
        let cam = front_camera();
        let b = Box3D::new(10.0, 0.0, 0.0, 4.0, 2.0, 2.0, 0.0).unwrap();
        let cat = classify_view(&b, cam.optical_center()).unwrap();
        let spec = anchor_spec(&b, cat, &cam);
        let d = RefineParams::new(1.0, 1.0, 1.5, 0.5).unwrap();
        let r = apply_refinement(&b, &spec, &d);
        assert_abs_diff_eq!(r.h, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.z, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(r.l, b.l, epsilon = 1e-12);
        assert_abs_diff_eq!(r.w, b.w, epsilon = 1e-12);
    }

    #[test]
    fn refinement_front_view_slide() {
        let cam = front_camera();
        let b = Box3D::new(10.0, 0.0, 0.0, 4.0, 2.0, 2.0, 0.0).unwrap();
        let cat = classify_view(&b, cam.optical_center()).unwrap();
        let spec = anchor_spec(&b, cat, &cam);
        let d = RefineParams::new(0.5, 1.5, 1.0, 1.0).unwrap();
        let r = apply_refinement(&b, &spec, &d);
        // face dim (w) stays 2; center slides 0.5 toward edge_right
        assert_abs_diff_eq!(r.w, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.l, 4.0, epsilon = 1e-12);
        let slide = Vec3::new(r.x - b.x, r.y - b.y, r.z - b.z);
        assert_abs_diff_eq!(slide.dot(spec.edge_right.direction), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(slide.norm(), 0.5, epsilon = 1e-12);
        // visible face plane unchanged: anchor stays on the -x face
        let pf = r.to_box_frame(spec.anchor_point);
        assert_abs_diff_eq!(pf.x, -r.l / 2.0, epsilon = 1e-12);
    }

    #[test]
    fn compose_cases() {
        let id = RefineParams::IDENTITY;
        let d = RefineParams::new(0.7, 1.3, 0.9, 1.1).unwrap();
        assert_eq!(compose_params(&id, &d).unwrap(), d);
        let a = RefineParams::new(0.5, 0.5, 1.2, 1.0).unwrap();
        let b = RefineParams::new(1.8, 1.0, 1.0, 1.0).unwrap();
        let c = compose_params(&a, &b).unwrap();
        assert_abs_diff_eq!(c.d_left, 0.9, epsilon = 1e-12);
        assert_abs_diff_eq!(c.d_right, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(c.d_up, 1.2, epsilon = 1e-12);
        assert_abs_diff_eq!(c.d_down, 1.0, epsilon = 1e-12);
        let big = RefineParams::new(1.9, 1.0, 1.0, 1.0).unwrap();
        assert!(matches!(compose_params(&big, &big), Err(Error::OutOfRange { component: 0, .. })));
    }

    fn rand_params(rng: &mut impl Rng) -> RefineParams {
        RefineParams::new(
            rng.gen_range(0.75..1.25),
            rng.gen_range(0.75..1.25),
            rng.gen_range(0.75..1.25),
            rng.gen_range(0.75..1.25),
        )
        .unwrap()
    }

    #[test]
    fn composition_matches_sequential_refinement() {
        // Exact multiplicative composition requires the anchor point to be a
        // fixed point of the refinement map: the corner-view shared edge is,
        // the vertical midpoint and the front-view face center are not once
        // the scaling is asymmetric (the re-derived anchor moves with them).
        // The test therefore draws symmetric up/down factors, and symmetric
        // left/right for front views; corner-view horizontal factors are
        // unrestricted.
        let cam = front_camera();
        let sensor = cam.optical_center();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(77);
        let mut checked = 0;
        while checked < 500 {
            let b = rand_box(&mut rng);
            let cat = match classify_view(&b, sensor) {
                Ok(c) => c,
                Err(_) => continue,
            };
            let symmetric = |rng: &mut rand_chacha::ChaCha8Rng| {
                let v = rng.gen_range(0.75..1.25);
                let (l, r) = if cat.kind() == ViewKind::FrontView {
                    let s = rng.gen_range(0.75..1.25);
                    (s, s)
                } else {
                    (rng.gen_range(0.75..1.25), rng.gen_range(0.75..1.25))
                };
                RefineParams::new(l, r, v, v).unwrap()
            };
            let d1 = symmetric(&mut rng);
            let d2 = symmetric(&mut rng);
            let spec = anchor_spec(&b, cat, &cam);
            let once = apply_refinement(&b, &spec, &d1);
            let cat2 = match classify_view(&once, sensor) {
                Ok(c) => c,
                Err(_) => continue,
            };
            if cat2 != cat {
                continue;
            }
            let spec2 = anchor_spec(&once, cat2, &cam);
            let twice = apply_refinement(&once, &spec2, &d2);
            // left/right labels come from image-x ordering and may flip once
            // the edge lengths change; align d2 with the physical edges of
            // the original spec before composing.
            let aligned_d2 = if spec2.edge_left.direction.dot(spec.edge_left.direction) > 0.0 {
                d2
            } else {
                RefineParams { d_left: d2.d_right, d_right: d2.d_left, ..d2 }
            };
            let composed = compose_params(&d1, &aligned_d2).unwrap();
            let direct = apply_refinement(&b, &spec, &composed);
            assert_abs_diff_eq!(twice.x, direct.x, epsilon = 1e-9);
            assert_abs_diff_eq!(twice.y, direct.y, epsilon = 1e-9);
            assert_abs_diff_eq!(twice.z, direct.z, epsilon = 1e-9);
            assert_abs_diff_eq!(twice.l, direct.l, epsilon = 1e-9);
            assert_abs_diff_eq!(twice.w, direct.w, epsilon = 1e-9);
            assert_abs_diff_eq!(twice.h, direct.h, epsilon = 1e-9);
            assert_eq!(twice.yaw, direct.yaw);
            checked += 1;
        }
    }

    #[test]
    fn corner_view_horizontal_composition_unrestricted() {
        // The shared vertical edge is fixed under refinement, so the
        // horizontal components compose multiplicatively for any factors.
        let cam = front_camera();
        let sensor = cam.optical_center();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(78);
        let mut checked = 0;
        while checked < 300 {
            let b = rand_box(&mut rng);
            let d1 = rand_params(&mut rng);
            let d2 = rand_params(&mut rng);
            let cat = match classify_view(&b, sensor) {
                Ok(c) => c,
                Err(_) => continue,
            };
            if cat.kind() != ViewKind::CornerView {
                continue;
            }
            let spec = anchor_spec(&b, cat, &cam);
            let once = apply_refinement(&b, &spec, &d1);
            let cat2 = match classify_view(&once, sensor) {
                Ok(c) => c,
                Err(_) => continue,
            };
            if cat2 != cat {
                continue;
            }
            let spec2 = anchor_spec(&once, cat2, &cam);
            let twice = apply_refinement(&once, &spec2, &d2);
            let aligned_d2 = if spec2.edge_left.direction.dot(spec.edge_left.direction) > 0.0 {
                d2
            } else {
                RefineParams { d_left: d2.d_right, d_right: d2.d_left, ..d2 }
            };
            let composed = compose_params(&d1, &aligned_d2).unwrap();
            let direct = apply_refinement(&b, &spec, &composed);
            assert_abs_diff_eq!(twice.x, direct.x, epsilon = 1e-9);
            assert_abs_diff_eq!(twice.y, direct.y, epsilon = 1e-9);
            assert_abs_diff_eq!(twice.l, direct.l, epsilon = 1e-9);
            assert_abs_diff_eq!(twice.w, direct.w, epsilon = 1e-9);
            checked += 1;
        }
    }

    #[test]
    fn anchored_planes_preserved() {
        let cam = front_camera();
        let sensor = cam.optical_center();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(23);
        let mut checked = 0;
        while checked < 500 {
            let b = rand_box(&mut rng);
            let d = rand_params(&mut rng);
            let cat = match classify_view(&b, sensor) {
                Ok(c) => c,
                Err(_) => continue,
            };
            let spec = anchor_spec(&b, cat, &cam);
            let r = apply_refinement(&b, &spec, &d);
            let (sx, sy) = cat.face_signs();
            // signed distance from the sensor to each anchored face plane
            let plane_dist = |bx: &Box3D, axis: usize, sign: f64| {
                let p = bx.to_box_frame(sensor);
                match axis {
                    0 => sign * p.x - bx.l / 2.0,
                    _ => sign * p.y - bx.w / 2.0,
                }
            };
            if sx != 0.0 {
                assert_abs_diff_eq!(plane_dist(&b, 0, sx), plane_dist(&r, 0, sx), epsilon = 1e-9);
            }
            if sy != 0.0 {
                assert_abs_diff_eq!(plane_dist(&b, 1, sy), plane_dist(&r, 1, sy), epsilon = 1e-9);
            }
            if cat.kind() == ViewKind::CornerView {
                // the anchor point must still sit on the shared vertical edge
                let pf = r.to_box_frame(spec.anchor_point);
                assert_abs_diff_eq!(pf.x, sx * r.l / 2.0, epsilon = 1e-9);
                assert_abs_diff_eq!(pf.y, sy * r.w / 2.0, epsilon = 1e-9);
            }
            assert_eq!(r.yaw, b.yaw);
            checked += 1;
        }
    }
}
