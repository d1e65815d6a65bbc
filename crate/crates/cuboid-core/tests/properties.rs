//! Property tests for the geometric invariants.

use cuboid_core::anchor::{anchor_spec, apply_refinement, classify_view, RefineParams};
use cuboid_core::geometry::{
    box_corners, box_from_corners, iou_2d, iou_3d, iou_bev, normalize_angle, project_box, Box2D,
    Box3D, CameraModel, Mat3, RigidTransform, Vec3,
};
use proptest::prelude::*;

fn front_camera() -> CameraModel {
    CameraModel {
        name: "front".into(),
        fx: 1200.0,
        fy: 1200.0,
        cx: 960.0,
        cy: 640.0,
        width: 1920,
        height: 1280,
        ego_to_cam: RigidTransform {
            rotation: Mat3([[0.0, -1.0, 0.0], [0.0, 0.0, -1.0], [1.0, 0.0, 0.0]]),
            translation: Vec3::ZERO,
        },
    }
}

fn arb_box() -> impl Strategy<Value = Box3D> {
    (
        -30.0f64..30.0,
        -30.0f64..30.0,
        -2.0f64..2.0,
        0.5f64..8.0,
        0.5f64..4.0,
        0.5f64..4.0,
        -3.14f64..3.14,
    )
        .prop_map(|(x, y, z, l, w, h, yaw)| Box3D::new(x, y, z, l, w, h, yaw).unwrap())
}

fn arb_box2d() -> impl Strategy<Value = Box2D> {
    (-100.0f64..100.0, -100.0f64..100.0, 0.0f64..200.0, 0.0f64..200.0)
        .prop_map(|(x, y, dw, dh)| Box2D::new(x, y, x + dw, y + dh).unwrap())
}

proptest! {
    #[test]
    fn corner_roundtrip(b in arb_box()) {
        let rec = box_from_corners(&box_corners(&b));
        prop_assert!((rec.x - b.x).abs() < 1e-9);
        prop_assert!((rec.y - b.y).abs() < 1e-9);
        prop_assert!((rec.z - b.z).abs() < 1e-9);
        prop_assert!((rec.l - b.l).abs() < 1e-9);
        prop_assert!((rec.w - b.w).abs() < 1e-9);
        prop_assert!((rec.h - b.h).abs() < 1e-9);
        prop_assert!(normalize_angle(rec.yaw - b.yaw).abs() < 1e-9);
    }

    #[test]
    fn iou_2d_symmetric_bounded(a in arb_box2d(), b in arb_box2d()) {
        let ab = iou_2d(&a, &b);
        let ba = iou_2d(&b, &a);
        prop_assert!((ab - ba).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert!((iou_2d(&a, &a) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn iou_bev_3d_symmetric_bounded(a in arb_box(), b in arb_box()) {
        let bev_ab = iou_bev(&a, &b);
        let bev_ba = iou_bev(&b, &a);
        prop_assert!((bev_ab - bev_ba).abs() < 1e-9);
        prop_assert!((-1e-12..=1.0 + 1e-12).contains(&bev_ab));
        let v_ab = iou_3d(&a, &b);
        prop_assert!((v_ab - iou_3d(&b, &a)).abs() < 1e-9);
        prop_assert!((-1e-12..=1.0 + 1e-12).contains(&v_ab));
        prop_assert!((iou_bev(&a, &a) - 1.0).abs() < 1e-12);
        prop_assert!((iou_3d(&a, &a) - 1.0).abs() < 1e-12);
    }

    // With identical vertical extents, 3D IoU equals BEV IoU scaled by the
    // shared height, i.e. the two agree.
    #[test]
    fn iou_3d_equals_bev_on_shared_vertical_extent(a in arb_box(), b in arb_box()) {
        let b = Box3D { z: a.z, h: a.h, ..b };
        prop_assert!((iou_3d(&a, &b) - iou_bev(&a, &b)).abs() < 1e-9);
    }

    // Boxes crossing the near plane never produce non-finite output.
    #[test]
    fn near_plane_outputs_finite(
        x in -3.0f64..3.0,
        y in -3.0f64..3.0,
        z in -1.5f64..1.5,
        l in 0.5f64..6.0,
        w in 0.5f64..3.0,
        h in 0.5f64..3.0,
        yaw in -3.14f64..3.14,
    ) {
        let cam = front_camera();
        // ego x is camera depth for this rig; center near x=0 straddles it
        let b = Box3D::new(x, y, z, l, w, h, yaw).unwrap();
        match project_box(&cam, &b) {
            Ok((p, _)) => {
                prop_assert!(p.x_min.is_finite() && p.x_max.is_finite());
                prop_assert!(p.y_min.is_finite() && p.y_max.is_finite());
            }
            Err(_) => {}
        }
    }

    // Identity refinement is the identity on every field.
    #[test]
    fn refinement_identity(b in arb_box()) {
        let cam = front_camera();
        let sensor = cam.optical_center();
        if let Ok(cat) = classify_view(&b, sensor) {
            let spec = anchor_spec(&b, cat, &cam);
            let r = apply_refinement(&b, &spec, &RefineParams::IDENTITY);
            prop_assert!((r.x - b.x).abs() < 1e-12);
            prop_assert!((r.y - b.y).abs() < 1e-12);
            prop_assert!((r.z - b.z).abs() < 1e-12);
            prop_assert!((r.l - b.l).abs() < 1e-12);
            prop_assert!((r.w - b.w).abs() < 1e-12);
            prop_assert!((r.h - b.h).abs() < 1e-12);
            prop_assert_eq!(r.yaw, b.yaw);
        }
    }
}
