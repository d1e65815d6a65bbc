//! SVG overlays: original wireframes in red, refined wireframes in green,
//! ground-truth 2D boxes in dashed blue, on a canvas matching the camera's
//! image size.

use std::collections::BTreeMap;
use std::fmt::Write;

use cuboid_core::geometry::{project_wireframe, Box3D};
use thiserror::Error;

use crate::dataset::Frame;

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("frame {frame_id} has no camera named `{camera}`")]
    UnknownCamera { frame_id: String, camera: String },
}

fn wireframe_group(out: &mut String, segments: &[[(f64, f64); 2]], class: &str, stroke: &str) {
    let _ = writeln!(out, r#"  <g class="{class}" stroke="{stroke}" fill="none" stroke-width="2">"#);
    for [(x1, y1), (x2, y2)] in segments {
        let _ = writeln!(
            out,
            r#"    <line x1="{x1:.2}" y1="{y1:.2}" x2="{x2:.2}" y2="{y2:.2}"/>"#
        );
    }
    let _ = writeln!(out, "  </g>");
}

/// Render one camera's view of a frame. `refined` maps object ids to their
/// refined boxes; objects without an entry get only the original wireframe.
pub fn render_svg(
    frame: &Frame,
    camera: &str,
    refined: &BTreeMap<String, Box3D>,
) -> Result<String, RenderError> {
    let cam = frame.camera(camera).ok_or_else(|| RenderError::UnknownCamera {
        frame_id: frame.frame_id.clone(),
        camera: camera.to_string(),
    })?;

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#,
        w = cam.width,
        h = cam.height
    );
    let _ = writeln!(
        out,
        r##"  <rect width="{w}" height="{h}" fill="#202020"/>"##,
        w = cam.width,
        h = cam.height
    );

    for obj in &frame.objects {
        let before = project_wireframe(cam, &obj.box3d);
        if !before.is_empty() {
            wireframe_group(&mut out, &before, "before", "red");
        }
        if let Some(rbox) = refined.get(&obj.object_id) {
            let after = project_wireframe(cam, rbox);
            if !after.is_empty() {
                wireframe_group(&mut out, &after, "after", "limegreen");
            }
        }
        if let Some(gt) = obj.gt_box2d.get(camera) {
            let _ = writeln!(
                out,
                r#"  <rect class="gt" x="{x:.2}" y="{y:.2}" width="{w:.2}" height="{h:.2}" fill="none" stroke="deepskyblue" stroke-width="2" stroke-dasharray="8 6"/>"#,
                x = gt.x_min,
                y = gt.y_min,
                w = gt.x_max - gt.x_min,
                h = gt.y_max - gt.y_min
            );
        }
    }

    let _ = writeln!(out, "</svg>");
    Ok(out)
}
