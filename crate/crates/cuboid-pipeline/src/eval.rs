//! Evaluation: 2D tightness before/after refinement against ground truth,
//! recall at fixed IoU thresholds, and 3D agreement between the input and
//! refined boxes, reported per camera and in aggregate.

use std::collections::BTreeMap;

use cuboid_core::geometry::{iou_2d, iou_3d, iou_bev, project_box, Box2D};
use thiserror::Error;

use crate::dataset::{Frame, TruthRecord};

pub const RECALL_THRESHOLDS: [f64; 3] = [0.5, 0.7, 0.9];

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("before/after frame count mismatch: {before} vs {after}")]
    FrameCountMismatch { before: usize, after: usize },
    #[error("frame {frame_id}: object `{object_id}` missing from the refined set")]
    MissingObject { frame_id: String, object_id: String },
    #[error("frame {frame_id}: object `{object_id}` references unknown camera `{camera}`")]
    UnknownCamera { frame_id: String, object_id: String, camera: String },
}

/// Accumulated statistics for one camera (or the aggregate).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Stats {
    pub count: usize,
    pub avg_iou_before: f64,
    pub avg_iou_after: f64,
    pub recall_before: [f64; 3],
    pub recall_after: [f64; 3],
    /// BEV / 3D IoU between the input box and the refined box; how far the
    /// refinement moved the geometry.
    pub mean_iou_bev: f64,
    pub mean_iou_3d: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub per_camera: BTreeMap<String, Stats>,
    pub aggregate: Stats,
    /// Objects skipped for want of any 2D target.
    pub skipped: usize,
}

#[derive(Default)]
struct Accum {
    count: usize,
    sum_before: f64,
    sum_after: f64,
    hits_before: [usize; 3],
    hits_after: [usize; 3],
    sum_bev: f64,
    sum_3d: f64,
}

impl Accum {
    fn push(&mut self, before: f64, after: f64, bev: f64, vol: f64) {
        self.count += 1;
        self.sum_before += before;
        self.sum_after += after;
        self.sum_bev += bev;
        self.sum_3d += vol;
        for (i, t) in RECALL_THRESHOLDS.iter().enumerate() {
            if before >= *t {
                self.hits_before[i] += 1;
            }
            if after >= *t {
                self.hits_after[i] += 1;
            }
        }
    }

    fn finish(&self) -> Stats {
        let n = self.count.max(1) as f64;
        let ratio = |h: [usize; 3]| [h[0] as f64 / n, h[1] as f64 / n, h[2] as f64 / n];
        Stats {
            count: self.count,
            avg_iou_before: self.sum_before / n,
            avg_iou_after: self.sum_after / n,
            recall_before: ratio(self.hits_before),
            recall_after: ratio(self.hits_after),
            mean_iou_bev: self.sum_bev / n,
            mean_iou_3d: self.sum_3d / n,
        }
    }
}

/// Compare `before` and `after` datasets object by object.
///
/// The 2D target for an object is the projection of its true cuboid when a
/// truth record exists; otherwise its stored ground-truth 2D box. The camera
/// is the truth record's staging camera, or the first ground-truth camera in
/// name order. Objects with neither are counted in `skipped`.
pub fn evaluate(
    before: &[Frame],
    after: &[Frame],
    truth: &[TruthRecord],
) -> Result<EvalReport, EvalError> {
    if before.len() != after.len() {
        return Err(EvalError::FrameCountMismatch { before: before.len(), after: after.len() });
    }
    let truth_by_key: BTreeMap<(&str, &str), &TruthRecord> = truth
        .iter()
        .map(|t| ((t.frame_id.as_str(), t.object_id.as_str()), t))
        .collect();

    let mut per_camera: BTreeMap<String, Accum> = BTreeMap::new();
    let mut aggregate = Accum::default();
    let mut skipped = 0usize;

    for (fb, fa) in before.iter().zip(after) {
        let after_objs: BTreeMap<&str, &crate::dataset::ObjectRecord> =
            fa.objects.iter().map(|o| (o.object_id.as_str(), o)).collect();

        for ob in &fb.objects {
            let oa = after_objs.get(ob.object_id.as_str()).ok_or_else(|| {
                EvalError::MissingObject {
                    frame_id: fb.frame_id.clone(),
                    object_id: ob.object_id.clone(),
                }
            })?;

            // pick camera + 2D target
            let rec = truth_by_key.get(&(fb.frame_id.as_str(), ob.object_id.as_str()));
            let (cam_name, target): (&str, Box2D) = match rec {
                Some(t) => {
                    let cam = fb.camera(&t.camera).ok_or_else(|| EvalError::UnknownCamera {
                        frame_id: fb.frame_id.clone(),
                        object_id: ob.object_id.clone(),
                        camera: t.camera.clone(),
                    })?;
                    match project_box(cam, &t.true_box3d) {
                        Ok((b2, _)) => (t.camera.as_str(), b2),
                        Err(_) => {
                            skipped += 1;
                            continue;
                        }
                    }
                }
                None => match ob.gt_box2d.iter().next() {
                    Some((name, b2)) => (name.as_str(), *b2),
                    None => {
                        skipped += 1;
                        continue;
                    }
                },
            };
            let cam = fb.camera(cam_name).ok_or_else(|| EvalError::UnknownCamera {
                frame_id: fb.frame_id.clone(),
                object_id: ob.object_id.clone(),
                camera: cam_name.to_string(),
            })?;

            let iou_before = match project_box(cam, &ob.box3d) {
                Ok((p, _)) => iou_2d(&p, &target),
                Err(_) => 0.0,
            };
            let iou_after = match project_box(cam, &oa.box3d) {
                Ok((p, _)) => iou_2d(&p, &target),
                Err(_) => 0.0,
            };
            let bev = iou_bev(&ob.box3d, &oa.box3d);
            let vol = iou_3d(&ob.box3d, &oa.box3d);

            aggregate.push(iou_before, iou_after, bev, vol);
            per_camera
                .entry(cam_name.to_string())
                .or_default()
                .push(iou_before, iou_after, bev, vol);
        }
    }

    // an empty dataset is not an error: report zero counts
    Ok(EvalReport {
        per_camera: per_camera.iter().map(|(k, v)| (k.clone(), v.finish())).collect(),
        aggregate: aggregate.finish(),
        skipped,
    })
}

impl EvalReport {
    /// Human-readable table: metric rows, one column per camera plus the
    /// average column.
    pub fn to_table(&self) -> String {
        let mut columns: Vec<(&str, &Stats)> =
            self.per_camera.iter().map(|(k, v)| (k.as_str(), v)).collect();
        columns.push(("Average", &self.aggregate));

        let mut out = String::new();
        out.push_str(&format!("{:<24}", "metric"));
        for (name, _) in &columns {
            out.push_str(&format!(" {name:>12}"));
        }
        out.push('\n');

        let mut row = |label: &str, f: &dyn Fn(&Stats) -> String| {
            out.push_str(&format!("{label:<24}"));
            for (_, s) in &columns {
                out.push_str(&format!(" {:>12}", f(s)));
            }
            out.push('\n');
        };
        row("Count", &|s| format!("{}", s.count));
        row("Avg. IoU (before)", &|s| format!("{:.4}", s.avg_iou_before));
        row("Avg. IoU (after)", &|s| format!("{:.4}", s.avg_iou_after));
        for (i, t) in RECALL_THRESHOLDS.iter().enumerate() {
            row(&format!("Recall(IoU>={t}) before"), &|s| format!("{:.4}", s.recall_before[i]));
            row(&format!("Recall(IoU>={t}) after"), &|s| format!("{:.4}", s.recall_after[i]));
        }
        row("BEV IoU vs input", &|s| format!("{:.4}", s.mean_iou_bev));
        row("3D IoU vs input", &|s| format!("{:.4}", s.mean_iou_3d));

        if self.skipped > 0 {
            out.push_str(&format!("(skipped {} objects without a 2D target)\n", self.skipped));
        }
        out
    }

    /// Machine-readable `key=value` lines, sorted, fixed precision: byte
    /// identical across runs on identical inputs.
    pub fn to_kv(&self) -> String {
        let mut lines = Vec::new();
        let mut emit = |prefix: &str, s: &Stats| {
            lines.push(format!("{prefix}.count={}", s.count));
            lines.push(format!("{prefix}.avg_iou_before={:.6}", s.avg_iou_before));
            lines.push(format!("{prefix}.avg_iou_after={:.6}", s.avg_iou_after));
            for (i, t) in RECALL_THRESHOLDS.iter().enumerate() {
                lines.push(format!(
                    "{prefix}.recall_before@{:.1}={:.6}",
                    t, s.recall_before[i]
                ));
                lines.push(format!(
                    "{prefix}.recall_after@{:.1}={:.6}",
                    t, s.recall_after[i]
                ));
            }
            lines.push(format!("{prefix}.mean_iou_bev={:.6}", s.mean_iou_bev));
            lines.push(format!("{prefix}.mean_iou_3d={:.6}", s.mean_iou_3d));
        };
        emit("aggregate", &self.aggregate);
        for (name, stats) in &self.per_camera {
            emit(&format!("camera.{name}"), stats);
        }
        lines.push(format!("skipped={}", self.skipped));
        lines.sort();
        lines.join("\n") + "\n"
    }
}
