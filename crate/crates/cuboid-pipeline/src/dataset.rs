//! Frame persistence (JSONL), synthetic scene generation with planted
//! refinement parameters, and the hidden truth sidecar.
//!
//! The synthetic generator replaces full-scale driving datasets with a
//! desk-scale oracle: it samples a true cuboid in some camera's frustum,
//! inversely scales its anchor edges so that refining the stored box with
//! the planted parameters recovers the true cuboid exactly, and optionally
//! perturbs the stored pose to mimic noisy upstream annotations.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use cuboid_core::anchor::{
    anchor_spec, apply_refinement, classify_view, AnchorSpec, RefineParams, ViewKind,
};
use cuboid_core::geometry::{project_box, Box2D, Box3D, CameraModel, EdgeLegality, Mat3,
    RigidTransform, Vec3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: parse error at {field}: {message}")]
    Parse { line: usize, field: String, message: String },
    #[error("line {line}: schema version {found} (expected {SCHEMA_VERSION})")]
    SchemaVersionMismatch { line: usize, found: u32 },
    #[error("invalid config: {field}: {message}")]
    InvalidConfig { field: &'static str, message: String },
}

/// One annotated object in a frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectRecord {
    pub object_id: String,
    pub box3d: Box3D,
    /// Ground-truth 2D boxes keyed by camera name.
    pub gt_box2d: BTreeMap<String, Box2D>,
    pub planted_params: Option<RefineParams>,
}

/// Pairing produced by the matching stage for one camera.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraMatches {
    /// (object index, gt index, iou)
    pub pairs: Vec<(usize, usize, f64)>,
    pub unmatched_proposals: Vec<usize>,
    pub unmatched_gt: Vec<usize>,
    pub threshold: f64,
}

/// One frame: cameras plus annotated objects.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub frame_id: String,
    pub cameras: Vec<CameraModel>,
    pub objects: Vec<ObjectRecord>,
    /// Filled in by the matching stage; absent otherwise.
    pub matches: Option<BTreeMap<String, CameraMatches>>,
}

impl Frame {
    pub fn camera(&self, name: &str) -> Option<&CameraModel> {
        self.cameras.iter().find(|c| c.name == name)
    }
}

// ---------------------------------------------------------------------------
// wire format

#[derive(Serialize, Deserialize)]
struct TransformWire {
    rotation: [f64; 9],
    translation: [f64; 3],
}

#[derive(Serialize, Deserialize)]
struct CameraWire {
    name: String,
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    width: u32,
    height: u32,
    ego_to_cam: TransformWire,
}

#[derive(Serialize, Deserialize)]
struct ObjectWire {
    object_id: String,
    box3d: Box3D,
    #[serde(default)]
    gt_box2d: BTreeMap<String, Box2D>,
    #[serde(default)]
    planted_params: Option<[f64; 4]>,
}

#[derive(Serialize, Deserialize)]
struct FrameWire {
    schema_version: u32,
    frame_id: String,
    cameras: Vec<CameraWire>,
    objects: Vec<ObjectWire>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    matches: Option<BTreeMap<String, CameraMatches>>,
}

fn camera_to_wire(c: &CameraModel) -> CameraWire {
    let r = c.ego_to_cam.rotation.0;
    CameraWire {
        name: c.name.clone(),
        fx: c.fx,
        fy: c.fy,
        cx: c.cx,
        cy: c.cy,
        width: c.width,
        height: c.height,
        ego_to_cam: TransformWire {
            rotation: [
                r[0][0], r[0][1], r[0][2], r[1][0], r[1][1], r[1][2], r[2][0], r[2][1], r[2][2],
            ],
            translation: [
                c.ego_to_cam.translation.x,
                c.ego_to_cam.translation.y,
                c.ego_to_cam.translation.z,
            ],
        },
    }
}

fn camera_from_wire(w: CameraWire) -> CameraModel {
    let r = w.ego_to_cam.rotation;
    CameraModel {
        name: w.name,
        fx: w.fx,
        fy: w.fy,
        cx: w.cx,
        cy: w.cy,
        width: w.width,
        height: w.height,
        ego_to_cam: RigidTransform {
            rotation: Mat3([[r[0], r[1], r[2]], [r[3], r[4], r[5]], [r[6], r[7], r[8]]]),
            translation: Vec3::new(
                w.ego_to_cam.translation[0],
                w.ego_to_cam.translation[1],
                w.ego_to_cam.translation[2],
            ),
        },
    }
}

fn frame_to_wire(f: &Frame) -> FrameWire {
    FrameWire {
        schema_version: SCHEMA_VERSION,
        frame_id: f.frame_id.clone(),
        cameras: f.cameras.iter().map(camera_to_wire).collect(),
        objects: f
            .objects
            .iter()
            .map(|o| ObjectWire {
                object_id: o.object_id.clone(),
                box3d: o.box3d,
                gt_box2d: o.gt_box2d.clone(),
                planted_params: o.planted_params.map(|p| p.as_array()),
            })
            .collect(),
        matches: f.matches.clone(),
    }
}

fn frame_from_wire(w: FrameWire, line: usize) -> Result<Frame, DatasetError> {
    if w.schema_version != SCHEMA_VERSION {
        return Err(DatasetError::SchemaVersionMismatch { line, found: w.schema_version });
    }
    let parse_err = |field: String, message: String| DatasetError::Parse { line, field, message };
    let cameras: Vec<CameraModel> = w.cameras.into_iter().map(camera_from_wire).collect();
    for (ci, cam) in cameras.iter().enumerate() {
        cam.validate().map_err(|e| {
            parse_err(format!("cameras[{ci}]"), e.to_string())
        })?;
    }
    let camera_names: Vec<&str> = cameras.iter().map(|c| c.name.as_str()).collect();

    let mut seen_ids = std::collections::BTreeSet::new();
    let mut objects = Vec::with_capacity(w.objects.len());
    for (oi, ow) in w.objects.into_iter().enumerate() {
        if !seen_ids.insert(ow.object_id.clone()) {
            return Err(parse_err(
                format!("objects[{oi}].object_id"),
                format!("duplicate object id `{}`", ow.object_id),
            ));
        }
        ow.box3d
            .validate()
            .map_err(|e| parse_err(format!("objects[{oi}].box3d"), e.to_string()))?;
        for (name, b2) in &ow.gt_box2d {
            b2.validate().map_err(|e| {
                parse_err(format!("objects[{oi}].gt_box2d.{name}"), e.to_string())
            })?;
            if !camera_names.contains(&name.as_str()) {
                return Err(parse_err(
                    format!("objects[{oi}].gt_box2d.{name}"),
                    "references an unknown camera".into(),
                ));
            }
        }
        let planted = match ow.planted_params {
            Some(a) => Some(RefineParams::from_array(a).map_err(|e| {
                parse_err(format!("objects[{oi}].planted_params"), e.to_string())
            })?),
            None => None,
        };
        objects.push(ObjectRecord {
            object_id: ow.object_id,
            box3d: ow.box3d,
            gt_box2d: ow.gt_box2d,
            planted_params: planted,
        });
    }
    Ok(Frame { frame_id: w.frame_id, cameras, objects, matches: w.matches })
}

pub fn frame_to_json(f: &Frame) -> String {
    serde_json::to_string(&frame_to_wire(f)).expect("frame serialization cannot fail")
}

pub fn frame_from_json(s: &str, line: usize) -> Result<Frame, DatasetError> {
    let wire: FrameWire = serde_json::from_str(s).map_err(|e| DatasetError::Parse {
        line,
        field: "<json>".into(),
        message: e.to_string(),
    })?;
    frame_from_wire(wire, line)
}

pub fn write_frames<P: AsRef<Path>>(frames: &[Frame], path: P) -> Result<(), DatasetError> {
    let mut out = BufWriter::new(File::create(path)?);
    for f in frames {
        out.write_all(frame_to_json(f).as_bytes())?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_frames<P: AsRef<Path>>(path: P) -> Result<Vec<Frame>, DatasetError> {
    let reader = BufReader::new(File::open(path)?);
    let mut frames = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        frames.push(frame_from_json(&line, i + 1)?);
    }
    Ok(frames)
}

// ---------------------------------------------------------------------------
// synthetic generation

/// Gaussian perturbation applied to the stored boxes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseNoise {
    pub translation_sigma: f64,
    pub yaw_sigma: f64,
}

impl Default for PoseNoise {
    fn default() -> Self {
        Self { translation_sigma: 0.1, yaw_sigma: 0.02 }
    }
}

/// Generator configuration. All fields have defaults so a config file may
/// specify only what it overrides.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_frames: usize,
    pub objects_per_frame: usize,
    /// Range each planted scale factor is drawn from; must stay within
    /// (0.5, 2.0) so the inverse scaling is itself a valid parameter set.
    pub param_range: [f64; 2],
    pub pose_noise: PoseNoise,
    /// Fraction of objects that carry a ground-truth 2D box.
    pub gt2d_fraction: f64,
    #[serde(
        serialize_with = "serialize_rig",
        deserialize_with = "deserialize_rig"
    )]
    pub rig: Vec<CameraModel>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            n_frames: 10,
            objects_per_frame: 8,
            param_range: [0.7, 1.3],
            pose_noise: PoseNoise::default(),
            gt2d_fraction: 1.0 / 3.0,
            rig: surround_rig(),
        }
    }
}

fn serialize_rig<S: serde::Serializer>(rig: &[CameraModel], s: S) -> Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(rig.len()))?;
    for c in rig {
        seq.serialize_element(&camera_to_wire(c))?;
    }
    seq.end()
}

fn deserialize_rig<'de, D: serde::Deserializer<'de>>(d: D) -> Result<Vec<CameraModel>, D::Error> {
    let wires: Vec<CameraWire> = Vec::deserialize(d)?;
    Ok(wires.into_iter().map(camera_from_wire).collect())
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), DatasetError> {
        let [lo, hi] = self.param_range;
        if !(lo.is_finite() && hi.is_finite() && 0.5 < lo && lo <= hi && hi < 2.0) {
            return Err(DatasetError::InvalidConfig {
                field: "param_range",
                message: format!("[{lo}, {hi}] must satisfy 0.5 < lo <= hi < 2.0"),
            });
        }
        if !(0.0..=1.0).contains(&self.gt2d_fraction) {
            return Err(DatasetError::InvalidConfig {
                field: "gt2d_fraction",
                message: format!("{} not in [0, 1]", self.gt2d_fraction),
            });
        }
        if self.pose_noise.translation_sigma < 0.0 || self.pose_noise.yaw_sigma < 0.0 {
            return Err(DatasetError::InvalidConfig {
                field: "pose_noise",
                message: "sigmas must be non-negative".into(),
            });
        }
        if self.rig.is_empty() {
            return Err(DatasetError::InvalidConfig {
                field: "rig",
                message: "at least one camera required".into(),
            });
        }
        for cam in &self.rig {
            cam.validate().map_err(|e| DatasetError::InvalidConfig {
                field: "rig",
                message: e.to_string(),
            })?;
        }
        Ok(())
    }
}

/// Surround rig: five cameras at yaw offsets {0, +-55, +-140} degrees, all
/// 1920x1280 with fx = fy = 1200, mounted 2 m above the ground at the ego
/// origin.
pub fn surround_rig() -> Vec<CameraModel> {
    let specs = [
        ("front", 0.0_f64),
        ("front_left", 55.0),
        ("front_right", -55.0),
        ("rear_left", 140.0),
        ("rear_right", -140.0),
    ];
    let position = Vec3::new(0.0, 0.0, 2.0);
    specs
        .iter()
        .map(|(name, deg)| {
            let psi = deg.to_radians();
            // camera axes in ego coordinates: x right, y down, z forward
            let x_axis = [psi.sin(), -psi.cos(), 0.0];
            let y_axis = [0.0, 0.0, -1.0];
            let z_axis = [psi.cos(), psi.sin(), 0.0];
            let rotation = Mat3([x_axis, y_axis, z_axis]);
            let translation = -rotation.apply(position);
            CameraModel {
                name: (*name).into(),
                fx: 1200.0,
                fy: 1200.0,
                cx: 960.0,
                cy: 640.0,
                width: 1920,
                height: 1280,
                ego_to_cam: RigidTransform { rotation, translation },
            }
        })
        .collect()
}

/// Hidden truth for one generated object; lives in the sidecar file, never
/// in the dataset itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub frame_id: String,
    pub object_id: String,
    /// Camera the object was staged in front of.
    pub camera: String,
    pub true_box3d: Box3D,
    pub planted_params: [f64; 4],
}

pub fn write_truth<P: AsRef<Path>>(records: &[TruthRecord], path: P) -> Result<(), DatasetError> {
    let mut out = BufWriter::new(File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut out, r).map_err(std::io::Error::other)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_truth<P: AsRef<Path>>(path: P) -> Result<Vec<TruthRecord>, DatasetError> {
    let reader = BufReader::new(File::open(path)?);
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(serde_json::from_str(&line).map_err(|e| DatasetError::Parse {
            line: i + 1,
            field: "<truth json>".into(),
            message: e.to_string(),
        })?);
    }
    Ok(records)
}

/// Solve for the parameters that map `b` onto `target` under `spec`.
///
/// Assumes the two boxes share a yaw and the anchored face planes / shared
/// edge, i.e. `target` is reachable from `b` by an anchor-edge refinement.
/// Returns `None` when a component falls outside (0, 2) or the result does
/// not verify.
pub fn solve_params(b: &Box3D, spec: &AnchorSpec, target: &Box3D) -> Option<RefineParams> {
    let anchor = b.to_box_frame(spec.anchor_point);
    let c_t = b.to_box_frame(target.center());

    let top = c_t.z + target.h / 2.0;
    let bottom = c_t.z - target.h / 2.0;
    let d_up = (top - anchor.z) / (b.h / 2.0);
    let d_down = (anchor.z - bottom) / (b.h / 2.0);

    // the far endpoint of each horizontal edge must land on the matching
    // extremal coordinate of the target footprint
    let horizontal = |edge: &cuboid_core::anchor::AnchorEdge| -> f64 {
        let dir = Mat3::yaw(-b.yaw).apply(edge.direction);
        let (axis, sign) = if dir.x.abs() >= dir.y.abs() {
            (0, dir.x.signum())
        } else {
            (1, dir.y.signum())
        };
        let (anchor_c, center_c, dim) = if axis == 0 {
            (anchor.x, c_t.x, target.l)
        } else {
            (anchor.y, c_t.y, target.w)
        };
        let endpoint = center_c + sign * dim / 2.0;
        sign * (endpoint - anchor_c) / edge.base_len
    };
    let d_left = horizontal(&spec.edge_left);
    let d_right = horizontal(&spec.edge_right);

    let params = RefineParams::new(d_left, d_right, d_up, d_down).ok()?;
    let check = apply_refinement(b, spec, &params);
    let close = (check.x - target.x).abs() < 1e-9
        && (check.y - target.y).abs() < 1e-9
        && (check.z - target.z).abs() < 1e-9
        && (check.l - target.l).abs() < 1e-9
        && (check.w - target.w).abs() < 1e-9
        && (check.h - target.h).abs() < 1e-9;
    close.then_some(params)
}

// Build the stored box whose refinement by `d` recovers `truth`, working in
// the truth box frame. `cat` is the view category of `truth` from the
// camera; d components are per-axis here, not left/right labeled:
// (d_dim_l, d_dim_w, d_up, d_down) where d_dim_l scales the length and
// d_dim_w the width.
fn invert_truth(truth: &Box3D, kind: ViewKind, signs: (f64, f64), d: [f64; 4]) -> Option<Box3D> {
    let (sx, sy) = signs;
    let [dl_dim, dw_dim, d_up, d_down] = d;

    let (l_box, w_box, cx_bf, cy_bf) = match kind {
        ViewKind::CornerView => {
            let l_box = truth.l / dl_dim;
            let w_box = truth.w / dw_dim;
            // shared vertical edge fixed at (sx*l/2, sy*w/2)
            let cx = sx * truth.l / 2.0 - sx * l_box / 2.0;
            let cy = sy * truth.w / 2.0 - sy * w_box / 2.0;
            (l_box, w_box, cx, cy)
        }
        ViewKind::FrontView => {
            if sx != 0.0 {
                // +-x face visible: l unchanged, w split into two half-extents
                let w_box = 2.0 * truth.w / (dl_dim + dw_dim);
                // endpoints -w/2 and +w/2 around the truth center; the stored
                // face center sits where the scaled extents meet them
                let cy = -truth.w / 2.0 + dl_dim * w_box / 2.0;
                (truth.l, w_box, 0.0, cy)
            } else {
                let l_box = 2.0 * truth.l / (dl_dim + dw_dim);
                let cx = -truth.l / 2.0 + dl_dim * l_box / 2.0;
                (l_box, truth.w, cx, 0.0)
            }
        }
    };

    let h_box = 2.0 * truth.h / (d_up + d_down);
    // anchor z must satisfy: anchor + d_up*h_box/2 = truth top
    let top = truth.h / 2.0; // in truth box frame, center at 0
    let anchor_z = top - d_up * h_box / 2.0;
    let cz_bf = anchor_z; // stored box center z equals its anchor z

    let c = truth.from_box_frame(Vec3::new(cx_bf, cy_bf, cz_bf));
    Box3D::new(c.x, c.y, c.z, l_box, w_box, h_box, truth.yaw).ok()
}

/// A generated dataset plus its hidden truth table.
#[derive(Debug, Clone)]
pub struct GeneratedDataset {
    pub frames: Vec<Frame>,
    pub truth: Vec<TruthRecord>,
}

/// Deterministic synthetic generation: a pure function of the config.
pub fn generate(cfg: &SynthConfig) -> Result<GeneratedDataset, DatasetError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let trans_noise = Normal::new(0.0, cfg.pose_noise.translation_sigma.max(1e-300)).unwrap();
    let yaw_noise = Normal::new(0.0, cfg.pose_noise.yaw_sigma.max(1e-300)).unwrap();

    let mut frames = Vec::with_capacity(cfg.n_frames);
    let mut truth_table = Vec::new();

    for fi in 0..cfg.n_frames {
        let frame_id = format!("frame{fi:05}");
        let mut objects = Vec::with_capacity(cfg.objects_per_frame);

        for oi in 0..cfg.objects_per_frame {
            let object_id = format!("{frame_id}_obj{oi:02}");
            let mut placed = false;

            for _attempt in 0..64 {
                let cam_idx = rng.gen_range(0..cfg.rig.len());
                let cam = &cfg.rig[cam_idx];
                let sensor = cam.optical_center();
                let forward = {
                    let r = cam.ego_to_cam.rotation.0;
                    Vec3::new(r[2][0], r[2][1], r[2][2]) // camera z-axis in ego
                };
                let bearing = forward.y.atan2(forward.x) + rng.gen_range(-0.35..0.35);
                let range = rng.gen_range(8.0..40.0);
                let h = rng.gen_range(1.4..2.0);
                let truth = match Box3D::new(
                    sensor.x + range * bearing.cos(),
                    sensor.y + range * bearing.sin(),
                    h / 2.0,
                    rng.gen_range(3.5..5.5),
                    rng.gen_range(1.6..2.2),
                    h,
                    rng.gen_range(-core::f64::consts::PI..core::f64::consts::PI),
                ) {
                    Ok(b) => b,
                    Err(_) => continue,
                };

                let cat = match classify_view(&truth, sensor) {
                    Ok(c) => c,
                    Err(_) => continue,
                };
                match project_box(cam, &truth) {
                    Ok((_, legal)) if legal == EdgeLegality::ALL => {}
                    _ => continue,
                }

                // perturbation factors, per axis
                let [lo, hi] = cfg.param_range;
                let d_axes = [
                    rng.gen_range(lo..=hi),
                    rng.gen_range(lo..=hi),
                    rng.gen_range(lo..=hi),
                    rng.gen_range(lo..=hi),
                ];
                let clean = match invert_truth(&truth, cat.kind(), cat.face_signs(), d_axes) {
                    Some(b) => b,
                    None => continue,
                };

                // solve the planted parameters on the clean stored box; with
                // pose noise they stay the labels, recovery becomes
                // approximate by design
                let clean_cat = match classify_view(&clean, sensor) {
                    Ok(c) => c,
                    Err(_) => continue,
                };
                if clean_cat != cat {
                    continue;
                }
                let clean_spec = anchor_spec(&clean, clean_cat, cam);
                let planted = match solve_params(&clean, &clean_spec, &truth) {
                    Some(p) => p,
                    None => continue,
                };

                // pose noise on the stored annotation
                let stored = if cfg.pose_noise.translation_sigma > 0.0
                    || cfg.pose_noise.yaw_sigma > 0.0
                {
                    let dx = trans_noise.sample(&mut rng);
                    let dy = trans_noise.sample(&mut rng);
                    let dz = trans_noise.sample(&mut rng);
                    let dyaw = yaw_noise.sample(&mut rng);
                    match Box3D::new(
                        clean.x + dx,
                        clean.y + dy,
                        clean.z + dz,
                        clean.l,
                        clean.w,
                        clean.h,
                        clean.yaw + dyaw,
                    ) {
                        Ok(b) => b,
                        Err(_) => continue,
                    }
                } else {
                    clean
                };

                // the stored box must satisfy the same preconditions
                match classify_view(&stored, sensor) {
                    Ok(c) if c == cat => {}
                    _ => continue,
                }
                if project_box(cam, &stored).is_err() {
                    continue;
                }

                let mut gt_box2d = BTreeMap::new();
                if rng.gen_bool(cfg.gt2d_fraction) {
                    let (b2, _) = project_box(cam, &truth).expect("checked above");
                    gt_box2d.insert(cam.name.clone(), b2);
                }

                truth_table.push(TruthRecord {
                    frame_id: frame_id.clone(),
                    object_id: object_id.clone(),
                    camera: cam.name.clone(),
                    true_box3d: truth,
                    planted_params: planted.as_array(),
                });
                objects.push(ObjectRecord {
                    object_id: object_id.clone(),
                    box3d: stored,
                    gt_box2d,
                    planted_params: None, // kept out of the dataset on purpose
                });
                placed = true;
                break;
            }
            // bounded retries exhausted: skip the object
            let _ = placed;
        }

        frames.push(Frame { frame_id, cameras: cfg.rig.clone(), objects, matches: None });
    }

    Ok(GeneratedDataset { frames, truth: truth_table })
}
