//! `cuboid`: generate, match, refine, evaluate and render cuboid datasets.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use cuboid_core::geometry::{Box2D, Box3D};
use cuboid_core::matching::match_frame;
use cuboid_core::solver::{refine_box, SolverConfig};
use cuboid_pipeline::dataset::{
    self, CameraMatches, DatasetError, Frame, SynthConfig,
};
use cuboid_pipeline::{eval, render};
use rayon::prelude::*;
use serde::Serialize;

#[derive(Parser)]
#[command(name = "cuboid", version, about = "Refine 3D boxes into image-tight cuboids")]
struct Cli {
    /// Worker threads for per-object refinement (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    /// Override the generation seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset plus its hidden truth sidecar.
    Synth(SynthArgs),
    /// Match projected boxes against 2D ground truth per camera.
    Match(MatchArgs),
    /// Refine each targeted box against its 2D box.
    Refine(RefineArgs),
    /// Compare a dataset before and after refinement.
    Eval(EvalArgs),
    /// Render one camera view of one frame as SVG.
    Render(RenderArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// JSON config; defaults apply for missing fields (omit for all defaults).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output dataset (JSONL).
    #[arg(long)]
    out: PathBuf,
    /// Output truth sidecar (JSONL).
    #[arg(long)]
    truth: PathBuf,
}

#[derive(Args)]
struct MatchArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Minimum IoU for a pairing to be kept.
    #[arg(long, default_value_t = 0.3)]
    threshold: f64,
}

#[derive(Args)]
struct RefineArgs {
    #[arg(long)]
    input: PathBuf,
    /// Refined dataset (JSONL).
    #[arg(long)]
    out: PathBuf,
    /// Per-box result records (JSONL).
    #[arg(long)]
    results: Option<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    max_iter: usize,
    /// Parameter bounds as LO,HI.
    #[arg(long, default_value = "0,2", value_parser = parse_bounds)]
    bounds: (f64, f64),
    #[arg(long, default_value_t = 1.0)]
    huber_delta: f64,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    before: PathBuf,
    #[arg(long)]
    after: PathBuf,
    /// Truth sidecar; omit to evaluate against stored 2D ground truth.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Write the machine-readable key=value report here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RenderArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    frame_id: String,
    #[arg(long)]
    camera: String,
    /// Refined dataset supplying the green overlays.
    #[arg(long)]
    refined: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

fn parse_bounds(s: &str) -> Result<(f64, f64), String> {
    let (lo, hi) = s.split_once(',').ok_or("expected LO,HI")?;
    let lo: f64 = lo.trim().parse().map_err(|e| format!("bad lower bound: {e}"))?;
    let hi: f64 = hi.trim().parse().map_err(|e| format!("bad upper bound: {e}"))?;
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(format!("bounds {lo},{hi} must be finite with LO < HI"));
    }
    Ok((lo, hi))
}

/// Runtime failure (exit 1) vs usage/config failure (exit 2).
struct CliError {
    message: String,
    code: u8,
}

impl CliError {
    fn runtime(message: impl Into<String>) -> Self {
        Self { message: message.into(), code: 1 }
    }
    fn config(message: impl Into<String>) -> Self {
        Self { message: message.into(), code: 2 }
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        match e {
            DatasetError::InvalidConfig { .. } => CliError::config(e.to_string()),
            _ => CliError::runtime(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::runtime(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.jobs > 0 {
        // a failed build only means a pool already exists
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cli.jobs).build_global();
    }
    let result = match &cli.command {
        Command::Synth(args) => cmd_synth(&cli, args),
        Command::Match(args) => cmd_match(args),
        Command::Refine(args) => cmd_refine(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Render(args) => cmd_render(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

fn cmd_synth(cli: &Cli, args: &SynthArgs) -> Result<(), CliError> {
    let mut cfg: SynthConfig = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::config(format!("config parse error: {e}")))?
        }
        None => SynthConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let ds = dataset::generate(&cfg)?;
    dataset::write_frames(&ds.frames, &args.out)?;
    dataset::write_truth(&ds.truth, &args.truth)?;
    eprintln!(
        "wrote {} frames ({} objects) to {} and truth to {}",
        ds.frames.len(),
        ds.truth.len(),
        args.out.display(),
        args.truth.display()
    );
    Ok(())
}

/// Ground-truth boxes for one camera, in object order, remembering which
/// object each came from.
fn camera_gt(frame: &Frame, camera: &str) -> (Vec<usize>, Vec<Box2D>) {
    let mut owners = Vec::new();
    let mut boxes = Vec::new();
    for (i, obj) in frame.objects.iter().enumerate() {
        if let Some(b2) = obj.gt_box2d.get(camera) {
            owners.push(i);
            boxes.push(*b2);
        }
    }
    (owners, boxes)
}

fn cmd_match(args: &MatchArgs) -> Result<(), CliError> {
    let mut frames = dataset::read_frames(&args.input)?;
    for frame in &mut frames {
        let proposals: Vec<Box3D> = frame.objects.iter().map(|o| o.box3d).collect();
        let mut annotations: BTreeMap<String, CameraMatches> = BTreeMap::new();
        for cam in &frame.cameras {
            let (_, gt) = camera_gt(frame, &cam.name);
            if proposals.is_empty() || gt.is_empty() {
                continue;
            }
            let m = match_frame(&proposals, cam, &gt, args.threshold);
            annotations.insert(
                cam.name.clone(),
                CameraMatches {
                    pairs: m.pairs,
                    unmatched_proposals: m.unmatched_proposals,
                    unmatched_gt: m.unmatched_gt,
                    threshold: m.threshold,
                },
            );
        }
        frame.matches = Some(annotations);
    }
    dataset::write_frames(&frames, &args.out)?;
    Ok(())
}

#[derive(Serialize)]
struct RefineRecord {
    frame_id: String,
    object_id: String,
    /// false: no 2D target, box passed through unchanged
    refined: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    camera: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    params: Option<[f64; 4]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    iou_before: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    iou_after: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    objective_value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    iterations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    converged: Option<bool>,
}

/// Pick the 2D target per object: match annotations when present, otherwise
/// the object's own ground-truth box (first camera in name order).
fn refine_targets(frame: &Frame) -> BTreeMap<usize, (String, Box2D)> {
    let mut targets: BTreeMap<usize, (String, Box2D)> = BTreeMap::new();
    match &frame.matches {
        Some(annotations) => {
            for (cam_name, m) in annotations {
                let (_, gt) = camera_gt(frame, cam_name);
                for (pi, gi, _) in &m.pairs {
                    if let Some(b2) = gt.get(*gi) {
                        targets.entry(*pi).or_insert_with(|| (cam_name.clone(), *b2));
                    }
                }
            }
        }
        None => {
            for (i, obj) in frame.objects.iter().enumerate() {
                if let Some((name, b2)) = obj.gt_box2d.iter().next() {
                    targets.insert(i, (name.clone(), *b2));
                }
            }
        }
    }
    targets
}

fn cmd_refine(args: &RefineArgs) -> Result<(), CliError> {
    let mut frames = dataset::read_frames(&args.input)?;
    let cfg = SolverConfig {
        lower_bound: args.bounds.0,
        upper_bound: args.bounds.1,
        max_iter: args.max_iter,
        ..SolverConfig::default()
    };

    // one task per targeted object; rayon order does not matter because
    // results are written back by index
    let per_frame_targets: Vec<BTreeMap<usize, (String, Box2D)>> =
        frames.iter().map(refine_targets).collect();
    let tasks: Vec<(usize, usize)> = per_frame_targets
        .iter()
        .enumerate()
        .flat_map(|(fi, t)| t.keys().map(move |oi| (fi, *oi)))
        .collect();

    let outcomes: Vec<(usize, usize, Result<cuboid_core::RefineResult, String>)> = tasks
        .par_iter()
        .map(|&(fi, oi)| {
            let frame = &frames[fi];
            let (cam_name, target) = &per_frame_targets[fi][&oi];
            let cam = frame.camera(cam_name).expect("target camera exists");
            let r = refine_box(&frame.objects[oi].box3d, cam, target, &cfg, args.huber_delta)
                .map_err(|e| e.to_string());
            (fi, oi, r)
        })
        .collect();

    let mut results: BTreeMap<(usize, usize), cuboid_core::RefineResult> = BTreeMap::new();
    for (fi, oi, r) in outcomes {
        match r {
            Ok(res) => {
                results.insert((fi, oi), res);
            }
            Err(msg) => {
                let frame = &frames[fi];
                eprintln!(
                    "warning: frame {} object {}: {msg}; passing through",
                    frame.frame_id, frame.objects[oi].object_id
                );
            }
        }
    }

    // canonical order: frames/objects as stored (already sorted by id for
    // generated data)
    let mut records = Vec::new();
    let cameras: BTreeMap<(usize, usize), String> = tasks
        .iter()
        .map(|&(fi, oi)| ((fi, oi), per_frame_targets[fi][&oi].0.clone()))
        .collect();
    for (fi, frame) in frames.iter_mut().enumerate() {
        for (oi, obj) in frame.objects.iter_mut().enumerate() {
            match results.get(&(fi, oi)) {
                Some(res) => {
                    obj.box3d = res.refined_box;
                    records.push(RefineRecord {
                        frame_id: frame.frame_id.clone(),
                        object_id: obj.object_id.clone(),
                        refined: true,
                        camera: cameras.get(&(fi, oi)).cloned(),
                        params: Some(res.params.as_array()),
                        iou_before: Some(res.iou_before),
                        iou_after: Some(res.iou_after),
                        objective_value: Some(res.objective_value),
                        iterations: Some(res.iterations),
                        converged: Some(res.converged),
                    });
                }
                None => records.push(RefineRecord {
                    frame_id: frame.frame_id.clone(),
                    object_id: obj.object_id.clone(),
                    refined: false,
                    camera: None,
                    params: None,
                    iou_before: None,
                    iou_after: None,
                    objective_value: None,
                    iterations: None,
                    converged: None,
                }),
            }
        }
    }

    dataset::write_frames(&frames, &args.out)?;
    if let Some(path) = &args.results {
        let mut out = String::new();
        for r in &records {
            out.push_str(&serde_json::to_string(&r).expect("record serialization"));
            out.push('\n');
        }
        std::fs::write(path, out)?;
    }
    Ok(())
}

fn cmd_eval(args: &EvalArgs) -> Result<(), CliError> {
    let before = dataset::read_frames(&args.before)?;
    let after = dataset::read_frames(&args.after)?;
    let truth = match &args.truth {
        Some(path) => dataset::read_truth(path)?,
        None => Vec::new(),
    };
    let report = eval::evaluate(&before, &after, &truth)
        .map_err(|e| CliError::runtime(e.to_string()))?;
    print!("{}", report.to_table());
    if let Some(path) = &args.out {
        std::fs::write(path, report.to_kv())?;
    }
    Ok(())
}

fn cmd_render(args: &RenderArgs) -> Result<(), CliError> {
    let frames = dataset::read_frames(&args.input)?;
    let frame = frames
        .iter()
        .find(|f| f.frame_id == args.frame_id)
        .ok_or_else(|| CliError::runtime(format!("no frame with id `{}`", args.frame_id)))?;

    let refined: BTreeMap<String, Box3D> = match &args.refined {
        Some(path) => dataset::read_frames(path)?
            .iter()
            .filter(|f| f.frame_id == args.frame_id)
            .flat_map(|f| f.objects.iter().map(|o| (o.object_id.clone(), o.box3d)))
            .collect(),
        None => BTreeMap::new(),
    };

    let svg = render::render_svg(frame, &args.camera, &refined)
        .map_err(|e| CliError::runtime(e.to_string()))?;
    std::fs::write(&args.out, svg)?;
    Ok(())
}
