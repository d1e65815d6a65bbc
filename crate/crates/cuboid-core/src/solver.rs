//! Edge-wise Huber losses and a bounded Nelder-Mead solver that recovers
//! refinement parameters from a target 2D box.

use alloc::vec::Vec;

use crate::anchor::{anchor_spec, apply_refinement, classify_view, AnchorSpec, RefineParams};
use crate::error::Error;
use crate::geometry::{iou_2d, project_box, Box2D, Box3D, CameraModel, EdgeLegality};
use crate::math;

/// Penalty returned by the objective when the refined box falls entirely
/// behind the camera; large but finite so the simplex stays well-defined.
pub const BEHIND_CAMERA_PENALTY: f64 = 1e9;

/// Weights of the total loss. Defaults follow the weighted sum
/// 2.0 * E_2d + 3.0 * E_3d + 1.0 * E_con.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub huber_delta: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { lambda1: 2.0, lambda2: 3.0, lambda3: 1.0, huber_delta: 1.0 }
    }
}

/// Bounded Nelder-Mead configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub lower_bound: f64,
    pub upper_bound: f64,
    pub max_iter: usize,
    pub simplex_step: f64,
    pub f_tol: f64,
    pub x_tol: f64,
    pub restarts: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            lower_bound: 0.0,
            upper_bound: 2.0,
            max_iter: 1000,
            simplex_step: 0.05,
            f_tol: 1e-8,
            x_tol: 1e-8,
            restarts: 1,
        }
    }
}

/// Outcome of a single box refinement.
#[derive(Debug, Clone, PartialEq)]
pub struct RefineResult {
    pub params: RefineParams,
    pub refined_box: Box3D,
    pub iou_before: f64,
    pub iou_after: f64,
    pub objective_value: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Huber loss: quadratic within `delta` of zero, linear beyond.
pub fn huber(r: f64, delta: f64) -> f64 {
    let a = math::abs(r);
    if a <= delta {
        0.5 * r * r
    } else {
        delta * (a - 0.5 * delta)
    }
}

/// Mean over boxes of the summed per-edge Huber residuals between predicted
/// and target 2D boxes.
pub fn loss_2d(pred: &[Box2D], target: &[Box2D], delta: f64) -> Result<f64, Error> {
    if pred.is_empty() || pred.len() != target.len() {
        return Err(Error::EmptyBatch);
    }
    let mut total = 0.0;
    for (p, t) in pred.iter().zip(target) {
        for (pe, te) in p.edges().into_iter().zip(t.edges()) {
            total += huber(pe - te, delta);
        }
    }
    Ok(total / pred.len() as f64)
}

/// Legality-masked projection loss: per edge, the Huber residual against the
/// ground-truth box when present, otherwise against the pseudo box. Illegal
/// edges contribute nothing.
pub fn loss_3d(
    proj: &[(Box2D, EdgeLegality)],
    gt: &[Option<Box2D>],
    pseudo: &[Option<Box2D>],
    delta: f64,
) -> Result<f64, Error> {
    if proj.is_empty() || proj.len() != gt.len() || proj.len() != pseudo.len() {
        return Err(Error::EmptyBatch);
    }
    let mut total = 0.0;
    for (i, ((p, legal), (g, ps))) in proj.iter().zip(gt.iter().zip(pseudo)).enumerate() {
        let target = match (g, ps) {
            (Some(t), _) => t,
            (None, Some(t)) => t,
            (None, None) => return Err(Error::NoTarget { index: i }),
        };
        for ((pe, te), ok) in p
            .edges()
            .into_iter()
            .zip(target.edges())
            .zip(legal.flags())
        {
            if ok {
                total += huber(pe - te, delta);
            }
        }
    }
    Ok(total / proj.len() as f64)
}

/// Consistency residual between a direct prediction and an
/// augmented-then-composed prediction, summed over the four components.
pub fn loss_consistency(
    d: &RefineParams,
    d_prime: &RefineParams,
    d_aug: &RefineParams,
    delta: f64,
) -> f64 {
    let a = d.as_array();
    let b = d_prime.as_array();
    let c = d_aug.as_array();
    let mut total = 0.0;
    for i in 0..4 {
        total += huber(a[i] - b[i] * c[i], delta);
    }
    total
}

/// Weighted total loss; the 2D term is gated on ground-truth availability.
pub fn loss_total(e2d: f64, e3d: f64, econ: f64, has_gt: bool, w: &LossWeights) -> f64 {
    let gate = if has_gt { 1.0 } else { 0.0 };
    w.lambda1 * gate * e2d + w.lambda2 * e3d + w.lambda3 * econ
}

/// Single-box objective: apply the refinement, project, and sum the
/// legality-masked Huber residuals of the four edges against the target.
pub fn objective(
    b: &Box3D,
    spec: &AnchorSpec,
    cam: &CameraModel,
    target: &Box2D,
    d: &RefineParams,
    delta: f64,
) -> f64 {
    let refined = apply_refinement(b, spec, d);
    match project_box(cam, &refined) {
        Ok((proj, legal)) => {
            let mut total = 0.0;
            for ((pe, te), ok) in proj
                .edges()
                .into_iter()
                .zip(target.edges())
                .zip(legal.flags())
            {
                if ok {
                    total += huber(pe - te, delta);
                }
            }
            total
        }
        Err(_) => BEHIND_CAMERA_PENALTY,
    }
}

/// Result of a Nelder-Mead run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelderMeadOutcome {
    pub x: [f64; 4],
    pub f: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn clamp_into_bounds(x: &mut [f64; 4], cfg: &SolverConfig) {
    let lo = cfg.lower_bound + 1e-6;
    let hi = cfg.upper_bound - 1e-6;
    for v in x.iter_mut() {
        *v = v.clamp(lo, hi);
    }
}

/// Bounded Nelder-Mead on 4-vectors: reflection 1, expansion 2, contraction
/// 0.5, shrink 0.5. Every candidate vertex is clamped componentwise into
/// the bounds before evaluation. Deterministic for fixed inputs.
pub fn nelder_mead<F>(
    mut f: F,
    x0: [f64; 4],
    cfg: &SolverConfig,
) -> Result<NelderMeadOutcome, Error>
where
    F: FnMut(&[f64; 4]) -> f64,
{
    const N: usize = 4;
    let mut eval = |x: &[f64; 4]| -> Result<f64, Error> {
        let v = f(x);
        if v.is_nan() {
            Err(Error::NonFiniteObjective)
        } else {
            Ok(v)
        }
    };

    let mut best_x = x0;
    clamp_into_bounds(&mut best_x, cfg);
    let mut best_f = eval(&best_x)?;
    let mut total_iters = 0;
    let mut converged = false;

    for _ in 0..cfg.restarts.max(1) {
        // initial simplex around the current best point
        let mut simplex: Vec<([f64; 4], f64)> = Vec::with_capacity(N + 1);
        simplex.push((best_x, best_f));
        for i in 0..N {
            let mut v = best_x;
            v[i] += cfg.simplex_step;
            clamp_into_bounds(&mut v, cfg);
            let fv = eval(&v)?;
            simplex.push((v, fv));
        }

        converged = false;
        for _ in 0..cfg.max_iter {
            total_iters += 1;
            simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(core::cmp::Ordering::Equal));

            let f_spread = simplex[N].1 - simplex[0].1;
            let mut x_spread: f64 = 0.0;
            for i in 0..N {
                let lo = simplex.iter().map(|(v, _)| v[i]).fold(f64::INFINITY, f64::min);
                let hi = simplex.iter().map(|(v, _)| v[i]).fold(f64::NEG_INFINITY, f64::max);
                x_spread = x_spread.max(hi - lo);
            }
            if f_spread < cfg.f_tol && x_spread < cfg.x_tol {
                converged = true;
                break;
            }

            // centroid of all but the worst
            let mut centroid = [0.0; N];
            for (v, _) in &simplex[..N] {
                for i in 0..N {
                    centroid[i] += v[i] / N as f64;
                }
            }
            let worst = simplex[N];

            let make = |coef: f64| {
                let mut v = [0.0; N];
                for i in 0..N {
                    v[i] = centroid[i] + coef * (centroid[i] - worst.0[i]);
                }
                v
            };

            let mut reflected = make(1.0);
            clamp_into_bounds(&mut reflected, cfg);
            let f_r = eval(&reflected)?;

            if f_r < simplex[0].1 {
                let mut expanded = make(2.0);
                clamp_into_bounds(&mut expanded, cfg);
                let f_e = eval(&expanded)?;
                simplex[N] = if f_e < f_r { (expanded, f_e) } else { (reflected, f_r) };
            } else if f_r < simplex[N - 1].1 {
                simplex[N] = (reflected, f_r);
            } else {
                // contraction: outside if the reflection improved on the
                // worst vertex, inside otherwise
                let coef = if f_r < worst.1 { 0.5 } else { -0.5 };
                let mut contracted = make(coef);
                clamp_into_bounds(&mut contracted, cfg);
                let f_c = eval(&contracted)?;
                let bar = if f_r < worst.1 { f_r } else { worst.1 };
                if f_c <= bar {
                    simplex[N] = (contracted, f_c);
                } else {
                    // shrink toward the best vertex
                    let best = simplex[0].0;
                    for k in 1..=N {
                        let mut v = [0.0; N];
                        for i in 0..N {
                            v[i] = best[i] + 0.5 * (simplex[k].0[i] - best[i]);
                        }
                        clamp_into_bounds(&mut v, cfg);
                        let fv = eval(&v)?;
                        simplex[k] = (v, fv);
                    }
                }
            }
        }

        simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(core::cmp::Ordering::Equal));
        if simplex[0].1 < best_f {
            best_x = simplex[0].0;
            best_f = simplex[0].1;
        }
    }

    Ok(NelderMeadOutcome { x: best_x, f: best_f, iterations: total_iters, converged })
}

/// Refine one box against a target 2D box.
///
/// Classifies the view from the camera's optical center, builds the anchor
/// spec, and minimizes the single-box objective starting from the identity
/// parameters. If the optimized projection overlaps the target worse than
/// the input projection did, the identity parameters are returned instead,
/// so the refinement never degrades the 2D alignment.
pub fn refine_box(
    b: &Box3D,
    cam: &CameraModel,
    target: &Box2D,
    cfg: &SolverConfig,
    delta: f64,
) -> Result<RefineResult, Error> {
    let sensor = cam.optical_center();
    let cat = classify_view(b, sensor)?;
    let spec = anchor_spec(b, cat, cam);
    let (proj_before, _) = project_box(cam, b)?;
    let iou_before = iou_2d(&proj_before, target);

    let params_of = |x: &[f64; 4]| RefineParams {
        d_left: x[0],
        d_right: x[1],
        d_up: x[2],
        d_down: x[3],
    };
    let outcome = nelder_mead(
        |x| objective(b, &spec, cam, target, &params_of(x), delta),
        [1.0, 1.0, 1.0, 1.0],
        cfg,
    )?;

    let params = params_of(&outcome.x);
    let refined = apply_refinement(b, &spec, &params);
    let iou_after = match project_box(cam, &refined) {
        Ok((proj, _)) => iou_2d(&proj, target),
        Err(_) => -1.0,
    };

    if iou_after <= iou_before {
        // monotone-improvement guard: keep the input unless the optimized
        // projection strictly improves the overlap
        let id = RefineParams::IDENTITY;
        return Ok(RefineResult {
            objective_value: objective(b, &spec, cam, target, &id, delta),
            params: id,
            refined_box: *b,
            iou_before,
            iou_after: iou_before,
            iterations: outcome.iterations,
            converged: outcome.converged,
        });
    }

    Ok(RefineResult {
        objective_value: outcome.f,
        params,
        refined_box: refined,
        iou_before,
        iou_after,
        iterations: outcome.iterations,
        converged: outcome.converged,
    })
}
