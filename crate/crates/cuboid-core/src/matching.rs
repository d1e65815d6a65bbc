//! Hungarian assignment between projected 3D proposals and 2D ground-truth
//! boxes, with an IoU gate applied after the optimal assignment.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::Error;
use crate::geometry::{iou_2d, project_box, Box2D, Box3D, CameraModel};

/// A gated partial matching between proposals and ground-truth boxes.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    /// (proposal index, gt index, iou); every retained pair has iou >= threshold.
    pub pairs: Vec<(usize, usize, f64)>,
    pub unmatched_proposals: Vec<usize>,
    pub unmatched_gt: Vec<usize>,
    pub threshold: f64,
}

/// Minimum-cost assignment of an n x m matrix of finite costs.
///
/// Returns min(n, m) (row, col) pairs achieving the global minimum total
/// cost, sorted lexicographically. Rectangular matrices are padded
/// internally with zero-cost dummies.
pub fn hungarian(cost: &[Vec<f64>]) -> Result<Vec<(usize, usize)>, Error> {
    let n = cost.len();
    if n == 0 {
        return Err(Error::EmptyBatch);
    }
    let m = cost[0].len();
    if m == 0 {
        return Err(Error::EmptyBatch);
    }
    for (i, row) in cost.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            if !c.is_finite() {
                return Err(Error::NonFiniteCost { row: i, col: j });
            }
        }
    }

    let k = n.max(m);
    let at = |i: usize, j: usize| -> f64 {
        if i < n && j < m {
            cost[i][j]
        } else {
            0.0
        }
    };

    // Shortest augmenting path formulation with row/column potentials,
    // 1-indexed over the padded square matrix.
    let inf = f64::INFINITY;
    let mut u = vec![0.0; k + 1];
    let mut v = vec![0.0; k + 1];
    let mut assigned_row = vec![0usize; k + 1]; // column -> row
    let mut way = vec![0usize; k + 1];

    for i in 1..=k {
        assigned_row[0] = i;
        let mut j0 = 0usize;
        let mut min_v = vec![inf; k + 1];
        let mut used = vec![false; k + 1];
        loop {
            used[j0] = true;
            let i0 = assigned_row[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=k {
                if used[j] {
                    continue;
                }
                let cur = at(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < min_v[j] {
                    min_v[j] = cur;
                    way[j] = j0;
                }
                if min_v[j] < delta {
                    delta = min_v[j];
                    j1 = j;
                }
            }
            for j in 0..=k {
                if used[j] {
                    u[assigned_row[j]] += delta;
                    v[j] -= delta;
                } else {
                    min_v[j] -= delta;
                }
            }
            j0 = j1;
            if assigned_row[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            assigned_row[j0] = assigned_row[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut pairs: Vec<(usize, usize)> = Vec::with_capacity(n.min(m));
    for j in 1..=k {
        let i = assigned_row[j];
        if i >= 1 && i <= n && j <= m {
            pairs.push((i - 1, j - 1));
        }
    }
    pairs.sort_unstable();
    Ok(pairs)
}

/// Match projected proposals against ground-truth 2D boxes for one camera.
///
/// Cost is 1 - IoU of the projected proposal hull against each gt box; the
/// assignment is optimal first, then pairs under the IoU threshold are
/// dropped into the unmatched lists. Proposals that cannot be projected are
/// auto-unmatched.
pub fn match_frame(
    proposals: &[Box3D],
    cam: &CameraModel,
    gt: &[Box2D],
    threshold: f64,
) -> MatchResult {
    let mut projected: Vec<(usize, Box2D)> = Vec::with_capacity(proposals.len());
    let mut unmatched_proposals: Vec<usize> = Vec::new();
    for (i, p) in proposals.iter().enumerate() {
        match project_box(cam, p) {
            Ok((b2, _)) => projected.push((i, b2)),
            Err(_) => unmatched_proposals.push(i),
        }
    }

    let mut pairs: Vec<(usize, usize, f64)> = Vec::new();
    let mut matched_gt = vec![false; gt.len()];
    if !projected.is_empty() && !gt.is_empty() {
        let cost: Vec<Vec<f64>> = projected
            .iter()
            .map(|(_, pb)| gt.iter().map(|g| 1.0 - iou_2d(pb, g)).collect())
            .collect();
        // finite by construction, and both sides non-empty
        let assignment = hungarian(&cost).expect("cost matrix is finite and non-empty");
        let mut row_matched = vec![false; projected.len()];
        for (r, c) in assignment {
            let iou = 1.0 - cost[r][c];
            if iou >= threshold {
                pairs.push((projected[r].0, c, iou));
                row_matched[r] = true;
                matched_gt[c] = true;
            }
        }
        for (r, (orig, _)) in projected.iter().enumerate() {
            if !row_matched[r] {
                unmatched_proposals.push(*orig);
            }
        }
    } else {
        unmatched_proposals.extend(projected.iter().map(|(i, _)| *i));
    }

    let unmatched_gt = (0..gt.len()).filter(|&j| !matched_gt[j]).collect();
    unmatched_proposals.sort_unstable();
    MatchResult { pairs, unmatched_proposals, unmatched_gt, threshold }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Mat3, RigidTransform, Vec3};
    use alloc::string::String;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};

    #[test]
    fn hungarian_small_cases() {
        let pairs = hungarian(&[vec![1.0, 2.0], vec![3.0, 1.0]]).unwrap();
        assert_eq!(pairs, vec![(0, 0), (1, 1)]);
        let pairs = hungarian(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        assert_eq!(pairs, vec![(0, 0), (1, 1)]);
    }

    #[test]
    fn hungarian_rectangular() {
        // 2 rows, 3 cols: best is (0,2) and (1,0)
        let pairs = hungarian(&[vec![5.0, 4.0, 1.0], vec![2.0, 6.0, 8.0]]).unwrap();
        assert_eq!(pairs.len(), 2);
        let total: f64 = pairs.iter().map(|&(i, j)| [[5.0, 4.0, 1.0], [2.0, 6.0, 8.0]][i][j]).sum();
        assert_abs_diff_eq!(total, 3.0, epsilon = 1e-12);
    }

    #[test]
    fn hungarian_rejects_non_finite() {
        assert_eq!(
            hungarian(&[vec![1.0, f64::NAN]]),
            Err(Error::NonFiniteCost { row: 0, col: 1 })
        );
    }

    fn brute_force_min(cost: &[Vec<f64>]) -> f64 {
        let n = cost.len();
        let m = cost[0].len();
        if n > m {
            // transpose
            let t: Vec<Vec<f64>> =
                (0..m).map(|j| (0..n).map(|i| cost[i][j]).collect()).collect();
            return brute_force_min(&t);
        }
        let mut cols: Vec<usize> = (0..m).collect();
        let mut best = f64::INFINITY;
        permute(&mut cols, 0, n, &mut |perm| {
            let total: f64 = (0..n).map(|i| cost[i][perm[i]]).sum();
            if total < best {
                best = total;
            }
        });
        best
    }

    // enumerate ordered selections of `take` items from `arr`
    fn permute(arr: &mut Vec<usize>, start: usize, take: usize, f: &mut impl FnMut(&[usize])) {
        if start == take {
            f(&arr[..take]);
            return;
        }
        for i in start..arr.len() {
            arr.swap(start, i);
            permute(arr, start + 1, take, f);
            arr.swap(start, i);
        }
    }

    #[test]
    fn hungarian_matches_brute_force() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(31);
        for _ in 0..300 {
            let n = rng.gen_range(1..=6);
            let m = rng.gen_range(1..=6);
            let cost: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..m).map(|_| rng.gen_range(0.0..10.0)).collect())
                .collect();
            let pairs = hungarian(&cost).unwrap();
            assert_eq!(pairs.len(), n.min(m));
            let total: f64 = pairs.iter().map(|&(i, j)| cost[i][j]).sum();
            let best = brute_force_min(&cost);
            assert_abs_diff_eq!(total, best, epsilon = 1e-9);
        }
    }

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
                translation: Vec3::ZERO,
            },
        }
    }

    #[test]
    fn match_frame_identity() {
        let cam = front_camera();
        let b = Box3D::new(20.0, 0.0, 1.0, 4.0, 2.0, 1.8, 0.2).unwrap();
        let (gt, _) = project_box(&cam, &b).unwrap();
        let res = match_frame(&[b], &cam, &[gt], 0.3);
        assert_eq!(res.pairs.len(), 1);
        let (pi, gi, iou) = res.pairs[0];
        assert_eq!((pi, gi), (0, 0));
        assert_abs_diff_eq!(iou, 1.0, epsilon = 1e-9);
        assert!(res.unmatched_proposals.is_empty());
        assert!(res.unmatched_gt.is_empty());
    }

    #[test]
    fn match_frame_gate() {
        let cam = front_camera();
        let b = Box3D::new(20.0, 0.0, 1.0, 4.0, 2.0, 1.8, 0.2).unwrap();
        let gt = Box2D::new(-500.0, -500.0, -400.0, -400.0).unwrap();
        let res = match_frame(&[b], &cam, &[gt], 0.3);
        assert!(res.pairs.is_empty());
        assert_eq!(res.unmatched_proposals, vec![0]);
        assert_eq!(res.unmatched_gt, vec![0]);
    }

    #[test]
    fn match_frame_behind_camera_auto_unmatched() {
        let cam = front_camera();
        let behind = Box3D::new(-20.0, 0.0, 1.0, 4.0, 2.0, 1.8, 0.0).unwrap();
        let front = Box3D::new(20.0, 0.0, 1.0, 4.0, 2.0, 1.8, 0.0).unwrap();
        let (gt, _) = project_box(&cam, &front).unwrap();
        let res = match_frame(&[behind, front], &cam, &[gt], 0.3);
        assert_eq!(res.pairs.len(), 1);
        assert_eq!(res.pairs[0].0, 1);
        assert_eq!(res.unmatched_proposals, vec![0]);
    }

    #[test]
    fn match_frame_totals_match_brute_force() {
        let cam = front_camera();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for _ in 0..50 {
            let n = rng.gen_range(1..=5);
            let boxes: Vec<Box3D> = (0..n)
                .map(|_| {
                    Box3D::new(
                        rng.gen_range(10.0..40.0),
                        rng.gen_range(-10.0..10.0),
                        rng.gen_range(0.6..1.4),
                        rng.gen_range(3.5..5.5),
                        rng.gen_range(1.6..2.2),
                        rng.gen_range(1.4..2.0),
                        rng.gen_range(-3.1..3.1),
                    )
                    .unwrap()
                })
                .collect();
            // gts: projections of a shuffled subset, some perturbed
            let mut gts: Vec<Box2D> = Vec::new();
            for b in &boxes {
                if rng.gen_bool(0.7) {
                    let (p, _) = project_box(&cam, b).unwrap();
                    let dx = rng.gen_range(-20.0..20.0);
                    let dy = rng.gen_range(-20.0..20.0);
                    gts.push(
                        Box2D::new(p.x_min + dx, p.y_min + dy, p.x_max + dx, p.y_max + dy)
                            .unwrap(),
                    );
                }
            }
            if gts.is_empty() {
                continue;
            }
            let res = match_frame(&boxes, &cam, &gts, 0.3);
            // validity: no duplicated indices, gated ious
            let mut seen_p = vec![false; boxes.len()];
            let mut seen_g = vec![false; gts.len()];
            for &(pi, gi, iou) in &res.pairs {
                assert!(!seen_p[pi] && !seen_g[gi]);
                seen_p[pi] = true;
                seen_g[gi] = true;
                assert!(iou >= 0.3);
            }
            // optimality of total matched IoU vs brute force (pre-gate cost)
            let cost: Vec<Vec<f64>> = boxes
                .iter()
                .map(|b| {
                    let (p, _) = project_box(&cam, b).unwrap();
                    gts.iter().map(|g| 1.0 - iou_2d(&p, g)).collect()
                })
                .collect();
            let assigned = hungarian(&cost).unwrap();
            let brute = brute_force_min(&cost);
            let total: f64 = assigned.iter().map(|&(i, j)| cost[i][j]).sum();
            assert_abs_diff_eq!(total, brute, epsilon = 1e-9);
        }
    }

    #[test]
    fn match_frame_permutation_invariance() {
        let cam = front_camera();
        let b1 = Box3D::new(20.0, -3.0, 1.0, 4.0, 2.0, 1.8, 0.2).unwrap();
        let b2 = Box3D::new(25.0, 4.0, 1.0, 4.5, 2.0, 1.8, -0.5).unwrap();
        let (g1, _) = project_box(&cam, &b1).unwrap();
        let (g2, _) = project_box(&cam, &b2).unwrap();
        let a = match_frame(&[b1, b2], &cam, &[g1, g2], 0.3);
        let b = match_frame(&[b2, b1], &cam, &[g1, g2], 0.3);
        let total_a: f64 = a.pairs.iter().map(|p| p.2).sum();
        let total_b: f64 = b.pairs.iter().map(|p| p.2).sum();
        assert_abs_diff_eq!(total_a, total_b, epsilon = 1e-9);
        // indices permute consistently: proposal 0 in `a` is proposal 1 in `b`
        for &(pi, gi, _) in &a.pairs {
            assert!(b.pairs.iter().any(|&(pj, gj, _)| gj == gi && pj == 1 - pi));
        }
    }
}
