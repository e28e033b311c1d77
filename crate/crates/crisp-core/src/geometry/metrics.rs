//! Pose and shape evaluation metrics: symmetric-aware ADD-S and the
//! symmetric Chamfer distance.

use std::collections::HashMap;

use super::{Pose, PointCloud};
use crate::sdf::Point3;

/// Above this size nearest-neighbor queries switch from the exhaustive
/// O(n^2) scan to a spatial hash; the exhaustive path doubles as the oracle.
const EXHAUSTIVE_LIMIT: usize = 5000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChamferNorm {
    L1,
    L2,
}

fn point_norm(d: Point3, norm: ChamferNorm) -> f64 {
    match norm {
        ChamferNorm::L1 => d.x.abs() + d.y.abs() + d.z.abs(),
        ChamferNorm::L2 => d.norm(),
    }
}

/// Symmetric-aware average distance: mean over model points of the distance
/// from the estimated-pose-transformed point to the nearest ground-truth-pose
/// transformed point.
pub fn adds(pose_est: &Pose, pose_gt: &Pose, model: &PointCloud) -> f64 {
    assert!(!model.is_empty(), "adds requires a nonempty model");
    let est = model.transformed(pose_est);
    let gt = model.transformed(pose_gt);
    let nn = NearestNeighbor::build(&gt);
    est.iter().map(|p| nn.distance(*p, ChamferNorm::L2)).sum::<f64>() / est.len() as f64
}

/// Symmetric mean of nearest-neighbor distances between two clouds under the
/// chosen norm: `(mean_a min_b d + mean_b min_a d) / 2`.
pub fn chamfer(a: &PointCloud, b: &PointCloud, norm: ChamferNorm) -> f64 {
    assert!(!a.is_empty() && !b.is_empty(), "chamfer requires nonempty clouds");
    let nn_b = NearestNeighbor::build(b);
    let nn_a = NearestNeighbor::build(a);
    let fwd = a.iter().map(|p| nn_b.distance(*p, norm)).sum::<f64>() / a.len() as f64;
    let bwd = b.iter().map(|p| nn_a.distance(*p, norm)).sum::<f64>() / b.len() as f64;
    0.5 * (fwd + bwd)
}

/// Exact nearest-neighbor distances; exhaustive for small targets, uniform
/// spatial hash with ring search for large ones.
pub(crate) enum NearestNeighbor<'a> {
    Exhaustive(&'a [Point3]),
    Hashed(HashedCloud<'a>),
}

impl<'a> NearestNeighbor<'a> {
    pub fn build(cloud: &'a PointCloud) -> Self {
        if cloud.len() <= EXHAUSTIVE_LIMIT {
            NearestNeighbor::Exhaustive(&cloud.points)
        } else {
            NearestNeighbor::Hashed(HashedCloud::build(&cloud.points))
        }
    }

    pub fn distance(&self, q: Point3, norm: ChamferNorm) -> f64 {
        match self {
            NearestNeighbor::Exhaustive(pts) => pts
                .iter()
                .map(|p| point_norm(q - p, norm))
                .fold(f64::INFINITY, f64::min),
            NearestNeighbor::Hashed(h) => h.distance(q, norm),
        }
    }
}

pub(crate) struct HashedCloud<'a> {
    points: &'a [Point3],
    cells: HashMap<(i64, i64, i64), Vec<u32>>,
    cell: f64,
    origin: Point3,
}

impl<'a> HashedCloud<'a> {
    fn build(points: &'a [Point3]) -> Self {
        let mut min = points[0];
        let mut max = points[0];
        for p in points {
            min = min.inf(p);
            max = max.sup(p);
        }
        let diag = (max - min).norm().max(1e-9);
        let cell = diag / (points.len() as f64).cbrt().max(1.0);
        let mut cells: HashMap<(i64, i64, i64), Vec<u32>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            let key = Self::key_of(*p, min, cell);
            cells.entry(key).or_default().push(i as u32);
        }
        HashedCloud { points, cells, cell, origin: min }
    }

    fn key_of(p: Point3, origin: Point3, cell: f64) -> (i64, i64, i64) {
        (
            ((p.x - origin.x) / cell).floor() as i64,
            ((p.y - origin.y) / cell).floor() as i64,
            ((p.z - origin.z) / cell).floor() as i64,
        )
    }

    fn distance(&self, q: Point3, norm: ChamferNorm) -> f64 {
        let (cx, cy, cz) = Self::key_of(q, self.origin, self.cell);
        let mut best = f64::INFINITY;
        let mut ring = 0i64;
        loop {
            // Any cell in ring r is at least (r-1) * cell away from q, in
            // every norm that dominates Chebyshev: stop once best is closer.
            if best <= (ring - 1).max(0) as f64 * self.cell {
                return best;
            }
            let mut touched = false;
            for dx in -ring..=ring {
                for dy in -ring..=ring {
                    for dz in -ring..=ring {
                        if dx.abs().max(dy.abs()).max(dz.abs()) != ring {
                            continue;
                        }
                        if let Some(ids) = self.cells.get(&(cx + dx, cy + dy, cz + dz)) {
                            touched = true;
                            for &i in ids {
                                let d = point_norm(q - self.points[i as usize], norm);
                                if d < best {
                                    best = d;
                                }
                            }
                        }
                    }
                }
            }
            // Past the grid extent with something found already: done.
            if !touched && best.is_finite() && ring as f64 * self.cell > best {
                return best;
            }
            ring += 1;
            if ring > 1_000_000 {
                return best; // unreachable for finite inputs
            }
        }
    }
}
