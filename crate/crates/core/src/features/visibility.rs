//! Co-visibility from two sensor origins via spherical-flip hidden point
//! removal: a point is visible from a viewpoint when its flipped image is a
//! vertex of the convex hull of all flipped points plus the viewpoint.

use std::collections::HashMap;

use parry3d_f64::math::Vector3 as HullVec;
use parry3d_f64::transformation::try_convex_hull;

use crate::geom::{PointCloud, SpatialIndex, Vec3};

/// Flip radius as a multiple of the scene diameter.
pub const FLIP_RADIUS_FACTOR: f64 = 1000.0;
/// Neighbours (anchor included) averaged into the smoothed score.
pub const VOTE_NEIGHBOURS: usize = 8;

/// Visibility of every point from `viewpoint`. Points coinciding with the
/// viewpoint, and inputs whose hull cannot be built, are reported hidden.
pub fn hidden_point_removal(points: &[Vec3], viewpoint: &Vec3) -> Vec<bool> {
    let mut visible = vec![false; points.len()];
    let Some(diameter) = diameter_with(points, viewpoint) else {
        return visible;
    };
    if !(diameter > 0.0) {
        return visible;
    }
    let radius = FLIP_RADIUS_FACTOR * diameter;
    let mut flipped = Vec::with_capacity(points.len() + 1);
    let mut owners: HashMap<[u64; 3], Vec<usize>> = HashMap::new();
    for (i, p) in points.iter().enumerate() {
        let q = p - viewpoint;
        let r = q.norm();
        if r == 0.0 {
            continue;
        }
        let f = q * (2.0 * radius / r - 1.0);
        owners.entry(key(&f)).or_default().push(i);
        flipped.push(HullVec::new(f.x, f.y, f.z));
    }
    if flipped.len() < 3 {
        return visible;
    }
    flipped.push(HullVec::new(0.0, 0.0, 0.0));
    let Ok((vertices, _)) = try_convex_hull(&flipped) else {
        return visible;
    };
    for v in vertices {
        if let Some(ids) = owners.get(&key(&Vec3::new(v.x, v.y, v.z))) {
            for &i in ids {
                visible[i] = true;
            }
        }
    }
    visible
}

fn key(v: &Vec3) -> [u64; 3] {
    [v.x.to_bits(), v.y.to_bits(), v.z.to_bits()]
}

fn diameter_with(points: &[Vec3], extra: &Vec3) -> Option<f64> {
    let first = points.first()?;
    let (lo, hi) = points
        .iter()
        .chain(std::iter::once(extra))
        .fold((*first, *first), |(lo, hi), p| (lo.inf(p), hi.sup(p)));
    Some((hi - lo).norm())
}

/// Per-point co-visibility over the joint cloud of a pair expressed in a
/// common frame. Joint indexing puts source points first.
#[derive(Debug, Clone)]
pub struct VisibilityField {
    raw: Vec<f64>,
    index: SpatialIndex,
    n_source: usize,
}

impl VisibilityField {
    pub fn new(source: &PointCloud, reference: &PointCloud) -> Self {
        let joint: Vec<Vec3> = source
            .points
            .iter()
            .chain(&reference.points)
            .copied()
            .collect();
        let raw = if source.len() < 4 || reference.len() < 4 {
            vec![0.0; joint.len()]
        } else {
            let from_source = hidden_point_removal(&joint, &source.sensor_origin);
            let from_reference = hidden_point_removal(&joint, &reference.sensor_origin);
            from_source
                .iter()
                .zip(&from_reference)
                .map(|(&a, &b)| 0.5 * (a as u8 as f64 + b as u8 as f64))
                .collect()
        };
        Self {
            raw,
            index: SpatialIndex::new(&joint),
            n_source: source.len(),
        }
    }

    /// Unsmoothed two-viewpoint fraction (0, 0.5 or 1) of joint point `i`.
    pub fn raw(&self, i: usize) -> f64 {
        self.raw[i]
    }

    pub fn raw_source(&self, i: usize) -> f64 {
        self.raw[i]
    }

    pub fn raw_reference(&self, i: usize) -> f64 {
        self.raw[self.n_source + i]
    }

    /// Mean raw score over the `VOTE_NEIGHBOURS` joint points nearest to `at`.
    pub fn score(&self, at: &Vec3) -> f64 {
        let nn = self.index.knn(at, VOTE_NEIGHBOURS);
        if nn.is_empty() {
            return 0.0;
        }
        nn.iter().map(|&(i, _)| self.raw[i]).sum::<f64>() / nn.len() as f64
    }
}

/// Smoothed co-visibility of `anchor` given both clouds in a common frame.
pub fn covisibility_score(anchor: &Vec3, source: &PointCloud, reference: &PointCloud) -> f64 {
    VisibilityField::new(source, reference).score(anchor)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_plane(x: f64, y0: f64, y1: f64, z0: f64, z1: f64, step: f64) -> Vec<Vec3> {
        let mut pts = Vec::new();
        let mut y = y0;
        while y <= y1 + 1e-9 {
            let mut z = z0;
            while z <= z1 + 1e-9 {
                pts.push(Vec3::new(x, y, z));
                z += step;
            }
            y += step;
        }
        pts
    }

    /// Ray-casting oracle against an axis-aligned wall at `x = wall_x`
    /// spanning `[y0, y1] × [z0, z1]`.
    fn ray_blocked(from: &Vec3, to: &Vec3, wall_x: f64, y0: f64, y1: f64, z0: f64, z1: f64) -> bool {
        if (from.x - wall_x) * (to.x - wall_x) >= 0.0 {
            return false;
        }
        let t = (wall_x - from.x) / (to.x - from.x);
        let hit = from + (to - from) * t;
        hit.y >= y0 && hit.y <= y1 && hit.z >= z0 && hit.z <= z1
    }

    fn two_plane_scene() -> (PointCloud, PointCloud, Vec<Vec3>) {
        // dense wall at x = 5, sparse back patch at x = 10
        let wall = grid_plane(5.0, -6.0, 6.0, -6.0, 6.0, 0.25);
        let back = grid_plane(10.0, -1.0, 1.0, -1.0, 1.0, 0.5);
        let source = PointCloud::with_origin(wall.clone(), Vec3::new(0.0, 0.5, 0.0)).unwrap();
        let reference = PointCloud::with_origin(back.clone(), Vec3::new(0.0, -0.5, 0.0)).unwrap();
        (source, reference, back)
    }

    #[test]
    fn occluded_patch_scores_zero() {
        let (source, reference, back) = two_plane_scene();
        for p in &back {
            for o in [source.sensor_origin, reference.sensor_origin] {
                assert!(ray_blocked(&o, p, 5.0, -6.0, 6.0, -6.0, 6.0));
            }
        }
        let field = VisibilityField::new(&source, &reference);
        for i in 0..back.len() {
            assert_eq!(field.raw_reference(i), 0.0);
        }
        assert_eq!(field.score(&back[12]), 0.0);
    }

    #[test]
    fn exposed_wall_centre_is_visible_from_both() {
        let (source, reference, _) = two_plane_scene();
        let field = VisibilityField::new(&source, &reference);
        let centre = source
            .points
            .iter()
            .position(|p| p.y == 0.0 && p.z == 0.0)
            .unwrap();
        assert_eq!(field.raw_source(centre), 1.0);
        assert_eq!(field.score(&source.points[centre]), 1.0);
    }

    #[test]
    fn half_score_when_seen_from_one_side_only() {
        // a thin box: each face is seen only from the origin in front of it
        let mut front = grid_plane(1.0, -2.0, 2.0, -2.0, 2.0, 0.25);
        let back = grid_plane(1.2, -2.0, 2.0, -2.0, 2.0, 0.25);
        front.extend(back.iter().copied());
        let source = PointCloud::with_origin(front, Vec3::new(-5.0, 0.0, 0.0)).unwrap();
        let reference = PointCloud::with_origin(vec![Vec3::new(8.0, 0.0, 3.0), Vec3::new(8.0, 0.5, -3.0), Vec3::new(9.0, -0.5, 0.0), Vec3::new(8.5, 0.0, 1.0)], Vec3::new(6.0, 0.0, 0.0)).unwrap();
        let field = VisibilityField::new(&source, &reference);
        let n_front = 17 * 17;
        let centre = (0..n_front)
            .find(|&i| source.points[i].y == 0.0 && source.points[i].z == 0.0)
            .unwrap();
        assert_eq!(field.raw_source(centre), 0.5);
        assert_eq!(field.raw_source(n_front + centre), 0.5);
    }

    #[test]
    fn collapsed_scene_is_invisible() {
        let pts = vec![Vec3::zeros(); 6];
        assert!(hidden_point_removal(&pts, &Vec3::zeros()).iter().all(|v| !v));
        let c = PointCloud::new(pts).unwrap();
        assert_eq!(covisibility_score(&Vec3::zeros(), &c, &c), 0.0);
    }
}
