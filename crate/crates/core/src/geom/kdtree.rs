//! Immutable balanced kd-tree for radius and k-nearest-neighbour queries.

use crate::geom::transform::Vec3;

const LEAF_SIZE: usize = 8;

/// Closed-ball membership predicate shared by the tree and brute-force scans.
#[inline]
pub fn in_ball(p: &Vec3, center: &Vec3, radius: f64) -> bool {
    (p - center).norm_squared() <= radius * radius
}

/// kd-tree over a borrowed point set. The tree stores a permutation of point
/// indices; each subtree `[lo, hi)` splits at `mid = (lo + hi) / 2`.
#[derive(Debug, Clone)]
pub struct SpatialIndex {
    points: Vec<Vec3>,
    perm: Vec<usize>,
    axes: Vec<u8>,
}

impl SpatialIndex {
    pub fn new(points: &[Vec3]) -> Self {
        let mut perm: Vec<usize> = (0..points.len()).collect();
        let mut axes = vec![0u8; points.len()];
        build(points, &mut perm, &mut axes);
        Self {
            points: points.to_vec(),
            perm,
            axes,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn point(&self, i: usize) -> &Vec3 {
        &self.points[i]
    }

    /// Indices of all points with `‖p − center‖ ≤ radius`, ascending.
    pub fn radius_query(&self, center: &Vec3, radius: f64) -> Vec<usize> {
        let mut out = Vec::new();
        if radius >= 0.0 {
            self.radius_rec(0, self.perm.len(), center, radius, &mut out);
        }
        out.sort_unstable();
        out
    }

    /// Number of points inside the closed ball.
    pub fn radius_count(&self, center: &Vec3, radius: f64) -> usize {
        self.radius_query(center, radius).len()
    }

    fn radius_rec(&self, lo: usize, hi: usize, c: &Vec3, r: f64, out: &mut Vec<usize>) {
        if hi - lo <= LEAF_SIZE {
            out.extend(
                self.perm[lo..hi]
                    .iter()
                    .copied()
                    .filter(|&i| in_ball(&self.points[i], c, r)),
            );
            return;
        }
        let mid = (lo + hi) / 2;
        let idx = self.perm[mid];
        let axis = self.axes[mid] as usize;
        let p = &self.points[idx];
        if in_ball(p, c, r) {
            out.push(idx);
        }
        let diff = c[axis] - p[axis];
        let (near, far) = if diff <= 0.0 {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.radius_rec(near.0, near.1, c, r, out);
        if diff * diff <= r * r {
            self.radius_rec(far.0, far.1, c, r, out);
        }
    }

    /// The `k` nearest points as `(index, squared distance)`, sorted by
    /// distance then index.
    pub fn knn(&self, q: &Vec3, k: usize) -> Vec<(usize, f64)> {
        let k = k.min(self.points.len());
        if k == 0 {
            return Vec::new();
        }
        let mut best: Vec<(usize, f64)> = Vec::with_capacity(k + 1);
        self.knn_rec(0, self.perm.len(), q, k, &mut best);
        best
    }

    pub fn nearest(&self, q: &Vec3) -> Option<(usize, f64)> {
        self.knn(q, 1).into_iter().next()
    }

    fn knn_rec(&self, lo: usize, hi: usize, q: &Vec3, k: usize, best: &mut Vec<(usize, f64)>) {
        if hi - lo <= LEAF_SIZE {
            for &i in &self.perm[lo..hi] {
                offer(best, k, i, (self.points[i] - q).norm_squared());
            }
            return;
        }
        let mid = (lo + hi) / 2;
        let idx = self.perm[mid];
        let axis = self.axes[mid] as usize;
        let p = &self.points[idx];
        offer(best, k, idx, (p - q).norm_squared());
        let diff = q[axis] - p[axis];
        let (near, far) = if diff <= 0.0 {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.knn_rec(near.0, near.1, q, k, best);
        let worst = if best.len() < k {
            f64::INFINITY
        } else {
            best[k - 1].1
        };
        if diff * diff <= worst {
            self.knn_rec(far.0, far.1, q, k, best);
        }
    }
}

fn offer(best: &mut Vec<(usize, f64)>, k: usize, idx: usize, d2: f64) {
    let key = (d2, idx);
    if best.len() == k {
        let last = best[k - 1];
        if (last.1, last.0) <= key {
            return;
        }
    }
    let pos = best.partition_point(|&(i, d)| (d, i) < key);
    best.insert(pos, (idx, d2));
    best.truncate(k);
}

fn build(points: &[Vec3], perm: &mut [usize], axes: &mut [u8]) {
    let n = perm.len();
    if n <= LEAF_SIZE {
        return;
    }
    let (mut lo, mut hi) = (points[perm[0]], points[perm[0]]);
    for &i in perm.iter() {
        lo = lo.inf(&points[i]);
        hi = hi.sup(&points[i]);
    }
    let spread = hi - lo;
    let axis = spread.imax();
    let mid = n / 2;
    perm.select_nth_unstable_by(mid, |&a, &b| {
        points[a][axis]
            .total_cmp(&points[b][axis])
            .then(a.cmp(&b))
    });
    axes[mid] = axis as u8;
    let (left, rest) = perm.split_at_mut(mid);
    let (left_axes, rest_axes) = axes.split_at_mut(mid);
    build(points, left, left_axes);
    build(points, &mut rest[1..], &mut rest_axes[1..]);
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_radius(pts: &[Vec3], c: &Vec3, r: f64) -> Vec<usize> {
        (0..pts.len()).filter(|&i| in_ball(&pts[i], c, r)).collect()
    }

    fn brute_knn(pts: &[Vec3], q: &Vec3, k: usize) -> Vec<(usize, f64)> {
        let mut all: Vec<(usize, f64)> = pts
            .iter()
            .enumerate()
            .map(|(i, p)| (i, (p - q).norm_squared()))
            .collect();
        all.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        all.truncate(k);
        all
    }

    fn unit_grid(n: i32) -> Vec<Vec3> {
        let mut pts = Vec::new();
        for x in -n..=n {
            for y in -n..=n {
                for z in -n..=n {
                    pts.push(Vec3::new(x as f64, y as f64, z as f64));
                }
            }
        }
        pts
    }

    #[test]
    fn unit_grid_ball_of_radius_one_has_seven_points() {
        let pts = unit_grid(3);
        let tree = SpatialIndex::new(&pts);
        let got = tree.radius_query(&Vec3::zeros(), 1.0);
        assert_eq!(got, brute_radius(&pts, &Vec3::zeros(), 1.0));
        assert_eq!(got.len(), 7);
    }

    #[test]
    fn small_radius_off_cloud_is_empty_and_huge_radius_is_everything() {
        let pts = unit_grid(2);
        let tree = SpatialIndex::new(&pts);
        assert!(tree.radius_query(&Vec3::new(0.5, 0.5, 0.5), 0.1).is_empty());
        assert_eq!(tree.radius_query(&Vec3::zeros(), 1e12), (0..pts.len()).collect::<Vec<_>>());
    }

    #[test]
    fn knn_on_grid_breaks_ties_by_index() {
        let pts = unit_grid(2);
        let tree = SpatialIndex::new(&pts);
        let q = Vec3::new(0.0, 0.0, 0.0);
        assert_eq!(tree.knn(&q, 7), brute_knn(&pts, &q, 7));
    }

    proptest! {
        #[test]
        fn radius_query_matches_brute_force(
            raw in prop::collection::vec(prop::array::uniform3(-10.0..10.0f64), 0..1000),
            c in prop::array::uniform3(-12.0..12.0f64),
            r in 0.01..8.0f64,
        ) {
            let pts: Vec<Vec3> = raw.iter().map(|a| Vec3::new(a[0], a[1], a[2])).collect();
            let c = Vec3::new(c[0], c[1], c[2]);
            let tree = SpatialIndex::new(&pts);
            prop_assert_eq!(tree.radius_query(&c, r), brute_radius(&pts, &c, r));
        }

        #[test]
        fn knn_matches_brute_force(
            raw in prop::collection::vec(prop::array::uniform3(-10.0..10.0f64), 1..400),
            q in prop::array::uniform3(-12.0..12.0f64),
            k in 1usize..20,
        ) {
            let pts: Vec<Vec3> = raw.iter().map(|a| Vec3::new(a[0], a[1], a[2])).collect();
            let q = Vec3::new(q[0], q[1], q[2]);
            let tree = SpatialIndex::new(&pts);
            prop_assert_eq!(tree.knn(&q, k), brute_knn(&pts, &q, k));
        }
    }
}
