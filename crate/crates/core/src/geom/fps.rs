use crate::error::{Error, Result};
use crate::geom::transform::Vec3;

/// Greedy farthest point sampling. The first pick is `start_index`; every
/// later pick maximizes the distance to the already selected set, ties going
/// to the lowest index.
pub fn farthest_point_sampling(points: &[Vec3], k: usize, start_index: usize) -> Result<Vec<usize>> {
    let n = points.len();
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!(
            "sample count {k} outside 1..={n}"
        )));
    }
    if start_index >= n {
        return Err(Error::InvalidArgument(format!(
            "start index {start_index} out of range for {n} points"
        )));
    }
    let mut selected = Vec::with_capacity(k);
    let mut min_d2 = vec![f64::INFINITY; n];
    let mut taken = vec![false; n];
    let mut current = start_index;
    loop {
        selected.push(current);
        taken[current] = true;
        if selected.len() == k {
            break;
        }
        let c = points[current];
        let mut best = usize::MAX;
        let mut best_d = f64::NEG_INFINITY;
        for (i, p) in points.iter().enumerate() {
            let d = (p - c).norm_squared();
            if d < min_d2[i] {
                min_d2[i] = d;
            }
            if !taken[i] && min_d2[i] > best_d {
                best_d = min_d2[i];
                best = i;
            }
        }
        current = best;
    }
    Ok(selected)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn line(xs: &[f64]) -> Vec<Vec3> {
        xs.iter().map(|&x| Vec3::new(x, 0.0, 0.0)).collect()
    }

    /// Reference implementation straight from the definition.
    fn brute_fps(points: &[Vec3], k: usize, start: usize) -> Vec<usize> {
        let mut sel = vec![start];
        while sel.len() < k {
            let mut best = None;
            for i in 0..points.len() {
                if sel.contains(&i) {
                    continue;
                }
                let d = sel
                    .iter()
                    .map(|&s| (points[i] - points[s]).norm())
                    .fold(f64::INFINITY, f64::min);
                match best {
                    Some((_, bd)) if bd >= d => {}
                    _ => best = Some((i, d)),
                }
            }
            sel.push(best.unwrap().0);
        }
        sel
    }

    fn min_pairwise(points: &[Vec3], idx: &[usize]) -> f64 {
        let mut m = f64::INFINITY;
        for a in 0..idx.len() {
            for b in a + 1..idx.len() {
                m = m.min((points[idx[a]] - points[idx[b]]).norm());
            }
        }
        m
    }

    #[test]
    fn picks_far_end_of_line() {
        assert_eq!(farthest_point_sampling(&line(&[0.0, 1.0, 10.0]), 2, 0).unwrap(), vec![0, 2]);
    }

    #[test]
    fn seed_only() {
        let pts = line(&[0.0, 1.0, 2.0, 3.0, 4.0]);
        assert_eq!(farthest_point_sampling(&pts, 1, 3).unwrap(), vec![3]);
    }

    #[test]
    fn exhaustion_is_a_permutation() {
        let pts = line(&[0.0, 1.0, 2.0, 3.0, 3.0, 7.5]);
        let mut got = farthest_point_sampling(&pts, pts.len(), 2).unwrap();
        got.sort_unstable();
        assert_eq!(got, (0..pts.len()).collect::<Vec<_>>());
    }

    #[test]
    fn ties_go_to_lowest_index() {
        // 0 and 2 are both at distance 1 from the seed
        let pts = line(&[-1.0, 0.0, 1.0]);
        assert_eq!(farthest_point_sampling(&pts, 2, 1).unwrap(), vec![1, 0]);
    }

    #[test]
    fn rejects_out_of_range() {
        let pts = line(&[0.0, 1.0]);
        assert!(farthest_point_sampling(&pts, 0, 0).is_err());
        assert!(farthest_point_sampling(&pts, 3, 0).is_err());
        assert!(farthest_point_sampling(&pts, 1, 2).is_err());
    }

    #[test]
    fn matches_brute_force_definition() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let pts: Vec<Vec3> = (0..60)
                .map(|_| Vec3::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(-1.0..1.0)))
                .collect();
            assert_eq!(farthest_point_sampling(&pts, 15, 4).unwrap(), brute_fps(&pts, 15, 4));
        }
    }

    #[test]
    fn spread_beats_random_subsets() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pts: Vec<Vec3> = (0..300)
            .map(|_| Vec3::new(rng.random_range(0.0..10.0), rng.random_range(0.0..10.0), rng.random_range(0.0..10.0)))
            .collect();
        let fps = farthest_point_sampling(&pts, 20, 0).unwrap();
        let fps_min = min_pairwise(&pts, &fps);
        for _ in 0..25 {
            let mut idx: Vec<usize> = (0..pts.len()).collect();
            for i in 0..20 {
                let j = rng.random_range(i..idx.len());
                idx.swap(i, j);
            }
            assert!(fps_min >= min_pairwise(&pts, &idx[..20]));
        }
    }
}
