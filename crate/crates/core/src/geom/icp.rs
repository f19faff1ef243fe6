//! Point-to-point ICP with a closed-form SVD rigid fit.

use nalgebra::Matrix3;

use crate::error::{Error, Result};
use crate::geom::cloud::PointCloud;
use crate::geom::kdtree::SpatialIndex;
use crate::geom::transform::{RigidTransform, Vec3};

#[derive(Debug, Clone)]
pub struct IcpOutcome {
    pub transform: RigidTransform,
    /// RMS closest-point distance measured before each update, plus the
    /// final value after the last update.
    pub residuals: Vec<f64>,
    pub iterations: usize,
}

/// Least-squares rigid transform mapping `src[i]` onto `dst[i]` (Kabsch).
pub fn fit_rigid(src: &[Vec3], dst: &[Vec3]) -> Result<RigidTransform> {
    if src.len() != dst.len() || src.is_empty() {
        return Err(Error::InvalidArgument(
            "correspondence sets must be non-empty and of equal length".into(),
        ));
    }
    let n = src.len() as f64;
    let cs: Vec3 = src.iter().sum::<Vec3>() / n;
    let cd: Vec3 = dst.iter().sum::<Vec3>() / n;
    let mut h = Matrix3::zeros();
    for (s, d) in src.iter().zip(dst) {
        h += (s - cs) * (d - cd).transpose();
    }
    h /= n;
    let svd = h.svd(true, true);
    let sv = svd.singular_values;
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]));
    let (s1, s2) = (sv[order[0]], sv[order[1]]);
    if !(s1 > 0.0) || s2 <= s1 * 1e-12 {
        return Err(Error::DegenerateGeometry(
            "correspondence covariance has rank < 2".into(),
        ));
    }
    let u = svd.u.expect("svd u");
    let vt = svd.v_t.expect("svd v_t");
    let v = vt.transpose();
    let mut fix = Matrix3::identity();
    if (v * u.transpose()).determinant() < 0.0 {
        // flip the axis of the smallest singular value
        let k = order[2];
        fix[(k, k)] = -1.0;
    }
    let r = v * fix * u.transpose();
    let t = cd - r * cs;
    Ok(RigidTransform {
        rotation: r,
        translation: t,
    }
    .orthonormalized())
}

/// Registers `source` onto `reference` starting from `init`.
pub fn icp_register(
    source: &PointCloud,
    reference: &PointCloud,
    init: &RigidTransform,
    max_iters: usize,
    tol: f64,
) -> Result<RigidTransform> {
    icp_register_detailed(source, reference, init, max_iters, tol).map(|o| o.transform)
}

pub fn icp_register_detailed(
    source: &PointCloud,
    reference: &PointCloud,
    init: &RigidTransform,
    max_iters: usize,
    tol: f64,
) -> Result<IcpOutcome> {
    check_spread(&source.points, "source")?;
    check_spread(&reference.points, "reference")?;
    let tree = SpatialIndex::new(&reference.points);
    icp_with_index(&source.points, &tree, init, max_iters, tol)
}

/// ICP against a prebuilt index of the reference points.
pub fn icp_with_index(
    source: &[Vec3],
    tree: &SpatialIndex,
    init: &RigidTransform,
    max_iters: usize,
    tol: f64,
) -> Result<IcpOutcome> {
    let mut current = *init;
    let mut moved = current.apply_all(source);
    let mut matched = vec![Vec3::zeros(); source.len()];
    let mut residuals = Vec::with_capacity(max_iters + 1);
    let mut iterations = 0;
    let mut prev = f64::INFINITY;
    for _ in 0..max_iters {
        let rms = correspond(&moved, tree, &mut matched);
        residuals.push(rms);
        if prev - rms < tol {
            break;
        }
        prev = rms;
        let step = fit_rigid(&moved, &matched)?;
        current = step.compose(&current).orthonormalized();
        moved = current.apply_all(source);
        iterations += 1;
    }
    if iterations == max_iters {
        residuals.push(correspond(&moved, tree, &mut matched));
    }
    Ok(IcpOutcome {
        transform: current,
        residuals,
        iterations,
    })
}

fn correspond(moved: &[Vec3], tree: &SpatialIndex, matched: &mut [Vec3]) -> f64 {
    let mut sq = 0.0;
    for (p, m) in moved.iter().zip(matched.iter_mut()) {
        let (j, d2) = tree.nearest(p).expect("non-empty reference");
        *m = *tree.point(j);
        sq += d2;
    }
    (sq / moved.len() as f64).sqrt()
}

fn check_spread(points: &[Vec3], which: &str) -> Result<()> {
    if points.len() < 3 {
        return Err(Error::DegenerateGeometry(format!(
            "{which} cloud needs at least 3 points"
        )));
    }
    let n = points.len() as f64;
    let c: Vec3 = points.iter().sum::<Vec3>() / n;
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = p - c;
        cov += d * d.transpose();
    }
    let mut ev: Vec<f64> = cov.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    if !(ev[0] > 0.0) || ev[1] <= ev[0] * 1e-12 {
        return Err(Error::DegenerateGeometry(format!("{which} cloud is collinear")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_cloud(n: usize, seed: u64) -> PointCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts = (0..n)
            .map(|_| {
                Vec3::new(
                    rng.random_range(-4.0..6.0),
                    rng.random_range(-2.0..3.0),
                    rng.random_range(-1.0..1.5),
                )
            })
            .collect();
        PointCloud::new(pts).unwrap()
    }

    #[test]
    fn fit_rigid_recovers_known_transform() {
        let src = random_cloud(50, 1).points;
        let t = RigidTransform::from_yaw_roll_pitch(0.7, -0.2, 0.1, Vec3::new(1.0, -2.0, 0.5));
        let dst = t.apply_all(&src);
        let est = fit_rigid(&src, &dst).unwrap();
        assert!((est.rotation - t.rotation).amax() < 1e-9);
        assert!((est.translation - t.translation).norm() < 1e-9);
    }

    #[test]
    fn identical_clouds_are_a_fixed_point() {
        let c = random_cloud(300, 2);
        let t = icp_register(&c, &c, &RigidTransform::identity(), 30, 1e-9).unwrap();
        assert!((t.rotation - Matrix3::identity()).amax() < 1e-6);
        assert!(t.translation.norm() < 1e-6);
    }

    #[test]
    fn recovers_translation() {
        let src = random_cloud(800, 3);
        let reference = src.transformed(&RigidTransform::from_translation(Vec3::new(0.5, 0.0, 0.0)));
        let t = icp_register(&src, &reference, &RigidTransform::identity(), 100, 1e-10).unwrap();
        // oracle: closed-form fit on the known correspondences
        let oracle = fit_rigid(&src.points, &reference.points).unwrap();
        assert!((t.translation - oracle.translation).norm() < 1e-3);
        assert!((t.translation - Vec3::new(0.5, 0.0, 0.0)).norm() < 1e-3);
    }

    #[test]
    fn recovers_small_rotation() {
        let src = random_cloud(500, 4);
        let truth = RigidTransform::rot_z(5f64.to_radians());
        let reference = src.transformed(&truth);
        let t = icp_register(&src, &reference, &RigidTransform::identity(), 100, 1e-10).unwrap();
        let err = t.inverse().compose(&truth).angle().to_degrees();
        assert!(err < 0.1, "rotation error {err} deg");
    }

    #[test]
    fn residual_is_monotone() {
        let src = random_cloud(400, 5);
        let truth = RigidTransform::from_yaw_roll_pitch(0.15, 0.02, -0.03, Vec3::new(0.4, -0.3, 0.1));
        let reference = random_cloud(400, 6);
        let mixed = PointCloud::new(
            src.transformed(&truth).points.into_iter().chain(reference.points).collect(),
        )
        .unwrap();
        let out = icp_register_detailed(&src, &mixed, &RigidTransform::identity(), 60, 0.0).unwrap();
        for w in out.residuals.windows(2) {
            assert!(w[1] <= w[0] + 1e-9, "{:?}", out.residuals);
        }
    }

    #[test]
    fn collinear_input_is_degenerate() {
        let line = PointCloud::new((0..10).map(|i| Vec3::new(i as f64, 0.0, 0.0)).collect()).unwrap();
        let other = random_cloud(20, 7);
        let err = icp_register(&line, &other, &RigidTransform::identity(), 10, 1e-6).unwrap_err();
        assert!(err.to_string().contains("degenerate geometry"));
        assert!(fit_rigid(&line.points, &line.points).is_err());
    }
}
