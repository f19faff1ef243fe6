use nalgebra::Matrix3;

use crate::geom::Vec3;

/// Below this covariance determinant a neighbourhood is treated as degenerate.
pub const DET_FLOOR: f64 = 1e-12;

/// Maximum-likelihood covariance (divisor `n`).
pub fn ml_covariance(points: &[Vec3]) -> Option<Matrix3<f64>> {
    if points.is_empty() {
        return None;
    }
    let n = points.len() as f64;
    let mean: Vec3 = points.iter().sum::<Vec3>() / n;
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = p - mean;
        cov += d * d.transpose();
    }
    Some(cov / n)
}

/// Gaussian differential entropy `½ ln[(2πe)³ det Σ]` of a neighbourhood, or
/// `default` when it has fewer than four points or `det Σ ≤ 1e-12`.
pub fn differential_entropy(points: &[Vec3], default: f64) -> f64 {
    if points.len() < 4 {
        return default;
    }
    let det = match ml_covariance(points) {
        Some(c) => c.determinant(),
        None => return default,
    };
    if !(det > DET_FLOOR) || !det.is_finite() {
        return default;
    }
    0.5 * (3.0 * (2.0 * std::f64::consts::PI * std::f64::consts::E).ln() + det.ln())
}
