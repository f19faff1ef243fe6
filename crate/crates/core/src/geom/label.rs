//! Registered pairs and the alignment-error label.

use crate::error::{Error, Result};
use crate::geom::cloud::PointCloud;
use crate::geom::transform::{RigidTransform, Vec3};

/// A registered source/reference pair. Clouds live in their own sensor
/// frames; both transforms map source coordinates into the reference frame.
#[derive(Debug, Clone)]
pub struct RegisteredPair {
    pub source: PointCloud,
    pub reference: PointCloud,
    pub estimated: RigidTransform,
    pub ground_truth: RigidTransform,
    pub label: f64,
}

impl RegisteredPair {
    /// Builds the pair and computes its label.
    pub fn new(
        source: PointCloud,
        reference: PointCloud,
        estimated: RigidTransform,
        ground_truth: RigidTransform,
    ) -> Result<Self> {
        let label = mean_displacement(&source.points, &estimated, &ground_truth)?;
        Ok(Self {
            source,
            reference,
            estimated,
            ground_truth,
            label,
        })
    }
}

/// Mean over source points of `‖T̂(p) − T*(p)‖₂`.
pub fn alignment_error(pair: &RegisteredPair) -> Result<f64> {
    mean_displacement(&pair.source.points, &pair.estimated, &pair.ground_truth)
}

pub fn mean_displacement(
    points: &[Vec3],
    estimated: &RigidTransform,
    ground_truth: &RigidTransform,
) -> Result<f64> {
    if points.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let sum: f64 = points
        .iter()
        .map(|p| (estimated.apply(p) - ground_truth.apply(p)).norm())
        .sum();
    Ok(sum / points.len() as f64)
}
