use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::sinkhorn::SinkhornParams;

/// Neighbourhood scales and numerical settings for feature extraction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleConfig {
    /// Neighbourhood radii in metres, strictly decreasing.
    pub radii: Vec<f64>,
    pub sinkhorn_lambda: f64,
    pub sinkhorn_max_iters: usize,
    pub sinkhorn_tol: f64,
    /// Cap on points per neighbourhood fed to the Sinkhorn solver; larger
    /// neighbourhoods are subsampled uniformly with a fixed seed.
    pub max_neighborhood_points: usize,
    pub entropy_default: f64,
    pub sinkhorn_default: f64,
}

impl Default for ScaleConfig {
    fn default() -> Self {
        Self {
            radii: vec![7.5, 4.0, 2.5],
            sinkhorn_lambda: 0.05,
            sinkhorn_max_iters: 200,
            sinkhorn_tol: 1e-6,
            max_neighborhood_points: 256,
            entropy_default: -10.0,
            sinkhorn_default: 0.0,
        }
    }
}

impl ScaleConfig {
    pub fn n_scales(&self) -> usize {
        self.radii.len()
    }

    /// Length of an anchor feature vector, `5S + 3`.
    pub fn feature_dim(&self) -> usize {
        5 * self.radii.len() + 3
    }

    pub fn sinkhorn(&self) -> SinkhornParams {
        SinkhornParams {
            lambda: self.sinkhorn_lambda,
            max_iters: self.sinkhorn_max_iters,
            tol: self.sinkhorn_tol,
            default: self.sinkhorn_default,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.radii.is_empty() {
            return Err(Error::InvalidArgument("at least one radius is required".into()));
        }
        if self.radii.iter().any(|r| !(*r > 0.0) || !r.is_finite()) {
            return Err(Error::InvalidArgument("radii must be positive".into()));
        }
        if self.radii.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::InvalidArgument("radii must be strictly decreasing".into()));
        }
        if !(self.sinkhorn_lambda > 0.0) || !(self.sinkhorn_tol > 0.0) {
            return Err(Error::InvalidArgument("sinkhorn lambda and tolerance must be positive".into()));
        }
        if self.sinkhorn_max_iters == 0 || self.max_neighborhood_points == 0 {
            return Err(Error::InvalidArgument("iteration budget and neighbourhood cap must be positive".into()));
        }
        if !self.entropy_default.is_finite() || !self.sinkhorn_default.is_finite() {
            return Err(Error::InvalidArgument("defaults must be finite".into()));
        }
        Ok(())
    }
}
