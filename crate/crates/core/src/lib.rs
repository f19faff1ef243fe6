//! Regression of point-cloud registration error from multiscale geometric
//! features fused by tempered cross-attention.
//!
//! The crate is organised bottom-up:
//! - [`geom`]: clouds, SE(3) transforms, kd-tree, farthest point sampling, ICP and labels;
//! - [`features`]: per-anchor multiscale feature vectors;
//! - [`model`]: the differentiable regressor with hand-written reverse-mode gradients;
//! - [`synth`]: synthetic scenes and labelled datasets;
//! - [`train`]: optimisation, metrics, ablations and the mapping simulation.

pub mod error;
pub mod features;
pub mod geom;
pub mod io;
pub mod model;
pub mod parallel;
pub mod seed;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
