//! Multiscale per-anchor features: Gaussian differential entropies, Sinkhorn
//! divergence, coverage ratios, co-visibility, sensor distance and source flag.

pub mod config;
pub mod coverage;
pub mod entropy;
pub mod extract;
pub mod sinkhorn;
pub mod visibility;

pub use config::ScaleConfig;
pub use coverage::coverage_ratios;
pub use entropy::differential_entropy;
pub use extract::{
    extract_anchor_features, extract_pair_features, features_to_csv, select_anchors, AnchorFeatureVector,
    AnchorRef, PairContext, FEATURE_CSV_HEADER,
};
pub use sinkhorn::{entropic_ot, sinkhorn_divergence, EntropicOt, SinkhornParams};
pub use visibility::{covisibility_score, hidden_point_removal, VisibilityField};
