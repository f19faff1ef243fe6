//! Per-anchor multiscale feature vectors for a registered pair.

use std::fmt::Write as _;

use rand::RngExt;

use crate::error::{Error, Result};
use crate::features::config::ScaleConfig;
use crate::features::coverage::coverage_ratios;
use crate::features::entropy::differential_entropy;
use crate::features::sinkhorn::sinkhorn_divergence;
use crate::features::visibility::VisibilityField;
use crate::geom::{farthest_point_sampling, PointCloud, RegisteredPair, SpatialIndex, Vec3};
use crate::seed;

/// Features of one scale: `[H_joint, H_sep, D_λ, ρ_joint, ρ_sep]`.
pub type ScaleBlock = [f64; 5];

#[derive(Debug, Clone, PartialEq)]
pub struct AnchorFeatureVector {
    pub per_scale: Vec<ScaleBlock>,
    /// `[c, d, b]`: co-visibility, sensor distance, source flag (1 = reference).
    pub global: [f64; 3],
    pub anchor_position: Vec3,
    pub anchor_source: bool,
}

impl AnchorFeatureVector {
    /// Flat layout: all scale blocks in order, then `[c, d, b]`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.per_scale.len() * 5 + 3);
        for block in &self.per_scale {
            v.extend_from_slice(block);
        }
        v.extend_from_slice(&self.global);
        v
    }

    pub fn from_slice(f: &[f64], anchor_position: Vec3) -> Result<Self> {
        if f.len() < 8 || (f.len() - 3) % 5 != 0 {
            return Err(Error::InvalidArgument(format!(
                "feature length {} is not 5S + 3",
                f.len()
            )));
        }
        let s = (f.len() - 3) / 5;
        let per_scale = (0..s)
            .map(|k| {
                let mut b = [0.0; 5];
                b.copy_from_slice(&f[5 * k..5 * k + 5]);
                b
            })
            .collect();
        let global = [f[5 * s], f[5 * s + 1], f[5 * s + 2]];
        Ok(Self {
            per_scale,
            global,
            anchor_position,
            anchor_source: global[2] == 0.0,
        })
    }

    pub fn n_scales(&self) -> usize {
        self.per_scale.len()
    }

    pub fn is_finite(&self) -> bool {
        self.to_vec().iter().all(|v| v.is_finite())
    }
}

/// Which cloud an anchor comes from, and its index there.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnchorRef {
    Source(usize),
    Reference(usize),
}

impl AnchorRef {
    pub fn in_source(&self) -> bool {
        matches!(self, AnchorRef::Source(_))
    }

    fn stream_id(&self) -> u64 {
        match *self {
            AnchorRef::Source(i) => (i as u64) << 1,
            AnchorRef::Reference(i) => ((i as u64) << 1) | 1,
        }
    }
}

/// A pair brought into the common frame (source moved by the estimated
/// transform), with spatial indices and the visibility field.
pub struct PairContext {
    pub source: PointCloud,
    pub reference: PointCloud,
    source_index: SpatialIndex,
    reference_index: SpatialIndex,
    visibility: VisibilityField,
}

impl PairContext {
    pub fn new(pair: &RegisteredPair) -> Self {
        let source = pair.source.transformed(&pair.estimated);
        let reference = pair.reference.clone();
        Self::from_common_frame(source, reference)
    }

    pub fn from_common_frame(source: PointCloud, reference: PointCloud) -> Self {
        let source_index = SpatialIndex::new(&source.points);
        let reference_index = SpatialIndex::new(&reference.points);
        let visibility = VisibilityField::new(&source, &reference);
        Self {
            source,
            reference,
            source_index,
            reference_index,
            visibility,
        }
    }

    pub fn anchor_position(&self, anchor: AnchorRef) -> Vec3 {
        match anchor {
            AnchorRef::Source(i) => self.source.points[i],
            AnchorRef::Reference(i) => self.reference.points[i],
        }
    }

    pub fn visibility(&self) -> &VisibilityField {
        &self.visibility
    }
}

/// Computes the `5S + 3` features of one anchor.
pub fn extract_anchor_features(
    ctx: &PairContext,
    anchor: AnchorRef,
    cfg: &ScaleConfig,
) -> AnchorFeatureVector {
    let pos = ctx.anchor_position(anchor);
    let in_source = anchor.in_source();
    let sk = cfg.sinkhorn();
    let mut per_scale = Vec::with_capacity(cfg.radii.len());
    for (s, &r) in cfg.radii.iter().enumerate() {
        let src_ids = ctx.source_index.radius_query(&pos, r);
        let ref_ids = ctx.reference_index.radius_query(&pos, r);
        let src_pts: Vec<Vec3> = src_ids.iter().map(|&i| ctx.source.points[i]).collect();
        let ref_pts: Vec<Vec3> = ref_ids.iter().map(|&i| ctx.reference.points[i]).collect();

        let one_sided = src_pts.is_empty() || ref_pts.is_empty();
        let h_joint = if one_sided {
            cfg.entropy_default
        } else {
            let joint: Vec<Vec3> = src_pts.iter().chain(&ref_pts).copied().collect();
            differential_entropy(&joint, cfg.entropy_default)
        };
        let sep = if in_source { &src_pts } else { &ref_pts };
        let h_sep = differential_entropy(sep, cfg.entropy_default);

        let d = if one_sided {
            cfg.sinkhorn_default
        } else {
            let stream = anchor.stream_id().wrapping_mul(64).wrapping_add(2 * s as u64);
            let a = subsample(&src_pts, cfg.max_neighborhood_points, stream);
            let b = subsample(&ref_pts, cfg.max_neighborhood_points, stream + 1);
            sinkhorn_divergence(&a, &b, &sk)
        };
        let (rho_joint, rho_sep) = coverage_ratios(
            src_pts.len(),
            ref_pts.len(),
            ctx.source.len(),
            ctx.reference.len(),
            in_source,
        );
        per_scale.push([h_joint, h_sep, d, rho_joint, rho_sep]);
    }
    let c = ctx.visibility.score(&pos);
    let origin = if in_source {
        ctx.source.sensor_origin
    } else {
        ctx.reference.sensor_origin
    };
    let dist = (pos - origin).norm();
    let b = if in_source { 0.0 } else { 1.0 };
    AnchorFeatureVector {
        per_scale,
        global: [c, dist, b],
        anchor_position: pos,
        anchor_source: in_source,
    }
}

/// Uniform subsample without replacement, preserving input order.
fn subsample(points: &[Vec3], cap: usize, stream: u64) -> Vec<Vec3> {
    if points.len() <= cap {
        return points.to_vec();
    }
    let mut rng = seed::rng_idx(0x5eed, "neighbourhood-subsample", stream);
    let mut idx: Vec<usize> = (0..points.len()).collect();
    for i in 0..cap {
        let j = rng.random_range(i..idx.len());
        idx.swap(i, j);
    }
    let mut keep = idx[..cap].to_vec();
    keep.sort_unstable();
    keep.into_iter().map(|i| points[i]).collect()
}

/// FPS anchors chosen from each cloud in the common frame.
pub fn select_anchors(ctx: &PairContext, n_anchors: usize) -> Result<Vec<AnchorRef>> {
    let limit = ctx.source.len().min(ctx.reference.len());
    if n_anchors == 0 || n_anchors > limit {
        return Err(Error::InvalidArgument(format!(
            "n_anchors {n_anchors} must be in 1..={limit}"
        )));
    }
    let src = farthest_point_sampling(&ctx.source.points, n_anchors, 0)?;
    let rf = farthest_point_sampling(&ctx.reference.points, n_anchors, 0)?;
    Ok(src
        .into_iter()
        .map(AnchorRef::Source)
        .chain(rf.into_iter().map(AnchorRef::Reference))
        .collect())
}

/// Features for `n_anchors` FPS anchors from each cloud: source anchors
/// first, then reference anchors.
pub fn extract_pair_features(
    pair: &RegisteredPair,
    n_anchors: usize,
    cfg: &ScaleConfig,
) -> Result<Vec<AnchorFeatureVector>> {
    cfg.validate()?;
    let ctx = PairContext::new(pair);
    let anchors = select_anchors(&ctx, n_anchors)?;
    Ok(anchors
        .into_iter()
        .map(|a| extract_anchor_features(&ctx, a, cfg))
        .collect())
}

pub const FEATURE_CSV_HEADER: &str = "anchor_id,src_flag,scale,H_joint,H_sep,D_lambda,rho_joint,rho_sep,c,d";

/// One row per (anchor, scale); `scale` is the neighbourhood radius in metres.
pub fn features_to_csv(features: &[AnchorFeatureVector], radii: &[f64]) -> String {
    let mut out = String::new();
    out.push_str(FEATURE_CSV_HEADER);
    out.push('\n');
    for (id, f) in features.iter().enumerate() {
        for (block, r) in f.per_scale.iter().zip(radii) {
            let _ = writeln!(
                out,
                "{id},{},{r},{},{},{},{},{},{},{}",
                f.global[2] as u8, block[0], block[1], block[2], block[3], block[4], f.global[0], f.global[1]
            );
        }
    }
    out
}
