//! Per-pair model inputs extracted once per dataset and cached on disk.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::features::{extract_pair_features, ScaleConfig};
use crate::geom::{RegisteredPair, Vec3};
use crate::io::write_atomic;
use crate::model::{FeatureStats, PairInput};
use crate::parallel::par_map;
use crate::synth::{load_pair, DatasetManifest, Split};

/// Raw (unstandardised) features of one pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairFeatures {
    pub index: usize,
    pub split: Split,
    pub label: f64,
    /// Row-major `n_rows × dim`, source anchors first.
    pub features: Vec<f64>,
    pub positions: Vec<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSet {
    pub scales: ScaleConfig,
    pub n_anchors: usize,
    pub dim: usize,
    pub pairs: Vec<PairFeatures>,
}

/// Features of a single pair as stored in a [`FeatureSet`].
pub fn pair_features(pair: &RegisteredPair, n_anchors: usize, scales: &ScaleConfig) -> Result<(Vec<f64>, Vec<[f64; 3]>)> {
    let fv = extract_pair_features(pair, n_anchors, scales)?;
    let mut features = Vec::with_capacity(fv.len() * scales.feature_dim());
    let mut positions = Vec::with_capacity(fv.len());
    for f in &fv {
        if !f.is_finite() {
            return Err(Error::DegenerateGeometry("non-finite anchor feature".into()));
        }
        features.extend(f.to_vec());
        positions.push([f.anchor_position.x, f.anchor_position.y, f.anchor_position.z]);
    }
    Ok((features, positions))
}

impl FeatureSet {
    /// Extracts features for every pair of a dataset.
    pub fn extract(root: &Path, manifest: &DatasetManifest, n_anchors: usize, scales: &ScaleConfig, jobs: usize) -> Result<Self> {
        scales.validate()?;
        let results = par_map(&manifest.pairs, jobs, |_, rec| -> Result<PairFeatures> {
            let (pair, _) = load_pair(root, rec)?;
            let (features, positions) = pair_features(&pair, n_anchors, scales)?;
            Ok(PairFeatures {
                index: rec.index,
                split: rec.split,
                label: pair.label,
                features,
                positions,
            })
        });
        Ok(Self {
            scales: scales.clone(),
            n_anchors,
            dim: scales.feature_dim(),
            pairs: results.into_iter().collect::<Result<_>>()?,
        })
    }

    /// Reuses `<root>/features/<key>.json` when present, otherwise extracts
    /// and writes it. The key hashes the extraction settings and manifest.
    pub fn load_or_extract(root: &Path, manifest: &DatasetManifest, n_anchors: usize, scales: &ScaleConfig, jobs: usize) -> Result<Self> {
        let path = cache_path(root, manifest, n_anchors, scales)?;
        if path.exists() {
            let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            let set: Self = serde_json::from_str(&text)?;
            if set.n_anchors == n_anchors && &set.scales == scales && set.pairs.len() == manifest.pairs.len() {
                return Ok(set);
            }
        }
        let set = Self::extract(root, manifest, n_anchors, scales, jobs)?;
        write_atomic(&path, serde_json::to_string(&set)?.as_bytes())?;
        Ok(set)
    }

    pub fn split(&self, split: Split) -> Vec<&PairFeatures> {
        self.pairs.iter().filter(|p| p.split == split).collect()
    }
}

fn cache_path(root: &Path, manifest: &DatasetManifest, n_anchors: usize, scales: &ScaleConfig) -> Result<PathBuf> {
    let mut h = Sha256::new();
    h.update(serde_json::to_string(scales)?.as_bytes());
    h.update(n_anchors.to_le_bytes());
    h.update(manifest.to_json()?.as_bytes());
    let key: String = h.finalize().iter().take(8).map(|b| format!("{b:02x}")).collect();
    Ok(root.join("features").join(format!("{key}.json")))
}

/// Keeps the blocks listed in `selection` (in that order) plus the global
/// triple of each row.
pub fn select_scales(features: &[f64], dim: usize, selection: &[usize]) -> Vec<f64> {
    let s_full = (dim - 3) / 5;
    let out_dim = 5 * selection.len() + 3;
    let mut out = Vec::with_capacity(features.len() / dim * out_dim);
    for row in features.chunks_exact(dim) {
        for &s in selection {
            out.extend_from_slice(&row[5 * s..5 * s + 5]);
        }
        out.extend_from_slice(&row[5 * s_full..]);
    }
    out
}

/// Model input for one pair: selected scales, standardised.
pub fn model_input(pair: &PairFeatures, dim: usize, selection: &[usize], stats: &FeatureStats) -> Result<PairInput> {
    let mut f = select_scales(&pair.features, dim, selection);
    stats.apply(&mut f);
    let positions = pair.positions.iter().map(|p| Vec3::new(p[0], p[1], p[2])).collect();
    PairInput::new(stats.dim(), f, positions)
}

/// Standardisation statistics fitted on the given pairs after selection.
pub fn fit_stats(pairs: &[&PairFeatures], dim: usize, selection: &[usize]) -> Result<FeatureStats> {
    let selected: Vec<Vec<f64>> = pairs.iter().map(|p| select_scales(&p.features, dim, selection)).collect();
    FeatureStats::fit(5 * selection.len() + 3, selected.iter().map(|v| v.as_slice()))
}
