//! Lossless JSON checkpoints.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::ScaleConfig;
use crate::model::normalize::FeatureStats;
use crate::model::params::{ModelConfig, ModelParams};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainMeta {
    pub seed: u64,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_val_rmse: f64,
    /// Anchors sampled from each cloud.
    pub n_anchors: usize,
    /// Indices into `scales.radii` fed to the model, in order.
    pub scale_selection: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub model: ModelConfig,
    /// `(name, shape)` of each tensor in the order of `params`.
    pub manifest: Vec<(String, Vec<usize>)>,
    pub params: Vec<f64>,
    pub scales: ScaleConfig,
    pub stats: FeatureStats,
    pub meta: TrainMeta,
}

impl Checkpoint {
    pub fn new(params: &ModelParams, scales: ScaleConfig, stats: FeatureStats, meta: TrainMeta) -> Self {
        Self {
            format_version: CHECKPOINT_FORMAT_VERSION,
            model: params.config.clone(),
            manifest: params.manifest(),
            params: params.to_flat(),
            scales,
            stats,
            meta,
        }
    }

    /// Rebuilds parameters after checking the manifest against the config.
    pub fn model_params(&self) -> Result<ModelParams> {
        if self.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported format version {}", self.format_version)));
        }
        let p = ModelParams::from_flat(&self.model, &self.params).map_err(|e| Error::Checkpoint(e.to_string()))?;
        if p.manifest() != self.manifest {
            return Err(Error::Checkpoint("parameter manifest does not match model config".into()));
        }
        if self.stats.dim() != self.model.feature_dim() {
            return Err(Error::Checkpoint("normalisation width does not match model".into()));
        }
        if self.meta.scale_selection.len() != self.model.n_scales
            || self.meta.scale_selection.iter().any(|&s| s >= self.scales.radii.len())
        {
            return Err(Error::Checkpoint("scale selection does not match scale config".into()));
        }
        Ok(p)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(s)?;
        c.model_params()?;
        Ok(c)
    }

    /// Writes to a sibling temporary file, then renames into place.
    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, self.to_json()?.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let p = ModelParams::init(&ModelConfig::default(), 17).unwrap();
        let stats = FeatureStats {
            mean: (0..18).map(|i| i as f64 * 0.1 + 1e-17).collect(),
            std: (0..18).map(|i| 1.0 / (i as f64 + 3.0)).collect(),
        };
        let meta = TrainMeta {
            seed: 17,
            epochs_run: 3,
            best_epoch: 2,
            best_val_rmse: 0.123456789012345,
            n_anchors: 16,
            scale_selection: vec![0, 1, 2],
        };
        Checkpoint::new(&p, ScaleConfig::default(), stats, meta)
    }

    #[test]
    fn json_roundtrip_is_bit_exact() {
        let c = sample();
        let back = Checkpoint::from_json(&c.to_json().unwrap()).unwrap();
        assert_eq!(c, back);
        for (a, b) in c.params.iter().zip(&back.params) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let c = sample();
        c.save(&path).unwrap();
        assert_eq!(Checkpoint::load(&path).unwrap(), c);
    }

    #[test]
    fn tampered_checkpoints_are_rejected() {
        let mut c = sample();
        c.params.pop();
        assert!(matches!(c.model_params(), Err(Error::Checkpoint(_))));
        let mut c = sample();
        c.manifest.swap(0, 1);
        assert!(c.model_params().is_err());
        let mut c = sample();
        c.meta.scale_selection = vec![0, 1, 5];
        assert!(c.model_params().is_err());
        assert!(Checkpoint::load(Path::new("/nonexistent/model.json")).is_err());
    }
}
