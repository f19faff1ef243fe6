//! Labelled pair datasets on disk.
//!
//! Layout: `<root>/manifest.json` plus one `pair_NNNNN/` directory per pair
//! holding `source.xyz`, `reference.xyz` and `meta.json`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geom::{PointCloud, RegisteredPair, RigidTransform};
use crate::io::write_atomic;
use crate::parallel::par_map;
use crate::seed;
use crate::synth::scene::{generate_scene, make_pair, IcpSettings, PerturbSpec, SceneSpec};

pub const DATASET_FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub n_pairs: usize,
    /// Template for every scene; its `seed` is replaced per pair.
    pub scene: SceneSpec,
    pub perturb: PerturbSpec,
    pub register_with_icp: bool,
    pub icp: IcpSettings,
    /// Train, validation and test fractions.
    pub split_ratios: [f64; 3],
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            n_pairs: 550,
            scene: SceneSpec::default(),
            perturb: PerturbSpec::noisy(),
            register_with_icp: true,
            icp: IcpSettings::default(),
            split_ratios: [400.0 / 550.0, 50.0 / 550.0, 100.0 / 550.0],
        }
    }
}

/// Split sizes `(train, val, test)`; train and val are rounded, test takes
/// the remainder.
pub fn split_sizes(n: usize, ratios: [f64; 3]) -> Result<[usize; 3]> {
    if ratios.iter().any(|r| !(*r >= 0.0)) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!("split ratios {ratios:?} must be non-negative and sum to 1")));
    }
    let train = ((n as f64) * ratios[0]).round() as usize;
    let val = (((n as f64) * ratios[1]).round() as usize).min(n - train.min(n));
    let train = train.min(n);
    Ok([train, val, n - train - val])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub index: usize,
    /// Directory relative to the dataset root.
    pub dir: String,
    pub scene_seed: u64,
    pub perturb_seed: u64,
    pub split: Split,
    pub label: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairMeta {
    pub index: usize,
    pub scene_seed: u64,
    pub perturb_seed: u64,
    /// Row-major rotation followed by translation.
    pub estimated: [f64; 12],
    pub ground_truth: [f64; 12],
    pub initial: [f64; 12],
    pub label: f64,
    pub initial_error: f64,
    pub realized_overlap: f64,
    pub icp_iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub master_seed: u64,
    pub spec: DatasetSpec,
    pub pairs: Vec<PairRecord>,
}

impl DatasetManifest {
    pub fn split(&self, split: Split) -> Vec<&PairRecord> {
        self.pairs.iter().filter(|p| p.split == split).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn load(root: &Path) -> Result<Self> {
        let path = root.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let m: Self = serde_json::from_str(&text)?;
        if m.format_version != DATASET_FORMAT_VERSION {
            return Err(Error::InvalidArgument(format!(
                "unsupported dataset format version {}",
                m.format_version
            )));
        }
        Ok(m)
    }
}

/// SHA-256 of the serialised manifest, lowercase hex.
pub fn manifest_hash(manifest: &DatasetManifest) -> Result<String> {
    let digest = Sha256::digest(manifest.to_json()?.as_bytes());
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

fn pair_dir_name(index: usize) -> String {
    format!("pair_{index:05}")
}

/// Generates, labels and writes every pair, then writes the manifest last.
pub fn build_dataset(root: &Path, master_seed: u64, spec: &DatasetSpec, jobs: usize) -> Result<DatasetManifest> {
    if spec.n_pairs == 0 {
        return Err(Error::InvalidArgument("a dataset needs at least one pair".into()));
    }
    spec.scene.validate()?;
    spec.perturb.validate()?;
    let sizes = split_sizes(spec.n_pairs, spec.split_ratios)?;
    fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    let indices: Vec<usize> = (0..spec.n_pairs).collect();
    let records = par_map(&indices, jobs, |_, &i| -> Result<PairRecord> {
        let split = if i < sizes[0] {
            Split::Train
        } else if i < sizes[0] + sizes[1] {
            Split::Val
        } else {
            Split::Test
        };
        write_pair(root, master_seed, spec, i, split)
    });
    let pairs = records.into_iter().collect::<Result<Vec<_>>>()?;
    let manifest = DatasetManifest {
        format_version: DATASET_FORMAT_VERSION,
        master_seed,
        spec: spec.clone(),
        pairs,
    };
    write_atomic(&root.join(MANIFEST_FILE), manifest.to_json()?.as_bytes())?;
    log::info!("wrote {} pairs to {}", spec.n_pairs, root.display());
    Ok(manifest)
}

fn write_pair(root: &Path, master_seed: u64, spec: &DatasetSpec, index: usize, split: Split) -> Result<PairRecord> {
    let scene_seed = seed::derive_idx(master_seed, "scene", index as u64);
    let perturb_seed = seed::derive_idx(master_seed, "perturb", index as u64);
    let scene = generate_scene(&SceneSpec {
        seed: scene_seed,
        ..spec.scene.clone()
    })?;
    let out = make_pair(&scene, &spec.perturb, spec.register_with_icp, &spec.icp, perturb_seed)?;
    let dir_name = pair_dir_name(index);
    let dir = root.join(&dir_name);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    out.pair.source.write_xyz(dir.join("source.xyz"))?;
    out.pair.reference.write_xyz(dir.join("reference.xyz"))?;
    let meta = PairMeta {
        index,
        scene_seed,
        perturb_seed,
        estimated: out.pair.estimated.to_row_major(),
        ground_truth: out.pair.ground_truth.to_row_major(),
        initial: out.initial.to_row_major(),
        label: out.pair.label,
        initial_error: out.initial_error,
        realized_overlap: scene.realized_overlap,
        icp_iterations: out.icp_iterations,
    };
    write_atomic(&dir.join("meta.json"), serde_json::to_string_pretty(&meta)?.as_bytes())?;
    Ok(PairRecord {
        index,
        dir: dir_name,
        scene_seed,
        perturb_seed,
        split,
        label: out.pair.label,
    })
}

pub fn pair_path(root: &Path, record: &PairRecord) -> PathBuf {
    root.join(&record.dir)
}

/// Reads one pair back; the label is recomputed from the stored clouds and
/// transforms.
pub fn load_pair(root: &Path, record: &PairRecord) -> Result<(RegisteredPair, PairMeta)> {
    let dir = pair_path(root, record);
    let meta_path = dir.join("meta.json");
    let text = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let meta: PairMeta = serde_json::from_str(&text)?;
    let source = PointCloud::read_xyz(dir.join("source.xyz"))?;
    let reference = PointCloud::read_xyz(dir.join("reference.xyz"))?;
    let pair = RegisteredPair::new(
        source,
        reference,
        RigidTransform::from_row_major(&meta.estimated),
        RigidTransform::from_row_major(&meta.ground_truth),
    )?;
    Ok((pair, meta))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_sizes_follow_ratios() {
        assert_eq!(split_sizes(100, [0.7, 0.1, 0.2]).unwrap(), [70, 10, 20]);
        assert_eq!(split_sizes(550, DatasetSpec::default().split_ratios).unwrap(), [400, 50, 100]);
        assert_eq!(split_sizes(1, [0.7, 0.1, 0.2]).unwrap(), [1, 0, 0]);
        assert!(split_sizes(10, [0.5, 0.5, 0.5]).is_err());
    }
}
