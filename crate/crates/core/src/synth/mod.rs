//! Synthetic scenes, perturbed registrations and on-disk datasets.

pub mod dataset;
pub mod scene;
pub mod world;

pub use dataset::{build_dataset, load_pair, manifest_hash, split_sizes, DatasetManifest, DatasetSpec, PairMeta, PairRecord, Split};
pub use scene::{generate_scene, make_pair, make_pair_with, IcpSettings, PairOutcome, PerturbSpec, Scene, SceneSpec};
pub use world::{DensityMode, SensorModel, World};
