//! Training, evaluation, ablations and the mapping simulation.

pub mod ablation;
pub mod features;
pub mod mapsim;
pub mod metrics;
pub mod optim;
pub mod trainer;

pub use ablation::{ablate_radius, ablate_temperature, ablation_csv, radius_variants, AblationRow};
pub use features::{FeatureSet, PairFeatures};
pub use mapsim::{simulate_trajectory, Detector, MapSimConfig, MapSimReport, Selection, Trajectory};
pub use metrics::{constant_rmse, evaluate_predictions, EvalReport};
pub use optim::{Adam, AdamConfig};
pub use trainer::{evaluate, predict, predict_pair, train, EpochLog, TrainConfig, TrainOutcome};
