//! Scale-attention regressor with hand-written reverse-mode gradients.

pub mod attention;
pub mod checkpoint;
pub mod encoder;
pub mod linear;
pub mod network;
pub mod normalize;
pub mod params;

pub use attention::{scale_attention, split_scales, AttentionCache};
pub use checkpoint::{Checkpoint, TrainMeta};
pub use network::{backward, batch_loss, forward, forward_cached, loss, loss_and_gradient, PairInput};
pub use normalize::FeatureStats;
pub use params::{FusionMode, ModelConfig, ModelParams};
