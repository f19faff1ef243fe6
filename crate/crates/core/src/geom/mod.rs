//! Point clouds, rigid transforms, spatial indexing, sampling and ICP.

pub mod cloud;
pub mod fps;
pub mod icp;
pub mod kdtree;
pub mod label;
pub mod transform;

pub use cloud::PointCloud;
pub use fps::farthest_point_sampling;
pub use icp::{fit_rigid, icp_register, icp_register_detailed, IcpOutcome};
pub use kdtree::SpatialIndex;
pub use label::{alignment_error, mean_displacement, RegisteredPair};
pub use transform::{RigidTransform, Vec3};
