//! Contact-augmented rigid registration for in-hand object scanning.
//!
//! The pipeline aligns each incoming object cloud to the previous frame
//! using visual 3D feature matches plus contact correspondences taken from a
//! posed hand mesh, refines the result by ICP against the accumulated scan,
//! and fuses everything into a TSDF volume from which a mesh is extracted.

pub mod contact;
pub mod error;
pub mod features;
pub mod fusion;
pub mod geometry;
pub mod io;
pub mod metrics;
pub mod pipeline;
pub mod preprocess;
pub mod register;
pub mod synth;

pub use error::{Error, Result};
pub use geometry::{
    back_project, solve_weighted_rigid, CameraIntrinsics, Point3, PointCloud, RigidTransform,
    SpatialIndex, Vector3, WeightedPair,
};
