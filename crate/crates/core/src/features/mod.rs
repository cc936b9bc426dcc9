//! Visual correspondences: back-projected 2D matches and 3D keypoint matches.

mod correspondence;
mod descriptor;
mod feat2d;
mod iss;
mod matching;

pub use correspondence::{Correspondence, CorrespondenceSet, Tag};
pub use descriptor::{describe, Descriptor, ANGLE_BINS, LUMA_BINS, SHELLS};
pub use feat2d::{load_feat2d, parse_feat2d};
pub use iss::{detect_iss3d, IssParams, Keypoint};
pub use matching::{
    correspond, denoise_along_normals, match_descriptors, match_feat3d, smooth_for_features, FeatureParams,
    FrameFeatures,
};
