//! Volumetric fusion of registered clouds and surface extraction.

mod marching_cubes;
mod measure;
mod mesh;
mod smooth;
mod tsdf;

pub use marching_cubes::{extract_mesh, prune_components, MIN_COMPONENT_FRACTION};
pub use measure::{enclosed_volume, measure_dimensions, Measurement, NamedProbe, Probe};
pub use mesh::{EdgeStats, TriangleMesh};
pub use smooth::laplacian_smooth;
pub use tsdf::{TsdfConfig, TsdfVolume};
