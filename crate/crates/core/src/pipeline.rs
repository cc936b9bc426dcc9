//! End-to-end reconstruction: preprocess, register, fuse, mesh, measure.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::{
    extract_mesh, laplacian_smooth, measure_dimensions, Measurement, NamedProbe, TriangleMesh, TsdfConfig,
    TsdfVolume,
};
use crate::preprocess::{SegmentedFrame, WorkingVolume, DEFAULT_NORMAL_K};
use crate::register::{register_sequence, RegistrationConfig, Trajectory};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MeshingConfig {
    pub smoothing_iterations: usize,
    pub smoothing_lambda: f64,
}

impl Default for MeshingConfig {
    fn default() -> Self {
        Self {
            smoothing_iterations: 10,
            smoothing_lambda: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub registration: RegistrationConfig,
    pub tsdf: TsdfConfig,
    pub meshing: MeshingConfig,
    pub working_volume: WorkingVolume,
    pub normal_k: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            registration: RegistrationConfig::default(),
            tsdf: TsdfConfig::default(),
            meshing: MeshingConfig::default(),
            working_volume: WorkingVolume::default(),
            normal_k: DEFAULT_NORMAL_K,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub trajectory: Trajectory,
    pub volume: TsdfVolume,
    pub mesh: TriangleMesh,
    /// One entry per probe that could be evaluated.
    pub measurements: Vec<Measurement>,
    /// `(probe name, reason)` for the others.
    pub unmeasured: Vec<(String, String)>,
}

/// Clips and completes every frame.
pub fn preprocess_frames(frames: Vec<SegmentedFrame>, config: &PipelineConfig) -> Result<Vec<SegmentedFrame>> {
    config.working_volume.validate()?;
    frames
        .into_par_iter()
        .map(|f| f.prepare(&config.working_volume, config.normal_k))
        .collect()
}

/// Integrates registered object clouds into a volume centered on the first
/// registered frame's centroid.
pub fn fuse(frames: &[SegmentedFrame], trajectory: &Trajectory, config: &TsdfConfig) -> Result<TsdfVolume> {
    let first = trajectory.poses.first().ok_or(Error::EmptyInput("trajectory"))?;
    let frame_of = |index: usize| frames.iter().find(|f| f.frame_index == index);
    let center = frame_of(first.frame_index)
        .and_then(|f| f.object_cloud.centroid())
        .ok_or(Error::EmptyInput("first frame"))?;
    let mut volume = TsdfVolume::centered(first.world_from_frame.apply(&center), config)?;
    for pose in &trajectory.poses {
        if let Some(f) = frame_of(pose.frame_index) {
            volume.integrate(&f.object_cloud, &pose.world_from_frame)?;
        }
    }
    Ok(volume)
}

/// Marching cubes, small-component pruning, then Laplacian smoothing.
pub fn mesh_volume(volume: &TsdfVolume, config: &MeshingConfig) -> Result<TriangleMesh> {
    let mesh = extract_mesh(volume)?;
    let mut mesh = laplacian_smooth(&mesh, config.smoothing_iterations, config.smoothing_lambda);
    mesh.compute_normals();
    Ok(mesh)
}

/// Runs the whole pipeline on raw frames. A probe that cannot be evaluated
/// (for instance a volume on an open mesh) is reported in `unmeasured`
/// rather than failing the run.
pub fn reconstruct(
    frames: Vec<SegmentedFrame>,
    config: &PipelineConfig,
    probes: &[NamedProbe],
) -> Result<Reconstruction> {
    let frames = preprocess_frames(frames, config)?;
    let trajectory = register_sequence(&frames, &config.registration)?;
    let volume = fuse(&frames, &trajectory, &config.tsdf)?;
    let mesh = mesh_volume(&volume, &config.meshing)?;
    let mut measurements = Vec::new();
    let mut unmeasured = Vec::new();
    for probe in probes {
        match measure_dimensions(&mesh, std::slice::from_ref(probe)) {
            Ok(m) => measurements.extend(m),
            Err(e) => unmeasured.push((probe.name.clone(), e.to_string())),
        }
    }
    Ok(Reconstruction {
        trajectory,
        volume,
        mesh,
        measurements,
        unmeasured,
    })
}
