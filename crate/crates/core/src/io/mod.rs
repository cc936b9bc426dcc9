//! File formats: PLY geometry, the TOML sequence manifest, hand and
//! detector sidecars, trajectory JSONL, TSDF dumps and CSV reports.

mod manifest;
mod ply;
mod sequence;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::contact::HandTopology;
use crate::error::{Error, Result};
use crate::features::Tag;
use crate::fusion::TsdfVolume;
use crate::geometry::RigidTransform;
use crate::preprocess::{DetectorBox, PixelMatch};
use crate::register::FramePose;

pub use manifest::{FrameEntry, OutputPaths, SequenceManifest, MANIFEST_SCHEMA_VERSION};
pub use ply::{read_cloud, read_mesh, read_ply, write_cloud, write_mesh, PlyData, PlyFormat};
pub use sequence::{read_ground_truth, write_sequence, GroundTruth, GROUND_TRUTH_FILE, MANIFEST_FILE};

/// `NotFound` becomes [`Error::MissingInput`] naming the path.
pub(crate) fn missing_or_io(path: &Path, e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::NotFound {
        Error::MissingInput(path.to_path_buf())
    } else {
        Error::io(path.display().to_string(), e)
    }
}

/// Writes through a temporary file in the target directory and renames it
/// into place, so readers never see a partial file.
pub fn atomic_write(path: &Path, write: impl FnOnce(&mut File) -> std::io::Result<()>) -> Result<()> {
    let ctx = || path.display().to_string();
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(|e| Error::io(ctx(), e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(ctx(), e))?;
    write(tmp.as_file_mut()).map_err(|e| Error::io(ctx(), e))?;
    tmp.persist(path).map_err(|e| Error::io(ctx(), e.error))?;
    Ok(())
}

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| missing_or_io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    atomic_write(path, |f| f.write_all(text.as_bytes()))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        line: e.line(),
        message: e.to_string(),
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

/// Writes rows (first row is the header) as CSV, atomically.
pub fn write_csv(path: &Path, rows: &[Vec<String>]) -> Result<()> {
    atomic_write(path, |file| {
        let mut w = csv::Writer::from_writer(BufWriter::new(file));
        for row in rows {
            w.write_record(row).map_err(std::io::Error::other)?;
        }
        w.flush()
    })
}

pub fn read_hand_topology(path: &Path) -> Result<HandTopology> {
    let topology: HandTopology = read_json(path)?;
    topology.validate()?;
    Ok(topology)
}

pub fn write_hand_topology(path: &Path, topology: &HandTopology) -> Result<()> {
    write_json(path, topology)
}

pub fn read_detector_boxes(path: &Path) -> Result<Vec<DetectorBox>> {
    read_json(path)
}

pub fn write_detector_boxes(path: &Path, boxes: &[DetectorBox]) -> Result<()> {
    write_json(path, &boxes)
}

pub fn read_feat2d(path: &Path) -> Result<Vec<PixelMatch>> {
    crate::features::parse_feat2d(&read_text(path)?, path)
}

pub fn write_feat2d(path: &Path, matches: &[PixelMatch]) -> Result<()> {
    let mut text = String::from("# u v depth u' v' depth'\n");
    for m in matches {
        text.push_str(&format!(
            "{} {} {} {} {} {}\n",
            m.source.0, m.source.1, m.source_depth, m.target.0, m.target.1, m.target_depth
        ));
    }
    write_text(path, &text)
}

/// One line of a trajectory file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseRecord {
    pub frame: usize,
    /// Row-major world-from-frame rotation.
    pub rotation: [f64; 9],
    pub translation: [f64; 3],
    pub sparse_residual: f64,
    pub icp_residual: f64,
    pub correspondences: BTreeMap<Tag, usize>,
    pub sparse_fallback: bool,
}

impl From<&FramePose> for PoseRecord {
    fn from(p: &FramePose) -> Self {
        let t = p.world_from_frame.translation();
        Self {
            frame: p.frame_index,
            rotation: p.world_from_frame.rotation_row_major(),
            translation: [t.x, t.y, t.z],
            sparse_residual: p.sparse_residual,
            icp_residual: p.icp_residual,
            correspondences: p.correspondence_counts.clone(),
            sparse_fallback: p.sparse_fallback,
        }
    }
}

impl From<&PoseRecord> for FramePose {
    fn from(r: &PoseRecord) -> Self {
        Self {
            frame_index: r.frame,
            world_from_frame: RigidTransform::from_row_major(r.rotation, r.translation),
            sparse_residual: r.sparse_residual,
            icp_residual: r.icp_residual,
            correspondence_counts: r.correspondences.clone(),
            sparse_fallback: r.sparse_fallback,
        }
    }
}

pub fn write_trajectory(path: &Path, poses: &[FramePose]) -> Result<()> {
    let mut text = String::new();
    for p in poses {
        text.push_str(&serde_json::to_string(&PoseRecord::from(p))?);
        text.push('\n');
    }
    write_text(path, &text)
}

pub fn read_trajectory(path: &Path) -> Result<Vec<FramePose>> {
    let file = File::open(path).map_err(|e| missing_or_io(path, e))?;
    let mut poses = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path.display().to_string(), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: PoseRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            line: i + 1,
            message: e.to_string(),
        })?;
        poses.push(FramePose::from(&record));
    }
    Ok(poses)
}

/// Sidecar header of a TSDF dump; the body is `tsdf` then `weight`, each
/// `resolution³` little-endian f32 in x-fastest order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TsdfHeader {
    pub origin: [f64; 3],
    pub resolution: usize,
    pub voxel_size: f64,
    pub truncation: f64,
    pub layout: String,
}

/// Writes `<path>` (raw floats) and `<path>.json` (header).
pub fn write_tsdf(path: &Path, volume: &TsdfVolume) -> Result<()> {
    let o = volume.origin();
    let header = TsdfHeader {
        origin: [o.x, o.y, o.z],
        resolution: volume.resolution(),
        voxel_size: volume.voxel_size(),
        truncation: volume.truncation(),
        layout: "tsdf then weight, f32 little-endian, x fastest".into(),
    };
    atomic_write(path, |file| {
        let mut w = BufWriter::new(file);
        for v in volume.tsdf().iter().chain(volume.weights()) {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()
    })?;
    let mut header_path = path.as_os_str().to_owned();
    header_path.push(".json");
    write_json(Path::new(&header_path), &header)
}
