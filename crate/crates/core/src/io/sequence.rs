use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::manifest::base_dir;
use super::{
    read_json, write_cloud, write_detector_boxes, write_feat2d, write_hand_topology, write_json, FrameEntry,
    PlyFormat, SequenceManifest,
};
use crate::error::{Error, Result};
use crate::fusion::NamedProbe;
use crate::geometry::{PointCloud, RigidTransform};
use crate::preprocess::SegmentedFrame;
use crate::synth::{Annotation, SynthConfig, SyntheticSequence};

pub const MANIFEST_FILE: &str = "manifest.toml";
pub const GROUND_TRUTH_FILE: &str = "ground_truth.json";

/// What a synthetic sequence knows beyond its frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub config: SynthConfig,
    /// Object-to-camera transform per frame.
    pub object_poses: Vec<RigidTransform>,
    pub annotations: Vec<Annotation>,
    pub probes: Vec<NamedProbe>,
}

impl GroundTruth {
    pub fn of(sequence: &SyntheticSequence) -> Self {
        Self {
            config: sequence.config.clone(),
            object_poses: sequence.object_poses.clone(),
            annotations: sequence.annotations.clone(),
            probes: sequence.probes.clone(),
        }
    }

    pub fn read(path: &Path) -> Result<Self> {
        read_json(path)
    }

    /// Reassembles a sequence around frames loaded from disk.
    pub fn into_sequence(self, frames: Vec<SegmentedFrame>) -> Result<SyntheticSequence> {
        if frames.iter().any(|f| f.frame_index >= self.object_poses.len()) {
            return Err(Error::Manifest("ground truth has fewer poses than the sequence has frames".into()));
        }
        Ok(SyntheticSequence {
            config: self.config,
            frames,
            object_poses: self.object_poses,
            annotations: self.annotations,
            probes: self.probes,
        })
    }
}

/// Writes frames, hand model, ground truth and a manifest into `dir`;
/// returns the manifest path.
pub fn write_sequence(dir: &Path, sequence: &SyntheticSequence, format: PlyFormat) -> Result<PathBuf> {
    let rel = |name: String| PathBuf::from("frames").join(name);
    let mut entries = Vec::with_capacity(sequence.frames.len());
    let mut topology = None;
    for f in &sequence.frames {
        let k = f.frame_index;
        let mut entry = FrameEntry {
            index: k,
            object: rel(format!("{k:03}_object.ply")),
            hand: None,
            hand_cloud: None,
            feat2d: None,
            boxes: None,
        };
        write_cloud(&dir.join(&entry.object), &f.object_cloud, format)?;
        if let Some(hand) = &f.hand_pose {
            topology.get_or_insert_with(|| hand.topology.clone());
            let p = rel(format!("{k:03}_hand.ply"));
            write_cloud(&dir.join(&p), &PointCloud::new(hand.vertices.clone()), format)?;
            entry.hand = Some(p);
        }
        if !f.hand_cloud.is_empty() {
            let p = rel(format!("{k:03}_hand_cloud.ply"));
            write_cloud(&dir.join(&p), &f.hand_cloud, format)?;
            entry.hand_cloud = Some(p);
        }
        if let Some(m) = &f.feat2d_matches {
            let p = rel(format!("{k:03}_feat2d.txt"));
            write_feat2d(&dir.join(&p), m)?;
            entry.feat2d = Some(p);
        }
        if let Some(b) = &f.detector_boxes {
            let p = rel(format!("{k:03}_boxes.json"));
            write_detector_boxes(&dir.join(&p), b)?;
            entry.boxes = Some(p);
        }
        entries.push(entry);
    }
    let mut manifest = SequenceManifest::new(entries);
    if let Some(t) = topology {
        manifest.hand_model = Some("hand_model.json".into());
        write_hand_topology(&dir.join("hand_model.json"), &t)?;
    }
    write_json(&dir.join(GROUND_TRUTH_FILE), &GroundTruth::of(sequence))?;
    manifest.ground_truth = Some(GROUND_TRUTH_FILE.into());
    manifest.camera = sequence.config.intrinsics;
    manifest.probes = sequence.probes.clone();
    let path = dir.join(MANIFEST_FILE);
    manifest.save(&path)?;
    Ok(path)
}

/// Loads the ground truth a manifest points to, if any.
pub fn read_ground_truth(manifest_path: &Path, manifest: &SequenceManifest) -> Result<Option<GroundTruth>> {
    manifest
        .ground_truth
        .as_ref()
        .map(|p| GroundTruth::read(&base_dir(manifest_path).join(p)))
        .transpose()
}
