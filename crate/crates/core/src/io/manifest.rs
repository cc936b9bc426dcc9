use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{read_cloud, read_detector_boxes, read_feat2d, read_hand_topology, read_text, write_text};
use crate::contact::PosedHand;
use crate::error::{Error, Result};
use crate::fusion::{NamedProbe, TsdfConfig};
use crate::geometry::CameraIntrinsics;
use crate::pipeline::{MeshingConfig, PipelineConfig};
use crate::preprocess::{SegmentedFrame, WorkingVolume, DEFAULT_NORMAL_K};
use crate::register::RegistrationConfig;

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

/// Files of one frame, relative to the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameEntry {
    pub index: usize,
    /// Segmented object points.
    pub object: PathBuf,
    /// Posed hand-model vertices, in hand-model vertex order.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hand: Option<PathBuf>,
    /// Observed (segmented) hand points; used for detector depth lookups.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hand_cloud: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feat2d: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boxes: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputPaths {
    pub mesh: PathBuf,
    pub trajectory: PathBuf,
    pub report: PathBuf,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tsdf: Option<PathBuf>,
}

impl Default for OutputPaths {
    fn default() -> Self {
        Self {
            mesh: "mesh.ply".into(),
            trajectory: "trajectory.jsonl".into(),
            report: "report.json".into(),
            tsdf: None,
        }
    }
}

fn default_normal_k() -> usize {
    DEFAULT_NORMAL_K
}

/// A recorded sequence and how to reconstruct it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceManifest {
    pub schema_version: u32,
    /// Hand topology JSON; required when any frame has a `hand` file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hand_model: Option<PathBuf>,
    /// Ground-truth poses and annotations of a synthetic sequence.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<PathBuf>,
    #[serde(default = "default_normal_k")]
    pub normal_k: usize,
    #[serde(default)]
    pub camera: CameraIntrinsics,
    #[serde(default)]
    pub working_volume: WorkingVolume,
    #[serde(default)]
    pub registration: RegistrationConfig,
    #[serde(default)]
    pub tsdf: TsdfConfig,
    #[serde(default)]
    pub meshing: MeshingConfig,
    #[serde(default)]
    pub outputs: OutputPaths,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub probes: Vec<NamedProbe>,
    pub frames: Vec<FrameEntry>,
}

impl SequenceManifest {
    pub fn new(frames: Vec<FrameEntry>) -> Self {
        Self {
            schema_version: MANIFEST_SCHEMA_VERSION,
            hand_model: None,
            ground_truth: None,
            normal_k: DEFAULT_NORMAL_K,
            camera: CameraIntrinsics::default(),
            working_volume: WorkingVolume::default(),
            registration: RegistrationConfig::default(),
            tsdf: TsdfConfig::default(),
            meshing: MeshingConfig::default(),
            outputs: OutputPaths::default(),
            probes: Vec::new(),
            frames,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let m: Self = toml::from_str(text).map_err(|e| Error::Manifest(e.to_string()))?;
        if m.schema_version != MANIFEST_SCHEMA_VERSION {
            return Err(Error::Manifest(format!(
                "schema_version {} is not supported (expected {MANIFEST_SCHEMA_VERSION})",
                m.schema_version
            )));
        }
        if m.frames.is_empty() {
            return Err(Error::Manifest("frame list is empty".into()));
        }
        m.camera.validate()?;
        m.working_volume.validate()?;
        m.registration.validate()?;
        m.tsdf.validate()?;
        Ok(m)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Manifest(e.to_string()))
    }

    /// Reads a manifest and checks that every referenced file exists.
    pub fn load(path: &Path) -> Result<Self> {
        let m = Self::from_toml(&read_text(path)?)?;
        m.check_files(base_dir(path))?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_text(path, &self.to_toml()?)
    }

    /// Every path the manifest references as an input.
    pub fn inputs(&self) -> Vec<&Path> {
        let mut out: Vec<&Path> = self.hand_model.iter().chain(&self.ground_truth).map(|p| p.as_path()).collect();
        for f in &self.frames {
            out.push(&f.object);
            out.extend([&f.hand, &f.hand_cloud, &f.feat2d, &f.boxes].into_iter().flatten().map(|p| p.as_path()));
        }
        out
    }

    pub fn check_files(&self, base: &Path) -> Result<()> {
        for p in self.inputs() {
            let full = base.join(p);
            if !full.is_file() {
                return Err(Error::MissingInput(full));
            }
        }
        Ok(())
    }

    pub fn pipeline_config(&self) -> PipelineConfig {
        let mut registration = self.registration.clone();
        registration.intrinsics = self.camera;
        PipelineConfig {
            registration,
            tsdf: self.tsdf,
            meshing: self.meshing.clone(),
            working_volume: self.working_volume,
            normal_k: self.normal_k,
        }
    }

    /// Reads every frame. With `require_hand`, a frame without a posed-hand
    /// file is an error naming that frame.
    pub fn load_frames(&self, base: &Path, require_hand: bool) -> Result<Vec<SegmentedFrame>> {
        if require_hand {
            if let Some(f) = self.frames.iter().find(|f| f.hand.is_none()) {
                return Err(Error::Manifest(format!(
                    "frame {} has no hand file, which contact registration needs",
                    f.index
                )));
            }
        }
        let needs_model = self.frames.iter().any(|f| f.hand.is_some());
        let topology = match (&self.hand_model, needs_model) {
            (Some(p), true) => Some(Arc::new(read_hand_topology(&base.join(p))?)),
            (None, true) => return Err(Error::Manifest("frames have hand files but no hand_model is given".into())),
            _ => None,
        };
        self.frames
            .par_iter()
            .map(|entry| {
                let mut frame = SegmentedFrame::new(entry.index, read_cloud(&base.join(&entry.object))?);
                if let (Some(p), Some(t)) = (&entry.hand, &topology) {
                    let verts = read_cloud(&base.join(p))?.points().to_vec();
                    frame.hand_pose = Some(PosedHand::new(t.clone(), verts)?);
                }
                if let Some(p) = &entry.hand_cloud {
                    frame.hand_cloud = read_cloud(&base.join(p))?;
                }
                if let Some(p) = &entry.feat2d {
                    frame.feat2d_matches = Some(read_feat2d(&base.join(p))?);
                }
                if let Some(p) = &entry.boxes {
                    frame.detector_boxes = Some(read_detector_boxes(&base.join(p))?);
                }
                Ok(frame)
            })
            .collect()
    }
}

/// Directory that relative manifest paths resolve against.
pub(crate) fn base_dir(manifest: &Path) -> &Path {
    match manifest.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fusion::Probe;

    fn sample() -> SequenceManifest {
        let mut m = SequenceManifest::new(vec![
            FrameEntry {
                index: 0,
                object: "frames/000_object.ply".into(),
                hand: Some("frames/000_hand.ply".into()),
                hand_cloud: None,
                feat2d: None,
                boxes: Some("frames/000_boxes.json".into()),
            },
            FrameEntry {
                index: 1,
                object: "frames/001_object.ply".into(),
                hand: None,
                hand_cloud: None,
                feat2d: Some("frames/001_feat2d.txt".into()),
                boxes: None,
            },
        ]);
        m.hand_model = Some("hand_model.json".into());
        m.registration.gamma_t = 5.0;
        m.probes.push(NamedProbe {
            name: "sphere diameter".into(),
            probe: Probe::Diameter {
                axis: [0.0, 1.0, 0.0],
                height_from_base: 35.0,
            },
            ground_truth: Some(70.0),
        });
        m.probes.push(NamedProbe {
            name: "sphere volume".into(),
            probe: Probe::Volume,
            ground_truth: None,
        });
        m
    }

    #[test]
    fn toml_round_trip() {
        let m = sample();
        let text = m.to_toml().unwrap();
        assert!(text.starts_with("schema_version = 1"), "{text}");
        assert_eq!(SequenceManifest::from_toml(&text).unwrap(), m);
    }

    #[test]
    fn defaults_fill_a_minimal_manifest() {
        let m = SequenceManifest::from_toml("schema_version = 1\n[[frames]]\nindex = 0\nobject = \"a.ply\"\n").unwrap();
        assert_eq!(m.registration.gamma_t, 15.0);
        assert_eq!(m.normal_k, DEFAULT_NORMAL_K);
        assert_eq!(m.outputs.mesh, PathBuf::from("mesh.ply"));
    }

    #[test]
    fn bad_manifests_are_rejected() {
        let frame = "[[frames]]\nindex = 0\nobject = \"a.ply\"\n";
        for text in [
            format!("schema_version = 2\n{frame}"),
            "schema_version = 1\nframes = []\n".to_string(),
            format!("schema_version = 1\nbogus = 3\n{frame}"),
            format!("schema_version = 1\n[registration]\ngamma_t = -1.0\n{frame}"),
        ] {
            assert!(SequenceManifest::from_toml(&text).is_err(), "{text}");
        }
    }

    #[test]
    fn missing_inputs_are_named() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.toml");
        sample().save(&path).unwrap();
        match SequenceManifest::load(&path) {
            Err(Error::MissingInput(p)) => assert!(p.ends_with("hand_model.json"), "{p:?}"),
            other => panic!("unexpected {other:?}"),
        }
        let m = sample();
        match m.load_frames(dir.path(), true) {
            Err(Error::Manifest(msg)) => assert!(msg.contains("frame 1"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
