//! Evaluation protocols: per-pair pose error against ground truth, probe
//! dimension errors over a γ sweep, and pairwise annotation error under
//! competing hand energies.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{CorrespondenceSet, Tag};
use crate::fusion::{NamedProbe, Probe};
use crate::geometry::{Point3, RigidTransform};
use crate::pipeline::{reconstruct, PipelineConfig};
use crate::preprocess::SegmentedFrame;
use crate::register::{align_sparse, build_correspondences, PreparedFrame, RegistrationConfig, Trajectory};
use crate::synth::{Annotation, SyntheticSequence};

/// Error of one estimated relative transform (frame `source` into frame
/// `target`) against ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairError {
    pub source: usize,
    pub target: usize,
    pub rotation_deg: f64,
    /// Displacement of the object center.
    pub translation: f64,
    /// Mean displacement of the source frame's object points.
    pub add: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseReport {
    pub pairs: Vec<PairError>,
    /// Recovered over true rotation angle between the first and last
    /// registered frames.
    pub rotation_span: f64,
}

impl PoseReport {
    fn mean(&self, f: impl Fn(&PairError) -> f64) -> f64 {
        if self.pairs.is_empty() {
            return 0.0;
        }
        self.pairs.iter().map(f).sum::<f64>() / self.pairs.len() as f64
    }

    pub fn mean_rotation_deg(&self) -> f64 {
        self.mean(|p| p.rotation_deg)
    }

    pub fn mean_translation(&self) -> f64 {
        self.mean(|p| p.translation)
    }

    pub fn mean_add(&self) -> f64 {
        self.mean(|p| p.add)
    }
}

/// Compares consecutive registered poses with the sequence's ground truth.
/// Skipped frames are bridged: the pair is the two registered neighbours.
pub fn pose_errors(sequence: &SyntheticSequence, trajectory: &Trajectory) -> Result<PoseReport> {
    let (Some(first), Some(last)) = (trajectory.poses.first(), trajectory.poses.last()) else {
        return Err(Error::EmptyInput("trajectory"));
    };
    let n = sequence.object_poses.len();
    if trajectory.poses.iter().any(|p| p.frame_index >= n) {
        return Err(Error::invalid("trajectory", "frame index outside the sequence"));
    }
    let truth_between = |target: usize, source: usize| {
        sequence.object_poses[target].compose(&sequence.object_poses[source].inverse())
    };
    let pairs = trajectory
        .poses
        .windows(2)
        .map(|w| {
            let (target, source) = (w[0].frame_index, w[1].frame_index);
            let est = w[0].world_from_frame.inverse().compose(&w[1].world_from_frame);
            let truth = truth_between(target, source);
            let center = Point3::from(*sequence.object_poses[source].translation());
            let points = sequence
                .frames
                .iter()
                .find(|f| f.frame_index == source)
                .map(|f| f.object_cloud.points())
                .unwrap_or(&[]);
            let add = if points.is_empty() {
                0.0
            } else {
                points.iter().map(|p| (est.apply(p) - truth.apply(p)).norm()).sum::<f64>() / points.len() as f64
            };
            PairError {
                source,
                target,
                rotation_deg: est.inverse().compose(&truth).angle().to_degrees(),
                translation: (est.apply(&center) - truth.apply(&center)).norm(),
                add,
            }
        })
        .collect();
    let est_span = first.world_from_frame.inverse().compose(&last.world_from_frame).angle();
    let true_span = truth_between(first.frame_index, last.frame_index).angle();
    let rotation_span = if true_span > 0.0 { est_span / true_span } else { 1.0 };
    Ok(PoseReport { pairs, rotation_span })
}

/// One probe of one object in one sweep cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeError {
    pub object: String,
    pub probe: String,
    pub volume: bool,
    pub ground_truth: f64,
    /// `None` when the probe could not be read off the mesh or the
    /// pipeline failed.
    pub estimate: Option<f64>,
}

impl ProbeError {
    /// `|est − gt| / gt`; a missing estimate counts as 1 (a total miss).
    pub fn relative(&self) -> f64 {
        match self.estimate {
            Some(e) => (e - self.ground_truth).abs() / self.ground_truth,
            None => 1.0,
        }
    }

    pub fn absolute(&self) -> Option<f64> {
        self.estimate.map(|e| (e - self.ground_truth).abs())
    }
}

/// Mean relative error over the length probes; volume probes are reported
/// but not averaged.
pub fn normalized_error(errors: &[ProbeError]) -> Option<f64> {
    let rel: Vec<f64> = errors.iter().filter(|e| !e.volume).map(ProbeError::relative).collect();
    (!rel.is_empty()).then(|| rel.iter().sum::<f64>() / rel.len() as f64)
}

/// A sequence to sweep, with the probes to evaluate on its reconstruction.
#[derive(Debug, Clone)]
pub struct SweepInput {
    pub name: String,
    pub frames: Vec<SegmentedFrame>,
    pub probes: Vec<NamedProbe>,
}

impl SweepInput {
    pub fn from_sequence(sequence: &SyntheticSequence) -> Self {
        Self {
            name: sequence.config.object.name().to_string(),
            frames: sequence.frames.clone(),
            probes: sequence.probes.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub gamma: f64,
    pub object: String,
    pub probes: Vec<ProbeError>,
    /// Pipeline error message for a failed cell.
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub gammas: Vec<f64>,
    /// Normalized error per gamma over all objects' length probes.
    pub normalized: Vec<f64>,
    pub cells: Vec<SweepCell>,
}

impl SweepResult {
    /// Every probe error recorded at `gamma`.
    pub fn probes_at(&self, gamma: f64) -> Vec<ProbeError> {
        self.cells
            .iter()
            .filter(|c| c.gamma == gamma)
            .flat_map(|c| c.probes.iter().cloned())
            .collect()
    }

    /// Normalized error at `gamma`, recomputed from the raw probe table.
    pub fn recompute(&self, gamma: f64) -> Option<f64> {
        normalized_error(&self.probes_at(gamma))
    }

    pub fn normalized_at(&self, gamma: f64) -> Option<f64> {
        self.gammas.iter().position(|g| *g == gamma).map(|i| self.normalized[i])
    }

    /// `gamma,object,probe,ground_truth,estimate,abs_error,rel_error,failure` rows.
    pub fn probe_rows(&self) -> Vec<Vec<String>> {
        let mut rows = vec![[
            "gamma",
            "object",
            "probe",
            "ground_truth",
            "estimate",
            "abs_error",
            "rel_error",
            "failure",
        ]
        .map(String::from)
        .to_vec()];
        for cell in &self.cells {
            for p in &cell.probes {
                rows.push(vec![
                    cell.gamma.to_string(),
                    cell.object.clone(),
                    p.probe.clone(),
                    p.ground_truth.to_string(),
                    p.estimate.map(|e| e.to_string()).unwrap_or_default(),
                    p.absolute().map(|e| e.to_string()).unwrap_or_default(),
                    p.relative().to_string(),
                    cell.failure.clone().unwrap_or_default(),
                ]);
            }
        }
        rows
    }

    /// `gamma,normalized_error` rows.
    pub fn summary_rows(&self) -> Vec<Vec<String>> {
        let mut rows = vec![vec!["gamma".to_string(), "normalized_error".to_string()]];
        rows.extend(
            self.gammas
                .iter()
                .zip(&self.normalized)
                .map(|(g, e)| vec![g.to_string(), e.to_string()]),
        );
        rows
    }
}

fn probe_errors(object: &str, probes: &[NamedProbe], estimate: impl Fn(&str) -> Option<f64>) -> Vec<ProbeError> {
    probes
        .iter()
        .filter_map(|p| {
            Some(ProbeError {
                object: object.to_string(),
                probe: p.name.clone(),
                volume: matches!(p.probe, Probe::Volume),
                ground_truth: p.ground_truth?,
                estimate: estimate(&p.name),
            })
        })
        .collect()
}

/// Runs the full pipeline for every (gamma, input) cell. A failing cell is
/// kept with its error and all its probes missing.
pub fn run_gamma_sweep(inputs: &[SweepInput], gammas: &[f64], config: &PipelineConfig) -> Result<SweepResult> {
    if gammas.is_empty() || inputs.is_empty() {
        return Err(Error::EmptyInput("sweep"));
    }
    if gammas.windows(2).any(|w| !(w[0] < w[1])) || gammas.iter().any(|g| !(*g >= 0.0)) {
        return Err(Error::invalid("gammas", "must be nonnegative and strictly increasing"));
    }
    for input in inputs {
        if input.probes.iter().any(|p| p.ground_truth.is_none()) {
            return Err(Error::invalid("probes", format!("{} has a probe without ground truth", input.name)));
        }
    }
    let jobs: Vec<(f64, &SweepInput)> = gammas.iter().flat_map(|g| inputs.iter().map(move |i| (*g, i))).collect();
    let cells: Vec<SweepCell> = jobs
        .into_par_iter()
        .map(|(gamma, input)| {
            let mut cfg = config.clone();
            cfg.registration.gamma_t = gamma;
            match reconstruct(input.frames.clone(), &cfg, &input.probes) {
                Ok(r) => {
                    let probes = probe_errors(&input.name, &input.probes, |name| {
                        r.measurements.iter().find(|m| m.name == name).map(|m| m.value)
                    });
                    log::info!("gamma {gamma} {}: {:?}", input.name, normalized_error(&probes));
                    SweepCell {
                        gamma,
                        object: input.name.clone(),
                        probes,
                        failure: None,
                    }
                }
                Err(e) => {
                    log::warn!("gamma {gamma} {} failed: {e}", input.name);
                    SweepCell {
                        gamma,
                        object: input.name.clone(),
                        probes: probe_errors(&input.name, &input.probes, |_| None),
                        failure: Some(e.to_string()),
                    }
                }
            }
        })
        .collect();
    let mut result = SweepResult {
        gammas: gammas.to_vec(),
        normalized: Vec::new(),
        cells,
    };
    result.normalized = gammas
        .iter()
        .map(|g| result.recompute(*g).unwrap_or(0.0))
        .collect();
    Ok(result)
}

/// Hand energy variants of the pairwise comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnergyConfig {
    ContactVisual,
    Contact,
    DetectorVisual,
    Detector,
}

impl EnergyConfig {
    pub const ALL: [EnergyConfig; 4] = [
        EnergyConfig::ContactVisual,
        EnergyConfig::Contact,
        EnergyConfig::DetectorVisual,
        EnergyConfig::Detector,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EnergyConfig::ContactVisual => "contact+visual",
            EnergyConfig::Contact => "contact",
            EnergyConfig::DetectorVisual => "detector+visual",
            EnergyConfig::Detector => "detector",
        }
    }

    fn uses_detector(self) -> bool {
        matches!(self, EnergyConfig::DetectorVisual | EnergyConfig::Detector)
    }

    fn uses_visual(self) -> bool {
        matches!(self, EnergyConfig::ContactVisual | EnergyConfig::DetectorVisual)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyRow {
    pub config: EnergyConfig,
    /// `None` when no annotated pair could be registered.
    pub mean: Option<f64>,
    pub stdev: Option<f64>,
    /// Annotated point pairs scored.
    pub pairs: usize,
    /// Annotated frame pairs whose sparse solve failed.
    pub failed: usize,
    pub note: Option<String>,
}

/// Rows of `config,statistic,value`.
pub fn energy_rows(rows: &[EnergyRow]) -> Vec<Vec<String>> {
    let mut out = vec![vec!["config".to_string(), "statistic".to_string(), "value".to_string()]];
    for r in rows {
        let fmt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_else(|| "unavailable".into());
        for (stat, value) in [
            ("mean", fmt(r.mean)),
            ("stdev", fmt(r.stdev)),
            ("pairs", r.pairs.to_string()),
            ("failed", r.failed.to_string()),
        ] {
            out.push(vec![r.config.name().to_string(), stat.to_string(), value]);
        }
    }
    out
}

/// Sparse pairwise registration of each annotated frame pair under each
/// energy configuration, scored by [`pairwise_annotation_error`] over all
/// annotated points pooled.
///
/// [`pairwise_annotation_error`]: crate::register::pairwise_annotation_error
pub fn compare_energies(
    frames: &[SegmentedFrame],
    annotations: &[Annotation],
    base: &RegistrationConfig,
) -> Result<Vec<EnergyRow>> {
    base.validate()?;
    if annotations.is_empty() {
        return Err(Error::EmptyInput("annotations"));
    }
    let frame = |k: usize| {
        frames
            .iter()
            .find(|f| f.frame_index == k)
            .ok_or_else(|| Error::invalid("annotations", format!("frame {k} is not in the sequence")))
    };
    let mut resolved = Vec::with_capacity(annotations.len());
    for a in annotations {
        resolved.push((frame(a.target_frame)?, frame(a.source_frame)?, a));
    }
    let has_boxes = resolved
        .iter()
        .all(|(t, s, _)| t.detector_boxes.is_some() && s.detector_boxes.is_some());
    EnergyConfig::ALL
        .iter()
        .map(|&energy| {
            if energy.uses_detector() && !has_boxes {
                return Ok(EnergyRow {
                    config: energy,
                    mean: None,
                    stdev: None,
                    pairs: 0,
                    failed: 0,
                    note: Some("detector boxes missing".into()),
                });
            }
            let config = RegistrationConfig {
                use_detector: energy.uses_detector(),
                use_icp: false,
                ..base.clone()
            };
            let outcomes: Vec<Result<Option<Vec<(Point3, Point3)>>>> = resolved
                .par_iter()
                .map(|(target, source, a)| {
                    let prev = PreparedFrame::new(target, &config)?;
                    let curr = PreparedFrame::new(source, &config)?;
                    let sets: Vec<CorrespondenceSet> = build_correspondences(&prev, &curr, &config)?
                        .into_iter()
                        .filter(|s| energy.uses_visual() || matches!(s.tag, Tag::Contact | Tag::Detector))
                        .collect();
                    Ok(align_sparse(&sets)
                        .ok()
                        .map(|t: RigidTransform| a.pairs.iter().map(|(s, d)| (t.apply(s), *d)).collect()))
                })
                .collect();
            let mut mapped = Vec::new();
            let mut failed = 0;
            for o in outcomes {
                match o? {
                    Some(p) => mapped.extend(p),
                    None => failed += 1,
                }
            }
            let stats = crate::register::pairwise_annotation_error(&mapped, &RigidTransform::identity()).ok();
            Ok(EnergyRow {
                config: energy,
                mean: stats.map(|s| s.0),
                stdev: stats.map(|s| s.1),
                pairs: mapped.len(),
                failed,
                note: None,
            })
        })
        .collect()
}
