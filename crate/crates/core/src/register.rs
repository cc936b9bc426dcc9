//! Frame-to-frame alignment: a weighted sparse solve over visual and hand
//! correspondences, then point-to-point ICP against the accumulated scan.

use std::collections::{BTreeMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::contact::{contact_correspondences, detect_contacts, ContactConfig, ContactState};
use crate::error::{Error, Result};
use crate::features::{
    correspond, load_feat2d, smooth_for_features, CorrespondenceSet, FeatureParams, FrameFeatures, Tag,
};
use crate::geometry::{
    back_project, solve_weighted_rigid, CameraIntrinsics, DepthImage, Point3, PointCloud, RigidTransform,
    SpatialIndex, WeightedPair,
};
use crate::preprocess::SegmentedFrame;

/// Consecutive skipped frames tolerated before a sequence is abandoned.
pub const MAX_CONSECUTIVE_SKIPS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RegistrationConfig {
    /// Weight of the hand term relative to the visual terms.
    pub gamma_t: f64,
    pub icp_max_dist: f64,
    pub icp_max_iters: usize,
    /// Stop once the RMS residual improves by less than this, millimeters.
    pub icp_convergence_eps: f64,
    pub use_icp: bool,
    /// Replace contact correspondences with detector-box ones.
    pub use_detector: bool,
    /// Voxel edge for metascan thinning, millimeters.
    pub metascan_voxel: f64,
    pub features: FeatureParams,
    pub contact: ContactConfig,
    /// Taken from the sequence's camera, not serialized with the rest.
    #[serde(skip)]
    pub intrinsics: CameraIntrinsics,
}

impl Default for RegistrationConfig {
    fn default() -> Self {
        Self {
            gamma_t: 15.0,
            icp_max_dist: 5.0,
            icp_max_iters: 50,
            icp_convergence_eps: 1e-3,
            use_icp: true,
            use_detector: false,
            metascan_voxel: 2.0,
            features: FeatureParams::default(),
            contact: ContactConfig::default(),
            intrinsics: CameraIntrinsics::default(),
        }
    }
}

impl RegistrationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma_t >= 0.0 && self.gamma_t.is_finite()) {
            return Err(Error::invalid("gamma_t", "must be a nonnegative number"));
        }
        if !(self.icp_max_dist > 0.0 && self.icp_max_dist.is_finite()) {
            return Err(Error::invalid("icp_max_dist", "must be positive"));
        }
        if !(self.icp_convergence_eps >= 0.0) {
            return Err(Error::invalid("icp_convergence_eps", "must be nonnegative"));
        }
        if !(self.metascan_voxel > 0.0) {
            return Err(Error::invalid("metascan_voxel", "must be positive"));
        }
        self.intrinsics.validate()
    }
}

/// World-frame accumulation of registered clouds, thinned to one point per
/// voxel (first arrival wins).
#[derive(Debug, Clone)]
pub struct Metascan {
    voxel: f64,
    points: Vec<Point3>,
    origins: Vec<usize>,
    occupied: HashSet<[i64; 3]>,
    index: Option<SpatialIndex>,
}

impl Metascan {
    pub fn new(voxel: f64) -> Self {
        Self {
            voxel,
            points: Vec::new(),
            origins: Vec::new(),
            occupied: HashSet::new(),
            index: None,
        }
    }

    /// Adds a world-frame cloud and rebuilds the index.
    pub fn insert(&mut self, cloud: &PointCloud, frame: usize) {
        for p in cloud.points() {
            let key = [
                (p.x / self.voxel).floor() as i64,
                (p.y / self.voxel).floor() as i64,
                (p.z / self.voxel).floor() as i64,
            ];
            if self.occupied.insert(key) {
                self.points.push(*p);
                self.origins.push(frame);
            }
        }
        self.index = SpatialIndex::build(&self.points).ok();
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    /// Frame each point came from.
    pub fn origins(&self) -> &[usize] {
        &self.origins
    }

    pub fn index(&self) -> Option<&SpatialIndex> {
        self.index.as_ref()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Registered pose of one frame with diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct FramePose {
    pub frame_index: usize,
    pub world_from_frame: RigidTransform,
    /// Weighted RMS of the sparse pairs at the sparse solution.
    pub sparse_residual: f64,
    pub icp_residual: f64,
    pub correspondence_counts: BTreeMap<Tag, usize>,
    /// The sparse stage was under-constrained and identity was used.
    pub sparse_fallback: bool,
}

impl FramePose {
    /// The reference frame: world coincides with its camera.
    pub fn initial(frame_index: usize) -> Self {
        Self {
            frame_index,
            world_from_frame: RigidTransform::identity(),
            sparse_residual: 0.0,
            icp_residual: 0.0,
            correspondence_counts: BTreeMap::new(),
            sparse_fallback: false,
        }
    }
}

/// Weighted least-squares minimizer over the union of all sets, each pair
/// carrying its set's weight.
pub fn align_sparse(sets: &[CorrespondenceSet]) -> Result<RigidTransform> {
    let pairs: Vec<WeightedPair> = sets.iter().flat_map(|s| s.weighted()).collect();
    let effective = pairs.iter().filter(|p| p.weight > 0.0).count();
    if effective < 3 {
        let empty = sets
            .iter()
            .filter(|s| s.is_empty() || !(s.weight > 0.0))
            .map(|s| s.tag.name())
            .collect();
        return Err(Error::SparseUnderConstrained { effective, empty });
    }
    solve_weighted_rigid(&pairs)
}

fn weighted_rms(sets: &[CorrespondenceSet], t: &RigidTransform) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for p in sets.iter().flat_map(|s| s.weighted()) {
        num += p.weight * (p.target - t.apply(&p.source)).norm_squared();
        den += p.weight;
    }
    if den > 0.0 {
        (num / den).sqrt()
    } else {
        0.0
    }
}

/// Result of [`refine_icp`].
#[derive(Debug, Clone, PartialEq)]
pub struct IcpOutcome {
    /// Incremental transform to apply after the input pose.
    pub transform: RigidTransform,
    pub rms: f64,
    pub iterations: usize,
    pub pairs: usize,
    /// RMS after each accepted iteration, starting with the initial one.
    pub history: Vec<f64>,
}

fn icp_pairs(
    source: &[Point3],
    source_index: &SpatialIndex,
    index: &SpatialIndex,
    t: &RigidTransform,
    max_dist: f64,
) -> (Vec<WeightedPair>, f64) {
    let inv = t.inverse();
    let found: Vec<Option<(WeightedPair, f64)>> = source
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let nb = index.nearest(&t.apply(p));
            if nb.distance > max_dist {
                return None;
            }
            let target = index.points()[nb.index];
            (source_index.nearest(&inv.apply(&target)).index == i)
                .then(|| (WeightedPair::new(*p, target, 1.0), nb.distance))
        })
        .collect();
    let mut pairs = Vec::with_capacity(found.len());
    let mut sq = 0.0;
    for (pair, d) in found.into_iter().flatten() {
        sq += d * d;
        pairs.push(pair);
    }
    let rms = if pairs.is_empty() {
        f64::INFINITY
    } else {
        (sq / pairs.len() as f64).sqrt()
    };
    (pairs, rms)
}

/// Point-to-point ICP of a world-frame cloud against the metascan. Only
/// mutual nearest neighbors within `icp_max_dist` are paired, which keeps
/// freshly exposed surface from being dragged onto the edge of the known
/// one. A step that would raise the RMS is rejected and ends the loop.
pub fn refine_icp(source: &PointCloud, metascan: &Metascan, config: &RegistrationConfig) -> Result<IcpOutcome> {
    let index = metascan.index().ok_or(Error::EmptyInput("metascan"))?;
    let pts = source.points();
    let source_index = SpatialIndex::build(pts)?;
    let mut total = RigidTransform::identity();
    let (mut pairs, mut rms) = icp_pairs(pts, &source_index, index, &total, config.icp_max_dist);
    if pairs.is_empty() {
        return Err(Error::IcpDivergence {
            max_dist: config.icp_max_dist,
        });
    }
    let mut history = vec![rms];
    let mut iterations = 0;
    while iterations < config.icp_max_iters {
        let Ok(candidate) = solve_weighted_rigid(&pairs) else {
            break;
        };
        let (next_pairs, next_rms) = icp_pairs(pts, &source_index, index, &candidate, config.icp_max_dist);
        if next_pairs.is_empty() || next_rms > rms {
            break;
        }
        let change = rms - next_rms;
        total = candidate;
        pairs = next_pairs;
        rms = next_rms;
        history.push(rms);
        iterations += 1;
        if change < config.icp_convergence_eps {
            break;
        }
    }
    Ok(IcpOutcome {
        transform: total,
        rms,
        iterations,
        pairs: pairs.len(),
        history,
    })
}

/// Pairs back-projected pixels at equal offsets inside same-label boxes.
pub fn detector_correspondences(
    source: &SegmentedFrame,
    target: &SegmentedFrame,
    k: &CameraIntrinsics,
) -> CorrespondenceSet {
    let mut set = CorrespondenceSet::new(Tag::Detector);
    let (Some(sb), Some(tb)) = (&source.detector_boxes, &target.detector_boxes) else {
        return set;
    };
    let render = |f: &SegmentedFrame| {
        let mut pts = f.object_cloud.points().to_vec();
        pts.extend_from_slice(f.hand_cloud.points());
        DepthImage::render(&pts, k)
    };
    let (sd, td) = (render(source), render(target));
    for s in sb {
        let Some(t) = tb.iter().find(|t| t.label == s.label) else {
            continue;
        };
        for dv in 0..s.height.min(t.height) as i64 {
            for du in 0..s.width.min(t.width) as i64 {
                let (su, sv) = (s.u0 + du, s.v0 + dv);
                let (tu, tv) = (t.u0 + du, t.v0 + dv);
                let (Some(zs), Some(zt)) = (sd.at(su, sv), td.at(tu, tv)) else {
                    continue;
                };
                let a = back_project(su as f64, sv as f64, zs, k);
                let b = back_project(tu as f64, tv as f64, zt, k);
                if let (Ok(a), Ok(b)) = (a, b) {
                    set.push(a, b);
                }
            }
        }
    }
    set
}

/// Mean and population standard deviation of `‖target − T(source)‖`.
pub fn pairwise_annotation_error(pairs: &[(Point3, Point3)], t: &RigidTransform) -> Result<(f64, f64)> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput("annotation pairs"));
    }
    let errs: Vec<f64> = pairs.iter().map(|(s, d)| (d - t.apply(s)).norm()).collect();
    let n = errs.len() as f64;
    let mean = errs.iter().sum::<f64>() / n;
    let var = errs.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / n;
    Ok((mean, var.sqrt()))
}

/// Per-frame work shared by the two pairs a frame takes part in: the
/// denoised object cloud (used for features and ICP), its features and its
/// contact state.
#[derive(Debug, Clone)]
pub struct PreparedFrame<'a> {
    pub frame: &'a SegmentedFrame,
    pub smoothed: PointCloud,
    pub features: FrameFeatures,
    pub contact: Option<ContactState>,
}

impl<'a> PreparedFrame<'a> {
    pub fn new(frame: &'a SegmentedFrame, config: &RegistrationConfig) -> Result<Self> {
        let smoothed = smooth_for_features(&frame.object_cloud, &config.features)?;
        let features = FrameFeatures::from_smoothed(&smoothed, &config.features)?;
        let contact = match &frame.hand_pose {
            Some(hand) if config.gamma_t > 0.0 && !config.use_detector && !frame.object_cloud.is_empty() => {
                let index = SpatialIndex::build(frame.object_cloud.points())?;
                detect_contacts(hand, &index, &config.contact).ok()
            }
            _ => None,
        };
        Ok(Self {
            frame,
            smoothed,
            features,
            contact,
        })
    }
}

/// Correspondence sets mapping `curr` (source) onto `prev` (target), with
/// the hand set weighted by `gamma_t`.
pub fn build_correspondences(
    prev: &PreparedFrame,
    curr: &PreparedFrame,
    config: &RegistrationConfig,
) -> Result<Vec<CorrespondenceSet>> {
    let mut sets = Vec::new();
    if let Some(m) = &curr.frame.feat2d_matches {
        sets.push(load_feat2d(m, &config.intrinsics));
    }
    sets.push(correspond(&curr.features, &prev.features, config.features.ratio));
    if config.gamma_t > 0.0 {
        let hand_set = if config.use_detector {
            detector_correspondences(curr.frame, prev.frame, &config.intrinsics)
        } else {
            match (&curr.frame.hand_pose, &prev.frame.hand_pose) {
                (Some(ch), Some(ph)) => contact_correspondences(ch, ph, curr.contact.as_ref(), prev.contact.as_ref())?,
                _ => CorrespondenceSet::new(Tag::Contact),
            }
        };
        sets.push(hand_set.with_weight(config.gamma_t));
    }
    Ok(sets)
}

/// Registers `curr` given the registered `prev`, then adds it to the
/// metascan. An under-constrained sparse stage falls back to identity
/// relative motion; ICP divergence is returned as an error and leaves the
/// metascan untouched.
pub fn register_pair(
    prev: &SegmentedFrame,
    prev_pose: &FramePose,
    curr: &SegmentedFrame,
    metascan: &mut Metascan,
    config: &RegistrationConfig,
) -> Result<FramePose> {
    let prev = PreparedFrame::new(prev, config)?;
    let curr = PreparedFrame::new(curr, config)?;
    register_prepared(&prev, prev_pose, &curr, metascan, config)
}

/// [`register_pair`] on frames whose per-frame work is already done.
pub fn register_prepared(
    prev: &PreparedFrame,
    prev_pose: &FramePose,
    curr: &PreparedFrame,
    metascan: &mut Metascan,
    config: &RegistrationConfig,
) -> Result<FramePose> {
    let sets = build_correspondences(prev, curr, config)?;
    let mut counts = BTreeMap::new();
    for s in &sets {
        *counts.entry(s.tag).or_insert(0) += s.len();
    }
    let (relative, fallback) = match align_sparse(&sets) {
        Ok(t) => (t, false),
        Err(Error::SparseUnderConstrained { .. } | Error::DegenerateConfiguration { .. }) => {
            (RigidTransform::identity(), true)
        }
        Err(e) => return Err(e),
    };
    let sparse_residual = weighted_rms(&sets, &relative);
    let mut world = prev_pose.world_from_frame.compose(&relative);
    let mut icp_residual = 0.0;
    if config.use_icp {
        let icp = refine_icp(&curr.smoothed.transformed(&world), metascan, config)?;
        counts.insert(Tag::Icp, icp.pairs);
        icp_residual = icp.rms;
        world = icp.transform.compose(&world);
    }
    metascan.insert(&curr.smoothed.transformed(&world), curr.frame.frame_index);
    Ok(FramePose {
        frame_index: curr.frame.frame_index,
        world_from_frame: world,
        sparse_residual,
        icp_residual,
        correspondence_counts: counts,
        sparse_fallback: fallback,
    })
}

/// Registered poses of a sequence; skipped frames have no pose.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub poses: Vec<FramePose>,
    pub skipped: Vec<usize>,
    pub metascan: Metascan,
}

/// Registers frames in order. A frame whose registration fails is skipped
/// and the next one is aligned to the last registered frame; more than
/// [`MAX_CONSECUTIVE_SKIPS`] in a row aborts.
pub fn register_sequence(frames: &[SegmentedFrame], config: &RegistrationConfig) -> Result<Trajectory> {
    config.validate()?;
    if frames.is_empty() {
        return Err(Error::EmptyInput("frames"));
    }
    let prepared: Vec<Result<PreparedFrame>> = frames.par_iter().map(|f| PreparedFrame::new(f, config)).collect();
    let mut prepared = prepared.into_iter();
    let first = prepared.next().expect("non-empty")?;
    let mut metascan = Metascan::new(config.metascan_voxel);
    metascan.insert(&first.smoothed, first.frame.frame_index);
    let mut poses = vec![FramePose::initial(first.frame.frame_index)];
    let mut skipped = Vec::new();
    let mut prev = first;
    let mut run = 0;
    for (frame, curr) in frames.iter().skip(1).zip(prepared) {
        let prev_pose = poses.last().expect("initial pose");
        let registered = curr.and_then(|curr| {
            register_prepared(&prev, prev_pose, &curr, &mut metascan, config).map(|pose| (curr, pose))
        });
        match registered {
            Ok((curr, pose)) => {
                log::debug!(
                    "frame {}: sparse {:.3} icp {:.3} {:?}",
                    pose.frame_index,
                    pose.sparse_residual,
                    pose.icp_residual,
                    pose.correspondence_counts
                );
                poses.push(pose);
                prev = curr;
                run = 0;
            }
            Err(e) => {
                log::warn!("frame {} skipped: {e}", frame.frame_index);
                skipped.push(frame.frame_index);
                run += 1;
                if run > MAX_CONSECUTIVE_SKIPS {
                    return Err(Error::TooManySkips {
                        frame: frame.frame_index,
                        skipped: run,
                        last_good: prev.frame.frame_index,
                    });
                }
            }
        }
    }
    Ok(Trajectory {
        poses,
        skipped,
        metascan,
    })
}
