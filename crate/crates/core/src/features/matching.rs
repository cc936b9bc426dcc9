use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{describe, detect_iss3d, CorrespondenceSet, Descriptor, IssParams, Keypoint, Tag};
use crate::error::Result;
use crate::geometry::{Point3, PointCloud, SpatialIndex, Vector3};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureParams {
    pub iss: IssParams,
    pub descriptor_radius: f64,
    /// Lowe ratio bound on best / second-best descriptor distance.
    pub ratio: f64,
    /// Radius of the normal-direction denoising applied before detection;
    /// zero disables it.
    pub smoothing_radius: f64,
    /// Keypoints whose neighborhood normals almost all lie in the first
    /// deviation bin carry no usable shape; this is the minimum share of
    /// neighbors outside it.
    pub min_relief: f64,
}

impl Default for FeatureParams {
    fn default() -> Self {
        Self {
            iss: IssParams::default(),
            descriptor_radius: 8.0,
            ratio: 0.8,
            smoothing_radius: 2.0,
            min_relief: 0.05,
        }
    }
}

/// Keypoints of one cloud with their descriptors; zero and flat
/// descriptors are dropped.
#[derive(Debug, Clone, Default)]
pub struct FrameFeatures {
    pub keypoints: Vec<Keypoint>,
    pub descriptors: Vec<Descriptor>,
}

impl FrameFeatures {
    /// Smooths `cloud` per `params`, then detects and describes.
    pub fn compute(cloud: &PointCloud, params: &FeatureParams) -> Result<Self> {
        Self::from_smoothed(&smooth_for_features(cloud, params)?, params)
    }

    /// Detects and describes on a cloud that is already smoothed.
    pub fn from_smoothed(cloud: &PointCloud, params: &FeatureParams) -> Result<Self> {
        let keypoints = detect_iss3d(cloud, &params.iss)?;
        if keypoints.is_empty() {
            return Ok(Self::default());
        }
        let index = SpatialIndex::build(cloud.points())?;
        let described: Result<Vec<Descriptor>> = keypoints
            .par_iter()
            .map(|k| describe(cloud, &index, k, params.descriptor_radius))
            .collect();
        let (keypoints, descriptors) = keypoints
            .into_iter()
            .zip(described?)
            .filter(|(_, d)| !d.is_zero() && d.relief() >= params.min_relief)
            .unzip();
        Ok(Self {
            keypoints,
            descriptors,
        })
    }

    pub fn len(&self) -> usize {
        self.keypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keypoints.is_empty()
    }
}

/// The cloud features are computed on: denoised along normals when
/// `smoothing_radius` is positive and normals exist, otherwise a copy.
pub fn smooth_for_features(cloud: &PointCloud, params: &FeatureParams) -> Result<PointCloud> {
    if params.smoothing_radius > 0.0 && cloud.normals().is_some() && !cloud.is_empty() {
        denoise_along_normals(cloud, params.smoothing_radius)
    } else {
        Ok(cloud.clone())
    }
}

/// Moves each point onto the plane through its neighborhood centroid
/// orthogonal to its own normal, suppressing noise along the normal.
pub fn denoise_along_normals(cloud: &PointCloud, radius: f64) -> Result<PointCloud> {
    let normals = cloud
        .normals()
        .ok_or_else(|| crate::error::Error::invalid("cloud", "denoising needs normals"))?;
    let points = cloud.points();
    let index = SpatialIndex::build(points)?;
    let moved: Vec<Point3> = points
        .par_iter()
        .zip(normals.par_iter())
        .map(|(p, n)| {
            let nbrs = super::iss::canonical_neighbors(&index, points, p, radius);
            let c = nbrs
                .iter()
                .fold(Vector3::zeros(), |a, &(_, i)| a + points[i].coords)
                / nbrs.len() as f64;
            p - n * (p.coords - c).dot(n)
        })
        .collect();
    let mut out = PointCloud::with_normals(moved, normals.to_vec())?;
    if let Some(c) = cloud.colors() {
        out = out.set_colors(c.to_vec())?;
    }
    Ok(out)
}

/// Best match index if it passes the ratio test; ties go to the lower index.
fn best_passing(query: &Descriptor, pool: &[Descriptor], ratio: f64) -> Option<usize> {
    let mut best = (f64::INFINITY, usize::MAX);
    let mut second = f64::INFINITY;
    for (j, d) in pool.iter().enumerate() {
        let dist = query.distance(d);
        if dist < best.0 {
            second = best.0;
            best = (dist, j);
        } else if dist < second {
            second = dist;
        }
    }
    if best.1 == usize::MAX {
        return None;
    }
    (second.is_infinite() || best.0 < ratio * second).then_some(best.1)
}

/// Mutual nearest neighbors that pass the ratio test in both directions.
/// Returns `(source index, target index)` sorted by source index.
pub fn match_descriptors(
    source: &[Descriptor],
    target: &[Descriptor],
    ratio: f64,
) -> Vec<(usize, usize)> {
    let forward: Vec<Option<usize>> = source
        .par_iter()
        .map(|d| best_passing(d, target, ratio))
        .collect();
    let backward: Vec<Option<usize>> = target
        .par_iter()
        .map(|d| best_passing(d, source, ratio))
        .collect();
    forward
        .iter()
        .enumerate()
        .filter_map(|(i, f)| {
            let j = (*f)?;
            (backward[j] == Some(i)).then_some((i, j))
        })
        .collect()
}

/// Matched keypoint positions between two precomputed feature sets.
pub fn correspond(
    source: &FrameFeatures,
    target: &FrameFeatures,
    ratio: f64,
) -> CorrespondenceSet {
    let pairs = match_descriptors(&source.descriptors, &target.descriptors, ratio)
        .into_iter()
        .map(|(i, j)| (source.keypoints[i].position, target.keypoints[j].position))
        .collect();
    CorrespondenceSet::from_pairs(Tag::Feat3d, pairs)
}

/// Detects, describes and matches keypoints between two clouds with normals.
pub fn match_feat3d(
    source: &PointCloud,
    target: &PointCloud,
    params: &FeatureParams,
) -> Result<CorrespondenceSet> {
    let a = FrameFeatures::compute(source, params)?;
    let b = FrameFeatures::compute(target, params)?;
    Ok(correspond(&a, &b, params.ratio))
}
