use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Matrix3, Point3, PointCloud, SpatialIndex, Vector3};

/// Intrinsic-shape-signature detector settings, radii in millimeters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IssParams {
    pub salient_radius: f64,
    pub nonmax_radius: f64,
    pub gamma21: f64,
    pub gamma32: f64,
    pub min_neighbors: usize,
}

impl Default for IssParams {
    fn default() -> Self {
        Self {
            salient_radius: 6.0,
            nonmax_radius: 4.0,
            gamma21: 0.975,
            gamma32: 0.975,
            min_neighbors: 5,
        }
    }
}

impl IssParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.salient_radius > 0.0 && self.nonmax_radius > 0.0) {
            return Err(Error::invalid("iss", "radii must be positive"));
        }
        if !(self.gamma21 > 0.0 && self.gamma21 < 1.0 && self.gamma32 > 0.0 && self.gamma32 < 1.0) {
            return Err(Error::invalid("iss", "eigenvalue ratio bounds must lie in (0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Keypoint {
    pub position: Point3,
    /// Smallest scatter eigenvalue.
    pub saliency: f64,
    /// Index of the keypoint in the cloud it was detected in.
    pub index: usize,
}

/// Eigenvalues of the neighborhood scatter about its centroid, descending.
pub(crate) fn scatter_eigenvalues(neighbors: &[Point3]) -> [f64; 3] {
    let mean = neighbors.iter().fold(Vector3::zeros(), |a, q| a + q.coords) / neighbors.len() as f64;
    let mut cov = Matrix3::zeros();
    for q in neighbors {
        let d: Vector3 = q.coords - mean;
        cov += d * d.transpose();
    }
    cov /= neighbors.len() as f64;
    let mut ev: Vec<f64> = cov.symmetric_eigenvalues().iter().map(|&x| x.max(0.0)).collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    [ev[0], ev[1], ev[2]]
}

/// Neighbors within `r` in an order that depends only on geometry.
pub(crate) fn canonical_neighbors(
    index: &SpatialIndex,
    points: &[Point3],
    q: &Point3,
    r: f64,
) -> Vec<(f64, usize)> {
    let mut raw = Vec::new();
    index.within(q, r, &mut raw);
    let mut out: Vec<(f64, usize)> = raw.into_iter().map(|(d2, i)| (d2, i as usize)).collect();
    out.sort_by(|a, b| {
        a.0.total_cmp(&b.0)
            .then_with(|| lex(&points[a.1], &points[b.1]))
            .then(a.1.cmp(&b.1))
    });
    out
}

fn lex(a: &Point3, b: &Point3) -> std::cmp::Ordering {
    a.x.total_cmp(&b.x)
        .then(a.y.total_cmp(&b.y))
        .then(a.z.total_cmp(&b.z))
}

/// ISS keypoints: points whose scatter eigenvalues satisfy
/// `λ2/λ1 < γ21`, `λ3/λ2 < γ32`, with non-zero `λ3`, kept only where `λ3` is
/// the neighborhood maximum within `nonmax_radius`.
pub fn detect_iss3d(cloud: &PointCloud, params: &IssParams) -> Result<Vec<Keypoint>> {
    params.validate()?;
    if cloud.normals().is_none() {
        return Err(Error::invalid("cloud", "keypoint detection needs normals"));
    }
    if cloud.is_empty() {
        return Ok(Vec::new());
    }
    let points = cloud.points();
    let index = SpatialIndex::build(points)?;

    let saliency: Vec<Option<f64>> = points
        .par_iter()
        .map(|p| {
            let nbrs = canonical_neighbors(&index, points, p, params.salient_radius);
            if nbrs.len() < params.min_neighbors {
                return None;
            }
            let pts: Vec<Point3> = nbrs.iter().map(|&(_, i)| points[i]).collect();
            let [l1, l2, l3] = scatter_eigenvalues(&pts);
            let salient = l1 > 0.0
                && l2 > 0.0
                && l3 > 1e-10 * l1
                && l2 / l1 < params.gamma21
                && l3 / l2 < params.gamma32;
            salient.then_some(l3)
        })
        .collect();

    let beats = |a: usize, b: usize| -> bool {
        let (sa, sb) = (saliency[a].unwrap(), saliency[b].unwrap());
        sa > sb || (sa == sb && lex(&points[a], &points[b]) == std::cmp::Ordering::Less)
    };

    let mut keypoints: Vec<Keypoint> = (0..points.len())
        .into_par_iter()
        .filter_map(|i| {
            let s = saliency[i]?;
            let nbrs = canonical_neighbors(&index, points, &points[i], params.nonmax_radius);
            let is_max = nbrs
                .iter()
                .all(|&(_, j)| j == i || saliency[j].is_none() || beats(i, j));
            is_max.then_some(Keypoint {
                position: points[i],
                saliency: s,
                index: i,
            })
        })
        .collect();
    keypoints.sort_by(|a, b| lex(&a.position, &b.position).then(a.index.cmp(&b.index)));
    Ok(keypoints)
}
