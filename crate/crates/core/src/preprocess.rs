//! Working-volume clipping, normal estimation and the per-frame input record.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::contact::PosedHand;
use crate::error::{Error, Result};
use crate::geometry::{Matrix3, Point3, PointCloud, SpatialIndex, Vector3};

/// Axis-aligned box in camera coordinates; points outside are discarded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorkingVolume {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Default for WorkingVolume {
    fn default() -> Self {
        Self {
            min: [-100.0, -140.0, 400.0],
            max: [100.0, 220.0, 1000.0],
        }
    }
}

impl WorkingVolume {
    pub fn new(min: [f64; 3], max: [f64; 3]) -> Result<Self> {
        let v = Self { min, max };
        v.validate()?;
        Ok(v)
    }

    pub fn validate(&self) -> Result<()> {
        if (0..3).all(|a| self.min[a] < self.max[a]) {
            Ok(())
        } else {
            Err(Error::invalid("working_volume", "min must be below max on every axis"))
        }
    }

    pub fn contains(&self, p: &Point3) -> bool {
        (0..3).all(|a| p[a] >= self.min[a] && p[a] <= self.max[a])
    }
}

/// Keeps points inside `vol`, preserving order and filtering channels alongside.
pub fn clip_volume(cloud: &PointCloud, vol: &WorkingVolume) -> PointCloud {
    cloud.filter(|_, p| vol.contains(p))
}

/// Default neighborhood size for [`estimate_normals`].
pub const DEFAULT_NORMAL_K: usize = 16;

/// PCA normals over the `k` nearest neighbors, oriented toward the sensor at the origin.
pub fn estimate_normals(cloud: &PointCloud, k: usize) -> Result<PointCloud> {
    if k < 3 || cloud.len() < k {
        return Err(Error::InsufficientPoints {
            have: cloud.len(),
            need: k.max(3),
        });
    }
    let index = SpatialIndex::build(cloud.points())?;
    let normals: Result<Vec<Vector3>> = cloud
        .points()
        .par_iter()
        .map(|p| {
            let nbrs = index.knn(p, k);
            let pts: Vec<Point3> = nbrs.iter().map(|n| cloud.points()[n.index]).collect();
            let mut n = pca_normal(&pts)?;
            if n.dot(&(-p.coords)) < 0.0 {
                n = -n;
            }
            Ok(n)
        })
        .collect();
    cloud.clone().set_normals(normals?)
}

/// Smallest-eigenvalue eigenvector of the neighborhood scatter.
fn pca_normal(pts: &[Point3]) -> Result<Vector3> {
    let c = crate::geometry::centroid(pts).ok_or(Error::EmptyInput("normal neighborhood"))?;
    let mut cov = Matrix3::zeros();
    for p in pts {
        let d = p - c;
        cov += d * d.transpose();
    }
    let eig = cov.symmetric_eigen();
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let l1 = eig.eigenvalues[order[1]].max(0.0);
    let l2 = eig.eigenvalues[order[2]].max(0.0);
    if l2 <= 0.0 || l1 <= 1e-12 * l2 {
        return Err(Error::DegenerateConfiguration {
            ratio: if l2 > 0.0 { l1 / l2 } else { 0.0 },
        });
    }
    Ok(eig.eigenvectors.column(order[0]).normalize())
}

/// A 2D feature match to the previous frame with depths in millimeters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelMatch {
    pub source: (f64, f64),
    pub source_depth: f64,
    pub target: (f64, f64),
    pub target_depth: f64,
}

/// Fixed-size finger detection box, top-left corner in pixels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorBox {
    pub label: String,
    pub u0: i64,
    pub v0: i64,
    pub width: u32,
    pub height: u32,
}

/// Everything the registration stage consumes for one frame.
#[derive(Debug, Clone)]
pub struct SegmentedFrame {
    pub frame_index: usize,
    pub object_cloud: PointCloud,
    pub hand_cloud: PointCloud,
    pub hand_pose: Option<PosedHand>,
    /// Matches whose source pixels are in this frame and targets in the previous one.
    pub feat2d_matches: Option<Vec<PixelMatch>>,
    pub detector_boxes: Option<Vec<DetectorBox>>,
}

impl SegmentedFrame {
    pub fn new(frame_index: usize, object_cloud: PointCloud) -> Self {
        Self {
            frame_index,
            object_cloud,
            hand_cloud: PointCloud::default(),
            hand_pose: None,
            feat2d_matches: None,
            detector_boxes: None,
        }
    }

    /// Clips both clouds and attaches normals to the object cloud when missing.
    pub fn prepare(mut self, vol: &WorkingVolume, normal_k: usize) -> Result<Self> {
        self.object_cloud = clip_volume(&self.object_cloud, vol);
        self.hand_cloud = clip_volume(&self.hand_cloud, vol);
        if self.object_cloud.normals().is_none() && self.object_cloud.len() >= normal_k {
            self.object_cloud = estimate_normals(&self.object_cloud, normal_k)?;
        }
        Ok(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn default_volume_bounds() {
        let vol = WorkingVolume::default();
        let c = PointCloud::new(vec![Point3::new(0.0, 0.0, 700.0), Point3::new(0.0, 0.0, 1200.0)]);
        let out = clip_volume(&c, &vol);
        assert_eq!(out.points(), &[Point3::new(0.0, 0.0, 700.0)]);
        assert!(clip_volume(&PointCloud::default(), &vol).is_empty());
    }

    #[test]
    fn channels_follow_points() {
        let vol = WorkingVolume::default();
        let c = PointCloud::new(vec![
            Point3::new(0.0, 0.0, 300.0),
            Point3::new(1.0, 0.0, 700.0),
            Point3::new(2.0, 0.0, 800.0),
        ])
        .set_colors(vec![[0.1, 0.0, 0.0], [0.2, 0.0, 0.0], [0.3, 0.0, 0.0]])
        .unwrap();
        let out = clip_volume(&c, &vol);
        assert_eq!(out.colors().unwrap(), &[[0.2, 0.0, 0.0], [0.3, 0.0, 0.0]]);
    }

    #[test]
    fn plane_normals_face_sensor() {
        let mut pts = Vec::new();
        for i in -10..=10 {
            for j in -10..=10 {
                pts.push(Point3::new(i as f64, j as f64, 500.0));
            }
        }
        let out = estimate_normals(&PointCloud::new(pts), 16).unwrap();
        for n in out.normals().unwrap() {
            assert!((n - Vector3::new(0.0, 0.0, -1.0)).norm() < 1e-3);
        }
    }

    #[test]
    fn sphere_normals_are_radial() {
        let c = Point3::new(0.0, 0.0, 600.0);
        let r = 35.0;
        let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
        let total = 8000;
        let pts: Vec<Point3> = (0..total)
            .map(|i| {
                let y = 1.0 - 2.0 * (i as f64 + 0.5) / total as f64;
                let s = (1.0 - y * y).sqrt();
                let th = golden * i as f64;
                c + Vector3::new(s * th.cos(), y, s * th.sin()) * r
            })
            .collect();
        let out = estimate_normals(&PointCloud::new(pts), 16).unwrap();
        for (p, n) in out.points().iter().zip(out.normals().unwrap()) {
            let radial = (p - c) / r;
            let cos = n.dot(&radial).abs().min(1.0);
            assert!(cos.acos().to_degrees() < 2.0);
        }
    }

    #[test]
    fn collinear_points_fail() {
        let pts = vec![
            Point3::new(0.0, 0.0, 500.0),
            Point3::new(1.0, 0.0, 500.0),
            Point3::new(2.0, 0.0, 500.0),
        ];
        assert!(estimate_normals(&PointCloud::new(pts.clone()), 3).is_err());
        assert!(matches!(
            estimate_normals(&PointCloud::new(pts), 16),
            Err(Error::InsufficientPoints { .. })
        ));
    }

    proptest! {
        #[test]
        fn clip_is_idempotent_and_bounded(
            raw in prop::collection::vec(prop::array::uniform3(-300.0f64..1300.0), 0..200)
        ) {
            let vol = WorkingVolume::default();
            let cloud = PointCloud::new(raw.iter().map(|a| Point3::new(a[0], a[1], a[2])).collect());
            let once = clip_volume(&cloud, &vol);
            prop_assert!(once.len() <= cloud.len());
            for p in once.points() {
                prop_assert!(vol.contains(p));
            }
            prop_assert_eq!(clip_volume(&once, &vol), once);
        }

        #[test]
        fn normals_face_origin(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pts: Vec<Point3> = (0..60)
                .map(|_| Point3::new(
                    rng.random_range(-50.0..50.0),
                    rng.random_range(-50.0..50.0),
                    rng.random_range(500.0..700.0),
                ))
                .collect();
            let out = estimate_normals(&PointCloud::new(pts), 16).unwrap();
            for (p, n) in out.points().iter().zip(out.normals().unwrap()) {
                prop_assert!(n.dot(&(-p.coords)) >= 0.0);
            }
        }
    }
}
