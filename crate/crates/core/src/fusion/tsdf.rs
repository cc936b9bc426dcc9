use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point3, PointCloud, RigidTransform, SpatialIndex, Vector3};

/// Largest voxel edge the fusion stage accepts, in millimeters.
pub const MAX_VOXEL_SIZE: f64 = 6.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TsdfConfig {
    pub side_length: f64,
    pub resolution: usize,
    /// Truncation distance in voxels.
    pub truncation_voxels: f64,
}

impl Default for TsdfConfig {
    fn default() -> Self {
        Self {
            side_length: 350.0,
            resolution: 256,
            truncation_voxels: 3.0,
        }
    }
}

impl TsdfConfig {
    pub fn voxel_size(&self) -> f64 {
        self.side_length / self.resolution as f64
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.side_length > 0.0) || self.resolution < 2 {
            return Err(Error::invalid("tsdf", "side length and resolution must be positive"));
        }
        if self.voxel_size() > MAX_VOXEL_SIZE {
            return Err(Error::invalid(
                "tsdf",
                format!("voxel size {:.3} mm exceeds {MAX_VOXEL_SIZE} mm", self.voxel_size()),
            ));
        }
        if !(self.truncation_voxels > 0.0) {
            return Err(Error::invalid("tsdf", "truncation must be positive"));
        }
        Ok(())
    }
}

/// Cubic truncated-signed-distance grid. Voxel `(i, j, k)` sits at
/// `origin + (i + 0.5, j + 0.5, k + 0.5) * voxel_size`; values are normalized
/// to `[-1, 1]` by the truncation distance, negative inside.
#[derive(Debug, Clone, PartialEq)]
pub struct TsdfVolume {
    origin: Point3,
    resolution: usize,
    voxel_size: f64,
    truncation: f64,
    tsdf: Vec<f32>,
    weight: Vec<f32>,
}

impl TsdfVolume {
    /// Empty volume with its minimum corner at `origin`.
    pub fn new(origin: Point3, config: &TsdfConfig) -> Result<Self> {
        config.validate()?;
        let n = config.resolution.pow(3);
        let voxel_size = config.voxel_size();
        Ok(Self {
            origin,
            resolution: config.resolution,
            voxel_size,
            truncation: config.truncation_voxels * voxel_size,
            tsdf: vec![1.0; n],
            weight: vec![0.0; n],
        })
    }

    /// Empty volume centered on `center`.
    pub fn centered(center: Point3, config: &TsdfConfig) -> Result<Self> {
        let half = config.side_length * 0.5;
        Self::new(center - Vector3::repeat(half), config)
    }

    pub fn origin(&self) -> Point3 {
        self.origin
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn voxel_size(&self) -> f64 {
        self.voxel_size
    }

    pub fn truncation(&self) -> f64 {
        self.truncation
    }

    pub fn tsdf(&self) -> &[f32] {
        &self.tsdf
    }

    pub fn weights(&self) -> &[f32] {
        &self.weight
    }

    pub fn linear_index(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.resolution + j) * self.resolution + i
    }

    pub fn voxel_center(&self, i: usize, j: usize, k: usize) -> Point3 {
        self.origin
            + Vector3::new(i as f64 + 0.5, j as f64 + 0.5, k as f64 + 0.5) * self.voxel_size
    }

    pub fn value(&self, i: usize, j: usize, k: usize) -> (f32, f32) {
        let idx = self.linear_index(i, j, k);
        (self.tsdf[idx], self.weight[idx])
    }

    /// Writes a normalized value and weight directly.
    pub fn set(&mut self, i: usize, j: usize, k: usize, tsdf: f32, weight: f32) {
        let idx = self.linear_index(i, j, k);
        self.tsdf[idx] = tsdf.clamp(-1.0, 1.0);
        self.weight[idx] = weight.max(0.0);
    }

    /// Fills every voxel from a signed distance function in millimeters.
    pub fn fill_from_sdf<F: Fn(&Point3) -> f64 + Sync>(&mut self, sdf: F, weight: f32) {
        let res = self.resolution;
        let (origin, vs, tau) = (self.origin, self.voxel_size, self.truncation);
        self.tsdf
            .par_chunks_mut(res * res)
            .enumerate()
            .for_each(|(k, slab)| {
                for j in 0..res {
                    for i in 0..res {
                        let c = origin
                            + Vector3::new(i as f64 + 0.5, j as f64 + 0.5, k as f64 + 0.5) * vs;
                        slab[j * res + i] = (sdf(&c).clamp(-tau, tau) / tau) as f32;
                    }
                }
            });
        self.weight.iter_mut().for_each(|w| *w = weight);
    }

    /// Fuses a cloud with normals observed under `pose` (frame to volume).
    ///
    /// Each voxel within the truncation distance of a point takes the signed
    /// distance to its nearest point along that point's normal, clamped and
    /// normalized, and folds it into a running average with unit weight.
    pub fn integrate(&mut self, cloud: &PointCloud, pose: &RigidTransform) -> Result<()> {
        let normals = cloud
            .normals()
            .ok_or_else(|| Error::invalid("cloud", "integration needs normals"))?;
        if cloud.is_empty() {
            return Ok(());
        }
        let points: Vec<Point3> = cloud.points().iter().map(|p| pose.apply(p)).collect();
        let normals: Vec<Vector3> = normals.iter().map(|n| pose.rotate(n)).collect();
        let index = SpatialIndex::build(&points)?;

        let res = self.resolution;
        let tau = self.truncation;
        let reach = (tau / self.voxel_size).ceil() as i64 + 1;
        let mut marked = vec![0u64; (res * res * res).div_ceil(64)];
        for p in &points {
            let g = (p - self.origin) / self.voxel_size;
            let base = [g.x.floor() as i64, g.y.floor() as i64, g.z.floor() as i64];
            let lo = base.map(|b| (b - reach).max(0));
            let hi = base.map(|b| (b + reach).min(res as i64 - 1));
            if (0..3).any(|a| lo[a] > hi[a]) {
                continue;
            }
            for k in lo[2]..=hi[2] {
                for j in lo[1]..=hi[1] {
                    for i in lo[0]..=hi[0] {
                        let idx = self.linear_index(i as usize, j as usize, k as usize);
                        marked[idx / 64] |= 1 << (idx % 64);
                    }
                }
            }
        }
        let candidates: Vec<usize> = marked
            .iter()
            .enumerate()
            .flat_map(|(w, &bits)| {
                (0..64).filter(move |b| bits & (1 << b) != 0).map(move |b| w * 64 + b)
            })
            .collect();

        let updates: Vec<Option<f32>> = candidates
            .par_iter()
            .map(|&idx| {
                let (i, j, k) = (idx % res, (idx / res) % res, idx / (res * res));
                let v = self.voxel_center(i, j, k);
                let nn = index.nearest(&v);
                if nn.distance > tau {
                    return None;
                }
                let sd = (v - points[nn.index]).dot(&normals[nn.index]);
                Some((sd.clamp(-tau, tau) / tau) as f32)
            })
            .collect();

        for (&idx, u) in candidates.iter().zip(&updates) {
            let Some(sd) = *u else { continue };
            let w = self.weight[idx] as f64;
            self.tsdf[idx] = ((self.tsdf[idx] as f64 * w + sd as f64) / (w + 1.0)) as f32;
            self.weight[idx] = (w + 1.0) as f32;
        }
        Ok(())
    }

    pub fn from_parts(
        origin: Point3,
        config: &TsdfConfig,
        tsdf: Vec<f32>,
        weight: Vec<f32>,
    ) -> Result<Self> {
        let mut v = Self::new(origin, config)?;
        if tsdf.len() != v.tsdf.len() || weight.len() != v.weight.len() {
            return Err(Error::invalid("tsdf", "grid length does not match resolution"));
        }
        v.tsdf = tsdf;
        v.weight = weight;
        Ok(v)
    }
}
