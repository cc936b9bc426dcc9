use std::f64::consts::TAU;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::shape::surface_from_pole;
use crate::contact::{BoneId, HandTopology};
use crate::geometry::{Point3, Vector3};

/// Synthetic two-finger grasp: one fingertip pad on each pole of the object.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HandSpec {
    /// Hexagonal rings around the pad center; ring `m` has `6m` vertices.
    pub pad_rings: usize,
    pub ring_spacing: f64,
    /// Offset of pad vertices off the surface along the normal.
    pub pad_offset: f64,
    /// Per-frame translation error of the tracked hand, shared by both
    /// fingers (standard deviation, mm).
    pub tracking_sigma: f64,
    /// Additional independent per-finger tracking error.
    pub jitter_sigma: f64,
    /// Radius of the fingertip ball that occludes the object.
    pub occluder_radius: f64,
    /// Vertices of each proximal (non-contact) bone.
    pub proximal_vertices: usize,
    /// Vertices on the back of each fingertip bone, a cylinder of
    /// `tip_radius` leaving the pad sideways, clear of the surface.
    pub tip_body_vertices: usize,
    pub tip_radius: f64,
    pub tip_length: f64,
}

impl Default for HandSpec {
    fn default() -> Self {
        Self {
            pad_rings: 7,
            ring_spacing: 1.0,
            pad_offset: 0.5,
            tracking_sigma: 0.4,
            jitter_sigma: 0.0,
            occluder_radius: 5.0,
            proximal_vertices: 60,
            tip_body_vertices: 96,
            tip_radius: 6.0,
            tip_length: 22.0,
        }
    }
}

pub const BONE_NAMES: [&str; 4] = ["thumb_tip", "thumb_proximal", "index_tip", "index_proximal"];
pub const THUMB_TIP: BoneId = 0;
pub const INDEX_TIP: BoneId = 2;

/// The hand model in the object frame: vertices, topology, and per finger
/// the pad center, pad normal and occluder center.
#[derive(Debug, Clone)]
pub struct HandModel {
    pub topology: Arc<HandTopology>,
    pub vertices: Vec<Point3>,
    pub fingers: [FingerGeometry; 2],
}

#[derive(Debug, Clone, Copy)]
pub struct FingerGeometry {
    pub pad_center: Point3,
    pub pad_normal: Vector3,
    pub occluder_center: Point3,
    /// Vertex index range `[start, end)` of this finger (tip and proximal).
    pub start: usize,
    pub end: usize,
}

impl HandModel {
    pub fn build(profile: &[(f64, f64)], spec: &HandSpec) -> Self {
        let mut vertices = Vec::new();
        let mut labels = Vec::new();
        let mut fingers = Vec::new();
        for (f, top) in [(0usize, true), (1usize, false)] {
            let start = vertices.len();
            let (center, normal) = surface_from_pole(profile, top, 0.0, 0.0);
            vertices.push(center + normal * spec.pad_offset);
            labels.push((2 * f) as BoneId);
            for m in 1..=spec.pad_rings {
                let s = m as f64 * spec.ring_spacing;
                for k in 0..6 * m {
                    let phi = TAU * k as f64 / (6 * m) as f64;
                    let (p, n) = surface_from_pole(profile, top, s, phi);
                    vertices.push(p + n * spec.pad_offset);
                    labels.push((2 * f) as BoneId);
                }
            }
            let tangent = normal.cross(&Vector3::z()).try_normalize(1e-9).unwrap_or(Vector3::x());
            let axis = (normal + tangent).normalize();
            let (u, w) = (axis.cross(&normal).normalize(), axis.cross(&axis.cross(&normal)).normalize());
            let root = center + normal * (spec.tip_radius + spec.pad_offset + 2.0);
            let n_body = spec.tip_body_vertices;
            for k in 0..n_body {
                let along = spec.tip_length * (k as f64 + 0.5) / n_body as f64;
                let phi = TAU * 0.618_033_988_75 * k as f64;
                let ring = (u * phi.cos() + w * phi.sin()) * spec.tip_radius;
                vertices.push(root + axis * along + ring);
                labels.push((2 * f) as BoneId);
            }
            for k in 0..spec.proximal_vertices {
                let along = 8.0 + 22.0 * k as f64 / spec.proximal_vertices.max(1) as f64;
                let side = ((k % 3) as f64 - 1.0) * 3.0;
                vertices.push(center + normal * along + tangent * side);
                labels.push((2 * f + 1) as BoneId);
            }
            fingers.push(FingerGeometry {
                pad_center: center,
                pad_normal: normal,
                occluder_center: center + normal * (spec.occluder_radius + spec.pad_offset),
                start,
                end: vertices.len(),
            });
        }
        let topology = HandTopology {
            bone_names: BONE_NAMES.iter().map(|s| s.to_string()).collect(),
            bone_label: labels,
            end_effectors: vec![THUMB_TIP, INDEX_TIP],
        };
        Self {
            topology: Arc::new(topology),
            vertices,
            fingers: [fingers[0], fingers[1]],
        }
    }
}
