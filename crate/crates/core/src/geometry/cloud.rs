use super::{Point3, RigidTransform, Vector3};
use crate::error::{Error, Result};

/// Positions with optional per-point normals and RGB colors.
///
/// Optional channels always match `points` in length; constructors and
/// mutators enforce it.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    points: Vec<Point3>,
    normals: Option<Vec<Vector3>>,
    colors: Option<Vec<[f32; 3]>>,
}

impl PointCloud {
    pub fn new(points: Vec<Point3>) -> Self {
        Self {
            points,
            normals: None,
            colors: None,
        }
    }

    pub fn with_normals(points: Vec<Point3>, normals: Vec<Vector3>) -> Result<Self> {
        Self::new(points).set_normals(normals)
    }

    pub fn set_normals(mut self, normals: Vec<Vector3>) -> Result<Self> {
        if normals.len() != self.points.len() {
            return Err(Error::invalid(
                "normals",
                format!("{} normals for {} points", normals.len(), self.points.len()),
            ));
        }
        if let Some(bad) = normals.iter().position(|n| (n.norm() - 1.0).abs() > 1e-6) {
            return Err(Error::invalid(
                "normals",
                format!("normal {bad} has norm {}", normals[bad].norm()),
            ));
        }
        self.normals = Some(normals);
        Ok(self)
    }

    pub fn set_colors(mut self, colors: Vec<[f32; 3]>) -> Result<Self> {
        if colors.len() != self.points.len() {
            return Err(Error::invalid(
                "colors",
                format!("{} colors for {} points", colors.len(), self.points.len()),
            ));
        }
        self.colors = Some(colors);
        Ok(self)
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn normals(&self) -> Option<&[Vector3]> {
        self.normals.as_deref()
    }

    pub fn colors(&self) -> Option<&[[f32; 3]]> {
        self.colors.as_deref()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Keeps the points for which `keep` returns true, filtering all channels
    /// consistently and preserving order.
    pub fn filter<F: FnMut(usize, &Point3) -> bool>(&self, mut keep: F) -> Self {
        let mask: Vec<bool> = self
            .points
            .iter()
            .enumerate()
            .map(|(i, p)| keep(i, p))
            .collect();
        self.select_mask(&mask)
    }

    fn select_mask(&self, mask: &[bool]) -> Self {
        fn pick<T: Clone>(v: &[T], mask: &[bool]) -> Vec<T> {
            v.iter()
                .zip(mask)
                .filter(|(_, &m)| m)
                .map(|(x, _)| x.clone())
                .collect()
        }
        Self {
            points: pick(&self.points, mask),
            normals: self.normals.as_ref().map(|n| pick(n, mask)),
            colors: self.colors.as_ref().map(|c| pick(c, mask)),
        }
    }

    /// Applies a rigid transform to positions and normals.
    pub fn transformed(&self, t: &RigidTransform) -> Self {
        Self {
            points: self.points.iter().map(|p| t.apply(p)).collect(),
            normals: self
                .normals
                .as_ref()
                .map(|ns| ns.iter().map(|n| t.rotate(n)).collect()),
            colors: self.colors.clone(),
        }
    }

    /// Appends another cloud. Channels survive only if both clouds carry them.
    pub fn extend(&mut self, other: &PointCloud) {
        let had_points = !self.points.is_empty();
        self.points.extend_from_slice(&other.points);
        self.normals = match (self.normals.take(), other.normals.as_ref()) {
            (Some(mut a), Some(b)) => {
                a.extend_from_slice(b);
                Some(a)
            }
            (None, Some(b)) if !had_points => Some(b.clone()),
            _ => None,
        };
        self.colors = match (self.colors.take(), other.colors.as_ref()) {
            (Some(mut a), Some(b)) => {
                a.extend_from_slice(b);
                Some(a)
            }
            (None, Some(b)) if !had_points => Some(b.clone()),
            _ => None,
        };
    }

    pub fn centroid(&self) -> Option<Point3> {
        super::centroid(&self.points)
    }
}
