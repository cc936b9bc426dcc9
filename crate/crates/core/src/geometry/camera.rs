use serde::{Deserialize, Serialize};

use super::Point3;
use crate::error::{Error, Result};

/// Pinhole intrinsics in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl Default for CameraIntrinsics {
    /// Carmine/Kinect-class VGA intrinsics.
    fn default() -> Self {
        Self {
            fx: 570.3,
            fy: 570.3,
            cx: 319.5,
            cy: 239.5,
            width: 640,
            height: 480,
        }
    }
}

impl CameraIntrinsics {
    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::invalid("intrinsics", "focal lengths must be positive"));
        }
        if !(self.cx >= 0.0 && self.cx < self.width as f64) {
            return Err(Error::invalid("intrinsics", "cx outside the image"));
        }
        if !(self.cy >= 0.0 && self.cy < self.height as f64) {
            return Err(Error::invalid("intrinsics", "cy outside the image"));
        }
        Ok(())
    }

    pub fn contains(&self, u: f64, v: f64) -> bool {
        u >= 0.0 && v >= 0.0 && u < self.width as f64 && v < self.height as f64
    }

    /// Projects a camera-frame point to pixel coordinates. `None` behind the camera.
    pub fn project(&self, p: &Point3) -> Option<(f64, f64)> {
        if p.z <= 0.0 {
            return None;
        }
        Some((self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy))
    }
}

/// Lifts pixel `(u, v)` at `depth` millimeters into the camera frame.
pub fn back_project(u: f64, v: f64, depth: f64, k: &CameraIntrinsics) -> Result<Point3> {
    if !(depth > 0.0) || !depth.is_finite() {
        return Err(Error::InvalidDepth(depth));
    }
    if !k.contains(u, v) {
        return Err(Error::invalid(
            "pixel",
            format!("({u}, {v}) outside {}x{}", k.width, k.height),
        ));
    }
    Ok(Point3::new(
        depth * (u - k.cx) / k.fx,
        depth * (v - k.cy) / k.fy,
        depth,
    ))
}

/// Z-buffered depth image rendered from a point set; zero marks no data.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthImage {
    pub width: u32,
    pub height: u32,
    pub depth: Vec<f32>,
}

impl DepthImage {
    pub fn render(points: &[Point3], k: &CameraIntrinsics) -> Self {
        let (w, h) = (k.width as usize, k.height as usize);
        let mut depth = vec![0f32; w * h];
        for p in points {
            let Some((u, v)) = k.project(p) else { continue };
            let (ui, vi) = (u.round(), v.round());
            if !k.contains(ui, vi) {
                continue;
            }
            let idx = vi as usize * w + ui as usize;
            let z = p.z as f32;
            if depth[idx] == 0.0 || z < depth[idx] {
                depth[idx] = z;
            }
        }
        Self {
            width: k.width,
            height: k.height,
            depth,
        }
    }

    /// Depth at an integer pixel, `None` when out of bounds or empty.
    pub fn at(&self, u: i64, v: i64) -> Option<f64> {
        if u < 0 || v < 0 || u >= self.width as i64 || v >= self.height as i64 {
            return None;
        }
        let d = self.depth[v as usize * self.width as usize + u as usize];
        (d > 0.0).then_some(d as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn principal_point_maps_to_optical_axis() {
        let k = CameraIntrinsics::default();
        let p = back_project(k.cx, k.cy, 500.0, &k).unwrap();
        assert_eq!(p, Point3::new(0.0, 0.0, 500.0));
    }

    #[test]
    fn unit_tangent_pixel() {
        let k = CameraIntrinsics {
            fx: 300.0,
            fy: 300.0,
            cx: 100.0,
            cy: 100.0,
            width: 640,
            height: 480,
        };
        let p = back_project(k.cx + k.fx, k.cy, 500.0, &k).unwrap();
        assert!((p - Point3::new(500.0, 0.0, 500.0)).norm() < 1e-12);
    }

    #[test]
    fn project_round_trip() {
        let k = CameraIntrinsics::default();
        for p in [
            Point3::new(12.5, -40.25, 612.0),
            Point3::new(-90.0, 100.0, 950.0),
            Point3::new(0.3, 0.7, 401.0),
        ] {
            let (u, v) = k.project(&p).unwrap();
            let q = back_project(u, v, p.z, &k).unwrap();
            assert!((p - q).norm() < 1e-6);
        }
    }

    #[test]
    fn nonpositive_depth_is_rejected() {
        let k = CameraIntrinsics::default();
        assert!(matches!(
            back_project(10.0, 10.0, 0.0, &k),
            Err(Error::InvalidDepth(_))
        ));
        assert!(back_project(10.0, 10.0, -5.0, &k).is_err());
    }

    #[test]
    fn depth_render_keeps_nearest() {
        let k = CameraIntrinsics::default();
        let pts = [Point3::new(0.0, 0.0, 600.0), Point3::new(0.0, 0.0, 500.0)];
        let img = DepthImage::render(&pts, &k);
        assert_eq!(img.at(320, 240), Some(500.0));
        assert_eq!(img.at(0, 0), None);
    }
}
