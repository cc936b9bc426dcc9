//! Value types shared by every stage: points, clouds, rigid transforms,
//! pinhole intrinsics, an exact kd-tree, and the weighted rigid solve.

mod camera;
mod cloud;
mod index;
mod rigid;
mod transform;

pub use camera::{back_project, CameraIntrinsics, DepthImage};
pub use cloud::PointCloud;
pub use index::{Neighbor, SpatialIndex};
pub use rigid::{solve_weighted_rigid, weighted_objective, WeightedPair};
pub use transform::RigidTransform;

/// A position in millimeters.
pub type Point3 = nalgebra::Point3<f64>;
pub type Vector3 = nalgebra::Vector3<f64>;
pub type Matrix3 = nalgebra::Matrix3<f64>;

/// Rotation by `angle` radians about the unit `axis`.
pub fn axis_angle(axis: &Vector3, angle: f64) -> Matrix3 {
    let axis = nalgebra::Unit::new_normalize(*axis);
    *nalgebra::Rotation3::from_axis_angle(&axis, angle).matrix()
}

/// Angle in radians of a rotation matrix.
pub fn rotation_angle(r: &Matrix3) -> f64 {
    ((r.trace() - 1.0) * 0.5).clamp(-1.0, 1.0).acos()
}

pub fn centroid(points: &[Point3]) -> Option<Point3> {
    if points.is_empty() {
        return None;
    }
    let sum = points.iter().fold(Vector3::zeros(), |acc, p| acc + p.coords);
    Some(Point3::from(sum / points.len() as f64))
}
