use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{Point3, PointCloud, SpatialIndex, Vector3};

/// Gray level of untextured surface.
pub const BASE_SHADE: f32 = 0.5;

/// One spherical-cap-like depression: depth profile `d (1 − (ρ/a)²)²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dimple {
    pub center: Point3,
    pub normal: Vector3,
    pub radius: f64,
    pub depth: f64,
}

/// A two-tone disc painted around each feature: `inner_shade` up to
/// `inner_radius`, `outer_shade` up to `radius`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sticker {
    pub center: Point3,
    pub normal: Vector3,
    pub radius: f64,
    pub inner_radius: f64,
    pub inner_shade: f32,
    pub outer_shade: f32,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TextureLayout {
    pub dimples: Vec<Dimple>,
    pub stickers: Vec<Sticker>,
}

/// Size ranges for generated features, millimeters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DimpleSpec {
    pub radius: (f64, f64),
    pub depth: (f64, f64),
    /// Minimum distance between feature centers.
    pub spacing: f64,
    /// Max cluster size; each feature has one to this many dimples.
    pub cluster: usize,
    /// Sticker radius; zero paints nothing.
    pub sticker_radius: f64,
}

impl Default for DimpleSpec {
    fn default() -> Self {
        Self {
            radius: (2.0, 4.0),
            depth: (1.0, 2.0),
            spacing: 16.0,
            cluster: 3,
            sticker_radius: 8.0,
        }
    }
}

/// Seeded layout: `count` features centered on points of `cloud` and spaced
/// apart, each a cluster of dimples under a sticker.
pub fn texture_layout(cloud: &PointCloud, count: usize, seed: u64, spec: &DimpleSpec) -> TextureLayout {
    let mut layout = TextureLayout::default();
    let Some(normals) = cloud.normals() else {
        return layout;
    };
    if count == 0 || cloud.is_empty() {
        return layout;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = cloud.points();
    let mut centers: Vec<Point3> = Vec::new();
    let mut attempts = 0;
    while centers.len() < count && attempts < 200 * count {
        attempts += 1;
        let i = rng.random_range(0..points.len());
        let c = points[i];
        if centers.iter().any(|o| (o - c).norm() < spec.spacing) {
            continue;
        }
        centers.push(c);
        let n = normals[i];
        let t1 = n.cross(&if n.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() }).normalize();
        let t2 = n.cross(&t1);
        let members = rng.random_range(1..=spec.cluster.max(1));
        for m in 0..members {
            let offset = if m == 0 {
                Vector3::zeros()
            } else {
                let ang = rng.random_range(0.0..std::f64::consts::TAU);
                (t1 * ang.cos() + t2 * ang.sin()) * rng.random_range(1.2..2.0) * spec.radius.1
            };
            layout.dimples.push(Dimple {
                center: c + offset,
                normal: n,
                radius: rng.random_range(spec.radius.0..=spec.radius.1),
                depth: rng.random_range(spec.depth.0..=spec.depth.1),
            });
        }
        if spec.sticker_radius > 0.0 {
            layout.stickers.push(Sticker {
                center: c,
                normal: n,
                radius: spec.sticker_radius,
                inner_radius: spec.sticker_radius * 0.5,
                inner_shade: rng.random_range(0.0f32..1.0),
                outer_shade: rng.random_range(0.0f32..1.0),
            });
        }
    }
    layout
}

/// Paints stickers, then presses dimples in: points move inward along their
/// normals and normals tilt by the depth gradient. Clouds without colors
/// start from [`BASE_SHADE`].
pub fn apply_texture(cloud: &PointCloud, layout: &TextureLayout) -> PointCloud {
    let Some(normals) = cloud.normals() else {
        return cloud.clone();
    };
    if (layout.dimples.is_empty() && layout.stickers.is_empty()) || cloud.is_empty() {
        return cloud.clone();
    }
    let mut points = cloud.points().to_vec();
    let mut normals = normals.to_vec();
    let mut colors = cloud
        .colors()
        .map(|c| c.to_vec())
        .unwrap_or_else(|| vec![[BASE_SHADE; 3]; points.len()]);
    let index = SpatialIndex::build(cloud.points()).expect("non-empty");
    let tangential = |p: &Point3, center: &Point3, normal: &Vector3| {
        let rel = p - center;
        rel - normal * rel.dot(normal)
    };
    for s in &layout.stickers {
        for nb in index.radius_search(&s.center, s.radius * 1.5) {
            let rho = tangential(&cloud.points()[nb.index], &s.center, &s.normal).norm();
            if rho < s.radius {
                let shade = if rho < s.inner_radius { s.inner_shade } else { s.outer_shade };
                colors[nb.index] = [shade; 3];
            }
        }
    }
    for d in &layout.dimples {
        for nb in index.radius_search(&d.center, d.radius * 1.5) {
            let t = tangential(&cloud.points()[nb.index], &d.center, &d.normal);
            let rho = t.norm();
            if rho >= d.radius {
                continue;
            }
            let q = 1.0 - (rho / d.radius).powi(2);
            let depth = d.depth * q * q;
            let slope = -4.0 * d.depth * q * rho / (d.radius * d.radius);
            let n = normals[nb.index];
            points[nb.index] -= n * depth;
            if rho > 1e-12 {
                normals[nb.index] = (n + t / rho * slope).normalize();
            }
        }
    }
    PointCloud::with_normals(points, normals)
        .and_then(|c| c.set_colors(colors))
        .expect("consistent channels")
}

/// Adds `count` seeded texture features to a cloud with normals.
pub fn add_texture_features(cloud: &PointCloud, count: usize, seed: u64) -> PointCloud {
    apply_texture(cloud, &texture_layout(cloud, count, seed, &DimpleSpec::default()))
}
