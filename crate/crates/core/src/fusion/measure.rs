use serde::{Deserialize, Serialize};

use super::TriangleMesh;
use crate::error::{Error, Result};
use crate::geometry::{Point3, Vector3};

/// A dimension to read off a mesh.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Probe {
    /// Extent along `axis`.
    Height { axis: [f64; 3] },
    /// Largest distance between points where the mesh crosses the plane
    /// `height_from_base` above the mesh minimum along `axis`.
    Diameter { axis: [f64; 3], height_from_base: f64 },
    /// Enclosed volume; needs a closed mesh.
    Volume,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedProbe {
    pub name: String,
    pub probe: Probe,
    /// Reference value in mm or mm³.
    pub ground_truth: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub name: String,
    pub value: f64,
}

fn unit(axis: &[f64; 3]) -> Result<Vector3> {
    let v = Vector3::new(axis[0], axis[1], axis[2]);
    let n = v.norm();
    if !(n > 0.0) {
        return Err(Error::invalid("probe", "axis must be non-zero"));
    }
    Ok(v / n)
}

fn extent(mesh: &TriangleMesh, axis: &Vector3) -> (f64, f64) {
    mesh.vertices.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        let h = v.coords.dot(axis);
        (lo.min(h), hi.max(h))
    })
}

fn slice_points(mesh: &TriangleMesh, axis: &Vector3, level: f64) -> Vec<Point3> {
    let mut out = Vec::new();
    for t in &mesh.triangles {
        for e in 0..3 {
            let (a, b) = (mesh.vertices[t[e] as usize], mesh.vertices[t[(e + 1) % 3] as usize]);
            let (ha, hb) = (a.coords.dot(axis) - level, b.coords.dot(axis) - level);
            if (ha < 0.0) != (hb < 0.0) {
                out.push(a + (b - a) * (ha / (ha - hb)));
            }
        }
    }
    out
}

fn max_pairwise(points: &[Point3]) -> f64 {
    let mut best = 0.0f64;
    for (i, a) in points.iter().enumerate() {
        for b in &points[i + 1..] {
            best = best.max((a - b).norm_squared());
        }
    }
    best.sqrt()
}

/// Signed tetrahedron-sum volume of a closed mesh.
pub fn enclosed_volume(mesh: &TriangleMesh) -> Result<f64> {
    let stats = mesh.edge_stats();
    if mesh.is_empty() || stats.boundary > 0 || stats.non_manifold > 0 {
        return Err(Error::OpenMesh {
            boundary_edges: stats.boundary + stats.non_manifold,
        });
    }
    Ok(mesh
        .triangles
        .iter()
        .map(|t| {
            let [a, b, c] = t.map(|i| mesh.vertices[i as usize].coords);
            a.dot(&b.cross(&c)) / 6.0
        })
        .sum())
}

pub fn measure_dimensions(mesh: &TriangleMesh, probes: &[NamedProbe]) -> Result<Vec<Measurement>> {
    if mesh.is_empty() {
        return Err(Error::EmptyMesh);
    }
    probes
        .iter()
        .map(|p| {
            let value = match &p.probe {
                Probe::Height { axis } => {
                    let (lo, hi) = extent(mesh, &unit(axis)?);
                    hi - lo
                }
                Probe::Diameter {
                    axis,
                    height_from_base,
                } => {
                    let a = unit(axis)?;
                    let (lo, _) = extent(mesh, &a);
                    max_pairwise(&slice_points(mesh, &a, lo + height_from_base))
                }
                Probe::Volume => enclosed_volume(mesh)?,
            };
            Ok(Measurement {
                name: p.name.clone(),
                value,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fusion::{extract_mesh, TsdfConfig, TsdfVolume};
    use std::f64::consts::PI;

    /// Icosphere by repeated midpoint subdivision, radius `r`.
    pub(crate) fn icosphere(r: f64, levels: usize) -> TriangleMesh {
        let t = (1.0 + 5f64.sqrt()) / 2.0;
        let mut v: Vec<Vector3> = [
            (-1.0, t, 0.0), (1.0, t, 0.0), (-1.0, -t, 0.0), (1.0, -t, 0.0),
            (0.0, -1.0, t), (0.0, 1.0, t), (0.0, -1.0, -t), (0.0, 1.0, -t),
            (t, 0.0, -1.0), (t, 0.0, 1.0), (-t, 0.0, -1.0), (-t, 0.0, 1.0),
        ]
        .iter()
        .map(|&(x, y, z)| Vector3::new(x, y, z).normalize())
        .collect();
        let mut f: Vec<[u32; 3]> = vec![
            [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
            [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
            [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
            [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
        ];
        for _ in 0..levels {
            let mut cache = std::collections::HashMap::new();
            let mut mid = |a: u32, b: u32, v: &mut Vec<Vector3>| -> u32 {
                *cache.entry((a.min(b), a.max(b))).or_insert_with(|| {
                    v.push(((v[a as usize] + v[b as usize]) / 2.0).normalize());
                    (v.len() - 1) as u32
                })
            };
            let mut nf = Vec::new();
            for [a, b, c] in f {
                let (ab, bc, ca) = (mid(a, b, &mut v), mid(b, c, &mut v), mid(c, a, &mut v));
                nf.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
            }
            f = nf;
        }
        TriangleMesh::new(v.into_iter().map(|x| Point3::from(x * r)).collect(), f).unwrap()
    }

    fn probes() -> Vec<NamedProbe> {
        vec![
            NamedProbe {
                name: "diameter".into(),
                probe: Probe::Diameter {
                    axis: [0.0, 1.0, 0.0],
                    height_from_base: 1.0,
                },
                ground_truth: None,
            },
            NamedProbe {
                name: "volume".into(),
                probe: Probe::Volume,
                ground_truth: None,
            },
            NamedProbe {
                name: "height".into(),
                probe: Probe::Height { axis: [0.0, 1.0, 0.0] },
                ground_truth: None,
            },
        ]
    }

    #[test]
    fn unit_icosphere() {
        let m = measure_dimensions(&icosphere(1.0, 4), &probes()).unwrap();
        assert!((m[0].value - 2.0).abs() < 0.02);
        assert!((m[1].value - 4.0 * PI / 3.0).abs() / (4.0 * PI / 3.0) < 0.02);
        assert!((m[2].value - 2.0).abs() < 1e-9);
    }

    #[test]
    fn seventy_millimeter_sphere_volume() {
        let cfg = TsdfConfig::default();
        let mut vol = TsdfVolume::centered(Point3::origin(), &cfg).unwrap();
        vol.fill_from_sdf(|p| p.coords.norm() - 35.0, 1.0);
        let mesh = extract_mesh(&vol).unwrap();
        let v = enclosed_volume(&mesh).unwrap();
        assert!((v - 179503.0).abs() / 179503.0 < 0.02, "{v}");
    }

    #[test]
    fn holed_mesh_has_no_volume() {
        let mut m = icosphere(1.0, 1);
        m.triangles.pop();
        assert!(matches!(
            measure_dimensions(&m, &probes()[1..2]),
            Err(Error::OpenMesh { boundary_edges: 3 })
        ));
    }
}
