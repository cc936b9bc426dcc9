use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::geometry::{Point3, Vector3};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<Point3>,
    pub triangles: Vec<[u32; 3]>,
    pub normals: Option<Vec<Vector3>>,
}

/// Edge-incidence summary used for closedness and topology checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EdgeStats {
    pub edges: usize,
    /// Edges used by exactly one triangle.
    pub boundary: usize,
    /// Edges used by more than two triangles.
    pub non_manifold: usize,
}

impl TriangleMesh {
    pub fn new(vertices: Vec<Point3>, triangles: Vec<[u32; 3]>) -> Result<Self> {
        let mesh = Self {
            vertices,
            triangles,
            normals: None,
        };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.vertices.len() as u32;
        for (t, tri) in self.triangles.iter().enumerate() {
            if tri.iter().any(|&i| i >= n) {
                return Err(Error::invalid("triangles", format!("triangle {t} indexes past the vertex list")));
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(Error::invalid("triangles", format!("triangle {t} repeats a vertex")));
            }
        }
        if let Some(ns) = &self.normals {
            if ns.len() != self.vertices.len() {
                return Err(Error::invalid("normals", "one normal per vertex required"));
            }
        }
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    fn edge_counts(&self) -> HashMap<(u32, u32), u32> {
        let mut counts = HashMap::with_capacity(self.triangles.len() * 3 / 2);
        for t in &self.triangles {
            for e in 0..3 {
                let (a, b) = (t[e], t[(e + 1) % 3]);
                *counts.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        counts
    }

    pub fn edge_stats(&self) -> EdgeStats {
        let counts = self.edge_counts();
        EdgeStats {
            edges: counts.len(),
            boundary: counts.values().filter(|&&c| c == 1).count(),
            non_manifold: counts.values().filter(|&&c| c > 2).count(),
        }
    }

    /// Every edge is shared by exactly two triangles.
    pub fn is_closed(&self) -> bool {
        !self.is_empty() && self.edge_counts().values().all(|&c| c == 2)
    }

    /// `V − E + F` over referenced vertices.
    pub fn euler_characteristic(&self) -> i64 {
        let mut used = vec![false; self.vertices.len()];
        for t in &self.triangles {
            for &i in t {
                used[i as usize] = true;
            }
        }
        let v = used.iter().filter(|&&u| u).count() as i64;
        v - self.edge_counts().len() as i64 + self.triangles.len() as i64
    }

    /// Area-weighted vertex normals.
    pub fn compute_normals(&mut self) {
        let mut acc = vec![Vector3::zeros(); self.vertices.len()];
        for t in &self.triangles {
            let [a, b, c] = t.map(|i| self.vertices[i as usize]);
            let n = (b - a).cross(&(c - a));
            for &i in t {
                acc[i as usize] += n;
            }
        }
        self.normals = Some(
            acc.into_iter()
                .map(|n| {
                    let len = n.norm();
                    if len > 0.0 { n / len } else { Vector3::z() }
                })
                .collect(),
        );
    }

    /// Drops vertices no triangle references, keeping relative order.
    pub fn compact(&mut self) {
        let mut remap = vec![u32::MAX; self.vertices.len()];
        for t in &self.triangles {
            for &i in t {
                remap[i as usize] = 0;
            }
        }
        let mut next = 0u32;
        let mut vertices = Vec::with_capacity(self.vertices.len());
        let mut normals = self.normals.as_ref().map(|_| Vec::new());
        for (i, r) in remap.iter_mut().enumerate() {
            if *r == 0 {
                *r = next;
                next += 1;
                vertices.push(self.vertices[i]);
                if let (Some(out), Some(src)) = (normals.as_mut(), self.normals.as_ref()) {
                    out.push(src[i]);
                }
            }
        }
        for t in &mut self.triangles {
            for i in t.iter_mut() {
                *i = remap[*i as usize];
            }
        }
        self.vertices = vertices;
        self.normals = normals;
    }

    /// Axis-aligned bounds, `None` for a mesh without vertices.
    pub fn bounds(&self) -> Option<(Point3, Point3)> {
        let first = *self.vertices.first()?;
        Some(self.vertices.iter().fold((first, first), |(lo, hi), p| {
            (lo.inf(p), hi.sup(p))
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn tetrahedron() -> TriangleMesh {
        TriangleMesh::new(
            vec![
                Point3::new(0.0, 0.0, 0.0),
                Point3::new(1.0, 0.0, 0.0),
                Point3::new(0.0, 1.0, 0.0),
                Point3::new(0.0, 0.0, 1.0),
            ],
            vec![[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]],
        )
        .unwrap()
    }

    #[test]
    fn tetrahedron_is_closed_sphere_topology() {
        let t = tetrahedron();
        assert!(t.is_closed());
        assert_eq!(t.euler_characteristic(), 2);
        assert_eq!(t.edge_stats().boundary, 0);
    }

    #[test]
    fn removing_a_face_opens_it() {
        let mut t = tetrahedron();
        t.triangles.pop();
        assert!(!t.is_closed());
        assert_eq!(t.edge_stats().boundary, 3);
    }

    #[test]
    fn invalid_triangles_are_rejected() {
        assert!(TriangleMesh::new(vec![Point3::origin(); 3], vec![[0, 0, 1]]).is_err());
        assert!(TriangleMesh::new(vec![Point3::origin(); 3], vec![[0, 1, 3]]).is_err());
    }

    #[test]
    fn compact_drops_unused() {
        let mut m = tetrahedron();
        m.vertices.push(Point3::new(9.0, 9.0, 9.0));
        m.vertices.insert(0, Point3::new(7.0, 7.0, 7.0));
        for t in &mut m.triangles {
            for i in t.iter_mut() {
                *i += 1;
            }
        }
        m.compact();
        assert_eq!(m, tetrahedron());
    }
}
