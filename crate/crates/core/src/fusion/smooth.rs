use rayon::prelude::*;

use super::TriangleMesh;
use crate::geometry::{Point3, Vector3};

fn neighbors(mesh: &TriangleMesh) -> Vec<Vec<u32>> {
    let mut adj = vec![Vec::new(); mesh.vertices.len()];
    for t in &mesh.triangles {
        for e in 0..3 {
            let (a, b) = (t[e], t[(e + 1) % 3]);
            adj[a as usize].push(b);
            adj[b as usize].push(a);
        }
    }
    for list in &mut adj {
        list.sort_unstable();
        list.dedup();
    }
    adj
}

/// Uniform Laplacian smoothing: `v ← v + λ (mean(neighbors) − v)`, all
/// vertices updated simultaneously each iteration. Isolated vertices stay put.
pub fn laplacian_smooth(mesh: &TriangleMesh, iterations: usize, lambda: f64) -> TriangleMesh {
    let mut out = mesh.clone();
    if iterations == 0 {
        return out;
    }
    let adj = neighbors(mesh);
    for _ in 0..iterations {
        let current = &out.vertices;
        let next: Vec<Point3> = adj
            .par_iter()
            .enumerate()
            .map(|(i, nbrs)| {
                let v = current[i];
                if nbrs.is_empty() {
                    return v;
                }
                let sum = nbrs
                    .iter()
                    .fold(Vector3::zeros(), |acc, &j| acc + current[j as usize].coords);
                let mean = sum / nbrs.len() as f64;
                v + (mean - v.coords) * lambda
            })
            .collect();
        out.vertices = next;
    }
    if out.normals.is_some() {
        out.compute_normals();
    }
    out
}
