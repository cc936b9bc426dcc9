use std::collections::HashMap;
use std::sync::OnceLock;

use rayon::prelude::*;

use super::{TriangleMesh, TsdfVolume};
use crate::error::{Error, Result};
use crate::geometry::{Point3, Vector3};

/// Components holding fewer than this fraction of all triangles are removed.
pub const MIN_COMPONENT_FRACTION: f64 = 0.01;

const CORNERS: [[usize; 3]; 8] = [
    [0, 0, 0],
    [1, 0, 0],
    [1, 1, 0],
    [0, 1, 0],
    [0, 0, 1],
    [1, 0, 1],
    [1, 1, 1],
    [0, 1, 1],
];

const EDGES: [[usize; 2]; 12] = [
    [0, 1],
    [1, 2],
    [3, 2],
    [0, 3],
    [4, 5],
    [5, 6],
    [7, 6],
    [4, 7],
    [0, 4],
    [1, 5],
    [2, 6],
    [3, 7],
];

type CaseTable = Vec<Vec<[u8; 3]>>;

fn edge_between(a: usize, b: usize) -> usize {
    EDGES
        .iter()
        .position(|e| (e[0] == a && e[1] == b) || (e[0] == b && e[1] == a))
        .expect("corners share an edge")
}

fn corner_vec(c: usize) -> Vector3 {
    Vector3::new(CORNERS[c][0] as f64, CORNERS[c][1] as f64, CORNERS[c][2] as f64)
}

/// The six cube faces, corners counter-clockwise seen from outside.
fn faces() -> Vec<[usize; 4]> {
    let mut out = Vec::new();
    for axis in 0..3 {
        for side in 0..2 {
            let mut f: Vec<usize> = (0..8).filter(|&c| CORNERS[c][axis] == side).collect();
            let center = f.iter().map(|&c| corner_vec(c)).sum::<Vector3>() / 4.0;
            let mut outward = Vector3::zeros();
            outward[axis] = if side == 0 { -1.0 } else { 1.0 };
            let u = corner_vec(f[0]) - center;
            let v = outward.cross(&u);
            f.sort_by(|&a, &b| {
                let (da, db) = (corner_vec(a) - center, corner_vec(b) - center);
                let ta = da.dot(&v).atan2(da.dot(&u));
                let tb = db.dot(&v).atan2(db.dot(&u));
                ta.total_cmp(&tb)
            });
            out.push([f[0], f[1], f[2], f[3]]);
        }
    }
    out
}

/// Surface loops for one corner configuration. On each face, every
/// contiguous run of inside corners contributes a segment from the edge
/// entering the run to the edge leaving it; ambiguous faces thus keep their
/// inside corners apart, and neighboring cells agree on shared faces.
fn case_loops(case: usize, faces: &[[usize; 4]]) -> Vec<Vec<usize>> {
    let inside = |c: usize| case & (1 << c) != 0;
    let mut next = [usize::MAX; 12];
    for f in faces {
        let n_in = f.iter().filter(|&&c| inside(c)).count();
        if n_in == 0 || n_in == 4 {
            continue;
        }
        for i in 0..4 {
            let prev = f[(i + 3) % 4];
            if !inside(f[i]) || inside(prev) {
                continue;
            }
            let mut b = i;
            while inside(f[(b + 1) % 4]) {
                b = (b + 1) % 4;
            }
            let enter = edge_between(prev, f[i]);
            let leave = edge_between(f[b], f[(b + 1) % 4]);
            next[enter] = leave;
        }
    }
    let mut seen = [false; 12];
    let mut loops = Vec::new();
    for start in 0..12 {
        if next[start] == usize::MAX || seen[start] {
            continue;
        }
        let mut lp = Vec::new();
        let mut e = start;
        while !seen[e] {
            seen[e] = true;
            lp.push(e);
            e = next[e];
        }
        debug_assert_eq!(e, start);
        loops.push(lp);
    }
    loops
}

fn build_table() -> CaseTable {
    let faces = faces();
    let fan = |loops: &[Vec<usize>], flip: bool| -> Vec<[u8; 3]> {
        let mut tris = Vec::new();
        for lp in loops {
            for i in 1..lp.len() - 1 {
                let t = [lp[0] as u8, lp[i] as u8, lp[i + 1] as u8];
                tris.push(if flip { [t[0], t[2], t[1]] } else { t });
            }
        }
        tris
    };

    // Orient so triangle normals point from inside corners toward outside ones.
    let probe = fan(&case_loops(1, &faces), false);
    let mid = |e: u8| {
        let [a, b] = EDGES[e as usize];
        (corner_vec(a) + corner_vec(b)) * 0.5
    };
    let t = probe[0];
    let (a, b, c) = (mid(t[0]), mid(t[1]), mid(t[2]));
    let flip = (b - a).cross(&(c - a)).dot(&((a + b + c) / 3.0 - corner_vec(0))) < 0.0;

    (0..256).map(|case| fan(&case_loops(case, &faces), flip)).collect()
}

fn table() -> &'static CaseTable {
    static TABLE: OnceLock<CaseTable> = OnceLock::new();
    TABLE.get_or_init(build_table)
}

/// Marching cubes on the zero level set over cells whose eight corners all
/// carry weight, followed by removal of small components.
pub fn extract_mesh(vol: &TsdfVolume) -> Result<TriangleMesh> {
    let res = vol.resolution();
    let table = table();
    let tsdf = vol.tsdf();
    let weight = vol.weights();

    let slabs: Vec<Vec<[u64; 3]>> = (0..res - 1)
        .into_par_iter()
        .map(|k| {
            let mut tris = Vec::new();
            for j in 0..res - 1 {
                for i in 0..res - 1 {
                    let mut case = 0usize;
                    let mut valid = true;
                    for (c, off) in CORNERS.iter().enumerate() {
                        let idx = vol.linear_index(i + off[0], j + off[1], k + off[2]);
                        if weight[idx] <= 0.0 {
                            valid = false;
                            break;
                        }
                        if tsdf[idx] < 0.0 {
                            case |= 1 << c;
                        }
                    }
                    if !valid || case == 0 || case == 255 {
                        continue;
                    }
                    for t in &table[case] {
                        tris.push(t.map(|e| edge_key(vol, i, j, k, e as usize)));
                    }
                }
            }
            tris
        })
        .collect();

    let mut key_to_vertex: HashMap<u64, u32> = HashMap::new();
    let mut keys: Vec<u64> = Vec::new();
    let mut triangles = Vec::new();
    for slab in &slabs {
        for t in slab {
            let tri = t.map(|key| {
                *key_to_vertex.entry(key).or_insert_with(|| {
                    keys.push(key);
                    (keys.len() - 1) as u32
                })
            });
            triangles.push(tri);
        }
    }
    if triangles.is_empty() {
        return Err(Error::EmptyMesh);
    }
    let vertices = keys.par_iter().map(|&k| edge_vertex(vol, k)).collect();
    let mesh = TriangleMesh {
        vertices,
        triangles,
        normals: None,
    };
    Ok(prune_components(mesh, MIN_COMPONENT_FRACTION))
}

/// Global key of a cell edge: lower endpoint voxel index times three plus axis.
fn edge_key(vol: &TsdfVolume, i: usize, j: usize, k: usize, edge: usize) -> u64 {
    let [a, b] = EDGES[edge];
    let (ca, cb) = (CORNERS[a], CORNERS[b]);
    let axis = (0..3).find(|&x| ca[x] != cb[x]).unwrap();
    let lo = if ca[axis] < cb[axis] { ca } else { cb };
    vol.linear_index(i + lo[0], j + lo[1], k + lo[2]) as u64 * 3 + axis as u64
}

fn edge_vertex(vol: &TsdfVolume, key: u64) -> Point3 {
    let res = vol.resolution();
    let axis = (key % 3) as usize;
    let idx = (key / 3) as usize;
    let (i, j, k) = (idx % res, (idx / res) % res, idx / (res * res));
    let mut hi = [i, j, k];
    hi[axis] += 1;
    let (v0, _) = vol.value(i, j, k);
    let (v1, _) = vol.value(hi[0], hi[1], hi[2]);
    let (v0, v1) = (v0 as f64, v1 as f64);
    let t = if v0 == v1 { 0.5 } else { (v0 / (v0 - v1)).clamp(0.0, 1.0) };
    let p0 = vol.voxel_center(i, j, k);
    let p1 = vol.voxel_center(hi[0], hi[1], hi[2]);
    p0 + (p1 - p0) * t
}

/// Removes connected components with fewer than `fraction` of all triangles.
pub fn prune_components(mut mesh: TriangleMesh, fraction: f64) -> TriangleMesh {
    let n = mesh.vertices.len();
    let mut parent: Vec<u32> = (0..n as u32).collect();
    fn find(parent: &mut [u32], mut x: u32) -> u32 {
        while parent[x as usize] != x {
            parent[x as usize] = parent[parent[x as usize] as usize];
            x = parent[x as usize];
        }
        x
    }
    for t in &mesh.triangles {
        for e in 1..3 {
            let (a, b) = (find(&mut parent, t[0]), find(&mut parent, t[e]));
            if a != b {
                parent[a.max(b) as usize] = a.min(b);
            }
        }
    }
    let roots: Vec<u32> = mesh.triangles.iter().map(|t| find(&mut parent, t[0])).collect();
    let mut sizes: HashMap<u32, usize> = HashMap::new();
    for r in &roots {
        *sizes.entry(*r).or_default() += 1;
    }
    let min = fraction * mesh.triangles.len() as f64;
    mesh.triangles = mesh
        .triangles
        .iter()
        .zip(&roots)
        .filter(|(_, r)| sizes[r] as f64 >= min)
        .map(|(t, _)| *t)
        .collect();
    mesh.compact();
    mesh
}
