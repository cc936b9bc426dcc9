//! PLY clouds and meshes, ASCII or binary little-endian.
//!
//! Writers emit `float` x/y/z, optional `float` nx/ny/nz, optional `uchar`
//! red/green/blue and, for meshes, a `uchar`/`int` face list. The reader
//! accepts any scalar property type and ignores properties it does not use.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::{atomic_write, missing_or_io};
use crate::error::{Error, Result};
use crate::fusion::TriangleMesh;
use crate::geometry::{Point3, PointCloud, Vector3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PlyFormat {
    Ascii,
    #[default]
    BinaryLittleEndian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            _ => return None,
        })
    }

    fn read_binary<R: Read>(self, r: &mut R) -> std::io::Result<f64> {
        Ok(match self {
            Scalar::I8 => r.read_i8()? as f64,
            Scalar::U8 => r.read_u8()? as f64,
            Scalar::I16 => r.read_i16::<LittleEndian>()? as f64,
            Scalar::U16 => r.read_u16::<LittleEndian>()? as f64,
            Scalar::I32 => r.read_i32::<LittleEndian>()? as f64,
            Scalar::U32 => r.read_u32::<LittleEndian>()? as f64,
            Scalar::F32 => r.read_f32::<LittleEndian>()? as f64,
            Scalar::F64 => r.read_f64::<LittleEndian>()?,
        })
    }
}

#[derive(Debug, Clone)]
enum Property {
    Scalar { name: String, ty: Scalar },
    List { name: String, count: Scalar, item: Scalar },
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

/// Vertex and face data read from a PLY file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PlyData {
    pub vertices: Vec<Point3>,
    pub normals: Option<Vec<Vector3>>,
    pub colors: Option<Vec<[f32; 3]>>,
    pub faces: Vec<[u32; 3]>,
}

impl PlyData {
    pub fn into_cloud(self) -> Result<PointCloud> {
        let mut cloud = PointCloud::new(self.vertices);
        if let Some(n) = self.normals {
            cloud = cloud.set_normals(n)?;
        }
        if let Some(c) = self.colors {
            cloud = cloud.set_colors(c)?;
        }
        Ok(cloud)
    }

    pub fn into_mesh(self) -> Result<TriangleMesh> {
        let mut mesh = TriangleMesh::new(self.vertices, self.faces)?;
        mesh.normals = self.normals;
        Ok(mesh)
    }
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        message: message.into(),
    }
}

pub fn read_ply(path: &Path) -> Result<PlyData> {
    let file = File::open(path).map_err(|e| missing_or_io(path, e))?;
    let mut reader = BufReader::new(file);
    let mut line_no = 0;
    let mut next_line = |reader: &mut BufReader<File>| -> Result<String> {
        let mut s = String::new();
        line_no += 1;
        let n = reader
            .read_line(&mut s)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        if n == 0 {
            return Err(parse_err(path, line_no, "unexpected end of header"));
        }
        Ok(s.trim_end().to_string())
    };
    if next_line(&mut reader)? != "ply" {
        return Err(parse_err(path, 1, "missing `ply` magic"));
    }
    let mut format = None;
    let mut elements: Vec<Element> = Vec::new();
    let mut header_lines = 1;
    loop {
        let line = next_line(&mut reader)?;
        header_lines += 1;
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match tokens.as_slice() {
            ["format", f, _] => {
                format = Some(match *f {
                    "ascii" => PlyFormat::Ascii,
                    "binary_little_endian" => PlyFormat::BinaryLittleEndian,
                    other => return Err(parse_err(path, header_lines, format!("unsupported format {other}"))),
                })
            }
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: count
                    .parse()
                    .map_err(|_| parse_err(path, header_lines, format!("bad element count {count}")))?,
                properties: Vec::new(),
            }),
            ["property", "list", count, item, name] => {
                let (Some(count), Some(item)) = (Scalar::parse(count), Scalar::parse(item)) else {
                    return Err(parse_err(path, header_lines, "unknown list property type"));
                };
                elements
                    .last_mut()
                    .ok_or_else(|| parse_err(path, header_lines, "property before element"))?
                    .properties
                    .push(Property::List {
                        name: name.to_string(),
                        count,
                        item,
                    });
            }
            ["property", ty, name] => {
                let ty = Scalar::parse(ty)
                    .ok_or_else(|| parse_err(path, header_lines, format!("unknown property type {ty}")))?;
                elements
                    .last_mut()
                    .ok_or_else(|| parse_err(path, header_lines, "property before element"))?
                    .properties
                    .push(Property::Scalar {
                        name: name.to_string(),
                        ty,
                    });
            }
            ["end_header"] => break,
            _ => return Err(parse_err(path, header_lines, format!("unrecognized header line `{line}`"))),
        }
    }
    let format = format.ok_or_else(|| parse_err(path, header_lines, "missing format line"))?;

    let mut data = PlyData::default();
    let mut ascii_lines = header_lines;
    let mut body = String::new();
    if format == PlyFormat::Ascii {
        reader
            .read_to_string(&mut body)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
    }
    let mut ascii = body.lines();
    for element in &elements {
        let vertex = element.name == "vertex";
        let face = element.name == "face";
        let find = |n: &str| {
            element
                .properties
                .iter()
                .position(|p| matches!(p, Property::Scalar { name, .. } if name == n))
        };
        let xyz = [find("x"), find("y"), find("z")];
        let nxyz = [find("nx"), find("ny"), find("nz")];
        let rgb = [find("red"), find("green"), find("blue")];
        if vertex && xyz.iter().any(Option::is_none) {
            return Err(parse_err(path, header_lines, "vertex element lacks x/y/z"));
        }
        let has_normals = vertex && nxyz.iter().all(Option::is_some);
        let has_colors = vertex && rgb.iter().all(Option::is_some);
        let mut normals = Vec::new();
        let mut colors = Vec::new();
        let mut scalars = vec![0.0; element.properties.len()];
        let mut list = Vec::new();
        for _ in 0..element.count {
            list.clear();
            match format {
                PlyFormat::Ascii => {
                    ascii_lines += 1;
                    let line = ascii
                        .next()
                        .ok_or_else(|| parse_err(path, ascii_lines, "unexpected end of file"))?;
                    let mut tokens = line.split_whitespace();
                    let mut next = || -> Result<f64> {
                        let t = tokens
                            .next()
                            .ok_or_else(|| parse_err(path, ascii_lines, "too few values"))?;
                        t.parse::<f64>()
                            .map_err(|_| parse_err(path, ascii_lines, format!("bad number `{t}`")))
                    };
                    for (i, p) in element.properties.iter().enumerate() {
                        match p {
                            Property::Scalar { .. } => scalars[i] = next()?,
                            Property::List { name, .. } => {
                                let n = next()? as usize;
                                for _ in 0..n {
                                    let v = next()?;
                                    if face && is_index_list(name) {
                                        list.push(v);
                                    }
                                }
                            }
                        }
                    }
                }
                PlyFormat::BinaryLittleEndian => {
                    let eof = |e: std::io::Error| parse_err(path, header_lines, format!("truncated body: {e}"));
                    for (i, p) in element.properties.iter().enumerate() {
                        match p {
                            Property::Scalar { ty, .. } => scalars[i] = ty.read_binary(&mut reader).map_err(eof)?,
                            Property::List { name, count, item } => {
                                let n = count.read_binary(&mut reader).map_err(eof)? as usize;
                                for _ in 0..n {
                                    let v = item.read_binary(&mut reader).map_err(eof)?;
                                    if face && is_index_list(name) {
                                        list.push(v);
                                    }
                                }
                            }
                        }
                    }
                }
            }
            if vertex {
                let g = |i: Option<usize>| scalars[i.expect("checked")];
                data.vertices.push(Point3::new(g(xyz[0]), g(xyz[1]), g(xyz[2])));
                if has_normals {
                    normals.push(Vector3::new(g(nxyz[0]), g(nxyz[1]), g(nxyz[2])));
                }
                if has_colors {
                    colors.push([0, 1, 2].map(|c| (g(rgb[c]) / 255.0) as f32));
                }
            } else if face {
                if list.len() < 3 {
                    return Err(parse_err(path, ascii_lines, "face with fewer than 3 vertices"));
                }
                // Fan-triangulate polygons.
                for k in 1..list.len() - 1 {
                    data.faces.push([list[0] as u32, list[k] as u32, list[k + 1] as u32]);
                }
            }
        }
        if has_normals {
            data.normals = Some(normals);
        }
        if has_colors {
            data.colors = Some(colors);
        }
    }
    let n = data.vertices.len() as u32;
    if data.faces.iter().flatten().any(|&i| i >= n) {
        return Err(parse_err(path, header_lines, "face index out of range"));
    }
    Ok(data)
}

fn is_index_list(name: &str) -> bool {
    name == "vertex_indices" || name == "vertex_index"
}

pub fn read_cloud(path: &Path) -> Result<PointCloud> {
    read_ply(path)?.into_cloud()
}

pub fn read_mesh(path: &Path) -> Result<TriangleMesh> {
    read_ply(path)?.into_mesh()
}

fn color_byte(c: f32) -> u8 {
    (c.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn write_ply(
    path: &Path,
    format: PlyFormat,
    points: &[Point3],
    normals: Option<&[Vector3]>,
    colors: Option<&[[f32; 3]]>,
    faces: &[[u32; 3]],
) -> Result<()> {
    atomic_write(path, |file| {
        let mut w = BufWriter::new(file);
        let fmt = match format {
            PlyFormat::Ascii => "ascii",
            PlyFormat::BinaryLittleEndian => "binary_little_endian",
        };
        writeln!(w, "ply\nformat {fmt} 1.0\nelement vertex {}", points.len())?;
        writeln!(w, "property float x\nproperty float y\nproperty float z")?;
        if normals.is_some() {
            writeln!(w, "property float nx\nproperty float ny\nproperty float nz")?;
        }
        if colors.is_some() {
            writeln!(w, "property uchar red\nproperty uchar green\nproperty uchar blue")?;
        }
        if !faces.is_empty() {
            writeln!(w, "element face {}\nproperty list uchar int vertex_indices", faces.len())?;
        }
        writeln!(w, "end_header")?;
        for (i, p) in points.iter().enumerate() {
            let mut floats = vec![p.x as f32, p.y as f32, p.z as f32];
            if let Some(n) = normals {
                floats.extend([n[i].x as f32, n[i].y as f32, n[i].z as f32]);
            }
            let rgb = colors.map(|c| c[i].map(color_byte));
            match format {
                PlyFormat::Ascii => {
                    // Exact decimal of each f32, so readers parsing as double get it back bit-exact.
                    let mut parts: Vec<String> = floats.iter().map(|&f| (f as f64).to_string()).collect();
                    if let Some(rgb) = rgb {
                        parts.extend(rgb.iter().map(|b| b.to_string()));
                    }
                    writeln!(w, "{}", parts.join(" "))?;
                }
                PlyFormat::BinaryLittleEndian => {
                    for f in floats {
                        w.write_f32::<LittleEndian>(f)?;
                    }
                    if let Some(rgb) = rgb {
                        w.write_all(&rgb)?;
                    }
                }
            }
        }
        for f in faces {
            match format {
                PlyFormat::Ascii => writeln!(w, "3 {} {} {}", f[0], f[1], f[2])?,
                PlyFormat::BinaryLittleEndian => {
                    w.write_u8(3)?;
                    for &i in f {
                        w.write_i32::<LittleEndian>(i as i32)?;
                    }
                }
            }
        }
        w.flush()
    })
}

pub fn write_cloud(path: &Path, cloud: &PointCloud, format: PlyFormat) -> Result<()> {
    write_ply(path, format, cloud.points(), cloud.normals(), cloud.colors(), &[])
}

pub fn write_mesh(path: &Path, mesh: &TriangleMesh, format: PlyFormat) -> Result<()> {
    write_ply(path, format, &mesh.vertices, mesh.normals.as_deref(), None, &mesh.triangles)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cloud(points: Vec<[f32; 3]>, with_normals: bool, with_colors: bool) -> PointCloud {
        let pts: Vec<Point3> = points.iter().map(|p| Point3::new(p[0] as f64, p[1] as f64, p[2] as f64)).collect();
        let n = pts.len();
        let mut c = PointCloud::new(pts);
        if with_normals {
            c = c.set_normals(vec![Vector3::new(0.0, 0.6f32 as f64, 0.8f32 as f64); n]).unwrap();
        }
        if with_colors {
            c = c.set_colors((0..n).map(|i| [(i % 256) as f32 / 255.0, 0.0, 1.0]).collect()).unwrap();
        }
        c
    }

    proptest! {
        #[test]
        fn binary_cloud_round_trip_is_exact(
            pts in prop::collection::vec(prop::array::uniform3(-1e4f32..1e4), 1..200),
            normals: bool,
            colors: bool,
        ) {
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("c.ply");
            let c = cloud(pts, normals, colors);
            write_cloud(&path, &c, PlyFormat::BinaryLittleEndian).unwrap();
            prop_assert_eq!(read_cloud(&path).unwrap(), c);
        }

        #[test]
        fn ascii_cloud_round_trip_within_tolerance(
            pts in prop::collection::vec(prop::array::uniform3(-1e3f32..1e3), 1..200),
        ) {
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("c.ply");
            let c = cloud(pts, true, true);
            write_cloud(&path, &c, PlyFormat::Ascii).unwrap();
            let back = read_cloud(&path).unwrap();
            prop_assert_eq!(back.colors(), c.colors());
            for (a, b) in back.points().iter().zip(c.points()) {
                prop_assert!((a - b).norm() < 1e-6);
            }
        }
    }

    #[test]
    fn mesh_round_trips_in_both_formats() {
        let mesh = TriangleMesh::new(
            vec![
                Point3::new(0.0, 0.0, 0.0),
                Point3::new(1.0, 0.0, 0.0),
                Point3::new(0.0, 1.0, 0.0),
                Point3::new(0.0, 0.0, 1.0),
            ],
            vec![[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]],
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        for format in [PlyFormat::Ascii, PlyFormat::BinaryLittleEndian] {
            let path = dir.path().join("m.ply");
            write_mesh(&path, &mesh, format).unwrap();
            assert_eq!(read_mesh(&path).unwrap(), mesh);
        }
    }

    #[test]
    fn foreign_layouts_are_read() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("q.ply");
        std::fs::write(
            &path,
            "ply\nformat ascii 1.0\ncomment quad\nelement vertex 4\nproperty double x\nproperty double y\n\
             property double z\nproperty float confidence\nelement face 1\nproperty list uchar uint vertex_index\n\
             end_header\n0 0 0 1\n1 0 0 1\n1 1 0 1\n0 1 0 1\n4 0 1 2 3\n",
        )
        .unwrap();
        let data = read_ply(&path).unwrap();
        assert_eq!(data.vertices.len(), 4);
        assert_eq!(data.faces, vec![[0, 1, 2], [0, 2, 3]]);
        assert!(data.normals.is_none() && data.colors.is_none());
    }

    #[test]
    fn malformed_files_report_location() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.ply");
        std::fs::write(&path, "ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nproperty float y\nproperty float z\nend_header\n0 0 0\n1 oops 0\n").unwrap();
        match read_ply(&path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 9),
            other => panic!("unexpected {other:?}"),
        }
        std::fs::write(&path, "ply\nformat binary_big_endian 1.0\nend_header\n").unwrap();
        assert!(matches!(read_ply(&path), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(read_ply(&dir.path().join("none.ply")), Err(Error::MissingInput(_))));
    }
}
