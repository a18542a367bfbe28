//! PLY surfaces: ASCII or binary in, ASCII double precision out.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use deformtrack_core::correspond::Observation;
use deformtrack_core::geom::Vec3;
use ply_rs_bw::parser::Parser;
use ply_rs_bw::ply::{
    Addable, DefaultElement, ElementDef, Encoding, Ply, Property, PropertyDef, PropertyType, ScalarType,
};
use ply_rs_bw::writer::Writer;

use crate::error::{Error, Result};

/// Vertices of a PLY file. `normals` is `None` when the file has no
/// `nx, ny, nz` properties; `faces` is empty without a face element.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PlySurface {
    pub points: Vec<Vec3>,
    pub normals: Option<Vec<Vec3>>,
    pub faces: Vec<Vec<usize>>,
}

fn scalar(p: &Property) -> Option<f64> {
    Some(match *p {
        Property::Char(v) => v as f64,
        Property::UChar(v) => v as f64,
        Property::Short(v) => v as f64,
        Property::UShort(v) => v as f64,
        Property::Int(v) => v as f64,
        Property::UInt(v) => v as f64,
        Property::Float(v) => v as f64,
        Property::Double(v) => v,
        _ => return None,
    })
}

fn index_list(p: &Property) -> Option<Vec<i64>> {
    Some(match p {
        Property::ListChar(v) => v.iter().map(|&i| i as i64).collect(),
        Property::ListUChar(v) => v.iter().map(|&i| i as i64).collect(),
        Property::ListShort(v) => v.iter().map(|&i| i as i64).collect(),
        Property::ListUShort(v) => v.iter().map(|&i| i as i64).collect(),
        Property::ListInt(v) => v.iter().map(|&i| i as i64).collect(),
        Property::ListUInt(v) => v.iter().map(|&i| i as i64).collect(),
        _ => return None,
    })
}

fn field(path: &Path, row: usize, element: &DefaultElement, name: &str) -> Result<f64> {
    let p = element
        .get(name)
        .ok_or_else(|| Error::format(path, format!("vertex {row}: missing property `{name}`")))?;
    let v = scalar(p).ok_or_else(|| Error::format(path, format!("vertex {row}: property `{name}` is not a scalar")))?;
    if !v.is_finite() {
        return Err(Error::format(path, format!("vertex {row}: property `{name}` is not finite")));
    }
    Ok(v)
}

pub fn read_ply(path: &Path) -> Result<PlySurface> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let ply = Parser::<DefaultElement>::new()
        .read_ply(&mut BufReader::new(file))
        .map_err(|e| Error::format(path, e.to_string()))?;
    let vertex_def = ply
        .header
        .elements
        .get("vertex")
        .ok_or_else(|| Error::format(path, "no `vertex` element"))?;
    for name in ["x", "y", "z"] {
        if !vertex_def.properties.contains_key(name) {
            return Err(Error::format(path, format!("vertex element lacks property `{name}`")));
        }
    }
    let has_normals = ["nx", "ny", "nz"].iter().all(|n| vertex_def.properties.contains_key(*n));
    let vertices = ply.payload.get("vertex").map(Vec::as_slice).unwrap_or_default();
    let mut points = Vec::with_capacity(vertices.len());
    let mut normals = Vec::with_capacity(if has_normals { vertices.len() } else { 0 });
    for (row, v) in vertices.iter().enumerate() {
        points.push(Vec3::new(field(path, row, v, "x")?, field(path, row, v, "y")?, field(path, row, v, "z")?));
        if has_normals {
            normals.push(Vec3::new(field(path, row, v, "nx")?, field(path, row, v, "ny")?, field(path, row, v, "nz")?));
        }
    }
    let mut faces = Vec::new();
    for (row, f) in ply.payload.get("face").map(Vec::as_slice).unwrap_or_default().iter().enumerate() {
        let list = f
            .get("vertex_indices")
            .or_else(|| f.get("vertex_index"))
            .and_then(index_list)
            .ok_or_else(|| Error::format(path, format!("face {row}: missing index list `vertex_indices`")))?;
        let face = list
            .into_iter()
            .map(|i| usize::try_from(i).ok().filter(|&i| i < points.len()))
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| Error::format(path, format!("face {row}: vertex index out of range")))?;
        faces.push(face);
    }
    Ok(PlySurface {
        points,
        normals: has_normals.then_some(normals),
        faces,
    })
}

/// Writes `x y z nx ny nz` as ASCII doubles, which round-trip exactly.
pub fn write_ply(path: &Path, points: &[Vec3], normals: &[Vec3]) -> Result<()> {
    assert_eq!(points.len(), normals.len(), "one normal per point");
    let mut ply = Ply::<DefaultElement>::new();
    ply.header.encoding = Encoding::Ascii;
    let mut vertex = ElementDef::new("vertex".to_string());
    for name in ["x", "y", "z", "nx", "ny", "nz"] {
        vertex
            .properties
            .add(PropertyDef::new(name.to_string(), PropertyType::Scalar(ScalarType::Double)));
    }
    ply.header.elements.add(vertex);
    let rows = points
        .iter()
        .zip(normals)
        .map(|(p, n)| {
            let mut e = DefaultElement::new();
            for (name, v) in ["x", "y", "z", "nx", "ny", "nz"].into_iter().zip([p.x, p.y, p.z, n.x, n.y, n.z]) {
                e.insert(name.to_string(), Property::Double(v));
            }
            e
        })
        .collect();
    ply.payload.insert("vertex".to_string(), rows);
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    Writer::new()
        .write_ply(&mut out, &mut ply)
        .map_err(|e| Error::io(path, e))?;
    out.flush().map_err(|e| Error::io(path, e))
}

/// Area-weighted vertex normals from the faces, turned towards the camera
/// at the origin. `None` when some vertex touches no non-degenerate face.
pub fn normals_from_faces(points: &[Vec3], faces: &[Vec<usize>]) -> Option<Vec<Vec3>> {
    let mut acc = vec![Vec3::zeros(); points.len()];
    for face in faces.iter().filter(|f| f.len() >= 3) {
        // fan triangulation
        for k in 1..face.len() - 1 {
            let (a, b, c) = (face[0], face[k], face[k + 1]);
            let n = (points[b] - points[a]).cross(&(points[c] - points[a]));
            for i in [a, b, c] {
                acc[i] += n;
            }
        }
    }
    acc.into_iter()
        .zip(points)
        .map(|(n, p)| {
            let len = n.norm();
            (len > 0.0).then(|| {
                let n = n / len;
                if n.dot(p) > 0.0 {
                    -n
                } else {
                    n
                }
            })
        })
        .collect()
}

/// Normals looked up at each point's pixel in `obs`; points that miss a
/// valid pixel face the camera directly.
pub fn normals_from_depth(points: &[Vec3], obs: &Observation) -> Vec<Vec3> {
    points
        .iter()
        .map(|p| {
            obs.camera
                .project(p)
                .ok()
                .and_then(|(u, v)| obs.camera.nearest_pixel(u, v))
                .and_then(|(col, row)| obs.normal(col, row))
                .unwrap_or_else(|| -p.normalize())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.ply");
        let points = vec![Vec3::new(0.1, -2.0 / 3.0, 200.0), Vec3::new(1e-17, 3.5, 199.25)];
        let normals = vec![Vec3::new(0.0, 0.6, -0.8), Vec3::new(0.0, 0.0, -1.0)];
        write_ply(&path, &points, &normals).unwrap();
        let s = read_ply(&path).unwrap();
        assert_eq!(s.points, points);
        assert_eq!(s.normals.unwrap(), normals);
        assert!(s.faces.is_empty());
    }

    #[test]
    fn binary_little_endian_with_faces_and_no_normals() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("b.ply");
        let mut bytes = b"ply\nformat binary_little_endian 1.0\nelement vertex 3\nproperty float x\nproperty float y\nproperty float z\nelement face 1\nproperty list uchar int vertex_indices\nend_header\n".to_vec();
        for v in [[0.0f32, 0.0, 100.0], [1.0, 0.0, 100.0], [0.0, 1.0, 100.0]] {
            for c in v {
                bytes.extend_from_slice(&c.to_le_bytes());
            }
        }
        bytes.push(3);
        for i in [0i32, 1, 2] {
            bytes.extend_from_slice(&i.to_le_bytes());
        }
        std::fs::write(&path, bytes).unwrap();
        let s = read_ply(&path).unwrap();
        assert_eq!(s.points.len(), 3);
        assert_eq!(s.points[1], Vec3::new(1.0, 0.0, 100.0));
        assert!(s.normals.is_none());
        assert_eq!(s.faces, vec![vec![0, 1, 2]]);
        let n = normals_from_faces(&s.points, &s.faces).unwrap();
        for v in n {
            assert!((v - Vec3::new(0.0, 0.0, -1.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn errors_name_file_and_field() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.ply");
        std::fs::write(&path, "ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\nend_header\n1 2\n").unwrap();
        let msg = read_ply(&path).unwrap_err().to_string();
        assert!(msg.contains("bad.ply") && msg.contains("`z`"), "{msg}");
        std::fs::write(&path, "not a ply").unwrap();
        assert!(read_ply(&path).unwrap_err().to_string().contains("bad.ply"));
        let idx = dir.path().join("idx.ply");
        std::fs::write(&idx, "ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\nproperty float z\nelement face 1\nproperty list uchar int vertex_indices\nend_header\n0 0 1\n3 0 1 2\n").unwrap();
        assert!(read_ply(&idx).unwrap_err().to_string().contains("face 0"));
    }

    #[test]
    fn isolated_vertex_has_no_face_normal() {
        let points = vec![Vec3::new(0.0, 0.0, 1.0), Vec3::new(1.0, 0.0, 1.0), Vec3::new(0.0, 1.0, 1.0), Vec3::new(5.0, 5.0, 1.0)];
        assert!(normals_from_faces(&points, &[vec![0, 1, 2]]).is_none());
    }
}
