//! Mesh and array I/O: OBJ, binary little-endian PLY, and raw float32
//! blobs used by the dataset format.

use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use nalgebra::Vector3;

use crate::error::{CoreError, Result};
use crate::geometry::TriMesh;

pub fn load_obj(path: &Path) -> Result<TriMesh> {
    let file = std::fs::File::open(path)?;
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line?;
        let mut it = line.split_whitespace();
        match it.next() {
            Some("v") => {
                let mut coord = [0.0; 3];
                for c in &mut coord {
                    *c = it
                        .next()
                        .and_then(|t| t.parse().ok())
                        .ok_or_else(|| CoreError::Schema("bad vertex line".into()))?;
                }
                vertices.push(Vector3::new(coord[0], coord[1], coord[2]));
            }
            Some("f") => {
                let idx: Vec<usize> = it
                    .map(|t| {
                        t.split('/')
                            .next()
                            .and_then(|s| s.parse::<usize>().ok())
                            .filter(|&i| i >= 1)
                            .map(|i| i - 1)
                            .ok_or_else(|| CoreError::Schema("bad face index".into()))
                    })
                    .collect::<Result<_>>()?;
                if idx.len() < 3 {
                    return Err(CoreError::Schema("face with < 3 vertices".into()));
                }
                // Fan-triangulate polygons.
                for k in 1..idx.len() - 1 {
                    faces.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            _ => {}
        }
    }
    TriMesh::new(vertices, faces)
}

pub fn save_obj(mesh: &TriMesh, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    for v in &mesh.vertices {
        writeln!(w, "v {} {} {}", v.x, v.y, v.z)?;
    }
    for f in &mesh.faces {
        writeln!(w, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1)?;
    }
    Ok(())
}

/// Binary little-endian PLY with float vertex positions and list-uchar-int
/// (or uint) face indices. Ascii PLY is rejected.
pub fn load_ply(path: &Path) -> Result<TriMesh> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let mut header = String::new();
    let mut line = String::new();
    loop {
        line.clear();
        let n = read_header_line(&mut r, &mut line)?;
        if n == 0 {
            return Err(CoreError::Schema("truncated PLY header".into()));
        }
        header.push_str(&line);
        if line.trim_end() == "end_header" {
            break;
        }
        if header.len() > 1 << 16 {
            return Err(CoreError::Schema("oversized PLY header".into()));
        }
    }
    if !header.starts_with("ply") {
        return Err(CoreError::Schema("not a PLY file".into()));
    }
    if !header.contains("format binary_little_endian") {
        return Err(CoreError::Schema(
            "only binary little-endian PLY supported".into(),
        ));
    }
    let mut n_verts = 0usize;
    let mut n_faces = 0usize;
    let mut vertex_props = 0usize;
    let mut in_vertex = false;
    let mut double_precision = false;
    for hl in header.lines() {
        let toks: Vec<&str> = hl.split_whitespace().collect();
        match toks.as_slice() {
            ["element", "vertex", n] => {
                n_verts = n.parse().map_err(|_| CoreError::Schema("bad vertex count".into()))?;
                in_vertex = true;
            }
            ["element", "face", n] => {
                n_faces = n.parse().map_err(|_| CoreError::Schema("bad face count".into()))?;
                in_vertex = false;
            }
            ["property", ty, _name] if in_vertex => {
                vertex_props += 1;
                if *ty == "double" {
                    double_precision = true;
                }
            }
            _ => {}
        }
    }
    if vertex_props < 3 {
        return Err(CoreError::Schema("PLY vertex element needs x y z".into()));
    }
    let mut vertices = Vec::with_capacity(n_verts);
    for _ in 0..n_verts {
        let mut coord = [0.0f64; 3];
        for c in &mut coord {
            *c = if double_precision {
                r.read_f64::<LittleEndian>()?
            } else {
                r.read_f32::<LittleEndian>()? as f64
            };
        }
        // Skip extra vertex properties.
        let extra = vertex_props - 3;
        let width = if double_precision { 8 } else { 4 };
        let mut skip = vec![0u8; extra * width];
        r.read_exact(&mut skip)?;
        vertices.push(Vector3::new(coord[0], coord[1], coord[2]));
    }
    let mut faces = Vec::with_capacity(n_faces);
    for _ in 0..n_faces {
        let count = r.read_u8()?;
        if count < 3 {
            return Err(CoreError::Schema("PLY face with < 3 vertices".into()));
        }
        let idx: Vec<usize> = (0..count)
            .map(|_| r.read_u32::<LittleEndian>().map(|i| i as usize))
            .collect::<std::io::Result<_>>()?;
        for k in 1..idx.len() - 1 {
            faces.push([idx[0], idx[k], idx[k + 1]]);
        }
    }
    TriMesh::new(vertices, faces)
}

pub fn save_ply(mesh: &TriMesh, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    write!(
        w,
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\n\
         property float x\nproperty float y\nproperty float z\n\
         element face {}\nproperty list uchar uint vertex_indices\nend_header\n",
        mesh.vertices.len(),
        mesh.faces.len()
    )?;
    for v in &mesh.vertices {
        for c in 0..3 {
            w.write_f32::<LittleEndian>(v[c] as f32)?;
        }
    }
    for f in &mesh.faces {
        w.write_u8(3)?;
        for &i in f {
            w.write_u32::<LittleEndian>(i as u32)?;
        }
    }
    Ok(())
}

/// Load a mesh by extension, requiring watertightness when asked (e.g. for
/// containment or physics use).
pub fn load_mesh(path: &Path, require_watertight: bool) -> Result<TriMesh> {
    let mesh = match path.extension().and_then(|e| e.to_str()) {
        Some("obj") => load_obj(path)?,
        Some("ply") => load_ply(path)?,
        other => {
            return Err(CoreError::Schema(format!(
                "unsupported mesh extension {other:?}"
            )))
        }
    };
    if require_watertight && !mesh.is_watertight() {
        return Err(CoreError::Schema(
            "mesh has non-manifold or boundary edges but a watertight mesh is required".into(),
        ));
    }
    Ok(mesh)
}

/// Raw little-endian float32 array blob.
pub fn write_f32_blob(path: &Path, values: &[f64]) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    for &v in values {
        w.write_f32::<LittleEndian>(v as f32)?;
    }
    Ok(())
}

pub fn read_f32_blob(path: &Path) -> Result<Vec<f64>> {
    let data = std::fs::read(path)?;
    if data.len() % 4 != 0 {
        return Err(CoreError::Schema("float32 blob length not divisible by 4".into()));
    }
    let mut r = std::io::Cursor::new(data);
    let mut out = Vec::new();
    while (r.position() as usize) < r.get_ref().len() {
        out.push(r.read_f32::<LittleEndian>()? as f64);
    }
    Ok(out)
}

fn read_header_line<R: BufRead>(r: &mut R, line: &mut String) -> Result<usize> {
    let mut byte = [0u8; 1];
    let mut n = 0;
    loop {
        match r.read(&mut byte)? {
            0 => return Ok(n),
            _ => {
                n += 1;
                line.push(byte[0] as char);
                if byte[0] == b'\n' {
                    return Ok(n);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::shapes::unit_cube;

    #[test]
    fn obj_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cube.obj");
        let cube = unit_cube();
        save_obj(&cube, &path).unwrap();
        let back = load_obj(&path).unwrap();
        assert_eq!(back.faces, cube.faces);
        for (a, b) in back.vertices.iter().zip(&cube.vertices) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn ply_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cube.ply");
        let cube = unit_cube();
        save_ply(&cube, &path).unwrap();
        let back = load_ply(&path).unwrap();
        assert_eq!(back.faces, cube.faces);
        for (a, b) in back.vertices.iter().zip(&cube.vertices) {
            assert!((a - b).norm() < 1e-6);
        }
    }

    #[test]
    fn watertight_requirement_enforced() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("open.obj");
        let mut open = unit_cube();
        open.faces.pop();
        save_obj(&open, &path).unwrap();
        assert!(load_mesh(&path, true).is_err());
        assert!(load_mesh(&path, false).is_ok());
    }

    #[test]
    fn f32_blob_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.f32");
        let vals = vec![0.0, 1.5, -2.25, 0.125];
        write_f32_blob(&path, &vals).unwrap();
        assert_eq!(read_f32_blob(&path).unwrap(), vals);
    }
}
