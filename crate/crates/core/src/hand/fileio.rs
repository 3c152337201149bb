//! Self-describing hand model container: magic, JSON header, little-endian
//! float32 payload. See `docs/hand-model-format.md` for the layout and the
//! note on converting a publicly distributed hand asset into it.

use std::io::{BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::{HandModel, NUM_JOINTS, NUM_VERTICES};
use crate::error::{CoreError, Result};

const MAGIC: &[u8; 8] = b"HANDMDL1";

#[derive(Serialize, Deserialize)]
struct Header {
    vertex_count: usize,
    face_count: usize,
    joint_count: usize,
    shape_count: usize,
    pose_count: usize,
    faces: Vec<[usize; 3]>,
    parents: Vec<i32>,
}

pub fn save_hand_model(model: &HandModel, path: &Path) -> Result<()> {
    model.validate()?;
    let header = Header {
        vertex_count: model.template_vertices.len(),
        face_count: model.faces.len(),
        joint_count: NUM_JOINTS,
        shape_count: model.shape_basis.len(),
        pose_count: model.pose_basis.len(),
        faces: model.faces.clone(),
        parents: model.parents.to_vec(),
    };
    let header_bytes = serde_json::to_vec(&header)?;
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_u64::<LittleEndian>(header_bytes.len() as u64)?;
    w.write_all(&header_bytes)?;
    let mut put_vec3s = |vs: &[Vector3<f64>]| -> Result<()> {
        for v in vs {
            for k in 0..3 {
                w.write_f32::<LittleEndian>(v[k] as f32)?;
            }
        }
        Ok(())
    };
    put_vec3s(&model.template_vertices)?;
    for field in &model.shape_basis {
        put_vec3s(field)?;
    }
    for field in &model.pose_basis {
        put_vec3s(field)?;
    }
    for row in &model.joint_regressor {
        for &x in row {
            w.write_f32::<LittleEndian>(x as f32)?;
        }
    }
    for row in &model.skinning_weights {
        for &x in row {
            w.write_f32::<LittleEndian>(x as f32)?;
        }
    }
    Ok(())
}

pub fn load_hand_model(path: &Path) -> Result<HandModel> {
    let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(CoreError::Schema("not a hand model container".into()));
    }
    let header_len = r.read_u64::<LittleEndian>()? as usize;
    if header_len > 1 << 24 {
        return Err(CoreError::Schema("oversized header".into()));
    }
    let mut header_bytes = vec![0u8; header_len];
    r.read_exact(&mut header_bytes)?;
    let header: Header = serde_json::from_slice(&header_bytes)?;
    if header.vertex_count != NUM_VERTICES {
        return Err(CoreError::Schema(format!(
            "vertex count mismatch: {} != {NUM_VERTICES}",
            header.vertex_count
        )));
    }
    if header.parents.len() != NUM_JOINTS || header.joint_count != NUM_JOINTS {
        return Err(CoreError::Schema("joint count mismatch".into()));
    }
    let mut get_vec3s = |n: usize| -> Result<Vec<Vector3<f64>>> {
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let x = r.read_f32::<LittleEndian>()? as f64;
            let y = r.read_f32::<LittleEndian>()? as f64;
            let z = r.read_f32::<LittleEndian>()? as f64;
            out.push(Vector3::new(x, y, z));
        }
        Ok(out)
    };
    let template_vertices = get_vec3s(header.vertex_count)?;
    let mut shape_basis = Vec::with_capacity(header.shape_count);
    for _ in 0..header.shape_count {
        shape_basis.push(get_vec3s(header.vertex_count)?);
    }
    let mut pose_basis = Vec::with_capacity(header.pose_count);
    for _ in 0..header.pose_count {
        pose_basis.push(get_vec3s(header.vertex_count)?);
    }
    let mut joint_regressor = Vec::with_capacity(NUM_JOINTS);
    for _ in 0..NUM_JOINTS {
        let mut row = Vec::with_capacity(header.vertex_count);
        for _ in 0..header.vertex_count {
            row.push(r.read_f32::<LittleEndian>()? as f64);
        }
        joint_regressor.push(row);
    }
    let mut skinning_weights = Vec::with_capacity(header.vertex_count);
    for _ in 0..header.vertex_count {
        let mut row = [0.0f64; NUM_JOINTS];
        for x in &mut row {
            *x = r.read_f32::<LittleEndian>()? as f64;
        }
        // Validate at float32 fidelity, then renormalize exactly.
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > 1e-4 {
            return Err(CoreError::Schema(format!(
                "unnormalized skinning weights (row sum {sum})"
            )));
        }
        for x in &mut row {
            *x /= sum;
        }
        skinning_weights.push(row);
    }
    let model = HandModel {
        template_vertices,
        faces: header.faces,
        shape_basis,
        pose_basis,
        joint_regressor,
        skinning_weights,
        parents: header
            .parents
            .try_into()
            .map_err(|_| CoreError::Schema("parent array size".into()))?,
    };
    model.validate()?;
    Ok(model)
}
