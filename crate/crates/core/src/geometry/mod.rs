//! Pure geometric kernels: surface sampling, nearest-neighbor distance
//! fields, winding-number containment, voxel overlap volume, and collision
//! predicates. Everything here is a pure function over immutable inputs.

mod collide;
mod containment;
mod distance;
mod grid;
mod sampling;
pub mod shapes;
mod voxel;

pub use collide::meshes_collide;
pub use containment::{point_in_mesh, winding_number};
pub use distance::nearest_distances;
pub use grid::MeshDistanceIndex;
pub use sampling::{farthest_point_sample, sample_surface};
pub use voxel::overlap_volume;

use nalgebra::{UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// A set of 3D points in meters, with optional aligned scalar channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointCloud {
    pub points: Vec<Vector3<f64>>,
    /// Named per-point scalar channels, each the same length as `points`.
    #[serde(default)]
    pub channels: Vec<(String, Vec<f64>)>,
}

impl PointCloud {
    pub fn new(points: Vec<Vector3<f64>>) -> Result<Self> {
        if points.iter().any(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(CoreError::NonFinite("point cloud".into()));
        }
        Ok(Self { points, channels: Vec::new() })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn with_channel(mut self, name: &str, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.points.len() {
            return Err(CoreError::ShapeMismatch(format!(
                "channel {name}: {} values for {} points",
                values.len(),
                self.points.len()
            )));
        }
        self.channels.push((name.to_string(), values));
        Ok(self)
    }

    pub fn transformed(&self, pose: &RigidPose) -> Self {
        Self {
            points: self.points.iter().map(|p| pose.apply(p)).collect(),
            channels: self.channels.clone(),
        }
    }
}

/// Triangle mesh in meters. Faces index into `vertices`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriMesh {
    pub vertices: Vec<Vector3<f64>>,
    pub faces: Vec<[usize; 3]>,
}

impl TriMesh {
    pub fn new(vertices: Vec<Vector3<f64>>, faces: Vec<[usize; 3]>) -> Result<Self> {
        let n = vertices.len();
        if faces.iter().any(|f| f.iter().any(|&i| i >= n)) {
            return Err(CoreError::Schema("face index out of range".into()));
        }
        Ok(Self { vertices, faces })
    }

    /// Every edge shared by exactly two faces.
    pub fn is_watertight(&self) -> bool {
        if self.faces.is_empty() {
            return false;
        }
        let mut counts = std::collections::HashMap::new();
        for f in &self.faces {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                let key = (a.min(b), a.max(b));
                *counts.entry(key).or_insert(0u32) += 1;
            }
        }
        counts.values().all(|&c| c == 2)
    }

    /// Boundary edges (appearing on exactly one face), as directed edges in
    /// face winding order.
    pub fn boundary_edges(&self) -> Vec<(usize, usize)> {
        let mut counts: std::collections::HashMap<(usize, usize), (u32, (usize, usize))> =
            std::collections::HashMap::new();
        for f in &self.faces {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                let key = (a.min(b), a.max(b));
                counts.entry(key).or_insert((0, (a, b))).0 += 1;
            }
        }
        counts
            .values()
            .filter(|(c, _)| *c == 1)
            .map(|(_, e)| *e)
            .collect()
    }

    /// Close a mesh with a single boundary loop by fanning the loop from its
    /// first vertex. Used to seal the open wrist of a hand mesh before
    /// containment or voxel queries. Errors if the boundary is not a single
    /// loop.
    pub fn sealed(&self) -> Result<Self> {
        if self.is_watertight() {
            return Ok(self.clone());
        }
        let edges = self.boundary_edges();
        if edges.is_empty() {
            return Err(CoreError::NotWatertight);
        }
        // Chain the directed boundary edges into one loop.
        let mut next = std::collections::HashMap::new();
        for &(a, b) in &edges {
            if next.insert(a, b).is_some() {
                return Err(CoreError::NotWatertight);
            }
        }
        let start = edges[0].0;
        let mut loop_verts = vec![start];
        let mut cur = start;
        loop {
            cur = *next.get(&cur).ok_or(CoreError::NotWatertight)?;
            if cur == start {
                break;
            }
            loop_verts.push(cur);
            if loop_verts.len() > edges.len() {
                return Err(CoreError::NotWatertight);
            }
        }
        if loop_verts.len() != edges.len() {
            return Err(CoreError::NotWatertight);
        }
        let mut out = self.clone();
        // Boundary edges run opposite to interior winding, so the fan
        // (start, v[i+1], v[i]) keeps outward orientation.
        for i in 1..loop_verts.len() - 1 {
            out.faces.push([start, loop_verts[i + 1], loop_verts[i]]);
        }
        if !out.is_watertight() {
            return Err(CoreError::NotWatertight);
        }
        Ok(out)
    }

    pub fn face_area(&self, f: usize) -> f64 {
        let [a, b, c] = self.faces[f];
        let (a, b, c) = (self.vertices[a], self.vertices[b], self.vertices[c]);
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    pub fn surface_area(&self) -> f64 {
        (0..self.faces.len()).map(|f| self.face_area(f)).sum()
    }

    pub fn aabb(&self) -> (Vector3<f64>, Vector3<f64>) {
        let mut min = Vector3::repeat(f64::INFINITY);
        let mut max = Vector3::repeat(f64::NEG_INFINITY);
        for v in &self.vertices {
            min = min.inf(v);
            max = max.sup(v);
        }
        (min, max)
    }

    pub fn centroid(&self) -> Vector3<f64> {
        let n = self.vertices.len().max(1) as f64;
        self.vertices.iter().sum::<Vector3<f64>>() / n
    }

    pub fn transformed(&self, pose: &RigidPose) -> Self {
        Self {
            vertices: self.vertices.iter().map(|v| pose.apply(v)).collect(),
            faces: self.faces.clone(),
        }
    }

    /// Minimum distance from `p` to the mesh surface.
    pub fn distance_to_surface(&self, p: &Vector3<f64>) -> f64 {
        self.faces
            .iter()
            .map(|&[a, b, c]| {
                point_triangle_distance(p, &self.vertices[a], &self.vertices[b], &self.vertices[c])
            })
            .fold(f64::INFINITY, f64::min)
    }
}

/// Rigid transform: rotation then translation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidPose {
    pub rotation: UnitQuaternion<f64>,
    pub translation: Vector3<f64>,
}

impl RigidPose {
    pub fn identity() -> Self {
        Self { rotation: UnitQuaternion::identity(), translation: Vector3::zeros() }
    }

    pub fn new(rotation: UnitQuaternion<f64>, translation: Vector3<f64>) -> Self {
        Self { rotation, translation }
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Self { rotation: UnitQuaternion::identity(), translation }
    }

    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn inverse(&self) -> Self {
        let inv_rot = self.rotation.inverse();
        Self { rotation: inv_rot, translation: -(inv_rot * self.translation) }
    }

    /// self ∘ other: apply `other` first, then `self`.
    pub fn compose(&self, other: &RigidPose) -> Self {
        Self {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }
}

/// Closest distance from a point to a triangle (Ericson, Real-Time
/// Collision Detection §5.1.5).
pub fn point_triangle_distance(
    p: &Vector3<f64>,
    a: &Vector3<f64>,
    b: &Vector3<f64>,
    c: &Vector3<f64>,
) -> f64 {
    (closest_point_on_triangle(p, a, b, c) - p).norm()
}

pub fn closest_point_on_triangle(
    p: &Vector3<f64>,
    a: &Vector3<f64>,
    b: &Vector3<f64>,
    c: &Vector3<f64>,
) -> Vector3<f64> {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return *a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return *b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return a + ab * v;
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return a + ac * w;
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return b + (c - b) * w;
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    a + ab * v + ac * w
}
