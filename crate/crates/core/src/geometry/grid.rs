//! Uniform-grid spatial index for point-vs-mesh distance queries.
//!
//! Each cell stores the indices of every triangle whose inflated bounding
//! box overlaps it, so a query with radius at most [`MeshDistanceIndex::PAD`]
//! only inspects the triangles binned to the query point's own cell and is
//! still exact. Larger radii fall back to a full scan.

use nalgebra::Vector3;

use super::{closest_point_on_triangle, TriMesh};

pub struct MeshDistanceIndex {
    tris: Vec<[Vector3<f64>; 3]>,
    normals: Vec<Vector3<f64>>,
    origin: Vector3<f64>,
    dims: [usize; 3],
    cells: Vec<Vec<u32>>,
}

impl MeshDistanceIndex {
    /// Queries with radius at most this are exact; larger radii scan all
    /// triangles.
    pub const PAD: f64 = 0.012;
    const CELL: f64 = 0.008;

    pub fn new(mesh: &TriMesh) -> Self {
        let tris: Vec<[Vector3<f64>; 3]> = mesh
            .faces
            .iter()
            .map(|&[a, b, c]| [mesh.vertices[a], mesh.vertices[b], mesh.vertices[c]])
            .collect();
        let normals = tris
            .iter()
            .map(|[a, b, c]| {
                let n = (b - a).cross(&(c - a));
                let len = n.norm();
                if len > 1e-12 { n / len } else { Vector3::zeros() }
            })
            .collect();

        let mut lo = Vector3::repeat(f64::INFINITY);
        let mut hi = Vector3::repeat(f64::NEG_INFINITY);
        for t in &tris {
            for v in t {
                lo = lo.inf(v);
                hi = hi.sup(v);
            }
        }
        let origin = lo - Vector3::repeat(Self::PAD + Self::CELL);
        let extent = hi + Vector3::repeat(Self::PAD + Self::CELL) - origin;
        let dims = [
            (extent.x / Self::CELL).ceil().max(1.0) as usize,
            (extent.y / Self::CELL).ceil().max(1.0) as usize,
            (extent.z / Self::CELL).ceil().max(1.0) as usize,
        ];
        let mut cells = vec![Vec::new(); dims[0] * dims[1] * dims[2]];
        for (i, t) in tris.iter().enumerate() {
            let tlo = t[0].inf(&t[1]).inf(&t[2]) - Vector3::repeat(Self::PAD);
            let thi = t[0].sup(&t[1]).sup(&t[2]) + Vector3::repeat(Self::PAD);
            let c0 = Self::clamp_cell(&origin, dims, &tlo);
            let c1 = Self::clamp_cell(&origin, dims, &thi);
            for x in c0[0]..=c1[0] {
                for y in c0[1]..=c1[1] {
                    for z in c0[2]..=c1[2] {
                        cells[(x * dims[1] + y) * dims[2] + z].push(i as u32);
                    }
                }
            }
        }
        Self { tris, normals, origin, dims, cells }
    }

    fn clamp_cell(origin: &Vector3<f64>, dims: [usize; 3], p: &Vector3<f64>) -> [usize; 3] {
        let mut c = [0usize; 3];
        for k in 0..3 {
            let f = ((p[k] - origin[k]) / Self::CELL).floor();
            c[k] = (f.max(0.0) as usize).min(dims[k] - 1);
        }
        c
    }

    fn cell_tris(&self, p: &Vector3<f64>) -> Option<&[u32]> {
        for k in 0..3 {
            let f = (p[k] - self.origin[k]) / Self::CELL;
            if f < 0.0 || f >= self.dims[k] as f64 {
                return None;
            }
        }
        let c = Self::clamp_cell(&self.origin, self.dims, p);
        Some(&self.cells[(c[0] * self.dims[1] + c[1]) * self.dims[2] + c[2]])
    }

    fn best_of<'a>(
        &self,
        p: &Vector3<f64>,
        radius: f64,
        tris: impl Iterator<Item = u32> + 'a,
    ) -> Option<(Vector3<f64>, usize)> {
        let mut best: Option<(f64, Vector3<f64>, usize)> = None;
        for i in tris {
            let [a, b, c] = &self.tris[i as usize];
            let q = closest_point_on_triangle(p, a, b, c);
            let d2 = (q - p).norm_squared();
            if d2 <= radius * radius && best.map_or(true, |(bd, _, _)| d2 < bd) {
                best = Some((d2, q, i as usize));
            }
        }
        best.map(|(_, q, i)| (q, i))
    }

    /// Closest surface point within `radius` of `p` and the index of the
    /// triangle it lies on, if any.
    pub fn closest_within(&self, p: &Vector3<f64>, radius: f64) -> Option<(Vector3<f64>, usize)> {
        if radius <= Self::PAD {
            let tris = self.cell_tris(p)?;
            self.best_of(p, radius, tris.iter().copied())
        } else {
            self.best_of(p, radius, 0..self.tris.len() as u32)
        }
    }

    /// Distance to the surface when at most `radius`, else None.
    pub fn distance_within(&self, p: &Vector3<f64>, radius: f64) -> Option<f64> {
        self.closest_within(p, radius).map(|(q, _)| (q - p).norm())
    }

    /// Outward unit normal of triangle `i`.
    pub fn face_normal(&self, i: usize) -> Vector3<f64> {
        self.normals[i]
    }
}
