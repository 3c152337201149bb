//! Procedural watertight primitives used by the asset catalog and tests.

use nalgebra::Vector3;

use super::TriMesh;

/// Axis-aligned box with the given extents, centered at `center`.
pub fn box_mesh(center: Vector3<f64>, extents: Vector3<f64>) -> TriMesh {
    let h = extents / 2.0;
    let v = |sx: f64, sy: f64, sz: f64| {
        center + Vector3::new(sx * h.x, sy * h.y, sz * h.z)
    };
    let vertices = vec![
        v(-1.0, -1.0, -1.0),
        v(1.0, -1.0, -1.0),
        v(1.0, 1.0, -1.0),
        v(-1.0, 1.0, -1.0),
        v(-1.0, -1.0, 1.0),
        v(1.0, -1.0, 1.0),
        v(1.0, 1.0, 1.0),
        v(-1.0, 1.0, 1.0),
    ];
    let faces = vec![
        [0, 2, 1],
        [0, 3, 2],
        [4, 5, 6],
        [4, 6, 7],
        [0, 1, 5],
        [0, 5, 4],
        [1, 2, 6],
        [1, 6, 5],
        [2, 3, 7],
        [2, 7, 6],
        [3, 0, 4],
        [3, 4, 7],
    ];
    TriMesh { vertices, faces }
}

/// Unit-edge cube helper for tests: corner at the origin.
pub fn unit_cube() -> TriMesh {
    box_mesh(Vector3::repeat(0.5), Vector3::repeat(1.0))
}

/// Icosphere of radius `r` centered at `center`, refined `subdivisions`
/// times (0 gives the raw icosahedron, 2 gives 320 faces).
pub fn icosphere(center: Vector3<f64>, r: f64, subdivisions: u32) -> TriMesh {
    let phi = (1.0 + 5.0_f64.sqrt()) / 2.0;
    let mut vertices: Vec<Vector3<f64>> = vec![
        Vector3::new(-1.0, phi, 0.0),
        Vector3::new(1.0, phi, 0.0),
        Vector3::new(-1.0, -phi, 0.0),
        Vector3::new(1.0, -phi, 0.0),
        Vector3::new(0.0, -1.0, phi),
        Vector3::new(0.0, 1.0, phi),
        Vector3::new(0.0, -1.0, -phi),
        Vector3::new(0.0, 1.0, -phi),
        Vector3::new(phi, 0.0, -1.0),
        Vector3::new(phi, 0.0, 1.0),
        Vector3::new(-phi, 0.0, -1.0),
        Vector3::new(-phi, 0.0, 1.0),
    ]
    .into_iter()
    .map(|v| v.normalize())
    .collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut midpoints = std::collections::HashMap::new();
        let mut next_faces = Vec::with_capacity(faces.len() * 4);
        for f in &faces {
            let mut mid = [0usize; 3];
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                let key = (a.min(b), a.max(b));
                mid[k] = *midpoints.entry(key).or_insert_with(|| {
                    let m = ((vertices[a] + vertices[b]) / 2.0).normalize();
                    vertices.push(m);
                    vertices.len() - 1
                });
            }
            next_faces.push([f[0], mid[0], mid[2]]);
            next_faces.push([f[1], mid[1], mid[0]]);
            next_faces.push([f[2], mid[2], mid[1]]);
            next_faces.push([mid[0], mid[1], mid[2]]);
        }
        faces = next_faces;
    }
    for v in &mut vertices {
        *v = center + *v * r;
    }
    TriMesh { vertices, faces }
}

/// Closed cylinder along +z, base center at `base`, watertight.
pub fn cylinder(base: Vector3<f64>, radius: f64, height: f64, segments: usize) -> TriMesh {
    let n = segments.max(3);
    let mut vertices = Vec::with_capacity(2 * n + 2);
    for ring in 0..2 {
        let z = ring as f64 * height;
        for k in 0..n {
            let a = std::f64::consts::TAU * k as f64 / n as f64;
            vertices.push(base + Vector3::new(radius * a.cos(), radius * a.sin(), z));
        }
    }
    let bottom_center = vertices.len();
    vertices.push(base);
    let top_center = vertices.len();
    vertices.push(base + Vector3::new(0.0, 0.0, height));
    let mut faces = Vec::new();
    for k in 0..n {
        let kn = (k + 1) % n;
        faces.push([k, kn, n + k]);
        faces.push([kn, n + kn, n + k]);
        faces.push([bottom_center, kn, k]);
        faces.push([top_center, n + k, n + kn]);
    }
    TriMesh { vertices, faces }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn primitives_are_watertight() {
        assert!(unit_cube().is_watertight());
        assert!(icosphere(Vector3::zeros(), 1.0, 2).is_watertight());
        assert!(cylinder(Vector3::zeros(), 0.5, 1.0, 12).is_watertight());
    }

    #[test]
    fn icosphere_vertices_on_radius() {
        let s = icosphere(Vector3::new(1.0, 2.0, 3.0), 0.25, 2);
        for v in &s.vertices {
            assert!(((v - Vector3::new(1.0, 2.0, 3.0)).norm() - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn cube_surface_area() {
        assert!((unit_cube().surface_area() - 6.0).abs() < 1e-12);
    }
}
