use nalgebra::Vector3;

use super::TriMesh;
use crate::error::{CoreError, Result};

/// Points closer than this to the surface are classified outside; keeps
/// voxel-boundary classification stable.
pub const SURFACE_EPSILON: f64 = 1e-7;

const WINDING_THRESHOLD: f64 = 0.5;

/// Generalized winding number of `point` with respect to the mesh
/// (van Oosterom & Strackee solid angles, summed over faces, / 4π).
pub fn winding_number(mesh: &TriMesh, point: &Vector3<f64>) -> f64 {
    let mut total = 0.0;
    for &[ia, ib, ic] in &mesh.faces {
        let a = mesh.vertices[ia] - point;
        let b = mesh.vertices[ib] - point;
        let c = mesh.vertices[ic] - point;
        let (la, lb, lc) = (a.norm(), b.norm(), c.norm());
        let num = a.dot(&b.cross(&c));
        let den = la * lb * lc + a.dot(&b) * lc + b.dot(&c) * la + c.dot(&a) * lb;
        total += 2.0 * num.atan2(den);
    }
    total / (4.0 * std::f64::consts::PI)
}

/// Strict interior test for watertight meshes, winding threshold 0.5.
pub fn point_in_mesh(mesh: &TriMesh, point: &Vector3<f64>) -> Result<bool> {
    if !mesh.is_watertight() {
        return Err(CoreError::NotWatertight);
    }
    Ok(point_in_mesh_unchecked(mesh, point))
}

/// Interior test without the watertight check. Callers must have validated
/// (or sealed) the mesh.
pub(crate) fn point_in_mesh_unchecked(mesh: &TriMesh, point: &Vector3<f64>) -> bool {
    if winding_number(mesh, point) <= WINDING_THRESHOLD {
        return false;
    }
    mesh.distance_to_surface(point) > SURFACE_EPSILON
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::shapes::{icosphere, unit_cube};

    #[test]
    fn cube_centroid_inside() {
        let cube = unit_cube();
        assert!(point_in_mesh(&cube, &Vector3::new(0.5, 0.5, 0.5)).unwrap());
    }

    #[test]
    fn cube_exterior_point_outside() {
        let cube = unit_cube();
        assert!(!point_in_mesh(&cube, &Vector3::new(2.0, 0.0, 0.0)).unwrap());
    }

    #[test]
    fn open_mesh_rejected() {
        let mut cube = unit_cube();
        cube.faces.pop();
        assert!(matches!(
            point_in_mesh(&cube, &Vector3::zeros()),
            Err(CoreError::NotWatertight)
        ));
    }

    #[test]
    fn sphere_agrees_with_analytic_oracle() {
        use rand::{Rng, SeedableRng};
        let r = 0.5;
        let sphere = icosphere(Vector3::zeros(), r, 2);
        // Longest edge of the refined icosphere bounds the discretization
        // error band.
        let mut edge = 0.0_f64;
        for f in &sphere.faces {
            for k in 0..3 {
                edge = edge
                    .max((sphere.vertices[f[k]] - sphere.vertices[f[(k + 1) % 3]]).norm());
            }
        }
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let mut tested = 0;
        for _ in 0..1000 {
            let p: Vector3<f64> = Vector3::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            );
            if (p.norm() - r).abs() <= edge {
                continue;
            }
            tested += 1;
            let want = p.norm() < r;
            assert_eq!(point_in_mesh(&sphere, &p).unwrap(), want, "point {p:?}");
        }
        assert!(tested > 500);
    }
}
