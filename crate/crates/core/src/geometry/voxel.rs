use rayon::prelude::*;

use super::containment::point_in_mesh_unchecked;
use super::TriMesh;
use crate::error::{CoreError, Result};

/// Voxel-counted intersection volume in cm³: voxel centers inside both
/// meshes, over the AABB intersection, times the voxel volume.
/// `voxel_edge` is in meters (1 mm default at call sites).
pub fn overlap_volume(a: &TriMesh, b: &TriMesh, voxel_edge: f64) -> Result<f64> {
    if voxel_edge <= 0.0 {
        return Err(CoreError::InvalidArgument("voxel_edge must be > 0".into()));
    }
    if !a.is_watertight() || !b.is_watertight() {
        return Err(CoreError::NotWatertight);
    }
    let (amin, amax) = a.aabb();
    let (bmin, bmax) = b.aabb();
    let lo = amin.sup(&bmin);
    let hi = amax.inf(&bmax);
    if (0..3).any(|k| lo[k] >= hi[k]) {
        return Ok(0.0);
    }
    let counts: [usize; 3] =
        std::array::from_fn(|k| (((hi[k] - lo[k]) / voxel_edge).ceil() as usize).max(1));
    let inside: usize = (0..counts[2])
        .into_par_iter()
        .map(|iz| {
            let z = lo[2] + (iz as f64 + 0.5) * voxel_edge;
            let mut n = 0;
            for ix in 0..counts[0] {
                let x = lo[0] + (ix as f64 + 0.5) * voxel_edge;
                for iy in 0..counts[1] {
                    let y = lo[1] + (iy as f64 + 0.5) * voxel_edge;
                    let p = nalgebra::Vector3::new(x, y, z);
                    if point_in_mesh_unchecked(a, &p) && point_in_mesh_unchecked(b, &p) {
                        n += 1;
                    }
                }
            }
            n
        })
        .sum();
    let edge_cm = voxel_edge * 100.0;
    Ok(inside as f64 * edge_cm * edge_cm * edge_cm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::shapes::box_mesh;
    use nalgebra::Vector3;

    fn cm_cube(center_x_cm: f64) -> TriMesh {
        box_mesh(
            Vector3::new(center_x_cm / 100.0, 0.0, 0.0),
            Vector3::repeat(0.01),
        )
    }

    #[test]
    fn disjoint_cubes_zero() {
        let a = cm_cube(0.0);
        let b = cm_cube(5.0);
        assert_eq!(overlap_volume(&a, &b, 0.001).unwrap(), 0.0);
    }

    #[test]
    fn offset_cubes_half_cc() {
        let a = cm_cube(0.0);
        let b = cm_cube(0.5);
        let v = overlap_volume(&a, &b, 0.001).unwrap();
        assert!((v - 0.5).abs() < 0.01, "volume {v}");
    }

    #[test]
    fn identical_cubes_one_cc() {
        let a = cm_cube(0.0);
        let v = overlap_volume(&a, &a.clone(), 0.001).unwrap();
        assert!((v - 1.0).abs() < 0.02, "volume {v}");
    }

    #[test]
    fn symmetric_in_arguments() {
        let a = cm_cube(0.0);
        let b = cm_cube(0.37);
        let ab = overlap_volume(&a, &b, 0.001).unwrap();
        let ba = overlap_volume(&b, &a, 0.001).unwrap();
        assert_eq!(ab, ba);
    }

    #[test]
    fn converges_under_refinement() {
        let a = cm_cube(0.0);
        let b = cm_cube(0.5);
        let coarse = overlap_volume(&a, &b, 0.001).unwrap();
        let fine = overlap_volume(&a, &b, 0.0005).unwrap();
        assert!((fine - coarse).abs() / 0.5 < 0.01);
    }

    #[test]
    fn open_mesh_rejected() {
        let a = cm_cube(0.0);
        let mut b = cm_cube(0.0);
        b.faces.pop();
        assert!(matches!(
            overlap_volume(&a, &b, 0.001),
            Err(CoreError::NotWatertight)
        ));
    }
}
