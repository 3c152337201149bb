use nalgebra::Vector3;

use super::containment::point_in_mesh_unchecked;
use super::{RigidPose, TriMesh};

/// True iff any triangle pair intersects, or one mesh is fully contained in
/// the other (checked by a winding-number vertex test when the enclosing
/// candidate is closed).
pub fn meshes_collide(a: &TriMesh, pose_a: &RigidPose, b: &TriMesh, pose_b: &RigidPose) -> bool {
    let ta = a.transformed(pose_a);
    let tb = b.transformed(pose_b);
    let (amin, amax) = ta.aabb();
    let (bmin, bmax) = tb.aabb();
    if (0..3).any(|k| amax[k] < bmin[k] || bmax[k] < amin[k]) {
        return false;
    }
    let tri = |m: &TriMesh, f: usize| -> [Vector3<f64>; 3] {
        let [i, j, k] = m.faces[f];
        [m.vertices[i], m.vertices[j], m.vertices[k]]
    };
    let tri_aabbs = |m: &TriMesh| -> Vec<(Vector3<f64>, Vector3<f64>)> {
        (0..m.faces.len())
            .map(|f| {
                let t = tri(m, f);
                (t[0].inf(&t[1]).inf(&t[2]), t[0].sup(&t[1]).sup(&t[2]))
            })
            .collect()
    };
    let boxes_a = tri_aabbs(&ta);
    let boxes_b = tri_aabbs(&tb);
    for fa in 0..ta.faces.len() {
        let (lo_a, hi_a) = boxes_a[fa];
        let t1 = tri(&ta, fa);
        for fb in 0..tb.faces.len() {
            let (lo_b, hi_b) = boxes_b[fb];
            if (0..3).any(|k| hi_a[k] < lo_b[k] || hi_b[k] < lo_a[k]) {
                continue;
            }
            let t2 = tri(&tb, fb);
            if tri_tri_intersect(&t1, &t2) {
                return true;
            }
        }
    }
    // No surface crossing: containment is the only remaining overlap.
    if ta.is_watertight() && !tb.vertices.is_empty() {
        if point_in_mesh_unchecked(&ta, &tb.vertices[0]) {
            return true;
        }
    }
    if tb.is_watertight() && !ta.vertices.is_empty() {
        if point_in_mesh_unchecked(&tb, &ta.vertices[0]) {
            return true;
        }
    }
    false
}

/// Möller's interval-overlap triangle-triangle intersection test.
fn tri_tri_intersect(t1: &[Vector3<f64>; 3], t2: &[Vector3<f64>; 3]) -> bool {
    let n1 = (t1[1] - t1[0]).cross(&(t1[2] - t1[0]));
    let d1 = -n1.dot(&t1[0]);
    let dv2: Vec<f64> = t2.iter().map(|v| n1.dot(v) + d1).collect();
    if dv2.iter().all(|&d| d > 1e-12) || dv2.iter().all(|&d| d < -1e-12) {
        return false;
    }
    let n2 = (t2[1] - t2[0]).cross(&(t2[2] - t2[0]));
    let d2 = -n2.dot(&t2[0]);
    let dv1: Vec<f64> = t1.iter().map(|v| n2.dot(v) + d2).collect();
    if dv1.iter().all(|&d| d > 1e-12) || dv1.iter().all(|&d| d < -1e-12) {
        return false;
    }
    let dir = n1.cross(&n2);
    if dir.norm_squared() < 1e-24 {
        // Coplanar: project onto the dominant axis plane and run 2D tests.
        return coplanar_tri_tri(&n1, t1, t2);
    }
    let axis = dir.iamax();
    let interval = |t: &[Vector3<f64>; 3], dv: &[f64]| -> Option<(f64, f64)> {
        let p: Vec<f64> = t.iter().map(|v| v[axis]).collect();
        // Pick the vertex on one side, the other two on the other side.
        let sides: Vec<bool> = dv.iter().map(|&d| d >= 0.0).collect();
        let lone = (0..3).find(|&i| {
            sides[i] != sides[(i + 1) % 3] && sides[i] != sides[(i + 2) % 3]
        })?;
        let (i0, i1) = ((lone + 1) % 3, (lone + 2) % 3);
        let tvals = [i0, i1].map(|j| {
            let denom = dv[lone] - dv[j];
            if denom.abs() < 1e-300 {
                p[lone]
            } else {
                p[j] + (p[lone] - p[j]) * (dv[j] / (dv[j] - dv[lone]))
            }
        });
        Some((tvals[0].min(tvals[1]), tvals[0].max(tvals[1])))
    };
    let pick = |dv: &[f64]| -> Vec<f64> {
        // Zero distances count as positive for side selection.
        dv.iter().map(|&d| if d == 0.0 { 1e-30 } else { d }).collect()
    };
    let (a0, a1) = match interval(t1, &pick(&dv1)) {
        Some(iv) => iv,
        None => return coplanar_tri_tri(&n1, t1, t2),
    };
    let (b0, b1) = match interval(t2, &pick(&dv2)) {
        Some(iv) => iv,
        None => return coplanar_tri_tri(&n1, t1, t2),
    };
    a0 <= b1 && b0 <= a1
}

fn coplanar_tri_tri(n: &Vector3<f64>, t1: &[Vector3<f64>; 3], t2: &[Vector3<f64>; 3]) -> bool {
    let axis = n.iamax();
    let (i, j) = match axis {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    };
    let p1: Vec<[f64; 2]> = t1.iter().map(|v| [v[i], v[j]]).collect();
    let p2: Vec<[f64; 2]> = t2.iter().map(|v| [v[i], v[j]]).collect();
    for a in 0..3 {
        for b in 0..3 {
            if segments_intersect_2d(
                &p1[a],
                &p1[(a + 1) % 3],
                &p2[b],
                &p2[(b + 1) % 3],
            ) {
                return true;
            }
        }
    }
    point_in_tri_2d(&p1[0], &p2) || point_in_tri_2d(&p2[0], &p1)
}

fn segments_intersect_2d(a: &[f64; 2], b: &[f64; 2], c: &[f64; 2], d: &[f64; 2]) -> bool {
    let cross = |o: &[f64; 2], p: &[f64; 2], q: &[f64; 2]| {
        (p[0] - o[0]) * (q[1] - o[1]) - (p[1] - o[1]) * (q[0] - o[0])
    };
    let d1 = cross(c, d, a);
    let d2 = cross(c, d, b);
    let d3 = cross(a, b, c);
    let d4 = cross(a, b, d);
    ((d1 > 0.0) != (d2 > 0.0)) && ((d3 > 0.0) != (d4 > 0.0))
}

fn point_in_tri_2d(p: &[f64; 2], t: &[[f64; 2]]) -> bool {
    let sign = |a: &[f64; 2], b: &[f64; 2]| (p[0] - b[0]) * (a[1] - b[1]) - (a[0] - b[0]) * (p[1] - b[1]);
    let d1 = sign(&t[0], &t[1]);
    let d2 = sign(&t[1], &t[2]);
    let d3 = sign(&t[2], &t[0]);
    let has_neg = d1 < 0.0 || d2 < 0.0 || d3 < 0.0;
    let has_pos = d1 > 0.0 || d2 > 0.0 || d3 > 0.0;
    !(has_neg && has_pos)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::shapes::{box_mesh, unit_cube};

    #[test]
    fn separated_cubes_do_not_collide() {
        let cube = unit_cube();
        let far = RigidPose::from_translation(Vector3::new(1.1, 0.0, 0.0));
        assert!(!meshes_collide(
            &cube,
            &RigidPose::identity(),
            &cube,
            &far
        ));
    }

    #[test]
    fn overlapping_cubes_collide() {
        let cube = unit_cube();
        let near = RigidPose::from_translation(Vector3::new(0.995, 0.0, 0.0));
        assert!(meshes_collide(&cube, &RigidPose::identity(), &cube, &near));
    }

    #[test]
    fn full_containment_detected() {
        let big = unit_cube();
        let small = box_mesh(Vector3::repeat(0.5), Vector3::repeat(0.1));
        assert!(meshes_collide(
            &big,
            &RigidPose::identity(),
            &small,
            &RigidPose::identity()
        ));
        // Agrees with the containment oracle.
        assert!(crate::geometry::point_in_mesh(&big, &small.vertices[0]).unwrap());
    }

    #[test]
    fn touching_but_disjoint_spheres() {
        use crate::geometry::shapes::icosphere;
        let a = icosphere(Vector3::zeros(), 0.1, 1);
        let b = icosphere(Vector3::new(0.25, 0.0, 0.0), 0.1, 1);
        assert!(!meshes_collide(
            &a,
            &RigidPose::identity(),
            &b,
            &RigidPose::identity()
        ));
    }
}
