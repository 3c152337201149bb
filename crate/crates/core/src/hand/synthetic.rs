//! License-free procedural stand-in for the real hand asset: identical
//! topology counts (778 vertices, 1538 faces, 16 joints, open wrist) built
//! as a tapered tube with five kinematic chains.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{HandModel, NUM_JOINTS, NUM_SHAPE, NUM_VERTICES};

const LENGTH: f64 = 0.18;
const BASE_RADIUS: f64 = 0.035;
const TIP_RADIUS: f64 = 0.007;
/// Ellipse factor flattening the tube into a palm-like cross-section.
const FLATTEN: f64 = 0.6;

/// Ring vertex counts from wrist (open boundary) to tip; an apex vertex
/// closes the far end. 16 + 46*16 + 12 + 8 + 5 + 1 = 778, and the disk
/// topology forces exactly 2*778 - 2 - 16 = 1538 faces.
fn ring_sizes() -> Vec<usize> {
    let mut sizes = vec![16; 47];
    sizes.extend_from_slice(&[12, 8, 5]);
    sizes
}

fn radius_at(z: f64) -> f64 {
    BASE_RADIUS + (TIP_RADIUS - BASE_RADIUS) * (z / LENGTH)
}

pub fn synthetic_hand_model(seed: u64) -> HandModel {
    let sizes = ring_sizes();
    let stations = sizes.len(); // rings; apex sits one station beyond
    let mut vertices = Vec::with_capacity(NUM_VERTICES);
    let mut ring_base = Vec::with_capacity(stations);
    for (i, &n) in sizes.iter().enumerate() {
        let z = LENGTH * i as f64 / stations as f64;
        let r = radius_at(z);
        ring_base.push(vertices.len());
        for k in 0..n {
            let a = std::f64::consts::TAU * k as f64 / n as f64;
            vertices.push(Vector3::new(r * a.cos(), FLATTEN * r * a.sin(), z));
        }
    }
    let apex = vertices.len();
    vertices.push(Vector3::new(0.0, 0.0, LENGTH));
    debug_assert_eq!(vertices.len(), NUM_VERTICES);

    let mut faces = Vec::with_capacity(2 * NUM_VERTICES);
    for w in 0..stations - 1 {
        zipper(&mut faces, ring_base[w], sizes[w], ring_base[w + 1], sizes[w + 1]);
    }
    let last = stations - 1;
    for k in 0..sizes[last] {
        faces.push([
            ring_base[last] + k,
            ring_base[last] + (k + 1) % sizes[last],
            apex,
        ]);
    }
    debug_assert_eq!(faces.len(), super::NUM_FACES);

    // Kinematic tree: wrist root plus five 3-joint chains, MANO layout.
    let parents: [i32; NUM_JOINTS] =
        [-1, 0, 1, 2, 0, 4, 5, 0, 7, 8, 0, 10, 11, 0, 13, 14];
    let mut joint_sites = [Vector3::zeros(); NUM_JOINTS];
    joint_sites[0] = Vector3::new(0.0, 0.0, 0.01);
    for chain in 0..5 {
        let phi = std::f64::consts::TAU * chain as f64 / 5.0 + 0.3;
        for link in 0..3 {
            let z = 0.075 + 0.04 * link as f64;
            let r = 0.5 * radius_at(z);
            joint_sites[1 + chain * 3 + link] =
                Vector3::new(r * phi.cos(), FLATTEN * r * phi.sin(), z);
        }
    }

    // Joint regressor: gaussian vertex weights around each joint site.
    let sigma_reg = 0.015;
    let joint_regressor: Vec<Vec<f64>> = (0..NUM_JOINTS)
        .map(|j| {
            let mut row: Vec<f64> = vertices
                .iter()
                .map(|v| (-(v - joint_sites[j]).norm_squared() / (sigma_reg * sigma_reg)).exp())
                .collect();
            let sum: f64 = row.iter().sum();
            for w in &mut row {
                *w /= sum;
            }
            row
        })
        .collect();
    let regressed: Vec<Vector3<f64>> = (0..NUM_JOINTS)
        .map(|j| {
            joint_regressor[j]
                .iter()
                .zip(&vertices)
                .map(|(&w, v)| v * w)
                .sum()
        })
        .collect();

    // Skinning: gaussian falloff to the four nearest joints.
    let sigma_skin = 0.025;
    let skinning_weights: Vec<[f64; NUM_JOINTS]> = vertices
        .iter()
        .map(|v| {
            let mut w: [f64; NUM_JOINTS] = std::array::from_fn(|j| {
                (-(v - regressed[j]).norm_squared() / (sigma_skin * sigma_skin)).exp()
            });
            let mut order: Vec<usize> = (0..NUM_JOINTS).collect();
            order.sort_by(|&a, &b| w[b].partial_cmp(&w[a]).unwrap());
            for &j in &order[4..] {
                w[j] = 0.0;
            }
            let sum: f64 = w.iter().sum();
            for x in &mut w {
                *x /= sum;
            }
            w
        })
        .collect();

    // Ten smooth seeded displacement fields, ~2 mm amplitude.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape_basis: Vec<Vec<Vector3<f64>>> = (0..NUM_SHAPE)
        .map(|_| {
            let freq: Vector3<f64> =
                Vector3::new(rng.gen_range(5.0..30.0), rng.gen_range(5.0..30.0), rng.gen_range(5.0..30.0));
            let phase: Vector3<f64> = Vector3::new(
                rng.gen_range(0.0..std::f64::consts::TAU),
                rng.gen_range(0.0..std::f64::consts::TAU),
                rng.gen_range(0.0..std::f64::consts::TAU),
            );
            vertices
                .iter()
                .map(|v| {
                    Vector3::new(
                        0.002 * (freq.x * v.z + phase.x).sin(),
                        0.002 * (freq.y * v.z + phase.y).cos(),
                        0.002 * (freq.z * v.x * 10.0 + phase.z).sin(),
                    )
                })
                .collect()
        })
        .collect();

    let model = HandModel {
        template_vertices: vertices,
        faces,
        shape_basis,
        pose_basis: Vec::new(),
        joint_regressor,
        skinning_weights,
        parents,
    };
    debug_assert!(model.validate().is_ok());
    model
}

/// Triangulate the band between two rings of possibly different sizes by
/// advancing whichever side has the smaller next parametric angle. Emits
/// exactly `a + b` triangles with outward orientation for CCW rings.
fn zipper(faces: &mut Vec<[usize; 3]>, base_a: usize, a: usize, base_b: usize, b: usize) {
    let (mut i, mut j) = (0usize, 0usize);
    while i < a || j < b {
        let advance_lower = j >= b || (i < a && (i + 1) * b <= (j + 1) * a);
        if advance_lower {
            faces.push([base_a + i % a, base_a + (i + 1) % a, base_b + j % b]);
            i += 1;
        } else {
            faces.push([base_a + i % a, base_b + (j + 1) % b, base_b + j % b]);
            j += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_and_boundary() {
        let m = synthetic_hand_model(3);
        assert_eq!(m.template_vertices.len(), NUM_VERTICES);
        assert_eq!(m.faces.len(), super::super::NUM_FACES);
        let mesh = crate::geometry::TriMesh {
            vertices: m.template_vertices.clone(),
            faces: m.faces.clone(),
        };
        // Open exactly at the 16-vertex wrist ring.
        assert_eq!(mesh.boundary_edges().len(), 16);
        assert!(mesh.sealed().unwrap().is_watertight());
    }

    #[test]
    fn sealed_template_has_positive_enclosed_volume() {
        let m = synthetic_hand_model(0);
        let sealed = crate::geometry::TriMesh {
            vertices: m.template_vertices.clone(),
            faces: m.faces.clone(),
        }
        .sealed()
        .unwrap();
        // A point on the tube axis mid-length must be inside.
        let p = Vector3::new(0.0, 0.0, 0.09);
        assert!(crate::geometry::point_in_mesh(&sealed, &p).unwrap());
        // And the winding orientation must be outward (w ≈ +1 inside).
        assert!(crate::geometry::winding_number(&sealed, &p) > 0.9);
    }

    #[test]
    fn skinning_rows_normalized() {
        let m = synthetic_hand_model(7);
        for row in &m.skinning_weights {
            let s: f64 = row.iter().sum();
            assert!((s - 1.0).abs() < 1e-6);
            assert!(row.iter().all(|&w| w >= 0.0));
        }
    }

    #[test]
    fn single_root_tree() {
        let m = synthetic_hand_model(1);
        assert_eq!(m.parents.iter().filter(|&&p| p < 0).count(), 1);
        m.validate().unwrap();
    }

    #[test]
    fn different_seeds_differ_in_shape_basis() {
        let a = synthetic_hand_model(0);
        let b = synthetic_hand_model(1);
        assert_ne!(a.shape_basis[0][0], b.shape_basis[0][0]);
        assert_eq!(a.template_vertices, b.template_vertices);
    }
}
