//! Parametric articulated hand: a MANO-compatible model posed by shape
//! coefficients and axis-angle joint rotations through linear blend
//! skinning.

mod dual;
mod fileio;
mod synthetic;

pub use fileio::{load_hand_model, save_hand_model};
pub use synthetic::synthetic_hand_model;

use nalgebra::{Matrix3, UnitQuaternion, Vector3};

use crate::error::{CoreError, Result};
use crate::geometry::TriMesh;
use dual::{dvec_constant, DVec3, Dual};

pub const NUM_VERTICES: usize = 778;
pub const NUM_FACES: usize = 1538;
pub const NUM_JOINTS: usize = 16;
pub const NUM_SHAPE: usize = 10;
/// 16 axis-angle joint rotations plus root translation.
pub const THETA_DIM: usize = 51;
/// Pose-corrective coefficients: axis-angle components of non-root joints.
pub const POSE_FEATURE_DIM: usize = 45;

#[derive(Debug, Clone)]
pub struct HandModel {
    pub template_vertices: Vec<Vector3<f64>>,
    pub faces: Vec<[usize; 3]>,
    /// 10 per-vertex displacement fields.
    pub shape_basis: Vec<Vec<Vector3<f64>>>,
    /// Optional per-vertex pose-corrective fields, one per pose feature.
    pub pose_basis: Vec<Vec<Vector3<f64>>>,
    /// 16 x 778 matrix regressing joint rest positions from vertices.
    pub joint_regressor: Vec<Vec<f64>>,
    /// 778 x 16 skinning weights; rows sum to 1.
    pub skinning_weights: Vec<[f64; NUM_JOINTS]>,
    /// Parent joint index; -1 marks the single root.
    pub parents: [i32; NUM_JOINTS],
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct HandParams {
    pub beta: [f64; NUM_SHAPE],
    /// theta[3j..3j+3] is the axis-angle rotation of joint j; theta[48..51]
    /// is the root translation in meters.
    #[serde(with = "serde_big_array::BigArray")]
    pub theta: [f64; THETA_DIM],
}

impl Default for HandParams {
    fn default() -> Self {
        Self { beta: [0.0; NUM_SHAPE], theta: [0.0; THETA_DIM] }
    }
}

impl HandParams {
    pub fn is_finite(&self) -> bool {
        self.beta.iter().chain(self.theta.iter()).all(|v| v.is_finite())
    }

    pub fn root_translation(&self) -> Vector3<f64> {
        Vector3::new(self.theta[48], self.theta[49], self.theta[50])
    }

    pub fn joint_rotation(&self, j: usize) -> Vector3<f64> {
        Vector3::new(self.theta[3 * j], self.theta[3 * j + 1], self.theta[3 * j + 2])
    }
}

/// A posed 778-vertex hand surface sharing the model topology.
#[derive(Debug, Clone)]
pub struct HandMesh {
    pub mesh: TriMesh,
}

impl HandMesh {
    pub fn vertices(&self) -> &[Vector3<f64>] {
        &self.mesh.vertices
    }

    /// The hand surface is open at the wrist; containment queries use the
    /// fan-sealed copy.
    pub fn sealed_mesh(&self) -> Result<TriMesh> {
        self.mesh.sealed()
    }
}

impl HandModel {
    pub fn validate(&self) -> Result<()> {
        if self.template_vertices.len() != NUM_VERTICES {
            return Err(CoreError::Schema(format!(
                "vertex count mismatch: {} != {NUM_VERTICES}",
                self.template_vertices.len()
            )));
        }
        if self.faces.len() != NUM_FACES {
            return Err(CoreError::Schema(format!(
                "face count mismatch: {} != {NUM_FACES}",
                self.faces.len()
            )));
        }
        if self.shape_basis.len() != NUM_SHAPE
            || self.shape_basis.iter().any(|b| b.len() != NUM_VERTICES)
        {
            return Err(CoreError::Schema("shape basis shape mismatch".into()));
        }
        if !self.pose_basis.is_empty()
            && (self.pose_basis.len() != POSE_FEATURE_DIM
                || self.pose_basis.iter().any(|b| b.len() != NUM_VERTICES))
        {
            return Err(CoreError::Schema("pose basis shape mismatch".into()));
        }
        if self.joint_regressor.len() != NUM_JOINTS
            || self.joint_regressor.iter().any(|r| r.len() != NUM_VERTICES)
        {
            return Err(CoreError::Schema("joint regressor shape mismatch".into()));
        }
        if self.skinning_weights.len() != NUM_VERTICES {
            return Err(CoreError::Schema("skinning weight count mismatch".into()));
        }
        for row in &self.skinning_weights {
            if row.iter().any(|&w| w < 0.0) {
                return Err(CoreError::Schema("negative skinning weight".into()));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-6 {
                return Err(CoreError::Schema(format!(
                    "unnormalized skinning weights (row sum {sum})"
                )));
            }
        }
        let roots = self.parents.iter().filter(|&&p| p < 0).count();
        if roots != 1 {
            return Err(CoreError::Schema(format!(
                "kinematic tree must have exactly one root, found {roots}"
            )));
        }
        // Acyclic: every joint must reach the root.
        for j in 0..NUM_JOINTS {
            let mut cur = j as i32;
            for _ in 0..=NUM_JOINTS {
                if cur < 0 {
                    break;
                }
                cur = self.parents[cur as usize];
            }
            if cur >= 0 {
                return Err(CoreError::Schema("cycle in kinematic tree".into()));
            }
        }
        Ok(())
    }

    /// Template plus shape blendshapes (no pose correctives, no pose).
    pub fn shaped_template(&self, beta: &[f64; NUM_SHAPE]) -> Vec<Vector3<f64>> {
        let mut out = self.template_vertices.clone();
        for (k, field) in self.shape_basis.iter().enumerate() {
            if beta[k] == 0.0 {
                continue;
            }
            for (v, d) in out.iter_mut().zip(field) {
                *v += d * beta[k];
            }
        }
        out
    }

    /// Joint rest positions regressed from the shaped template.
    pub fn rest_joints(&self, shaped: &[Vector3<f64>]) -> [Vector3<f64>; NUM_JOINTS] {
        std::array::from_fn(|j| {
            self.joint_regressor[j]
                .iter()
                .zip(shaped)
                .map(|(&w, v)| v * w)
                .sum()
        })
    }
}

fn pose_feature(params: &HandParams) -> [f64; POSE_FEATURE_DIM] {
    std::array::from_fn(|i| params.theta[3 + i])
}

/// Pose the hand: blendshapes, joint regression, per-joint rigid transforms
/// composed root-to-leaf, linear blend skinning, then root translation.
pub fn forward_hand(model: &HandModel, params: &HandParams) -> Result<HandMesh> {
    if !params.is_finite() {
        return Err(CoreError::NonFinite("hand parameters".into()));
    }
    let shaped = model.shaped_template(&params.beta);
    let joints = model.rest_joints(&shaped);

    let mut rest = shaped;
    if !model.pose_basis.is_empty() {
        let feat = pose_feature(params);
        for (k, field) in model.pose_basis.iter().enumerate() {
            if feat[k] == 0.0 {
                continue;
            }
            for (v, d) in rest.iter_mut().zip(field) {
                *v += d * feat[k];
            }
        }
    }

    // World transform per joint: rotation + translation, composed along the
    // tree. Local transform of joint j rotates about its rest position.
    let mut rot = [Matrix3::identity(); NUM_JOINTS];
    let mut trans = [Vector3::zeros(); NUM_JOINTS];
    for j in 0..NUM_JOINTS {
        let r_local = UnitQuaternion::from_scaled_axis(params.joint_rotation(j)).to_rotation_matrix();
        let local_rot = *r_local.matrix();
        let local_trans = joints[j] - local_rot * joints[j];
        let p = model.parents[j];
        if p < 0 {
            rot[j] = local_rot;
            trans[j] = local_trans;
        } else {
            let p = p as usize;
            rot[j] = rot[p] * local_rot;
            trans[j] = rot[p] * local_trans + trans[p];
        }
    }

    let root_t = params.root_translation();
    let vertices: Vec<Vector3<f64>> = rest
        .iter()
        .zip(&model.skinning_weights)
        .map(|(v, w)| {
            let mut out = Vector3::zeros();
            for j in 0..NUM_JOINTS {
                if w[j] == 0.0 {
                    continue;
                }
                out += (rot[j] * v + trans[j]) * w[j];
            }
            out + root_t
        })
        .collect();

    Ok(HandMesh { mesh: TriMesh { vertices, faces: model.faces.clone() } })
}

/// Forward pass carrying exact partials of every vertex with respect to the
/// 51 pose parameters. Returns the posed mesh and, per vertex, the 3 x 51
/// Jacobian rows.
pub fn forward_hand_jacobian(
    model: &HandModel,
    params: &HandParams,
) -> Result<(HandMesh, Vec<[[f64; THETA_DIM]; 3]>)> {
    if !params.is_finite() {
        return Err(CoreError::NonFinite("hand parameters".into()));
    }
    let shaped = model.shaped_template(&params.beta);
    let joints = model.rest_joints(&shaped);

    // Per-joint world transforms in dual arithmetic.
    let mut rot: Vec<[DVec3; 3]> = Vec::with_capacity(NUM_JOINTS); // columns
    let mut trans: Vec<DVec3> = Vec::with_capacity(NUM_JOINTS);
    for j in 0..NUM_JOINTS {
        let w: DVec3 = std::array::from_fn(|k| Dual::variable(params.theta[3 * j + k], 3 * j + k));
        let e = |k: usize| {
            let mut v = [Dual::constant(0.0); 3];
            v[k] = Dual::constant(1.0);
            v
        };
        let local_cols: [DVec3; 3] = std::array::from_fn(|k| dual::rotate_axis_angle(&w, &e(k)));
        let jr = dvec_constant(&joints[j]);
        let rjr = mat_apply(&local_cols, &jr);
        let local_trans = dual::dvec_sub(&jr, &rjr);
        let p = model.parents[j];
        if p < 0 {
            rot.push(local_cols);
            trans.push(local_trans);
        } else {
            let p = p as usize;
            let composed: [DVec3; 3] =
                std::array::from_fn(|k| mat_apply(&rot[p], &local_cols[k]));
            let t = dual::dvec_add(&mat_apply(&rot[p], &local_trans), &trans[p]);
            rot.push(composed);
            trans.push(t);
        }
    }

    let feat_fields: Option<&Vec<Vec<Vector3<f64>>>> =
        (!model.pose_basis.is_empty()).then_some(&model.pose_basis);
    let root_t: DVec3 = std::array::from_fn(|k| Dual::variable(params.theta[48 + k], 48 + k));

    let mut vertices = Vec::with_capacity(NUM_VERTICES);
    let mut jacobians = Vec::with_capacity(NUM_VERTICES);
    for (vi, (v, w)) in shaped.iter().zip(&model.skinning_weights).enumerate() {
        let mut rest = dvec_constant(v);
        if let Some(fields) = feat_fields {
            for (k, field) in fields.iter().enumerate() {
                let coeff = Dual::variable(params.theta[3 + k], 3 + k);
                rest = dual::dvec_add(&rest, &dual::dvec_scale(&dvec_constant(&field[vi]), coeff));
            }
        }
        let mut out = [Dual::constant(0.0); 3];
        for j in 0..NUM_JOINTS {
            if w[j] == 0.0 {
                continue;
            }
            let moved = dual::dvec_add(&mat_apply(&rot[j], &rest), &trans[j]);
            out = dual::dvec_add(&out, &dual::dvec_scale(&moved, Dual::constant(w[j])));
        }
        out = dual::dvec_add(&out, &root_t);
        vertices.push(Vector3::new(out[0].v, out[1].v, out[2].v));
        jacobians.push([out[0].d, out[1].d, out[2].d]);
    }

    Ok((
        HandMesh { mesh: TriMesh { vertices, faces: model.faces.clone() } },
        jacobians,
    ))
}

/// Apply a column-major dual matrix to a dual vector.
fn mat_apply(cols: &[DVec3; 3], v: &DVec3) -> DVec3 {
    let a = dual::dvec_scale(&cols[0], v[0]);
    let b = dual::dvec_scale(&cols[1], v[1]);
    let c = dual::dvec_scale(&cols[2], v[2]);
    dual::dvec_add(&dual::dvec_add(&a, &b), &c)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> HandModel {
        synthetic_hand_model(0)
    }

    #[test]
    fn synthetic_model_valid_and_deterministic() {
        let a = model();
        a.validate().unwrap();
        let b = synthetic_hand_model(0);
        assert_eq!(a.template_vertices, b.template_vertices);
        assert_eq!(a.skinning_weights, b.skinning_weights);
        assert_eq!(a.parents, b.parents);
    }

    #[test]
    fn zero_pose_reproduces_template() {
        let m = model();
        let posed = forward_hand(&m, &HandParams::default()).unwrap();
        for (a, b) in posed.vertices().iter().zip(&m.template_vertices) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn root_translation_shifts_rigidly() {
        let m = model();
        let mut params = HandParams::default();
        params.theta[48] = 0.1;
        params.theta[49] = -0.2;
        params.theta[50] = 0.05;
        let posed = forward_hand(&m, &params).unwrap();
        let t = Vector3::new(0.1, -0.2, 0.05);
        for (a, b) in posed.vertices().iter().zip(&m.template_vertices) {
            assert!((a - (b + t)).norm() < 1e-12);
        }
    }

    #[test]
    fn wrist_rotation_matches_rigid_oracle() {
        let m = model();
        let w = Vector3::new(0.3, -0.5, 0.8);
        let mut params = HandParams::default();
        params.theta[0] = w.x;
        params.theta[1] = w.y;
        params.theta[2] = w.z;
        let posed = forward_hand(&m, &params).unwrap();
        let shaped = m.shaped_template(&params.beta);
        let wrist = m.rest_joints(&shaped)[0];
        let r = UnitQuaternion::from_scaled_axis(w);
        for (a, b) in posed.vertices().iter().zip(&m.template_vertices) {
            let want = r * (b - wrist) + wrist;
            assert!((a - want).norm() < 1e-9);
        }
    }

    #[test]
    fn rigid_equivariance() {
        // Composing an extra global rotation into the wrist equals rigidly
        // transforming the posed mesh about the wrist joint.
        let m = model();
        let mut params = HandParams::default();
        for (i, v) in params.theta.iter_mut().enumerate().take(48) {
            *v = 0.05 * ((i as f64 * 0.7).sin());
        }
        params.theta[48] = 0.02;
        let posed = forward_hand(&m, &params).unwrap();

        let extra = UnitQuaternion::from_scaled_axis(Vector3::new(0.2, 0.9, -0.4));
        let base = UnitQuaternion::from_scaled_axis(params.joint_rotation(0));
        let mut composed = params;
        let comp_aa = (extra * base).scaled_axis();
        composed.theta[0] = comp_aa.x;
        composed.theta[1] = comp_aa.y;
        composed.theta[2] = comp_aa.z;
        let posed2 = forward_hand(&m, &composed).unwrap();

        let shaped = m.shaped_template(&params.beta);
        let wrist = m.rest_joints(&shaped)[0];
        let t = params.root_translation();
        for (a, b) in posed2.vertices().iter().zip(posed.vertices()) {
            // Untranslate, rotate about the wrist, retranslate.
            let want = extra * (b - t - wrist) + wrist + t;
            assert!((a - want).norm() < 1e-9, "mismatch {}", (a - want).norm());
        }
    }

    #[test]
    fn lipschitz_sanity_under_tiny_pose_change() {
        let m = model();
        let mut params = HandParams::default();
        params.theta[5] = 0.3;
        let a = forward_hand(&m, &params).unwrap();
        params.theta[5] += 1e-6;
        let b = forward_hand(&m, &params).unwrap();
        for (x, y) in a.vertices().iter().zip(b.vertices()) {
            assert!((x - y).norm() <= 1e-3);
        }
    }

    #[test]
    fn jacobian_matches_plain_forward() {
        let m = model();
        let mut params = HandParams::default();
        for (i, v) in params.theta.iter_mut().enumerate() {
            *v = 0.1 * ((i as f64 + 1.0) * 0.31).cos();
        }
        let plain = forward_hand(&m, &params).unwrap();
        let (dualed, _) = forward_hand_jacobian(&m, &params).unwrap();
        for (a, b) in plain.vertices().iter().zip(dualed.vertices()) {
            assert!((a - b).norm() < 1e-10);
        }
    }

    #[test]
    fn jacobian_matches_central_differences() {
        let m = model();
        let mut params = HandParams::default();
        for (i, v) in params.theta.iter_mut().enumerate() {
            *v = 0.15 * ((i as f64 * 1.7).sin());
        }
        let (_, jac) = forward_hand_jacobian(&m, &params).unwrap();
        let h = 1e-5;
        // Spot-check a spread of vertices and parameters.
        for &vi in &[0usize, 123, 456, 777] {
            for &pi in &[0usize, 4, 17, 30, 48, 50] {
                let mut plus = params;
                plus.theta[pi] += h;
                let mut minus = params;
                minus.theta[pi] -= h;
                let vp = forward_hand(&m, &plus).unwrap().vertices()[vi];
                let vm = forward_hand(&m, &minus).unwrap().vertices()[vi];
                for k in 0..3 {
                    let fd = (vp[k] - vm[k]) / (2.0 * h);
                    let an = jac[vi][k][pi];
                    let denom = fd.abs().max(1e-6);
                    assert!(
                        (an - fd).abs() / denom < 1e-4,
                        "vertex {vi} param {pi} axis {k}: {an} vs {fd}"
                    );
                }
            }
        }
    }

    #[test]
    fn nonfinite_params_rejected() {
        let m = model();
        let mut params = HandParams::default();
        params.theta[3] = f64::NAN;
        assert!(forward_hand(&m, &params).is_err());
    }

    #[test]
    fn hand_mesh_seals_for_containment() {
        let m = model();
        let posed = forward_hand(&m, &HandParams::default()).unwrap();
        assert!(!posed.mesh.is_watertight()); // open at the wrist
        assert!(posed.sealed_mesh().unwrap().is_watertight());
    }
}
