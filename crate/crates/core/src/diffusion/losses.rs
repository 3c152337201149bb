//! Training losses for the grasp denoiser: mesh reconstruction, hand-object
//! penetration, contact-map consistency, and the task-dependent weighted
//! total, with analytic gradients with respect to the 51 hand parameters.

use nalgebra::Vector3;

use crate::error::{CoreError, Result};
use crate::geometry::{nearest_distances, point_in_mesh, PointCloud, TriMesh};
use crate::hand::{forward_hand, forward_hand_jacobian, HandMesh, HandModel, HandParams, NUM_VERTICES, THETA_DIM};
use crate::maps::{compute_contact_map, ContactMap, CONTACT_ALPHA, CONTACT_SATURATION};
use crate::scenegen::TaskKind;

/// Loss components and the weighted total.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraspLosses {
    pub l_ddpm: f64,
    pub l_recon: f64,
    pub l_penetr: f64,
    pub l_cons: f64,
    pub total: f64,
}

/// Per-task weights (w_ddpm, w_recon, w_penetr, w_cons).
pub fn loss_weights(kind: TaskKind) -> [f64; 4] {
    match kind {
        TaskKind::Placing | TaskKind::Shelving => [15.0, 1.0, 5.0, 0.002],
        TaskKind::Stacking => [10.0, 1.0, 3.0, 0.005],
    }
}

/// Mean distance from object points inside the (watertight) hand mesh to
/// the nearest hand vertex; zero when no point is inside.
pub fn penetration_loss(
    object: &PointCloud,
    hand_sealed: &TriMesh,
    hand_vertices: &[Vector3<f64>],
) -> Result<f64> {
    let inside: Vec<Vector3<f64>> = object
        .points
        .iter()
        .filter_map(|p| match point_in_mesh(hand_sealed, p) {
            Ok(true) => Some(Ok(*p)),
            Ok(false) => None,
            Err(e) => Some(Err(e)),
        })
        .collect::<Result<_>>()?;
    if inside.is_empty() {
        return Ok(0.0);
    }
    let dists = nearest_distances(
        &PointCloud::new(inside)?,
        &PointCloud::new(hand_vertices.to_vec())?,
    )?;
    Ok(dists.iter().sum::<f64>() / dists.len() as f64)
}

fn recon_loss(pred: &[Vector3<f64>], gt: &[Vector3<f64>]) -> Result<f64> {
    if pred.len() != gt.len() {
        return Err(CoreError::ShapeMismatch(format!(
            "meshes have {} and {} vertices",
            pred.len(),
            gt.len()
        )));
    }
    let n = (pred.len() * 3) as f64;
    Ok(pred
        .iter()
        .zip(gt)
        .map(|(a, b)| (a - b).norm_squared())
        .sum::<f64>()
        / n)
}

fn cons_loss(object: &PointCloud, pred_vertices: &[Vector3<f64>], gt: &ContactMap) -> Result<f64> {
    if gt.values.len() != object.len() {
        return Err(CoreError::ShapeMismatch(
            "contact map length does not match object cloud".into(),
        ));
    }
    let recomputed = compute_contact_map(
        object,
        &PointCloud::new(pred_vertices.to_vec())?,
        CONTACT_ALPHA,
        CONTACT_SATURATION,
    )?;
    let n = gt.values.len() as f64;
    Ok(recomputed
        .values
        .iter()
        .zip(&gt.values)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        / n)
}

/// All loss components for a predicted grasp. `l_ddpm` is the simplified
/// diffusion objective computed by the caller; the total applies the
/// task-dependent weights.
pub fn grasp_losses(
    model: &HandModel,
    pred_params: &HandParams,
    gt_mesh: &HandMesh,
    object: &PointCloud,
    gt_contact: &ContactMap,
    kind: TaskKind,
    l_ddpm: f64,
) -> Result<GraspLosses> {
    if !l_ddpm.is_finite() {
        return Err(CoreError::NonFinite("DDPM loss term".into()));
    }
    let pred = forward_hand(model, pred_params)?;
    let sealed = pred.sealed_mesh()?;
    let l_recon = recon_loss(&pred.mesh.vertices, &gt_mesh.mesh.vertices)?;
    let l_penetr = penetration_loss(object, &sealed, &pred.mesh.vertices)?;
    let l_cons = cons_loss(object, &pred.mesh.vertices, gt_contact)?;
    let [w1, w2, w3, w4] = loss_weights(kind);
    Ok(GraspLosses {
        l_ddpm,
        l_recon,
        l_penetr,
        l_cons,
        total: w1 * l_ddpm + w2 * l_recon + w3 * l_penetr + w4 * l_cons,
    })
}

/// Analytic gradients of the three geometric losses with respect to the 51
/// hand parameters.
#[derive(Debug, Clone)]
pub struct GraspLossGrads {
    pub recon: [f64; THETA_DIM],
    pub penetr: [f64; THETA_DIM],
    pub cons: [f64; THETA_DIM],
}

impl GraspLossGrads {
    /// Weighted combination matching the geometric part of the total loss.
    pub fn weighted(&self, kind: TaskKind) -> [f64; THETA_DIM] {
        let [_, w2, w3, w4] = loss_weights(kind);
        std::array::from_fn(|k| w2 * self.recon[k] + w3 * self.penetr[k] + w4 * self.cons[k])
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Chain-rule gradients through the exact hand Jacobian. The penetration
/// term treats the inside/outside classification and all nearest-vertex
/// assignments as locally constant, which is exact away from decision
/// boundaries.
pub fn grasp_loss_theta_grad(
    model: &HandModel,
    pred_params: &HandParams,
    gt_mesh: &HandMesh,
    object: &PointCloud,
    gt_contact: &ContactMap,
) -> Result<GraspLossGrads> {
    if gt_contact.values.len() != object.len() {
        return Err(CoreError::ShapeMismatch(
            "contact map length does not match object cloud".into(),
        ));
    }
    let (pred, jac) = forward_hand_jacobian(model, pred_params)?;
    let verts = &pred.mesh.vertices;
    let sealed = pred.sealed_mesh()?;

    let mut recon = [0.0; THETA_DIM];
    let scale = 2.0 / (NUM_VERTICES * 3) as f64;
    for ((v, p), g) in verts.iter().zip(gt_mesh.mesh.vertices.iter()).zip(&jac) {
        let d = v - p;
        for c in 0..3 {
            if d[c] == 0.0 {
                continue;
            }
            for k in 0..THETA_DIM {
                recon[k] += scale * d[c] * g[c][k];
            }
        }
    }

    // Shared nearest-vertex search for the penetration and consistency
    // terms.
    let nearest: Vec<(usize, f64)> = object
        .points
        .iter()
        .map(|p| {
            let mut best = (0usize, f64::INFINITY);
            for (i, v) in verts.iter().enumerate() {
                let d = (p - v).norm();
                if d < best.1 {
                    best = (i, d);
                }
            }
            best
        })
        .collect();

    let mut penetr = [0.0; THETA_DIM];
    let inside: Vec<usize> = object
        .points
        .iter()
        .enumerate()
        .filter_map(|(j, p)| match point_in_mesh(&sealed, p) {
            Ok(true) => Some(Ok(j)),
            Ok(false) => None,
            Err(e) => Some(Err(e)),
        })
        .collect::<Result<_>>()?;
    if !inside.is_empty() {
        let inv = 1.0 / inside.len() as f64;
        for &j in &inside {
            let (i, d) = nearest[j];
            if d < 1e-12 {
                continue;
            }
            let dir = (verts[i] - object.points[j]) / d;
            for c in 0..3 {
                for k in 0..THETA_DIM {
                    penetr[k] += inv * dir[c] * jac[i][c][k];
                }
            }
        }
    }

    let mut cons = [0.0; THETA_DIM];
    let n = object.len() as f64;
    for (j, p) in object.points.iter().enumerate() {
        let (i, d) = nearest[j];
        let u = d / CONTACT_SATURATION;
        if !(1e-12..1.0).contains(&u) {
            continue; // clamped normalized distance: zero slope
        }
        let s = sigmoid(CONTACT_ALPHA * u - 0.5);
        let raw = 1.0 - 2.0 * s;
        if !(0.0..=1.0).contains(&raw) {
            continue; // clamped contact value: zero slope
        }
        let dc_dd = -2.0 * CONTACT_ALPHA * s * (1.0 - s) / CONTACT_SATURATION;
        let coeff = 2.0 / n * (raw - gt_contact.values[j]) * dc_dd;
        if coeff == 0.0 {
            continue;
        }
        let dir = (verts[i] - p) / d;
        for c in 0..3 {
            for k in 0..THETA_DIM {
                cons[k] += coeff * dir[c] * jac[i][c][k];
            }
        }
    }

    Ok(GraspLossGrads { recon, penetr, cons })
}
