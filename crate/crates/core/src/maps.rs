//! Distance maps and task-aware contact maps: per-point rescaled shortest
//! distances from the object point cloud to scene or hand geometry.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::geometry::{nearest_distances, PointCloud};

/// Alpha for scene distance maps.
pub const DISTANCE_ALPHA: f64 = 30.0;
/// Alpha for contact maps.
pub const CONTACT_ALPHA: f64 = 100.0;
/// Default saturation distance for scene distance maps (m).
pub const DISTANCE_SATURATION: f64 = 0.20;
/// Default saturation distance for contact maps (m).
pub const CONTACT_SATURATION: f64 = 0.05;

/// Rescaled scene-distance field aligned to an object point cloud.
/// Values live in [-1, 1 - 2*sigmoid(-0.5)].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceMap {
    pub values: Vec<f64>,
    pub alpha: f64,
}

/// Hand-proximity field aligned to an object point cloud, clamped to [0,1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContactMap {
    pub values: Vec<f64>,
}

impl ContactMap {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(CoreError::InvalidArgument(
                "contact map values must lie in [0,1]".into(),
            ));
        }
        Ok(Self { values })
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Upper bound of the rescale formula's range, reached at d = 0.
pub fn rescale_max() -> f64 {
    1.0 - 2.0 * sigmoid(-0.5)
}

/// D = 1 - 2*sigmoid(alpha*d - 0.5) for a normalized distance d in [0,1].
pub fn rescale_distance(d_norm: f64, alpha: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&d_norm) {
        return Err(CoreError::InvalidArgument(format!(
            "d_norm = {d_norm} outside [0,1]"
        )));
    }
    if alpha <= 0.0 {
        return Err(CoreError::InvalidArgument("alpha must be > 0".into()));
    }
    Ok(1.0 - 2.0 * sigmoid(alpha * d_norm - 0.5))
}

fn rescaled_field(
    object: &PointCloud,
    reference: &PointCloud,
    alpha: f64,
    saturation: f64,
) -> Result<Vec<f64>> {
    if saturation <= 0.0 {
        return Err(CoreError::InvalidArgument("saturation must be > 0".into()));
    }
    let raw = nearest_distances(object, reference)?;
    raw.iter()
        .map(|&d| rescale_distance((d / saturation).clamp(0.0, 1.0), alpha))
        .collect()
}

/// Scene distance map: per object point, rescaled shortest distance to the
/// scene cloud.
pub fn compute_distance_map(
    object: &PointCloud,
    scene: &PointCloud,
    alpha: f64,
    saturation: f64,
) -> Result<DistanceMap> {
    Ok(DistanceMap {
        values: rescaled_field(object, scene, alpha, saturation)?,
        alpha,
    })
}

/// Ground-truth task-aware contact map: the same pipeline against the hand
/// vertices, clamped to [0,1].
pub fn compute_contact_map(
    object: &PointCloud,
    hand_vertices: &PointCloud,
    alpha: f64,
    saturation: f64,
) -> Result<ContactMap> {
    let values = rescaled_field(object, hand_vertices, alpha, saturation)?
        .into_iter()
        .map(|v| v.clamp(0.0, 1.0))
        .collect();
    Ok(ContactMap { values })
}
