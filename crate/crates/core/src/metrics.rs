//! Grasp evaluation metrics: penetration volume, simulation displacement,
//! contact/qualified ratios, diversity, obstacle penetration, and the
//! composite task score, plus report aggregation and export.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::geometry::{
    nearest_distances, overlap_volume, point_in_mesh, sample_surface, PointCloud, RigidPose,
};
use crate::hand::{forward_hand, HandMesh, HandModel, HandParams, NUM_VERTICES};
use crate::scenegen::{Catalog, GraspRecord, ObjectAsset, SceneConfig, Support, TaskConfig, TaskKind};
use crate::sim::{integrate, ContactParams, Environment, RigidBodyState, SimBody};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalThresholds {
    /// Penetration-volume qualification threshold (cm³).
    pub pv_cm3: f64,
    /// Simulation-displacement qualification threshold (cm).
    pub sd_cm: f64,
    /// Hand-object contact distance threshold (m).
    pub contact_m: f64,
}

impl Default for EvalThresholds {
    fn default() -> Self {
        Self { pv_cm3: 3.0, sd_cm: 2.0, contact_m: 0.005 }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GraspEvaluation {
    pub pv_cm3: f64,
    pub sd_cm: f64,
    pub contacted: bool,
    /// Fractions in [0,1].
    pub init_opp: f64,
    pub goal_opp: f64,
    pub qualified: bool,
}

/// Center-of-mass displacement (cm) of the object held by a fixed hand over
/// `duration` seconds of gravity, penalty contacts against the hand mesh
/// only (no support surface).
pub fn simulation_displacement(
    hand: &HandMesh,
    object: &ObjectAsset,
    pose: &RigidPose,
    duration: f64,
) -> Result<f64> {
    if duration < 0.0 {
        return Err(CoreError::InvalidArgument("duration must be >= 0".into()));
    }
    if duration == 0.0 {
        return Ok(0.0);
    }
    let world = object.mesh.transformed(pose);
    let body = SimBody::from_mesh(&world, object.mass)?;
    let env = Environment { support_plane_z: None, static_mesh: Some(&hand.mesh) };
    let initial = RigidBodyState {
        pose: RigidPose::from_translation(body.com_offset),
        linear_velocity: nalgebra::Vector3::zeros(),
        angular_velocity: nalgebra::Vector3::zeros(),
    };
    let params = ContactParams { rate_hz: 1920.0, ..ContactParams::default() };
    let out = integrate(&body, &env, initial, duration, &params, false);
    let end = out.state.pose.translation;
    if !end.iter().all(|v| v.is_finite()) {
        return Err(CoreError::Divergence { step: (duration * 240.0) as usize });
    }
    Ok((end - body.com_offset).norm() * 100.0)
}

/// Percentage of grasps flagged as contacting the object.
pub fn contact_ratio(evaluations: &[GraspEvaluation]) -> Result<f64> {
    if evaluations.is_empty() {
        return Err(CoreError::InvalidArgument("empty evaluation list".into()));
    }
    let n = evaluations.iter().filter(|e| e.contacted).count();
    Ok(100.0 * n as f64 / evaluations.len() as f64)
}

/// Percentage of grasps under both the PV and SD thresholds.
pub fn qualified_ratio(
    evaluations: &[GraspEvaluation],
    pv_thresh_cm3: f64,
    sd_thresh_cm: f64,
) -> Result<f64> {
    if evaluations.is_empty() {
        return Err(CoreError::InvalidArgument("empty evaluation list".into()));
    }
    if pv_thresh_cm3 <= 0.0 || sd_thresh_cm <= 0.0 {
        return Err(CoreError::InvalidArgument("thresholds must be > 0".into()));
    }
    let n = evaluations
        .iter()
        .filter(|e| e.pv_cm3 <= pv_thresh_cm3 && e.sd_cm <= sd_thresh_cm)
        .count();
    Ok(100.0 * n as f64 / evaluations.len() as f64)
}

/// Mean pairwise L2 distance between the 51-dim θ vectors.
pub fn diversity_score(grasps: &[HandParams]) -> Result<f64> {
    if grasps.len() < 2 {
        return Err(CoreError::InvalidArgument(
            "diversity needs at least 2 grasps".into(),
        ));
    }
    let mut total = 0.0;
    let mut pairs = 0usize;
    for i in 0..grasps.len() {
        for j in i + 1..grasps.len() {
            let d2: f64 = grasps[i]
                .theta
                .iter()
                .zip(grasps[j].theta.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            total += d2.sqrt();
            pairs += 1;
        }
    }
    Ok(total / pairs as f64)
}

/// Fraction of the 778 hand vertices (given in world coordinates) inside
/// any obstacle mesh or the support geometry.
pub fn obstacle_penetration(
    hand: &HandMesh,
    scene: &SceneConfig,
    catalog: &Catalog,
) -> Result<f64> {
    let mut obstacles = Vec::new();
    for (id, pose) in &scene.obstacles {
        obstacles.push(catalog.get(id)?.mesh.transformed(pose));
    }
    let support_mesh = match &scene.support {
        Support::Mesh(m) => Some(m),
        Support::Plane { .. } => None,
    };
    let mut inside = 0usize;
    'verts: for v in hand.vertices() {
        if let Support::Plane { z } = scene.support {
            if v.z < z {
                inside += 1;
                continue;
            }
        }
        for obs in obstacles.iter().chain(support_mesh) {
            if point_in_mesh(obs, v)? {
                inside += 1;
                continue 'verts;
            }
        }
    }
    Ok(inside as f64 / NUM_VERTICES as f64)
}

/// TS = QR × (1 − InitOPP) × (1 − GoalOPP), all arguments as fractions.
pub fn task_score(qr: f64, init_opp: f64, goal_opp: f64) -> Result<f64> {
    for v in [qr, init_opp, goal_opp] {
        if !(0.0..=1.0).contains(&v) {
            return Err(CoreError::InvalidArgument(format!(
                "task_score inputs must be in [0,1], got {v}"
            )));
        }
    }
    Ok(qr * (1.0 - init_opp) * (1.0 - goal_opp))
}

/// Evaluate one grasp record against its task configuration.
pub fn evaluate_record(
    record: &GraspRecord,
    config: &TaskConfig,
    catalog: &Catalog,
    model: &HandModel,
    thresholds: &EvalThresholds,
) -> Result<GraspEvaluation> {
    let asset = catalog.get(&config.init.target.0)?;
    let hand = forward_hand(model, &record.params)?;
    let sealed = hand.sealed_mesh()?;
    let pv = overlap_volume(&sealed, &asset.mesh, 0.001)?;

    let object_points = sample_surface(&asset.mesh, 2048, 0)?;
    let hand_cloud = PointCloud::new(hand.vertices().to_vec())?;
    let contact_d = nearest_distances(&hand_cloud, &object_points)?
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    let contacted = contact_d <= thresholds.contact_m;

    // SD in the initial scene's world frame (gravity acts along world -z).
    let init_pose = &config.init.target.1;
    let world_hand = HandMesh { mesh: hand.mesh.transformed(init_pose) };
    let sd = simulation_displacement(&world_hand, asset, init_pose, 1.0)?;

    let init_opp = obstacle_penetration(&world_hand, &config.init, catalog)?;
    // The grasp moves rigidly with the object to the goal.
    let goal_hand = HandMesh {
        mesh: world_hand.mesh.transformed(&config.t_init_to_goal),
    };
    let goal_opp = obstacle_penetration(&goal_hand, &config.goal, catalog)?;

    Ok(GraspEvaluation {
        pv_cm3: pv,
        sd_cm: sd,
        contacted,
        init_opp,
        goal_opp,
        qualified: pv <= thresholds.pv_cm3 && sd <= thresholds.sd_cm,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportRow {
    pub task: TaskKind,
    pub method: String,
    pub pv_avg: f64,
    pub pv_std: f64,
    pub sd_avg: f64,
    pub sd_std: f64,
    pub cr_pct: f64,
    pub qr_pct: f64,
    pub ds: f64,
    pub init_opp_pct: f64,
    pub goal_opp_pct: f64,
    pub ts: f64,
}

impl ReportRow {
    /// TS must be recomputable from the row's own QR/OPP fields.
    pub fn ts_consistent(&self, tol: f64) -> bool {
        match task_score(
            self.qr_pct / 100.0,
            self.init_opp_pct / 100.0,
            self.goal_opp_pct / 100.0,
        ) {
            Ok(ts) => (ts - self.ts).abs() <= tol,
            Err(_) => false,
        }
    }
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Aggregate per-grasp evaluations into one report row. `grasp_sets` holds
/// the θ vectors per configuration for the diversity score (averaged over
/// configurations).
pub fn aggregate_report(
    task: TaskKind,
    method: &str,
    evaluations: &[GraspEvaluation],
    grasp_sets: &[Vec<HandParams>],
    thresholds: &EvalThresholds,
) -> Result<ReportRow> {
    if evaluations.is_empty() {
        return Err(CoreError::InvalidArgument("empty evaluation list".into()));
    }
    let (pv_avg, pv_std) = mean_std(evaluations.iter().map(|e| e.pv_cm3));
    let (sd_avg, sd_std) = mean_std(evaluations.iter().map(|e| e.sd_cm));
    let cr = contact_ratio(evaluations)?;
    let qr = qualified_ratio(evaluations, thresholds.pv_cm3, thresholds.sd_cm)?;
    let init_opp = evaluations.iter().map(|e| e.init_opp).sum::<f64>()
        / evaluations.len() as f64;
    let goal_opp = evaluations.iter().map(|e| e.goal_opp).sum::<f64>()
        / evaluations.len() as f64;
    let mut ds = 0.0;
    let mut ds_sets = 0usize;
    for set in grasp_sets {
        if set.len() >= 2 {
            ds += diversity_score(set)?;
            ds_sets += 1;
        }
    }
    if ds_sets > 0 {
        ds /= ds_sets as f64;
    }
    let ts = task_score(qr / 100.0, init_opp, goal_opp)?;
    Ok(ReportRow {
        task,
        method: method.to_string(),
        pv_avg,
        pv_std,
        sd_avg,
        sd_std,
        cr_pct: cr,
        qr_pct: qr,
        ds,
        init_opp_pct: init_opp * 100.0,
        goal_opp_pct: goal_opp * 100.0,
        ts,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub thresholds: EvalThresholds,
    /// Vector space of the diversity score.
    pub ds_space: String,
    /// Whether the support surface counts toward OPP.
    pub opp_includes_support: bool,
}

impl Default for ReportMetadata {
    fn default() -> Self {
        Self {
            thresholds: EvalThresholds::default(),
            ds_space: "raw 51-dim hand parameter vectors".to_string(),
            opp_includes_support: true,
        }
    }
}

pub fn report_csv(rows: &[ReportRow], meta: &ReportMetadata) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "# pv_thresh_cm3={} sd_thresh_cm={} contact_m={} ds_space=\"{}\" opp_includes_support={}\n",
        meta.thresholds.pv_cm3,
        meta.thresholds.sd_cm,
        meta.thresholds.contact_m,
        meta.ds_space,
        meta.opp_includes_support,
    ));
    out.push_str("task,method,pv_avg,pv_std,sd_avg,sd_std,cr_pct,qr_pct,ds,init_opp_pct,goal_opp_pct,ts\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{:.4},{:.4},{:.4},{:.4},{:.2},{:.2},{:.4},{:.2},{:.2},{:.4}\n",
            r.task.name(),
            r.method,
            r.pv_avg,
            r.pv_std,
            r.sd_avg,
            r.sd_std,
            r.cr_pct,
            r.qr_pct,
            r.ds,
            r.init_opp_pct,
            r.goal_opp_pct,
            r.ts,
        ));
    }
    out
}

#[derive(Serialize)]
struct JsonReport<'a> {
    metadata: &'a ReportMetadata,
    rows: &'a [ReportRow],
}

pub fn report_json(rows: &[ReportRow], meta: &ReportMetadata) -> Result<String> {
    Ok(serde_json::to_string_pretty(&JsonReport { metadata: meta, rows })?)
}
