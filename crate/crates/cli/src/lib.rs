//! Pipeline driver: dataset generation, map computation, training,
//! sampling, evaluation, and report emission with persistent, reproducible
//! artifacts.
//!
//! All randomness flows from one root seed per stage, split per record.
//! Every artifact is written atomically (temp file + rename) and the
//! effective configuration is stored next to the outputs; reruns against a
//! different configuration fail with a "config drift" error.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use taskgrasp_core::diffusion::{
    make_schedule, sample, save_weights, write_loss_history, ArchConfig, ContactCondition,
    ContactRecord, ContactSampler, GraspSampler, GraspTrainRecord, NoiseSchedule, TrainConfig,
};
use taskgrasp_core::error::{CoreError, Result};
use taskgrasp_core::geometry::sample_surface;
use taskgrasp_core::hand::{forward_hand, load_hand_model, synthetic_hand_model, HandModel, HandParams};
use taskgrasp_core::io::save_obj;
use taskgrasp_core::maps::{rescale_distance, ContactMap};
use taskgrasp_core::metrics::{
    aggregate_report, evaluate_record, report_csv, report_json, GraspEvaluation, ReportMetadata,
};
use taskgrasp_core::scenegen::{
    clamp_joint_limits, expand_dataset, filter_grasps, generate_config_with_target,
    procedural_catalog, sample_prior_grasps, AnnotatedGrasp, Catalog, Category, GraspRecord,
    SceneConfig, Support, TaskConfig,
};
use taskgrasp_core::{EvalThresholds, TaskKind};

/// Environment variable naming the hand-model file. When unset the built-in
/// procedural hand is used.
pub const HAND_MODEL_ENV: &str = "TASKGRASP_HAND_MODEL";

/// Seed of the built-in procedural hand model.
pub const BUILTIN_HAND_SEED: u64 = 42;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    GenDataset,
    ComputeMaps,
    TrainContact,
    TrainGrasp,
    Sample,
    Evaluate,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::GenDataset,
        Stage::ComputeMaps,
        Stage::TrainContact,
        Stage::TrainGrasp,
        Stage::Sample,
        Stage::Evaluate,
        Stage::Report,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Stage::GenDataset => "gen-dataset",
            Stage::ComputeMaps => "compute-maps",
            Stage::TrainContact => "train-contact",
            Stage::TrainGrasp => "train-grasp",
            Stage::Sample => "sample",
            Stage::Evaluate => "evaluate",
            Stage::Report => "report",
        }
    }

    pub fn parse(s: &str) -> Option<Stage> {
        Stage::ALL.into_iter().find(|st| st.name() == s)
    }
}

/// Which grasps the evaluate stage scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EvalSource {
    /// The dataset's own ground-truth grasp records.
    #[default]
    Dataset,
    /// Grasps produced by the sample stage.
    Samples,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainSettings {
    pub steps: usize,
    pub learning_rate: f64,
    pub batch: usize,
}

impl Default for TrainSettings {
    fn default() -> Self {
        Self { steps: 2000, learning_rate: 1e-3, batch: 4 }
    }
}

/// The full pipeline configuration; a serialized copy is stored next to the
/// outputs and all later stages must run with an identical one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub task: TaskKind,
    pub seed: u64,
    /// Asset ids to build task configurations for; empty selects every
    /// asset of the task's target category.
    pub objects: Vec<String>,
    pub configs_per_object: usize,
    pub grasps_per_config: usize,
    /// Prior grasps optimized per object before physical filtering.
    pub prior_grasps_per_object: usize,
    pub map_points: usize,
    pub pv_filter_cm3: f64,
    pub sd_filter_cm: f64,
    pub thresholds: EvalThresholds,
    pub distance_alpha: f64,
    pub distance_saturation: f64,
    pub schedule_t: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    pub arch: ArchConfig,
    pub contact_train: TrainSettings,
    pub grasp_train: TrainSettings,
    /// Include the geometric loss terms (through the hand Jacobian) when
    /// training the grasp denoiser.
    pub grasp_geometric_losses: bool,
    /// Recorded for provenance; the pipeline is always single-threaded and
    /// deterministic.
    pub deterministic: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            task: TaskKind::Placing,
            seed: 0,
            objects: Vec::new(),
            configs_per_object: 10,
            grasps_per_config: 16,
            prior_grasps_per_object: 48,
            map_points: 2048,
            pv_filter_cm3: 4.0,
            sd_filter_cm: 3.0,
            thresholds: EvalThresholds::default(),
            distance_alpha: 30.0,
            distance_saturation: 0.20,
            schedule_t: 100,
            beta_start: 1e-4,
            beta_end: 0.02,
            arch: ArchConfig::default(),
            contact_train: TrainSettings::default(),
            grasp_train: TrainSettings::default(),
            grasp_geometric_losses: true,
            deterministic: true,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.configs_per_object == 0
            || self.grasps_per_config == 0
            || self.prior_grasps_per_object == 0
            || self.map_points == 0
            || self.schedule_t == 0
        {
            return Err(CoreError::InvalidArgument(
                "configs, grasps, map points, and schedule length must be positive".into(),
            ));
        }
        if self.pv_filter_cm3 <= 0.0 || self.sd_filter_cm <= 0.0 {
            return Err(CoreError::InvalidArgument("filter thresholds must be > 0".into()));
        }
        if !(self.beta_start > 0.0 && self.beta_start <= self.beta_end && self.beta_end < 1.0) {
            return Err(CoreError::InvalidArgument("invalid beta bounds".into()));
        }
        if self.distance_alpha <= 0.0 || self.distance_saturation <= 0.0 {
            return Err(CoreError::InvalidArgument(
                "distance map parameters must be > 0".into(),
            ));
        }
        Ok(())
    }

    pub fn schedule(&self) -> Result<NoiseSchedule> {
        make_schedule(self.schedule_t, self.beta_start, self.beta_end)
    }
}

/// Deterministic per-record seed derivation from a stage's root seed.
pub fn split_seed(root: u64, tag: &str, index: u64) -> u64 {
    let mut h = root ^ 0x9e37_79b9_7f4a_7c15;
    for b in tag.bytes() {
        h = (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3);
    }
    h = (h ^ index).wrapping_mul(0x0000_0100_0000_01b3);
    h ^= h >> 29;
    h = h.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    h ^ (h >> 32)
}

// ---------------------------------------------------------------------------
// Artifacts
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Dataset {
    pub configs: Vec<TaskConfig>,
    /// Filtered prior grasps keyed by asset id.
    pub priors: BTreeMap<String, Vec<AnnotatedGrasp>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConfigMaps {
    pub config_index: usize,
    /// Object surface samples in the asset frame.
    pub points: Vec<Vector3<f64>>,
    pub d_init: Vec<f64>,
    pub d_goal: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MapsFile {
    pub maps: Vec<ConfigMaps>,
    pub records: Vec<GraspRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampledGrasp {
    pub config_index: usize,
    pub params: HandParams,
    pub contact: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalEntry {
    pub config_index: usize,
    pub params: HandParams,
    pub evaluation: GraspEvaluation,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Manifest {
    pub stages: BTreeMap<String, StageEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageEntry {
    pub seed: u64,
    pub outputs: Vec<String>,
}

pub const CONFIG_FILE: &str = "config.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const DATASET_FILE: &str = "dataset.json";
pub const MAPS_FILE: &str = "maps.json";
pub const CONTACT_WEIGHTS_FILE: &str = "contact_weights.json";
pub const GRASP_WEIGHTS_FILE: &str = "grasp_weights.json";
pub const CONTACT_LOSS_FILE: &str = "contact_loss.csv";
pub const GRASP_LOSS_FILE: &str = "grasp_loss.csv";
pub const SAMPLES_FILE: &str = "samples.json";
pub const EVALUATIONS_FILE: &str = "evaluations.json";
pub const REPORT_CSV_FILE: &str = "report.csv";
pub const REPORT_JSON_FILE: &str = "report.json";
pub const ERROR_FILE: &str = "error.json";

/// Atomic write: temp file in the same directory, then rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| CoreError::InvalidArgument("path has no file name".into()))?;
    let tmp = dir.join(format!(".{}.tmp", name.to_string_lossy()));
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, serde_json::to_string_pretty(value)?.as_bytes())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    if !path.exists() {
        return Err(CoreError::InvalidArgument(format!(
            "stage dependency missing: {}",
            path.display()
        )));
    }
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

/// Load the hand model from the environment-configured path, or fall back
/// to the built-in procedural model.
pub fn hand_model() -> Result<HandModel> {
    match std::env::var(HAND_MODEL_ENV) {
        Ok(p) => load_hand_model(Path::new(&p)),
        Err(_) => Ok(synthetic_hand_model(BUILTIN_HAND_SEED)),
    }
}

// ---------------------------------------------------------------------------
// Stage driver
// ---------------------------------------------------------------------------

/// Run one stage against an output directory. Fails with "config drift"
/// when the directory was produced under a different configuration and with
/// "stage dependency missing" when an upstream artifact is absent.
pub fn run_pipeline(
    stage: Stage,
    config: &PipelineConfig,
    out: &Path,
    eval_source: EvalSource,
) -> Result<()> {
    config.validate()?;
    std::fs::create_dir_all(out)?;
    let config_path = out.join(CONFIG_FILE);
    if config_path.exists() {
        let stored: PipelineConfig = read_json(&config_path)?;
        if &stored != config {
            return Err(CoreError::InvalidArgument(format!(
                "config drift: {} does not match the requested configuration",
                config_path.display()
            )));
        }
    } else {
        write_json(&config_path, config)?;
    }

    let outputs = match stage {
        Stage::GenDataset => gen_dataset(config, out)?,
        Stage::ComputeMaps => compute_maps(config, out)?,
        Stage::TrainContact => train_contact_stage(config, out)?,
        Stage::TrainGrasp => train_grasp_stage(config, out)?,
        Stage::Sample => sample_stage(config, out)?,
        Stage::Evaluate => evaluate_stage(config, out, eval_source)?,
        Stage::Report => report_stage(config, out)?,
    };

    let manifest_path = out.join(MANIFEST_FILE);
    let mut manifest: Manifest = if manifest_path.exists() {
        read_json(&manifest_path)?
    } else {
        Manifest::default()
    };
    manifest
        .stages
        .insert(stage.name().to_string(), StageEntry { seed: config.seed, outputs });
    write_json(&manifest_path, &manifest)
}

fn target_objects(config: &PipelineConfig, catalog: &Catalog) -> Result<Vec<String>> {
    if !config.objects.is_empty() {
        return Ok(config.objects.clone());
    }
    let cat = match config.task {
        TaskKind::Stacking => Category::Brick,
        _ => Category::EverydayObject,
    };
    Ok(catalog.of_category(cat).iter().map(|a| a.id.clone()).collect())
}

fn gen_dataset(config: &PipelineConfig, out: &Path) -> Result<Vec<String>> {
    let catalog = procedural_catalog();
    let model = hand_model()?;
    let objects = target_objects(config, &catalog)?;
    let mut configs = Vec::new();
    let mut priors = BTreeMap::new();
    for (oi, id) in objects.iter().enumerate() {
        for c in 0..config.configs_per_object {
            let seed = split_seed(
                config.seed,
                "config",
                (oi * config.configs_per_object + c) as u64,
            );
            configs.push(generate_config_with_target(config.task, &catalog, Some(id), seed)?);
        }
        let asset = catalog.get(id)?;
        let raw = sample_prior_grasps(
            asset,
            &model,
            config.prior_grasps_per_object,
            split_seed(config.seed, "prior", oi as u64),
        )?;
        let filtered =
            filter_grasps(&raw, asset, &model, config.pv_filter_cm3, config.sd_filter_cm)?;
        if filtered.is_empty() {
            return Err(CoreError::InvalidArgument(format!(
                "no prior grasps for {id} survived filtering"
            )));
        }
        priors.insert(id.clone(), filtered);
    }
    write_json(&out.join(DATASET_FILE), &Dataset { configs, priors })?;
    Ok(vec![DATASET_FILE.into()])
}

/// Rescaled shortest distance from each (asset-frame) object point to the
/// scene geometry around the target: obstacles plus the support surface.
fn scene_distance_values(
    points: &[Vector3<f64>],
    scene: &SceneConfig,
    catalog: &Catalog,
    alpha: f64,
    saturation: f64,
) -> Result<Vec<f64>> {
    let target_pose = &scene.target.1;
    let obstacle_meshes: Vec<_> = scene
        .obstacles
        .iter()
        .map(|(id, pose)| catalog.get(id).map(|a| a.mesh.transformed(pose)))
        .collect::<Result<_>>()?;
    points
        .iter()
        .map(|p| {
            let w = target_pose.apply(p);
            let mut d = match &scene.support {
                Support::Plane { z } => (w.z - z).abs(),
                Support::Mesh(m) => m.distance_to_surface(&w),
            };
            for m in &obstacle_meshes {
                d = d.min(m.distance_to_surface(&w));
            }
            rescale_distance((d / saturation).clamp(0.0, 1.0), alpha)
        })
        .collect()
}

fn compute_maps(config: &PipelineConfig, out: &Path) -> Result<Vec<String>> {
    let dataset: Dataset = read_json(&out.join(DATASET_FILE))?;
    let catalog = procedural_catalog();
    let model = hand_model()?;
    let mut maps = Vec::new();
    let mut records = Vec::new();
    for (ci, task_config) in dataset.configs.iter().enumerate() {
        let asset_id = &task_config.init.target.0;
        let asset = catalog.get(asset_id)?;
        let priors = dataset.priors.get(asset_id).ok_or_else(|| {
            CoreError::InvalidArgument(format!("dataset has no priors for {asset_id}"))
        })?;
        let seed = split_seed(config.seed, "maps", ci as u64);
        // The expansion samples the object cloud with this same seed, so
        // the stored map points align with the records' contact maps.
        let points = sample_surface(&asset.mesh, config.map_points, seed)?;
        let d_init = scene_distance_values(
            &points.points,
            &task_config.init,
            &catalog,
            config.distance_alpha,
            config.distance_saturation,
        )?;
        let d_goal = scene_distance_values(
            &points.points,
            &task_config.goal,
            &catalog,
            config.distance_alpha,
            config.distance_saturation,
        )?;
        let expanded = expand_dataset(
            priors,
            std::slice::from_ref(task_config),
            &catalog,
            &model,
            config.map_points,
            seed,
        )?;
        for mut r in expanded {
            r.config_index = ci;
            records.push(r);
        }
        maps.push(ConfigMaps { config_index: ci, points: points.points, d_init, d_goal });
    }
    write_json(&out.join(MAPS_FILE), &MapsFile { maps, records })?;
    Ok(vec![MAPS_FILE.into()])
}

fn save_weights_atomic(
    weights: &taskgrasp_core::diffusion::DenoiserWeights,
    out: &Path,
    json_name: &str,
) -> Result<()> {
    // Write under the final file names in a scratch directory, then move
    // both files into place; the manifest references the payload by name.
    let tmp_dir = out.join(".weights_tmp");
    std::fs::create_dir_all(&tmp_dir)?;
    let tmp_json = tmp_dir.join(json_name);
    save_weights(weights, &tmp_json)?;
    let payload_name = Path::new(json_name).with_extension("f32");
    std::fs::rename(tmp_dir.join(&payload_name), out.join(&payload_name))?;
    std::fs::rename(&tmp_json, out.join(json_name))?;
    let _ = std::fs::remove_dir(&tmp_dir);
    Ok(())
}

fn contact_records_from(maps_file: &MapsFile) -> Result<Vec<ContactRecord>> {
    let mut out = Vec::new();
    for r in &maps_file.records {
        let m = maps_file
            .maps
            .iter()
            .find(|m| m.config_index == r.config_index)
            .ok_or_else(|| {
                CoreError::InvalidArgument(format!(
                    "record references config {} with no maps",
                    r.config_index
                ))
            })?;
        out.push(ContactRecord {
            points: m.points.clone(),
            d_init: m.d_init.clone(),
            d_goal: m.d_goal.clone(),
            contact: r.contact.values.clone(),
        });
    }
    Ok(out)
}

fn train_contact_stage(config: &PipelineConfig, out: &Path) -> Result<Vec<String>> {
    let maps_file: MapsFile = read_json(&out.join(MAPS_FILE))?;
    let records = contact_records_from(&maps_file)?;
    let schedule = config.schedule()?;
    let tc = TrainConfig {
        seed: split_seed(config.seed, "train-contact", 0),
        steps: config.contact_train.steps,
        learning_rate: config.contact_train.learning_rate,
        batch: config.contact_train.batch,
        task: config.task,
    };
    let res = taskgrasp_core::diffusion::train_contact(&records, config.arch, &schedule, &tc)?;
    save_weights_atomic(&res.weights, out, CONTACT_WEIGHTS_FILE)?;
    write_loss_history(&out.join(CONTACT_LOSS_FILE), &res.history)?;
    Ok(vec![CONTACT_WEIGHTS_FILE.into(), CONTACT_LOSS_FILE.into()])
}

fn train_grasp_stage(config: &PipelineConfig, out: &Path) -> Result<Vec<String>> {
    let maps_file: MapsFile = read_json(&out.join(MAPS_FILE))?;
    let mut records = Vec::new();
    for r in &maps_file.records {
        let m = maps_file
            .maps
            .iter()
            .find(|m| m.config_index == r.config_index)
            .ok_or_else(|| {
                CoreError::InvalidArgument(format!(
                    "record references config {} with no maps",
                    r.config_index
                ))
            })?;
        records.push(GraspTrainRecord {
            points: m.points.clone(),
            contact: r.contact.values.clone(),
            params: r.params,
        });
    }
    let model = hand_model()?;
    let schedule = config.schedule()?;
    let tc = TrainConfig {
        seed: split_seed(config.seed, "train-grasp", 0),
        steps: config.grasp_train.steps,
        learning_rate: config.grasp_train.learning_rate,
        batch: config.grasp_train.batch,
        task: config.task,
    };
    let geom_model = config.grasp_geometric_losses.then_some(&model);
    let res = taskgrasp_core::diffusion::train_grasp(&records, geom_model, config.arch, &schedule, &tc)?;
    save_weights_atomic(&res.weights, out, GRASP_WEIGHTS_FILE)?;
    write_loss_history(&out.join(GRASP_LOSS_FILE), &res.history)?;
    Ok(vec![GRASP_WEIGHTS_FILE.into(), GRASP_LOSS_FILE.into()])
}

fn sample_stage(config: &PipelineConfig, out: &Path) -> Result<Vec<String>> {
    let maps_file: MapsFile = read_json(&out.join(MAPS_FILE))?;
    let contact_w = taskgrasp_core::diffusion::load_weights(&out.join(CONTACT_WEIGHTS_FILE))
        .map_err(|e| match e {
            CoreError::Io(_) => CoreError::InvalidArgument(format!(
                "stage dependency missing: {}",
                out.join(CONTACT_WEIGHTS_FILE).display()
            )),
            other => other,
        })?;
    let grasp_w = taskgrasp_core::diffusion::load_weights(&out.join(GRASP_WEIGHTS_FILE))
        .map_err(|e| match e {
            CoreError::Io(_) => CoreError::InvalidArgument(format!(
                "stage dependency missing: {}",
                out.join(GRASP_WEIGHTS_FILE).display()
            )),
            other => other,
        })?;
    let model = hand_model()?;
    let schedule = config.schedule()?;
    let sample_dir = out.join("samples");
    std::fs::create_dir_all(&sample_dir)?;
    let mut samples = Vec::new();
    for m in &maps_file.maps {
        let cond =
            ContactCondition::new(m.points.clone(), m.d_init.clone(), m.d_goal.clone())?;
        let sampler = ContactSampler::new(&contact_w, &cond)?;
        let contact = sample(
            &sampler,
            &schedule,
            split_seed(config.seed, "sample-contact", m.config_index as u64),
            true,
        )?;
        let gsampler = GraspSampler::new(&grasp_w, &m.points, &contact)?;
        for g in 0..config.grasps_per_config {
            let mut params = gsampler.sample_params(
                &schedule,
                split_seed(
                    config.seed,
                    "sample-grasp",
                    (m.config_index * 100_000 + g) as u64,
                ),
            )?;
            clamp_joint_limits(&mut params);
            let hand = forward_hand(&model, &params)?;
            let obj_path =
                sample_dir.join(format!("config{:03}_grasp{g:02}.obj", m.config_index));
            let tmp = sample_dir.join(format!(
                ".config{:03}_grasp{g:02}.obj.tmp",
                m.config_index
            ));
            save_obj(&hand.mesh, &tmp)?;
            std::fs::rename(&tmp, &obj_path)?;
            samples.push(SampledGrasp {
                config_index: m.config_index,
                params,
                contact: contact.clone(),
            });
        }
    }
    write_json(&out.join(SAMPLES_FILE), &samples)?;
    Ok(vec![SAMPLES_FILE.into(), "samples".into()])
}

fn evaluate_stage(
    config: &PipelineConfig,
    out: &Path,
    source: EvalSource,
) -> Result<Vec<String>> {
    let dataset: Dataset = read_json(&out.join(DATASET_FILE))?;
    let catalog = procedural_catalog();
    let model = hand_model()?;
    let grasps: Vec<(usize, HandParams, ContactMap)> = match source {
        EvalSource::Dataset => {
            let maps_file: MapsFile = read_json(&out.join(MAPS_FILE))?;
            maps_file
                .records
                .iter()
                .map(|r| (r.config_index, r.params, r.contact.clone()))
                .collect()
        }
        EvalSource::Samples => {
            let samples: Vec<SampledGrasp> = read_json(&out.join(SAMPLES_FILE))?;
            samples
                .into_iter()
                .map(|s| {
                    ContactMap::new(s.contact).map(|c| (s.config_index, s.params, c))
                })
                .collect::<Result<_>>()?
        }
    };
    if grasps.is_empty() {
        return Err(CoreError::InvalidArgument("no grasps to evaluate".into()));
    }
    let mut entries = Vec::new();
    for (ci, params, contact) in grasps {
        let task_config = dataset.configs.get(ci).ok_or_else(|| {
            CoreError::InvalidArgument(format!("grasp references unknown config {ci}"))
        })?;
        let record = GraspRecord {
            config_index: ci,
            params,
            contact,
            pv_cm3: 0.0,
            sd_cm: 0.0,
            init_collision_free: true,
            goal_collision_free: true,
        };
        let evaluation =
            evaluate_record(&record, task_config, &catalog, &model, &config.thresholds)?;
        entries.push(EvalEntry { config_index: ci, params, evaluation });
    }
    write_json(&out.join(EVALUATIONS_FILE), &entries)?;
    Ok(vec![EVALUATIONS_FILE.into()])
}

fn report_stage(config: &PipelineConfig, out: &Path) -> Result<Vec<String>> {
    let entries: Vec<EvalEntry> = read_json(&out.join(EVALUATIONS_FILE))?;
    if entries.is_empty() {
        return Err(CoreError::InvalidArgument("no evaluations to report".into()));
    }
    let evaluations: Vec<GraspEvaluation> = entries.iter().map(|e| e.evaluation).collect();
    let mut sets: BTreeMap<usize, Vec<HandParams>> = BTreeMap::new();
    for e in &entries {
        sets.entry(e.config_index).or_default().push(e.params);
    }
    let grasp_sets: Vec<Vec<HandParams>> = sets.into_values().collect();
    let row = aggregate_report(
        config.task,
        "ours",
        &evaluations,
        &grasp_sets,
        &config.thresholds,
    )?;
    let meta = ReportMetadata::default();
    write_atomic(&out.join(REPORT_CSV_FILE), report_csv(&[row.clone()], &meta).as_bytes())?;
    write_atomic(&out.join(REPORT_JSON_FILE), report_json(&[row], &meta)?.as_bytes())?;
    Ok(vec![REPORT_CSV_FILE.into(), REPORT_JSON_FILE.into()])
}

/// Machine-readable error record written next to the outputs on failure.
#[derive(Debug, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub stage: String,
    pub error: String,
}

pub fn write_error_record(out: &Path, stage: &str, error: &str) {
    let record = ErrorRecord { stage: stage.to_string(), error: error.to_string() };
    if std::fs::create_dir_all(out).is_ok() {
        if let Ok(s) = serde_json::to_string_pretty(&record) {
            let _ = write_atomic(&out.join(ERROR_FILE), s.as_bytes());
        }
    }
}
