//! End-to-end pipeline tests on a deliberately tiny configuration.

use std::path::Path;

use taskgrasp_cli::{
    run_pipeline, split_seed, Dataset, EvalEntry, EvalSource, MapsFile, PipelineConfig,
    SampledGrasp, Stage, TrainSettings, CONTACT_LOSS_FILE, CONTACT_WEIGHTS_FILE, DATASET_FILE,
    EVALUATIONS_FILE, GRASP_LOSS_FILE, GRASP_WEIGHTS_FILE, MANIFEST_FILE, MAPS_FILE,
    REPORT_CSV_FILE, REPORT_JSON_FILE, SAMPLES_FILE,
};
use taskgrasp_core::diffusion::ArchConfig;
use taskgrasp_core::scenegen::procedural_catalog;
use taskgrasp_core::TaskKind;

fn tiny_config() -> PipelineConfig {
    PipelineConfig {
        task: TaskKind::Placing,
        seed: 7,
        objects: vec!["box-small".into()],
        configs_per_object: 2,
        grasps_per_config: 3,
        map_points: 48,
        schedule_t: 10,
        arch: ArchConfig {
            feat_dim: 8,
            enc_hidden: 8,
            model_dim: 8,
            blocks: 1,
            pooled_tokens: 4,
            ..ArchConfig::default()
        },
        contact_train: TrainSettings { steps: 8, learning_rate: 1e-3, batch: 2 },
        grasp_train: TrainSettings { steps: 4, learning_rate: 1e-3, batch: 2 },
        grasp_geometric_losses: false,
        ..PipelineConfig::default()
    }
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap()
}

#[test]
fn full_pipeline_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let config = tiny_config();

    run_pipeline(Stage::GenDataset, &config, out, EvalSource::Dataset).unwrap();
    let dataset: Dataset = serde_json::from_str(&read(&out.join(DATASET_FILE))).unwrap();
    assert_eq!(dataset.configs.len(), 2);
    assert!(!dataset.priors["box-small"].is_empty());

    run_pipeline(Stage::ComputeMaps, &config, out, EvalSource::Dataset).unwrap();
    let maps: MapsFile = serde_json::from_str(&read(&out.join(MAPS_FILE))).unwrap();
    assert_eq!(maps.maps.len(), 2);
    assert!(!maps.records.is_empty());
    for m in &maps.maps {
        assert_eq!(m.points.len(), 48);
        assert_eq!(m.d_init.len(), 48);
        assert_eq!(m.d_goal.len(), 48);
    }
    // Records carry the index of the configuration they were expanded for.
    let indices: std::collections::BTreeSet<usize> =
        maps.records.iter().map(|r| r.config_index).collect();
    assert!(indices.iter().all(|&i| i < 2));
    for r in &maps.records {
        assert_eq!(r.contact.values.len(), 48);
        assert!(r.init_collision_free && r.goal_collision_free);
    }

    run_pipeline(Stage::TrainContact, &config, out, EvalSource::Dataset).unwrap();
    assert!(out.join(CONTACT_WEIGHTS_FILE).exists());
    assert!(out.join("contact_weights.f32").exists());
    assert!(read(&out.join(CONTACT_LOSS_FILE)).starts_with("step,loss\n"));

    run_pipeline(Stage::TrainGrasp, &config, out, EvalSource::Dataset).unwrap();
    assert!(out.join(GRASP_WEIGHTS_FILE).exists());
    assert!(out.join("grasp_weights.f32").exists());
    assert!(read(&out.join(GRASP_LOSS_FILE)).starts_with("step,loss\n"));

    run_pipeline(Stage::Sample, &config, out, EvalSource::Dataset).unwrap();
    let samples: Vec<SampledGrasp> =
        serde_json::from_str(&read(&out.join(SAMPLES_FILE))).unwrap();
    assert_eq!(samples.len(), 2 * 3);
    for s in &samples {
        assert!(s.params.is_finite());
        assert!(s.contact.iter().all(|v| (0.0..=1.0).contains(v)));
    }
    assert!(out.join("samples/config000_grasp00.obj").exists());
    assert!(out.join("samples/config001_grasp02.obj").exists());

    run_pipeline(Stage::Evaluate, &config, out, EvalSource::Dataset).unwrap();
    let evals: Vec<EvalEntry> =
        serde_json::from_str(&read(&out.join(EVALUATIONS_FILE))).unwrap();
    assert_eq!(evals.len(), maps.records.len());

    run_pipeline(Stage::Report, &config, out, EvalSource::Dataset).unwrap();
    let csv1 = read(&out.join(REPORT_CSV_FILE));
    let json1 = read(&out.join(REPORT_JSON_FILE));
    assert!(csv1.contains("placing,ours"));

    // Rerunning the report is byte-identical.
    run_pipeline(Stage::Report, &config, out, EvalSource::Dataset).unwrap();
    assert_eq!(csv1, read(&out.join(REPORT_CSV_FILE)));
    assert_eq!(json1, read(&out.join(REPORT_JSON_FILE)));

    // Evaluating the sampled grasps also works.
    run_pipeline(Stage::Evaluate, &config, out, EvalSource::Samples).unwrap();
    let evals: Vec<EvalEntry> =
        serde_json::from_str(&read(&out.join(EVALUATIONS_FILE))).unwrap();
    assert_eq!(evals.len(), samples.len());

    // The manifest records every executed stage.
    let manifest: taskgrasp_cli::Manifest =
        serde_json::from_str(&read(&out.join(MANIFEST_FILE))).unwrap();
    for stage in Stage::ALL {
        assert!(manifest.stages.contains_key(stage.name()), "{}", stage.name());
    }
}

#[test]
fn missing_dependency_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let config = tiny_config();
    let err = run_pipeline(Stage::ComputeMaps, &config, dir.path(), EvalSource::Dataset)
        .unwrap_err();
    assert!(err.to_string().contains("stage dependency missing"), "{err}");
}

#[test]
fn config_drift_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let config = tiny_config();
    run_pipeline(Stage::GenDataset, &config, dir.path(), EvalSource::Dataset).unwrap();
    let mut drifted = config.clone();
    drifted.seed = 8;
    let err = run_pipeline(Stage::ComputeMaps, &drifted, dir.path(), EvalSource::Dataset)
        .unwrap_err();
    assert!(err.to_string().contains("config drift"), "{err}");
}

#[test]
fn gen_dataset_is_deterministic() {
    let config = tiny_config();
    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    run_pipeline(Stage::GenDataset, &config, d1.path(), EvalSource::Dataset).unwrap();
    run_pipeline(Stage::GenDataset, &config, d2.path(), EvalSource::Dataset).unwrap();
    assert_eq!(
        read(&d1.path().join(DATASET_FILE)),
        read(&d2.path().join(DATASET_FILE))
    );
}

#[test]
fn stored_dataset_revalidates() {
    let dir = tempfile::tempdir().unwrap();
    let config = tiny_config();
    run_pipeline(Stage::GenDataset, &config, dir.path(), EvalSource::Dataset).unwrap();
    let dataset: Dataset =
        serde_json::from_str(&read(&dir.path().join(DATASET_FILE))).unwrap();
    let catalog = procedural_catalog();
    for c in &dataset.configs {
        c.init.validate(&catalog).unwrap();
        c.goal.validate(&catalog).unwrap();
    }
}

#[test]
fn split_seed_separates_streams() {
    assert_ne!(split_seed(0, "config", 0), split_seed(0, "config", 1));
    assert_ne!(split_seed(0, "config", 0), split_seed(0, "maps", 0));
    assert_ne!(split_seed(0, "config", 0), split_seed(1, "config", 0));
    assert_eq!(split_seed(3, "prior", 5), split_seed(3, "prior", 5));
}
