//! Task-oriented human grasp synthesis at desk scale.
//!
//! The pipeline turns initial/goal scene geometry into task-aware contact
//! maps, synthesizes articulated-hand grasps with a two-stage conditional
//! denoising-diffusion model, and scores the results with a grasp quality
//! metric suite including the composite task score.

pub mod diffusion;
pub mod error;
pub mod geometry;
pub mod hand;
pub mod io;
pub mod maps;
pub mod metrics;
pub mod scenegen;
pub mod sim;

pub use error::{CoreError, Result};
pub use geometry::{PointCloud, RigidPose, TriMesh};
pub use hand::{HandMesh, HandModel, HandParams};
pub use maps::{ContactMap, DistanceMap};
pub use metrics::{EvalThresholds, GraspEvaluation, ReportRow};
pub use scenegen::{
    Catalog, GraspRecord, ObjectAsset, SceneConfig, Support, TaskConfig, TaskKind,
};
