//! Deterministic 2D multi-lane driving environment for the overtaking and
//! merging tasks.

pub mod env;
pub mod geometry;
pub mod observation;
pub mod scenario;
pub mod traffic;
pub mod vehicle;

pub use env::{
    sv_count, write_trajectory_csv, DrivingEnv, EpisodeOutcome, OutcomeKind, StepEvents, StepResult,
    TrajectoryRow, N_SV_MAX,
};
pub use geometry::{check_collision, wrap_angle, OrientedRect};
pub use observation::{observe, Observation, N_OBS_MAX, OBS_DIM, PAD_DISTANCE, PAD_ROW};
pub use scenario::{GoalRegion, ScenarioConfig, Task};
pub use vehicle::{Control, StateMatrix, VehicleState};

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("usage error: {0}")]
    Usage(String),
}
