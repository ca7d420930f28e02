//! The training loop around the two agent workflows, evaluation and export.

mod eval;
mod export;
mod rollout;
mod train;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::curriculum::{CurriculumError, Density, EpsilonSchedule};
use crate::llm::{GatewayError, ProviderConfig};
use crate::memory::MemoryError;
use crate::reward::ParseError;
use crate::rl::{PpoConfig, RlError, HIDDEN};
use crate::sim::{ScenarioConfig, SimError, Task};

pub use eval::{evaluate, evaluate_policy, evaluate_with, EvalCell, EvalReport, EVAL_SEED_BASE};
pub use export::{dump_trajectories, export_run, training_curve, ExportSummary};
pub use rollout::{run_episode, EpisodeRun, Transition};
pub use train::{resume, train, TrainSummary, Trainer};

pub const CONFIG_SNAPSHOT: &str = "config.snapshot";
pub const METRICS_FILE: &str = "metrics.csv";
pub const CHECKPOINT_DIR: &str = "checkpoints";
pub const LATEST_CHECKPOINT: &str = "latest.bin";
pub const FINAL_CHECKPOINT: &str = "final.bin";

/// Hand-written program used by `--fixed-reward`: sparse terminal terms and a
/// small per-step time cost.
pub const BASELINE_REWARD: &str = "\
# sparse completion and crash terms with a small time cost
goal = 10 * success
crash = -10 * collision
time = -0.01
total = goal + crash + time
";

#[derive(Debug, thiserror::Error)]
pub enum FlowError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("no initial reward program: {0}")]
    NoInitialReward(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Rl(#[from] RlError),
    #[error(transparent)]
    Memory(#[from] MemoryError),
    #[error(transparent)]
    Curriculum(#[from] CurriculumError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("reward program: {0}")]
    Reward(#[from] ParseError),
    #[error("action decode: {0}")]
    Control(#[from] crate::control::ControlError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl FlowError {
    /// Process exit code for the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            FlowError::Config(_) | FlowError::Reward(_) => 2,
            FlowError::NoInitialReward(_) => 3,
            _ => 1,
        }
    }
}

/// Everything that determines a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub scenario: ScenarioConfig,
    pub episodes: u64,
    /// Policy-update cadence in episodes.
    pub n_p: u64,
    /// Curriculum-workflow cadence.
    pub n_c: u64,
    /// Reward-workflow cadence.
    pub n_r: u64,
    pub seed: u64,
    pub provider: ProviderConfig,
    pub out: PathBuf,
    pub eval_episodes: u32,
    /// Densities evaluated at the end of training; empty skips evaluation.
    pub eval_densities: Vec<Density>,
    pub fixed_reward: bool,
    pub no_curriculum: bool,
    /// Density trained on when the curriculum workflow is off.
    pub target_density: Density,
    /// Program activated when the reward workflow cannot produce one at
    /// initialization.
    pub fallback_reward: Option<String>,
    pub ppo: PpoConfig,
    pub hidden: Vec<usize>,
    pub epsilon: EpsilonSchedule,
    /// Simulation steps per policy decision.
    pub decision_interval: u32,
}

impl RunConfig {
    pub fn new(task: Task, episodes: u64, seed: u64, out: &Path) -> Self {
        Self {
            scenario: ScenarioConfig::for_task(task),
            episodes,
            n_p: 50,
            n_c: 100,
            n_r: 1000,
            seed,
            provider: ProviderConfig::default(),
            out: out.to_path_buf(),
            eval_episodes: 100,
            eval_densities: Density::ALL.to_vec(),
            fixed_reward: false,
            no_curriculum: false,
            target_density: Density::Low,
            fallback_reward: None,
            ppo: PpoConfig::default(),
            hidden: HIDDEN.to_vec(),
            epsilon: EpsilonSchedule::new(episodes),
            decision_interval: 5,
        }
    }

    pub fn validate(&self) -> Result<(), FlowError> {
        let bad = |m: String| Err(FlowError::Config(m));
        self.scenario.validate().map_err(|e| FlowError::Config(e.to_string()))?;
        if self.n_p == 0 || self.n_c == 0 || self.n_r == 0 {
            return bad(format!("cadences must be positive (n_p={}, n_c={}, n_r={})", self.n_p, self.n_c, self.n_r));
        }
        if self.episodes == 0 {
            return bad("episodes must be positive".into());
        }
        if self.decision_interval == 0 {
            return bad("decision_interval must be positive".into());
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad(format!("hidden sizes {:?} must be nonempty and positive", self.hidden));
        }
        if !(0.0..=1.0).contains(&self.epsilon.start) || !(0.0..=1.0).contains(&self.epsilon.end) {
            return bad("epsilon schedule must stay within [0, 1]".into());
        }
        self.ppo.validate().map_err(|e| FlowError::Config(e.to_string()))?;
        self.provider.validate().map_err(FlowError::Config)?;
        let needs_gateway = !(self.fixed_reward && self.no_curriculum);
        if needs_gateway && self.provider.kind == crate::llm::ProviderKind::Mock && self.provider.mock_dir.is_none() {
            return bad("the mock provider needs --mock-dir".into());
        }
        if let Some(src) = &self.fallback_reward {
            crate::reward::RewardProgram::parse(src)?;
        }
        if self.episodes < self.n_r && !self.fixed_reward {
            log::warn!("{} episodes < n_r = {}: the reward program is never refined", self.episodes, self.n_r);
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String, FlowError> {
        toml::to_string(self).map_err(|e| FlowError::Config(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self, FlowError> {
        toml::from_str(text).map_err(|e| FlowError::Config(format!("config snapshot: {e}")))
    }
}

pub(crate) const STREAM_INIT: u64 = 1;
pub(crate) const STREAM_ENV: u64 = 2;
pub(crate) const STREAM_SELECT: u64 = 3;
pub(crate) const STREAM_POLICY: u64 = 4;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent seed for (run seed, stream, index).
pub fn derive_seed(seed: u64, stream: u64, index: u64) -> u64 {
    splitmix(splitmix(splitmix(seed) ^ stream.wrapping_mul(0xd1b5_4a32_d192_ed03)) ^ index)
}
