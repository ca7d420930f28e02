use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{derive_seed, run_episode, FlowError};
use crate::curriculum::{CurriculumId, Density, MotionMode};
use crate::rl::{load_checkpoint, ActionSample, Policy, RlError};
use crate::sim::{OutcomeKind, ScenarioConfig, Task, OBS_DIM};

/// Seed block shared by every evaluation, independent of the training seed.
pub const EVAL_SEED_BASE: u64 = 0x5EED_E7A1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalCell {
    pub density: Density,
    pub episodes: u32,
    pub success: u32,
    pub collision: u32,
    pub timeout: u32,
}

impl EvalCell {
    fn pct(&self, n: u32) -> f64 {
        if self.episodes == 0 {
            0.0
        } else {
            (n as f64 * 1000.0 / self.episodes as f64).round() / 10.0
        }
    }

    /// Percentages to one decimal. The timeout share is the remainder so the
    /// three always add up to 100.
    pub fn rates(&self) -> (f64, f64, f64) {
        let s = self.pct(self.success);
        let c = self.pct(self.collision);
        let to = ((1000.0 - (s * 10.0).round() - (c * 10.0).round()) / 10.0).max(0.0);
        (s, c, to)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: Task,
    pub label: String,
    pub cells: Vec<EvalCell>,
}

impl EvalReport {
    pub fn cell(&self, density: Density) -> Option<&EvalCell> {
        self.cells.iter().find(|c| c.density == density)
    }

    pub fn write_json(&self, path: &Path) -> Result<(), FlowError> {
        let text = serde_json::to_string_pretty(self).map_err(|e| FlowError::Config(e.to_string()))?;
        std::fs::write(path, text + "\n")?;
        Ok(())
    }

    pub fn read_json(path: &Path) -> Result<Self, FlowError> {
        serde_json::from_str(&std::fs::read_to_string(path)?)
            .map_err(|e| FlowError::Config(format!("{}: {e}", path.display())))
    }
}

/// Evaluates an arbitrary action source: interactive SVs, `episodes` seeds
/// from the fixed block per density.
pub fn evaluate_with(
    scenario: &ScenarioConfig,
    densities: &[Density],
    episodes: u32,
    interval: u32,
    label: &str,
    act: &mut dyn FnMut(&[f64; OBS_DIM]) -> Result<ActionSample, RlError>,
) -> Result<EvalReport, FlowError> {
    let mut cells = Vec::new();
    for &density in densities {
        let curriculum = CurriculumId::new(density, MotionMode::Interactive);
        let mut cell = EvalCell { density, episodes, success: 0, collision: 0, timeout: 0 };
        for i in 0..episodes as u64 {
            let seed = derive_seed(EVAL_SEED_BASE, density as u64, i);
            let run = run_episode(scenario, curriculum, seed, None, interval, false, act)?;
            match run.outcome {
                OutcomeKind::Success => cell.success += 1,
                OutcomeKind::Collision => cell.collision += 1,
                _ => cell.timeout += 1,
            }
        }
        cells.push(cell);
    }
    Ok(EvalReport { task: scenario.task, label: label.to_string(), cells })
}

/// Greedy evaluation of a policy.
pub fn evaluate_policy(
    policy: &Policy,
    scenario: &ScenarioConfig,
    densities: &[Density],
    episodes: u32,
    interval: u32,
    label: &str,
) -> Result<EvalReport, FlowError> {
    // Greedy selection draws nothing from the generator.
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
    evaluate_with(scenario, densities, episodes, interval, label, &mut |obs| {
        policy.act(ndarray::ArrayView1::from(&obs[..]), true, &mut rng)
    })
}

/// Greedy evaluation of a checkpoint file.
pub fn evaluate(
    checkpoint: &Path,
    task: Task,
    densities: &[Density],
    episodes: u32,
    interval: u32,
) -> Result<EvalReport, FlowError> {
    let state = load_checkpoint(checkpoint)?;
    let label = checkpoint.display().to_string();
    evaluate_policy(&state.policy, &ScenarioConfig::for_task(task), densities, episodes, interval, &label)
}
