use indexmap::IndexMap;

use super::FlowError;
use crate::control::{decode, track};
use crate::curriculum::CurriculumId;
use crate::reward::{AccessibleVars, RewardProgram};
use crate::rl::{ActionSample, RlError};
use crate::sim::{DrivingEnv, OutcomeKind, ScenarioConfig, TrajectoryRow, OBS_DIM};

/// One policy decision and the reward accumulated over its sim steps.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub obs: [f64; OBS_DIM],
    pub action: [usize; 3],
    pub log_prob: f64,
    pub value: f64,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRun {
    pub outcome: OutcomeKind,
    pub steps: u32,
    pub total_reward: f64,
    pub components: IndexMap<String, f64>,
    pub lane_changes: u32,
    pub eval_errors: u32,
    pub div_by_zero_steps: u32,
    pub transitions: Vec<Transition>,
    pub trajectory: Option<Vec<TrajectoryRow>>,
}

/// Rolls out one episode. `act` picks an action from a raw observation; the
/// chosen action is held for `interval` simulation steps. Without a program
/// every reward is zero. A step whose reward is non-finite scores 0 and is
/// counted in `eval_errors`.
pub fn run_episode(
    scenario: &ScenarioConfig,
    curriculum: CurriculumId,
    env_seed: u64,
    program: Option<&RewardProgram>,
    interval: u32,
    record_trajectory: bool,
    act: &mut dyn FnMut(&[f64; OBS_DIM]) -> Result<ActionSample, RlError>,
) -> Result<EpisodeRun, FlowError> {
    let mut env = DrivingEnv::reset(scenario, curriculum, env_seed)?;
    if record_trajectory {
        env.record_trajectory();
    }
    let n_sv = env.state().svs.len() as u32;
    let mut run = EpisodeRun {
        outcome: OutcomeKind::Running,
        steps: 0,
        total_reward: 0.0,
        components: program.map(|p| p.component_names().into_iter().map(|n| (n, 0.0)).collect()).unwrap_or_default(),
        lane_changes: 0,
        eval_errors: 0,
        div_by_zero_steps: 0,
        transitions: Vec::new(),
        trajectory: None,
    };
    while !run.outcome.is_terminal() {
        let obs = env.observe().flatten();
        let sample = act(&obs)?;
        let action: [usize; 3] = sample
            .action
            .as_slice()
            .try_into()
            .map_err(|_| RlError::InvalidAction(sample.action.clone()))?;
        let decoded = decode(action, env.state(), scenario)?;
        let mut reward = 0.0;
        for _ in 0..interval {
            let res = env.step(track(&decoded, &env.state().ego))?;
            let ev = res.events;
            let kind = res.outcome.kind;
            if let Some(p) = program {
                let vars = AccessibleVars {
                    v_ego: res.state.ego.v,
                    v_limit: scenario.v_limit,
                    dist_to_goal: ev.dist_to_goal,
                    lane_offset: ev.lane_offset,
                    heading_error: ev.heading_error,
                    min_gap_sv: ev.min_gap_sv,
                    collision: kind == OutcomeKind::Collision,
                    success: kind == OutcomeKind::Success,
                    timeout: kind == OutcomeKind::Timeout,
                    lane_change_event: ev.lane_change_event,
                    lane_change_times: ev.lane_change_times,
                    n_sv,
                    step: ev.step,
                    max_steps: scenario.max_steps,
                };
                match p.evaluate(&vars) {
                    Ok(b) => {
                        reward += b.total;
                        run.total_reward += b.total;
                        for (name, v) in &b.components {
                            *run.components.get_mut(name).expect("component of the active program") += v;
                        }
                        if !b.div_by_zero.is_empty() {
                            run.div_by_zero_steps += 1;
                        }
                    }
                    Err(e) => {
                        log::debug!("step {}: {e}", ev.step);
                        run.eval_errors += 1;
                    }
                }
            }
            run.outcome = kind;
            run.steps = res.outcome.step;
            run.lane_changes = ev.lane_change_times;
            if kind.is_terminal() {
                break;
            }
        }
        run.transitions.push(Transition { obs, action, log_prob: sample.log_prob, value: sample.value, reward });
    }
    run.trajectory = env.trajectory().map(<[TrajectoryRow]>::to_vec);
    Ok(run)
}
