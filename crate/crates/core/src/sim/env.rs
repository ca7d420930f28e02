use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::geometry::{check_collision, wrap_angle};
use super::observation::{observe, Observation, PAD_DISTANCE};
use super::scenario::{ScenarioConfig, Task};
use super::traffic::{sv_policy, DriverStyle, LaneDecision, LaneView, LocalTraffic, Neighbor};
use super::vehicle::{bicycle_step, Control, StateMatrix, VehicleState, ACCEL_MAX, ACCEL_MIN};
use super::SimError;
use crate::curriculum::{CurriculumId, Density, MotionMode};

pub const N_SV_MAX: usize = 8;

const SPAWN_ATTEMPTS: usize = 200;
const SPAWN_CLEARANCE: f64 = 6.0;
const SV_LATERAL_SPEED: f64 = 1.2;
const SV_LANE_CHANGE_COOLDOWN: u32 = 30;
/// Lateral tolerance for success inside the goal region.
pub const SUCCESS_LANE_OFFSET: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutcomeKind {
    Success,
    Collision,
    Timeout,
    Running,
}

impl OutcomeKind {
    pub fn is_terminal(&self) -> bool {
        !matches!(self, OutcomeKind::Running)
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            OutcomeKind::Success => "success",
            OutcomeKind::Collision => "collision",
            OutcomeKind::Timeout => "timeout",
            OutcomeKind::Running => "running",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeOutcome {
    pub kind: OutcomeKind,
    pub step: u32,
}

/// Per-step measurements consumed by the reward program.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepEvents {
    pub lane_change_event: bool,
    pub lane_change_times: u32,
    /// Set by the executor when a requested lane change was infeasible.
    pub lane_change_coerced: bool,
    pub off_road: bool,
    pub dist_to_goal: f64,
    pub lane_offset: f64,
    pub heading_error: f64,
    pub min_gap_sv: f64,
    pub step: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub state: StateMatrix,
    pub outcome: EpisodeOutcome,
    pub events: StepEvents,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvAgent {
    pub mode: MotionMode,
    pub style: DriverStyle,
    pub spawn_speed: f64,
    pub target_lane: usize,
    pub cooldown: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub step: u32,
    pub vehicle_id: usize,
    pub x: f64,
    pub y: f64,
    pub v: f64,
    pub psi: f64,
}

/// SV count for a density level.
pub fn sv_count(task: Task, density: Density) -> usize {
    let idx = density as usize;
    match task {
        Task::Merging => [0, 2, 4, 8][idx],
        Task::Overtaking => [0, 1, 2, 3][idx],
    }
}

/// One driving episode. Instances are independent; nothing is shared between them.
#[derive(Debug, Clone)]
pub struct DrivingEnv {
    scenario: ScenarioConfig,
    curriculum: CurriculumId,
    state: StateMatrix,
    agents: Vec<SvAgent>,
    step: u32,
    outcome: EpisodeOutcome,
    ego_lane: usize,
    lane_change_times: u32,
    trajectory: Option<Vec<TrajectoryRow>>,
}

impl DrivingEnv {
    pub fn reset(scenario: &ScenarioConfig, curriculum: CurriculumId, seed: u64) -> Result<Self, SimError> {
        scenario.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let [lo, hi] = scenario.ego_start_x;
        let ego_x = if hi > lo { rng.random_range(lo..=hi) } else { lo };
        let ego = VehicleState::new(
            ego_x,
            scenario.lane_center(scenario.start_lane),
            scenario.ego_start_speed,
            0.0,
        );

        let count = sv_count(scenario.task, curriculum.density);
        let mut placed: Vec<(usize, f64)> = vec![(scenario.start_lane, ego_x)];
        let mut svs = Vec::with_capacity(count);
        let mut agents = Vec::with_capacity(count);
        for i in 0..count {
            let (lane, x) = spawn_slot(scenario, &mut rng, i, ego_x, &placed)?;
            placed.push((lane, x));
            let style = DriverStyle::sample(&mut rng, scenario.v_limit);
            let spawn_speed = match curriculum.mode {
                MotionMode::Stationary => 0.0,
                MotionMode::ConstantVelocity => rng.random_range(0.3..=0.6) * scenario.v_limit,
                MotionMode::Interactive => style.desired_speed,
            };
            svs.push(VehicleState::new(x, scenario.lane_center(lane), spawn_speed, 0.0));
            agents.push(SvAgent {
                mode: curriculum.mode,
                style,
                spawn_speed,
                target_lane: lane,
                cooldown: SV_LANE_CHANGE_COOLDOWN,
            });
        }

        Ok(Self {
            scenario: scenario.clone(),
            curriculum,
            state: StateMatrix { ego, svs },
            agents,
            step: 0,
            outcome: EpisodeOutcome {
                kind: OutcomeKind::Running,
                step: 0,
            },
            ego_lane: scenario.start_lane,
            lane_change_times: 0,
            trajectory: None,
        })
    }

    pub fn scenario(&self) -> &ScenarioConfig {
        &self.scenario
    }

    pub fn curriculum(&self) -> CurriculumId {
        self.curriculum
    }

    pub fn state(&self) -> &StateMatrix {
        &self.state
    }

    pub fn agents(&self) -> &[SvAgent] {
        &self.agents
    }

    pub fn outcome(&self) -> EpisodeOutcome {
        self.outcome
    }

    pub fn step_index(&self) -> u32 {
        self.step
    }

    pub fn ego_lane(&self) -> usize {
        self.ego_lane
    }

    pub fn lane_change_times(&self) -> u32 {
        self.lane_change_times
    }

    /// Test hook: overwrite the kinematic state in place.
    pub fn set_state(&mut self, state: StateMatrix) {
        assert_eq!(state.svs.len(), self.state.svs.len(), "sv count is fixed per episode");
        self.ego_lane = self.scenario.nearest_lane(state.ego.y);
        self.state = state;
    }

    pub fn observe(&self) -> Observation {
        let (gx, gy) = self.scenario.destination();
        observe(&self.state, (gx, gy), 0.0)
    }

    pub fn record_trajectory(&mut self) {
        if self.trajectory.is_none() {
            let mut rows = Vec::new();
            push_rows(&mut rows, self.step, &self.state);
            self.trajectory = Some(rows);
        }
    }

    pub fn trajectory(&self) -> Option<&[TrajectoryRow]> {
        self.trajectory.as_deref()
    }

    /// Current measurements without advancing the simulation.
    pub fn measure(&self) -> StepEvents {
        let ego = &self.state.ego;
        let (gx, gy) = self.scenario.destination();
        let min_gap = self
            .state
            .svs
            .iter()
            .map(|sv| ego.distance_to(sv))
            .fold(PAD_DISTANCE, f64::min)
            .max(1e-3);
        StepEvents {
            lane_change_event: false,
            lane_change_times: self.lane_change_times,
            lane_change_coerced: false,
            off_road: self.scenario.off_road(ego.x, ego.y),
            dist_to_goal: (gx - ego.x).hypot(gy - ego.y),
            lane_offset: self.scenario.lane_offset(ego.y),
            heading_error: wrap_angle(ego.psi),
            min_gap_sv: min_gap,
            step: self.step,
        }
    }

    pub fn step(&mut self, control: Control) -> Result<StepResult, SimError> {
        if self.outcome.kind.is_terminal() {
            return Err(SimError::Usage(format!(
                "step called after terminal outcome {:?} at step {}",
                self.outcome.kind, self.outcome.step
            )));
        }
        let dt = self.scenario.dt;
        let ego_next = bicycle_step(&self.state.ego, control, dt);

        // All SVs react to the same snapshot.
        let snapshot = self.state.clone();
        let mut svs_next = Vec::with_capacity(snapshot.svs.len());
        for i in 0..snapshot.svs.len() {
            let sv = snapshot.svs[i];
            let agent = &mut self.agents[i];
            let lane_now = self.scenario.nearest_lane(sv.y);
            let settled = lane_now == agent.target_lane
                && (sv.y - self.scenario.lane_center(agent.target_lane)).abs() < 0.05;
            let traffic = local_traffic(
                &self.scenario,
                &snapshot,
                i,
                agent.target_lane,
                settled && agent.cooldown == 0,
            );
            let (accel, decision) = sv_policy(agent.mode, &sv, &agent.style, agent.spawn_speed, &traffic, dt);
            match decision {
                LaneDecision::Left if agent.target_lane > 0 => {
                    agent.target_lane -= 1;
                    agent.cooldown = SV_LANE_CHANGE_COOLDOWN;
                }
                LaneDecision::Right => {
                    agent.target_lane += 1;
                    agent.cooldown = SV_LANE_CHANGE_COOLDOWN;
                }
                _ => agent.cooldown = agent.cooldown.saturating_sub(1),
            }
            let accel = accel.clamp(ACCEL_MIN, ACCEL_MAX);
            let v = (sv.v + accel * dt).max(0.0);
            let dy_target = self.scenario.lane_center(agent.target_lane) - sv.y;
            let vy = dy_target.signum() * SV_LATERAL_SPEED.min(dy_target.abs() / dt);
            let psi = if vy == 0.0 || sv.v == 0.0 { 0.0 } else { vy.atan2(sv.v) };
            svs_next.push(VehicleState {
                x: sv.x + sv.v * dt,
                y: sv.y + vy * dt,
                v,
                psi,
                ..sv
            });
        }
        self.state = StateMatrix {
            ego: ego_next,
            svs: svs_next,
        };
        self.step += 1;

        let lane = self.scenario.nearest_lane(self.state.ego.y);
        let lane_change_event = lane != self.ego_lane;
        if lane_change_event {
            self.lane_change_times += 1;
            self.ego_lane = lane;
        }

        let mut events = self.measure();
        events.lane_change_event = lane_change_event;

        let ego_box = self.state.ego.footprint();
        let collided = events.off_road
            || self
                .state
                .svs
                .iter()
                .any(|sv| check_collision(&ego_box, &sv.footprint()));
        let ego = &self.state.ego;
        let kind = if collided {
            OutcomeKind::Collision
        } else if self.scenario.goal_region.contains(ego.x, ego.y)
            && events.lane_offset.abs() < SUCCESS_LANE_OFFSET
        {
            OutcomeKind::Success
        } else if self.step >= self.scenario.max_steps {
            OutcomeKind::Timeout
        } else {
            OutcomeKind::Running
        };
        self.outcome = EpisodeOutcome { kind, step: self.step };

        if let Some(rows) = self.trajectory.as_mut() {
            push_rows(rows, self.step, &self.state);
        }

        Ok(StepResult {
            state: self.state.clone(),
            outcome: self.outcome,
            events,
        })
    }
}

fn push_rows(rows: &mut Vec<TrajectoryRow>, step: u32, state: &StateMatrix) {
    for (id, v) in std::iter::once(&state.ego).chain(&state.svs).enumerate() {
        rows.push(TrajectoryRow {
            step,
            vehicle_id: id,
            x: v.x,
            y: v.y,
            v: v.v,
            psi: v.psi,
        });
    }
}

/// Writes `step,vehicle_id,x,y,v,psi` rows; vehicle 0 is the ego.
pub fn write_trajectory_csv(path: &Path, rows: &[TrajectoryRow]) -> std::io::Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "step,vehicle_id,x,y,v,psi")?;
    for r in rows {
        writeln!(out, "{},{},{},{},{},{}", r.step, r.vehicle_id, r.x, r.y, r.v, r.psi)?;
    }
    out.flush()
}

fn spawn_slot(
    scenario: &ScenarioConfig,
    rng: &mut ChaCha8Rng,
    index: usize,
    ego_x: f64,
    placed: &[(usize, f64)],
) -> Result<(usize, f64), SimError> {
    let min_dx = super::vehicle::EGO_LENGTH + SPAWN_CLEARANCE;
    for _ in 0..SPAWN_ATTEMPTS {
        let (lane, x) = match scenario.task {
            Task::Overtaking => {
                // The first SV always blocks the ego lane.
                let lane = if index == 0 {
                    scenario.start_lane
                } else {
                    rng.random_range(0..scenario.lane_count)
                };
                (lane, ego_x + rng.random_range(25.0..=110.0))
            }
            Task::Merging => {
                let ramp = scenario.lane_count - 1;
                let lane = ramp - 1 - rng.random_range(0..2usize);
                (lane, ego_x + rng.random_range(-20.0..=140.0))
            }
        };
        if x + min_dx / 2.0 > scenario.road_length {
            continue;
        }
        if placed.iter().all(|&(l, px)| l != lane || (px - x).abs() >= min_dx) {
            return Ok((lane, x));
        }
    }
    Err(SimError::Config(format!(
        "could not place SV {index} without overlap after {SPAWN_ATTEMPTS} attempts; road too short for density"
    )))
}

fn local_traffic(
    scenario: &ScenarioConfig,
    state: &StateMatrix,
    subject: usize,
    lane: usize,
    may_change_lane: bool,
) -> LocalTraffic {
    let me = &state.svs[subject];
    let view = |lane: usize| {
        let mut view = LaneView::default();
        let others = std::iter::once(&state.ego)
            .chain(state.svs.iter())
            .enumerate()
            .filter(|&(j, _)| j != subject + 1);
        for (_, other) in others {
            if scenario.nearest_lane(other.y) != lane {
                continue;
            }
            let dx = other.x - me.x;
            let gap = (dx.abs() - 0.5 * (me.length + other.length)).max(0.0);
            let slot = if dx >= 0.0 { &mut view.leader } else { &mut view.follower };
            if slot.is_none_or(|n: Neighbor| gap < n.gap) {
                *slot = Some(Neighbor { gap, v: other.v });
            }
        }
        view
    };
    let side = |to: Option<usize>| {
        to.filter(|&to| scenario.lane_change_allowed(lane, to, me.x))
            .map(view)
    };
    LocalTraffic {
        current: view(lane),
        left: side(lane.checked_sub(1)),
        right: side(Some(lane + 1)),
        may_change_lane,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cid(d: Density, m: MotionMode) -> CurriculumId {
        CurriculumId::new(d, m)
    }

    #[test]
    fn sv_counts_follow_density() {
        for (task, counts) in [(Task::Merging, [0, 2, 4, 8]), (Task::Overtaking, [0, 1, 2, 3])] {
            let sc = ScenarioConfig::for_task(task);
            for (d, &n) in Density::ALL.iter().zip(&counts) {
                for seed in 0..20 {
                    let env = DrivingEnv::reset(&sc, cid(*d, MotionMode::Interactive), seed).unwrap();
                    assert_eq!(env.state().svs.len(), n);
                }
            }
        }
    }

    #[test]
    fn merging_low_seed_7() {
        let env = DrivingEnv::reset(&ScenarioConfig::merging(), cid(Density::Low, MotionMode::Interactive), 7)
            .unwrap();
        assert_eq!(env.state().svs.len(), 2);
    }

    #[test]
    fn reset_is_deterministic() {
        let sc = ScenarioConfig::merging();
        let a = DrivingEnv::reset(&sc, cid(Density::High, MotionMode::Interactive), 42).unwrap();
        let b = DrivingEnv::reset(&sc, cid(Density::High, MotionMode::Interactive), 42).unwrap();
        assert_eq!(a.state(), b.state());
        assert_eq!(a.agents(), b.agents());
    }

    #[test]
    fn no_spawn_overlap() {
        for task in [Task::Merging, Task::Overtaking] {
            let sc = ScenarioConfig::for_task(task);
            for seed in 0..200 {
                let env = DrivingEnv::reset(&sc, cid(Density::High, MotionMode::Stationary), seed).unwrap();
                let s = env.state();
                let all: Vec<_> = std::iter::once(&s.ego).chain(&s.svs).collect();
                for i in 0..all.len() {
                    for j in i + 1..all.len() {
                        assert!(!check_collision(&all[i].footprint(), &all[j].footprint()));
                    }
                }
            }
        }
    }

    #[test]
    fn short_road_is_config_error() {
        let mut sc = ScenarioConfig::merging();
        sc.road_length = 40.0;
        sc.merge_zone = Some([10.0, 30.0]);
        sc.goal_region.x_min = 30.0;
        sc.goal_region.x_max = 40.0;
        let err = DrivingEnv::reset(&sc, cid(Density::High, MotionMode::Interactive), 1).unwrap_err();
        assert!(matches!(err, SimError::Config(_)));
    }

    #[test]
    fn empty_density_ignores_motion_mode() {
        let sc = ScenarioConfig::overtaking();
        let a = DrivingEnv::reset(&sc, cid(Density::Empty, MotionMode::Stationary), 9).unwrap();
        for m in MotionMode::ALL {
            let b = DrivingEnv::reset(&sc, cid(Density::Empty, m), 9).unwrap();
            assert_eq!(a.state(), b.state());
        }
    }

    #[test]
    fn coincident_sv_collides() {
        let sc = ScenarioConfig::overtaking();
        let mut env = DrivingEnv::reset(&sc, cid(Density::Low, MotionMode::Stationary), 3).unwrap();
        let mut s = env.state().clone();
        s.svs[0].x = s.ego.x;
        s.svs[0].y = s.ego.y;
        s.svs[0].v = s.ego.v;
        env.set_state(s);
        let r = env.step(Control::new(0.0, 0.0)).unwrap();
        assert_eq!(r.outcome.kind, OutcomeKind::Collision);
        assert_eq!(r.outcome.step, 1);
        assert!(matches!(env.step(Control::new(0.0, 0.0)), Err(SimError::Usage(_))));
    }

    #[test]
    fn full_brake_times_out() {
        let sc = ScenarioConfig::overtaking();
        let mut env = DrivingEnv::reset(&sc, cid(Density::Empty, MotionMode::Stationary), 3).unwrap();
        loop {
            let r = env.step(Control::new(ACCEL_MIN, 0.0)).unwrap();
            if r.outcome.kind.is_terminal() {
                assert_eq!(r.outcome.kind, OutcomeKind::Timeout);
                assert_eq!(r.outcome.step, sc.max_steps);
                break;
            }
        }
    }

    #[test]
    fn straight_drive_succeeds() {
        let sc = ScenarioConfig::overtaking();
        let mut env = DrivingEnv::reset(&sc, cid(Density::Empty, MotionMode::Stationary), 3).unwrap();
        let out = loop {
            let r = env.step(Control::new(ACCEL_MAX, 0.0)).unwrap();
            if r.outcome.kind.is_terminal() {
                break r.outcome;
            }
        };
        assert_eq!(out.kind, OutcomeKind::Success);
    }

    #[test]
    fn constant_velocity_never_changes_lane() {
        let sc = ScenarioConfig::overtaking();
        let mut sc_long = sc.clone();
        sc_long.max_steps = 1000;
        sc_long.road_length = 5000.0;
        sc_long.goal_region.x_min = 4900.0;
        sc_long.goal_region.x_max = 5000.0;
        let mut env = DrivingEnv::reset(&sc_long, cid(Density::Medium, MotionMode::ConstantVelocity), 5).unwrap();
        let lanes: Vec<usize> = env.agents().iter().map(|a| a.target_lane).collect();
        let speeds: Vec<f64> = env.agents().iter().map(|a| a.spawn_speed).collect();
        // Ego parks on the left edge lane so it never blocks the SVs.
        for _ in 0..1000 {
            if env.outcome().kind.is_terminal() {
                break;
            }
            let mut s = env.state().clone();
            s.ego.x = -100.0;
            s.ego.v = 0.0;
            env.set_state(s);
            env.step(Control::new(0.0, 0.0)).unwrap();
            for (a, (l, v)) in env.agents().iter().zip(lanes.iter().zip(&speeds)) {
                assert_eq!(a.target_lane, *l);
                assert_eq!(a.spawn_speed, *v);
            }
            for (sv, v) in env.state().svs.iter().zip(&speeds) {
                assert!((sv.v - v).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn trajectory_rows_cover_every_vehicle() {
        let sc = ScenarioConfig::overtaking();
        let mut env = DrivingEnv::reset(&sc, cid(Density::Medium, MotionMode::Interactive), 1).unwrap();
        env.record_trajectory();
        for _ in 0..5 {
            env.step(Control::new(1.0, 0.0)).unwrap();
        }
        assert_eq!(env.trajectory().unwrap().len(), 6 * 3);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("traj.csv");
        write_trajectory_csv(&p, env.trajectory().unwrap()).unwrap();
        let text = std::fs::read_to_string(p).unwrap();
        assert!(text.starts_with("step,vehicle_id,x,y,v,psi\n"));
        assert_eq!(text.lines().count(), 19);
    }
}
