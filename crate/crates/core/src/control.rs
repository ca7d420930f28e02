//! Decodes the multi-discrete action into a waypoint and reference speed and
//! tracks it with pure pursuit plus a proportional speed law.

use crate::sim::vehicle::{Control, StateMatrix, VehicleState, ACCEL_MAX, ACCEL_MIN, STEER_MAX, WHEELBASE};
use crate::sim::{wrap_angle, ScenarioConfig};

pub const WAYPOINT_SPACING: f64 = 5.0;
pub const N_WAYPOINTS: usize = 5;
pub const N_SPEED_LEVELS: usize = 5;
pub const N_LANE_ACTIONS: usize = 3;
pub const HEAD_SIZES: [usize; 3] = [N_WAYPOINTS, N_SPEED_LEVELS, N_LANE_ACTIONS];

pub const SPEED_GAIN: f64 = 1.0;
pub const MIN_LOOKAHEAD: f64 = 5.0;
pub const LOOKAHEAD_TIME: f64 = 0.5;
/// Heading-error damping added to the pure-pursuit curvature. Plain pure
/// pursuit settles with damping ratio 1/sqrt(2) and overshoots the lane
/// center; this term lifts the ratio above one.
pub const HEADING_DAMPING: f64 = 0.85;

/// Lane-change index order of the third head: keep, left, right.
pub const LANE_CHANGE_BY_INDEX: [i8; N_LANE_ACTIONS] = [0, -1, 1];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Waypoint {
    pub x: f64,
    pub y: f64,
    pub psi_ref: f64,
}

/// A lane centerline sampled at [`WAYPOINT_SPACING`] from the road start.
#[derive(Debug, Clone, PartialEq)]
pub struct Route {
    pub lane: usize,
    pub points: Vec<Waypoint>,
}

impl Route {
    pub fn for_lane(scenario: &ScenarioConfig, lane: usize) -> Self {
        let y = scenario.lane_center(lane);
        let mut points = Vec::new();
        let mut x = 0.0;
        while x <= scenario.road_length + 1e-9 && scenario.lane_exists_at(lane, x) {
            points.push(Waypoint { x, y, psi_ref: 0.0 });
            x += WAYPOINT_SPACING;
        }
        if points.is_empty() {
            points.push(Waypoint { x: 0.0, y, psi_ref: 0.0 });
        }
        Self { lane, points }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum ControlError {
    #[error("action index out of range: ({0}, {1}, {2}) not within (0..5, 0..5, 0..3)")]
    IndexOutOfRange(usize, usize, usize),
}

/// The five route points strictly ahead of the ego, nearest first; padded by
/// repeating the final route point.
pub fn candidate_waypoints(ego: &VehicleState, route: &Route) -> [Waypoint; N_WAYPOINTS] {
    let last = *route.points.last().expect("route is nonempty");
    let mut ahead = route.points.iter().filter(|p| p.x > ego.x).copied();
    std::array::from_fn(|_| ahead.next().unwrap_or(last))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecodedAction {
    pub waypoint: Waypoint,
    pub v_ref: f64,
    pub lane_change: i8,
    pub target_lane: usize,
    /// The requested lane change was infeasible and replaced by lane keeping.
    pub coerced: bool,
}

pub fn speed_level(v_limit: f64, index: usize) -> f64 {
    v_limit * index as f64 / (N_SPEED_LEVELS - 1) as f64
}

pub fn decode(
    action: [usize; 3],
    state: &StateMatrix,
    scenario: &ScenarioConfig,
) -> Result<DecodedAction, ControlError> {
    let [i_wp, i_v, i_lc] = action;
    if i_wp >= N_WAYPOINTS || i_v >= N_SPEED_LEVELS || i_lc >= N_LANE_ACTIONS {
        return Err(ControlError::IndexOutOfRange(i_wp, i_v, i_lc));
    }
    let ego = &state.ego;
    let current = scenario.nearest_lane(ego.y);
    let requested = LANE_CHANGE_BY_INDEX[i_lc];
    let target = current as i64 + requested as i64;
    let feasible = requested == 0
        || (target >= 0 && scenario.lane_change_allowed(current, target as usize, ego.x));
    let (lane_change, target_lane) = if feasible {
        (requested, target as usize)
    } else {
        (0, current)
    };
    let route = Route::for_lane(scenario, target_lane);
    let waypoint = candidate_waypoints(ego, &route)[i_wp];
    Ok(DecodedAction {
        waypoint,
        v_ref: speed_level(scenario.v_limit, i_v),
        lane_change,
        target_lane,
        coerced: !feasible,
    })
}

/// Pure-pursuit steering toward the waypoint plus proportional speed control.
///
/// A waypoint closer than the lookahead distance `max(5, 0.5 v)` is slid
/// forward along its reference heading to the lookahead distance.
pub fn track(decoded: &DecodedAction, ego: &VehicleState) -> Control {
    let wp = decoded.waypoint;
    let lookahead = MIN_LOOKAHEAD.max(LOOKAHEAD_TIME * ego.v);
    let (s_ref, c_ref) = wp.psi_ref.sin_cos();
    let along = (wp.x - ego.x) * c_ref + (wp.y - ego.y) * s_ref;
    let slide = (lookahead - along).max(0.0);
    let (tx, ty) = (wp.x + slide * c_ref, wp.y + slide * s_ref);

    let (s, c) = ego.psi.sin_cos();
    let dx = tx - ego.x;
    let dy = ty - ego.y;
    let forward = dx * c + dy * s;
    let lateral = -dx * s + dy * c;
    let dist_sq = forward * forward + lateral * lateral;
    let pursuit = if dist_sq > 0.0 { 2.0 * lateral / dist_sq } else { 0.0 };
    let dist = dist_sq.sqrt().max(1e-9);
    let curvature = pursuit - HEADING_DAMPING * wrap_angle(ego.psi - wp.psi_ref) / dist;
    let steer = (WHEELBASE * curvature).atan().clamp(-STEER_MAX, STEER_MAX);
    let accel = (SPEED_GAIN * (decoded.v_ref - ego.v)).clamp(ACCEL_MIN, ACCEL_MAX);
    Control::new(accel, if steer == 0.0 { 0.0 } else { steer })
}

/// Heading error of the ego with respect to a waypoint's reference heading.
pub fn heading_error(ego: &VehicleState, wp: &Waypoint) -> f64 {
    wrap_angle(ego.psi - wp.psi_ref)
}
