//! Surrounding-vehicle behaviors: hold still, hold speed, or IDM car
//! following with MOBIL-style lane changes.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::vehicle::{VehicleState, ACCEL_MAX, ACCEL_MIN};
use crate::curriculum::MotionMode;

/// Per-vehicle driving style. Drawn once per SV at spawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriverStyle {
    pub desired_speed: f64,
    pub time_headway: f64,
    pub politeness: f64,
    pub max_accel: f64,
    pub comfort_decel: f64,
    pub min_gap: f64,
}

impl DriverStyle {
    pub const DELTA: f64 = 4.0;
    pub const SAFE_DECEL: f64 = 4.0;
    pub const CHANGE_THRESHOLD: f64 = 0.2;

    pub fn sample<R: Rng>(rng: &mut R, v_limit: f64) -> Self {
        Self {
            desired_speed: rng.random_range(0.6..=1.0) * v_limit,
            time_headway: rng.random_range(1.0..=2.0),
            politeness: rng.random_range(0.2..=0.8),
            max_accel: 1.5,
            comfort_decel: 2.0,
            min_gap: 2.0,
        }
    }

    /// IDM acceleration. `leader` is `(bumper gap, leader speed)`.
    pub fn idm_accel(&self, v: f64, leader: Option<(f64, f64)>) -> f64 {
        let free = 1.0 - (v / self.desired_speed).powf(Self::DELTA);
        let interaction = match leader {
            Some((gap, v_lead)) => {
                let gap = gap.max(0.1);
                let s_star = self.min_gap
                    + (v * self.time_headway
                        + v * (v - v_lead) / (2.0 * (self.max_accel * self.comfort_decel).sqrt()))
                    .max(0.0);
                (s_star / gap).powi(2)
            }
            None => 0.0,
        };
        self.max_accel * (free - interaction)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LaneDecision {
    Keep,
    Left,
    Right,
}

/// Another vehicle as seen from the subject: bumper gap (>= 0) and speed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub gap: f64,
    pub v: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LaneView {
    pub leader: Option<Neighbor>,
    pub follower: Option<Neighbor>,
}

/// What an SV perceives: its own lane, plus the adjacent lanes it could legally move into.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LocalTraffic {
    pub current: LaneView,
    pub left: Option<LaneView>,
    pub right: Option<LaneView>,
    /// Whether the lane-change logic may run this step (not mid-maneuver, cooldown elapsed).
    pub may_change_lane: bool,
}

fn lead(n: Option<Neighbor>) -> Option<(f64, f64)> {
    n.map(|n| (n.gap, n.v))
}

/// Acceleration and lane decision for one SV.
pub fn sv_policy(
    mode: MotionMode,
    subject: &VehicleState,
    style: &DriverStyle,
    spawn_speed: f64,
    traffic: &LocalTraffic,
    dt: f64,
) -> (f64, LaneDecision) {
    match mode {
        MotionMode::Stationary => ((-subject.v / dt).max(ACCEL_MIN), LaneDecision::Keep),
        MotionMode::ConstantVelocity => (
            ((spawn_speed - subject.v) / dt).clamp(ACCEL_MIN, ACCEL_MAX),
            LaneDecision::Keep,
        ),
        MotionMode::Interactive => {
            let accel = style
                .idm_accel(subject.v, lead(traffic.current.leader))
                .clamp(ACCEL_MIN, ACCEL_MAX);
            let decision = if traffic.may_change_lane {
                mobil_decision(subject, style, accel, traffic)
            } else {
                LaneDecision::Keep
            };
            (accel, decision)
        }
    }
}

fn mobil_decision(
    subject: &VehicleState,
    style: &DriverStyle,
    accel_here: f64,
    traffic: &LocalTraffic,
) -> LaneDecision {
    // Followers are approximated with the subject's own style.
    let follower_gain = |old_follower: Option<Neighbor>, new_follower: Option<Neighbor>| {
        let mut gain = 0.0;
        if let Some(f) = new_follower {
            let before = style.idm_accel(f.v, None);
            let after = style.idm_accel(f.v, Some((f.gap, subject.v)));
            gain += after - before;
        }
        if let Some(f) = old_follower {
            let before = style.idm_accel(f.v, Some((f.gap, subject.v)));
            let after = style.idm_accel(f.v, None);
            gain += after - before;
        }
        gain
    };

    let mut best = (LaneDecision::Keep, DriverStyle::CHANGE_THRESHOLD);
    for (decision, view) in [
        (LaneDecision::Left, traffic.left),
        (LaneDecision::Right, traffic.right),
    ] {
        let Some(view) = view else { continue };
        if let Some(f) = view.follower {
            let forced = style.idm_accel(f.v, Some((f.gap, subject.v)));
            if forced < -DriverStyle::SAFE_DECEL || f.gap < style.min_gap {
                continue;
            }
        }
        if view.leader.is_some_and(|l| l.gap < style.min_gap) {
            continue;
        }
        let accel_there = style.idm_accel(subject.v, lead(view.leader));
        let incentive = accel_there - accel_here
            + style.politeness * follower_gain(traffic.current.follower, view.follower);
        if incentive > best.1 {
            best = (decision, incentive);
        }
    }
    best.0
}
