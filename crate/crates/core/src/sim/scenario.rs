use std::path::Path;

use serde::{Deserialize, Serialize};

use super::SimError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Overtaking,
    Merging,
}

impl Task {
    pub fn as_str(&self) -> &'static str {
        match self {
            Task::Overtaking => "overtaking",
            Task::Merging => "merging",
        }
    }
}

impl std::str::FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "overtaking" => Ok(Task::Overtaking),
            "merging" => Ok(Task::Merging),
            other => Err(format!("unknown task `{other}` (expected overtaking|merging)")),
        }
    }
}

/// Axis-aligned goal rectangle in road coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GoalRegion {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl GoalRegion {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x_min && x <= self.x_max && y >= self.y_min && y <= self.y_max
    }
}

/// Road layout and episode limits.
///
/// Lanes are indexed left to right. Lane `i` has its centerline at
/// `y = -i * lane_width`, so a left lane change moves toward larger `y`.
/// For merging, the last lane is the on-ramp; it ends at `merge_zone[1]`
/// and may only be left inside `merge_zone`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub task: Task,
    pub lane_count: usize,
    pub lane_width: f64,
    pub road_length: f64,
    #[serde(default)]
    pub merge_zone: Option<[f64; 2]>,
    pub v_limit: f64,
    pub dt: f64,
    pub max_steps: u32,
    pub goal_region: GoalRegion,
    pub start_lane: usize,
    pub target_lane: usize,
    /// Seeded range for the ego's initial longitudinal position.
    pub ego_start_x: [f64; 2],
    #[serde(default)]
    pub ego_start_speed: f64,
}

impl ScenarioConfig {
    pub fn overtaking() -> Self {
        let lane_width = 3.5;
        Self {
            task: Task::Overtaking,
            lane_count: 3,
            lane_width,
            road_length: 220.0,
            merge_zone: None,
            v_limit: 15.0,
            dt: 0.1,
            max_steps: 240,
            goal_region: GoalRegion {
                x_min: 180.0,
                x_max: 220.0,
                y_min: -2.5 * lane_width,
                y_max: 0.5 * lane_width,
            },
            start_lane: 1,
            target_lane: 1,
            ego_start_x: [0.0, 10.0],
            ego_start_speed: 5.0,
        }
    }

    pub fn merging() -> Self {
        let lane_width = 3.5;
        Self {
            task: Task::Merging,
            lane_count: 4,
            lane_width,
            road_length: 220.0,
            merge_zone: Some([50.0, 130.0]),
            v_limit: 15.0,
            dt: 0.1,
            max_steps: 240,
            goal_region: GoalRegion {
                x_min: 180.0,
                x_max: 220.0,
                y_min: -1.5 * lane_width,
                y_max: -0.5 * lane_width,
            },
            start_lane: 3,
            target_lane: 1,
            ego_start_x: [0.0, 10.0],
            ego_start_speed: 5.0,
        }
    }

    pub fn for_task(task: Task) -> Self {
        match task {
            Task::Overtaking => Self::overtaking(),
            Task::Merging => Self::merging(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self, SimError> {
        let cfg: ScenarioConfig =
            toml::from_str(text).map_err(|e| SimError::Config(format!("scenario config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SimError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario config serializes")
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let fail = |msg: String| Err(SimError::Config(msg));
        if self.lane_count < 2 {
            return fail(format!("lane_count must be >= 2, got {}", self.lane_count));
        }
        if self.task == Task::Overtaking && self.lane_count != 3 {
            return fail("overtaking uses exactly 3 lanes".into());
        }
        if !(self.lane_width > 0.0 && self.road_length > 0.0 && self.v_limit > 0.0) {
            return fail("lane_width, road_length and v_limit must be positive".into());
        }
        if !(self.dt > 0.0) {
            return fail(format!("dt must be > 0, got {}", self.dt));
        }
        if self.max_steps == 0 {
            return fail("max_steps must be > 0".into());
        }
        if self.start_lane >= self.lane_count || self.target_lane >= self.lane_count {
            return fail("start_lane/target_lane out of range".into());
        }
        match (self.task, self.merge_zone) {
            (Task::Merging, None) => return fail("merging requires merge_zone".into()),
            (Task::Merging, Some([a, b])) => {
                if !(0.0 <= a && a < b && b <= self.road_length) {
                    return fail(format!("merge_zone [{a}, {b}] must lie within the road"));
                }
                if self.lane_count < 3 {
                    return fail("merging needs two main-road lanes plus the ramp".into());
                }
            }
            _ => {}
        }
        let g = &self.goal_region;
        if !(g.x_min < g.x_max && g.y_min < g.y_max) {
            return fail("goal_region is empty".into());
        }
        if self.ego_start_x[0] > self.ego_start_x[1] {
            return fail("ego_start_x range is reversed".into());
        }
        Ok(())
    }

    pub fn lane_center(&self, lane: usize) -> f64 {
        -(lane as f64) * self.lane_width
    }

    /// Index of the lane whose centerline is nearest to `y`, clamped to the road.
    pub fn nearest_lane(&self, y: f64) -> usize {
        let idx = (-y / self.lane_width).round();
        idx.clamp(0.0, (self.lane_count - 1) as f64) as usize
    }

    /// Signed offset of `y` from the nearest lane centerline.
    pub fn lane_offset(&self, y: f64) -> f64 {
        y - self.lane_center(self.nearest_lane(y))
    }

    pub fn ramp_lane(&self) -> Option<usize> {
        match self.task {
            Task::Merging => Some(self.lane_count - 1),
            Task::Overtaking => None,
        }
    }

    /// Whether `lane` is drivable at longitudinal position `x`.
    pub fn lane_exists_at(&self, lane: usize, x: f64) -> bool {
        if lane >= self.lane_count {
            return false;
        }
        match (self.ramp_lane(), self.merge_zone) {
            (Some(ramp), Some([_, end])) if lane == ramp => x <= end,
            _ => true,
        }
    }

    /// Whether a vehicle in `from` at `x` may move into the adjacent lane `to`.
    pub fn lane_change_allowed(&self, from: usize, to: usize, x: f64) -> bool {
        if !self.lane_exists_at(to, x) || from.abs_diff(to) != 1 {
            return false;
        }
        match (self.ramp_lane(), self.merge_zone) {
            (Some(ramp), Some([start, end])) if from == ramp || to == ramp => x >= start && x <= end,
            _ => true,
        }
    }

    /// Destination point used by the observation and the reward variables.
    pub fn destination(&self) -> (f64, f64) {
        let g = &self.goal_region;
        (0.5 * (g.x_min + g.x_max), self.lane_center(self.target_lane))
    }

    /// True when `(x, y)` is outside the paved area.
    pub fn off_road(&self, x: f64, y: f64) -> bool {
        let half = 0.5 * self.lane_width;
        if y > half {
            return true;
        }
        let lane = self.nearest_lane(y);
        let bottom = self.lane_center(self.lane_count - 1) - half;
        if y < bottom {
            return true;
        }
        // Past the end of the ramp, the ramp strip is no longer paved.
        if let (Some(ramp), Some([_, end])) = (self.ramp_lane(), self.merge_zone) {
            let ramp_top = self.lane_center(ramp) + half;
            if x > end && y < ramp_top && lane == ramp {
                return true;
            }
        }
        false
    }
}
