use crate::sim::observation::PAD_DISTANCE;

/// Documentation entry for one accessible variable.
#[derive(Debug, Clone, Copy)]
pub struct VarSpec {
    pub name: &'static str,
    pub unit: &'static str,
    pub range: &'static str,
    pub doc: &'static str,
}

pub const N_VARS: usize = 14;

/// The variables a reward program may read. Index order matches
/// [`AccessibleVars::to_array`].
pub const VAR_SPECS: [VarSpec; N_VARS] = [
    VarSpec { name: "v_ego", unit: "m/s", range: "[0, v_limit]", doc: "ego speed" },
    VarSpec { name: "v_limit", unit: "m/s", range: "constant per scenario", doc: "road speed limit" },
    VarSpec { name: "dist_to_goal", unit: "m", range: "[0, road_length + road width]", doc: "Euclidean distance from the ego to the destination point" },
    VarSpec { name: "lane_offset", unit: "m", range: "[-lane_width/2, lane_width/2]", doc: "signed lateral offset from the nearest lane centerline (positive = left)" },
    VarSpec { name: "heading_error", unit: "rad", range: "[-pi, pi]", doc: "ego heading relative to the road direction (positive = left)" },
    VarSpec { name: "min_gap_sv", unit: "m", range: "(0, 100]", doc: "center distance to the nearest SV; 100 when there is none" },
    VarSpec { name: "collision", unit: "flag", range: "{0, 1}", doc: "1 on the step the ego collides or leaves the road" },
    VarSpec { name: "success", unit: "flag", range: "{0, 1}", doc: "1 on the step the ego reaches the goal region" },
    VarSpec { name: "timeout", unit: "flag", range: "{0, 1}", doc: "1 on the step the episode hits max_steps" },
    VarSpec { name: "lane_change_event", unit: "flag", range: "{0, 1}", doc: "1 on a step where the ego crossed into another lane" },
    VarSpec { name: "lane_change_times", unit: "count", range: "[0, max_steps]", doc: "cumulative lane changes so far this episode" },
    VarSpec { name: "N_sv", unit: "count", range: "[0, 8]", doc: "number of surrounding vehicles in the episode" },
    VarSpec { name: "step", unit: "count", range: "[1, max_steps]", doc: "simulation step index within the episode" },
    VarSpec { name: "max_steps", unit: "count", range: "constant per scenario", doc: "episode step limit" },
];

pub fn var_index(name: &str) -> Option<usize> {
    VAR_SPECS.iter().position(|v| v.name == name)
}

/// Values bound to the program variables at one simulation step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccessibleVars {
    pub v_ego: f64,
    pub v_limit: f64,
    pub dist_to_goal: f64,
    pub lane_offset: f64,
    pub heading_error: f64,
    pub min_gap_sv: f64,
    pub collision: bool,
    pub success: bool,
    pub timeout: bool,
    pub lane_change_event: bool,
    pub lane_change_times: u32,
    pub n_sv: u32,
    pub step: u32,
    pub max_steps: u32,
}

impl Default for AccessibleVars {
    fn default() -> Self {
        Self {
            v_ego: 0.0,
            v_limit: 1.0,
            dist_to_goal: 0.0,
            lane_offset: 0.0,
            heading_error: 0.0,
            min_gap_sv: PAD_DISTANCE,
            collision: false,
            success: false,
            timeout: false,
            lane_change_event: false,
            lane_change_times: 0,
            n_sv: 0,
            step: 0,
            max_steps: 1,
        }
    }
}

fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

impl AccessibleVars {
    pub fn to_array(&self) -> [f64; N_VARS] {
        [
            self.v_ego,
            self.v_limit,
            self.dist_to_goal,
            self.lane_offset,
            self.heading_error,
            self.min_gap_sv,
            flag(self.collision),
            flag(self.success),
            flag(self.timeout),
            flag(self.lane_change_event),
            self.lane_change_times as f64,
            self.n_sv as f64,
            self.step as f64,
            self.max_steps as f64,
        ]
    }

    /// Markdown table of the variable schema, used in prompts and docs.
    pub fn schema_table() -> String {
        let mut out = String::from("| variable | unit | range | meaning |\n|---|---|---|---|\n");
        for v in VAR_SPECS {
            out.push_str(&format!("| {} | {} | {} | {} |\n", v.name, v.unit, v.range, v.doc));
        }
        out
    }
}
