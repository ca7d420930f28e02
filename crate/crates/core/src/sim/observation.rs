use super::geometry::wrap_angle;
use super::vehicle::StateMatrix;

pub const N_OBS_MAX: usize = 4;
pub const OBS_ROWS: usize = N_OBS_MAX + 1;
pub const OBS_DIM: usize = OBS_ROWS * 4;

/// Longitudinal offset of a padded ("far ahead, irrelevant") SV row.
pub const PAD_DISTANCE: f64 = 100.0;
pub const PAD_ROW: [f64; 4] = [PAD_DISTANCE, 0.0, 0.0, 0.0];

/// Fixed-width observation: row 0 is destination-relative, rows 1.. are the
/// nearest SVs relative to the ego, nearest first, padded with [`PAD_ROW`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub rows: [[f64; 4]; OBS_ROWS],
}

impl Observation {
    pub fn flatten(&self) -> [f64; OBS_DIM] {
        let mut out = [0.0; OBS_DIM];
        for (i, row) in self.rows.iter().enumerate() {
            out[i * 4..i * 4 + 4].copy_from_slice(row);
        }
        out
    }
}

pub fn observe(state: &StateMatrix, goal: (f64, f64), heading_ref: f64) -> Observation {
    let ego = &state.ego;
    let mut rows = [PAD_ROW; OBS_ROWS];
    rows[0] = [
        goal.0 - ego.x,
        goal.1 - ego.y,
        ego.v,
        wrap_angle(heading_ref - ego.psi),
    ];
    let mut order: Vec<(f64, usize)> = state
        .svs
        .iter()
        .enumerate()
        .map(|(i, sv)| (ego.distance_to(sv), i))
        .collect();
    // Ties resolve by spawn index.
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    for (row, &(_, i)) in rows[1..].iter_mut().zip(&order) {
        let sv = &state.svs[i];
        *row = [sv.x - ego.x, sv.y - ego.y, sv.v - ego.v, wrap_angle(sv.psi - ego.psi)];
    }
    Observation { rows }
}
