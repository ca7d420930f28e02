use serde::{Deserialize, Serialize};

use super::geometry::{wrap_angle, OrientedRect};

pub const EGO_LENGTH: f64 = 4.7;
pub const EGO_WIDTH: f64 = 1.85;
pub const WHEELBASE: f64 = 2.9;

pub const ACCEL_MIN: f64 = -6.0;
pub const ACCEL_MAX: f64 = 3.0;
pub const STEER_MAX: f64 = 0.5;

/// Kinematic ground truth of one vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub x: f64,
    pub y: f64,
    pub v: f64,
    pub psi: f64,
    pub length: f64,
    pub width: f64,
}

impl VehicleState {
    pub fn new(x: f64, y: f64, v: f64, psi: f64) -> Self {
        Self {
            x,
            y,
            v,
            psi,
            length: EGO_LENGTH,
            width: EGO_WIDTH,
        }
    }

    pub fn footprint(&self) -> OrientedRect {
        OrientedRect::new(self.x, self.y, self.psi, self.length, self.width)
    }

    pub fn distance_to(&self, other: &VehicleState) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Ego first, then surrounding vehicles in spawn order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateMatrix {
    pub ego: VehicleState,
    pub svs: Vec<VehicleState>,
}

/// Control input after clamping to the actuator limits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Control {
    pub accel: f64,
    pub steer: f64,
}

impl Control {
    pub fn new(accel: f64, steer: f64) -> Self {
        Self { accel, steer }
    }

    pub fn clamped(self) -> Self {
        Self {
            accel: self.accel.clamp(ACCEL_MIN, ACCEL_MAX),
            steer: self.steer.clamp(-STEER_MAX, STEER_MAX),
        }
    }
}

/// One explicit-Euler step of the kinematic bicycle model about the
/// vehicle reference point.
pub fn bicycle_step(state: &VehicleState, control: Control, dt: f64) -> VehicleState {
    let c = control.clamped();
    let (s, co) = state.psi.sin_cos();
    let yaw_rate = state.v / WHEELBASE * c.steer.tan();
    VehicleState {
        x: state.x + state.v * co * dt,
        y: state.y + state.v * s * dt,
        v: (state.v + c.accel * dt).max(0.0),
        psi: wrap_angle(state.psi + yaw_rate * dt),
        ..*state
    }
}
