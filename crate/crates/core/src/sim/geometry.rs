use std::f64::consts::PI;

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(angle: f64) -> f64 {
    let mut a = angle % (2.0 * PI);
    if a <= -PI {
        a += 2.0 * PI;
    } else if a > PI {
        a -= 2.0 * PI;
    }
    a
}

/// A rectangle centered at `(x, y)` rotated by `heading`, with full `length`
/// along the heading axis and full `width` across it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientedRect {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub length: f64,
    pub width: f64,
}

impl OrientedRect {
    pub fn new(x: f64, y: f64, heading: f64, length: f64, width: f64) -> Self {
        Self {
            x,
            y,
            heading,
            length,
            width,
        }
    }

    fn axes(&self) -> [(f64, f64); 2] {
        let (s, c) = self.heading.sin_cos();
        [(c, s), (-s, c)]
    }

    pub fn corners(&self) -> [(f64, f64); 4] {
        let [(ax, ay), (bx, by)] = self.axes();
        let hl = self.length / 2.0;
        let hw = self.width / 2.0;
        [
            (self.x + ax * hl + bx * hw, self.y + ay * hl + by * hw),
            (self.x - ax * hl + bx * hw, self.y - ay * hl + by * hw),
            (self.x - ax * hl - bx * hw, self.y - ay * hl - by * hw),
            (self.x + ax * hl - bx * hw, self.y + ay * hl - by * hw),
        ]
    }

    /// Point containment, boundary inclusive.
    pub fn contains(&self, px: f64, py: f64) -> bool {
        let [(ax, ay), (bx, by)] = self.axes();
        let dx = px - self.x;
        let dy = py - self.y;
        (dx * ax + dy * ay).abs() <= self.length / 2.0 && (dx * bx + dy * by).abs() <= self.width / 2.0
    }

    // Half-width of the projection onto a unit axis.
    fn projected_radius(&self, axis: (f64, f64)) -> f64 {
        let [(ax, ay), (bx, by)] = self.axes();
        self.length / 2.0 * (axis.0 * ax + axis.1 * ay).abs()
            + self.width / 2.0 * (axis.0 * bx + axis.1 * by).abs()
    }
}

/// Separating-axis overlap test. Touching rectangles count as intersecting.
pub fn check_collision(a: &OrientedRect, b: &OrientedRect) -> bool {
    let dx = b.x - a.x;
    let dy = b.y - a.y;
    for axis in a.axes().into_iter().chain(b.axes()) {
        let dist = (dx * axis.0 + dy * axis.1).abs();
        if dist > a.projected_radius(axis) + b.projected_radius(axis) {
            return false;
        }
    }
    true
}
