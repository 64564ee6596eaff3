/// Requested viewpoint relative to the input view, in degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngleQuery {
    pub delta_yaw: f64,
    pub delta_pitch: f64,
}

impl AngleQuery {
    pub fn new(delta_yaw: f64, delta_pitch: f64) -> Self {
        AngleQuery {
            delta_yaw,
            delta_pitch,
        }
    }

    /// `(sin dyaw, cos dyaw, sin dpitch, cos dpitch)`.
    pub fn encode(&self) -> [f64; 4] {
        let (sy, cy) = sin_cos_deg(self.delta_yaw);
        let (sp, cp) = sin_cos_deg(self.delta_pitch);
        [sy, cy, sp, cp]
    }
}

pub fn encode_angle(q: &AngleQuery) -> [f64; 4] {
    q.encode()
}

/// Sine and cosine of an angle in degrees. The argument is reduced to a
/// quadrant first, so angles that differ by multiples of 360 give bitwise
/// equal results and multiples of 90 are exact.
pub fn sin_cos_deg(deg: f64) -> (f64, f64) {
    let a = deg.rem_euclid(360.0);
    let quadrant = (a / 90.0).floor();
    let r = (a - quadrant * 90.0).to_radians();
    let (s, c) = r.sin_cos();
    match quadrant as i64 {
        0 => (s, c),
        1 => (c, -s),
        2 => (-s, -c),
        // rem_euclid can round up to exactly 360 for tiny negative inputs
        3 => (-c, s),
        _ => (0.0, 1.0),
    }
}
