use super::vec3::Vec3;
use crate::error::{Error, Result};
use crate::viewnet::sin_cos_deg;

pub const DEFAULT_DISTANCE: f64 = 2.5;
pub const DEFAULT_FOV: f64 = 40.0;

/// Camera on a sphere around the origin, looking at the origin with world +y
/// up. `pitch` is elevation, `yaw` azimuth (interpreted mod 360), both in
/// degrees; roll is always zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraPose {
    pub pitch: f64,
    pub yaw: f64,
    pub distance: f64,
    /// Vertical field of view in degrees.
    pub fov: f64,
}

impl CameraPose {
    pub fn new(pitch: f64, yaw: f64) -> Self {
        CameraPose {
            pitch,
            yaw,
            distance: DEFAULT_DISTANCE,
            fov: DEFAULT_FOV,
        }
    }

    /// Checks the pose against an object of the given bounding radius.
    pub fn validate(&self, object_radius: f64) -> Result<()> {
        if !(self.distance.is_finite() && self.distance > object_radius) {
            return Err(Error::InvalidCamera(format!(
                "distance {} must exceed the object radius {object_radius}",
                self.distance
            )));
        }
        if !(self.pitch.abs() < 90.0) {
            return Err(Error::InvalidCamera(format!(
                "pitch {} must lie strictly between -90 and 90 degrees",
                self.pitch
            )));
        }
        if !(self.fov > 0.0 && self.fov < 180.0) || !self.yaw.is_finite() {
            return Err(Error::InvalidCamera(format!(
                "fov {} / yaw {} out of range",
                self.fov, self.yaw
            )));
        }
        Ok(())
    }

    /// Camera position and orthonormal (forward, right, up) basis.
    pub fn frame(&self) -> (Vec3, Vec3, Vec3, Vec3) {
        let (sp, cp) = sin_cos_deg(self.pitch);
        let (sy, cy) = sin_cos_deg(self.yaw);
        let eye = Vec3::new(cp * sy, sp, cp * cy) * self.distance;
        let forward = Vec3::new(-cp * sy, -sp, -cp * cy);
        let right = Vec3::new(cy, 0.0, -sy);
        let up = right.cross(forward);
        (eye, forward, right, up)
    }
}

/// Normalizes an angle to `[0, 360)`.
pub fn wrap_degrees(a: f64) -> f64 {
    let r = a.rem_euclid(360.0);
    if r >= 360.0 {
        0.0
    } else {
        r
    }
}

/// Inclusive arithmetic sequence `lo, lo + step, ...` up to `hi`.
fn inclusive_steps(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step + 1e-9).floor();
    if n < 0.0 {
        return Vec::new();
    }
    (0..=n as usize).map(|i| lo + i as f64 * step).collect()
}

/// Inclusive pitch/yaw grid. Yaw values are wrapped to `[0, 360)` and
/// deduplicated, so a range that covers the circle more than once yields
/// each direction once. Poses are ordered by pitch, then yaw.
pub fn angle_grid(
    pitch_range: (f64, f64),
    pitch_step: f64,
    yaw_range: (f64, f64),
    yaw_step: f64,
) -> Result<Vec<CameraPose>> {
    if !(pitch_step > 0.0 && yaw_step > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "grid steps must be positive, got pitch {pitch_step}, yaw {yaw_step}"
        )));
    }
    let pitches = inclusive_steps(pitch_range.0, pitch_range.1, pitch_step);
    let mut yaws: Vec<f64> = inclusive_steps(yaw_range.0, yaw_range.1, yaw_step)
        .into_iter()
        .map(wrap_degrees)
        .collect();
    yaws.sort_by(f64::total_cmp);
    yaws.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    Ok(pitches
        .iter()
        .flat_map(|&p| yaws.iter().map(move |&y| CameraPose::new(p, y)))
        .collect())
}

/// Grid description kept alongside datasets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub pitch_range: (f64, f64),
    pub pitch_step: f64,
    pub yaw_range: (f64, f64),
    pub yaw_step: f64,
}

impl GridSpec {
    /// 4 pitches x 30 yaws = 120 training poses.
    pub const TRAINING: GridSpec = GridSpec {
        pitch_range: (0.0, 30.0),
        pitch_step: 10.0,
        yaw_range: (-360.0, 348.0),
        yaw_step: 12.0,
    };

    /// 11 pitches x 60 yaws used for scoring.
    pub const EVALUATION: GridSpec = GridSpec {
        pitch_range: (0.0, 30.0),
        pitch_step: 3.0,
        yaw_range: (0.0, 360.0),
        yaw_step: 6.0,
    };

    pub fn poses(&self) -> Result<Vec<CameraPose>> {
        angle_grid(
            self.pitch_range,
            self.pitch_step,
            self.yaw_range,
            self.yaw_step,
        )
    }

    /// Compact text form `pitch=lo:hi:step yaw=lo:hi:step`.
    pub fn describe(&self) -> String {
        format!(
            "pitch={}:{}:{} yaw={}:{}:{}",
            self.pitch_range.0,
            self.pitch_range.1,
            self.pitch_step,
            self.yaw_range.0,
            self.yaw_range.1,
            self.yaw_step
        )
    }

    pub fn parse(s: &str) -> Result<GridSpec> {
        let bad = || Error::InvalidArgument(format!("malformed grid spec {s:?}"));
        let mut pitch = None;
        let mut yaw = None;
        for part in s.split_whitespace() {
            let (key, val) = part.split_once('=').ok_or_else(bad)?;
            let nums: Vec<f64> = val
                .split(':')
                .map(|v| v.parse::<f64>().map_err(|_| bad()))
                .collect::<Result<_>>()?;
            let [lo, hi, step] = nums[..] else {
                return Err(bad());
            };
            match key {
                "pitch" => pitch = Some((lo, hi, step)),
                "yaw" => yaw = Some((lo, hi, step)),
                _ => return Err(bad()),
            }
        }
        let ((plo, phi, pstep), (ylo, yhi, ystep)) = (pitch.ok_or_else(bad)?, yaw.ok_or_else(bad)?);
        Ok(GridSpec {
            pitch_range: (plo, phi),
            pitch_step: pstep,
            yaw_range: (ylo, yhi),
            yaw_step: ystep,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basis_is_orthonormal() {
        for (p, y) in [(0.0, 0.0), (30.0, 123.0), (-20.0, 270.0)] {
            let (eye, f, r, u) = CameraPose::new(p, y).frame();
            assert!((eye.length() - DEFAULT_DISTANCE).abs() < 1e-12);
            assert!((f + eye * (1.0 / DEFAULT_DISTANCE)).length() < 1e-12);
            for v in [f, r, u] {
                assert!((v.length() - 1.0).abs() < 1e-12);
            }
            assert!(f.dot(r).abs() < 1e-12 && f.dot(u).abs() < 1e-12 && r.dot(u).abs() < 1e-12);
            assert!(u.y > 0.0);
        }
    }

    #[test]
    fn grid_spec_text_round_trips() {
        for g in [GridSpec::TRAINING, GridSpec::EVALUATION] {
            assert_eq!(GridSpec::parse(&g.describe()).unwrap(), g);
        }
        assert!(GridSpec::parse("pitch=0:1 yaw=0:1:1").is_err());
    }

    #[test]
    fn wrap() {
        assert_eq!(wrap_degrees(-360.0), 0.0);
        assert_eq!(wrap_degrees(372.0), 12.0);
        assert_eq!(wrap_degrees(-12.0), 348.0);
    }
}
