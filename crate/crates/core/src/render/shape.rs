use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::vec3::Vec3;
use crate::error::{Error, Result};

/// Radius of the bounding sphere every instance is scaled to. Slightly under
/// one so the whole object stays inside the 40 degree frustum at distance 2.5.
pub const NORMALIZED_RADIUS: f64 = 0.85;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ShapeClass {
    Can,
    Mug,
    Bottle,
    Box,
    TableLike,
}

impl ShapeClass {
    pub const ALL: [ShapeClass; 5] = [
        ShapeClass::Can,
        ShapeClass::Mug,
        ShapeClass::Bottle,
        ShapeClass::Box,
        ShapeClass::TableLike,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ShapeClass::Can => "can",
            ShapeClass::Mug => "mug",
            ShapeClass::Bottle => "bottle",
            ShapeClass::Box => "box",
            ShapeClass::TableLike => "table-like",
        }
    }

    /// Surface albedo. Every class is rendered in the same blue.
    pub fn color(self) -> [f64; 3] {
        [0.16, 0.36, 0.88]
    }

    /// True for classes whose silhouette does not change under yaw at pitch 0.
    pub fn is_rotationally_symmetric(self) -> bool {
        matches!(self, ShapeClass::Can | ShapeClass::Bottle)
    }

    fn tag(self) -> u64 {
        self as u64 + 1
    }
}

impl fmt::Display for ShapeClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ShapeClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ShapeClass::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::UnknownClass(s.to_string()))
    }
}

/// Raw (pre-normalization) dimensions of one instance. Lengths are full
/// sizes unless the field name says `half`.
#[derive(Debug, Clone, PartialEq)]
pub enum ShapeParams {
    Can {
        radius: f64,
        height: f64,
    },
    Mug {
        radius: f64,
        height: f64,
        wall: f64,
        handle_major: f64,
        handle_minor: f64,
    },
    Bottle {
        body_radius: f64,
        body_height: f64,
        neck_radius: f64,
        neck_height: f64,
        shoulder: f64,
    },
    Box {
        half_x: f64,
        half_y: f64,
        half_z: f64,
    },
    TableLike {
        top_half_x: f64,
        top_half_z: f64,
        top_thickness: f64,
        leg_half: f64,
        height: f64,
    },
}

impl ShapeParams {
    fn sample(class: ShapeClass, rng: &mut ChaCha8Rng) -> ShapeParams {
        let mut u = |lo: f64, hi: f64| rng.gen_range(lo..hi);
        match class {
            ShapeClass::Can => ShapeParams::Can {
                radius: u(0.28, 0.45),
                height: u(0.8, 1.3),
            },
            ShapeClass::Mug => {
                let radius = u(0.32, 0.45);
                let height = u(0.7, 1.0);
                ShapeParams::Mug {
                    radius,
                    height,
                    wall: u(0.04, 0.07),
                    handle_major: height * u(0.22, 0.3),
                    handle_minor: u(0.035, 0.055),
                }
            }
            ShapeClass::Bottle => ShapeParams::Bottle {
                body_radius: u(0.24, 0.34),
                body_height: u(0.7, 1.0),
                neck_radius: u(0.08, 0.12),
                neck_height: u(0.3, 0.45),
                shoulder: u(0.08, 0.15),
            },
            ShapeClass::Box => ShapeParams::Box {
                half_x: u(0.25, 0.6),
                half_y: u(0.25, 0.6),
                half_z: u(0.25, 0.6),
            },
            ShapeClass::TableLike => ShapeParams::TableLike {
                top_half_x: u(0.5, 0.8),
                top_half_z: u(0.35, 0.6),
                top_thickness: u(0.04, 0.08),
                leg_half: u(0.03, 0.06),
                height: u(0.5, 0.8),
            },
        }
    }

    /// Named values, in declaration order.
    pub fn entries(&self) -> Vec<(&'static str, f64)> {
        match *self {
            ShapeParams::Can { radius, height } => vec![("radius", radius), ("height", height)],
            ShapeParams::Mug {
                radius,
                height,
                wall,
                handle_major,
                handle_minor,
            } => vec![
                ("radius", radius),
                ("height", height),
                ("wall", wall),
                ("handle_major", handle_major),
                ("handle_minor", handle_minor),
            ],
            ShapeParams::Bottle {
                body_radius,
                body_height,
                neck_radius,
                neck_height,
                shoulder,
            } => vec![
                ("body_radius", body_radius),
                ("body_height", body_height),
                ("neck_radius", neck_radius),
                ("neck_height", neck_height),
                ("shoulder", shoulder),
            ],
            ShapeParams::Box {
                half_x,
                half_y,
                half_z,
            } => vec![("half_x", half_x), ("half_y", half_y), ("half_z", half_z)],
            ShapeParams::TableLike {
                top_half_x,
                top_half_z,
                top_thickness,
                leg_half,
                height,
            } => vec![
                ("top_half_x", top_half_x),
                ("top_half_z", top_half_z),
                ("top_thickness", top_thickness),
                ("leg_half", leg_half),
                ("height", height),
            ],
        }
    }

    /// Axis-aligned bounds `(min, max)` of the raw shape.
    fn bounds(&self) -> (Vec3, Vec3) {
        match *self {
            ShapeParams::Can { radius, height } => (
                Vec3::new(-radius, -height / 2.0, -radius),
                Vec3::new(radius, height / 2.0, radius),
            ),
            ShapeParams::Mug {
                radius,
                height,
                handle_major,
                handle_minor,
                ..
            } => (
                Vec3::new(-radius, -height / 2.0, -radius),
                Vec3::new(radius + handle_major + handle_minor, height / 2.0, radius),
            ),
            ShapeParams::Bottle {
                body_radius,
                body_height,
                neck_height,
                ..
            } => (
                Vec3::new(-body_radius, 0.0, -body_radius),
                Vec3::new(body_radius, body_height + neck_height, body_radius),
            ),
            ShapeParams::Box {
                half_x,
                half_y,
                half_z,
            } => (
                Vec3::new(-half_x, -half_y, -half_z),
                Vec3::new(half_x, half_y, half_z),
            ),
            ShapeParams::TableLike {
                top_half_x,
                top_half_z,
                height,
                ..
            } => (
                Vec3::new(-top_half_x, 0.0, -top_half_z),
                Vec3::new(top_half_x, height, top_half_z),
            ),
        }
    }

    /// Signed distance (or a lower bound of it) in raw coordinates.
    fn sdf(&self, p: Vec3) -> f64 {
        match *self {
            ShapeParams::Can { radius, height } => sd_cylinder(p, radius, height / 2.0),
            ShapeParams::Mug {
                radius,
                height,
                wall,
                handle_major,
                handle_minor,
            } => {
                let h = height / 2.0;
                let outer = sd_cylinder(p, radius, h);
                // Cavity starts one wall thickness above the base and runs
                // past the rim so the top stays open.
                let inner = sd_cylinder(
                    p - Vec3::new(0.0, wall + 0.5, 0.0),
                    radius - wall,
                    h + 0.5 - wall,
                );
                let body = outer.max(-inner);
                let handle =
                    sd_torus_xy(p - Vec3::new(radius, 0.0, 0.0), handle_major, handle_minor);
                body.min(handle.max(-outer))
            }
            ShapeParams::Bottle {
                body_radius,
                body_height,
                neck_radius,
                neck_height,
                shoulder,
            } => {
                let body = sd_cylinder(
                    p - Vec3::new(0.0, body_height / 2.0, 0.0),
                    body_radius,
                    body_height / 2.0,
                );
                let neck_center = body_height + neck_height / 2.0 - shoulder / 2.0;
                let neck = sd_cylinder(
                    p - Vec3::new(0.0, neck_center, 0.0),
                    neck_radius,
                    neck_height / 2.0 + shoulder / 2.0,
                );
                smooth_min(body, neck, shoulder)
            }
            ShapeParams::Box {
                half_x,
                half_y,
                half_z,
            } => {
                let r = 0.02;
                sd_box(p, Vec3::new(half_x - r, half_y - r, half_z - r)) - r
            }
            ShapeParams::TableLike {
                top_half_x,
                top_half_z,
                top_thickness,
                leg_half,
                height,
            } => {
                let top = sd_box(
                    p - Vec3::new(0.0, height - top_thickness / 2.0, 0.0),
                    Vec3::new(top_half_x, top_thickness / 2.0, top_half_z),
                );
                // Fold x and z so one leg box covers all four corners.
                let q = Vec3::new(p.x.abs(), p.y, p.z.abs());
                let leg_h = (height - top_thickness) / 2.0;
                let leg = sd_box(
                    q - Vec3::new(
                        top_half_x - 2.0 * leg_half,
                        leg_h,
                        top_half_z - 2.0 * leg_half,
                    ),
                    Vec3::new(leg_half, leg_h, leg_half),
                );
                top.min(leg)
            }
        }
    }
}

fn sd_cylinder(p: Vec3, radius: f64, half_height: f64) -> f64 {
    let dx = (p.x * p.x + p.z * p.z).sqrt() - radius;
    let dy = p.y.abs() - half_height;
    let outside = (dx.max(0.0).powi(2) + dy.max(0.0).powi(2)).sqrt();
    dx.max(dy).min(0.0) + outside
}

/// Torus lying in the xy plane (axis along z).
fn sd_torus_xy(p: Vec3, major: f64, minor: f64) -> f64 {
    let qx = (p.x * p.x + p.y * p.y).sqrt() - major;
    (qx * qx + p.z * p.z).sqrt() - minor
}

fn sd_box(p: Vec3, half: Vec3) -> f64 {
    let q = Vec3::new(p.x.abs() - half.x, p.y.abs() - half.y, p.z.abs() - half.z);
    let outside = Vec3::new(q.x.max(0.0), q.y.max(0.0), q.z.max(0.0)).length();
    q.x.max(q.y.max(q.z)).min(0.0) + outside
}

fn smooth_min(a: f64, b: f64, k: f64) -> f64 {
    let h = (0.5 + 0.5 * (b - a) / k).clamp(0.0, 1.0);
    b + (a - b) * h - k * h * (1.0 - h)
}

/// Anything the ray caster can draw.
pub trait Sdf: Sync {
    /// Signed distance (or a conservative lower bound) at a world point.
    fn distance(&self, p: Vec3) -> f64;
    /// Radius of a sphere about the origin containing the whole surface.
    fn bounding_radius(&self) -> f64;
    /// Albedo of the surface at (or nearest to) `p`.
    fn color_at(&self, p: Vec3) -> [f64; 3];
    /// Whether a camera at `eye` lies outside every object's bounding sphere.
    fn clears(&self, eye: Vec3) -> bool {
        eye.length() > self.bounding_radius()
    }
}

/// A sphere centered at the origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sphere {
    pub radius: f64,
}

impl Sdf for Sphere {
    fn distance(&self, p: Vec3) -> f64 {
        p.length() - self.radius
    }

    fn bounding_radius(&self) -> f64 {
        self.radius
    }

    fn color_at(&self, _: Vec3) -> [f64; 3] {
        ShapeClass::Can.color()
    }
}

/// One concrete object: class, seed and the dimensions drawn from that seed,
/// plus the transform that centers it and fits it into the normalized sphere.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeInstance {
    pub class: ShapeClass,
    pub seed: u64,
    pub params: ShapeParams,
    center: Vec3,
    scale: f64,
}

impl ShapeInstance {
    /// World units per raw unit.
    pub fn scale(&self) -> f64 {
        self.scale
    }
}

pub fn make_instance(class: ShapeClass, seed: u64) -> ShapeInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ class.tag());
    let params = ShapeParams::sample(class, &mut rng);
    let (lo, hi) = params.bounds();
    let center = (lo + hi) * 0.5;
    let half_diagonal = ((hi - lo) * 0.5).length();
    ShapeInstance {
        class,
        seed,
        params,
        center,
        scale: NORMALIZED_RADIUS / half_diagonal,
    }
}

/// [`make_instance`] from a class name.
pub fn make_instance_named(class: &str, seed: u64) -> Result<ShapeInstance> {
    Ok(make_instance(class.parse()?, seed))
}

impl Sdf for ShapeInstance {
    fn distance(&self, p: Vec3) -> f64 {
        self.params.sdf(p * (1.0 / self.scale) + self.center) * self.scale
    }

    fn bounding_radius(&self) -> f64 {
        NORMALIZED_RADIUS
    }

    fn color_at(&self, _: Vec3) -> [f64; 3] {
        self.class.color()
    }
}

/// An instance translated by `offset` in world space.
#[derive(Debug, Clone, PartialEq)]
pub struct Placement {
    pub instance: ShapeInstance,
    pub offset: Vec3,
}

/// Several placed instances viewed together.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Scene {
    pub objects: Vec<Placement>,
}

impl Scene {
    fn nearest(&self, p: Vec3) -> Option<(f64, &Placement)> {
        self.objects
            .iter()
            .map(|o| (o.instance.distance(p - o.offset), o))
            .min_by(|a, b| a.0.total_cmp(&b.0))
    }
}

impl Sdf for Scene {
    fn distance(&self, p: Vec3) -> f64 {
        self.nearest(p).map_or(f64::INFINITY, |(d, _)| d)
    }

    fn bounding_radius(&self) -> f64 {
        self.objects
            .iter()
            .map(|o| o.offset.length() + o.instance.bounding_radius())
            .fold(0.0, f64::max)
    }

    fn color_at(&self, p: Vec3) -> [f64; 3] {
        self.nearest(p)
            .map_or([0.0; 3], |(_, o)| o.instance.color_at(p - o.offset))
    }

    fn clears(&self, eye: Vec3) -> bool {
        self.objects
            .iter()
            .all(|o| o.instance.clears(eye - o.offset))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn class_names_round_trip() {
        for c in ShapeClass::ALL {
            assert_eq!(c.name().parse::<ShapeClass>().unwrap(), c);
        }
        assert!(matches!(
            "chair".parse::<ShapeClass>(),
            Err(Error::UnknownClass(_))
        ));
    }

    #[test]
    fn surface_stays_inside_normalized_sphere() {
        for c in ShapeClass::ALL {
            for seed in 0..5 {
                let inst = make_instance(c, seed);
                // Points just outside the bound must be outside the object.
                for i in 0..200 {
                    let a = i as f64 * 0.7;
                    let b = i as f64 * 0.31;
                    let dir = Vec3::new(a.cos() * b.sin(), b.cos(), a.sin() * b.sin());
                    assert!(
                        inst.distance(dir * (NORMALIZED_RADIUS + 1e-6)) > 0.0,
                        "{c} {seed}"
                    );
                }
                assert!(inst.distance(Vec3::new(0.0, 0.0, 0.0)).is_finite());
            }
        }
    }

    #[test]
    fn mug_is_open_and_has_handle() {
        let inst = make_instance(ShapeClass::Mug, 1);
        let ShapeParams::Mug {
            radius,
            height,
            wall,
            handle_major,
            ..
        } = inst.params
        else {
            panic!()
        };
        // Raw-space probes: inside the cavity is empty, inside the wall is solid,
        // the outermost point of the handle ring is solid.
        assert!(inst.params.sdf(Vec3::new(0.0, height / 2.0 - 0.05, 0.0)) > 0.0);
        assert!(inst.params.sdf(Vec3::new(radius - wall / 2.0, 0.0, 0.0)) < 0.0);
        assert!(inst.params.sdf(Vec3::new(radius + handle_major, 0.0, 0.0)) < 0.0);
    }
}
