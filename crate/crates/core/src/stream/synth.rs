//! Synthetic human motion: a hand spiral, a walked path with turns, and a static pose.
//!
//! All generators start from an example observation, so the first sample of every
//! stream is the example pose itself.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::geom::{Rotation, Transform, Vec3};
use crate::model::Role;
use crate::retarget::{segment, Observation, Side};

/// Human dimensions used to build example poses (m).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HumanBody {
    pub pelvis_height: f64,
    /// Floor-projected pelvis to shoulder joint.
    pub torso_length: f64,
    pub upper_arm: f64,
    pub forearm: f64,
}

impl Default for HumanBody {
    fn default() -> Self {
        HumanBody {
            pelvis_height: 0.95,
            torso_length: 1.45,
            upper_arm: 0.30,
            forearm: 0.27,
        }
    }
}

fn side_ids(side: Side) -> (u32, u32, u32, u32) {
    match side {
        Side::Right => (segment::RIGHT_SHOULDER, segment::RIGHT_UPPER_ARM, segment::RIGHT_FOREARM, segment::RIGHT_HAND),
        Side::Left => (segment::LEFT_SHOULDER, segment::LEFT_UPPER_ARM, segment::LEFT_FOREARM, segment::LEFT_HAND),
    }
}

/// A full 23-segment person pose equivalent to the given robot role poses: the person
/// segment directions match the robot ones, with human segment lengths and a few
/// deliberately different segment orientations.
pub fn person_example(robot: &BTreeMap<Role, Transform>, body: &HumanBody, side: Side) -> Observation {
    let rf = robot[&Role::Footprint];
    let rs = robot[&Role::Shoulder];
    let re = robot[&Role::Elbow];
    let rw = robot[&Role::Wrist];
    let pf = Transform::planar(rf.translation.x, rf.translation.y, rf.rotation.yaw());
    let rel_s = rf.inverse() * rs;
    let chest_rot = pf.rotation * rel_s.rotation;
    let shoulder = pf.transform_point(&(rel_s.translation.normalize() * body.torso_length));

    let p_se = (rs.inverse() * re).translation;
    let p_sw = (rs.inverse() * rw).translation;
    let elbow = shoulder + chest_rot.rotate(&(p_se.normalize() * body.upper_arm));
    let hand = elbow + chest_rot.rotate(&((p_sw - p_se).normalize() * body.forearm));
    let r_se = chest_rot * (rs.inverse() * re).rotation;
    let r_sw = chest_rot * (rs.inverse() * rw).rotation;

    let up = |h: f64| pf.transform_point(&Vec3::new(0.0, 0.0, h));
    let pelvis = Transform::new(pf.rotation, up(body.pelvis_height));
    let chest = Transform::new(chest_rot, pf.transform_point(&Vec3::new(0.0, 0.0, body.pelvis_height + 0.45)));
    let mut obs = Observation::new(0.0)
        .with(segment::PELVIS, pelvis)
        .with(segment::L5, Transform::new(pf.rotation, up(body.pelvis_height + 0.1)))
        .with(segment::L3, Transform::new(pf.rotation, up(body.pelvis_height + 0.2)))
        .with(segment::T12, Transform::new(pf.rotation, up(body.pelvis_height + 0.3)))
        .with(segment::T8, chest)
        .with(segment::NECK, Transform::new(chest_rot, up(shoulder.z - pf.translation.z + 0.05)))
        .with(segment::HEAD, Transform::new(chest_rot, up(shoulder.z - pf.translation.z + 0.15)));

    let (sh, ua, fa, ha) = side_ids(side);
    obs.segments.insert(sh, Transform::new(chest_rot, shoulder));
    obs.segments.insert(ua, Transform::new(r_se * Rotation::rot_x(0.1), shoulder));
    obs.segments.insert(fa, Transform::new(r_se * Rotation::rot_z(0.2), elbow));
    obs.segments.insert(ha, Transform::new(r_sw * Rotation::rot_y(-0.3) * Rotation::rot_x(0.15), hand));

    // the other arm hangs down, mirrored across the sagittal plane
    let (osh, oua, ofa, oha) = side_ids(match side {
        Side::Right => Side::Left,
        Side::Left => Side::Right,
    });
    let local_s = pf.inverse().transform_point(&shoulder);
    let mirror_s = pf.transform_point(&Vec3::new(local_s.x, -local_s.y, local_s.z));
    let down = pf.rotation.rotate(&Vec3::new(0.0, 0.0, -1.0));
    obs.segments.insert(osh, Transform::new(chest_rot, mirror_s));
    obs.segments.insert(oua, Transform::new(chest_rot, mirror_s));
    obs.segments.insert(ofa, Transform::new(chest_rot, mirror_s + down * body.upper_arm));
    obs.segments.insert(oha, Transform::new(chest_rot, mirror_s + down * (body.upper_arm + body.forearm)));

    // legs
    let hip = 0.1;
    for (ids, y) in [
        ([segment::RIGHT_UPPER_LEG, segment::RIGHT_LOWER_LEG, segment::RIGHT_FOOT, segment::RIGHT_TOE], -hip),
        ([segment::LEFT_UPPER_LEG, segment::LEFT_LOWER_LEG, segment::LEFT_FOOT, segment::LEFT_TOE], hip),
    ] {
        let h = body.pelvis_height;
        let pts = [
            Vec3::new(0.0, y, h),
            Vec3::new(0.0, y, 0.5 * h),
            Vec3::new(0.0, y, 0.08),
            Vec3::new(0.15, y, 0.02),
        ];
        for (id, p) in ids.into_iter().zip(pts) {
            obs.segments.insert(id, Transform::new(pf.rotation, pf.transform_point(&p)));
        }
    }
    obs
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StaticParams {
    pub rate: f64,
    pub duration: f64,
}

impl Default for StaticParams {
    fn default() -> Self {
        StaticParams {
            rate: 60.0,
            duration: 5.0,
        }
    }
}

/// Archimedean hand spiral in the frontal plane of the chest, traversed at constant
/// speed from the example hand position outward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpiralParams {
    pub rate: f64,
    /// Hand speed along the spiral (m/s).
    pub speed: f64,
    /// Final radius (m).
    pub radius: f64,
    pub turns: f64,
    /// Time the final pose is held after the spiral (s).
    pub hold: f64,
}

impl Default for SpiralParams {
    fn default() -> Self {
        SpiralParams {
            rate: 60.0,
            speed: 0.11,
            radius: 0.12,
            turns: 3.0,
            hold: 0.0,
        }
    }
}

impl SpiralParams {
    fn pitch(&self) -> f64 {
        self.radius / self.theta_max()
    }

    fn theta_max(&self) -> f64 {
        2.0 * std::f64::consts::PI * self.turns
    }

    fn arc_length(&self, theta: f64) -> f64 {
        0.5 * self.pitch() * (theta * (1.0 + theta * theta).sqrt() + theta.asinh())
    }

    pub fn length(&self) -> f64 {
        self.arc_length(self.theta_max())
    }

    pub fn duration(&self) -> f64 {
        self.length() / self.speed + self.hold
    }

    /// Spiral angle reached after travelling `s` metres.
    fn theta_at(&self, s: f64) -> f64 {
        let s = s.clamp(0.0, self.length());
        let b = self.pitch();
        let mut th = (2.0 * s / b).sqrt();
        for _ in 0..50 {
            let f = self.arc_length(th) - s;
            let df = b * (1.0 + th * th).sqrt();
            let step = f / df;
            th -= step;
            if step.abs() < 1e-15 {
                break;
            }
        }
        th.clamp(0.0, self.theta_max())
    }

    /// Offset from the spiral center in the (lateral, vertical) plane.
    pub fn offset(&self, t: f64) -> (f64, f64) {
        let th = self.theta_at(self.speed * t);
        let r = self.pitch() * th;
        (r * th.cos(), r * th.sin())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum PathSegment {
    Line { length: f64 },
    /// Circular arc; positive `angle` turns left.
    Arc { radius: f64, angle: f64 },
}

impl PathSegment {
    fn length(&self) -> f64 {
        match *self {
            PathSegment::Line { length } => length,
            PathSegment::Arc { radius, angle } => radius * angle.abs(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WalkParams {
    pub rate: f64,
    /// Walking speed (m/s).
    pub speed: f64,
    pub path: Vec<PathSegment>,
    /// Time the final pose is held after the path (s).
    pub hold: f64,
}

impl Default for WalkParams {
    fn default() -> Self {
        WalkParams {
            rate: 60.0,
            speed: 0.5,
            path: vec![
                PathSegment::Line { length: 2.0 },
                PathSegment::Arc { radius: 0.6, angle: FRAC_PI_2 },
                PathSegment::Line { length: 1.5 },
                PathSegment::Arc { radius: 0.6, angle: FRAC_PI_2 },
                PathSegment::Line { length: 1.0 },
                PathSegment::Arc { radius: 0.6, angle: -FRAC_PI_2 },
                PathSegment::Line { length: 1.0 },
            ],
            hold: 15.0,
        }
    }
}

impl WalkParams {
    pub fn length(&self) -> f64 {
        self.path.iter().map(PathSegment::length).sum()
    }

    pub fn duration(&self) -> f64 {
        self.length() / self.speed + self.hold
    }

    /// Planar pose `(x, y, yaw)` after walking `s` metres, yaw along the path tangent.
    pub fn pose_at(&self, s: f64) -> (f64, f64, f64) {
        let (mut x, mut y, mut yaw) = (0.0f64, 0.0f64, 0.0f64);
        let mut left = s.max(0.0);
        for seg in &self.path {
            let l = seg.length().min(left);
            match *seg {
                PathSegment::Line { .. } => {
                    x += l * yaw.cos();
                    y += l * yaw.sin();
                }
                PathSegment::Arc { radius, angle } => {
                    let dir = angle.signum();
                    let turn = dir * l / radius;
                    // center of curvature on the turning side
                    let (cx, cy) = (x - dir * radius * yaw.sin(), y + dir * radius * yaw.cos());
                    let end = yaw + turn;
                    x = cx + dir * radius * end.sin();
                    y = cy - dir * radius * end.cos();
                    yaw = end;
                }
            }
            left -= l;
            if left <= 0.0 {
                break;
            }
        }
        (x, y, yaw)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SynthSpec {
    Static(StaticParams),
    Spiral(SpiralParams),
    WalkPath(WalkParams),
}

impl SynthSpec {
    pub fn rate(&self) -> f64 {
        match self {
            SynthSpec::Static(p) => p.rate,
            SynthSpec::Spiral(p) => p.rate,
            SynthSpec::WalkPath(p) => p.rate,
        }
    }

    pub fn duration(&self) -> f64 {
        match self {
            SynthSpec::Static(p) => p.duration,
            SynthSpec::Spiral(p) => p.duration(),
            SynthSpec::WalkPath(p) => p.duration(),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(format!("stream.{name} must be positive"))
            }
        };
        positive("rate", self.rate())?;
        match self {
            SynthSpec::Static(p) => positive("duration", p.duration),
            SynthSpec::Spiral(p) => {
                positive("speed", p.speed)?;
                positive("radius", p.radius)?;
                positive("turns", p.turns)?;
                if p.hold < 0.0 {
                    return Err("stream.hold must be non-negative".into());
                }
                Ok(())
            }
            SynthSpec::WalkPath(p) => {
                positive("speed", p.speed)?;
                for seg in &p.path {
                    match *seg {
                        PathSegment::Line { length } => positive("path.length", length)?,
                        PathSegment::Arc { radius, angle } => {
                            positive("path.radius", radius)?;
                            if angle == 0.0 || !angle.is_finite() {
                                return Err("stream.path.angle must be non-zero".into());
                            }
                        }
                    }
                }
                Ok(())
            }
        }
    }
}

/// Moves every segment of `obs` by `t` (applied in the person origin frame).
pub fn transform_observation(obs: &Observation, t: &Transform) -> Observation {
    Observation {
        timestamp: obs.timestamp,
        segments: obs.segments.iter().map(|(&k, p)| (k, *t * *p)).collect(),
    }
}

fn times(rate: f64, duration: f64) -> impl Iterator<Item = f64> {
    let n = (duration * rate + 1e-9).floor() as usize;
    (0..=n).map(move |k| k as f64 / rate)
}

pub fn synth(spec: &SynthSpec, example: &Observation, side: Side) -> Vec<Observation> {
    match spec {
        SynthSpec::Static(p) => times(p.rate, p.duration)
            .map(|t| Observation {
                timestamp: t,
                segments: example.segments.clone(),
            })
            .collect(),
        SynthSpec::Spiral(p) => spiral(p, example, side),
        SynthSpec::WalkPath(p) => {
            let (x0, y0, yaw0) = {
                let pelvis = example.segments[&segment::PELVIS];
                (pelvis.translation.x, pelvis.translation.y, pelvis.rotation.yaw())
            };
            let start = Transform::planar(x0, y0, yaw0);
            times(p.rate, p.duration())
                .map(|t| {
                    let (x, y, yaw) = p.pose_at(p.speed * t);
                    // path expressed in the starting pelvis frame
                    let moved = start * Transform::planar(x, y, yaw) * start.inverse();
                    let mut o = transform_observation(example, &moved);
                    o.timestamp = t;
                    o
                })
                .collect()
        }
    }
}

fn spiral(p: &SpiralParams, example: &Observation, side: Side) -> Vec<Observation> {
    let (_, ua, fa, ha) = side_ids(side);
    let chest = example.segments[&segment::T8].rotation;
    let s = example.segments[&ua].translation;
    let e0 = example.segments[&fa].translation;
    let h0 = example.segments[&ha].translation;
    let (l1, l2) = ((e0 - s).norm(), (h0 - e0).norm());
    let axis0 = (h0 - s).normalize();
    let swivel = {
        let v = e0 - s;
        (v - axis0 * axis0.dot(&v)).normalize()
    };
    let lateral = chest.rotate(&Vec3::y());
    let vertical = chest.rotate(&Vec3::z());
    times(p.rate, p.duration())
        .map(|t| {
            let (a, b) = p.offset(t);
            let hand = h0 + lateral * a + vertical * b;
            let elbow = two_link_elbow(&s, &hand, l1, l2, &swivel);
            let mut o = example.clone();
            o.timestamp = t;
            o.segments.insert(fa, Transform::new(example.segments[&fa].rotation, elbow));
            o.segments.insert(ha, Transform::new(example.segments[&ha].rotation, hand));
            o
        })
        .collect()
}

/// Elbow position of a two-link arm reaching `hand`, bent toward `swivel`.
fn two_link_elbow(shoulder: &Vec3, hand: &Vec3, l1: f64, l2: f64, swivel: &Vec3) -> Vec3 {
    let d_vec = hand - shoulder;
    let d = d_vec.norm().clamp(1e-9, l1 + l2);
    let n = d_vec / d_vec.norm().max(1e-12);
    let a = (l1 * l1 - l2 * l2 + d * d) / (2.0 * d);
    let h = (l1 * l1 - a * a).max(0.0).sqrt();
    let perp = (swivel - n * n.dot(swivel)).normalize();
    shoulder + n * a + perp * h
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{RobotExample, RobotModel};
    use crate::retarget::PersonFrames;
    use approx::assert_relative_eq;

    fn example() -> Observation {
        let model = RobotModel::default_model();
        let robot = RobotExample::default_example().role_poses(&model).unwrap();
        person_example(&robot, &HumanBody::default(), Side::Right)
    }

    #[test]
    fn example_has_all_segments_and_matching_directions() {
        let model = RobotModel::default_model();
        let robot = RobotExample::default_example().role_poses(&model).unwrap();
        let obs = example();
        assert_eq!(obs.segments.len(), segment::COUNT as usize);
        let f = PersonFrames::from_observation(&obs, Side::Right, true).unwrap();
        let [_, pt, pe, pw] = f.relative();
        let rs = robot[&Role::Shoulder];
        let re = (rs.inverse() * robot[&Role::Elbow]).translation;
        let rw = (rs.inverse() * robot[&Role::Wrist]).translation;
        let rt = (robot[&Role::Footprint].inverse() * robot[&Role::Torso]).translation;
        assert_relative_eq!(pt.translation.normalize(), rt.normalize(), epsilon = 1e-12);
        assert_relative_eq!(pe.translation.normalize(), re.normalize(), epsilon = 1e-12);
        assert_relative_eq!((pw.translation - pe.translation).normalize(), (rw - re).normalize(), epsilon = 1e-12);
        assert_relative_eq!(pe.translation.norm(), 0.30, epsilon = 1e-12);
    }

    #[test]
    fn spiral_starts_at_example_and_keeps_speed() {
        let ex = example();
        let p = SpiralParams::default();
        let obs = synth(&SynthSpec::Spiral(p), &ex, Side::Right);
        let first = &obs[0];
        for (id, pose) in &ex.segments {
            let (dp, dr) = first.segments[id].distance(pose);
            assert!(dp < 1e-12 && dr < 1e-12, "segment {id}");
        }
        let hand: Vec<Vec3> = obs.iter().map(|o| o.segments[&segment::RIGHT_HAND].translation).collect();
        let path: f64 = hand.windows(2).map(|w| (w[1] - w[0]).norm()).sum();
        let t_end = obs.last().unwrap().timestamp;
        assert!((path / t_end - 0.11).abs() < 0.002, "{}", path / t_end);
        // forearm and upper arm keep their lengths
        for o in &obs {
            let s = o.segments[&segment::RIGHT_UPPER_ARM].translation;
            let e = o.segments[&segment::RIGHT_FOREARM].translation;
            let h = o.segments[&segment::RIGHT_HAND].translation;
            assert_relative_eq!((e - s).norm(), 0.30, epsilon = 1e-9);
            assert_relative_eq!((h - e).norm(), 0.27, epsilon = 1e-9);
        }
    }

    #[test]
    fn walk_yaw_follows_tangent() {
        let p = WalkParams::default();
        let h = 1e-6;
        for k in 1..200 {
            let s = p.length() * k as f64 / 200.0;
            let (x0, y0, _) = p.pose_at(s - h);
            let (x1, y1, yaw) = p.pose_at(s + h);
            let tangent = (y1 - y0).atan2(x1 - x0);
            assert!(crate::base::wrap_angle(tangent - yaw).abs() < 1e-5, "s = {s}");
        }
        // first turn ends facing +y
        let first_turn_end = 2.0 + 0.6 * FRAC_PI_2;
        let (x, y, yaw) = p.pose_at(first_turn_end);
        assert_relative_eq!(yaw, FRAC_PI_2, epsilon = 1e-12);
        assert_relative_eq!(x, 2.6, epsilon = 1e-12);
        assert_relative_eq!(y, 0.6, epsilon = 1e-12);
    }

    #[test]
    fn static_repeats() {
        let ex = example();
        let obs = synth(&SynthSpec::Static(StaticParams { rate: 10.0, duration: 1.0 }), &ex, Side::Right);
        assert_eq!(obs.len(), 11);
        assert!(obs.iter().all(|o| o.segments == ex.segments));
        assert!(obs.windows(2).all(|w| w[1].timestamp > w[0].timestamp));
    }

    #[test]
    fn spec_parses_from_toml() {
        let s: SynthSpec = toml::from_str("kind = \"spiral\"\nspeed = 0.2\n").unwrap();
        assert!(matches!(s, SynthSpec::Spiral(SpiralParams { speed, .. }) if speed == 0.2));
        let w: SynthSpec = toml::from_str("kind = \"walk_path\"\npath = [{ type = \"line\", length = 1.0 }]\n").unwrap();
        assert!(matches!(w, SynthSpec::WalkPath(ref p) if p.path.len() == 1));
        assert!(toml::from_str::<SynthSpec>("kind = \"orbit\"\n").is_err());
    }
}
