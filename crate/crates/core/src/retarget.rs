//! Human-to-robot correspondence: turns observed human segment poses into goal poses
//! for the robot footprint, torso, elbow and wrist.
//!
//! Rotations are mapped through per-goal alignment rotations captured from one
//! equivalent person/robot example pose; translations keep the human directions and
//! take the robot's segment lengths.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{Rotation, Transform, Vec3};
use crate::model::{Role, SegmentLengths};

pub const DEFAULT_CORRESPONDENCE_TOML: &str = include_str!("../assets/default_correspondence.toml");

/// Human segment vectors shorter than this are treated as degenerate (m).
pub const MIN_SEGMENT_LENGTH: f64 = 1e-6;

/// Segment identifiers of the 23-segment body model (1-based).
pub mod segment {
    pub const PELVIS: u32 = 1;
    pub const L5: u32 = 2;
    pub const L3: u32 = 3;
    pub const T12: u32 = 4;
    pub const T8: u32 = 5;
    pub const NECK: u32 = 6;
    pub const HEAD: u32 = 7;
    pub const RIGHT_SHOULDER: u32 = 8;
    pub const RIGHT_UPPER_ARM: u32 = 9;
    pub const RIGHT_FOREARM: u32 = 10;
    pub const RIGHT_HAND: u32 = 11;
    pub const LEFT_SHOULDER: u32 = 12;
    pub const LEFT_UPPER_ARM: u32 = 13;
    pub const LEFT_FOREARM: u32 = 14;
    pub const LEFT_HAND: u32 = 15;
    pub const RIGHT_UPPER_LEG: u32 = 16;
    pub const RIGHT_LOWER_LEG: u32 = 17;
    pub const RIGHT_FOOT: u32 = 18;
    pub const RIGHT_TOE: u32 = 19;
    pub const LEFT_UPPER_LEG: u32 = 20;
    pub const LEFT_LOWER_LEG: u32 = 21;
    pub const LEFT_FOOT: u32 = 22;
    pub const LEFT_TOE: u32 = 23;
    pub const COUNT: u32 = 23;

    pub fn name(id: u32) -> &'static str {
        const NAMES: [&str; 23] = [
            "Pelvis", "L5", "L3", "T12", "T8", "Neck", "Head", "RightShoulder",
            "RightUpperArm", "RightForeArm", "RightHand", "LeftShoulder", "LeftUpperArm",
            "LeftForeArm", "LeftHand", "RightUpperLeg", "RightLowerLeg", "RightFoot",
            "RightToe", "LeftUpperLeg", "LeftLowerLeg", "LeftFoot", "LeftToe",
        ];
        match id {
            1..=23 => NAMES[id as usize - 1],
            _ => "Unknown",
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RetargetError {
    #[error("observation is missing segment {id} ({name})", name = segment::name(*id))]
    MissingSegment { id: u32 },
    #[error("robot example is missing the {0:?} frame")]
    MissingRobotFrame(Role),
    #[error("degenerate {what} vector (length {length:e} m)")]
    Degenerate { what: &'static str, length: f64 },
    #[error("invalid correspondence: {0}")]
    Invalid(String),
    #[error("cannot read correspondence file {path}: {reason}")]
    Io { path: String, reason: String },
}

/// Segment poses of one motion-capture sample, in the person origin frame.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Observation {
    pub timestamp: f64,
    pub segments: BTreeMap<u32, Transform>,
}

impl Observation {
    pub fn new(timestamp: f64) -> Self {
        Observation {
            timestamp,
            segments: BTreeMap::new(),
        }
    }

    pub fn with(mut self, id: u32, pose: Transform) -> Self {
        self.segments.insert(id, pose);
        self
    }

    pub fn segment(&self, id: u32) -> Result<&Transform, RetargetError> {
        self.segments.get(&id).ok_or(RetargetError::MissingSegment { id })
    }

    /// Multiplies every segment translation by `s`.
    pub fn scaled(&self, s: f64) -> Observation {
        Observation {
            timestamp: self.timestamp,
            segments: self
                .segments
                .iter()
                .map(|(&k, t)| (k, Transform::new(t.rotation, t.translation * s)))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    #[default]
    Right,
    Left,
}

impl Side {
    pub fn upper_arm(self) -> u32 {
        match self {
            Side::Right => segment::RIGHT_UPPER_ARM,
            Side::Left => segment::LEFT_UPPER_ARM,
        }
    }
    pub fn forearm(self) -> u32 {
        match self {
            Side::Right => segment::RIGHT_FOREARM,
            Side::Left => segment::LEFT_FOREARM,
        }
    }
    pub fn hand(self) -> u32 {
        match self {
            Side::Right => segment::RIGHT_HAND,
            Side::Left => segment::LEFT_HAND,
        }
    }
}

/// Person frames derived from an observation, all in the person origin frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PersonFrames {
    /// Pelvis projected onto the floor, yaw only.
    pub footprint: Transform,
    pub torso: Transform,
    /// Shoulder joint position with the chest orientation.
    pub shoulder: Transform,
    pub elbow: Transform,
    pub wrist: Transform,
}

impl PersonFrames {
    pub fn from_observation(obs: &Observation, side: Side, torso_at_shoulder: bool) -> Result<Self, RetargetError> {
        let pelvis = obs.segment(segment::PELVIS)?;
        let chest = obs.segment(segment::T8)?;
        let upper = obs.segment(side.upper_arm())?;
        let fore = obs.segment(side.forearm())?;
        let hand = obs.segment(side.hand())?;
        let footprint = Transform::planar(pelvis.translation.x, pelvis.translation.y, pelvis.rotation.yaw());
        let shoulder = Transform::new(chest.rotation, upper.translation);
        let torso = if torso_at_shoulder { shoulder } else { *chest };
        Ok(PersonFrames {
            footprint,
            torso,
            shoulder,
            elbow: *fore,
            wrist: *hand,
        })
    }

    /// `(T_po^pf, T_pf^pt, T_ps^pe, T_ps^pw)`.
    pub fn relative(&self) -> [Transform; 4] {
        let fi = self.footprint.inverse();
        let si = self.shoulder.inverse();
        [self.footprint, fi * self.torso, si * self.elbow, si * self.wrist]
    }
}

/// Alignment rotations, one per goal, captured from the example pose.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Alignment {
    pub footprint: Rotation,
    pub torso: Rotation,
    pub elbow: Rotation,
    pub wrist: Rotation,
}


#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrespondenceConfig {
    #[serde(default)]
    pub side: Side,
    /// Person torso frame placed at the shoulder (for robots whose torso and shoulder
    /// frames coincide).
    #[serde(default = "default_true")]
    pub torso_at_shoulder: bool,
    pub lengths: SegmentLengths,
    pub alignment: Alignment,
}

fn default_true() -> bool {
    true
}

impl CorrespondenceConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, RetargetError> {
        let cfg: CorrespondenceConfig =
            toml::from_str(text).map_err(|e| RetargetError::Invalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, RetargetError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| RetargetError::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("correspondence serializes")
    }

    pub fn default_bundled() -> Self {
        Self::from_toml_str(DEFAULT_CORRESPONDENCE_TOML).expect("bundled correspondence is valid")
    }

    pub fn validate(&self) -> Result<(), RetargetError> {
        let l = &self.lengths;
        for (name, v) in [
            ("footprint_torso", l.footprint_torso),
            ("shoulder_elbow", l.shoulder_elbow),
            ("elbow_wrist", l.elbow_wrist),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(RetargetError::Invalid(format!("length {name} must be positive")));
            }
        }
        Ok(())
    }
}

/// Retargeted robot goals: `T_ro^rf`, `T_rf^rt`, `T_rs^re`, `T_rs^rw`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GoalSet {
    pub timestamp: f64,
    pub footprint: Transform,
    pub torso: Transform,
    pub elbow: Transform,
    pub wrist: Transform,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GoalRotations {
    pub footprint: Rotation,
    pub torso: Rotation,
    pub elbow: Rotation,
    pub wrist: Rotation,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GoalTranslations {
    pub footprint: Vec3,
    pub torso: Vec3,
    pub elbow: Vec3,
    pub wrist: Vec3,
}

/// Captures the alignment rotations from an equivalent example pose so that the
/// rotation mapping reproduces the robot example exactly.
pub fn calibrate(
    person_example: &Observation,
    robot_example: &BTreeMap<Role, Transform>,
    lengths: SegmentLengths,
    side: Side,
    torso_at_shoulder: bool,
) -> Result<CorrespondenceConfig, RetargetError> {
    let get = |r: Role| robot_example.get(&r).copied().ok_or(RetargetError::MissingRobotFrame(r));
    let rf = get(Role::Footprint)?;
    let rt = get(Role::Torso)?;
    let rs = get(Role::Shoulder)?;
    let re = get(Role::Elbow)?;
    let rw = get(Role::Wrist)?;
    let robot = [rf, rf.inverse() * rt, rs.inverse() * re, rs.inverse() * rw];
    let person = PersonFrames::from_observation(person_example, side, torso_at_shoulder)?.relative();
    let align = |k: usize| robot[k].rotation * person[k].rotation.inverse();
    let cfg = CorrespondenceConfig {
        side,
        torso_at_shoulder,
        lengths,
        alignment: Alignment {
            footprint: align(0),
            torso: align(1),
            elbow: align(2),
            wrist: align(3),
        },
    };
    cfg.validate()?;
    Ok(cfg)
}

pub fn map_rotations(obs: &Observation, cfg: &CorrespondenceConfig) -> Result<GoalRotations, RetargetError> {
    let [f, t, e, w] = PersonFrames::from_observation(obs, cfg.side, cfg.torso_at_shoulder)?.relative();
    let a = &cfg.alignment;
    Ok(GoalRotations {
        footprint: a.footprint * f.rotation,
        torso: a.torso * t.rotation,
        elbow: a.elbow * e.rotation,
        wrist: a.wrist * w.rotation,
    })
}

fn unit(v: &Vec3, what: &'static str) -> Result<Vec3, RetargetError> {
    let n = v.norm();
    if !(n > MIN_SEGMENT_LENGTH) || !n.is_finite() {
        return Err(RetargetError::Degenerate { what, length: n });
    }
    Ok(v / n)
}

pub fn map_translations(obs: &Observation, cfg: &CorrespondenceConfig) -> Result<GoalTranslations, RetargetError> {
    let [f, t, e, w] = PersonFrames::from_observation(obs, cfg.side, cfg.torso_at_shoulder)?.relative();
    let l = &cfg.lengths;
    let torso = unit(&t.translation, "footprint-torso")? * l.footprint_torso;
    let elbow = unit(&e.translation, "shoulder-elbow")? * l.shoulder_elbow;
    let forearm = unit(&(w.translation - e.translation), "elbow-wrist")?;
    Ok(GoalTranslations {
        footprint: f.translation,
        torso,
        elbow,
        wrist: elbow + forearm * l.elbow_wrist,
    })
}

pub fn map_pose(obs: &Observation, cfg: &CorrespondenceConfig) -> Result<GoalSet, RetargetError> {
    let r = map_rotations(obs, cfg)?;
    let p = map_translations(obs, cfg)?;
    Ok(GoalSet {
        timestamp: obs.timestamp,
        footprint: Transform::new(r.footprint, p.footprint),
        torso: Transform::new(r.torso, p.torso),
        elbow: Transform::new(r.elbow, p.elbow),
        wrist: Transform::new(r.wrist, p.wrist),
    })
}

/// Stateful wrapper that holds the last valid goal across degenerate observations.
#[derive(Debug, Clone)]
pub struct Retargeter {
    cfg: CorrespondenceConfig,
    last: Option<GoalSet>,
    rejected: u64,
}

impl Retargeter {
    pub fn new(cfg: CorrespondenceConfig) -> Self {
        Retargeter {
            cfg,
            last: None,
            rejected: 0,
        }
    }

    pub fn config(&self) -> &CorrespondenceConfig {
        &self.cfg
    }

    /// Maps `obs`; on error the previous goal is kept and the error returned.
    pub fn update(&mut self, obs: &Observation) -> Result<GoalSet, RetargetError> {
        match map_pose(obs, &self.cfg) {
            Ok(g) => {
                self.last = Some(g);
                Ok(g)
            }
            Err(e) => {
                self.rejected += 1;
                Err(e)
            }
        }
    }

    pub fn last(&self) -> Option<&GoalSet> {
        self.last.as_ref()
    }

    pub fn rejected(&self) -> u64 {
        self.rejected
    }
}
