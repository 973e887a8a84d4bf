//! Run configuration files and the bundled scenarios.
//!
//! Relative paths inside a config file are resolved against the file's directory.
//! Every path is optional; the bundled model, robot example, correspondence and person
//! example are used when one is absent.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::admittance::AdmittanceParams;
use crate::base::{BaseParams, BasePose};
use crate::model::{JointState, ModelError, RobotExample, RobotModel};
use crate::retarget::{CorrespondenceConfig, Observation, RetargetError};
use crate::sim::{Episode, NoiseParams, SimConfig, SimParams};
use crate::stream::recording::{self, RecordingError};
use crate::stream::{synth, SynthSpec};
use crate::wbc::WbcParams;

pub const PERSON_EXAMPLE_JSONL: &str = include_str!("../assets/person_example.jsonl");

const SCENARIOS: [(&str, &str); 4] = [
    ("spiral", include_str!("../assets/scenarios/spiral.toml")),
    ("grasp", include_str!("../assets/scenarios/grasp.toml")),
    ("walk", include_str!("../assets/scenarios/walk.toml")),
    ("static", include_str!("../assets/scenarios/static.toml")),
];

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {reason}")]
    Io { path: String, reason: String },
    #[error("{path}: {reason}")]
    Parse { path: String, reason: String },
    #[error("config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Retarget(#[from] RetargetError),
    #[error(transparent)]
    Recording(#[from] RecordingError),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: Option<PathBuf>,
    /// Robot example configuration, also the initial joint state.
    pub robot_example: Option<PathBuf>,
    pub correspondence: Option<PathBuf>,
    /// Single-observation JSON Lines file the synthetic streams start from.
    pub person_example: Option<PathBuf>,
    /// Recorded stream; exclusive with `synth`.
    pub recording: Option<PathBuf>,
    pub synth: Option<SynthSpec>,
    /// Initial base pose `[x, y, theta]`.
    pub initial_base: [f64; 3],
    pub sim: SimParams,
    pub wbc: WbcParams,
    pub admittance: AdmittanceParams,
    pub base: BaseParams,
    pub episode: Episode,
    pub noise: NoiseParams,
}

impl RunConfig {
    pub fn from_toml_str(text: &str, origin: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: origin.to_string(),
            reason: e.to_string(),
        })
    }

    /// Loads a file and makes its relative paths absolute.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        let mut cfg = Self::from_toml_str(&text, &path.display().to_string())?;
        let dir = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.model, &mut cfg.robot_example, &mut cfg.correspondence, &mut cfg.person_example, &mut cfg.recording] {
            if let Some(p) = p.as_mut().filter(|p| p.is_relative()) {
                *p = dir.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn bundled(name: &str) -> Option<Self> {
        SCENARIOS
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(n, text)| Self::from_toml_str(text, n).expect("bundled scenario is valid"))
    }

    pub fn bundled_names() -> impl Iterator<Item = &'static str> {
        SCENARIOS.iter().map(|(n, _)| *n)
    }

    /// A bundled scenario name or a path to a config file.
    pub fn resolve(name_or_path: &str) -> Result<Self, ConfigError> {
        match Self::bundled(name_or_path) {
            Some(c) => Ok(c),
            None => Self::load(name_or_path),
        }
    }

    pub fn sim_config(&self) -> SimConfig {
        SimConfig {
            sim: self.sim,
            wbc: self.wbc,
            admittance: self.admittance,
            base: self.base,
            episode: self.episode.clone(),
            noise: self.noise,
        }
    }

    /// Loads every referenced file and builds the stream.
    pub fn setup(&self) -> Result<Setup, ConfigError> {
        let model = match &self.model {
            Some(p) => RobotModel::load(p)?,
            None => RobotModel::default_model(),
        };
        let example = match &self.robot_example {
            Some(p) => RobotExample::load(p)?,
            None => RobotExample::default_example(),
        };
        let q0 = example.joint_state();
        model.check_state(&q0)?;
        let correspondence = match &self.correspondence {
            Some(p) => CorrespondenceConfig::load(p)?,
            None => CorrespondenceConfig::default_bundled(),
        };
        let person_example = match &self.person_example {
            Some(p) => single(recording::load(p)?, &p.display().to_string())?,
            None => default_person_example(),
        };
        let stream = match (&self.recording, &self.synth) {
            (Some(_), Some(_)) => return Err(ConfigError::Invalid("`recording` and `synth` are exclusive".into())),
            (Some(p), None) => recording::load(p)?,
            (None, Some(spec)) => {
                spec.validate().map_err(ConfigError::Invalid)?;
                synth(spec, &person_example, correspondence.side)
            }
            (None, None) => Vec::new(),
        };
        let sim = self.sim_config();
        sim.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let [x, y, theta] = self.initial_base;
        Ok(Setup {
            model,
            q0,
            correspondence,
            person_example,
            stream,
            sim,
            base0: BasePose::new(x, y, theta),
        })
    }
}

fn single(mut obs: Vec<Observation>, path: &str) -> Result<Observation, ConfigError> {
    if obs.len() != 1 {
        return Err(ConfigError::Invalid(format!("{path}: a person example holds exactly one observation, found {}", obs.len())));
    }
    Ok(obs.remove(0))
}

pub fn default_person_example() -> Observation {
    let mut v = recording::parse_jsonl(PERSON_EXAMPLE_JSONL).expect("bundled person example parses");
    v.remove(0)
}

/// Everything a run needs, loaded and validated.
#[derive(Debug, Clone)]
pub struct Setup {
    pub model: RobotModel,
    pub q0: JointState,
    pub correspondence: CorrespondenceConfig,
    pub person_example: Observation,
    pub stream: Vec<Observation>,
    pub sim: SimConfig,
    pub base0: BasePose,
}

impl Setup {
    pub fn run(&self) -> Result<crate::sim::SimTrace, crate::sim::SimError> {
        crate::sim::run(self.model.clone(), self.correspondence.clone(), self.sim.clone(), self.q0.clone(), self.base0, &self.stream)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::RobotExample;
    use crate::retarget::{calibrate, Side};
    use crate::stream::synth::person_example;
    use crate::stream::HumanBody;

    #[test]
    fn bundled_scenarios_load() {
        for name in RunConfig::bundled_names() {
            let s = RunConfig::bundled(name).unwrap().setup().unwrap();
            assert!(!s.stream.is_empty(), "{name}");
        }
        assert!(RunConfig::bundled("nope").is_none());
    }

    #[test]
    fn bundled_assets_are_consistent() {
        // the person example is generated from the robot example, and the bundled
        // correspondence is its calibration
        let model = RobotModel::default_model();
        let poses = RobotExample::default_example().role_poses(&model).unwrap();
        let ex = person_example(&poses, &HumanBody::default(), Side::Right);
        assert_eq!(ex, default_person_example());
        let bundled = CorrespondenceConfig::default_bundled();
        let cfg = calibrate(&ex, &poses, bundled.lengths, Side::Right, true).unwrap();
        for (a, b) in [
            (cfg.alignment.footprint, bundled.alignment.footprint),
            (cfg.alignment.torso, bundled.alignment.torso),
            (cfg.alignment.elbow, bundled.alignment.elbow),
            (cfg.alignment.wrist, bundled.alignment.wrist),
        ] {
            assert!(a.angle_to(&b) < 1e-12);
        }
    }

    #[test]
    fn relative_paths_follow_the_file() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("rec.jsonl"), recording::to_jsonl(&[default_person_example()])).unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "recording = \"rec.jsonl\"\n[sim]\ncontrol_rate = 50.0\n").unwrap();
        let cfg = RunConfig::load(&path).unwrap();
        assert_eq!(cfg.recording.as_deref(), Some(dir.path().join("rec.jsonl").as_path()));
        assert_eq!(cfg.setup().unwrap().stream.len(), 1);
    }

    #[test]
    fn bad_configs_rejected() {
        assert!(RunConfig::from_toml_str("bogus = 1", "x").is_err());
        let mut c = RunConfig::bundled("static").unwrap();
        c.recording = Some("x.jsonl".into());
        assert!(matches!(c.setup(), Err(ConfigError::Invalid(_))));
        let mut c = RunConfig::bundled("static").unwrap();
        c.admittance.k_min = -1.0;
        assert!(c.setup().is_err());
    }
}
