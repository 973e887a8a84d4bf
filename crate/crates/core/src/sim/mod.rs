//! Closed-loop kinematic simulation: observations are retargeted, the end-effector goal
//! passes through the admittance filter, the whole-body controller produces joint
//! velocities that are clamped and integrated, and the base imitates the person's
//! footprint.

mod metrics;
mod trace;

pub use metrics::{elbow_angle, metrics, Metrics, MetricsBuilder};
pub use trace::{csv_header, SimTrace, TickRecord, TASK_NAMES};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::admittance::{Admittance, AdmittanceError, AdmittanceParams, Wrench};
use crate::base::{step_base, BaseCommand, BaseImitation, BaseParams, BasePose};
use crate::geom::{Transform, Vec3, Vector};
use crate::model::{JointState, RobotModel, Role};
use crate::retarget::{CorrespondenceConfig, GoalSet, Observation, Retargeter};
use crate::wbc::{relative_pose, TaskGoals, WbcParams, WholeBodyController};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error(transparent)]
    Admittance(#[from] AdmittanceError),
    #[error("initial configuration: {0}")]
    Model(#[from] crate::model::ModelError),
}

/// A constant external wrench applied to the end-effector over a time window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WrenchEvent {
    pub start: f64,
    pub duration: f64,
    /// Force in the robot origin frame (N).
    #[serde(default)]
    pub force: [f64; 3],
    #[serde(default)]
    pub torque: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Episode {
    pub wrench: Vec<WrenchEvent>,
}

impl Episode {
    /// Sum of the wrenches active at `t`.
    pub fn wrench_at(&self, t: f64) -> Wrench {
        let mut w = Wrench::default();
        for e in &self.wrench {
            if t >= e.start && t < e.start + e.duration {
                w.force += Vec3::from(e.force);
                w.torque += Vec3::from(e.torque);
            }
        }
        w
    }
}

/// Gaussian noise on the force samples; disabled when `force_std` is zero.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseParams {
    pub force_std: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimParams {
    pub control_rate: f64,
    pub force_sample_rate: f64,
    /// Run length (s); the stream length when absent.
    pub duration: Option<f64>,
    /// Observations older than this are flagged as a stream gap (s).
    pub gap_threshold: f64,
}

impl Default for SimParams {
    fn default() -> Self {
        SimParams {
            control_rate: 100.0,
            force_sample_rate: 40.0,
            duration: None,
            gap_threshold: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub sim: SimParams,
    pub wbc: WbcParams,
    pub admittance: AdmittanceParams,
    pub base: BaseParams,
    pub episode: Episode,
    pub noise: NoiseParams,
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let s = &self.sim;
        if !(s.control_rate > 0.0 && s.control_rate.is_finite()) {
            return Err(SimError::Config("sim.control_rate must be positive".into()));
        }
        if !(s.force_sample_rate > 0.0 && s.force_sample_rate <= s.control_rate) {
            return Err(SimError::Config("sim.force_sample_rate must be positive and at most control_rate".into()));
        }
        if 1.0 / s.control_rate > 0.1 {
            return Err(SimError::Config("sim.control_rate must be at least 10 Hz".into()));
        }
        if let Some(d) = s.duration {
            if !(d >= 0.0 && d.is_finite()) {
                return Err(SimError::Config("sim.duration must be non-negative".into()));
            }
        }
        if !(s.gap_threshold > 0.0) {
            return Err(SimError::Config("sim.gap_threshold must be positive".into()));
        }
        self.wbc.validate().map_err(SimError::Config)?;
        self.base.validate().map_err(SimError::Config)?;
        self.admittance.validate()?;
        if !(self.noise.force_std >= 0.0 && self.noise.force_std.is_finite()) {
            return Err(SimError::Config("noise.force_std must be non-negative".into()));
        }
        for e in &self.episode.wrench {
            if !(e.duration >= 0.0) || !e.start.is_finite() || e.force.iter().chain(&e.torque).any(|v| !v.is_finite()) {
                return Err(SimError::Config("episode.wrench entries must be finite with non-negative duration".into()));
            }
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.sim.control_rate
    }
}

/// Goal rates estimated from consecutive retargeted goals.
#[derive(Debug, Clone, Copy, Default)]
struct GoalRates {
    torso: Vec3,
    elbow: Vec3,
    wrist: Vec3,
    wrist_angular: Vec3,
}

impl GoalRates {
    fn between(prev: &GoalSet, next: &GoalSet) -> GoalRates {
        let dt = next.timestamp - prev.timestamp;
        if !(dt > 0.0) {
            return GoalRates::default();
        }
        GoalRates {
            torso: (next.torso.translation - prev.torso.translation) / dt,
            elbow: (next.elbow.translation - prev.elbow.translation) / dt,
            wrist: (next.wrist.translation - prev.wrist.translation) / dt,
            wrist_angular: (next.wrist.rotation * prev.wrist.rotation.inverse()).log() / dt,
        }
    }
}

pub struct Simulator {
    model: RobotModel,
    config: SimConfig,
    wbc: WholeBodyController,
    retargeter: Retargeter,
    admittance: Admittance,
    base_ctl: BaseImitation,
    q: JointState,
    base: BasePose,
    tick: u64,
    goal: Option<GoalSet>,
    rates: GoalRates,
    last_sample: Option<u64>,
    rng: ChaCha8Rng,
    noise: Option<Normal<f64>>,
}

impl Simulator {
    pub fn new(model: RobotModel, correspondence: CorrespondenceConfig, config: SimConfig, q0: JointState, base0: BasePose) -> Result<Self, SimError> {
        config.validate()?;
        model.check_state(&q0)?;
        let noise = (config.noise.force_std > 0.0).then(|| Normal::new(0.0, config.noise.force_std).expect("finite std"));
        Ok(Simulator {
            wbc: WholeBodyController::new(config.wbc),
            retargeter: Retargeter::new(correspondence),
            admittance: Admittance::new(config.admittance)?,
            base_ctl: BaseImitation::new(config.base),
            rng: ChaCha8Rng::seed_from_u64(config.noise.seed),
            noise,
            model,
            config,
            q: q0,
            base: base0,
            tick: 0,
            goal: None,
            rates: GoalRates::default(),
            last_sample: None,
        })
    }

    pub fn model(&self) -> &RobotModel {
        &self.model
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn q(&self) -> &JointState {
        &self.q
    }

    pub fn base_pose(&self) -> BasePose {
        self.base
    }

    pub fn admittance(&self) -> &Admittance {
        &self.admittance
    }

    /// Time of the next tick.
    pub fn time(&self) -> f64 {
        self.tick as f64 * self.config.dt()
    }

    /// Advances one control period. `obs` is a newly arrived observation, if any; the
    /// previous one is held otherwise.
    pub fn step(&mut self, obs: Option<&Observation>) -> TickRecord {
        let dt = self.config.dt();
        let t = self.time();
        let model = &self.model;
        let s_idx = model.role_index(Role::Shoulder);
        let w_idx = model.role_index(Role::Wrist);
        let e_idx = model.role_index(Role::Elbow);
        let t_idx = model.role_index(Role::Torso);

        let mut retarget_error = false;
        if let Some(o) = obs {
            match self.retargeter.update(o) {
                Ok(g) => {
                    if let Some(prev) = &self.goal {
                        self.rates = GoalRates::between(prev, &g);
                    }
                    self.goal = Some(g);
                }
                Err(e) => {
                    log::debug!("holding last goal: {e}");
                    retarget_error = true;
                }
            }
        }
        let age = self.goal.map(|g| t - g.timestamp);
        let gap = age.is_none_or(|a| a > self.config.sim.gap_threshold);
        let rates = if gap { GoalRates::default() } else { self.rates };

        // force sampling at its own rate, held in between
        let sample_idx = (t * self.config.sim.force_sample_rate + 1e-9).floor() as u64;
        let sample = if self.last_sample != Some(sample_idx) {
            self.last_sample = Some(sample_idx);
            let ts = sample_idx as f64 / self.config.sim.force_sample_rate;
            let mut w = self.config.episode.wrench_at(ts);
            if let Some(n) = &self.noise {
                for i in 0..3 {
                    w.force[i] += n.sample(&mut self.rng);
                }
            }
            Some(w)
        } else {
            None
        };

        let kin = model.fk_unchecked(&self.q);
        let shoulder_world = self.base.transform() * *kin.pose(s_idx);
        let sample = sample.map(|w| {
            let r = shoulder_world.rotation.inverse();
            Wrench::new(r.rotate(&w.force), r.rotate(&w.torque))
        });

        let (goals, x_ref, adm) = match &self.goal {
            Some(g) => {
                let adm = self.admittance.step(&g.wrist, sample, dt).expect("validated time step");
                let r = adm.offset_rate;
                let twist = [
                    rates.wrist.x + r[0],
                    rates.wrist.y + r[1],
                    rates.wrist.z + r[2],
                    rates.wrist_angular.x + r[3],
                    rates.wrist_angular.y + r[4],
                    rates.wrist_angular.z + r[5],
                ];
                let goals = TaskGoals {
                    torso: g.torso.translation,
                    torso_velocity: rates.torso,
                    ee: adm.x_cmd,
                    ee_twist: twist,
                    elbow: g.elbow.translation,
                    elbow_velocity: rates.elbow,
                };
                (goals, Some(g.wrist), Some(adm))
            }
            None => (TaskGoals::hold(model, &kin), None, None),
        };

        let out = self.wbc.compute(model, &self.q, &kin, &goals);
        let qd_raw = out.qd.clone();
        let vmax = model.velocity_limits();
        let scale = qd_raw
            .iter()
            .zip(vmax.iter())
            .map(|(v, m)| v.abs() / m)
            .fold(1.0f64, f64::max);
        let velocity_clamped = scale > 1.0;
        let qd: Vector = &qd_raw / scale;
        let mut q_next = &self.q + &qd * dt;
        let lower = model.lower_limits();
        let upper = model.upper_limits();
        let mut position_clamped = false;
        for i in 0..q_next.len() {
            if q_next[i] < lower[i] || q_next[i] > upper[i] {
                position_clamped = true;
            }
        }
        model.clamp(&mut q_next);
        self.q = q_next;

        let (base_step, base_goal) = match &self.goal {
            Some(g) => {
                let s = self.base_ctl.command(&self.base, &g.footprint);
                let goal = *self.base_ctl.offset().expect("initialized") * g.footprint;
                (Some(s), Some(goal))
            }
            None => (None, None),
        };
        let cmd = base_step.map_or(BaseCommand::default(), |s| s.command);
        self.base = step_base(&self.base, &cmd, dt);
        self.tick += 1;

        // post-step state
        let kin = model.fk_unchecked(&self.q);
        let ee = relative_pose(&kin, s_idx, w_idx);
        let elbow = relative_pose(&kin, s_idx, e_idx).translation;
        let torso = kin.pose(t_idx).translation;
        let shoulder_origin = Vec3::zeros();
        let robot_angle = elbow_angle(&shoulder_origin, &elbow, &ee.translation);
        let goal_angle = self.goal.map(|g| elbow_angle(&shoulder_origin, &g.elbow.translation, &g.wrist.translation));
        let base_error = base_goal.map(|bg| {
            let rel = self.base.transform().inverse() * bg;
            (Vec3::new(rel.translation.x, rel.translation.y, 0.0).norm(), rel.rotation.yaw())
        });
        let min_distance = out.collision.min_distance;

        TickRecord {
            t: self.time(),
            q: self.q.as_slice().to_vec(),
            qd: qd.as_slice().to_vec(),
            qd_raw: qd_raw.as_slice().to_vec(),
            velocity_clamped,
            position_clamped,
            base: self.base,
            base_command: cmd,
            base_branch: base_step.map(|s| s.branch),
            base_error,
            ee,
            elbow,
            torso,
            x_ref,
            x_cmd: adm.map(|a| a.x_cmd),
            goal: self.goal,
            elbow_angle: robot_angle,
            elbow_angle_ref: goal_angle,
            telemetry: adm.map(|a| a.telemetry),
            residuals: out.tasks.iter().zip(&out.solution.residuals).map(|(t, r)| (t.name, *r)).collect(),
            min_sphere_distance: min_distance,
            overlapping_spheres: out.collision.overlapping_pairs,
            gap,
            retarget_error,
        }
    }
}

/// Runs the loop over a recorded or synthetic stream. Tick `k` at `t_k = k / rate`
/// receives the newest observation with timestamp `<= t_k` that has not been delivered.
pub fn run(model: RobotModel, correspondence: CorrespondenceConfig, config: SimConfig, q0: JointState, base0: BasePose, stream: &[Observation]) -> Result<SimTrace, SimError> {
    let duration = config.sim.duration.unwrap_or_else(|| stream.last().map_or(0.0, |o| o.timestamp));
    let mut sim = Simulator::new(model, correspondence, config, q0, base0)?;
    let ticks = (duration * sim.config.sim.control_rate + 1e-9).floor() as u64;
    let mut records = Vec::with_capacity(ticks as usize);
    let mut next = 0usize;
    for _ in 0..ticks {
        let t = sim.time();
        let mut newest = None;
        while next < stream.len() && stream[next].timestamp <= t + 1e-12 {
            newest = Some(&stream[next]);
            next += 1;
        }
        records.push(sim.step(newest));
    }
    Ok(SimTrace {
        dof: sim.model.dof(),
        records,
        admittance_violations: sim.admittance.violations(),
        admittance_faults: sim.admittance.faults(),
        collision_threshold: sim.config.wbc.collision_threshold,
    })
}

/// Pose of every role frame in the robot origin frame, used by tests and exports.
pub fn world_pose(base: &BasePose, link_in_footprint: &Transform) -> Transform {
    base.transform() * *link_in_footprint
}
