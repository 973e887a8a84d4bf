//! Differential-drive kinematics and the base imitation controller.
//!
//! The robot footprint follows the person footprint up to the constant offset captured
//! at initialization. Far from the goal the base turns toward it and drives (backwards
//! when the goal is behind and roughly aligned); close to it, it only aligns its yaw.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::geom::{Transform, Vec3};

/// Wraps an angle to `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    w
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BasePose {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl BasePose {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        BasePose {
            x,
            y,
            theta: wrap_angle(theta),
        }
    }

    pub fn transform(&self) -> Transform {
        Transform::planar(self.x, self.y, self.theta)
    }

    /// Planar part of a transform (translation x, y and yaw).
    pub fn from_transform(t: &Transform) -> Self {
        BasePose::new(t.translation.x, t.translation.y, t.rotation.yaw())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BaseCommand {
    pub v: f64,
    pub omega: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaseParams {
    /// Position deadband (m).
    pub epsilon: f64,
    /// Half-angle of the backward-driving cone (rad).
    pub delta: f64,
    /// Angular gain (1/s).
    pub lambda: f64,
    /// Linear gain (1/s).
    pub sigma: f64,
    pub v_max: f64,
    pub omega_max: f64,
}

impl Default for BaseParams {
    fn default() -> Self {
        BaseParams {
            epsilon: 0.15,
            delta: 0.78,
            lambda: 1.2,
            sigma: 0.8,
            v_max: 1.0,
            omega_max: 2.0,
        }
    }
}

impl BaseParams {
    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [
            ("epsilon", self.epsilon),
            ("delta", self.delta),
            ("lambda", self.lambda),
            ("sigma", self.sigma),
            ("v_max", self.v_max),
            ("omega_max", self.omega_max),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("base.{name} must be positive"));
            }
        }
        if self.delta >= PI / 2.0 {
            return Err("base.delta must be below pi/2".into());
        }
        Ok(())
    }
}

/// One Euler step of the unicycle model.
pub fn step_base(pose: &BasePose, cmd: &BaseCommand, dt: f64) -> BasePose {
    BasePose::new(
        pose.x + cmd.v * pose.theta.cos() * dt,
        pose.y + cmd.v * pose.theta.sin() * dt,
        pose.theta + cmd.omega * dt,
    )
}

/// `T_ro^po = T_ro^rf T_pf^po`: declares both footprints coincident.
pub fn init_offset(t_ro_rf: &Transform, t_pf_po: &Transform) -> Transform {
    *t_ro_rf * *t_pf_po
}

/// Person footprint seen from the robot footprint: `(T_ro^rf)^-1 T_ro^po T_po^pf`.
pub fn relative_transform(t_ro_rf: &Transform, t_ro_po: &Transform, t_po_pf: &Transform) -> Transform {
    t_ro_rf.inverse() * *t_ro_po * *t_po_pf
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Align,
    Backward,
    Forward,
}

fn sgn(x: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

pub fn imitation_command(t_rf_pf: &Transform, params: &BaseParams) -> (BaseCommand, Branch) {
    let p = t_rf_pf.translation;
    let dist = (p.x * p.x + p.y * p.y).sqrt();
    let yaw = t_rf_pf.rotation.yaw();
    let heading = p.y.atan2(p.x);
    let (v, omega, branch) = if dist < params.epsilon {
        (0.0, params.lambda * yaw, Branch::Align)
    } else if p.x < 0.0 && yaw.abs() < params.delta {
        (-params.sigma * dist, params.lambda * (heading - PI * sgn(heading)), Branch::Backward)
    } else {
        (params.sigma * dist, params.lambda * heading, Branch::Forward)
    };
    let cmd = BaseCommand {
        v: v.clamp(-params.v_max, params.v_max),
        omega: omega.clamp(-params.omega_max, params.omega_max),
    };
    (cmd, branch)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BaseStep {
    pub command: BaseCommand,
    pub branch: Branch,
    /// Planar distance to the goal.
    pub distance: f64,
    pub yaw_error: f64,
}

/// Stateful controller holding the offset captured at the first goal.
#[derive(Debug, Clone)]
pub struct BaseImitation {
    params: BaseParams,
    t_ro_po: Option<Transform>,
}

impl BaseImitation {
    pub fn new(params: BaseParams) -> Self {
        BaseImitation { params, t_ro_po: None }
    }

    pub fn params(&self) -> &BaseParams {
        &self.params
    }

    pub fn offset(&self) -> Option<&Transform> {
        self.t_ro_po.as_ref()
    }

    pub fn reset(&mut self, robot: &BasePose, t_po_pf: &Transform) {
        self.t_ro_po = Some(init_offset(&robot.transform(), &t_po_pf.inverse()));
    }

    /// Command toward the person footprint `t_po_pf`; the first call initializes the
    /// offset so that the robot starts on its goal.
    pub fn command(&mut self, robot: &BasePose, t_po_pf: &Transform) -> BaseStep {
        if self.t_ro_po.is_none() {
            self.reset(robot, t_po_pf);
        }
        let t_ro_po = self.t_ro_po.expect("offset initialized");
        let rel = relative_transform(&robot.transform(), &t_ro_po, t_po_pf);
        let (command, branch) = imitation_command(&rel, &self.params);
        BaseStep {
            command,
            branch,
            distance: Vec3::new(rel.translation.x, rel.translation.y, 0.0).norm(),
            yaw_error: rel.rotation.yaw(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Rotation;
    use approx::assert_relative_eq;
    use std::f64::consts::FRAC_PI_2;

    fn unit() -> BaseParams {
        BaseParams {
            lambda: 1.0,
            sigma: 0.5,
            v_max: 10.0,
            omega_max: 10.0,
            ..Default::default()
        }
    }

    #[test]
    fn unicycle_steps() {
        let p = step_base(&BasePose::default(), &BaseCommand { v: 1.0, omega: 0.0 }, 1.0);
        assert_eq!(p, BasePose::new(1.0, 0.0, 0.0));
        let p = step_base(&BasePose::default(), &BaseCommand { v: 0.0, omega: FRAC_PI_2 }, 1.0);
        assert_relative_eq!(p.theta, FRAC_PI_2);
        let p = step_base(&BasePose::new(0.0, 0.0, 3.0), &BaseCommand { v: 0.0, omega: 1.0 }, 1.0);
        assert_relative_eq!(p.theta, 4.0 - 2.0 * PI, epsilon = 1e-12);
    }

    #[test]
    fn no_sideways_motion() {
        for k in 0..50 {
            let pose = BasePose::new(0.1 * k as f64, -0.2, -3.0 + 0.12 * k as f64);
            let cmd = BaseCommand { v: 0.7, omega: -0.4 };
            let xd = cmd.v * pose.theta.cos();
            let yd = cmd.v * pose.theta.sin();
            assert!((yd * pose.theta.cos() - xd * pose.theta.sin()).abs() < 1e-15);
            let next = step_base(&pose, &cmd, 0.02);
            let (dx, dy) = (next.x - pose.x, next.y - pose.y);
            assert!((dy * pose.theta.cos() - dx * pose.theta.sin()).abs() < 1e-15);
        }
    }

    #[test]
    fn offset_initialization() {
        assert_eq!(init_offset(&Transform::identity(), &Transform::identity()), Transform::identity());
        let robot = Transform::planar(1.0, 0.0, 0.0);
        let off = init_offset(&robot, &Transform::identity());
        assert_relative_eq!(off.translation, Vec3::new(1.0, 0.0, 0.0));

        let mut c = BaseImitation::new(BaseParams::default());
        let person = Transform::planar(0.4, -2.0, 1.0);
        let robot = BasePose::new(3.0, 1.0, -0.5);
        let s = c.command(&robot, &person);
        assert!(s.distance < 1e-12 && s.yaw_error.abs() < 1e-12);
        // after drifting, re-initialization zeroes the relative error again
        let moved = Transform::planar(1.4, -1.0, 0.2);
        assert!(c.command(&robot, &moved).distance > 0.5);
        c.reset(&robot, &moved);
        let s = c.command(&robot, &moved);
        assert!(s.distance < 1e-12 && s.yaw_error.abs() < 1e-12);
    }

    #[test]
    fn branch_examples() {
        let rel = Transform::from_rotation(Rotation::rot_z(0.3));
        let (c, b) = imitation_command(&rel, &unit());
        assert_eq!(b, Branch::Align);
        assert_eq!(c.v, 0.0);
        assert_relative_eq!(c.omega, 0.3, epsilon = 1e-12);

        let rel = Transform::from_translation(Vec3::new(-1.0, 0.0, 0.0));
        let (c, b) = imitation_command(&rel, &unit());
        assert_eq!(b, Branch::Backward);
        assert_relative_eq!(c.v, -0.5);
        assert!(c.omega.abs() < 1e-12);

        let rel = Transform::new(Rotation::rot_z(1.0), Vec3::new(1.0, 1.0, 0.0));
        let (c, b) = imitation_command(&rel, &unit());
        assert_eq!(b, Branch::Forward);
        assert_relative_eq!(c.v, 0.5 * 2f64.sqrt(), epsilon = 1e-12);
        assert_relative_eq!(c.omega, PI / 4.0, epsilon = 1e-12);
    }

    #[test]
    fn commands_are_clamped() {
        let p = BaseParams::default();
        let rel = Transform::new(Rotation::rot_z(3.0), Vec3::new(-0.01, 5.0, 0.0));
        let (c, _) = imitation_command(&rel, &p);
        assert_eq!(c.v, p.v_max);
        assert!(c.omega.abs() <= p.omega_max);
    }

    #[test]
    fn speed_is_continuous_along_a_ray_except_at_the_deadband() {
        let p = BaseParams::default();
        for dir in [0.3f64, 1.4, 2.9, -2.0] {
            let mut prev: Option<(f64, f64, Branch)> = None;
            for i in 0..=2000 {
                let r = 0.5 * i as f64 / 2000.0;
                let rel = Transform::from_translation(Vec3::new(r * dir.cos(), r * dir.sin(), 0.0));
                let (c, b) = imitation_command(&rel, &p);
                if let Some((pr, pv, pb)) = prev {
                    let dv = (c.v - pv).abs();
                    if pb == b {
                        assert!(dv <= p.sigma * (r - pr) + 1e-9);
                    } else {
                        // leaving the deadband: the speed jumps by sigma * epsilon
                        assert_eq!(pb, Branch::Align);
                        assert_relative_eq!(dv, p.sigma * p.epsilon, epsilon = p.sigma * (r - pr) + 1e-9);
                    }
                }
                prev = Some((r, c.v, b));
            }
        }
    }

    #[test]
    fn wrap_range() {
        assert_eq!(wrap_angle(PI), PI);
        assert_eq!(wrap_angle(-PI), PI);
        assert_relative_eq!(wrap_angle(3.0 * PI / 2.0), -FRAC_PI_2);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn static_goals_converge(r in 0.0..3.0f64, dir in -PI..PI, yaw in -PI..PI) {
                let p = BaseParams::default();
                let goal = Transform::planar(r * dir.cos(), r * dir.sin(), yaw);
                let mut c = BaseImitation::new(p);
                c.reset(&BasePose::default(), &Transform::identity());
                let mut pose = BasePose::default();
                let dt = 0.02;
                let mut reached = None;
                for i in 0..(70.0 / dt) as usize {
                    let s = c.command(&pose, &goal);
                    let t = i as f64 * dt;
                    if reached.is_none() && s.distance < p.epsilon {
                        reached = Some(t);
                    }
                    if let Some(t0) = reached {
                        prop_assert!(s.distance < p.epsilon);
                        if t > t0 + 10.0 {
                            prop_assert!(s.yaw_error.abs() < 0.02);
                        }
                    }
                    pose = step_base(&pose, &s.command, dt);
                }
                prop_assert!(reached.is_some_and(|t| t < 60.0), "{reached:?}");
            }
        }
    }
}
