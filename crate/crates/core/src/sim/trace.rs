use std::io::{self, Write};

use crate::admittance::Telemetry;
use crate::base::{BaseCommand, BasePose, Branch};
use crate::geom::{Transform, Vec3};
use crate::retarget::GoalSet;

/// Task names in stack order, matching the residual columns.
pub const TASK_NAMES: [&str; 5] = ["joint_limits", "self_collision", "torso", "end_effector", "elbow"];

/// State after one control period. Poses of the end-effector and elbow are in the
/// robot shoulder frame; the torso position is in the robot footprint frame.
#[derive(Debug, Clone, PartialEq)]
pub struct TickRecord {
    pub t: f64,
    pub q: Vec<f64>,
    pub qd: Vec<f64>,
    /// Controller output before the velocity clamp.
    pub qd_raw: Vec<f64>,
    pub velocity_clamped: bool,
    pub position_clamped: bool,
    pub base: BasePose,
    pub base_command: BaseCommand,
    pub base_branch: Option<Branch>,
    /// Planar distance and yaw from the base to its goal.
    pub base_error: Option<(f64, f64)>,
    pub ee: Transform,
    pub elbow: Vec3,
    pub torso: Vec3,
    /// Retargeted wrist goal, before the admittance offset.
    pub x_ref: Option<Transform>,
    pub x_cmd: Option<Transform>,
    pub goal: Option<GoalSet>,
    pub elbow_angle: f64,
    pub elbow_angle_ref: Option<f64>,
    pub telemetry: Option<Telemetry>,
    pub residuals: Vec<(&'static str, f64)>,
    pub min_sphere_distance: f64,
    pub overlapping_spheres: usize,
    pub gap: bool,
    pub retarget_error: bool,
}

impl TickRecord {
    #[cfg(test)]
    pub(crate) fn blank(dof: usize) -> Self {
        TickRecord {
            t: 0.01,
            q: vec![0.0; dof],
            qd: vec![0.0; dof],
            qd_raw: vec![0.0; dof],
            velocity_clamped: false,
            position_clamped: false,
            base: BasePose::default(),
            base_command: BaseCommand::default(),
            base_branch: None,
            base_error: None,
            ee: Transform::identity(),
            elbow: Vec3::zeros(),
            torso: Vec3::zeros(),
            x_ref: None,
            x_cmd: None,
            goal: None,
            elbow_angle: 0.0,
            elbow_angle_ref: None,
            telemetry: None,
            residuals: Vec::new(),
            min_sphere_distance: 1.0,
            overlapping_spheres: 0,
            gap: true,
            retarget_error: false,
        }
    }

    /// Position and rotation error of the end-effector against the retargeted goal.
    pub fn ee_error(&self) -> Option<(f64, f64)> {
        self.x_ref.map(|r| self.ee.distance(&r))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    pub dof: usize,
    pub records: Vec<TickRecord>,
    pub admittance_violations: u64,
    pub admittance_faults: u64,
    pub collision_threshold: f64,
}

pub fn csv_header(dof: usize) -> String {
    let mut cols: Vec<String> = vec!["t".into()];
    cols.extend((0..dof).map(|i| format!("q{i}")));
    cols.extend((0..dof).map(|i| format!("qd{i}")));
    cols.extend((0..dof).map(|i| format!("qd_raw{i}")));
    for c in [
        "vel_clamp", "pos_clamp", "base_x", "base_y", "base_theta", "base_v", "base_omega", "base_dist_err", "base_yaw_err", "ee_x", "ee_y",
        "ee_z", "ref_x", "ref_y", "ref_z", "ee_pos_err", "ee_rot_err", "elbow_angle", "elbow_angle_ref", "psi", "alpha", "k", "k_dot", "bound",
        "e_x", "e_y", "e_z", "e_roll", "e_pitch", "e_yaw", "f_x", "f_y", "f_z",
    ] {
        cols.push(c.into());
    }
    cols.extend(TASK_NAMES.iter().map(|n| format!("res_{n}")));
    cols.extend(["min_sphere_dist", "gap"].map(String::from));
    cols.join(",")
}

/// Shortest round-trip form; switches to exponent notation for tiny and huge values.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), num)
}

impl TickRecord {
    pub fn csv_row(&self) -> String {
        let mut c: Vec<String> = vec![num(self.t)];
        c.extend(self.q.iter().map(|&x| num(x)));
        c.extend(self.qd.iter().map(|&x| num(x)));
        c.extend(self.qd_raw.iter().map(|&x| num(x)));
        c.push((self.velocity_clamped as u8).to_string());
        c.push((self.position_clamped as u8).to_string());
        for v in [self.base.x, self.base.y, self.base.theta, self.base_command.v, self.base_command.omega] {
            c.push(num(v));
        }
        c.push(opt(self.base_error.map(|e| e.0)));
        c.push(opt(self.base_error.map(|e| e.1)));
        c.extend(self.ee.translation.iter().map(|&x| num(x)));
        for i in 0..3 {
            c.push(opt(self.x_ref.map(|r| r.translation[i])));
        }
        let err = self.ee_error();
        c.push(opt(err.map(|e| e.0)));
        c.push(opt(err.map(|e| e.1)));
        c.push(num(self.elbow_angle));
        c.push(opt(self.elbow_angle_ref));
        let tm = self.telemetry.as_ref();
        c.push(opt(tm.map(|m| m.psi)));
        c.push(opt(tm.map(|m| m.alpha)));
        c.push(opt(tm.map(|m| m.k)));
        c.push(opt(tm.map(|m| m.k_dot)));
        c.push(opt(tm.map(|m| m.bound)));
        for i in 0..6 {
            c.push(opt(tm.map(|m| m.e[i])));
        }
        for i in 0..3 {
            c.push(opt(tm.map(|m| m.force[i])));
        }
        for name in TASK_NAMES {
            c.push(opt(self.residuals.iter().find(|(n, _)| *n == name).map(|r| r.1)));
        }
        c.push(num(self.min_sphere_distance));
        c.push((self.gap as u8).to_string());
        c.join(",")
    }
}

impl SimTrace {
    pub fn write_csv(&self, mut w: impl Write) -> io::Result<()> {
        writeln!(w, "{}", csv_header(self.dof))?;
        for r in &self.records {
            writeln!(w, "{}", r.csv_row())?;
        }
        w.flush()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_and_row_widths_agree() {
        let mut r = TickRecord::blank(3);
        r.residuals = vec![("torso", 0.5)];
        let h = csv_header(3);
        assert_eq!(h.split(',').count(), r.csv_row().split(',').count());
        assert!(h.contains(",psi,alpha,k,k_dot,bound,e_x,"));
    }
}
