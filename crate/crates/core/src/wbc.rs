//! Prioritized velocity-level whole-body control.
//!
//! Tasks are solved in order through recursive null-space projection:
//! `qd_1 = J_1^+ xd_1`, `qd_i = qd_{i-1} + (J_i N_{i-1})^+ (xd_i - J_i qd_{i-1})`, where
//! `N_{i-1}` projects onto the null space of the stacked Jacobians of tasks `1..i-1`.
//! The default stack is joint limits, self-collision, torso position, end-effector pose
//! and elbow position.

use serde::{Deserialize, Serialize};

use crate::geom::{self, skew, Matrix, Transform, Vec3, Vector};
use crate::model::{JointKind, JointState, Kinematics, RobotModel, Role};

/// One equality task `J qd = xd` at the current configuration.
#[derive(Debug, Clone)]
pub struct Task {
    pub name: &'static str,
    pub jacobian: Matrix,
    pub velocity: Vector,
}

impl Task {
    pub fn new(name: &'static str, jacobian: Matrix, velocity: Vector) -> Self {
        assert_eq!(jacobian.nrows(), velocity.len(), "task {name}: row mismatch");
        Task {
            name,
            jacobian,
            velocity,
        }
    }

    pub fn empty(name: &'static str, dof: usize) -> Self {
        Task::new(name, Matrix::zeros(0, dof), Vector::zeros(0))
    }

    pub fn dim(&self) -> usize {
        self.jacobian.nrows()
    }

    pub fn residual(&self, qd: &Vector) -> f64 {
        if self.dim() == 0 {
            return 0.0;
        }
        (&self.jacobian * qd - &self.velocity).norm()
    }
}

#[derive(Debug, Clone)]
pub struct StackSolution {
    pub qd: Vector,
    /// `|J_i qd - xd_i|` per task, in stack order.
    pub residuals: Vec<f64>,
    /// Null-space dimension remaining after each task.
    pub null_dims: Vec<usize>,
}

/// Solves an ordered task list, highest priority first.
pub fn solve_stack(tasks: &[Task], dof: usize, damping: f64) -> StackSolution {
    let mut qd = Vector::zeros(dof);
    let mut proj = Matrix::identity(dof, dof);
    let mut stacked = Matrix::zeros(0, dof);
    let mut null_dims = Vec::with_capacity(tasks.len());
    for task in tasks {
        assert_eq!(task.jacobian.ncols(), dof, "task {}: column mismatch", task.name);
        if task.dim() > 0 {
            let jn = &task.jacobian * &proj;
            let err = &task.velocity - &task.jacobian * &qd;
            let pinv = geom::pseudo_inverse(&jn, damping).expect("finite task with positive damping");
            // re-projecting removes rounding leakage amplified by the damped inverse
            qd += &proj * (pinv * err);
            stacked = vstack(&stacked, &task.jacobian);
            proj = geom::null_space_projector(&stacked).expect("finite augmented jacobian");
        }
        null_dims.push(dof - geom::rank(&stacked));
    }
    let residuals = tasks.iter().map(|t| t.residual(&qd)).collect();
    StackSolution {
        qd,
        residuals,
        null_dims,
    }
}

fn vstack(a: &Matrix, b: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(a.nrows() + b.nrows(), a.ncols());
    out.rows_mut(0, a.nrows()).copy_from(a);
    out.rows_mut(a.nrows(), b.nrows()).copy_from(b);
    out
}

/// `[k_p (p_goal - p); k_p log(R_goal R^T)]`.
pub fn task_error_velocity(goal: &Transform, current: &Transform, kp: f64) -> Vector {
    let dp = (goal.translation - current.translation) * kp;
    let dr = (goal.rotation * current.rotation.inverse()).log() * kp;
    Vector::from_column_slice(&[dp.x, dp.y, dp.z, dr.x, dr.y, dr.z])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WbcParams {
    /// Tracking gain of the torso, end-effector and elbow tasks (1/s).
    pub kp: f64,
    /// Joint-limit activation band for revolute joints (rad).
    pub limit_margin_revolute: f64,
    /// Joint-limit activation band for prismatic joints (m).
    pub limit_margin_prismatic: f64,
    /// Joint-limit repulsion gain (1/s).
    pub limit_gain: f64,
    /// Self-collision activation distance between sphere surfaces (m).
    pub collision_threshold: f64,
    /// Self-collision repulsion gain (1/s).
    pub collision_gain: f64,
    pub damping: f64,
}

impl Default for WbcParams {
    fn default() -> Self {
        WbcParams {
            kp: 5.0,
            limit_margin_revolute: 0.1,
            limit_margin_prismatic: 0.01,
            limit_gain: 5.0,
            collision_threshold: 0.05,
            collision_gain: 5.0,
            damping: geom::DEFAULT_DAMPING,
        }
    }
}

impl WbcParams {
    pub fn validate(&self) -> Result<(), String> {
        let pos = [
            ("kp", self.kp),
            ("limit_margin_revolute", self.limit_margin_revolute),
            ("limit_margin_prismatic", self.limit_margin_prismatic),
            ("limit_gain", self.limit_gain),
            ("collision_threshold", self.collision_threshold),
            ("collision_gain", self.collision_gain),
        ];
        for (name, v) in pos {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("wbc.{name} must be positive"));
            }
        }
        if !(self.damping >= 0.0 && self.damping.is_finite()) {
            return Err("wbc.damping must be non-negative".into());
        }
        Ok(())
    }

    fn margin(&self, kind: JointKind) -> f64 {
        match kind {
            JointKind::Revolute => self.limit_margin_revolute,
            JointKind::Prismatic => self.limit_margin_prismatic,
        }
    }
}

/// Drops the selection rows whose joint already moves away from its limit at least as
/// fast as the row asks under `qd_free`.
pub fn active_limit_rows(limits: &Task, qd_free: &Vector) -> Task {
    let keep: Vec<usize> = (0..limits.dim())
        .filter(|&r| {
            let i = limits.jacobian.row(r).transpose().iamax();
            let v = limits.velocity[r];
            if v >= 0.0 {
                qd_free[i] < v
            } else {
                qd_free[i] > v
            }
        })
        .collect();
    let n = limits.jacobian.ncols();
    let mut jac = Matrix::zeros(keep.len(), n);
    let mut vel = Vector::zeros(keep.len());
    for (k, &r) in keep.iter().enumerate() {
        jac.set_row(k, &limits.jacobian.row(r));
        vel[k] = limits.velocity[r];
    }
    Task::new(limits.name, jac, vel)
}

/// Rows for every joint inside its limit band, pushing toward the range center with
/// speed `gain * penetration` (at most `gain * margin`).
pub fn joint_limit_task(model: &RobotModel, q: &JointState, params: &WbcParams) -> Task {
    let n = model.dof();
    let mut rows: Vec<(usize, f64)> = Vec::new();
    for (i, j) in model.joints.iter().enumerate() {
        let margin = params.margin(j.kind).min(0.5 * (j.upper - j.lower));
        let lo_pen = (j.lower + margin - q[i]).clamp(0.0, margin);
        let hi_pen = (q[i] - (j.upper - margin)).clamp(0.0, margin);
        if hi_pen > 0.0 {
            rows.push((i, -params.limit_gain * hi_pen));
        } else if lo_pen > 0.0 {
            rows.push((i, params.limit_gain * lo_pen));
        }
    }
    let mut jac = Matrix::zeros(rows.len(), n);
    let mut vel = Vector::zeros(rows.len());
    for (r, &(i, v)) in rows.iter().enumerate() {
        jac[(r, i)] = 1.0;
        vel[r] = v;
    }
    Task::new("joint_limits", jac, vel)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollisionReport {
    pub active_pairs: usize,
    pub overlapping_pairs: usize,
    pub min_distance: f64,
}

/// One row per sphere pair closer than `threshold`, along the separating direction.
///
/// The row is `n^T (J_a - J_b)` with `n` the unit vector from sphere `b` to sphere `a`,
/// so a positive desired velocity separates the pair. Overlapping pairs get the maximum
/// speed `gain * threshold`.
pub fn self_collision_task(model: &RobotModel, kin: &Kinematics, params: &WbcParams) -> (Task, CollisionReport) {
    let n = model.dof();
    let thr = params.collision_threshold;
    let mut jrows = Vec::new();
    let mut vel = Vec::new();
    let mut report = CollisionReport {
        active_pairs: 0,
        overlapping_pairs: 0,
        min_distance: f64::INFINITY,
    };
    for pair in model.sphere_pairs() {
        let d = model.sphere_distance(kin, pair);
        report.min_distance = report.min_distance.min(d);
        if d >= thr {
            continue;
        }
        let ca = model.sphere_center(kin, pair.a);
        let cb = model.sphere_center(kin, pair.b);
        let sep = ca - cb;
        let dir = if sep.norm() > 1e-12 { sep.normalize() } else { Vec3::z() };
        let ja = model.point_jacobian(kin, model.sphere_link(pair.a), &ca);
        let jb = model.point_jacobian(kin, model.sphere_link(pair.b), &cb);
        jrows.push(dir.transpose() * (ja - jb).fixed_rows::<3>(0));
        report.active_pairs += 1;
        if d <= 0.0 {
            report.overlapping_pairs += 1;
            vel.push(params.collision_gain * thr);
        } else {
            vel.push(params.collision_gain * (thr - d));
        }
    }
    let mut jac = Matrix::zeros(jrows.len(), n);
    for (r, row) in jrows.iter().enumerate() {
        jac.row_mut(r).copy_from(row);
    }
    (Task::new("self_collision", jac, Vector::from_vec(vel)), report)
}

/// Pose of `link` in the frame of `base`.
pub fn relative_pose(kin: &Kinematics, base: usize, link: usize) -> Transform {
    kin.pose(base).inverse() * *kin.pose(link)
}

/// 6 x dof Jacobian of [`relative_pose`], twist expressed in the `base` frame.
pub fn relative_jacobian(model: &RobotModel, kin: &Kinematics, base: usize, link: usize) -> Matrix {
    let jl = model.jacobian(kin, link);
    let jb = model.jacobian(kin, base);
    let rb_t = kin.pose(base).rotation.matrix().transpose();
    let d = kin.pose(link).translation - kin.pose(base).translation;
    let n = model.dof();
    let lin = jl.rows(0, 3) - jb.rows(0, 3) + skew(&d) * jb.rows(3, 3);
    let ang = jl.rows(3, 3) - jb.rows(3, 3);
    let mut out = Matrix::zeros(6, n);
    out.rows_mut(0, 3).copy_from(&(rb_t * lin));
    out.rows_mut(3, 3).copy_from(&(rb_t * ang));
    out
}

/// Goals for the Cartesian tasks, each with a feed-forward velocity.
///
/// The torso position is in the footprint frame; the end-effector pose and elbow
/// position are in the shoulder frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaskGoals {
    pub torso: Vec3,
    pub torso_velocity: Vec3,
    pub ee: Transform,
    /// `[linear; angular]` in the shoulder frame.
    pub ee_twist: [f64; 6],
    pub elbow: Vec3,
    pub elbow_velocity: Vec3,
}

impl TaskGoals {
    /// Goals equal to the current pose with zero feed-forward.
    pub fn hold(model: &RobotModel, kin: &Kinematics) -> Self {
        let s = model.role_index(Role::Shoulder);
        TaskGoals {
            torso: kin.pose(model.role_index(Role::Torso)).translation,
            torso_velocity: Vec3::zeros(),
            ee: relative_pose(kin, s, model.role_index(Role::Wrist)),
            ee_twist: [0.0; 6],
            elbow: relative_pose(kin, s, model.role_index(Role::Elbow)).translation,
            elbow_velocity: Vec3::zeros(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct WbcOutput {
    pub qd: Vector,
    pub tasks: Vec<Task>,
    pub solution: StackSolution,
    pub collision: CollisionReport,
}

#[derive(Debug, Clone)]
pub struct WholeBodyController {
    pub params: WbcParams,
}

impl WholeBodyController {
    pub fn new(params: WbcParams) -> Self {
        WholeBodyController { params }
    }

    /// Builds the default five-task stack at `kin`.
    pub fn build_stack(&self, model: &RobotModel, q: &JointState, kin: &Kinematics, goals: &TaskGoals) -> (Vec<Task>, CollisionReport) {
        let p = &self.params;
        let torso = model.role_index(Role::Torso);
        let shoulder = model.role_index(Role::Shoulder);
        let elbow = model.role_index(Role::Elbow);
        let wrist = model.role_index(Role::Wrist);

        let limits = joint_limit_task(model, q, p);
        let (collision, report) = self_collision_task(model, kin, p);

        let jt = model.jacobian(kin, torso).rows(0, 3).into_owned();
        let vt = goals.torso_velocity + (goals.torso - kin.pose(torso).translation) * p.kp;
        let torso_task = Task::new("torso", jt, Vector::from_column_slice(vt.as_slice()));

        let je = relative_jacobian(model, kin, shoulder, wrist);
        let ve = task_error_velocity(&goals.ee, &relative_pose(kin, shoulder, wrist), p.kp) + Vector::from_column_slice(&goals.ee_twist);
        let ee_task = Task::new("end_effector", je, ve);

        let jl = relative_jacobian(model, kin, shoulder, elbow).rows(0, 3).into_owned();
        let ve = goals.elbow_velocity + (goals.elbow - relative_pose(kin, shoulder, elbow).translation) * p.kp;
        let elbow_task = Task::new("elbow", jl, Vector::from_column_slice(ve.as_slice()));

        (vec![limits, collision, torso_task, ee_task, elbow_task], report)
    }

    /// Solves the stack. Limit rows are conditional: a row is kept only when the
    /// solution without limit rows would not leave the band at least as fast.
    pub fn compute(&self, model: &RobotModel, q: &JointState, kin: &Kinematics, goals: &TaskGoals) -> WbcOutput {
        let (mut tasks, collision) = self.build_stack(model, q, kin, goals);
        let dof = model.dof();
        if tasks[0].dim() > 0 {
            let mut free_stack = tasks.clone();
            free_stack[0] = Task::empty(tasks[0].name, dof);
            let free = solve_stack(&free_stack, dof, self.params.damping).qd;
            tasks[0] = active_limit_rows(&tasks[0], &free);
        }
        let solution = solve_stack(&tasks, dof, self.params.damping);
        WbcOutput {
            qd: solution.qd.clone(),
            tasks,
            solution,
            collision,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Rotation;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn m(rows: usize, cols: usize, data: &[f64]) -> Matrix {
        Matrix::from_row_slice(rows, cols, data)
    }

    fn v(data: &[f64]) -> Vector {
        Vector::from_column_slice(data)
    }

    /// min |J2 q - x2| subject to J1 q = x1, via an explicit null-space basis.
    fn constrained_residual(j1: &Matrix, x1: &Vector, j2: &Matrix, x2: &Vector) -> f64 {
        // j1 has full row rank: minimum-norm solution and null-space basis in closed form
        let n = j1.ncols();
        let gram_inv = (j1 * j1.transpose()).try_inverse().unwrap();
        let q1 = j1.transpose() * &gram_inv * x1;
        let full = Matrix::identity(n, n) - j1.transpose() * &gram_inv * j1;
        let eig = full.symmetric_eigen();
        let cols: Vec<_> = (0..n).filter(|&k| eig.eigenvalues[k] > 0.5).map(|k| eig.eigenvectors.column(k).into_owned()).collect();
        let z = Matrix::from_columns(&cols);
        // least squares over the null space through the normal equations
        let a = j2 * &z;
        let b = x2 - j2 * &q1;
        let y = (a.transpose() * &a).cholesky().expect("generic full column rank").solve(&(a.transpose() * b));
        (j2 * (q1 + z * y) - x2).norm()
    }

    #[test]
    fn square_task_inverts() {
        let j = m(2, 2, &[2.0, 1.0, 0.0, 1.0]);
        let x = v(&[1.0, 2.0]);
        let s = solve_stack(&[Task::new("a", j.clone(), x.clone())], 2, 0.0);
        assert_relative_eq!(s.qd, j.try_inverse().unwrap() * x, epsilon = 1e-12);
    }

    #[test]
    fn orthogonal_tasks_both_achieved() {
        let t1 = Task::new("a", m(1, 3, &[1.0, 0.0, 0.0]), v(&[0.5]));
        let t2 = Task::new("b", m(1, 3, &[0.0, 1.0, 1.0]), v(&[-0.3]));
        let s = solve_stack(&[t1, t2], 3, 1e-6);
        assert!(s.residuals[0] < 1e-8);
        assert!(s.residuals[1] < 1e-8);
    }

    #[test]
    fn conflicting_tasks_respect_priority() {
        let j1 = m(1, 2, &[1.0, 1.0]);
        let j2 = m(1, 2, &[1.0, 0.0]);
        let x1 = v(&[1.0]);
        let x2 = v(&[3.0]);
        let t = [Task::new("a", j1.clone(), x1.clone()), Task::new("b", j2.clone(), x2.clone())];
        let s = solve_stack(&t, 2, 1e-6);
        assert!(s.residuals[0] < 1e-8);
        let oracle = constrained_residual(&j1, &x1, &j2, &x2);
        assert!((s.residuals[1] - oracle).abs() < 1e-6, "{} vs {oracle}", s.residuals[1]);

        // task 2 shares task 1's only direction: nothing left to do
        let t = [Task::new("a", m(1, 1, &[1.0]), v(&[1.0])), Task::new("b", m(1, 1, &[1.0]), v(&[5.0]))];
        let s = solve_stack(&t, 1, 1e-6);
        assert_relative_eq!(s.qd[0], 1.0, epsilon = 1e-9);
        assert_relative_eq!(s.residuals[1], 4.0, epsilon = 1e-9);
    }

    #[test]
    fn empty_stack_and_empty_tasks() {
        let s = solve_stack(&[], 4, 1e-6);
        assert_eq!(s.qd, Vector::zeros(4));
        let t1 = Task::new("a", m(1, 3, &[1.0, 2.0, 0.0]), v(&[0.5]));
        let a = solve_stack(std::slice::from_ref(&t1), 3, 1e-6);
        let b = solve_stack(&[t1, Task::empty("none", 3)], 3, 1e-6);
        assert_eq!(a.qd, b.qd);
        assert_eq!(b.null_dims, vec![2, 2]);
    }

    #[test]
    fn error_velocity_examples() {
        let g = Transform::new(Rotation::rot_x(0.2), Vec3::new(1.0, 2.0, 3.0));
        assert_eq!(task_error_velocity(&g, &g, 5.0), Vector::zeros(6));
        let ahead = Transform::from_translation(Vec3::new(0.1, 0.0, 0.0));
        let e = task_error_velocity(&ahead, &Transform::identity(), 2.0);
        assert_relative_eq!(e, v(&[0.2, 0.0, 0.0, 0.0, 0.0, 0.0]), epsilon = 1e-15);
        let turned = Transform::from_rotation(Rotation::rot_z(PI));
        let e = task_error_velocity(&turned, &Transform::identity(), 2.0);
        assert_relative_eq!(e.rows(3, 3).norm(), 2.0 * PI, epsilon = 1e-12);
    }

    fn model() -> RobotModel {
        RobotModel::default_model()
    }

    fn centered(model: &RobotModel) -> JointState {
        Vector::from_iterator(model.dof(), model.joints.iter().map(|j| j.center()))
    }

    #[test]
    fn joint_limit_task_shapes() {
        let model = model();
        let p = WbcParams::default();
        let q = centered(&model);
        assert_eq!(joint_limit_task(&model, &q, &p).dim(), 0);

        let i = model.joint_index("arm_3_joint").unwrap();
        let mut q2 = q.clone();
        q2[i] = model.joints[i].upper - p.limit_margin_revolute / 2.0;
        let t = joint_limit_task(&model, &q2, &p);
        assert_eq!(t.dim(), 1);
        assert_eq!(t.jacobian[(0, i)], 1.0);
        assert!(t.velocity[0] < 0.0);

        q2[i] = model.joints[i].upper;
        let t = joint_limit_task(&model, &q2, &p);
        assert_relative_eq!(t.velocity[0], -p.limit_gain * p.limit_margin_revolute, epsilon = 1e-12);
        q2[i] = model.joints[i].lower;
        let t = joint_limit_task(&model, &q2, &p);
        assert_relative_eq!(t.velocity[0], p.limit_gain * p.limit_margin_revolute, epsilon = 1e-12);
    }

    #[test]
    fn limit_rows_only_hold_back() {
        let limits = Task::new("joint_limits", m(2, 3, &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0]), v(&[0.2, -0.1]));
        // joint 0 already leaves faster than asked, joint 2 moves into its limit
        let t = active_limit_rows(&limits, &v(&[0.5, 0.0, 0.3]));
        assert_eq!(t.dim(), 1);
        assert_eq!(t.jacobian[(0, 2)], 1.0);
        assert_eq!(t.velocity[0], -0.1);
        let t = active_limit_rows(&limits, &v(&[0.1, 0.0, -0.3]));
        assert_eq!(t.dim(), 1);
        assert_eq!(t.jacobian[(0, 0)], 1.0);
    }

    #[test]
    fn edge_of_band_does_not_lock_a_joint() {
        // a joint sitting on the band edge must still be free to move back inward
        let model = model();
        let p = WbcParams::default();
        let mut q = centered(&model);
        let i = model.joint_index("arm_4_joint").unwrap();
        q[i] = model.joints[i].upper - p.limit_margin_revolute + 1e-15;
        let kin = model.fk_unchecked(&q);
        let mut goals = TaskGoals::hold(&model, &kin);
        let s = model.role_index(Role::Shoulder);
        goals.ee.translation -= relative_pose(&kin, s, model.role_index(Role::Wrist)).translation.normalize() * 0.05;
        let out = WholeBodyController::new(p).compute(&model, &q, &kin, &goals);
        assert!(out.qd[i].abs() > 1e-3, "{}", out.qd[i]);
    }

    const SPHERES: &str = r#"
name = "pair"
root = "base"
[frames]
footprint = "base"
torso = "base"
shoulder = "base"
elbow = "a"
wrist = "b"
[lengths]
footprint_torso = 1.0
shoulder_elbow = 1.0
elbow_wrist = 1.0
[[joint]]
name = "slide_a"
kind = "prismatic"
axis = [1.0, 0.0, 0.0]
lower = -1.0
upper = 1.0
velocity = 1.0
parent = "base"
child = "a"
origin = { p = [1.0, 0.0, 0.0] }
[[joint]]
name = "slide_b"
kind = "prismatic"
axis = [1.0, 0.0, 0.0]
lower = -1.0
upper = 1.0
velocity = 1.0
parent = "a"
child = "b"
origin = { p = [1.0, 0.0, 0.0] }
[[sphere]]
link = "base"
center = [0.0, 0.0, 0.0]
radius = 0.1
group = "body"
[[sphere]]
link = "a"
center = [0.0, 0.0, 0.0]
radius = 0.1
group = "arm"
"#;

    #[test]
    fn collision_row_separates() {
        let model = RobotModel::from_toml_str(SPHERES).unwrap();
        let p = WbcParams::default();
        let q = Vector::zeros(2);
        let kin = model.forward_kinematics(&q).unwrap();
        let (t, r) = self_collision_task(&model, &kin, &p);
        assert_eq!(t.dim(), 0);
        assert!(r.min_distance > 0.7);

        // surfaces threshold/2 apart: a sits at x = 0.2 + threshold/2 from base
        let gap = p.collision_threshold / 2.0;
        let q = Vector::from_column_slice(&[0.2 + gap - 1.0, 0.0]);
        let kin = model.forward_kinematics(&q).unwrap();
        let (t, r) = self_collision_task(&model, &kin, &p);
        assert_eq!(t.dim(), 1);
        assert_eq!(r.overlapping_pairs, 0);
        assert!(t.velocity[0] > 0.0);
        let s = solve_stack(&[t], 2, 1e-6);
        // the sphere on link a moves along +x
        assert!(s.qd[0] > 0.0);
    }

    #[test]
    fn overlapping_spheres_get_emergency_row() {
        let model = RobotModel::from_toml_str(SPHERES).unwrap();
        let p = WbcParams::default();
        let q = Vector::from_column_slice(&[-0.95, 0.0]);
        let kin = model.forward_kinematics(&q).unwrap();
        let (t, r) = self_collision_task(&model, &kin, &p);
        assert_eq!(r.overlapping_pairs, 1);
        assert_relative_eq!(t.velocity[0], p.collision_gain * p.collision_threshold);
    }

    #[test]
    fn relative_jacobian_matches_finite_difference() {
        let model = model();
        let q = crate::model::RobotExample::default_example().joint_state();
        let kin = model.forward_kinematics(&q).unwrap();
        let s = model.role_index(Role::Shoulder);
        let w = model.role_index(Role::Wrist);
        let jac = relative_jacobian(&model, &kin, s, w);
        let h = 1e-6;
        for i in 0..model.dof() {
            let mut qp = q.clone();
            let mut qm = q.clone();
            qp[i] += h;
            qm[i] -= h;
            let tp = relative_pose(&model.fk_unchecked(&qp), s, w);
            let tm = relative_pose(&model.fk_unchecked(&qm), s, w);
            let dp = (tp.translation - tm.translation) / (2.0 * h);
            let dr = (tp.rotation * tm.rotation.inverse()).log() / (2.0 * h);
            for k in 0..3 {
                assert!((jac[(k, i)] - dp[k]).abs() < 1e-5);
                assert!((jac[(k + 3, i)] - dr[k]).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn holding_current_pose_commands_rest() {
        let model = model();
        let q = crate::model::RobotExample::default_example().joint_state();
        // keep the torso off its limit band
        let mut q = q;
        q[0] = 0.2;
        let kin = model.forward_kinematics(&q).unwrap();
        let goals = TaskGoals::hold(&model, &kin);
        let out = WholeBodyController::new(WbcParams::default()).compute(&model, &q, &kin, &goals);
        assert!(out.qd.amax() < 1e-9, "{}", out.qd);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Matrix> {
            proptest::collection::vec(-1.0..1.0f64, rows * cols).prop_map(move |d| Matrix::from_row_slice(rows, cols, &d))
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(200))]

            #[test]
            fn lower_tasks_do_not_disturb_higher(
                j1 in matrix(3, 7), j2 in matrix(3, 7), j3 in matrix(2, 7),
                x in proptest::collection::vec(-1.0..1.0f64, 8),
            ) {
                prop_assume!(j1.clone().singular_values().min() > 0.05);
                let t1 = Task::new("a", j1, Vector::from_column_slice(&x[0..3]));
                let t2 = Task::new("b", j2, Vector::from_column_slice(&x[3..6]));
                let t3 = Task::new("c", j3, Vector::from_column_slice(&x[6..8]));
                let one = solve_stack(std::slice::from_ref(&t1), 7, 1e-6);
                let all = solve_stack(&[t1.clone(), t2, t3], 7, 1e-6);
                prop_assert!((one.residuals[0] - all.residuals[0]).abs() < 1e-8);
                prop_assert!(all.null_dims.windows(2).all(|w| w[1] <= w[0]));
            }

            #[test]
            fn second_task_matches_constrained_least_squares(
                j1 in matrix(2, 5), j2 in matrix(4, 5),
                x in proptest::collection::vec(-1.0..1.0f64, 6),
            ) {
                prop_assume!(j1.clone().singular_values().min() > 0.05);
                let x1 = Vector::from_column_slice(&x[0..2]);
                let x2 = Vector::from_column_slice(&x[2..6]);
                let s = solve_stack(&[Task::new("a", j1.clone(), x1.clone()), Task::new("b", j2.clone(), x2.clone())], 5, 1e-6);
                let oracle = constrained_residual(&j1, &x1, &j2, &x2);
                prop_assert!(s.residuals[0] < 1e-8);
                prop_assert!((s.residuals[1] - oracle).abs() < 1e-6);
            }
        }
    }
}
