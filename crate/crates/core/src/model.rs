//! Kinematic model of the simulated mobile manipulator: joint tree, named role frames,
//! segment lengths and collision spheres.
//!
//! Models are read from TOML:
//!
//! ```toml
//! name = "tiago-like"
//! root = "base_footprint"
//!
//! [frames]            # role -> link name
//! footprint = "base_footprint"
//! torso = "torso_link"
//! shoulder = "torso_link"
//! elbow = "arm_4_link"
//! wrist = "arm_7_link"
//!
//! [lengths]           # meters
//! footprint_torso = 1.226
//! shoulder_elbow = 0.32
//! elbow_wrist = 0.28
//!
//! [[joint]]
//! name = "torso_lift_joint"
//! kind = "prismatic"          # or "revolute"
//! axis = [0.0, 0.0, 1.0]
//! lower = 0.0
//! upper = 0.35
//! velocity = 0.15
//! parent = "base_footprint"
//! child = "torso_link"
//! origin = { p = [0.0, -0.25, 0.85], q = [1.0, 0.0, 0.0, 0.0] }
//!
//! [[sphere]]
//! link = "arm_7_link"
//! center = [0.0, 0.0, 0.0]
//! radius = 0.05
//! group = "arm"
//! ```

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{Matrix, Rotation, Transform, Vec3, Vector};

pub const DEFAULT_MODEL_TOML: &str = include_str!("../assets/default_model.toml");
pub const DEFAULT_ROBOT_EXAMPLE_TOML: &str = include_str!("../assets/robot_example.toml");

/// Joint positions, one entry per actuated joint in model order.
pub type JointState = Vector;

const LIMIT_SLACK: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("cannot read model file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("model parse error: {0}")]
    Parse(String),
    #[error("invalid model field `{field}`: {reason}")]
    Invalid { field: String, reason: String },
    #[error("joint `{joint}` at {value} is outside its limits [{lower}, {upper}]")]
    LimitViolation {
        joint: String,
        value: f64,
        lower: f64,
        upper: f64,
    },
    #[error("unknown link `{0}`")]
    UnknownLink(String),
    #[error("joint vector has {got} entries, model has {expected} joints")]
    DofMismatch { expected: usize, got: usize },
}

fn invalid(field: impl Into<String>, reason: impl Into<String>) -> ModelError {
    ModelError::Invalid {
        field: field.into(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JointKind {
    Revolute,
    Prismatic,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JointSpec {
    pub name: String,
    pub kind: JointKind,
    pub axis: [f64; 3],
    pub lower: f64,
    pub upper: f64,
    pub velocity: f64,
    pub parent: String,
    pub child: String,
    #[serde(default)]
    pub origin: Transform,
}

impl JointSpec {
    pub fn axis_vec(&self) -> Vec3 {
        Vec3::from(self.axis)
    }

    pub fn center(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }

    fn motion(&self, q: f64) -> Transform {
        match self.kind {
            JointKind::Revolute => {
                Transform::from_rotation(Rotation::from_axis_angle(&self.axis_vec(), q))
            }
            JointKind::Prismatic => Transform::from_translation(self.axis_vec() * q),
        }
    }
}

/// Link names playing the footprint/torso/shoulder/elbow/wrist roles.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RoleFrames {
    pub footprint: String,
    pub torso: String,
    pub shoulder: String,
    pub elbow: String,
    pub wrist: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentLengths {
    /// Footprint to torso distance with the torso fully extended.
    pub footprint_torso: f64,
    pub shoulder_elbow: f64,
    pub elbow_wrist: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CollisionSphere {
    pub link: String,
    pub center: [f64; 3],
    pub radius: f64,
    /// Spheres are only checked against spheres of a different group.
    pub group: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ModelFile {
    name: String,
    root: String,
    frames: RoleFrames,
    lengths: SegmentLengths,
    #[serde(rename = "joint", default)]
    joints: Vec<JointSpec>,
    #[serde(rename = "sphere", default)]
    spheres: Vec<CollisionSphere>,
    /// Role-frame poses at q = 0, checked against forward kinematics on load.
    #[serde(default)]
    home: BTreeMap<String, Transform>,
}

#[derive(Debug, Clone)]
pub struct RobotModel {
    pub name: String,
    pub root: String,
    pub joints: Vec<JointSpec>,
    pub frames: RoleFrames,
    pub lengths: SegmentLengths,
    pub spheres: Vec<CollisionSphere>,
    pub home: BTreeMap<String, Transform>,
    links: Vec<String>,
    link_index: HashMap<String, usize>,
    /// Joint driving each link (None for the root).
    link_parent_joint: Vec<Option<usize>>,
    /// Parent link index of each joint.
    joint_parent_link: Vec<usize>,
    /// `ancestors[link][joint]`: joint lies on the root -> link path.
    ancestors: Vec<Vec<bool>>,
}

/// Result of forward kinematics: every link pose plus world-frame joint axes.
#[derive(Debug, Clone)]
pub struct Kinematics {
    pub link_poses: Vec<Transform>,
    joint_axes: Vec<Vec3>,
    joint_origins: Vec<Vec3>,
}

impl Kinematics {
    pub fn pose(&self, link: usize) -> &Transform {
        &self.link_poses[link]
    }
}

/// Pair of collision spheres checked by the self-collision task.
#[derive(Debug, Clone, Copy)]
pub struct SpherePair {
    pub a: usize,
    pub b: usize,
}

impl RobotModel {
    pub fn from_toml_str(text: &str) -> Result<Self, ModelError> {
        let file: ModelFile = toml::from_str(text).map_err(|e| ModelError::Parse(e.to_string()))?;
        Self::build(file)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ModelError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ModelError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    /// The bundled 10-DOF model (prismatic torso, 7-joint arm, two gripper fingers).
    pub fn default_model() -> Self {
        Self::from_toml_str(DEFAULT_MODEL_TOML).expect("bundled model is valid")
    }

    fn build(file: ModelFile) -> Result<Self, ModelError> {
        let mut links = vec![file.root.clone()];
        let mut link_index = HashMap::from([(file.root.clone(), 0usize)]);
        let mut link_parent_joint = vec![None];
        let mut joint_parent_link = Vec::with_capacity(file.joints.len());
        let mut joints = file.joints;

        let mut seen = std::collections::HashSet::new();
        for (i, j) in joints.iter_mut().enumerate() {
            let field = format!("joint[{i}] ({})", j.name);
            if !seen.insert(j.name.clone()) {
                return Err(invalid(field, "duplicate joint name"));
            }
            if !(j.lower < j.upper) {
                return Err(invalid(
                    format!("{field}.lower"),
                    format!("lower {} must be below upper {}", j.lower, j.upper),
                ));
            }
            if !(j.velocity > 0.0) || !j.velocity.is_finite() {
                return Err(invalid(format!("{field}.velocity"), "velocity limit must be positive"));
            }
            let n = j.axis_vec().norm();
            if (n - 1.0).abs() > 1e-6 {
                return Err(invalid(format!("{field}.axis"), format!("axis norm {n} is not 1")));
            }
            let a = j.axis_vec() / n;
            j.axis = [a.x, a.y, a.z];
            let parent = *link_index
                .get(&j.parent)
                .ok_or_else(|| invalid(format!("{field}.parent"), format!("unknown parent link `{}`", j.parent)))?;
            if link_index.contains_key(&j.child) {
                return Err(invalid(format!("{field}.child"), format!("link `{}` already defined", j.child)));
            }
            link_index.insert(j.child.clone(), links.len());
            links.push(j.child.clone());
            link_parent_joint.push(Some(i));
            joint_parent_link.push(parent);
        }

        let n_joints = joints.len();
        let mut ancestors = vec![vec![false; n_joints]; links.len()];
        for l in 1..links.len() {
            let j = link_parent_joint[l].expect("non-root link has a joint");
            let parent = joint_parent_link[j];
            let mut row = ancestors[parent].clone();
            row[j] = true;
            ancestors[l] = row;
        }

        let model = RobotModel {
            name: file.name,
            root: file.root,
            joints,
            frames: file.frames,
            lengths: file.lengths,
            spheres: file.spheres,
            home: file.home,
            links,
            link_index,
            link_parent_joint,
            joint_parent_link,
            ancestors,
        };
        model.validate()?;
        Ok(model)
    }

    fn validate(&self) -> Result<(), ModelError> {
        let f = &self.frames;
        let roles = [
            ("frames.footprint", &f.footprint),
            ("frames.torso", &f.torso),
            ("frames.shoulder", &f.shoulder),
            ("frames.elbow", &f.elbow),
            ("frames.wrist", &f.wrist),
        ];
        let mut idx = Vec::new();
        for (field, name) in roles {
            let i = self
                .link_index(name)
                .map_err(|_| invalid(field, format!("link `{name}` does not exist")))?;
            idx.push(i);
        }
        // footprint -> torso -> shoulder -> elbow -> wrist must be a chain
        for w in idx.windows(2) {
            if !self.is_ancestor_or_self(w[0], w[1]) {
                return Err(invalid(
                    "frames",
                    format!("`{}` is not on the path to `{}`", self.links[w[0]], self.links[w[1]]),
                ));
            }
        }
        let l = &self.lengths;
        for (field, v) in [
            ("lengths.footprint_torso", l.footprint_torso),
            ("lengths.shoulder_elbow", l.shoulder_elbow),
            ("lengths.elbow_wrist", l.elbow_wrist),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(invalid(field, "length must be positive"));
            }
        }
        for (i, s) in self.spheres.iter().enumerate() {
            self.link_index(&s.link)
                .map_err(|_| invalid(format!("sphere[{i}].link"), format!("unknown link `{}`", s.link)))?;
            if !(s.radius > 0.0) {
                return Err(invalid(format!("sphere[{i}].radius"), "radius must be positive"));
            }
        }

        // arm segment lengths must agree with the geometry
        let kin = self.fk_unchecked(&Vector::zeros(self.dof()));
        let p = |i: usize| kin.link_poses[i].translation;
        let se = (p(idx[3]) - p(idx[2])).norm();
        if (se - l.shoulder_elbow).abs() > 1e-6 {
            return Err(invalid(
                "lengths.shoulder_elbow",
                format!("declared {} but geometry gives {se}", l.shoulder_elbow),
            ));
        }
        let ew = (p(idx[4]) - p(idx[3])).norm();
        if (ew - l.elbow_wrist).abs() > 1e-6 {
            return Err(invalid(
                "lengths.elbow_wrist",
                format!("declared {} but geometry gives {ew}", l.elbow_wrist),
            ));
        }
        for (name, pose) in &self.home {
            let i = self
                .link_index(name)
                .map_err(|_| invalid(format!("home.{name}"), "unknown link"))?;
            let (dp, dr) = kin.link_poses[i].distance(pose);
            if dp > 1e-6 || dr > 1e-6 {
                return Err(invalid(
                    format!("home.{name}"),
                    format!("differs from forward kinematics at q = 0 by {dp:e} m / {dr:e} rad"),
                ));
            }
        }
        Ok(())
    }

    pub fn dof(&self) -> usize {
        self.joints.len()
    }

    pub fn links(&self) -> &[String] {
        &self.links
    }

    pub fn link_index(&self, name: &str) -> Result<usize, ModelError> {
        self.link_index
            .get(name)
            .copied()
            .ok_or_else(|| ModelError::UnknownLink(name.to_string()))
    }

    pub fn joint_index(&self, name: &str) -> Option<usize> {
        self.joints.iter().position(|j| j.name == name)
    }

    /// Joint whose child is `link`, if any.
    pub fn parent_joint(&self, link: usize) -> Option<usize> {
        self.link_parent_joint[link]
    }

    pub fn is_ancestor_or_self(&self, ancestor: usize, link: usize) -> bool {
        if ancestor == link {
            return true;
        }
        match self.link_parent_joint[ancestor] {
            None => true,
            Some(j) => self.ancestors[link][j],
        }
    }

    /// Whether joint `joint` moves `link`.
    pub fn moves(&self, joint: usize, link: usize) -> bool {
        self.ancestors[link][joint]
    }

    pub fn role_index(&self, role: Role) -> usize {
        let name = match role {
            Role::Footprint => &self.frames.footprint,
            Role::Torso => &self.frames.torso,
            Role::Shoulder => &self.frames.shoulder,
            Role::Elbow => &self.frames.elbow,
            Role::Wrist => &self.frames.wrist,
        };
        self.link_index[name]
    }

    pub fn lower_limits(&self) -> Vector {
        Vector::from_iterator(self.dof(), self.joints.iter().map(|j| j.lower))
    }

    pub fn upper_limits(&self) -> Vector {
        Vector::from_iterator(self.dof(), self.joints.iter().map(|j| j.upper))
    }

    pub fn velocity_limits(&self) -> Vector {
        Vector::from_iterator(self.dof(), self.joints.iter().map(|j| j.velocity))
    }

    pub fn check_state(&self, q: &JointState) -> Result<(), ModelError> {
        if q.len() != self.dof() {
            return Err(ModelError::DofMismatch {
                expected: self.dof(),
                got: q.len(),
            });
        }
        for (j, &v) in self.joints.iter().zip(q.iter()) {
            if !(v >= j.lower - LIMIT_SLACK && v <= j.upper + LIMIT_SLACK) {
                return Err(ModelError::LimitViolation {
                    joint: j.name.clone(),
                    value: v,
                    lower: j.lower,
                    upper: j.upper,
                });
            }
        }
        Ok(())
    }

    pub fn clamp(&self, q: &mut JointState) {
        for (j, v) in self.joints.iter().zip(q.iter_mut()) {
            *v = v.clamp(j.lower, j.upper);
        }
    }

    /// Pose of every link in the root (footprint) frame.
    pub fn forward_kinematics(&self, q: &JointState) -> Result<Kinematics, ModelError> {
        self.check_state(q)?;
        Ok(self.fk_unchecked(q))
    }

    /// Forward kinematics without the limit check (dimension must still match).
    pub fn fk_unchecked(&self, q: &JointState) -> Kinematics {
        assert_eq!(q.len(), self.dof(), "joint vector dimension");
        let mut link_poses = vec![Transform::identity(); self.links.len()];
        let mut joint_axes = Vec::with_capacity(self.dof());
        let mut joint_origins = Vec::with_capacity(self.dof());
        for (i, j) in self.joints.iter().enumerate() {
            let frame = link_poses[self.joint_parent_link[i]] * j.origin;
            joint_axes.push(frame.rotation.rotate(&j.axis_vec()));
            joint_origins.push(frame.translation);
            link_poses[i + 1] = frame * j.motion(q[i]);
        }
        Kinematics {
            link_poses,
            joint_axes,
            joint_origins,
        }
    }

    /// Name-keyed view of forward kinematics.
    pub fn link_poses(&self, q: &JointState) -> Result<BTreeMap<String, Transform>, ModelError> {
        let kin = self.forward_kinematics(q)?;
        Ok(self
            .links
            .iter()
            .cloned()
            .zip(kin.link_poses)
            .collect())
    }

    /// 6 x dof geometric Jacobian `[linear; angular]` of `link` in the footprint frame.
    pub fn geometric_jacobian(&self, q: &JointState, link: &str) -> Result<Matrix, ModelError> {
        let l = self.link_index(link)?;
        let kin = self.forward_kinematics(q)?;
        Ok(self.jacobian(&kin, l))
    }

    pub fn jacobian(&self, kin: &Kinematics, link: usize) -> Matrix {
        let p = kin.link_poses[link].translation;
        let mut jac = Matrix::zeros(6, self.dof());
        for (i, j) in self.joints.iter().enumerate() {
            if !self.ancestors[link][i] {
                continue;
            }
            let a = kin.joint_axes[i];
            let (lin, ang) = match j.kind {
                JointKind::Revolute => (a.cross(&(p - kin.joint_origins[i])), a),
                JointKind::Prismatic => (a, Vec3::zeros()),
            };
            jac.fixed_view_mut::<3, 1>(0, i).copy_from(&lin);
            jac.fixed_view_mut::<3, 1>(3, i).copy_from(&ang);
        }
        jac
    }

    /// 3 x dof linear Jacobian of a world point rigidly attached to `link`.
    pub fn point_jacobian(&self, kin: &Kinematics, link: usize, point: &Vec3) -> Matrix {
        let mut jac = Matrix::zeros(3, self.dof());
        for (i, j) in self.joints.iter().enumerate() {
            if !self.ancestors[link][i] {
                continue;
            }
            let a = kin.joint_axes[i];
            let lin = match j.kind {
                JointKind::Revolute => a.cross(&(point - kin.joint_origins[i])),
                JointKind::Prismatic => a,
            };
            jac.fixed_view_mut::<3, 1>(0, i).copy_from(&lin);
        }
        jac
    }

    /// World center of a collision sphere.
    pub fn sphere_center(&self, kin: &Kinematics, sphere: usize) -> Vec3 {
        let s = &self.spheres[sphere];
        let l = self.link_index[&s.link];
        kin.link_poses[l].transform_point(&Vec3::from(s.center))
    }

    pub fn sphere_link(&self, sphere: usize) -> usize {
        self.link_index[&self.spheres[sphere].link]
    }

    /// All sphere pairs on different links and different groups.
    pub fn sphere_pairs(&self) -> Vec<SpherePair> {
        let mut out = Vec::new();
        for a in 0..self.spheres.len() {
            for b in (a + 1)..self.spheres.len() {
                let (sa, sb) = (&self.spheres[a], &self.spheres[b]);
                if sa.group != sb.group && sa.link != sb.link {
                    out.push(SpherePair { a, b });
                }
            }
        }
        out
    }

    /// Surface distance of a sphere pair (negative when overlapping).
    pub fn sphere_distance(&self, kin: &Kinematics, pair: SpherePair) -> f64 {
        let ca = self.sphere_center(kin, pair.a);
        let cb = self.sphere_center(kin, pair.b);
        (ca - cb).norm() - self.spheres[pair.a].radius - self.spheres[pair.b].radius
    }
}

/// Robot link roles used by retargeting and the task hierarchy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Footprint,
    Torso,
    Shoulder,
    Elbow,
    Wrist,
}

/// A joint configuration used as the robot side of a calibration example.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RobotExample {
    pub q: Vec<f64>,
}

impl RobotExample {
    pub fn from_toml_str(text: &str) -> Result<Self, ModelError> {
        toml::from_str(text).map_err(|e| ModelError::Parse(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ModelError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ModelError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn default_example() -> Self {
        Self::from_toml_str(DEFAULT_ROBOT_EXAMPLE_TOML).expect("bundled example is valid")
    }

    pub fn joint_state(&self) -> JointState {
        Vector::from_vec(self.q.clone())
    }

    /// Role-frame poses of the example configuration.
    pub fn role_poses(&self, model: &RobotModel) -> Result<BTreeMap<Role, Transform>, ModelError> {
        let kin = model.forward_kinematics(&self.joint_state())?;
        Ok([Role::Footprint, Role::Torso, Role::Shoulder, Role::Elbow, Role::Wrist]
            .into_iter()
            .map(|r| (r, kin.link_poses[model.role_index(r)]))
            .collect())
    }
}

/// Rotation matrix helper used by tests and the synthetic human.
pub fn rotation_between(a: &Vec3, b: &Vec3) -> Rotation {
    let a = a.normalize();
    let b = b.normalize();
    let c = a.cross(&b);
    let s = c.norm();
    let d = a.dot(&b);
    if s < 1e-12 {
        if d > 0.0 {
            return Rotation::identity();
        }
        // half turn about any axis orthogonal to a
        let ortho = if a.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
        let axis = a.cross(&ortho).normalize();
        return Rotation::from_axis_angle(&axis, std::f64::consts::PI);
    }
    let k = crate::geom::skew(&c);
    let m: Matrix3<f64> = Matrix3::identity() + k + k * k * ((1.0 - d) / (s * s));
    Rotation::from_matrix(&m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::FRAC_PI_2;

    const ONE_DOF: &str = r#"
name = "planar"
root = "base"
[frames]
footprint = "base"
torso = "base"
shoulder = "upper"
elbow = "tip"
wrist = "hand"
[lengths]
footprint_torso = 1.0
shoulder_elbow = 1.0
elbow_wrist = 1.0
[[joint]]
name = "j1"
kind = "revolute"
axis = [0.0, 0.0, 1.0]
lower = -3.0
upper = 3.0
velocity = 1.0
parent = "base"
child = "upper"
[[joint]]
name = "fixed_tip"
kind = "prismatic"
axis = [1.0, 0.0, 0.0]
lower = -0.5
upper = 0.5
velocity = 1.0
parent = "upper"
child = "tip"
origin = { p = [1.0, 0.0, 0.0] }
[[joint]]
name = "j3"
kind = "revolute"
axis = [0.0, 0.0, 1.0]
lower = -3.0
upper = 3.0
velocity = 1.0
parent = "tip"
child = "hand"
origin = { p = [1.0, 0.0, 0.0] }
"#;

    #[test]
    fn revolute_chain_quarter_turn() {
        let m = RobotModel::from_toml_str(ONE_DOF).unwrap();
        let q = Vector::from_vec(vec![FRAC_PI_2, 0.0, 0.0]);
        let poses = m.link_poses(&q).unwrap();
        assert_relative_eq!(poses["tip"].translation, Vec3::new(0.0, 1.0, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn planar_jacobian_at_zero() {
        let m = RobotModel::from_toml_str(ONE_DOF).unwrap();
        let j = m.geometric_jacobian(&Vector::zeros(3), "tip").unwrap();
        assert_relative_eq!(j.column(0).into_owned(), Vector::from_vec(vec![0.0, 1.0, 0.0, 0.0, 0.0, 1.0]));
        // prismatic tip joint translates along x
        assert_relative_eq!(j.column(1).into_owned(), Vector::from_vec(vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0]));
        // the tip joint does not move "upper"
        let ju = m.geometric_jacobian(&Vector::zeros(3), "upper").unwrap();
        assert!(ju.column(1).iter().all(|&v| v == 0.0));
        assert!(matches!(m.geometric_jacobian(&Vector::zeros(3), "nope"), Err(ModelError::UnknownLink(_))));
    }

    #[test]
    fn limit_violation_names_joint() {
        let m = RobotModel::from_toml_str(ONE_DOF).unwrap();
        match m.forward_kinematics(&Vector::from_vec(vec![3.5, 0.0, 0.0])) {
            Err(ModelError::LimitViolation { joint, .. }) => assert_eq!(joint, "j1"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            m.forward_kinematics(&Vector::zeros(4)),
            Err(ModelError::DofMismatch { expected: 3, got: 4 })
        ));
    }

    #[test]
    fn bundled_model_shape() {
        let m = RobotModel::default_model();
        assert_eq!(m.dof(), 10);
        // torso and shoulder coincide
        assert_eq!(m.role_index(Role::Torso), m.role_index(Role::Shoulder));
        let kin = m.forward_kinematics(&Vector::zeros(10)).unwrap();
        for (name, pose) in &m.home {
            let (dp, dr) = kin.link_poses[m.link_index(name).unwrap()].distance(pose);
            assert!(dp < 1e-9 && dr < 1e-9, "{name}");
        }
    }

    #[test]
    fn prismatic_torso_lifts() {
        let m = RobotModel::default_model();
        let rt = m.role_index(Role::Torso);
        let q0 = Vector::zeros(10);
        let mut q1 = q0.clone();
        q1[0] = 0.2;
        let p0 = m.forward_kinematics(&q0).unwrap().link_poses[rt].translation;
        let p1 = m.forward_kinematics(&q1).unwrap().link_poses[rt].translation;
        assert_relative_eq!(p1 - p0, Vec3::new(0.0, 0.0, 0.2), epsilon = 1e-12);
    }

    #[test]
    fn inverted_limits_rejected() {
        let bad = ONE_DOF.replace("lower = -3.0", "lower = 3.0");
        match RobotModel::from_toml_str(&bad) {
            Err(ModelError::Invalid { field, .. }) => assert!(field.contains("lower"), "{field}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_wrist_frame_rejected() {
        let bad = ONE_DOF.replace("wrist = \"hand\"", "wrist = \"palm\"");
        match RobotModel::from_toml_str(&bad) {
            Err(ModelError::Invalid { field, .. }) => assert_eq!(field, "frames.wrist"),
            other => panic!("unexpected {other:?}"),
        }
        let bad = ONE_DOF.replace("wrist = \"hand\"\n", "");
        assert!(matches!(RobotModel::from_toml_str(&bad), Err(ModelError::Parse(_))));
    }

    #[test]
    fn length_mismatch_rejected() {
        let bad = ONE_DOF.replace("elbow_wrist = 1.0", "elbow_wrist = 0.7");
        assert!(matches!(RobotModel::from_toml_str(&bad), Err(ModelError::Invalid { .. })));
    }

    #[test]
    fn rotation_between_aligns() {
        let a = Vec3::new(0.3, -1.0, 0.2);
        let b = Vec3::new(-0.5, 0.1, 0.9);
        let r = rotation_between(&a, &b);
        assert_relative_eq!(r.rotate(&a.normalize()), b.normalize(), epsilon = 1e-12);
        let r = rotation_between(&a, &(-a));
        assert_relative_eq!(r.rotate(&a.normalize()), -a.normalize(), epsilon = 1e-12);
    }
}
