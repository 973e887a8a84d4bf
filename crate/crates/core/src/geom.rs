//! Rigid-body algebra and the small amount of linear algebra the controllers need.
//!
//! Rotations are stored as unit quaternions and converted to matrices on demand.
//! [`Transform`] follows the usual frame-chaining convention: `T_a^c = T_a^b * T_b^c`.

use std::fmt;
use std::ops::Mul;

use nalgebra::{DMatrix, DVector, Matrix3, Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;
pub type Vec3 = Vector3<f64>;

/// Damping used by every controller pseudo-inverse unless configured otherwise.
pub const DEFAULT_DAMPING: f64 = 1e-6;

/// Singular values below this (relative to `max(1, sigma_max)`) count as zero
/// when extracting a null space.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Quaternions whose norm is this close to one are accepted without renormalizing.
const UNIT_EXACT_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeomError {
    #[error("matrix contains non-finite entries")]
    NonFinite,
    #[error("undamped pseudo-inverse of a rank-deficient matrix (smallest singular value {0:e})")]
    RankDeficient(f64),
    #[error("quaternion norm {0} is not unit")]
    NonUnitQuaternion(f64),
    #[error("negative damping {0}")]
    NegativeDamping(f64),
}

/// Unit quaternion rotation; serialized as `[w, x, y, z]`.
#[derive(Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct Rotation(UnitQuaternion<f64>);

impl TryFrom<[f64; 4]> for Rotation {
    type Error = GeomError;
    fn try_from(wxyz: [f64; 4]) -> Result<Self, Self::Error> {
        Rotation::from_wxyz(wxyz, 1e-6)
    }
}

impl From<Rotation> for [f64; 4] {
    fn from(r: Rotation) -> Self {
        r.wxyz()
    }
}

impl Rotation {
    pub fn identity() -> Self {
        Rotation(UnitQuaternion::identity())
    }

    /// Builds a rotation from raw `(w, x, y, z)` components.
    ///
    /// Components within `tol` of unit norm are renormalized (and left bit-exact when the
    /// norm is already one to ~1e-12); anything further off is rejected.
    pub fn from_wxyz(wxyz: [f64; 4], tol: f64) -> Result<Self, GeomError> {
        let q = Quaternion::new(wxyz[0], wxyz[1], wxyz[2], wxyz[3]);
        let n = q.norm();
        if !n.is_finite() || (n - 1.0).abs() > tol {
            return Err(GeomError::NonUnitQuaternion(n));
        }
        if (n - 1.0).abs() <= UNIT_EXACT_TOL {
            Ok(Rotation(UnitQuaternion::new_unchecked(q)))
        } else {
            Ok(Rotation(UnitQuaternion::new_normalize(q)))
        }
    }

    pub fn from_axis_angle(axis: &Vec3, angle: f64) -> Self {
        match nalgebra::Unit::try_new(*axis, 1e-15) {
            Some(a) => Rotation(UnitQuaternion::from_axis_angle(&a, angle)),
            None => Self::identity(),
        }
    }

    /// Exponential map: rotation by `|v|` about `v / |v|`.
    pub fn from_rotation_vector(v: &Vec3) -> Self {
        Rotation(UnitQuaternion::from_scaled_axis(*v))
    }

    pub fn rot_x(angle: f64) -> Self {
        Self::from_axis_angle(&Vec3::x(), angle)
    }

    pub fn rot_y(angle: f64) -> Self {
        Self::from_axis_angle(&Vec3::y(), angle)
    }

    pub fn rot_z(angle: f64) -> Self {
        Self::from_axis_angle(&Vec3::z(), angle)
    }

    pub fn from_matrix(m: &Matrix3<f64>) -> Self {
        let rot = nalgebra::Rotation3::from_matrix_unchecked(*m);
        Rotation(UnitQuaternion::from_rotation_matrix(&rot))
    }

    pub fn from_unit_quaternion(q: UnitQuaternion<f64>) -> Self {
        Rotation(q)
    }

    pub fn quaternion(&self) -> &UnitQuaternion<f64> {
        &self.0
    }

    pub fn wxyz(&self) -> [f64; 4] {
        let q = self.0.quaternion();
        [q.w, q.i, q.j, q.k]
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        self.0.to_rotation_matrix().into_inner()
    }

    pub fn inverse(&self) -> Self {
        Rotation(self.0.inverse())
    }

    pub fn rotate(&self, v: &Vec3) -> Vec3 {
        self.0.transform_vector(v)
    }

    /// Logarithm map: the rotation vector (axis times angle, angle in `[0, pi]`).
    pub fn log(&self) -> Vec3 {
        let q = self.0.quaternion();
        let (w, v) = if q.w < 0.0 {
            (-q.w, -q.imag())
        } else {
            (q.w, q.imag())
        };
        let n = v.norm();
        if n < 1e-12 {
            // first-order expansion of 2*atan2(n, w) * v / n
            return v * (2.0 / w);
        }
        v * (2.0 * n.atan2(w) / n)
    }

    pub fn angle(&self) -> f64 {
        self.log().norm()
    }

    /// Heading of the rotated x axis projected on the xy plane.
    pub fn yaw(&self) -> f64 {
        let m = self.matrix();
        m[(1, 0)].atan2(m[(0, 0)])
    }

    /// Angle of the relative rotation, insensitive to quaternion sign.
    pub fn angle_to(&self, other: &Rotation) -> f64 {
        (self.inverse() * *other).angle()
    }
}

impl Mul for Rotation {
    type Output = Rotation;
    fn mul(self, rhs: Rotation) -> Rotation {
        Rotation(self.0 * rhs.0)
    }
}

impl Default for Rotation {
    fn default() -> Self {
        Self::identity()
    }
}

impl fmt::Debug for Rotation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [w, x, y, z] = self.wxyz();
        write!(f, "Rotation(w={w:.6}, x={x:.6}, y={y:.6}, z={z:.6})")
    }
}

/// Homogeneous rigid transform.
#[derive(Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "PoseRepr", into = "PoseRepr")]
pub struct Transform {
    pub rotation: Rotation,
    pub translation: Vec3,
}

impl Transform {
    pub fn identity() -> Self {
        Transform {
            rotation: Rotation::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn new(rotation: Rotation, translation: Vec3) -> Self {
        Transform {
            rotation,
            translation,
        }
    }

    pub fn from_translation(t: Vec3) -> Self {
        Transform::new(Rotation::identity(), t)
    }

    pub fn from_rotation(r: Rotation) -> Self {
        Transform::new(r, Vec3::zeros())
    }

    /// Planar pose `(x, y, yaw)` lifted to SE(3) on the z = 0 plane.
    pub fn planar(x: f64, y: f64, yaw: f64) -> Self {
        Transform::new(Rotation::rot_z(yaw), Vec3::new(x, y, 0.0))
    }

    /// `self * other`.
    pub fn compose(&self, other: &Transform) -> Transform {
        Transform {
            rotation: self.rotation * other.rotation,
            translation: self.translation + self.rotation.rotate(&other.translation),
        }
    }

    pub fn inverse(&self) -> Transform {
        let r = self.rotation.inverse();
        Transform {
            rotation: r,
            translation: -r.rotate(&self.translation),
        }
    }

    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.translation + self.rotation.rotate(p)
    }

    /// Translation and rotation distance to `other`.
    pub fn distance(&self, other: &Transform) -> (f64, f64) {
        (
            (self.translation - other.translation).norm(),
            self.rotation.angle_to(&other.rotation),
        )
    }

    pub fn is_finite(&self) -> bool {
        self.translation.iter().all(|v| v.is_finite())
            && self.rotation.wxyz().iter().all(|v| v.is_finite())
    }
}

impl Mul for Transform {
    type Output = Transform;
    fn mul(self, rhs: Transform) -> Transform {
        self.compose(&rhs)
    }
}

impl fmt::Debug for Transform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p = self.translation;
        write!(
            f,
            "Transform(p=[{:.6}, {:.6}, {:.6}], {:?})",
            p.x, p.y, p.z, self.rotation
        )
    }
}

/// On-disk pose: position in meters and a `(w, x, y, z)` quaternion.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PoseRepr {
    pub p: [f64; 3],
    #[serde(default = "identity_wxyz")]
    pub q: [f64; 4],
}

fn identity_wxyz() -> [f64; 4] {
    [1.0, 0.0, 0.0, 0.0]
}

impl TryFrom<PoseRepr> for Transform {
    type Error = GeomError;
    fn try_from(r: PoseRepr) -> Result<Self, Self::Error> {
        Ok(Transform::new(
            Rotation::from_wxyz(r.q, 1e-6)?,
            Vec3::new(r.p[0], r.p[1], r.p[2]),
        ))
    }
}

impl From<Transform> for PoseRepr {
    fn from(t: Transform) -> Self {
        PoseRepr {
            p: [t.translation.x, t.translation.y, t.translation.z],
            q: t.rotation.wxyz(),
        }
    }
}

pub fn skew(v: &Vec3) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

fn check_finite(m: &Matrix) -> Result<(), GeomError> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(GeomError::NonFinite)
    }
}

/// Singular triplets of `j` with `sigma > tol`, as columns of `u` and `v`.
///
/// Computed from the symmetric eigendecomposition of `[[0, J], [J^T, 0]]`, whose
/// eigenpairs are `+-sigma` with eigenvectors `[u; +-v] / sqrt(2)`. nalgebra's
/// `svd(true, true)` can return singular vectors that do not reconstruct some
/// rank-deficient inputs, while its symmetric eigensolver is reliable.
pub struct ThinSvd {
    pub s: Vec<f64>,
    pub u: Matrix,
    pub v: Matrix,
}

pub fn thin_svd(j: &Matrix, tol: f64) -> ThinSvd {
    let (m, n) = j.shape();
    let mut aug = Matrix::zeros(m + n, m + n);
    aug.view_mut((0, m), (m, n)).copy_from(j);
    aug.view_mut((m, 0), (n, m)).copy_from(&j.transpose());
    let eig = aug.symmetric_eigen();
    let mut order: Vec<usize> = (0..m + n).filter(|&k| eig.eigenvalues[k] > tol).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut u = Matrix::zeros(m, order.len());
    let mut v = Matrix::zeros(n, order.len());
    for (c, &k) in order.iter().enumerate() {
        let x = eig.eigenvectors.column(k);
        let uk = x.rows(0, m).normalize();
        let vk = x.rows(m, n).normalize();
        u.set_column(c, &uk);
        v.set_column(c, &vk);
    }
    ThinSvd {
        s: order.iter().map(|&k| eig.eigenvalues[k]).collect(),
        u,
        v,
    }
}

fn rank_tol(j: &Matrix) -> f64 {
    RANK_TOLERANCE * j.clone().singular_values().max().max(1.0)
}

/// Damped Moore-Penrose pseudo-inverse.
///
/// With `damping = lambda > 0` this is `V diag(s / (s^2 + lambda^2)) U^T` over the
/// singular values above the rank tolerance (equal to `J^T (J J^T + lambda^2 I)^-1` for
/// well-conditioned `J`), defined for every finite input. With zero damping the plain
/// pseudo-inverse is returned, and rank deficiency is an error.
pub fn pseudo_inverse(j: &Matrix, damping: f64) -> Result<Matrix, GeomError> {
    check_finite(j)?;
    if damping < 0.0 || !damping.is_finite() {
        return Err(GeomError::NegativeDamping(damping));
    }
    let (rows, cols) = j.shape();
    if rows == 0 || cols == 0 {
        return Ok(Matrix::zeros(cols, rows));
    }
    let s = j.clone().singular_values();
    if damping == 0.0 {
        let tol = (rows.max(cols) as f64) * f64::EPSILON * s.max().max(f64::MIN_POSITIVE);
        let s_min = s.min();
        if s_min <= tol {
            return Err(GeomError::RankDeficient(s_min));
        }
    }
    let svd = thin_svd(j, RANK_TOLERANCE * s.max().max(1.0));
    let lambda2 = damping * damping;
    let w: Vec<f64> = svd.s.iter().map(|sk| sk / (sk * sk + lambda2)).collect();
    Ok(&svd.v * Matrix::from_diagonal(&Vector::from_vec(w)) * svd.u.transpose())
}

/// Numerical rank with the null-space tolerance.
pub fn rank(j: &Matrix) -> usize {
    if j.nrows() == 0 || j.ncols() == 0 {
        return 0;
    }
    let s = j.clone().singular_values();
    let tol = RANK_TOLERANCE * s.max().max(1.0);
    s.iter().filter(|&&v| v > tol).count()
}

/// Orthogonal projector onto the null space of `j` (`N = I - J^+ J`).
///
/// Built from the rank-revealing decomposition, so the result is symmetric and
/// idempotent up to rounding even when `j` is ill-conditioned. A matrix with zero
/// columns yields an empty projector; a matrix with zero rows yields the identity.
pub fn null_space_projector(j: &Matrix) -> Result<Matrix, GeomError> {
    check_finite(j)?;
    let n = j.ncols();
    let proj = Matrix::identity(n, n);
    if j.nrows() == 0 || n == 0 {
        return Ok(proj);
    }
    let v = thin_svd(j, rank_tol(j)).v;
    let proj = proj - &v * v.transpose();
    // symmetrize to remove rounding asymmetry
    let sym = (&proj + proj.transpose()) * 0.5;
    Ok(sym)
}
