//! C ABI over the rtwbc library.
//!
//! Every function returns an [`RtwbcStatus`]; on failure a message for the calling
//! thread is available from [`rtwbc_last_error`]. Objects are opaque handles created
//! by `*_new`/`*_load` functions and released with the matching `*_free`.
//!
//! Poses cross the boundary as 7 doubles: translation `x, y, z` then the unit
//! quaternion `w, x, y, z`.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use rtwbc::admittance::{Admittance, AdmittanceParams, Wrench};
use rtwbc::base::{imitation_command, step_base, BaseCommand, BaseParams, BasePose, Branch};
use rtwbc::geom::{Rotation, Transform, Vec3, Vector};
use rtwbc::model::RobotModel;
use rtwbc::stream::decode;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RtwbcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Parse = 3,
    Io = 4,
    Decode = 5,
    BufferTooSmall = 6,
    Numeric = 7,
    Panic = 8,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).expect("nul bytes removed"));
}

fn fail(status: RtwbcStatus, msg: impl Into<String>) -> RtwbcStatus {
    set_error(msg);
    status
}

/// Runs `f`, turning a panic into [`RtwbcStatus::Panic`].
fn guard(f: impl FnOnce() -> RtwbcStatus) -> RtwbcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            fail(RtwbcStatus::Panic, msg)
        }
    }
}

macro_rules! nonnull {
    ($($p:ident),+) => {
        $(if $p.is_null() {
            return fail(RtwbcStatus::NullPointer, concat!("`", stringify!($p), "` is null"));
        })+
    };
}

/// Message of the last failure on this thread; empty after a success-only history.
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn rtwbc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

unsafe fn read_pose(p: *const f64) -> Result<Transform, RtwbcStatus> {
    let v = std::slice::from_raw_parts(p, 7);
    let rotation = Rotation::from_wxyz([v[3], v[4], v[5], v[6]], 1e-6).map_err(|e| fail(RtwbcStatus::InvalidArgument, e.to_string()))?;
    let t = Transform::new(rotation, Vec3::new(v[0], v[1], v[2]));
    if !t.is_finite() {
        return Err(fail(RtwbcStatus::InvalidArgument, "pose is not finite"));
    }
    Ok(t)
}

unsafe fn write_pose(t: &Transform, out: *mut f64) {
    let q = t.rotation.wxyz();
    let v = [t.translation.x, t.translation.y, t.translation.z, q[0], q[1], q[2], q[3]];
    ptr::copy_nonoverlapping(v.as_ptr(), out, 7);
}

unsafe fn str_arg<'a>(s: *const c_char) -> Result<&'a str, RtwbcStatus> {
    CStr::from_ptr(s).to_str().map_err(|_| fail(RtwbcStatus::InvalidArgument, "string is not UTF-8"))
}

// ---- robot model ----

/// Opaque robot model.
pub struct RtwbcModel(RobotModel);

/// The bundled 10-DOF upper-body model.
#[no_mangle]
pub unsafe extern "C" fn rtwbc_model_default(out: *mut *mut RtwbcModel) -> RtwbcStatus {
    nonnull!(out);
    guard(|| {
        *out = Box::into_raw(Box::new(RtwbcModel(RobotModel::default_model())));
        RtwbcStatus::Ok
    })
}

/// Loads a model from a TOML file.
#[no_mangle]
pub unsafe extern "C" fn rtwbc_model_load(path: *const c_char, out: *mut *mut RtwbcModel) -> RtwbcStatus {
    nonnull!(path, out);
    guard(|| {
        let path = match str_arg(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        match RobotModel::load(path) {
            Ok(m) => {
                *out = Box::into_raw(Box::new(RtwbcModel(m)));
                RtwbcStatus::Ok
            }
            Err(e @ rtwbc::model::ModelError::Io { .. }) => fail(RtwbcStatus::Io, e.to_string()),
            Err(e) => fail(RtwbcStatus::Parse, e.to_string()),
        }
    })
}

#[no_mangle]
pub unsafe extern "C" fn rtwbc_model_free(model: *mut RtwbcModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

#[no_mangle]
pub unsafe extern "C" fn rtwbc_model_dof(model: *const RtwbcModel, out: *mut usize) -> RtwbcStatus {
    nonnull!(model, out);
    *out = (*model).0.dof();
    RtwbcStatus::Ok
}

unsafe fn joint_state(model: &RobotModel, q: *const f64, n: usize) -> Result<Vector, RtwbcStatus> {
    if n != model.dof() {
        return Err(fail(RtwbcStatus::InvalidArgument, format!("expected {} joint values, got {n}", model.dof())));
    }
    let q = Vector::from_column_slice(std::slice::from_raw_parts(q, n));
    model.check_state(&q).map_err(|e| fail(RtwbcStatus::InvalidArgument, e.to_string()))?;
    Ok(q)
}

/// Pose of `link` in the footprint frame at `q` (`n` = dof values), written to `out_pose[7]`.
#[no_mangle]
pub unsafe extern "C" fn rtwbc_model_fk(model: *const RtwbcModel, q: *const f64, n: usize, link: *const c_char, out_pose: *mut f64) -> RtwbcStatus {
    nonnull!(model, q, link, out_pose);
    guard(|| {
        let m = &(*model).0;
        let (q, link) = match (joint_state(m, q, n), str_arg(link)) {
            (Ok(q), Ok(l)) => (q, l),
            (Err(s), _) | (_, Err(s)) => return s,
        };
        match m.link_poses(&q) {
            Ok(poses) => match poses.get(link) {
                Some(t) => {
                    write_pose(t, out_pose);
                    RtwbcStatus::Ok
                }
                None => fail(RtwbcStatus::InvalidArgument, format!("unknown link `{link}`")),
            },
            Err(e) => fail(RtwbcStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// 6 x dof geometric Jacobian `[linear; angular]` of `link`, row-major into `out`,
/// which must hold `cap >= 6 * dof` doubles.
#[no_mangle]
pub unsafe extern "C" fn rtwbc_model_jacobian(
    model: *const RtwbcModel,
    q: *const f64,
    n: usize,
    link: *const c_char,
    out: *mut f64,
    cap: usize,
) -> RtwbcStatus {
    nonnull!(model, q, link, out);
    guard(|| {
        let m = &(*model).0;
        let (q, link) = match (joint_state(m, q, n), str_arg(link)) {
            (Ok(q), Ok(l)) => (q, l),
            (Err(s), _) | (_, Err(s)) => return s,
        };
        if cap < 6 * n {
            return fail(RtwbcStatus::BufferTooSmall, format!("need {} doubles, got {cap}", 6 * n));
        }
        match m.geometric_jacobian(&q, link) {
            Ok(j) => {
                let out = std::slice::from_raw_parts_mut(out, 6 * n);
                for r in 0..6 {
                    for c in 0..n {
                        out[r * n + c] = j[(r, c)];
                    }
                }
                RtwbcStatus::Ok
            }
            Err(e) => fail(RtwbcStatus::InvalidArgument, e.to_string()),
        }
    })
}

// ---- admittance ----

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct RtwbcAdmittanceParams {
    pub m: f64,
    pub zeta: f64,
    pub k_min: f64,
    pub k_max: f64,
    pub a: f64,
    pub b: f64,
    pub c_minus: f64,
    pub c_plus: f64,
    pub f_thres: f64,
    pub filter_window: usize,
    pub sample_rate: f64,
}

impl From<RtwbcAdmittanceParams> for AdmittanceParams {
    fn from(p: RtwbcAdmittanceParams) -> Self {
        AdmittanceParams {
            m: p.m,
            zeta: p.zeta,
            k_min: p.k_min,
            k_max: p.k_max,
            a: p.a,
            b: p.b,
            c_minus: p.c_minus,
            c_plus: p.c_plus,
            f_thres: p.f_thres,
            filter_window: p.filter_window,
            sample_rate: p.sample_rate,
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct RtwbcStabilityCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct RtwbcTelemetry {
    pub psi: f64,
    pub alpha: f64,
    pub k: f64,
    pub k_dot: f64,
    pub bound: f64,
    pub violation: bool,
    pub fault: bool,
    pub e: [f64; 6],
}

/// Opaque variable admittance controller.
pub struct RtwbcAdmittance(Admittance);

#[no_mangle]
pub unsafe extern "C" fn rtwbc_admittance_params_default(out: *mut RtwbcAdmittanceParams) -> RtwbcStatus {
    nonnull!(out);
    let p = AdmittanceParams::default();
    *out = RtwbcAdmittanceParams {
        m: p.m,
        zeta: p.zeta,
        k_min: p.k_min,
        k_max: p.k_max,
        a: p.a,
        b: p.b,
        c_minus: p.c_minus,
        c_plus: p.c_plus,
        f_thres: p.f_thres,
        filter_window: p.filter_window,
        sample_rate: p.sample_rate,
    };
    RtwbcStatus::Ok
}

/// Evaluates the sufficient stability condition; does not validate the parameters.
#[no_mangle]
pub unsafe extern "C" fn rtwbc_check_stability(params: *const RtwbcAdmittanceParams, out: *mut RtwbcStabilityCheck) -> RtwbcStatus {
    nonnull!(params, out);
    let c = AdmittanceParams::from(*params).check_sufficient_stability();
    *out = RtwbcStabilityCheck {
        lhs: c.lhs,
        rhs: c.rhs,
        holds: c.holds,
    };
    RtwbcStatus::Ok
}

#[no_mangle]
pub unsafe extern "C" fn rtwbc_admittance_new(params: *const RtwbcAdmittanceParams, out: *mut *mut RtwbcAdmittance) -> RtwbcStatus {
    nonnull!(params, out);
    guard(|| match Admittance::new((*params).into()) {
        Ok(a) => {
            *out = Box::into_raw(Box::new(RtwbcAdmittance(a)));
            RtwbcStatus::Ok
        }
        Err(e) => fail(RtwbcStatus::InvalidArgument, e.to_string()),
    })
}

#[no_mangle]
pub unsafe extern "C" fn rtwbc_admittance_free(adm: *mut RtwbcAdmittance) {
    if !adm.is_null() {
        drop(Box::from_raw(adm));
    }
}

/// One control period. `force` and `torque` (3 doubles each) are a new sensor sample
/// when `has_sample` is true and are ignored otherwise. Writes the commanded pose to
/// `out_pose[7]`; `out_telemetry` may be null.
#[no_mangle]
pub unsafe extern "C" fn rtwbc_admittance_step(
    adm: *mut RtwbcAdmittance,
    x_ref: *const f64,
    force: *const f64,
    torque: *const f64,
    has_sample: bool,
    dt: f64,
    out_pose: *mut f64,
    out_telemetry: *mut RtwbcTelemetry,
) -> RtwbcStatus {
    nonnull!(adm, x_ref, out_pose);
    if has_sample {
        nonnull!(force, torque);
    }
    guard(|| {
        let x = match read_pose(x_ref) {
            Ok(x) => x,
            Err(s) => return s,
        };
        let sample = has_sample.then(|| {
            let f = std::slice::from_raw_parts(force, 3);
            let t = std::slice::from_raw_parts(torque, 3);
            Wrench::new(Vec3::new(f[0], f[1], f[2]), Vec3::new(t[0], t[1], t[2]))
        });
        match (*adm).0.step(&x, sample, dt) {
            Ok(out) => {
                write_pose(&out.x_cmd, out_pose);
                if !out_telemetry.is_null() {
                    let m = out.telemetry;
                    *out_telemetry = RtwbcTelemetry {
                        psi: m.psi,
                        alpha: m.alpha,
                        k: m.k,
                        k_dot: m.k_dot,
                        bound: m.bound,
                        violation: m.violation,
                        fault: m.fault,
                        e: m.e,
                    };
                }
                RtwbcStatus::Ok
            }
            Err(e) => fail(RtwbcStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// Stability-bound violations recorded so far.
#[no_mangle]
pub unsafe extern "C" fn rtwbc_admittance_violations(adm: *const RtwbcAdmittance, out: *mut u64) -> RtwbcStatus {
    nonnull!(adm, out);
    *out = (*adm).0.violations();
    RtwbcStatus::Ok
}

// ---- datagrams ----

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct RtwbcSegment {
    pub id: u32,
    pub pose: [f64; 7],
}

/// Decodes one datagram. Up to `cap` segments are written to `segments`; `out_count`
/// receives the number in the datagram, and `BufferTooSmall` is returned if it
/// exceeds `cap`.
#[no_mangle]
pub unsafe extern "C" fn rtwbc_datagram_decode(
    bytes: *const u8,
    len: usize,
    out_sequence: *mut u32,
    out_timestamp: *mut f64,
    segments: *mut RtwbcSegment,
    cap: usize,
    out_count: *mut usize,
) -> RtwbcStatus {
    nonnull!(bytes, out_sequence, out_timestamp, out_count);
    if cap > 0 {
        nonnull!(segments);
    }
    guard(|| {
        let d = match decode(std::slice::from_raw_parts(bytes, len)) {
            Ok(d) => d,
            Err(e) => return fail(RtwbcStatus::Decode, e.to_string()),
        };
        *out_sequence = d.sequence;
        *out_timestamp = d.observation.timestamp;
        *out_count = d.observation.segments.len();
        if d.observation.segments.len() > cap {
            return fail(RtwbcStatus::BufferTooSmall, format!("{} segments, room for {cap}", d.observation.segments.len()));
        }
        for (i, (id, t)) in d.observation.segments.iter().enumerate() {
            let s = &mut *segments.add(i);
            s.id = *id;
            write_pose(t, s.pose.as_mut_ptr());
        }
        RtwbcStatus::Ok
    })
}

// ---- base ----

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct RtwbcBaseParams {
    pub epsilon: f64,
    pub delta: f64,
    pub lambda: f64,
    pub sigma: f64,
    pub v_max: f64,
    pub omega_max: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct RtwbcBasePose {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RtwbcBranch {
    Align = 0,
    Backward = 1,
    Forward = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct RtwbcBaseCommand {
    pub v: f64,
    pub omega: f64,
    pub branch: RtwbcBranch,
}

#[no_mangle]
pub unsafe extern "C" fn rtwbc_base_params_default(out: *mut RtwbcBaseParams) -> RtwbcStatus {
    nonnull!(out);
    let p = BaseParams::default();
    *out = RtwbcBaseParams {
        epsilon: p.epsilon,
        delta: p.delta,
        lambda: p.lambda,
        sigma: p.sigma,
        v_max: p.v_max,
        omega_max: p.omega_max,
    };
    RtwbcStatus::Ok
}

/// Base command toward a goal given in the robot footprint frame as `(x, y, yaw)`.
#[no_mangle]
pub unsafe extern "C" fn rtwbc_base_command(goal: *const RtwbcBasePose, params: *const RtwbcBaseParams, out: *mut RtwbcBaseCommand) -> RtwbcStatus {
    nonnull!(goal, params, out);
    let p = *params;
    let params = BaseParams {
        epsilon: p.epsilon,
        delta: p.delta,
        lambda: p.lambda,
        sigma: p.sigma,
        v_max: p.v_max,
        omega_max: p.omega_max,
    };
    if let Err(e) = params.validate() {
        return fail(RtwbcStatus::InvalidArgument, e);
    }
    let g = *goal;
    let (cmd, branch) = imitation_command(&Transform::planar(g.x, g.y, g.theta), &params);
    *out = RtwbcBaseCommand {
        v: cmd.v,
        omega: cmd.omega,
        branch: match branch {
            Branch::Align => RtwbcBranch::Align,
            Branch::Backward => RtwbcBranch::Backward,
            Branch::Forward => RtwbcBranch::Forward,
        },
    };
    RtwbcStatus::Ok
}

/// Integrates a unicycle command over `dt`.
#[no_mangle]
pub unsafe extern "C" fn rtwbc_base_step(pose: *const RtwbcBasePose, cmd: *const RtwbcBaseCommand, dt: f64, out: *mut RtwbcBasePose) -> RtwbcStatus {
    nonnull!(pose, cmd, out);
    if !(dt >= 0.0 && dt.is_finite()) {
        return fail(RtwbcStatus::InvalidArgument, "dt must be finite and non-negative");
    }
    let p = *pose;
    let c = *cmd;
    let next = step_base(&BasePose::new(p.x, p.y, p.theta), &BaseCommand { v: c.v, omega: c.omega }, dt);
    if !(next.x.is_finite() && next.y.is_finite() && next.theta.is_finite()) {
        return fail(RtwbcStatus::Numeric, "base pose is not finite");
    }
    *out = RtwbcBasePose {
        x: next.x,
        y: next.y,
        theta: next.theta,
    };
    RtwbcStatus::Ok
}
