//! Variable admittance between the retargeted end-effector goal and the whole-body
//! controller.
//!
//! Each of the six pose axes follows `m e'' + d e' + k e = f` with the commanded pose
//! `x_cmd = x_ref (+) e`. The stiffness is scheduled by a role factor driven by an
//! interaction factor that integrates force-threshold crossings:
//!
//! ```text
//! psi'  = c_plus if |F| > F_thres else c_minus      (clamped to [0, 1])
//! alpha = 1 / (1 + exp(-(a psi + b)))
//! k     = k_min + (1 - alpha) (k_max - k_min)       (leader when psi = 0)
//! d     = 2 zeta sqrt(m k)
//! ```

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{Rotation, Transform, Vec3};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AdmittanceError {
    #[error("invalid admittance parameter {field}: {reason}")]
    InvalidParam { field: &'static str, reason: String },
    #[error("time step {0} outside (0, 0.1] s")]
    BadTimeStep(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdmittanceParams {
    /// Virtual mass (kg, or kg m^2 on rotational axes).
    pub m: f64,
    pub zeta: f64,
    pub k_min: f64,
    pub k_max: f64,
    pub a: f64,
    pub b: f64,
    pub c_minus: f64,
    pub c_plus: f64,
    /// Interaction force threshold (N).
    pub f_thres: f64,
    pub filter_window: usize,
    /// Force sampling rate (Hz).
    pub sample_rate: f64,
}

impl Default for AdmittanceParams {
    fn default() -> Self {
        AdmittanceParams {
            m: 1.0,
            zeta: 1.1,
            k_min: 10.0,
            k_max: 500.0,
            a: 20.0,
            b: -5.5,
            c_minus: -0.2,
            c_plus: 1.5,
            f_thres: 5.0,
            filter_window: 25,
            sample_rate: 40.0,
        }
    }
}

fn bad(field: &'static str, reason: &str) -> AdmittanceError {
    AdmittanceError::InvalidParam {
        field,
        reason: reason.to_string(),
    }
}

impl AdmittanceParams {
    pub fn validate(&self) -> Result<(), AdmittanceError> {
        let finite = [
            ("m", self.m),
            ("zeta", self.zeta),
            ("k_min", self.k_min),
            ("k_max", self.k_max),
            ("a", self.a),
            ("b", self.b),
            ("c_minus", self.c_minus),
            ("c_plus", self.c_plus),
            ("f_thres", self.f_thres),
            ("sample_rate", self.sample_rate),
        ];
        for (f, v) in finite {
            if !v.is_finite() {
                return Err(bad(f, "must be finite"));
            }
        }
        if self.m <= 0.0 {
            return Err(bad("m", "must be positive"));
        }
        if self.zeta <= 0.0 {
            return Err(bad("zeta", "must be positive"));
        }
        if self.k_min <= 0.0 {
            return Err(bad("k_min", "must be positive"));
        }
        if self.k_max <= self.k_min {
            return Err(bad("k_max", "must exceed k_min"));
        }
        if self.c_plus <= 0.0 {
            return Err(bad("c_plus", "must be positive"));
        }
        if self.c_minus >= 0.0 {
            return Err(bad("c_minus", "must be negative"));
        }
        if self.f_thres <= 0.0 {
            return Err(bad("f_thres", "must be positive"));
        }
        if self.filter_window == 0 {
            return Err(bad("filter_window", "must be at least 1"));
        }
        if self.sample_rate <= 0.0 {
            return Err(bad("sample_rate", "must be positive"));
        }
        Ok(())
    }

    /// `gamma = 2 zeta sqrt(k_min / m)`.
    pub fn gamma(&self) -> f64 {
        2.0 * self.zeta * (self.k_min / self.m).sqrt()
    }

    pub fn role_factor(&self, psi: f64) -> f64 {
        1.0 / (1.0 + (-(self.a * psi + self.b)).exp())
    }

    /// `k_min + alpha (k_max - k_min)`.
    pub fn stiffness(&self, alpha: f64) -> f64 {
        self.k_min + alpha * (self.k_max - self.k_min)
    }

    /// Stiffness commanded for a role factor: stiff (leader) at low interaction,
    /// compliant (follower) once the interaction factor saturates.
    pub fn scheduled_stiffness(&self, alpha: f64) -> f64 {
        self.stiffness(1.0 - alpha)
    }

    pub fn damping(&self, k: f64) -> f64 {
        2.0 * self.zeta * (self.m * k).sqrt()
    }

    /// Largest stiffness derivative that keeps the variable admittance stable at `k`.
    pub fn stiffness_rate_bound(&self, k: f64) -> f64 {
        let g = self.gamma();
        2.0 * g * (k * k * k).sqrt() / (k.sqrt() + 2.0 * self.zeta * g * self.m.sqrt())
    }

    pub fn check_sufficient_stability(&self) -> StabilityCheck {
        let eb = (-self.b).exp();
        let lhs = -self.a * eb * (self.k_max - self.k_min) * self.c_minus / (1.0 + eb).powi(2);
        let rhs = 4.0 * self.zeta * (self.k_min.powi(3)).sqrt() / (1.0 + 4.0 * self.zeta * self.m.sqrt());
        StabilityCheck {
            holds: lhs < rhs,
            lhs,
            rhs,
        }
    }

    /// Interaction factor after `dt` with the filtered force magnitude compared to the
    /// threshold (torque excluded).
    pub fn update_interaction_factor(&self, psi: f64, filtered: &Wrench, dt: f64) -> f64 {
        let rate = if filtered.force.norm() > self.f_thres {
            self.c_plus
        } else {
            self.c_minus
        };
        (psi + rate * dt).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StabilityCheck {
    pub holds: bool,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Wrench {
    pub force: Vec3,
    pub torque: Vec3,
}

impl Wrench {
    pub fn new(force: Vec3, torque: Vec3) -> Self {
        Wrench { force, torque }
    }

    pub fn from_force(force: Vec3) -> Self {
        Wrench {
            force,
            torque: Vec3::zeros(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.force.iter().chain(self.torque.iter()).all(|v| v.is_finite())
    }

    pub fn axes(&self) -> [f64; 6] {
        [self.force.x, self.force.y, self.force.z, self.torque.x, self.torque.y, self.torque.z]
    }
}

/// Unweighted moving average over the last `window` samples.
#[derive(Debug, Clone)]
pub struct MovingAverage {
    window: usize,
    samples: VecDeque<Wrench>,
}

impl MovingAverage {
    pub fn new(window: usize) -> Self {
        assert!(window > 0, "window must be positive");
        MovingAverage {
            window,
            samples: VecDeque::with_capacity(window),
        }
    }

    /// Adds a sample and returns the mean of the retained ones (fewer than `window`
    /// during warm-up).
    pub fn push(&mut self, sample: Wrench) -> Wrench {
        if self.samples.len() == self.window {
            self.samples.pop_front();
        }
        self.samples.push_back(sample);
        self.mean()
    }

    pub fn mean(&self) -> Wrench {
        if self.samples.is_empty() {
            return Wrench::default();
        }
        // summed from scratch so a settled window reproduces its value exactly
        let n = self.samples.len() as f64;
        let (f, t) = self
            .samples
            .iter()
            .fold((Vec3::zeros(), Vec3::zeros()), |(f, t), s| (f + s.force, t + s.torque));
        Wrench::new(f / n, t / n)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AdmittanceState {
    /// Pose offset per axis: translation (m) then rotation vector (rad).
    pub e: [f64; 6],
    pub ed: [f64; 6],
    pub psi: f64,
    pub alpha: f64,
    pub k: f64,
    pub d: f64,
}

/// Per-step monitor record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Telemetry {
    pub psi: f64,
    pub alpha: f64,
    pub k: f64,
    pub k_dot: f64,
    pub bound: f64,
    pub margin: f64,
    pub violation: bool,
    pub e: [f64; 6],
    pub force: [f64; 3],
    pub fault: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutput {
    pub x_cmd: Transform,
    /// Rate of the pose offset `[linear; angular]`, added to the task feed-forward.
    pub offset_rate: [f64; 6],
    pub telemetry: Telemetry,
}

#[derive(Debug, Clone)]
pub struct Admittance {
    params: AdmittanceParams,
    state: AdmittanceState,
    filter: MovingAverage,
    filtered: Wrench,
    fixed_k: Option<f64>,
    violations: u64,
    faults: u64,
}

impl Admittance {
    pub fn new(params: AdmittanceParams) -> Result<Self, AdmittanceError> {
        params.validate()?;
        let psi = 0.0;
        let alpha = params.role_factor(psi);
        let k = params.scheduled_stiffness(alpha);
        Ok(Admittance {
            params,
            state: AdmittanceState {
                e: [0.0; 6],
                ed: [0.0; 6],
                psi,
                alpha,
                k,
                d: params.damping(k),
            },
            filter: MovingAverage::new(params.filter_window),
            filtered: Wrench::default(),
            fixed_k: None,
            violations: 0,
            faults: 0,
        })
    }

    /// Admittance with the stiffness frozen at `k` regardless of interaction.
    pub fn with_fixed_stiffness(params: AdmittanceParams, k: f64) -> Result<Self, AdmittanceError> {
        if !(k > 0.0 && k.is_finite()) {
            return Err(bad("k", "must be positive"));
        }
        let mut a = Admittance::new(params)?;
        a.fixed_k = Some(k);
        a.state.k = k;
        a.state.d = params.damping(k);
        Ok(a)
    }

    pub fn params(&self) -> &AdmittanceParams {
        &self.params
    }

    pub fn state(&self) -> &AdmittanceState {
        &self.state
    }

    pub fn filtered(&self) -> Wrench {
        self.filtered
    }

    pub fn violations(&self) -> u64 {
        self.violations
    }

    pub fn faults(&self) -> u64 {
        self.faults
    }

    /// Advances the virtual dynamics by `dt`.
    ///
    /// `sample` is a new force/torque measurement (expressed in the same frame as
    /// `x_ref`), or `None` when no new sample arrived this step, in which case the
    /// filtered value is held. A non-finite sample is discarded, the state is held and
    /// the step is flagged as a fault.
    pub fn step(&mut self, x_ref: &Transform, sample: Option<Wrench>, dt: f64) -> Result<StepOutput, AdmittanceError> {
        if !(dt > 0.0 && dt <= 0.1) {
            return Err(AdmittanceError::BadTimeStep(dt));
        }
        let p = self.params;
        if let Some(w) = sample {
            if !w.is_finite() {
                self.faults += 1;
                let bound = p.stiffness_rate_bound(self.state.k);
                let telemetry = self.telemetry(0.0, bound, true);
                return Ok(StepOutput {
                    x_cmd: apply_offset(x_ref, &self.state.e),
                    offset_rate: [0.0; 6],
                    telemetry,
                });
            }
            self.filtered = self.filter.push(w);
        }

        let s = &mut self.state;
        let k_prev = s.k;
        s.psi = p.update_interaction_factor(s.psi, &self.filtered, dt);
        s.alpha = p.role_factor(s.psi);
        s.k = self.fixed_k.unwrap_or_else(|| p.scheduled_stiffness(s.alpha));
        s.d = p.damping(s.k);

        let f = self.filtered.axes();
        for (i, &fi) in f.iter().enumerate() {
            let (e, ed) = step_axis(p.m, s.d, s.k, fi, s.e[i], s.ed[i], dt);
            s.e[i] = e;
            s.ed[i] = ed;
        }

        let k_dot = (s.k - k_prev) / dt;
        let bound = p.stiffness_rate_bound(s.k);
        let telemetry = self.telemetry(k_dot, bound, false);
        if telemetry.violation {
            self.violations += 1;
        }
        Ok(StepOutput {
            x_cmd: apply_offset(x_ref, &self.state.e),
            offset_rate: self.state.ed,
            telemetry,
        })
    }

    fn telemetry(&self, k_dot: f64, bound: f64, fault: bool) -> Telemetry {
        let s = &self.state;
        let margin = bound - k_dot;
        Telemetry {
            psi: s.psi,
            alpha: s.alpha,
            k: s.k,
            k_dot,
            bound,
            margin,
            violation: margin < 0.0,
            e: s.e,
            force: [self.filtered.force.x, self.filtered.force.y, self.filtered.force.z],
            fault,
        }
    }
}

/// `x_ref (+) e`: translation offset added, rotation offset applied on the left.
pub fn apply_offset(x_ref: &Transform, e: &[f64; 6]) -> Transform {
    let r = Rotation::from_rotation_vector(&Vec3::new(e[3], e[4], e[5]));
    Transform::new(r * x_ref.rotation, x_ref.translation + Vec3::new(e[0], e[1], e[2]))
}

/// Exact solution of `m e'' + d e' + k e = f` over `dt` with constant coefficients.
///
/// `x(dt) = x_ss + exp(A dt) (x(0) - x_ss)` with `x_ss = (f / k, 0)`, using the
/// closed form `exp(A t) = e^{mu t} (cosh(nu t) I + sinh(nu t) / nu (A - mu I))`.
pub fn step_axis(m: f64, d: f64, k: f64, f: f64, e: f64, ed: f64, dt: f64) -> (f64, f64) {
    let mu = -d / (2.0 * m);
    let nu2 = mu * mu - k / m;
    let x0 = e - f / k;
    let v0 = ed;
    // c = cosh(nu t), s = sinh(nu t) / nu, continued analytically for nu^2 <= 0
    let (c, s) = if nu2 > 1e-12 {
        let nu = nu2.sqrt();
        ((nu * dt).cosh(), (nu * dt).sinh() / nu)
    } else if nu2 < -1e-12 {
        let w = (-nu2).sqrt();
        ((w * dt).cos(), (w * dt).sin() / w)
    } else {
        (1.0 + 0.5 * nu2 * dt * dt, dt * (1.0 + nu2 * dt * dt / 6.0))
    };
    let g = (mu * dt).exp();
    // A - mu I = [[-mu, 1], [-k/m, -d/m - mu]]
    let a11 = -mu;
    let a21 = -k / m;
    let a22 = -d / m - mu;
    let x1 = g * (c * x0 + s * (a11 * x0 + v0));
    let v1 = g * (c * v0 + s * (a21 * x0 + a22 * v0));
    (x1 + f / k, v1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[allow(clippy::too_many_arguments)]
    fn rk4(m: f64, d: f64, k: f64, f: f64, mut e: f64, mut ed: f64, h: f64, n: usize) -> (f64, f64) {
        let acc = |e: f64, ed: f64| (f - d * ed - k * e) / m;
        for _ in 0..n {
            let (k1e, k1v) = (ed, acc(e, ed));
            let (k2e, k2v) = (ed + 0.5 * h * k1v, acc(e + 0.5 * h * k1e, ed + 0.5 * h * k1v));
            let (k3e, k3v) = (ed + 0.5 * h * k2v, acc(e + 0.5 * h * k2e, ed + 0.5 * h * k2v));
            let (k4e, k4v) = (ed + h * k3v, acc(e + h * k3e, ed + h * k3v));
            e += h / 6.0 * (k1e + 2.0 * k2e + 2.0 * k3e + k4e);
            ed += h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
        }
        (e, ed)
    }

    #[test]
    fn default_parameters_evaluate() {
        let p = AdmittanceParams::default();
        assert_relative_eq!(p.role_factor(0.0), 0.004070137715896128, max_relative = 1e-12);
        assert_relative_eq!(1.0 - p.role_factor(1.0), 5.0435e-7, max_relative = 1e-3);
        assert_relative_eq!(p.role_factor(0.275), 0.5, epsilon = 1e-15);
        assert_eq!(p.stiffness(0.0), 10.0);
        assert_eq!(p.stiffness(1.0), 500.0);
        assert_relative_eq!(p.damping(10.0), 6.957010852370436, max_relative = 1e-12);
        assert_relative_eq!(p.gamma(), 6.957010852370436, max_relative = 1e-12);
        assert_relative_eq!(p.stiffness_rate_bound(10.0), 23.825379631405596, max_relative = 1e-12);
        assert_relative_eq!(p.stiffness_rate_bound(500.0), 4130.06594219791, max_relative = 1e-12);
        let c = p.check_sufficient_stability();
        assert!(c.holds);
        assert_relative_eq!(c.lhs, 7.9450005219447455, max_relative = 1e-12);
        assert_relative_eq!(c.rhs, 25.76670686063124, max_relative = 1e-12);
    }

    #[test]
    fn stability_condition_counterexamples() {
        let p = AdmittanceParams {
            c_minus: -10.0,
            ..Default::default()
        };
        let c = p.check_sufficient_stability();
        assert!(!c.holds);
        assert_relative_eq!(c.lhs, 397.25002609723725, max_relative = 1e-12);
        let p = AdmittanceParams {
            k_min: 1e-9,
            k_max: 500.0,
            c_minus: -1e-6,
            ..Default::default()
        };
        assert!(p.check_sufficient_stability().rhs < 1e-12);
        assert!(!p.check_sufficient_stability().holds);
    }

    #[test]
    fn rate_bound_increases_with_stiffness() {
        let p = AdmittanceParams::default();
        let mut prev = p.stiffness_rate_bound(p.k_min);
        for i in 1..=1000 {
            let k = p.k_min + (p.k_max - p.k_min) * i as f64 / 1000.0;
            let b = p.stiffness_rate_bound(k);
            assert!(b > prev);
            prev = b;
        }
    }

    #[test]
    fn interaction_factor_updates() {
        let p = AdmittanceParams::default();
        let push = Wrench::from_force(Vec3::new(6.0, 0.0, 0.0));
        assert_relative_eq!(p.update_interaction_factor(0.5, &push, 0.01), 0.515, epsilon = 1e-15);
        assert_eq!(p.update_interaction_factor(1.0, &push, 0.01), 1.0);
        assert_eq!(p.update_interaction_factor(0.0, &Wrench::default(), 0.01), 0.0);
        // torque alone does not count as interaction
        let twist = Wrench::new(Vec3::zeros(), Vec3::new(50.0, 0.0, 0.0));
        assert_relative_eq!(p.update_interaction_factor(0.5, &twist, 0.01), 0.498, epsilon = 1e-15);
    }

    #[test]
    fn moving_average_step() {
        let mut f = MovingAverage::new(25);
        let c = Wrench::from_force(Vec3::new(1.5, -2.0, 0.25));
        for _ in 0..40 {
            assert_eq!(f.push(c), c);
        }
        let one = Wrench::from_force(Vec3::new(1.0, 0.0, 0.0));
        // step after a zero history
        let mut f = MovingAverage::new(25);
        for _ in 0..30 {
            f.push(Wrench::default());
        }
        for n in 1..=60 {
            let out = f.push(one).force.x;
            if n < 25 {
                assert!(out < 1.0, "sample {n}: {out}");
            } else {
                assert_eq!(out, 1.0, "sample {n}");
            }
        }
    }

    #[test]
    fn equilibrium_is_held() {
        let mut a = Admittance::new(AdmittanceParams::default()).unwrap();
        let x = Transform::new(Rotation::rot_y(0.4), Vec3::new(0.3, -0.1, 0.2));
        for _ in 0..200 {
            let out = a.step(&x, Some(Wrench::default()), 0.01).unwrap();
            assert_eq!(out.x_cmd, x);
        }
    }

    #[test]
    fn exact_step_matches_rk4() {
        for (k, d) in [(10.0, 2.0), (500.0, 49.0), (100.0, 20.0), (400.0, 2.0 * 1.1 * 20.0)] {
            for dt in [0.01, 0.025, 0.1] {
                let (e, ed) = step_axis(1.0, d, k, 5.0, 0.01, -0.2, dt);
                let (re, red) = rk4(1.0, d, k, 5.0, 0.01, -0.2, dt / 1000.0, 1000);
                assert_relative_eq!(e, re, epsilon = 1e-12);
                assert_relative_eq!(ed, red, epsilon = 1e-10);
            }
        }
        // critically damped
        let k: f64 = 100.0;
        let d = 2.0 * k.sqrt();
        let (e, ed) = step_axis(1.0, d, k, 1.0, 0.0, 0.0, 0.05);
        let (re, red) = rk4(1.0, d, k, 1.0, 0.0, 0.0, 0.05 / 1000.0, 1000);
        assert_relative_eq!(e, re, epsilon = 1e-10);
        assert_relative_eq!(ed, red, epsilon = 1e-9);
    }

    #[test]
    fn constant_force_settles_at_f_over_k() {
        let p = AdmittanceParams::default();
        let mut a = Admittance::with_fixed_stiffness(p, 500.0).unwrap();
        let w = Wrench::from_force(Vec3::new(5.0, 0.0, 0.0));
        let mut e = 0.0;
        for i in 0..200 {
            let out = a.step(&Transform::identity(), (i % 4 == 0).then_some(w), 0.01).unwrap();
            e = out.x_cmd.translation.x;
        }
        assert!((e - 0.01).abs() < 1e-4, "{e}");
    }

    #[test]
    fn non_finite_force_is_rejected() {
        let mut a = Admittance::new(AdmittanceParams::default()).unwrap();
        let w = Wrench::from_force(Vec3::new(20.0, 0.0, 0.0));
        for _ in 0..10 {
            a.step(&Transform::identity(), Some(w), 0.025).unwrap();
        }
        let before = *a.state();
        let out = a
            .step(&Transform::identity(), Some(Wrench::from_force(Vec3::new(f64::NAN, 0.0, 0.0))), 0.025)
            .unwrap();
        assert!(out.telemetry.fault);
        assert_eq!(*a.state(), before);
        assert_eq!(a.faults(), 1);
        assert!(a.step(&Transform::identity(), None, 0.0).is_err());
    }

    #[test]
    fn grasp_drives_stiffness_to_follower() {
        let p = AdmittanceParams::default();
        let mut a = Admittance::new(p).unwrap();
        assert_relative_eq!(a.state().k, 498.0055, epsilon = 1e-3);
        let w = Wrench::from_force(Vec3::new(15.0, 0.0, 0.0));
        for _ in 0..300 {
            a.step(&Transform::identity(), Some(w), 0.01).unwrap();
        }
        assert_eq!(a.state().psi, 1.0);
        assert!((a.state().k - p.k_min) / p.k_min < 0.01);
        assert_eq!(a.violations(), 0);
    }

    #[test]
    fn invalid_params_rejected() {
        let p = AdmittanceParams {
            k_max: 5.0,
            ..Default::default()
        };
        assert!(matches!(Admittance::new(p), Err(AdmittanceError::InvalidParam { field: "k_max", .. })));
        let p = AdmittanceParams {
            c_minus: 0.1,
            ..Default::default()
        };
        assert!(p.validate().is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn state_stays_in_bounds(forces in proptest::collection::vec((-30.0..30.0f64, -30.0..30.0f64), 1..200), dt in 0.001..0.1f64) {
                let p = AdmittanceParams::default();
                let mut a = Admittance::new(p).unwrap();
                for (fx, tz) in forces {
                    a.step(&Transform::identity(), Some(Wrench::new(Vec3::new(fx, 0.0, 0.0), Vec3::new(0.0, 0.0, tz))), dt).unwrap();
                    let s = a.state();
                    prop_assert!((0.0..=1.0).contains(&s.psi));
                    prop_assert!((0.0..=1.0).contains(&s.alpha));
                    prop_assert!(s.k >= p.k_min - 1e-12 && s.k <= p.k_max + 1e-12);
                    prop_assert!((s.d * s.d / (4.0 * p.m * s.k) - p.zeta * p.zeta).abs() < 1e-12);
                }
            }

            #[test]
            fn free_energy_never_grows(e0 in -0.5..0.5f64, v0 in -2.0..2.0f64, k in 10.0..500.0f64, dt in 0.001..0.1f64) {
                let p = AdmittanceParams::default();
                let d = p.damping(k);
                let (mut e, mut v) = (e0, v0);
                let mut energy = 0.5 * v * v + 0.5 * k * e * e;
                for _ in 0..100 {
                    (e, v) = step_axis(p.m, d, k, 0.0, e, v, dt);
                    let next = 0.5 * v * v + 0.5 * k * e * e;
                    prop_assert!(next <= energy + 1e-9);
                    energy = next;
                }
            }

            #[test]
            fn force_step_has_no_overshoot(k in 10.0..500.0f64, f in 0.1..20.0f64, dt in 0.001..0.1f64) {
                let p = AdmittanceParams::default();
                let d = p.damping(k);
                let (mut e, mut v) = (0.0, 0.0);
                for _ in 0..400 {
                    let prev = e;
                    (e, v) = step_axis(p.m, d, k, f, e, v, dt);
                    prop_assert!(e >= prev - 1e-15);
                    prop_assert!(e <= f / k * (1.0 + 1e-12));
                }
            }
        }
    }
}
