use std::collections::BTreeMap;

use serde::Serialize;

use super::trace::{SimTrace, TickRecord, TASK_NAMES};
use crate::geom::Vec3;

/// Interior angle at `elbow` between the shoulder and the wrist.
pub fn elbow_angle(shoulder: &Vec3, elbow: &Vec3, wrist: &Vec3) -> f64 {
    let a = shoulder - elbow;
    let b = wrist - elbow;
    let (na, nb) = (a.norm(), b.norm());
    if na < 1e-12 || nb < 1e-12 {
        return 0.0;
    }
    (a.dot(&b) / (na * nb)).clamp(-1.0, 1.0).acos()
}

/// Run summary. Errors are mean absolute values over ticks that had a goal.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metrics {
    pub ticks: usize,
    pub duration: f64,
    pub ee_position_mae: f64,
    pub ee_orientation_mae: f64,
    pub elbow_angle_mae: f64,
    pub base_position_mae: f64,
    pub base_yaw_mae: f64,
    pub final_ee_position_error: f64,
    pub final_ee_orientation_error: f64,
    pub max_residuals: BTreeMap<String, f64>,
    pub velocity_clamps: usize,
    pub position_clamps: usize,
    pub stability_violations: u64,
    pub admittance_faults: u64,
    pub min_sphere_distance: f64,
    pub collision_threshold: f64,
    pub gap_ticks: usize,
    pub retarget_errors: usize,
}

impl Metrics {
    /// Hard invariants: joints stay inside their limits without the position clamp
    /// engaging, the stability monitor is silent and no sphere pair comes closer than
    /// the collision threshold less 1 mm.
    pub fn invariants_hold(&self) -> bool {
        self.position_clamps == 0
            && self.stability_violations == 0
            && self.admittance_faults == 0
            && self.min_sphere_distance >= self.collision_threshold - 1e-3
    }
}

/// Running sums for [`Metrics`], so long live runs need not keep their trace.
#[derive(Debug, Clone)]
pub struct MetricsBuilder {
    ticks: usize,
    duration: f64,
    sums: [f64; 5],
    counts: [usize; 3],
    last_ee: (f64, f64),
    max_res: BTreeMap<String, f64>,
    velocity_clamps: usize,
    position_clamps: usize,
    min_distance: f64,
    gap_ticks: usize,
    retarget_errors: usize,
}

impl Default for MetricsBuilder {
    fn default() -> Self {
        MetricsBuilder {
            ticks: 0,
            duration: 0.0,
            sums: [0.0; 5],
            counts: [0; 3],
            last_ee: (0.0, 0.0),
            max_res: TASK_NAMES.iter().map(|n| (n.to_string(), 0.0)).collect(),
            velocity_clamps: 0,
            position_clamps: 0,
            min_distance: f64::INFINITY,
            gap_ticks: 0,
            retarget_errors: 0,
        }
    }
}

impl MetricsBuilder {
    pub fn push(&mut self, rec: &TickRecord) {
        self.ticks += 1;
        self.duration = rec.t;
        if let Some((p, o)) = rec.ee_error() {
            self.sums[0] += p;
            self.sums[1] += o;
            self.counts[0] += 1;
            self.last_ee = (p, o);
        }
        if let Some(a) = rec.elbow_angle_ref {
            self.sums[2] += (rec.elbow_angle - a).abs();
            self.counts[1] += 1;
        }
        if let Some((d, y)) = rec.base_error {
            self.sums[3] += d;
            self.sums[4] += y.abs();
            self.counts[2] += 1;
        }
        for (name, v) in &rec.residuals {
            let e = self.max_res.entry(name.to_string()).or_insert(0.0);
            *e = e.max(*v);
        }
        self.velocity_clamps += rec.velocity_clamped as usize;
        self.position_clamps += rec.position_clamped as usize;
        self.min_distance = self.min_distance.min(rec.min_sphere_distance);
        self.gap_ticks += rec.gap as usize;
        self.retarget_errors += rec.retarget_error as usize;
    }

    pub fn finish(&self, stability_violations: u64, admittance_faults: u64, collision_threshold: f64) -> Metrics {
        let mean = |sum: f64, n: usize| if n == 0 { 0.0 } else { sum / n as f64 };
        Metrics {
            ticks: self.ticks,
            duration: self.duration,
            ee_position_mae: mean(self.sums[0], self.counts[0]),
            ee_orientation_mae: mean(self.sums[1], self.counts[0]),
            elbow_angle_mae: mean(self.sums[2], self.counts[1]),
            base_position_mae: mean(self.sums[3], self.counts[2]),
            base_yaw_mae: mean(self.sums[4], self.counts[2]),
            final_ee_position_error: self.last_ee.0,
            final_ee_orientation_error: self.last_ee.1,
            max_residuals: self.max_res.clone(),
            velocity_clamps: self.velocity_clamps,
            position_clamps: self.position_clamps,
            stability_violations,
            admittance_faults,
            min_sphere_distance: self.min_distance,
            collision_threshold,
            gap_ticks: self.gap_ticks,
            retarget_errors: self.retarget_errors,
        }
    }
}

pub fn metrics(trace: &SimTrace) -> Metrics {
    let mut b = MetricsBuilder::default();
    for r in &trace.records {
        b.push(r);
    }
    b.finish(trace.admittance_violations, trace.admittance_faults, trace.collision_threshold)
}
