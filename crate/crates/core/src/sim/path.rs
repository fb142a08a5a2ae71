use nalgebra::{Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::kinematics::{
    clik_step, forward_kinematics, pose_error, DhTable, IkConfig, JointVector, PoseEuler,
};

use super::SimError;

/// Straight-line needle feed along the tool z-axis, ending at the goal pose.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InsertionConfig {
    /// Feed distance, m. Zero holds the goal pose.
    pub feed_length: f64,
    /// Cruise speed, m/s.
    pub feed_speed: f64,
    /// Acceleration and deceleration time of the trapezoidal profile, s.
    pub ramp_time: f64,
    /// Simulation time at which the feed starts, s.
    pub start_time: f64,
}

impl Default for InsertionConfig {
    fn default() -> Self {
        Self {
            feed_length: 0.10,
            feed_speed: 0.01,
            ramp_time: 0.5,
            start_time: 25.0,
        }
    }
}

impl InsertionConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.feed_length >= 0.0 && self.feed_length.is_finite()) {
            return Err("feed length must be non-negative".into());
        }
        if self.feed_length > 0.0 {
            if !(self.feed_speed > 0.0 && self.feed_speed.is_finite()) {
                return Err("feed speed must be positive".into());
            }
            if !(self.ramp_time > 0.0) {
                return Err("ramp time must be positive".into());
            }
            if self.feed_length / self.feed_speed < self.ramp_time {
                return Err("feed too short for the ramp time at this speed".into());
            }
        }
        if !self.start_time.is_finite() {
            return Err("feed start time must be finite".into());
        }
        Ok(())
    }

    /// Feed duration, s.
    pub fn duration(&self) -> f64 {
        if self.feed_length == 0.0 {
            0.0
        } else {
            self.feed_length / self.feed_speed + self.ramp_time
        }
    }

    /// Distance and speed along the feed axis `t` seconds after the start.
    pub fn profile(&self, t: f64) -> (f64, f64) {
        if self.feed_length == 0.0 || t <= 0.0 {
            return (0.0, 0.0);
        }
        let total = self.duration();
        if t >= total {
            return (self.feed_length, 0.0);
        }
        let v = self.feed_speed;
        let ta = self.ramp_time;
        let acc = v / ta;
        if t < ta {
            (0.5 * acc * t * t, acc * t)
        } else if t <= total - ta {
            (0.5 * v * ta + v * (t - ta), v)
        } else {
            let rem = total - t;
            (self.feed_length - 0.5 * acc * rem * rem, acc * rem)
        }
    }
}

/// Nominal Cartesian and joint path sampled on the control period.
#[derive(Debug, Clone, PartialEq)]
pub struct PlannedPath {
    /// Simulation time of sample 0.
    pub t_start: f64,
    pub ts: f64,
    pub pose: Vec<Vector6<f64>>,
    pub velocity: Vec<Vector6<f64>>,
    pub q: Vec<JointVector>,
    /// Forward differences of `q`; zero on the last sample.
    pub qdot: Vec<JointVector>,
}

impl PlannedPath {
    fn index(&self, t: f64) -> usize {
        let k = ((t - self.t_start) / self.ts).round();
        if k <= 0.0 {
            0
        } else {
            (k as usize).min(self.pose.len() - 1)
        }
    }

    /// Samples at `t`, held constant before the start and after the end.
    pub fn at(&self, t: f64) -> (Vector6<f64>, Vector6<f64>, JointVector) {
        let k = self.index(t);
        let before_or_after = t < self.t_start - 0.5 * self.ts || k + 1 == self.pose.len();
        if before_or_after {
            (self.pose[k], Vector6::zeros(), JointVector::zeros())
        } else {
            (self.pose[k], self.velocity[k], self.qdot[k])
        }
    }

    pub fn joint_at(&self, t: f64) -> JointVector {
        self.q[self.index(t)]
    }
}

/// Tolerance on the pose error of every joint waypoint.
pub const WAYPOINT_TOLERANCE: f64 = 1e-10;

/// Drives `q` onto `target` with full-step CLIK iterations.
pub fn solve_ik(
    dh: &DhTable,
    target: &Vector6<f64>,
    seed: &JointVector,
    ik: &IkConfig,
    max_iterations: usize,
) -> Result<JointVector, SimError> {
    let newton = IkConfig {
        gain: [1.0 / ik.dt; 6],
        ..*ik
    };
    let mut q = *seed;
    let zero = Vector6::zeros();
    for _ in 0..max_iterations {
        let step = clik_step(dh, &q, &JointVector::zeros(), target, &zero, &newton)?;
        if step.error.amax() < WAYPOINT_TOLERANCE {
            return Ok(q);
        }
        q = step.q_next;
    }
    let pose = forward_kinematics(dh, &q)?;
    Err(SimError::PathUnreachable {
        residual: pose_error(target, &pose.to_vector()).amax(),
    })
}

/// Samples the insertion from `t_start` until the feed has stopped and maps
/// every waypoint to joint space.
pub fn plan_insertion_path(
    dh: &DhTable,
    goal: &PoseEuler,
    insertion: &InsertionConfig,
    ik_seed: &JointVector,
    ik: &IkConfig,
    t_start: f64,
    ts: f64,
) -> Result<PlannedPath, SimError> {
    let axis: Vector3<f64> = goal.rotation().column(2).into_owned();
    let goal_v = goal.to_vector();
    let end = insertion.start_time + insertion.duration();
    let samples = (((end - t_start) / ts).ceil().max(0.0) as usize) + 1;

    let mut pose = Vec::with_capacity(samples);
    let mut velocity = Vec::with_capacity(samples);
    for k in 0..samples {
        let t = t_start + k as f64 * ts;
        let (s, sdot) = insertion.profile(t - insertion.start_time);
        let offset = insertion.feed_length - s;
        let mut p = goal_v;
        let mut v = Vector6::zeros();
        for i in 0..3 {
            p[i] -= offset * axis[i];
            v[i] = sdot * axis[i];
        }
        pose.push(p);
        velocity.push(v);
    }

    let mut q = Vec::with_capacity(samples);
    let mut current = solve_ik(dh, &pose[0], ik_seed, ik, 2000)?;
    q.push(current);
    for k in 1..samples {
        current = solve_ik(dh, &pose[k], &current, ik, 50)?;
        q.push(current);
    }
    let mut qdot: Vec<JointVector> = q.windows(2).map(|w| (w[1] - w[0]) / ts).collect();
    qdot.push(JointVector::zeros());

    Ok(PlannedPath {
        t_start,
        ts,
        pose,
        velocity,
        q,
        qdot,
    })
}
