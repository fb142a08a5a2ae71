use serde::{Deserialize, Serialize};

use super::{LogRow, SimError};
use crate::{wrap_angle, N_CHANNELS};

/// Error statistics of one pose channel (m or rad).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ChannelErrorStats {
    pub count: usize,
    pub rms: f64,
    pub max: f64,
}

/// Closed-loop summary. Lengths in m, angles in rad.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub ticks: usize,
    pub max_position_error: f64,
    pub rms_position_error: f64,
    pub max_orientation_error: f64,
    pub rms_orientation_error: f64,
    /// One-step-ahead forecast error against the noiseless truth.
    pub one_step: [ChannelErrorStats; N_CHANNELS],
    pub sensor_ticks: usize,
    pub dropout_count: usize,
    pub mean_qp_iterations: f64,
    pub max_qp_iterations: usize,
    pub qp_capped_ticks: usize,
    /// Ticks with at least one raised safety flag.
    pub safety_flag_ticks: usize,
}

/// Euclidean tip position error and largest wrapped Euler-angle deviation.
pub fn tracking_errors(tool: &[f64; N_CHANNELS], reference: &[f64; N_CHANNELS]) -> (f64, f64) {
    let pos = (0..3)
        .map(|i| (tool[i] - reference[i]).powi(2))
        .sum::<f64>()
        .sqrt();
    let ori = (3..6)
        .map(|i| wrap_angle(tool[i] - reference[i]).abs())
        .fold(0.0, f64::max);
    (pos, ori)
}

struct Accumulator {
    count: usize,
    sum_sq: f64,
    max: f64,
}

impl Accumulator {
    fn new() -> Self {
        Self {
            count: 0,
            sum_sq: 0.0,
            max: 0.0,
        }
    }

    fn add(&mut self, e: f64) {
        self.count += 1;
        self.sum_sq += e * e;
        self.max = self.max.max(e.abs());
    }

    fn stats(&self) -> ChannelErrorStats {
        ChannelErrorStats {
            count: self.count,
            rms: if self.count == 0 {
                0.0
            } else {
                (self.sum_sq / self.count as f64).sqrt()
            },
            max: self.max,
        }
    }
}

pub fn compute_metrics(rows: &[LogRow]) -> Result<Metrics, SimError> {
    if rows.is_empty() {
        return Err(SimError::EmptyLog);
    }
    let mut pos = Accumulator::new();
    let mut ori = Accumulator::new();
    let mut one_step: [Accumulator; N_CHANNELS] = std::array::from_fn(|_| Accumulator::new());
    let (mut sensor_ticks, mut dropouts, mut iter_sum, mut iter_max, mut capped, mut flagged) =
        (0, 0, 0, 0, 0, 0);
    for row in rows {
        let (p, o) = tracking_errors(&row.tool, &row.reference);
        pos.add(p);
        ori.add(o);
        if let Some(pred) = row.one_step {
            for c in 0..N_CHANNELS {
                let mut e = pred[c] - row.truth[c];
                if c >= 3 {
                    e = wrap_angle(e);
                }
                one_step[c].add(e);
            }
        }
        if row.sensor_tick {
            sensor_ticks += 1;
            if row.measurement.is_none() {
                dropouts += 1;
            }
        }
        iter_sum += row.qp_iterations;
        iter_max = iter_max.max(row.qp_iterations);
        capped += row.qp_capped as usize;
        flagged += row.safety_flags.iter().any(|f| *f) as usize;
    }
    let pos = pos.stats();
    let ori = ori.stats();
    Ok(Metrics {
        ticks: rows.len(),
        max_position_error: pos.max,
        rms_position_error: pos.rms,
        max_orientation_error: ori.max,
        rms_orientation_error: ori.rms,
        one_step: one_step.map(|a| a.stats()),
        sensor_ticks,
        dropout_count: dropouts,
        mean_qp_iterations: iter_sum as f64 / rows.len() as f64,
        max_qp_iterations: iter_max,
        qp_capped_ticks: capped,
        safety_flag_ticks: flagged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn row(tool: [f64; 6], reference: [f64; 6]) -> LogRow {
        LogRow {
            t: 0.0,
            truth: [0.0; 6],
            sensor_tick: false,
            measurement: None,
            one_step: None,
            gp_mean: [0.0; 6],
            gp_variance: [0.0; 6],
            safety_flags: [false; 6],
            reference,
            tool,
            q_ref: [0.0; 7],
            qd_ref: [0.0; 7],
            q: [0.0; 7],
            qd: [0.0; 7],
            u: [0.0; 7],
            qp_iterations: 0,
            qp_primal_residual: 0.0,
            qp_dual_residual: 0.0,
            qp_capped: false,
            clik_error: 0.0,
        }
    }

    #[test]
    fn empty_log_is_an_error() {
        assert_eq!(compute_metrics(&[]), Err(SimError::EmptyLog));
    }

    #[test]
    fn exact_tracking_has_zero_error() {
        let p = [0.4, 0.1, 0.3, 3.0, 0.2, -1.0];
        let m = compute_metrics(&vec![row(p, p); 50]).unwrap();
        assert_eq!(m.max_position_error, 0.0);
        assert_eq!(m.rms_position_error, 0.0);
        assert_eq!(m.max_orientation_error, 0.0);
        assert_eq!(m.rms_orientation_error, 0.0);
    }

    #[test]
    fn constant_z_offset() {
        let r = [0.4, 0.1, 0.3, 0.0, 0.0, 0.0];
        let mut t = r;
        t[2] += 1e-3;
        let m = compute_metrics(&vec![row(t, r); 20]).unwrap();
        assert!((m.max_position_error - 1e-3).abs() < 1e-15);
        assert!((m.rms_position_error - 1e-3).abs() < 1e-15);
    }

    #[test]
    fn orientation_error_wraps() {
        let r = [0.0, 0.0, 0.0, std::f64::consts::PI - 1e-4, 0.0, 0.0];
        let mut t = r;
        t[3] = -std::f64::consts::PI + 1e-4;
        let (_, o) = tracking_errors(&t, &r);
        assert!((o - 2e-4).abs() < 1e-12);
    }

    #[test]
    fn dropouts_count_missing_sensor_ticks() {
        let p = [0.0; 6];
        let mut rows = vec![row(p, p); 4];
        rows[1].sensor_tick = true;
        rows[2].sensor_tick = true;
        rows[2].measurement = Some(p);
        let m = compute_metrics(&rows).unwrap();
        assert_eq!((m.sensor_ticks, m.dropout_count), (2, 1));
    }
}
