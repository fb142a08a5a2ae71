//! Metrics in I/O units and the metrics JSON file.

use std::path::Path;

use gptrack_core::reference::CHANNEL_NAMES;
use gptrack_core::Metrics;
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::io::{io_scale, unit_name};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelReport {
    pub channel: String,
    pub unit: String,
    pub count: usize,
    pub rms: f64,
    pub max: f64,
}

/// [`Metrics`] with lengths in mm and angles in degrees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsReport {
    pub ticks: usize,
    pub max_pos_err_mm: f64,
    pub rms_pos_err_mm: f64,
    pub max_ori_err_deg: f64,
    pub rms_ori_err_deg: f64,
    pub one_step: Vec<ChannelReport>,
    pub sensor_ticks: usize,
    pub dropout_count: usize,
    pub mean_qp_iterations: f64,
    pub max_qp_iterations: usize,
    pub qp_capped_ticks: usize,
    pub safety_flag_ticks: usize,
}

impl From<&Metrics> for MetricsReport {
    fn from(m: &Metrics) -> Self {
        let deg = io_scale(3);
        Self {
            ticks: m.ticks,
            max_pos_err_mm: m.max_position_error * 1e3,
            rms_pos_err_mm: m.rms_position_error * 1e3,
            max_ori_err_deg: m.max_orientation_error * deg,
            rms_ori_err_deg: m.rms_orientation_error * deg,
            one_step: m
                .one_step
                .iter()
                .enumerate()
                .map(|(c, s)| ChannelReport {
                    channel: CHANNEL_NAMES[c].to_string(),
                    unit: unit_name(c).to_string(),
                    count: s.count,
                    rms: s.rms * io_scale(c),
                    max: s.max * io_scale(c),
                })
                .collect(),
            sensor_ticks: m.sensor_ticks,
            dropout_count: m.dropout_count,
            mean_qp_iterations: m.mean_qp_iterations,
            max_qp_iterations: m.max_qp_iterations,
            qp_capped_ticks: m.qp_capped_ticks,
            safety_flag_ticks: m.safety_flag_ticks,
        }
    }
}

impl MetricsReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("metrics serialize");
        s.push('\n');
        s
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        std::fs::write(path, self.to_json()).map_err(|e| CliError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
    }

    /// Differences beyond `tol` (absolute, on floats) and any count mismatch.
    pub fn differences(&self, other: &Self, tol: f64) -> Vec<String> {
        let mut out = Vec::new();
        let mut float = |name: String, a: f64, b: f64| {
            if !((a - b).abs() <= tol) {
                out.push(format!("{name}: {a} vs {b}"));
            }
        };
        float(
            "max_pos_err_mm".into(),
            self.max_pos_err_mm,
            other.max_pos_err_mm,
        );
        float(
            "rms_pos_err_mm".into(),
            self.rms_pos_err_mm,
            other.rms_pos_err_mm,
        );
        float(
            "max_ori_err_deg".into(),
            self.max_ori_err_deg,
            other.max_ori_err_deg,
        );
        float(
            "rms_ori_err_deg".into(),
            self.rms_ori_err_deg,
            other.rms_ori_err_deg,
        );
        float(
            "mean_qp_iterations".into(),
            self.mean_qp_iterations,
            other.mean_qp_iterations,
        );
        for (a, b) in self.one_step.iter().zip(&other.one_step) {
            float(format!("one_step.{}.rms", a.channel), a.rms, b.rms);
            float(format!("one_step.{}.max", a.channel), a.max, b.max);
        }
        let counts = |m: &Self| {
            let mut v = vec![
                m.ticks,
                m.sensor_ticks,
                m.dropout_count,
                m.max_qp_iterations,
                m.qp_capped_ticks,
                m.safety_flag_ticks,
                m.one_step.len(),
            ];
            v.extend(m.one_step.iter().map(|c| c.count));
            v
        };
        if counts(self) != counts(other) {
            out.push("counts differ".into());
        }
        out
    }
}
