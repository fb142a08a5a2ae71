use std::path::{Path, PathBuf};

use gptrack_core::{SimConfig, N_CHANNELS};
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::io::{io_scale, unit_name};
use crate::report::MetricsReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlotKind {
    /// One-step GP prediction error per channel.
    GpError,
    /// Tool pose against the composed reference.
    Pose,
    /// Position and orientation tracking errors.
    PoseError,
}

impl PlotKind {
    pub const ALL: [PlotKind; 3] = [PlotKind::GpError, PlotKind::Pose, PlotKind::PoseError];

    pub fn file_name(self) -> &'static str {
        match self {
            PlotKind::GpError => "gp_error.svg",
            PlotKind::Pose => "pose.svg",
            PlotKind::PoseError => "pose_error.svg",
        }
    }

    pub fn parse(s: &str) -> Result<Self, CliError> {
        serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|_| {
            CliError::Input(format!(
                "unknown plot `{s}` (expected gp_error, pose or pose_error)"
            ))
        })
    }
}

/// Output file names, relative to the output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub log: String,
    pub metrics: String,
    /// Sensor samples of the run as a tracking CSV.
    pub measurements: String,
    pub plots: Vec<PlotKind>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            log: "log.csv".into(),
            metrics: "metrics.json".into(),
            measurements: "measurements.csv".into(),
            plots: PlotKind::ALL.to_vec(),
        }
    }
}

/// Bounds checked after `simulate`; absent entries are not checked.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Assertions {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_pos_err_mm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_ori_err_deg: Option<f64>,
    /// One-step GP error RMS below the sensor noise σ of every channel.
    pub one_step_rms_below_noise: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub one_step_max_pos_mm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub one_step_max_ori_deg: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_qp_capped_ticks: Option<usize>,
}

impl Assertions {
    /// Violations in human-readable form; empty when all checks pass.
    pub fn check(&self, m: &MetricsReport, noise_std: &[f64; N_CHANNELS]) -> Vec<String> {
        let mut out = Vec::new();
        let mut upper = |name: &str, value: f64, bound: Option<f64>| {
            if let Some(b) = bound {
                if !(value <= b) {
                    out.push(format!("{name} = {value} exceeds {b}"));
                }
            }
        };
        upper("max_pos_err_mm", m.max_pos_err_mm, self.max_pos_err_mm);
        upper("max_ori_err_deg", m.max_ori_err_deg, self.max_ori_err_deg);
        for (c, ch) in m.one_step.iter().enumerate() {
            let bound = if c < 3 {
                self.one_step_max_pos_mm
            } else {
                self.one_step_max_ori_deg
            };
            upper(&format!("one_step.{}.max", ch.channel), ch.max, bound);
        }
        upper(
            "qp_capped_ticks",
            m.qp_capped_ticks as f64,
            self.max_qp_capped_ticks.map(|v| v as f64),
        );
        if self.one_step_rms_below_noise {
            for (c, ch) in m.one_step.iter().enumerate() {
                let sigma = noise_std[c] * io_scale(c);
                if !(ch.rms < sigma) {
                    out.push(format!(
                        "one_step.{}.rms = {} {} is not below σ = {sigma}",
                        ch.channel,
                        ch.rms,
                        unit_name(c)
                    ));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: SimConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub assertions: Assertions,
}

impl ScenarioConfig {
    pub fn from_json(text: &str, origin: &Path) -> Result<Self, CliError> {
        let cfg: Self = serde_json::from_str(text)
            .map_err(|e| CliError::Input(format!("{}: {e}", origin.display())))?;
        cfg.scenario
            .validate()
            .map_err(|e| CliError::Input(format!("{}: {e}", origin.display())))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_json(&text, path)
    }

    /// Replaces every seed in the scenario.
    pub fn apply_seed(&mut self, seed: u64) {
        let s = &mut self.scenario;
        s.sensor.seed = seed;
        s.gp.optimizer.seed = seed;
        s.disturbance_seed = seed;
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }
}
