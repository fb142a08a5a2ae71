//! Horizon forecasts of the relative target pose from six uncoupled GPs.
//!
//! Each pose channel (x, y, z, roll, pitch, yaw) owns a sliding window of
//! observations and a fixed set of hyperparameters. A prediction conditions
//! every channel on its current window and evaluates mean, variance and mean
//! derivative on the controller's horizon grid.

use std::collections::{HashMap, VecDeque};

use nalgebra::Vector6;
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;
use thiserror::Error;

use crate::gp::{fit, GpError, KernelSpec, TrainedGp, TrainingSet};
use crate::N_CHANNELS;

/// Default window length (observations per channel).
pub const WINDOW_CAPACITY: usize = 200;

pub const CHANNEL_NAMES: [&str; N_CHANNELS] = ["x", "y", "z", "roll", "pitch", "yaw"];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReferenceError {
    #[error("sample at t = {got} is not after the last stored t = {last}")]
    NonMonotoneTimestamp { last: f64, got: f64 },
    #[error("invalid pose sample: {0}")]
    InvalidSample(String),
    #[error("no observations for channel {channel}")]
    EmptyWindow { channel: usize },
    #[error("invalid horizon grid: {0}")]
    InvalidGrid(String),
    #[error("channel {channel} ({}): {source}", CHANNEL_NAMES[*channel])]
    Channel {
        channel: usize,
        #[source]
        source: GpError,
    },
}

/// One timestamped relative pose observation (m, rad; ZYX Euler).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseSample {
    pub t: f64,
    pub pose: [f64; N_CHANNELS],
}

impl PoseSample {
    pub fn new(t: f64, pose: [f64; N_CHANNELS]) -> Result<Self, ReferenceError> {
        if !t.is_finite() || pose.iter().any(|v| !v.is_finite()) {
            return Err(ReferenceError::InvalidSample("non-finite value".into()));
        }
        if pose[4].abs() >= FRAC_PI_2 - 1e-3 {
            return Err(ReferenceError::InvalidSample(format!(
                "pitch {} too close to the Euler singularity",
                pose[4]
            )));
        }
        Ok(Self { t, pose })
    }
}

/// Bounded FIFO of samples with strictly increasing timestamps.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationWindow {
    capacity: usize,
    samples: VecDeque<PoseSample>,
}

impl Default for ObservationWindow {
    fn default() -> Self {
        Self::new(WINDOW_CAPACITY)
    }
}

impl ObservationWindow {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "window capacity must be positive");
        Self {
            capacity,
            samples: VecDeque::with_capacity(capacity),
        }
    }

    /// Appends a sample, evicting the oldest one at capacity.
    pub fn push(&mut self, sample: PoseSample) -> Result<(), ReferenceError> {
        if let Some(last) = self.samples.back() {
            if sample.t <= last.t {
                return Err(ReferenceError::NonMonotoneTimestamp {
                    last: last.t,
                    got: sample.t,
                });
            }
        }
        if self.samples.len() == self.capacity {
            self.samples.pop_front();
        }
        self.samples.push_back(sample);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn last_time(&self) -> Option<f64> {
        self.samples.back().map(|s| s.t)
    }

    pub fn samples(&self) -> impl Iterator<Item = &PoseSample> {
        self.samples.iter()
    }

    /// Training set of one channel.
    pub fn training_set(
        &self,
        channel: usize,
        noise_variance: f64,
    ) -> Result<TrainingSet, ReferenceError> {
        if self.samples.is_empty() {
            return Err(ReferenceError::EmptyWindow { channel });
        }
        TrainingSet::new(
            self.samples.iter().map(|s| s.t).collect(),
            self.samples.iter().map(|s| s.pose[channel]).collect(),
            noise_variance,
        )
        .map_err(|source| ReferenceError::Channel { channel, source })
    }
}

/// Frozen hyperparameters of one channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelModel {
    pub kernel: KernelSpec,
    pub noise_variance: f64,
}

/// Per-channel variance thresholds that raise the safety flag.
pub fn default_variance_thresholds() -> [f64; N_CHANNELS] {
    let pos = 1e-3f64.powi(2);
    let ang = 0.1f64.to_radians().powi(2);
    [pos, pos, pos, ang, ang, ang]
}

/// Horizon forecast for all six channels.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferencePrediction {
    pub grid: Vec<f64>,
    pub pose_mean: Vec<Vector6<f64>>,
    pub pose_velocity: Vec<Vector6<f64>>,
    pub pose_variance: Vec<Vector6<f64>>,
    /// True where the channel's maximum variance on the grid exceeds its threshold.
    pub safety_flags: [bool; N_CHANNELS],
}

impl ReferencePrediction {
    fn with_capacity(len: usize) -> Self {
        Self {
            grid: Vec::with_capacity(len),
            pose_mean: Vec::with_capacity(len),
            pose_velocity: Vec::with_capacity(len),
            pose_variance: Vec::with_capacity(len),
            safety_flags: [false; N_CHANNELS],
        }
    }

    fn push(&mut self, t: f64, point: &[(f64, f64, f64); N_CHANNELS]) {
        self.grid.push(t);
        self.pose_mean.push(Vector6::from_fn(|c, _| point[c].0));
        self.pose_variance.push(Vector6::from_fn(|c, _| point[c].1));
        self.pose_velocity.push(Vector6::from_fn(|c, _| point[c].2));
    }

    fn set_flags(&mut self, thresholds: &[f64; N_CHANNELS]) {
        for c in 0..N_CHANNELS {
            let vmax = self
                .pose_variance
                .iter()
                .map(|v| v[c])
                .fold(f64::NEG_INFINITY, f64::max);
            self.safety_flags[c] = vmax > thresholds[c];
        }
    }
}

/// `t_now + i·T_s` for `i = 0..=N`.
pub fn horizon_grid(t_now: f64, ts: f64, n: usize) -> Result<Vec<f64>, ReferenceError> {
    if !(ts > 0.0 && ts.is_finite()) {
        return Err(ReferenceError::InvalidGrid(format!(
            "sampling time {ts} must be positive"
        )));
    }
    if n == 0 {
        return Err(ReferenceError::InvalidGrid(
            "horizon must be at least one step".into(),
        ));
    }
    if !t_now.is_finite() {
        return Err(ReferenceError::InvalidGrid("non-finite start time".into()));
    }
    Ok((0..=n).map(|i| t_now + i as f64 * ts).collect())
}

fn fit_channels(
    windows: &[ObservationWindow; N_CHANNELS],
    models: &[ChannelModel; N_CHANNELS],
) -> Result<Vec<TrainedGp>, ReferenceError> {
    (0..N_CHANNELS)
        .map(|c| {
            let data = windows[c].training_set(c, models[c].noise_variance)?;
            fit(&models[c].kernel, &data)
                .map_err(|source| ReferenceError::Channel { channel: c, source })
        })
        .collect()
}

fn predict_on(gps: &[TrainedGp], t: f64) -> Result<[(f64, f64, f64); N_CHANNELS], ReferenceError> {
    let mut out = [(0.0, 0.0, 0.0); N_CHANNELS];
    for (c, gp) in gps.iter().enumerate() {
        out[c] = gp
            .predict_point(t)
            .map_err(|source| ReferenceError::Channel { channel: c, source })?;
    }
    Ok(out)
}

/// Conditions each channel on its window and predicts over the horizon grid.
pub fn predict_reference(
    windows: &[ObservationWindow; N_CHANNELS],
    models: &[ChannelModel; N_CHANNELS],
    t_now: f64,
    ts: f64,
    n: usize,
    thresholds: &[f64; N_CHANNELS],
) -> Result<ReferencePrediction, ReferenceError> {
    let grid = horizon_grid(t_now, ts, n)?;
    let gps = fit_channels(windows, models)?;
    let mut out = ReferencePrediction::with_capacity(grid.len());
    for t in grid {
        out.push(t, &predict_on(&gps, t)?);
    }
    out.set_flags(thresholds);
    Ok(out)
}

/// Prediction while no new samples arrive: the stale windows are reused as-is.
pub fn on_dropout(
    windows: &[ObservationWindow; N_CHANNELS],
    models: &[ChannelModel; N_CHANNELS],
    t_now: f64,
    ts: f64,
    n: usize,
    thresholds: &[f64; N_CHANNELS],
) -> Result<ReferencePrediction, ReferenceError> {
    predict_reference(windows, models, t_now, ts, n, thresholds)
}

/// Stateful predictor for a fixed control lattice `t0 + k·T_s`.
///
/// Channels are refit only when [`ReferenceGenerator::refit`] is called, and
/// posterior values are memoized per lattice index until the next refit. The
/// numbers are identical to [`predict_reference`] on the same grid times.
#[derive(Debug, Clone)]
pub struct ReferenceGenerator {
    models: [ChannelModel; N_CHANNELS],
    thresholds: [f64; N_CHANNELS],
    t0: f64,
    ts: f64,
    gps: Vec<TrainedGp>,
    memo: HashMap<i64, [(f64, f64, f64); N_CHANNELS]>,
    refits: usize,
}

impl ReferenceGenerator {
    pub fn new(
        models: [ChannelModel; N_CHANNELS],
        thresholds: [f64; N_CHANNELS],
        t0: f64,
        ts: f64,
    ) -> Result<Self, ReferenceError> {
        horizon_grid(t0, ts, 1)?;
        Ok(Self {
            models,
            thresholds,
            t0,
            ts,
            gps: Vec::new(),
            memo: HashMap::new(),
            refits: 0,
        })
    }

    pub fn models(&self) -> &[ChannelModel; N_CHANNELS] {
        &self.models
    }

    /// Time of lattice index `k`.
    pub fn lattice_time(&self, k: i64) -> f64 {
        self.t0 + k as f64 * self.ts
    }

    pub fn refits(&self) -> usize {
        self.refits
    }

    pub fn is_fitted(&self) -> bool {
        !self.gps.is_empty()
    }

    /// Conditions every channel on the given windows.
    pub fn refit(
        &mut self,
        windows: &[ObservationWindow; N_CHANNELS],
    ) -> Result<(), ReferenceError> {
        self.gps = fit_channels(windows, &self.models)?;
        self.memo.clear();
        self.refits += 1;
        Ok(())
    }

    fn ensure_fitted(&self) -> Result<(), ReferenceError> {
        if self.gps.is_empty() {
            Err(ReferenceError::EmptyWindow { channel: 0 })
        } else {
            Ok(())
        }
    }

    /// Posterior `(mean, variance, derivative)` per channel at an arbitrary time.
    pub fn evaluate(&self, t: f64) -> Result<[(f64, f64, f64); N_CHANNELS], ReferenceError> {
        self.ensure_fitted()?;
        predict_on(&self.gps, t)
    }

    /// Horizon prediction on lattice indices `k..=k+N`.
    pub fn predict(&mut self, k: i64, n: usize) -> Result<ReferencePrediction, ReferenceError> {
        self.ensure_fitted()?;
        if n == 0 {
            return Err(ReferenceError::InvalidGrid(
                "horizon must be at least one step".into(),
            ));
        }
        let mut out = ReferencePrediction::with_capacity(n + 1);
        for i in 0..=n as i64 {
            let idx = k + i;
            let t = self.lattice_time(idx);
            let point = match self.memo.get(&idx) {
                Some(p) => *p,
                None => {
                    let p = predict_on(&self.gps, t)?;
                    self.memo.insert(idx, p);
                    p
                }
            };
            out.push(t, &point);
        }
        // Lattice points behind the current tick are never requested again.
        self.memo.retain(|idx, _| *idx >= k);
        out.set_flags(&self.thresholds);
        Ok(out)
    }
}
