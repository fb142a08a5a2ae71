use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::reference::PoseSample;
use crate::N_CHANNELS;

/// Quasi-periodic motion of one pose channel:
/// `A (1 + depth · sin(2πt/T_mod)) · sin(2πt/T_b + φ) + drift · t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelMotion {
    /// m or rad
    pub amplitude: f64,
    /// Breathing period T_b, s.
    pub period: f64,
    /// Amplitude-modulation depth in [0, 1).
    pub modulation_depth: f64,
    /// Modulation period, s; must exceed `period`.
    pub modulation_period: f64,
    /// rad
    pub phase: f64,
    /// units/s
    pub drift: f64,
}

impl ChannelMotion {
    pub fn eval(&self, t: f64) -> f64 {
        let envelope = 1.0 + self.modulation_depth * (2.0 * PI * t / self.modulation_period).sin();
        self.amplitude * envelope * (2.0 * PI * t / self.period + self.phase).sin() + self.drift * t
    }

    fn still() -> Self {
        Self {
            amplitude: 0.0,
            period: 4.0,
            modulation_depth: 0.0,
            modulation_period: 30.0,
            phase: 0.0,
            drift: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BreathingConfig {
    /// x, y, z, roll, pitch, yaw
    pub channels: [ChannelMotion; N_CHANNELS],
}

impl Default for BreathingConfig {
    fn default() -> Self {
        let base = ChannelMotion {
            amplitude: 0.0,
            period: 4.0,
            modulation_depth: 0.15,
            modulation_period: 30.0,
            phase: 0.0,
            drift: 0.0,
        };
        let deg = |d: f64| d.to_radians();
        let ch = |amplitude, phase, drift| ChannelMotion {
            amplitude,
            phase,
            drift,
            ..base
        };
        Self {
            channels: [
                ch(1.5e-3, 0.3, 1e-5),
                ch(2.0e-3, 0.9, 0.0),
                ch(8.0e-3, 0.0, 0.0),
                ch(deg(0.5), 0.5, 0.0),
                ch(deg(0.3), 1.2, 0.0),
                ch(deg(0.2), 2.0, 0.0),
            ],
        }
    }
}

impl BreathingConfig {
    /// No motion at all.
    pub fn still() -> Self {
        Self {
            channels: [ChannelMotion::still(); N_CHANNELS],
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        for (c, m) in self.channels.iter().enumerate() {
            let finite = [
                m.amplitude,
                m.period,
                m.modulation_depth,
                m.modulation_period,
                m.phase,
                m.drift,
            ]
            .iter()
            .all(|v| v.is_finite());
            if !finite {
                return Err(format!("breathing channel {c}: non-finite parameter"));
            }
            if m.period <= 0.0 {
                return Err(format!("breathing channel {c}: period must be positive"));
            }
            if m.modulation_period <= m.period {
                return Err(format!(
                    "breathing channel {c}: modulation period must exceed the period"
                ));
            }
            if !(0.0..1.0).contains(&m.modulation_depth) {
                return Err(format!(
                    "breathing channel {c}: modulation depth must be in [0, 1)"
                ));
            }
        }
        Ok(())
    }
}

/// Ground-truth relative pose at time `t`.
pub fn breathing_pose(cfg: &BreathingConfig, t: f64) -> [f64; N_CHANNELS] {
    std::array::from_fn(|c| cfg.channels[c].eval(t))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorConfig {
    pub rate_hz: f64,
    /// Gaussian noise standard deviation per channel (m, rad).
    pub noise_std: [f64; N_CHANNELS],
    /// Probability that a dropout burst starts at a sensor tick.
    pub dropout_probability: f64,
    /// Mean burst length in sensor ticks (geometric distribution, ≥ 1).
    pub dropout_mean_burst: f64,
    /// Additional `[start, end)` intervals (simulation seconds) with no samples.
    pub forced_dropouts: Vec<[f64; 2]>,
    pub seed: u64,
}

impl Default for SensorConfig {
    fn default() -> Self {
        let pos = 0.2e-3;
        let ang = 0.05f64.to_radians();
        Self {
            rate_hz: 25.0,
            noise_std: [pos, pos, pos, ang, ang, ang],
            dropout_probability: 0.002,
            dropout_mean_burst: 5.0,
            forced_dropouts: Vec::new(),
            seed: 7,
        }
    }
}

impl SensorConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.rate_hz > 0.0 && self.rate_hz.is_finite()) {
            return Err("sensor rate must be positive".into());
        }
        if self.noise_std.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
            return Err("sensor noise must be non-negative".into());
        }
        if !(0.0..=1.0).contains(&self.dropout_probability) {
            return Err("dropout probability must be in [0, 1]".into());
        }
        if !(self.dropout_mean_burst >= 1.0 && self.dropout_mean_burst.is_finite()) {
            return Err("mean dropout burst must be at least one tick".into());
        }
        if self.forced_dropouts.iter().any(|[a, b]| !(a < b)) {
            return Err("forced dropout intervals need start < end".into());
        }
        Ok(())
    }
}

/// Noisy tracking sensor with random and scheduled line-of-sight loss.
#[derive(Debug, Clone)]
pub struct Sensor {
    cfg: SensorConfig,
    rng: ChaCha8Rng,
    noise: [Normal<f64>; N_CHANNELS],
    burst_left: u64,
}

impl Sensor {
    pub fn new(cfg: &SensorConfig) -> Self {
        Self {
            cfg: cfg.clone(),
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            noise: std::array::from_fn(|c| {
                Normal::new(0.0, cfg.noise_std[c]).expect("validated std")
            }),
            burst_left: 0,
        }
    }

    fn forced(&self, t: f64) -> bool {
        self.cfg
            .forced_dropouts
            .iter()
            .any(|[a, b]| t >= *a && t < *b)
    }

    /// One sensor tick. Random draws happen in a fixed order on every call so
    /// that the stream depends only on the seed and the call sequence.
    pub fn sense(&mut self, t: f64, truth: &[f64; N_CHANNELS]) -> Option<PoseSample> {
        let noisy: [f64; N_CHANNELS] =
            std::array::from_fn(|c| truth[c] + self.noise[c].sample(&mut self.rng));
        let start_draw: f64 = self.rng.random();
        let random_drop = if self.burst_left > 0 {
            self.burst_left -= 1;
            true
        } else if start_draw < self.cfg.dropout_probability {
            // Geometric burst length on {1, 2, …} with the configured mean.
            let p = 1.0 / self.cfg.dropout_mean_burst;
            let u: f64 = self.rng.random::<f64>().max(f64::MIN_POSITIVE);
            let len = if p >= 1.0 {
                1
            } else {
                1 + (u.ln() / (1.0 - p).ln()).floor() as u64
            };
            self.burst_left = len - 1;
            true
        } else {
            false
        };
        if random_drop || self.forced(t) {
            return None;
        }
        PoseSample::new(t, noisy).ok()
    }
}
