//! Hyperparameter file: fitted per-channel GP models with provenance.

use std::path::Path;

use gptrack_core::gp::FittedHyperparameters;
use gptrack_core::reference::CHANNEL_NAMES;
use gptrack_core::{ChannelModel, KernelSpec, ObservationWindow, N_CHANNELS};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

/// One channel's fit. Hyperparameters are natural logs in m, rad and s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelHyper {
    pub channel: String,
    /// Kernel tree without values, e.g. `product(squared_exponential, periodic)`.
    pub composition: String,
    /// Kernel tree carrying the fitted log-hyperparameters.
    pub kernel: KernelSpec,
    pub noise_variance: f64,
    pub log_marginal_likelihood: f64,
    pub samples: usize,
    /// SHA-256 over the little-endian `(t, value)` pairs of the training window.
    pub window_digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperparameterFile {
    pub seed: u64,
    pub window: usize,
    pub channels: Vec<ChannelHyper>,
}

pub fn composition(k: &KernelSpec) -> String {
    match k {
        KernelSpec::SquaredExponential { .. } => "squared_exponential".into(),
        KernelSpec::Periodic { .. } => "periodic".into(),
        KernelSpec::Sum { left, right } => {
            format!("sum({}, {})", composition(left), composition(right))
        }
        KernelSpec::Product { left, right } => {
            format!("product({}, {})", composition(left), composition(right))
        }
    }
}

pub fn window_digest(window: &ObservationWindow, channel: usize) -> String {
    let mut h = Sha256::new();
    for s in window.samples() {
        h.update(s.t.to_le_bytes());
        h.update(s.pose[channel].to_le_bytes());
    }
    hex::encode(h.finalize())
}

impl ChannelHyper {
    pub fn new(channel: usize, fitted: &FittedHyperparameters, window: &ObservationWindow) -> Self {
        Self {
            channel: CHANNEL_NAMES[channel].to_string(),
            composition: composition(&fitted.kernel),
            kernel: fitted.kernel.clone(),
            noise_variance: fitted.noise_variance,
            log_marginal_likelihood: fitted.log_likelihood,
            samples: window.len(),
            window_digest: window_digest(window, channel),
        }
    }
}

impl HyperparameterFile {
    pub fn validate(&self) -> Result<(), String> {
        if self.channels.len() != N_CHANNELS {
            return Err(format!(
                "expected {N_CHANNELS} channels, found {}",
                self.channels.len()
            ));
        }
        for (c, ch) in self.channels.iter().enumerate() {
            if ch.channel != CHANNEL_NAMES[c] {
                return Err(format!(
                    "channel {c} is `{}`, expected `{}`",
                    ch.channel, CHANNEL_NAMES[c]
                ));
            }
            if !ch.kernel.is_valid() {
                return Err(format!(
                    "channel {}: non-finite kernel hyperparameters",
                    ch.channel
                ));
            }
            if !(ch.noise_variance > 0.0 && ch.noise_variance.is_finite()) {
                return Err(format!(
                    "channel {}: noise variance must be positive",
                    ch.channel
                ));
            }
            if !ch.log_marginal_likelihood.is_finite() {
                return Err(format!("channel {}: non-finite likelihood", ch.channel));
            }
            if ch.composition != composition(&ch.kernel) {
                return Err(format!(
                    "channel {}: composition `{}` does not match the kernel",
                    ch.channel, ch.composition
                ));
            }
        }
        Ok(())
    }

    pub fn models(&self) -> [ChannelModel; N_CHANNELS] {
        std::array::from_fn(|c| ChannelModel {
            kernel: self.channels[c].kernel.clone(),
            noise_variance: self.channels[c].noise_variance,
        })
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("hyperparameters serialize");
        s.push('\n');
        s
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let file: Self = serde_json::from_str(&text)
            .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        file.validate()
            .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        Ok(file)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use gptrack_core::PoseSample;

    #[test]
    fn composition_names_the_tree() {
        let k = KernelSpec::quasi_periodic(1.0, 2.0, 1.0, 4.0);
        assert_eq!(composition(&k), "product(squared_exponential, periodic)");
    }

    #[test]
    fn digest_depends_on_channel_values_only() {
        let mut a = ObservationWindow::new(10);
        let mut b = ObservationWindow::new(10);
        for i in 0..5 {
            let t = i as f64 * 0.04;
            a.push(PoseSample::new(t, [t, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap())
                .unwrap();
            b.push(PoseSample::new(t, [t, 1.0, 0.0, 0.0, 0.0, 0.0]).unwrap())
                .unwrap();
        }
        assert_eq!(window_digest(&a, 0), window_digest(&b, 0));
        assert_ne!(window_digest(&a, 1), window_digest(&b, 1));
        assert_eq!(window_digest(&a, 0).len(), 64);
    }
}
