//! Covariance functions over scalar time inputs.
//!
//! A [`KernelSpec`] is a composition tree of squared-exponential and periodic
//! leaves joined by sums and products. Every hyperparameter is stored as a
//! natural logarithm so that positivity is structural.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Composition tree of stationary kernels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelSpec {
    /// `σ² exp(-(z - z')² / (2 ℓ²))`
    SquaredExponential { log_variance: f64, log_length: f64 },
    /// `σ² exp(-2 sin²(π (z - z') / T) / ℓ²)`
    Periodic {
        log_variance: f64,
        log_length: f64,
        log_period: f64,
    },
    Sum {
        left: Box<KernelSpec>,
        right: Box<KernelSpec>,
    },
    Product {
        left: Box<KernelSpec>,
        right: Box<KernelSpec>,
    },
}

/// Role of a log-hyperparameter, used to pick optimizer bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HyperKind {
    Variance,
    Length,
    Period,
}

impl KernelSpec {
    pub fn squared_exponential(variance: f64, length: f64) -> Self {
        KernelSpec::SquaredExponential {
            log_variance: variance.ln(),
            log_length: length.ln(),
        }
    }

    pub fn periodic(variance: f64, length: f64, period: f64) -> Self {
        KernelSpec::Periodic {
            log_variance: variance.ln(),
            log_length: length.ln(),
            log_period: period.ln(),
        }
    }

    pub fn sum(left: KernelSpec, right: KernelSpec) -> Self {
        KernelSpec::Sum {
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    pub fn product(left: KernelSpec, right: KernelSpec) -> Self {
        KernelSpec::Product {
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    /// Quasi-periodic kernel `SE × Periodic`.
    pub fn quasi_periodic(
        variance: f64,
        decay_length: f64,
        period_length: f64,
        period: f64,
    ) -> Self {
        Self::product(
            Self::squared_exponential(variance, decay_length),
            Self::periodic(1.0, period_length, period),
        )
    }

    /// Number of stored log-hyperparameters.
    pub fn n_params(&self) -> usize {
        match self {
            KernelSpec::SquaredExponential { .. } => 2,
            KernelSpec::Periodic { .. } => 3,
            KernelSpec::Sum { left, right } | KernelSpec::Product { left, right } => {
                left.n_params() + right.n_params()
            }
        }
    }

    /// Log-hyperparameters in depth-first leaf order.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        self.collect_params(&mut out);
        out
    }

    fn collect_params(&self, out: &mut Vec<f64>) {
        match self {
            KernelSpec::SquaredExponential {
                log_variance,
                log_length,
            } => out.extend([*log_variance, *log_length]),
            KernelSpec::Periodic {
                log_variance,
                log_length,
                log_period,
            } => out.extend([*log_variance, *log_length, *log_period]),
            KernelSpec::Sum { left, right } | KernelSpec::Product { left, right } => {
                left.collect_params(out);
                right.collect_params(out);
            }
        }
    }

    /// Kinds of the log-hyperparameters, aligned with [`KernelSpec::params`].
    pub fn param_kinds(&self) -> Vec<HyperKind> {
        let mut out = Vec::with_capacity(self.n_params());
        self.collect_kinds(&mut out);
        out
    }

    fn collect_kinds(&self, out: &mut Vec<HyperKind>) {
        match self {
            KernelSpec::SquaredExponential { .. } => {
                out.extend([HyperKind::Variance, HyperKind::Length])
            }
            KernelSpec::Periodic { .. } => {
                out.extend([HyperKind::Variance, HyperKind::Length, HyperKind::Period])
            }
            KernelSpec::Sum { left, right } | KernelSpec::Product { left, right } => {
                left.collect_kinds(out);
                right.collect_kinds(out);
            }
        }
    }

    /// Copy of the tree with new log-hyperparameters (depth-first leaf order).
    ///
    /// Panics if `params.len() != self.n_params()`.
    pub fn with_params(&self, params: &[f64]) -> Self {
        assert_eq!(
            params.len(),
            self.n_params(),
            "hyperparameter count mismatch"
        );
        let mut it = params.iter().copied();
        self.rebuild(&mut it)
    }

    fn rebuild(&self, it: &mut impl Iterator<Item = f64>) -> Self {
        let mut next = || it.next().expect("length checked by caller");
        match self {
            KernelSpec::SquaredExponential { .. } => KernelSpec::SquaredExponential {
                log_variance: next(),
                log_length: next(),
            },
            KernelSpec::Periodic { .. } => KernelSpec::Periodic {
                log_variance: next(),
                log_length: next(),
                log_period: next(),
            },
            KernelSpec::Sum { left, right } => KernelSpec::Sum {
                left: Box::new(left.rebuild(it)),
                right: Box::new(right.rebuild(it)),
            },
            KernelSpec::Product { left, right } => KernelSpec::Product {
                left: Box::new(left.rebuild(it)),
                right: Box::new(right.rebuild(it)),
            },
        }
    }

    /// True when every stored log-hyperparameter is finite.
    pub fn is_valid(&self) -> bool {
        self.params().iter().all(|p| p.is_finite())
    }

    /// Covariance `k(z, z')`.
    pub fn eval(&self, z: f64, z2: f64) -> f64 {
        match self {
            KernelSpec::SquaredExponential {
                log_variance,
                log_length,
            } => {
                let d = z - z2;
                let l2 = (2.0 * log_length).exp();
                log_variance.exp() * (-0.5 * d * d / l2).exp()
            }
            KernelSpec::Periodic {
                log_variance,
                log_length,
                log_period,
            } => {
                let s = (PI * (z - z2) / log_period.exp()).sin();
                let l2 = (2.0 * log_length).exp();
                log_variance.exp() * (-2.0 * s * s / l2).exp()
            }
            KernelSpec::Sum { left, right } => left.eval(z, z2) + right.eval(z, z2),
            KernelSpec::Product { left, right } => left.eval(z, z2) * right.eval(z, z2),
        }
    }

    /// Prior variance `k(z, z)`; the same for every input since all leaves are stationary.
    pub fn prior_variance(&self) -> f64 {
        self.eval(0.0, 0.0)
    }

    /// `∂k/∂z`, derivative with respect to the first argument.
    pub fn grad_z(&self, z: f64, z2: f64) -> f64 {
        self.eval_with_grad_z(z, z2).1
    }

    fn eval_with_grad_z(&self, z: f64, z2: f64) -> (f64, f64) {
        match self {
            KernelSpec::SquaredExponential { log_length, .. } => {
                let k = self.eval(z, z2);
                let l2 = (2.0 * log_length).exp();
                (k, -k * (z - z2) / l2)
            }
            KernelSpec::Periodic {
                log_length,
                log_period,
                ..
            } => {
                let k = self.eval(z, z2);
                let period = log_period.exp();
                let l2 = (2.0 * log_length).exp();
                let u = PI * (z - z2) / period;
                (k, -k * 2.0 * PI * (2.0 * u).sin() / (l2 * period))
            }
            KernelSpec::Sum { left, right } => {
                let (a, da) = left.eval_with_grad_z(z, z2);
                let (b, db) = right.eval_with_grad_z(z, z2);
                (a + b, da + db)
            }
            KernelSpec::Product { left, right } => {
                let (a, da) = left.eval_with_grad_z(z, z2);
                let (b, db) = right.eval_with_grad_z(z, z2);
                (a * b, da * b + a * db)
            }
        }
    }

    /// `∂k/∂(log θ_j)` for every stored hyperparameter, depth-first leaf order.
    pub fn hyper_grads(&self, z: f64, z2: f64) -> Vec<f64> {
        let mut grads = Vec::with_capacity(self.n_params());
        self.eval_with_hyper_grads(z, z2, &mut grads);
        grads
    }

    /// Evaluates `k(z, z')` and appends its log-hyperparameter gradient to `grads`.
    pub fn eval_with_hyper_grads(&self, z: f64, z2: f64, grads: &mut Vec<f64>) -> f64 {
        match self {
            KernelSpec::SquaredExponential { log_length, .. } => {
                let k = self.eval(z, z2);
                let d = z - z2;
                let l2 = (2.0 * log_length).exp();
                grads.extend([k, k * d * d / l2]);
                k
            }
            KernelSpec::Periodic {
                log_length,
                log_period,
                ..
            } => {
                let k = self.eval(z, z2);
                let l2 = (2.0 * log_length).exp();
                let u = PI * (z - z2) / log_period.exp();
                let s = u.sin();
                grads.extend([k, k * 4.0 * s * s / l2, k * 2.0 * u * (2.0 * u).sin() / l2]);
                k
            }
            KernelSpec::Sum { left, right } => {
                let a = left.eval_with_hyper_grads(z, z2, grads);
                let b = right.eval_with_hyper_grads(z, z2, grads);
                a + b
            }
            KernelSpec::Product { left, right } => {
                let start = grads.len();
                let a = left.eval_with_hyper_grads(z, z2, grads);
                let mid = grads.len();
                let b = right.eval_with_hyper_grads(z, z2, grads);
                for g in &mut grads[start..mid] {
                    *g *= b;
                }
                for g in &mut grads[mid..] {
                    *g *= a;
                }
                a * b
            }
        }
    }
}
