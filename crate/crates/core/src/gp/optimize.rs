//! Marginal-likelihood hyperparameter fitting.
//!
//! Projected quasi-Newton (BFGS) ascent in log space with an Armijo
//! backtracking line search, restarted from several initial points. The first start is derived
//! from the data (signal variance, difference-based noise estimate and a
//! coarse period scan); the remaining starts are log-uniform draws.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::kernel::{HyperKind, KernelSpec};
use super::regression::{log_marginal_likelihood, log_marginal_likelihood_value, TrainingSet};
use super::GpError;

/// Box bounds on natural-log hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperBounds {
    /// Signal and noise variances.
    pub log_variance: (f64, f64),
    pub log_length: (f64, f64),
    /// Period, seconds.
    pub log_period: (f64, f64),
}

impl Default for HyperBounds {
    fn default() -> Self {
        Self {
            log_variance: (1e-12f64.ln(), 1e6f64.ln()),
            log_length: (1e-6f64.ln(), 1e6f64.ln()),
            log_period: (0.5f64.ln(), 60.0f64.ln()),
        }
    }
}

impl HyperBounds {
    fn for_kind(&self, kind: HyperKind) -> (f64, f64) {
        match kind {
            HyperKind::Variance => self.log_variance,
            HyperKind::Length => self.log_length,
            HyperKind::Period => self.log_period,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizeOptions {
    pub n_starts: usize,
    pub seed: u64,
    pub max_iterations: usize,
    pub max_backtracks: usize,
    pub armijo: f64,
    pub shrink: f64,
    /// Stop when the projected gradient's ∞-norm falls below this.
    pub gradient_tolerance: f64,
    /// Stop when an accepted step improves the objective by less than
    /// `relative_tolerance · (1 + |mll|)`.
    pub relative_tolerance: f64,
    /// When false the noise variance stays at the training set's value.
    pub train_noise: bool,
    pub bounds: HyperBounds,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        Self {
            n_starts: 3,
            seed: 0,
            max_iterations: 500,
            max_backtracks: 40,
            armijo: 1e-4,
            shrink: 0.5,
            gradient_tolerance: 1e-6,
            relative_tolerance: 1e-10,
            train_noise: true,
            bounds: HyperBounds::default(),
        }
    }
}

/// Outcome of [`optimize_hyperparams`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedHyperparameters {
    pub kernel: KernelSpec,
    pub noise_variance: f64,
    pub log_likelihood: f64,
    pub iterations: usize,
    pub starts_succeeded: usize,
}

struct Objective<'a> {
    template: &'a KernelSpec,
    data: &'a TrainingSet,
    train_noise: bool,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl Objective<'_> {
    fn eval(&self, theta: &[f64]) -> Result<(f64, Vec<f64>), GpError> {
        let (kp, noise) = theta.split_at(theta.len() - 1);
        let kernel = self.template.with_params(kp);
        let data = self.data.with_noise_variance(noise[0].exp())?;
        let (v, mut g) = log_marginal_likelihood(&kernel, &data)?;
        if !self.train_noise {
            *g.last_mut().unwrap() = 0.0;
        }
        if !v.is_finite() || g.iter().any(|x| !x.is_finite()) {
            return Err(GpError::NonFinitePrediction { z: f64::NAN });
        }
        Ok((v, g))
    }

    fn value(&self, theta: &[f64]) -> Result<f64, GpError> {
        let (kp, noise) = theta.split_at(theta.len() - 1);
        let kernel = self.template.with_params(kp);
        let data = self.data.with_noise_variance(noise[0].exp())?;
        let v = log_marginal_likelihood_value(&kernel, &data)?;
        if !v.is_finite() {
            return Err(GpError::NonFinitePrediction { z: f64::NAN });
        }
        Ok(v)
    }

    fn project(&self, theta: &mut [f64]) {
        for ((t, lo), hi) in theta.iter_mut().zip(&self.lower).zip(&self.upper) {
            *t = t.clamp(*lo, *hi);
        }
    }

    /// ∞-norm of the gradient with components pointing out of the box removed.
    fn projected_grad_norm(&self, theta: &[f64], grad: &[f64]) -> f64 {
        theta
            .iter()
            .zip(grad)
            .zip(self.lower.iter().zip(&self.upper))
            .map(|((t, g), (lo, hi))| {
                if (*t <= *lo && *g < 0.0) || (*t >= *hi && *g > 0.0) {
                    0.0
                } else {
                    g.abs()
                }
            })
            .fold(0.0, f64::max)
    }
}

struct Ascent {
    theta: Vec<f64>,
    value: f64,
    iterations: usize,
}

/// Projected BFGS ascent. Coordinates sitting on a bound with the gradient
/// pointing outward are frozen for the step; the inverse-Hessian model acts
/// on the remaining ones.
fn ascend(obj: &Objective, mut theta: Vec<f64>, opts: &OptimizeOptions) -> Result<Ascent, GpError> {
    obj.project(&mut theta);
    let dim = theta.len();
    let (mut value, mut grad) = obj.eval(&theta)?;
    // Inverse of the negated Hessian; None until the first curvature pair.
    let mut h: Option<DMatrix<f64>> = None;
    let mut iterations = 0;
    while iterations < opts.max_iterations {
        if obj.projected_grad_norm(&theta, &grad) < opts.gradient_tolerance {
            break;
        }
        iterations += 1;
        let free: Vec<bool> = (0..dim)
            .map(|i| {
                !((theta[i] <= obj.lower[i] && grad[i] < 0.0)
                    || (theta[i] >= obj.upper[i] && grad[i] > 0.0))
            })
            .collect();
        let g_free = DVector::from_fn(dim, |i, _| if free[i] { grad[i] } else { 0.0 });
        let gmax = g_free.amax();
        let mut dir = match &h {
            Some(h) => {
                let mut d = h * &g_free;
                for i in 0..dim {
                    if !free[i] {
                        d[i] = 0.0;
                    }
                }
                d
            }
            None => &g_free / gmax,
        };
        if dir.dot(&g_free) <= 0.0 {
            h = None;
            dir = &g_free / gmax;
        }

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..=opts.max_backtracks {
            let mut cand: Vec<f64> = theta
                .iter()
                .zip(dir.iter())
                .map(|(t, d)| t + step * d)
                .collect();
            obj.project(&mut cand);
            let ascent: f64 = cand
                .iter()
                .zip(&theta)
                .zip(&grad)
                .map(|((c, t), g)| (c - t) * g)
                .sum();
            if ascent <= 0.0 {
                break;
            }
            if let Ok(v) = obj.value(&cand) {
                if v >= value + opts.armijo * ascent {
                    accepted = Some(cand);
                    break;
                }
            }
            step *= opts.shrink;
        }
        let Some(cand) = accepted else {
            if h.is_some() {
                // Retry from a plain gradient step before giving up.
                h = None;
                continue;
            }
            break;
        };
        let Ok((v, g)) = obj.eval(&cand) else { break };

        let s_vec = DVector::from_fn(dim, |i, _| cand[i] - theta[i]);
        let y_vec = DVector::from_fn(dim, |i, _| grad[i] - g[i]);
        let sy = s_vec.dot(&y_vec);
        if sy > 1e-12 * s_vec.norm() * y_vec.norm() && sy > 0.0 {
            let hm = h
                .take()
                .unwrap_or_else(|| DMatrix::identity(dim, dim) * (sy / y_vec.norm_squared()));
            let rho = 1.0 / sy;
            let hy = &hm * &y_vec;
            let yhy = y_vec.dot(&hy);
            // H⁺ = H − ρ(H y sᵀ + s yᵀ H) + (ρ² yᵀHy + ρ) s sᵀ
            let mut next = hm;
            next.ger(-rho, &hy, &s_vec, 1.0);
            next.ger(-rho, &s_vec, &hy, 1.0);
            next.ger(rho * rho * yhy + rho, &s_vec, &s_vec, 1.0);
            h = Some(next);
        }

        let improvement = v - value;
        theta = cand;
        grad = g;
        value = v;
        if improvement < opts.relative_tolerance * (1.0 + value.abs()) {
            break;
        }
    }
    Ok(Ascent {
        theta,
        value,
        iterations,
    })
}

fn sample_variance(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n
}

/// Data-derived starting values for a template tree. Multiplicative siblings
/// share the signal variance; additive siblings split it 90/10.
fn heuristic_leaves(spec: &KernelSpec, signal_var: f64, span: f64, drift: bool) -> KernelSpec {
    match spec {
        KernelSpec::SquaredExponential { .. } => {
            KernelSpec::squared_exponential(signal_var, if drift { span } else { 0.5 * span })
        }
        KernelSpec::Periodic { log_period, .. } => KernelSpec::Periodic {
            log_variance: signal_var.ln(),
            log_length: 0.0,
            log_period: *log_period,
        },
        KernelSpec::Product { left, right } => KernelSpec::product(
            heuristic_leaves(left, signal_var, span, drift),
            heuristic_leaves(right, 1.0, span, drift),
        ),
        KernelSpec::Sum { left, right } => KernelSpec::sum(
            heuristic_leaves(left, 0.9 * signal_var, span, drift),
            heuristic_leaves(right, 0.1 * signal_var, span, true),
        ),
    }
}

fn heuristic_start(obj: &Objective, opts: &OptimizeOptions) -> Vec<f64> {
    let data = obj.data;
    let z = data.inputs();
    let span = (z[z.len() - 1] - z[0]).max(1e-3);
    let signal_var = sample_variance(data.targets()).max(1e-12);
    let kernel = heuristic_leaves(obj.template, signal_var, span, false);
    let noise = if opts.train_noise {
        let d: Vec<f64> = data.targets().windows(2).map(|w| w[1] - w[0]).collect();
        let nv = if d.is_empty() {
            0.0
        } else {
            0.5 * d.iter().map(|v| v * v).sum::<f64>() / d.len() as f64
        };
        nv.clamp(1e-6 * signal_var, 0.5 * signal_var)
    } else {
        data.noise_variance().max(1e-300)
    };
    let mut theta = kernel.params();
    theta.push(noise.ln());

    // Coarse scan over each period parameter, other values held fixed.
    let kinds = obj.template.param_kinds();
    let (plo, phi) = opts.bounds.log_period;
    let dt_min = z
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min);
    let scan_lo = plo.max((4.0 * dt_min).ln());
    // A period needs at least two cycles inside the window to be identifiable.
    let scan_hi = phi.min((0.5 * span).ln()).max(scan_lo);
    for (idx, kind) in kinds.iter().enumerate() {
        if *kind != HyperKind::Period {
            continue;
        }
        let mut best = (f64::NEG_INFINITY, theta[idx]);
        let steps = 48;
        for s in 0..=steps {
            let mut cand = theta.clone();
            cand[idx] = scan_lo + (scan_hi - scan_lo) * s as f64 / steps as f64;
            if let Ok(v) = obj.value(&cand) {
                if v > best.0 {
                    best = (v, cand[idx]);
                }
            }
        }
        theta[idx] = best.1;
    }
    theta
}

fn random_start(obj: &Objective, opts: &OptimizeOptions, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let data = obj.data;
    let z = data.inputs();
    let span = (z[z.len() - 1] - z[0]).max(1e-3);
    let signal_var = sample_variance(data.targets()).max(1e-12);
    let mut theta: Vec<f64> = obj
        .template
        .param_kinds()
        .into_iter()
        .map(|kind| match kind {
            HyperKind::Variance => signal_var.ln() + rng.random_range(-2.3..2.3),
            HyperKind::Length => span.ln() + rng.random_range(-3.0..0.7),
            HyperKind::Period => {
                let (lo, hi) = opts.bounds.log_period;
                let hi = hi.min((0.5 * span).ln()).max(lo + 1e-9);
                rng.random_range(lo..hi)
            }
        })
        .collect();
    theta.push(if opts.train_noise {
        signal_var.ln() + rng.random_range(-9.2..-0.7)
    } else {
        data.noise_variance().max(1e-300).ln()
    });
    theta
}

/// Maximizes the log marginal likelihood over the template's hyperparameters
/// (and the noise variance unless frozen). Deterministic for a fixed seed.
pub fn optimize_hyperparams(
    template: &KernelSpec,
    data: &TrainingSet,
    opts: &OptimizeOptions,
) -> Result<FittedHyperparameters, GpError> {
    if opts.n_starts == 0 {
        return Err(GpError::InvalidOptions(
            "n_starts must be at least 1".into(),
        ));
    }
    let kinds = template.param_kinds();
    let mut lower: Vec<f64> = kinds.iter().map(|k| opts.bounds.for_kind(*k).0).collect();
    let mut upper: Vec<f64> = kinds.iter().map(|k| opts.bounds.for_kind(*k).1).collect();
    if opts.train_noise {
        lower.push(opts.bounds.log_variance.0);
        upper.push(opts.bounds.log_variance.1);
    } else {
        let fixed = data.noise_variance().max(1e-300).ln();
        lower.push(fixed);
        upper.push(fixed);
    }
    let obj = Objective {
        template,
        data,
        train_noise: opts.train_noise,
        lower,
        upper,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut best: Option<Ascent> = None;
    let mut succeeded = 0;
    let mut last_err = None;
    for start in 0..opts.n_starts {
        let theta0 = if start == 0 {
            heuristic_start(&obj, opts)
        } else {
            random_start(&obj, opts, &mut rng)
        };
        match ascend(&obj, theta0, opts) {
            Ok(run) => {
                succeeded += 1;
                if best.as_ref().is_none_or(|b| run.value > b.value) {
                    best = Some(run);
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    let Some(best) = best else {
        return Err(GpError::AllStartsFailed {
            starts: opts.n_starts,
            last: last_err.map(|e| e.to_string()).unwrap_or_default(),
        });
    };
    let (kp, noise) = best.theta.split_at(best.theta.len() - 1);
    Ok(FittedHyperparameters {
        kernel: template.with_params(kp),
        noise_variance: if opts.train_noise {
            noise[0].exp()
        } else {
            data.noise_variance()
        },
        log_likelihood: best.value,
        iterations: best.iterations,
        starts_succeeded: succeeded,
    })
}
