use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use super::kernel::KernelSpec;
use super::GpError;

/// Multiples of the mean Gram diagonal tried, in order, when the plain
/// factorization fails.
pub const JITTER_LADDER: [f64; 3] = [1e-10, 1e-8, 1e-6];

/// Posterior variances below zero but above this are clamped to zero.
pub const NEGATIVE_VARIANCE_CLAMP: f64 = -1e-10;

/// Prior mean function `m(z)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorMean {
    #[default]
    Zero,
    Constant(f64),
}

impl PriorMean {
    pub fn eval(&self, _z: f64) -> f64 {
        match self {
            PriorMean::Zero => 0.0,
            PriorMean::Constant(c) => *c,
        }
    }
}

/// Scalar time series with a known (or assumed) measurement noise variance.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    inputs: Vec<f64>,
    targets: Vec<f64>,
    noise_variance: f64,
}

impl TrainingSet {
    pub fn new(inputs: Vec<f64>, targets: Vec<f64>, noise_variance: f64) -> Result<Self, GpError> {
        if inputs.is_empty() {
            return Err(GpError::InvalidTrainingSet("no observations".into()));
        }
        if inputs.len() != targets.len() {
            return Err(GpError::InvalidTrainingSet(format!(
                "{} inputs but {} targets",
                inputs.len(),
                targets.len()
            )));
        }
        if !(noise_variance >= 0.0 && noise_variance.is_finite()) {
            return Err(GpError::InvalidTrainingSet(format!(
                "noise variance {noise_variance} must be finite and non-negative"
            )));
        }
        if inputs.iter().chain(&targets).any(|v| !v.is_finite()) {
            return Err(GpError::InvalidTrainingSet("non-finite observation".into()));
        }
        if let Some(i) = inputs.windows(2).position(|w| w[1] <= w[0]) {
            return Err(GpError::InvalidTrainingSet(format!(
                "inputs not strictly increasing at index {}",
                i + 1
            )));
        }
        Ok(Self {
            inputs,
            targets,
            noise_variance,
        })
    }

    pub fn inputs(&self) -> &[f64] {
        &self.inputs
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise_variance
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn with_noise_variance(&self, noise_variance: f64) -> Result<Self, GpError> {
        Self::new(self.inputs.clone(), self.targets.clone(), noise_variance)
    }
}

/// Per-test-point posterior quantities.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Prediction {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    /// `∂m⁺/∂z*`
    pub mean_derivative: Vec<f64>,
}

/// A GP conditioned on one training set. Immutable after [`fit`].
#[derive(Debug, Clone)]
pub struct TrainedGp {
    kernel: KernelSpec,
    data: TrainingSet,
    prior_mean: PriorMean,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
    jitter: f64,
}

/// Gram matrix `K(z, z) + σ_n² I`.
pub(crate) fn gram(kernel: &KernelSpec, data: &TrainingSet) -> DMatrix<f64> {
    let z = data.inputs();
    let n = z.len();
    let mut k = DMatrix::zeros(n, n);
    for j in 0..n {
        for i in j..n {
            let v = kernel.eval(z[i], z[j]);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
        k[(j, j)] += data.noise_variance();
    }
    k
}

/// Cholesky factorization with the jitter ladder. Returns the factor and the
/// absolute jitter that was added to the diagonal.
pub(crate) fn factorize(k: DMatrix<f64>) -> Result<(Cholesky<f64, Dyn>, f64), GpError> {
    let n = k.nrows();
    let mean_diag = k.diagonal().sum() / n as f64;
    if let Some(c) = Cholesky::new(k.clone()) {
        if c.l_dirty().diagonal().iter().all(|d| *d > 0.0) {
            return Ok((c, 0.0));
        }
    }
    for factor in JITTER_LADDER {
        let jitter = factor * mean_diag;
        let mut kj = k.clone();
        for i in 0..n {
            kj[(i, i)] += jitter;
        }
        if let Some(c) = Cholesky::new(kj) {
            if c.l_dirty().diagonal().iter().all(|d| *d > 0.0) {
                return Ok((c, jitter));
            }
        }
    }
    Err(GpError::FactorizationFailure {
        n,
        max_jitter: JITTER_LADDER[JITTER_LADDER.len() - 1] * mean_diag,
    })
}

fn residuals(data: &TrainingSet, prior_mean: PriorMean) -> DVector<f64> {
    DVector::from_iterator(
        data.len(),
        data.inputs()
            .iter()
            .zip(data.targets())
            .map(|(z, r)| r - prior_mean.eval(*z)),
    )
}

/// Conditions the GP prior on `data` with a zero prior mean.
pub fn fit(kernel: &KernelSpec, data: &TrainingSet) -> Result<TrainedGp, GpError> {
    fit_with_mean(kernel, data, PriorMean::Zero)
}

pub fn fit_with_mean(
    kernel: &KernelSpec,
    data: &TrainingSet,
    prior_mean: PriorMean,
) -> Result<TrainedGp, GpError> {
    if !kernel.is_valid() {
        return Err(GpError::InvalidKernel);
    }
    let (chol, jitter) = factorize(gram(kernel, data))?;
    let alpha = chol.solve(&residuals(data, prior_mean));
    Ok(TrainedGp {
        kernel: kernel.clone(),
        data: data.clone(),
        prior_mean,
        chol,
        alpha,
        jitter,
    })
}

impl TrainedGp {
    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn data(&self) -> &TrainingSet {
        &self.data
    }

    pub fn prior_mean(&self) -> PriorMean {
        self.prior_mean
    }

    /// Lower-triangular factor `L` with `L Lᵀ = K + σ_n² I + jitter I`.
    pub fn factor(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    /// Weight vector `α = (K + σ_n² I)⁻¹ (r − m(z))`.
    pub fn alpha(&self) -> &DVector<f64> {
        &self.alpha
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Posterior at a single test input: `(mean, variance, ∂mean/∂z*)`.
    ///
    /// Every test point is computed independently, so batching never changes
    /// the result for a given input.
    pub fn predict_point(&self, z_star: f64) -> Result<(f64, f64, f64), GpError> {
        let z = self.data.inputs();
        let n = z.len();
        let mut cross = DVector::zeros(n);
        let mut mean = self.prior_mean.eval(z_star);
        let mut deriv = 0.0;
        for i in 0..n {
            let k = self.kernel.eval(z_star, z[i]);
            cross[i] = k;
            mean += k * self.alpha[i];
            deriv += self.kernel.grad_z(z_star, z[i]) * self.alpha[i];
        }
        let v = self.chol.l_dirty().solve_lower_triangular(&cross).ok_or(
            GpError::NegativeVariance {
                z: z_star,
                value: f64::NAN,
            },
        )?;
        let mut variance = self.kernel.eval(z_star, z_star) - v.norm_squared();
        if variance < 0.0 {
            if variance < NEGATIVE_VARIANCE_CLAMP {
                return Err(GpError::NegativeVariance {
                    z: z_star,
                    value: variance,
                });
            }
            variance = 0.0;
        }
        if !(mean.is_finite() && deriv.is_finite() && variance.is_finite()) {
            return Err(GpError::NonFinitePrediction { z: z_star });
        }
        Ok((mean, variance, deriv))
    }

    /// Posterior mean, variance and mean derivative at each test input.
    pub fn predict(&self, z_star: &[f64]) -> Result<Prediction, GpError> {
        let mut out = Prediction {
            mean: Vec::with_capacity(z_star.len()),
            variance: Vec::with_capacity(z_star.len()),
            mean_derivative: Vec::with_capacity(z_star.len()),
        };
        for &zs in z_star {
            let (m, v, d) = self.predict_point(zs)?;
            out.mean.push(m);
            out.variance.push(v);
            out.mean_derivative.push(d);
        }
        Ok(out)
    }
}

/// Log marginal likelihood of `data` under a zero-mean GP, with its gradient
/// over the kernel's log-hyperparameters followed by `log σ_n²`.
fn mll_parts(
    kernel: &KernelSpec,
    data: &TrainingSet,
) -> Result<(Cholesky<f64, Dyn>, DVector<f64>, f64), GpError> {
    let n = data.len();
    let (chol, _) = factorize(gram(kernel, data))?;
    let y = residuals(data, PriorMean::Zero);
    let alpha = chol.solve(&y);
    let log_det_half: f64 = chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum();
    let value = -0.5 * y.dot(&alpha) - log_det_half - 0.5 * n as f64 * (2.0 * PI).ln();
    Ok((chol, alpha, value))
}

/// Log marginal likelihood without the gradient.
pub(crate) fn log_marginal_likelihood_value(
    kernel: &KernelSpec,
    data: &TrainingSet,
) -> Result<f64, GpError> {
    if !kernel.is_valid() {
        return Err(GpError::InvalidKernel);
    }
    Ok(mll_parts(kernel, data)?.2)
}

/// Lower triangle of `(L Lᵀ)⁻¹ = L⁻ᵀ L⁻¹` from the Cholesky factor `L`, which
/// may hold garbage above its diagonal. The strict upper triangle of the
/// result is left at zero.
fn lower_inverse_of_gram(l: &DMatrix<f64>) -> DMatrix<f64> {
    let n = l.nrows();
    // M = L⁻¹, lower triangular, column by column.
    let mut m = DMatrix::<f64>::zeros(n, n);
    let mut x = vec![0.0; n];
    for j in 0..n {
        x.fill(0.0);
        x[j] = 1.0;
        for k in j..n {
            let xk = x[k] / l[(k, k)];
            x[k] = xk;
            if xk != 0.0 {
                let lk = l.column(k);
                for i in k + 1..n {
                    x[i] -= lk[i] * xk;
                }
            }
        }
        m.column_mut(j).rows_mut(j, n - j).copy_from_slice(&x[j..]);
    }
    // (Mᵀ M)_ij = Σ_{k ≥ i} M_ki M_kj for i ≥ j.
    let mut out = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let cj = m.column(j);
        for i in j..n {
            let ci = m.column(i);
            out[(i, j)] = ci.rows(i, n - i).dot(&cj.rows(i, n - i));
        }
    }
    out
}

pub fn log_marginal_likelihood(
    kernel: &KernelSpec,
    data: &TrainingSet,
) -> Result<(f64, Vec<f64>), GpError> {
    if !kernel.is_valid() {
        return Err(GpError::InvalidKernel);
    }
    let n = data.len();
    let (chol, alpha, value) = mll_parts(kernel, data)?;

    // W = α αᵀ − K⁻¹, ∂/∂θ_j = ½ tr(W ∂K/∂θ_j); only the lower triangle is used.
    let mut w = lower_inverse_of_gram(chol.l_dirty());
    w.neg_mut();
    w.ger(1.0, &alpha, &alpha, 1.0);

    let n_kernel = kernel.n_params();
    let mut grad = vec![0.0; n_kernel + 1];
    let z = data.inputs();
    let mut buf = Vec::with_capacity(n_kernel);
    for j in 0..n {
        for i in j..n {
            buf.clear();
            kernel.eval_with_hyper_grads(z[i], z[j], &mut buf);
            let weight = if i == j { w[(i, j)] } else { 2.0 * w[(i, j)] };
            for (g, dk) in grad.iter_mut().zip(&buf) {
                *g += weight * dk;
            }
        }
    }
    grad[n_kernel] = data.noise_variance() * w.trace();
    for g in &mut grad {
        *g *= 0.5;
    }
    Ok((value, grad))
}
