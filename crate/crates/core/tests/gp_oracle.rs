//! GP regression checked against independent dense computations and finite
//! differences.

use gptrack_core::gp::{
    fit, log_marginal_likelihood, optimize_hyperparams, KernelSpec, OptimizeOptions, TrainingSet,
};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::time::Instant;

fn quasi_periodic_series(n: usize, dt: f64, noise: f64, seed: u64) -> TrainingSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = Normal::new(0.0, noise.max(1e-300)).unwrap();
    let z: Vec<f64> = (0..n).map(|i| i as f64 * dt).collect();
    let y = z
        .iter()
        .map(|t| {
            let clean = (1.0 + 0.15 * (2.0 * std::f64::consts::PI * t / 30.0).sin())
                * (2.0 * std::f64::consts::PI * t / 4.0).sin();
            clean
                + if noise > 0.0 {
                    dist.sample(&mut rng)
                } else {
                    0.0
                }
        })
        .collect();
    TrainingSet::new(z, y, noise * noise).unwrap()
}

fn dense_gram(kernel: &KernelSpec, z: &[f64], noise: f64) -> DMatrix<f64> {
    let n = z.len();
    DMatrix::from_fn(n, n, |i, j| {
        kernel.eval(z[i], z[j]) + if i == j { noise } else { 0.0 }
    })
}

fn rel_inf(a: &[f64], b: &[f64]) -> f64 {
    let diff = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    let scale = b.iter().map(|x| x.abs()).fold(0.0, f64::max);
    diff / scale
}

#[test]
fn posterior_matches_dense_inverse() {
    let data = quasi_periodic_series(200, 0.04, 0.05, 1);
    let kernel = KernelSpec::quasi_periodic(1.0, 10.0, 1.0, 4.0);
    let start = Instant::now();
    let gp = fit(&kernel, &data).unwrap();
    let z_star: Vec<f64> = (0..31).map(|i| 8.0 + i as f64 * 0.005).collect();
    let pred = gp.predict(&z_star).unwrap();
    let elapsed = start.elapsed();

    let k_inv = dense_gram(&kernel, data.inputs(), data.noise_variance())
        .try_inverse()
        .unwrap();
    let y = DVector::from_column_slice(data.targets());
    let (mut mean, mut var) = (vec![], vec![]);
    for &zs in &z_star {
        let ks = DVector::from_iterator(200, data.inputs().iter().map(|z| kernel.eval(zs, *z)));
        mean.push(ks.dot(&(&k_inv * &y)));
        var.push(kernel.eval(zs, zs) - ks.dot(&(&k_inv * &ks)));
    }
    assert_eq!(gp.jitter(), 0.0);
    assert!(
        rel_inf(&pred.mean, &mean) < 1e-8,
        "mean {}",
        rel_inf(&pred.mean, &mean)
    );
    assert!(
        rel_inf(&pred.variance, &var) < 1e-8,
        "variance {}",
        rel_inf(&pred.variance, &var)
    );
    assert!(elapsed.as_secs_f64() < 1.0, "{elapsed:?}");
}

#[test]
fn mll_matches_dense_formula() {
    let data = quasi_periodic_series(60, 0.1, 0.1, 2);
    let kernel = KernelSpec::quasi_periodic(0.8, 7.0, 1.2, 3.7);
    let k = dense_gram(&kernel, data.inputs(), data.noise_variance());
    let y = DVector::from_column_slice(data.targets());
    let det = k.clone().lu().determinant();
    let expected = -0.5 * y.dot(&(k.try_inverse().unwrap() * &y))
        - 0.5 * det.ln()
        - 0.5 * 60.0 * (2.0 * std::f64::consts::PI).ln();
    let (value, _) = log_marginal_likelihood(&kernel, &data).unwrap();
    assert!(
        (value - expected).abs() < 1e-9 * expected.abs(),
        "{value} vs {expected}"
    );
}

#[test]
fn mll_gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let base = quasi_periodic_series(50, 0.1, 0.1, 4);
    for _ in 0..20 {
        let kernel = KernelSpec::quasi_periodic(
            rng.random_range(0.3..3.0),
            rng.random_range(2.0..20.0),
            rng.random_range(0.5..2.0),
            rng.random_range(3.0..5.0),
        );
        let noise = rng.random_range(0.005..0.1);
        let data = base.with_noise_variance(noise).unwrap();
        let (_, grad) = log_marginal_likelihood(&kernel, &data).unwrap();

        let mut theta = kernel.params();
        theta.push(noise.ln());
        let eval = |th: &[f64]| {
            let (kp, nz) = th.split_at(th.len() - 1);
            let d = data.with_noise_variance(nz[0].exp()).unwrap();
            log_marginal_likelihood(&kernel.with_params(kp), &d)
                .unwrap()
                .0
        };
        let h = 1e-5;
        let fd: Vec<f64> = (0..theta.len())
            .map(|i| {
                let mut plus = theta.clone();
                let mut minus = theta.clone();
                plus[i] += h;
                minus[i] -= h;
                (eval(&plus) - eval(&minus)) / (2.0 * h)
            })
            .collect();
        let rel = rel_inf(&grad, &fd);
        assert!(
            rel < 1e-4,
            "relative gradient error {rel}: {grad:?} vs {fd:?}"
        );
    }
}

#[test]
fn mean_derivative_matches_finite_differences() {
    let data = quasi_periodic_series(120, 0.05, 0.05, 5);
    let kernel = KernelSpec::quasi_periodic(1.0, 10.0, 1.0, 4.0);
    let gp = fit(&kernel, &data).unwrap();
    let h = 1e-5;
    for i in 0..40 {
        let z = -0.5 + i as f64 * 0.18;
        let (_, _, d) = gp.predict_point(z).unwrap();
        let fd =
            (gp.predict_point(z + h).unwrap().0 - gp.predict_point(z - h).unwrap().0) / (2.0 * h);
        assert!((d - fd).abs() < 1e-6, "z = {z}: {d} vs {fd}");
    }
}

#[test]
fn variance_never_exceeds_prior() {
    let data = quasi_periodic_series(80, 0.05, 0.02, 6);
    let kernel = KernelSpec::quasi_periodic(2.0, 5.0, 0.8, 4.0);
    let gp = fit(&kernel, &data).unwrap();
    for i in 0..200 {
        let z = -5.0 + i as f64 * 0.07;
        let (_, v, _) = gp.predict_point(z).unwrap();
        assert!(v >= 0.0 && v <= kernel.eval(z, z) + 1e-10);
    }
}

#[test]
fn mll_invariant_under_reordering() {
    let data = quasi_periodic_series(40, 0.1, 0.05, 7);
    let kernel = KernelSpec::quasi_periodic(1.0, 6.0, 1.0, 4.0);
    let mut pairs: Vec<(f64, f64)> = data
        .inputs()
        .iter()
        .copied()
        .zip(data.targets().iter().copied())
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for i in (1..pairs.len()).rev() {
        pairs.swap(i, rng.random_range(0..=i));
    }
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let resorted = TrainingSet::new(
        pairs.iter().map(|p| p.0).collect(),
        pairs.iter().map(|p| p.1).collect(),
        data.noise_variance(),
    )
    .unwrap();
    let a = log_marginal_likelihood(&kernel, &data).unwrap().0;
    let b = log_marginal_likelihood(&kernel, &resorted).unwrap().0;
    assert!((a - b).abs() < 1e-12);
}

#[test]
fn recovers_period_and_noise_of_quasi_periodic_data() {
    let sigma = 0.05;
    let data = quasi_periodic_series(300, 0.1, sigma, 9);
    let template = KernelSpec::quasi_periodic(1.0, 10.0, 1.0, 3.0);
    let fitted = optimize_hyperparams(&template, &data, &OptimizeOptions::default()).unwrap();
    let period = fitted.kernel.params().last().unwrap().exp();
    assert!((period / 4.0 - 1.0).abs() < 0.05, "period {period}");
    let nv = fitted.noise_variance / (sigma * sigma);
    assert!((nv - 1.0).abs() < 0.2, "noise ratio {nv}");
}

#[test]
fn recovers_period_of_noise_free_sinusoid() {
    let z: Vec<f64> = (0..200).map(|i| i as f64 * 0.1).collect();
    let y = z
        .iter()
        .map(|t| (2.0 * std::f64::consts::PI * t / 4.0).sin())
        .collect();
    let data = TrainingSet::new(z, y, 1e-6).unwrap();
    let template = KernelSpec::quasi_periodic(1.0, 10.0, 1.0, 3.0);
    let fitted = optimize_hyperparams(&template, &data, &OptimizeOptions::default()).unwrap();
    let period = fitted.kernel.params().last().unwrap().exp();
    assert!((period / 4.0 - 1.0).abs() < 0.05, "period {period}");
}

#[test]
fn white_noise_variance_estimate() {
    let sigma = 0.3;
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let dist = Normal::new(0.0, sigma).unwrap();
    let z: Vec<f64> = (0..300).map(|i| i as f64 * 0.1).collect();
    let y: Vec<f64> = z.iter().map(|_| dist.sample(&mut rng)).collect();
    let sample_var = y.iter().map(|v| v * v).sum::<f64>() / y.len() as f64;
    let data = TrainingSet::new(z, y, 0.01).unwrap();
    let fitted = optimize_hyperparams(
        &KernelSpec::squared_exponential(1.0, 1.0),
        &data,
        &OptimizeOptions::default(),
    )
    .unwrap();
    // Signal and noise share the white variance when the length collapses;
    // their sum is what the data pins down.
    let explained = fitted.noise_variance
        + if fitted.kernel.params()[1].exp() < 0.05 {
            fitted.kernel.prior_variance()
        } else {
            0.0
        };
    assert!(
        (explained / (sigma * sigma) - 1.0).abs() < 0.2,
        "{fitted:?}"
    );
    assert!((explained / sample_var - 1.0).abs() < 0.05);
}

#[test]
fn single_start_is_deterministic() {
    let data = quasi_periodic_series(100, 0.1, 0.05, 11);
    let opts = OptimizeOptions {
        n_starts: 1,
        seed: 42,
        ..OptimizeOptions::default()
    };
    let template = KernelSpec::quasi_periodic(1.0, 10.0, 1.0, 3.0);
    let a = optimize_hyperparams(&template, &data, &opts).unwrap();
    let b = optimize_hyperparams(&template, &data, &opts).unwrap();
    assert_eq!(a, b);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gram_of_random_inputs_factorizes(
        zs in proptest::collection::vec(-20.0f64..20.0, 10),
        var in 0.01f64..10.0,
        len in 0.05f64..10.0,
        plen in 0.2f64..3.0,
        period in 0.5f64..10.0,
    ) {
        let kernel = KernelSpec::product(
            KernelSpec::squared_exponential(var, len),
            KernelSpec::periodic(1.0, plen, period),
        );
        let k = dense_gram(&kernel, &zs, 1e-10);
        prop_assert!(k.cholesky().is_some());
    }
}
