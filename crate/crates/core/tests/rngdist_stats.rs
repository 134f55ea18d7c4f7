mod common;

use ndarray::Array2;
use neural_chaos::rngdist::{
    quantile, sample, sample_dependent_pair, Copula, Dist, KlField, Marginal, Rng,
};
use statrs::distribution::{ContinuousCDF, Gamma, Normal};

#[test]
fn exponential_mean() {
    let x = sample(&mut Rng::new(1), Dist::Gamma { k: 1.0, theta: 1.0 }, 100_000).unwrap();
    assert!((x.mean().unwrap() - 1.0).abs() < 0.02);
}

#[test]
fn poisson_zero_probability() {
    let x = sample(&mut Rng::new(2), Dist::Poisson { lambda: 1.0 }, 100_000).unwrap();
    let p0 = x.iter().filter(|v| **v == 0.0).count() as f64 / x.len() as f64;
    assert!((p0 - (-1.0f64).exp()).abs() < 0.01);
    assert!(x.iter().all(|v| v.fract() == 0.0));
}

#[test]
fn uniform_and_normal_moments() {
    let u = sample(&mut Rng::new(3), Dist::Uniform { a: 1.0, b: 3.0 }, 100_000).unwrap();
    assert!((u.mean().unwrap() - 2.0).abs() < 0.01);
    assert!(u.iter().all(|v| (1.0..3.0).contains(v)));
    let z = sample(&mut Rng::new(4), Dist::Normal { mu: -1.0, sigma: 2.0 }, 100_000).unwrap();
    assert!((z.mean().unwrap() + 1.0).abs() < 0.02);
    assert!((z.std(0.0) - 2.0).abs() < 0.02);
}

#[test]
fn quantiles_agree_with_statrs() {
    let normal = Normal::new(0.0, 1.0).unwrap();
    let gamma = Gamma::new(2.0, 1.0).unwrap();
    for p in [1e-6, 0.01, 0.2, 0.5, 0.7, 0.99, 1.0 - 1e-6] {
        let z = quantile(Marginal::STANDARD_NORMAL, p).unwrap();
        assert!((normal.cdf(z) - p).abs() < 1e-9 * p.max(1e-3), "normal p={p}");
        let g = quantile(Marginal::Gamma { k: 2.0, theta: 1.0 }, p).unwrap();
        assert!((gamma.cdf(g) - p).abs() < 1e-9, "gamma p={p}");
    }
    let median = quantile(Marginal::Gamma { k: 2.0, theta: 1.0 }, 0.5).unwrap();
    assert!((median - 1.678347).abs() < 1e-5);
}

#[test]
fn gumbel_pair_marginals_and_tau() {
    let xy = sample_dependent_pair(
        &mut Rng::new(5),
        Copula::Gumbel { theta: 2.0 },
        (Marginal::Gamma { k: 2.0, theta: 1.0 }, Marginal::STANDARD_NORMAL),
        10_000,
    )
    .unwrap();
    assert!((xy.column(0).mean().unwrap() - 2.0).abs() < 0.05);
    assert!(xy.column(1).mean().unwrap().abs() < 0.04);
    let tau = common::concordance_tau(xy.column(0), xy.column(1));
    assert!((tau - 0.5).abs() < 0.03, "tau {tau}");
}

#[test]
fn gaussian_pair_covariance() {
    let xy = sample_dependent_pair(
        &mut Rng::new(6),
        Copula::Gaussian { rho: -0.5, sigma: 0.25 },
        (Marginal::STANDARD_NORMAL, Marginal::STANDARD_NORMAL),
        100_000,
    )
    .unwrap();
    let c = xy.t().dot(&xy) / xy.nrows() as f64;
    assert!((c[[0, 0]] - 0.0625).abs() < 0.002);
    assert!((c[[0, 1]] + 0.03125).abs() < 0.002);
}

#[test]
fn kl_field_variance_matches_modes() {
    let points = Array2::from_shape_fn((51, 1), |(j, _)| 10.0 * j as f64 / 50.0);
    let kl = KlField::rbf(&points, 0.0, 2.0, 7).unwrap();
    let mut rng = Rng::new(7);
    let n = 20_000;
    let mut acc = ndarray::Array1::<f64>::zeros(51);
    for _ in 0..n {
        let xi = ndarray::Array1::from_shape_simple_fn(7, || rng.standard_normal());
        acc += &kl.realize(xi.view()).mapv(|v| v * v);
    }
    let mc = acc / n as f64;
    let exact = kl.pointwise_variance();
    for (a, b) in mc.iter().zip(exact.iter()) {
        assert!((a - b).abs() < 0.05 * b.max(0.1), "{a} vs {b}");
        assert!(*b <= 1.0 + 1e-9);
    }
}
