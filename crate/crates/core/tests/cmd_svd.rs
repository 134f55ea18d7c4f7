mod common;

use ndarray::Array2;
use neural_chaos::cmd::{cmd, CmdOptions};
use neural_chaos::rngdist::Rng;
use proptest::prelude::*;

fn random_matrix(rng: &mut Rng, n: usize, m: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((n, m), || rng.standard_normal())
}

#[test]
fn cmd_matches_leading_singular_pair() {
    let mut rng = Rng::new(17);
    for _ in 0..20 {
        let (n, m) = (5 + rng.below(60), 5 + rng.below(40));
        let r = random_matrix(&mut rng, n, m);
        let res = cmd(r.view(), &CmdOptions::default()).unwrap();
        let (sigma, u) = common::power_top_pair(r.view(), 1e-13);
        let total = r.iter().map(|v| v * v).sum::<f64>();
        let tail = total - sigma * sigma;
        let mut e = r.clone();
        for i in 0..n {
            for j in 0..m {
                e[[i, j]] -= res.psi[i] * res.phi[j];
            }
        }
        let err = e.iter().map(|v| v * v).sum::<f64>();
        assert!((err - tail).abs() <= 1e-8 * tail, "{n}x{m}: {err} vs {tail}");
        let cos = res.psi.dot(&u).abs() / res.psi.dot(&res.psi).sqrt();
        assert!(cos > 1.0 - 1e-8, "{n}x{m}: cos {cos}");
    }
}

#[test]
fn jacobi_oracle_on_diagonal() {
    let a = ndarray::array![[3.0, 0.0], [0.0, -4.0], [0.0, 0.0]];
    let s = common::jacobi_singular_values(a.view());
    assert!((s[0] - 4.0).abs() < 1e-14 && (s[1] - 3.0).abs() < 1e-14);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn deflated_residual_is_orthogonal_to_psi(seed in 0u64..10_000, n in 2usize..30, m in 2usize..20) {
        let mut rng = Rng::new(seed);
        let r = random_matrix(&mut rng, n, m);
        let res = cmd(r.view(), &CmdOptions::default()).unwrap();
        prop_assume!(res.converged);
        let ms = res.psi.dot(&res.psi) / n as f64;
        prop_assert!((ms - 1.0).abs() < 1e-12);
        let mut e = r.clone();
        for i in 0..n {
            for j in 0..m {
                e[[i, j]] -= res.psi[i] * res.phi[j];
            }
        }
        let scale = r.iter().map(|v| v.abs()).fold(0.0, f64::max) * n as f64;
        for v in e.t().dot(&res.psi).iter() {
            prop_assert!(v.abs() <= 1e-9 * scale);
        }
        let err = e.iter().map(|v| v * v).sum::<f64>();
        prop_assert!(err <= r.iter().map(|v| v * v).sum::<f64>());
    }

    #[test]
    fn rank_one_is_recovered(seed in 0u64..10_000, n in 2usize..30, m in 2usize..20) {
        let mut rng = Rng::new(seed);
        let a: Vec<f64> = (0..n).map(|_| 0.5 + rng.uniform()).collect();
        let b: Vec<f64> = (0..m).map(|_| rng.standard_normal()).collect();
        let r = Array2::from_shape_fn((n, m), |(i, j)| a[i] * b[j]);
        let res = cmd(r.view(), &CmdOptions::default()).unwrap();
        for i in 0..n {
            for j in 0..m {
                prop_assert!((res.psi[i] * res.phi[j] - r[[i, j]]).abs() < 1e-10);
            }
        }
    }
}
