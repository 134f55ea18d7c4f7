use neural_chaos::problems::{
    ex1_solution, generate, solve_beam, solve_heat1d, Problem, ProblemConfig, ProblemId,
};
use neural_chaos::rngdist::Dist;
use neural_chaos::Dataset;

#[test]
fn uniform_beam_midspan_deflection() {
    let x: Vec<f64> = (0..51).map(|j| 10.0 * j as f64 / 50.0).collect();
    let u = solve_beam(&x, &[8.0; 51], -0.005).unwrap();
    // simply supported, uniform load: w(L/2) = 5 q L⁴ / (384 K)
    let exact = 5.0 * -0.005 * 10f64.powi(4) / (384.0 * 8.0);
    assert!((u[25] - exact).abs() < 0.005 * exact.abs(), "{} vs {exact}", u[25]);
}

#[test]
fn heat_solver_second_order() {
    // κ = 2, f = 1: u = x(x - 1)/4
    let errs: Vec<f64> = [11, 21, 41]
        .iter()
        .map(|&m| {
            let x: Vec<f64> = (0..m).map(|j| j as f64 / (m - 1) as f64).collect();
            let u = solve_heat1d(&x, |_| 2.0, |_| 1.0).unwrap();
            x.iter().zip(&u).map(|(x, u)| (u - x * (x - 1.0) / 4.0).abs()).fold(0.0, f64::max)
        })
        .collect();
    assert!(errs.iter().all(|e| *e < 1e-12), "{errs:?}");
    // variable coefficient: κ = 1 + x, f = 1 has u = x - ln(1+x)/ln 2
    let errs: Vec<f64> = [21, 41]
        .iter()
        .map(|&m| {
            let x: Vec<f64> = (0..m).map(|j| j as f64 / (m - 1) as f64).collect();
            let u = solve_heat1d(&x, |t| 1.0 + t, |_| 1.0).unwrap();
            x.iter()
                .zip(&u)
                .map(|(x, u)| (u - (x - (1.0 + x).ln() / 2f64.ln())).abs())
                .fold(0.0, f64::max)
        })
        .collect();
    assert!(errs[1] < errs[0] / 3.0, "{errs:?}");
}

#[test]
fn ex1_values_are_analytic() {
    for dist in [
        Dist::Uniform { a: 0.0, b: 1.0 },
        Dist::Normal { mu: 0.0, sigma: 1.0 },
        Dist::Gamma { k: 1.0, theta: 1.0 },
        Dist::Poisson { lambda: 1.0 },
    ] {
        let mut cfg = ProblemConfig::default_for(ProblemId::Ex1);
        cfg.problem = Problem::Ex1 { dist };
        cfg.n = 50;
        let ds = generate(&cfg).unwrap();
        for i in 0..ds.n() {
            for j in 0..ds.m() {
                let exact = ex1_solution(ds.xi[[i, 0]], ds.grid[[j, 0]]);
                assert!((ds.values[[i, j]] - exact).abs() <= 1e-14 * exact.abs().max(1.0));
            }
        }
    }
}

#[test]
fn generation_is_deterministic_and_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    for id in [ProblemId::Ex2, ProblemId::Ex3, ProblemId::Ex5] {
        let mut cfg = ProblemConfig::default_for(id);
        cfg.n = 40;
        let a = generate(&cfg).unwrap();
        let b = generate(&cfg).unwrap();
        assert_eq!(a, b);
        let p1 = dir.path().join("a.json");
        let p2 = dir.path().join("b.json");
        a.save(&p1).unwrap();
        let back = Dataset::load(&p1).unwrap();
        assert_eq!(back, a);
        back.save(&p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }
}

#[test]
fn different_seeds_differ() {
    let mut cfg = ProblemConfig::default_for(ProblemId::Ex2);
    cfg.n = 10;
    let a = generate(&cfg).unwrap();
    cfg.seed += 1;
    assert_ne!(generate(&cfg).unwrap().xi, a.xi);
}
