mod common;

use ndarray::Array2;
use neural_chaos::problems::{generate, ProblemConfig, ProblemId};
use neural_chaos::rngdist::Rng;
use neural_chaos::ssdl::{
    diagnostics, fit_discrete, fit_networks, gram_matrix, max_off_diagonal, variance_field,
    DiscreteOptions, NetSpecs,
};
use neural_chaos::nnet::{Activation, NetSpec, TrainConfig};
use neural_chaos::{Dataset, DatasetMeta, EvalForm, SpectralModel, Split};

fn random_dataset(seed: u64, n: usize, m: usize) -> Dataset {
    let mut rng = Rng::new(seed);
    Dataset::new(
        Array2::from_shape_fn((m, 1), |(j, _)| j as f64),
        Array2::from_shape_simple_fn((n, 1), || rng.uniform()),
        Array2::from_shape_simple_fn((n, m), || rng.standard_normal()),
        Split::all_train(n),
        DatasetMeta {
            problem: "random".into(),
            seed,
            distribution: "normal(0, 1)".into(),
            config: None,
        },
    )
    .unwrap()
}

#[test]
fn residuals_follow_singular_value_tails() {
    let ds = random_dataset(3, 40, 12);
    let (model, report) = fit_discrete(&ds, &DiscreteOptions::default()).unwrap();
    let sigma = common::jacobi_singular_values(common::centered(&ds.values).view());
    let tails = common::tail_energies(&sigma);
    let nm = (ds.n() * ds.m()) as f64;
    for (p, mse) in report.residual_mse.iter().enumerate() {
        let tail = tails[p];
        if tail > 1e-6 * tails[0] {
            assert!((mse * nm - tail).abs() <= 1e-8 * tail, "term {p}: {} vs {tail}", mse * nm);
        }
    }
    assert!(max_off_diagonal(&gram_matrix(&model)) < 1e-8);
}

#[test]
fn model_file_round_trip_is_byte_identical() {
    let ds = random_dataset(4, 20, 6);
    let (model, _) = fit_discrete(&ds, &DiscreteOptions::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (p1, p2) = (dir.path().join("m1.json"), dir.path().join("m2.json"));
    model.save(&p1).unwrap();
    let back = SpectralModel::load(&p1).unwrap();
    assert_eq!(back, model);
    back.save(&p2).unwrap();
    assert_eq!(std::fs::read(p1).unwrap(), std::fs::read(p2).unwrap());
}

#[test]
fn full_expansion_reconstructs_training_data() {
    let ds = random_dataset(5, 25, 8);
    let (model, _) = fit_discrete(&ds, &DiscreteOptions::default()).unwrap();
    let rec = model.reconstruct(&ds, model.n_terms()).unwrap();
    let err = (&rec - &ds.train_values()).iter().fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(err < 1e-6, "{err}");
    let var = variance_field(&model).unwrap();
    let emp = common::column_variance(&rec);
    for (a, b) in var.iter().zip(emp.iter()) {
        assert!((a - b).abs() <= 1e-10 * b.max(1e-300));
    }
}

#[test]
fn networks_interpolate_the_discrete_ex1_model() {
    let mut cfg = ProblemConfig::default_for(ProblemId::Ex1);
    cfg.n = 100;
    let ds = generate(&cfg).unwrap();
    let (model, _) = fit_discrete(&ds, &DiscreteOptions::default()).unwrap();
    let spec = NetSpec::mlp(1, &[20, 20], Activation::Elu);
    let (nets, report) = fit_networks(
        &model,
        &ds,
        &NetSpecs::uniform(&spec, 1, 1),
        &TrainConfig::new(5e-3, 3000, 1e-5),
        11,
    )
    .unwrap();
    assert_eq!(report.networks.len(), 1 + 2 * model.n_terms());
    assert!(nets.has_networks());
    let i = ds.split.test[0];
    let (x, xi) = (ds.grid[[10, 0]], ds.xi[[i, 0]]);
    let exact = ds.values[[i, 10]];
    let pred = nets.predict(&[x], &[xi], EvalForm::Network).unwrap();
    assert!((pred - exact).abs() < 0.02 * ds.values.iter().fold(0.0f64, |m, v| m.max(v.abs())));
    let d = diagnostics(&nets, Some(ds.test_xi().view())).unwrap();
    assert!(d.psi_mean_square_drift.unwrap().is_finite());
}
