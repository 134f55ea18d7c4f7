use std::collections::BTreeMap;
use std::time::Instant;

use ndarray::{Array1, Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{fit_mean, mean_square, network_errors, FitReport, NetSpecs, NetworkReport};
use crate::cmd::{cmd, update_psi, CmdError, CmdOptions};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::model::{
    add_outer, Algorithm, MeanTerm, Provenance, SpectralModel, SpectralTerm, Support,
};
use crate::nnet::{train_regression, BasisNetwork, NetSpec, TrainConfig};
use crate::rngdist::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscreteOptions {
    /// Stop once the residual MSE falls below `tol` times the MSE after mean
    /// removal.
    pub tol: f64,
    pub max_terms: usize,
    pub cmd_tol: f64,
    pub cmd_max_iter: usize,
}

impl Default for DiscreteOptions {
    fn default() -> Self {
        let c = CmdOptions::default();
        Self {
            tol: 1e-12,
            max_terms: 20,
            cmd_tol: c.tol,
            cmd_max_iter: c.max_iter,
        }
    }
}

impl DiscreteOptions {
    fn tolerances(&self) -> BTreeMap<String, f64> {
        BTreeMap::from([
            ("tol".to_string(), self.tol),
            ("max_terms".to_string(), self.max_terms as f64),
            ("cmd_tol".to_string(), self.cmd_tol),
            ("cmd_max_iter".to_string(), self.cmd_max_iter as f64),
        ])
    }
}

fn support(dataset: &Dataset) -> Support {
    Support {
        grid: dataset.grid.clone(),
        xi: dataset.train_xi(),
    }
}

/// Appends `ψ ⊗ φ` as a term (ψ already at unit mean square) and deflates.
fn push_term(
    terms: &mut Vec<SpectralTerm>,
    history: &mut Vec<f64>,
    r: &mut Array2<f64>,
    phi: Array1<f64>,
    psi: Array1<f64>,
) {
    add_outer(r, (-&psi).view(), phi.view());
    let psi_norm = (phi.dot(&phi) / phi.len() as f64).sqrt();
    terms.push(SpectralTerm {
        phi_discrete: phi,
        psi_discrete: psi,
        phi_net: None,
        psi_net: None,
        psi_norm,
    });
    history.push(mean_square(r));
}

/// Mean removal followed by rank-1 deflation with CMD until the residual MSE
/// drops below `tol` times its initial value or `max_terms` terms exist.
pub fn fit_discrete(dataset: &Dataset, opts: &DiscreteOptions) -> Result<(SpectralModel, FitReport)> {
    let start = Instant::now();
    let phi0 = fit_mean(dataset)?;
    let mut r = dataset.train_values() - &phi0;
    let e0 = mean_square(&r);
    let mut history = vec![e0];
    let mut terms = Vec::new();
    let cmd_opts = CmdOptions {
        tol: opts.cmd_tol,
        max_iter: opts.cmd_max_iter,
    };
    while terms.len() < opts.max_terms {
        let current = *history.last().expect("nonempty");
        if current < opts.tol * e0 || current == 0.0 {
            break;
        }
        let res = match cmd(r.view(), &cmd_opts) {
            Err(CmdError::ZeroResidual) => break,
            other => other?,
        };
        if !res.converged {
            log::warn!("term {}: CMD stopped after {} iterations", terms.len() + 1, res.iterations);
        }
        push_term(&mut terms, &mut history, &mut r, res.phi, res.psi);
    }
    let provenance = Provenance {
        algorithm: Algorithm::Discrete,
        tolerances: opts.tolerances(),
        seed: None,
        residual_mse: history.clone(),
    };
    let model = SpectralModel::new(
        MeanTerm {
            discrete: phi0,
            net: None,
        },
        terms,
        support(dataset),
        provenance,
    )?;
    let mut report = FitReport::new(Algorithm::Discrete, history);
    report.train_mse = report.residual_mse.last().copied();
    report
        .stage_seconds
        .insert("discrete".into(), start.elapsed().as_secs_f64());
    Ok((model, report))
}

struct Job<'a> {
    role: String,
    spec: &'a NetSpec,
    inputs: ArrayView2<'a, f64>,
    targets: Array1<f64>,
}

/// Trains the mean, deterministic and stochastic networks of a discrete
/// model on its stored vectors. Networks are independent and trained in
/// parallel, each from its own RNG substream of `seed`.
pub fn fit_networks(
    model: &SpectralModel,
    dataset: &Dataset,
    specs: &NetSpecs,
    config: &TrainConfig,
    seed: u64,
) -> Result<(SpectralModel, FitReport)> {
    model.check_dataset(dataset)?;
    let start = Instant::now();
    let grid = model.support.grid.view();
    let xi = model.support.xi.view();
    let mut jobs = vec![Job {
        role: "phi0".into(),
        spec: &specs.phi0,
        inputs: grid,
        targets: model.phi0.discrete.clone(),
    }];
    for (p, t) in model.terms.iter().enumerate() {
        jobs.push(Job {
            role: format!("phi{}", p + 1),
            spec: &specs.phi,
            inputs: grid,
            targets: t.phi_discrete.clone(),
        });
        jobs.push(Job {
            role: format!("psi{}", p + 1),
            spec: &specs.psi,
            inputs: xi,
            targets: t.psi_discrete.clone(),
        });
    }
    let base = Rng::new(seed);
    let trained: Vec<Result<(BasisNetwork, NetworkReport)>> = jobs
        .par_iter()
        .enumerate()
        .map(|(k, job)| {
            let mut rng = base.substream(k as u64);
            let out = train_regression(job.spec, job.inputs, &job.targets, config, &mut rng)
                .map_err(|source| Error::Training {
                    role: job.role.clone(),
                    source,
                })?;
            if !out.converged(config) {
                log::info!(
                    "{}: stopped at loss {:e} after {} epochs",
                    job.role,
                    out.loss,
                    out.epochs
                );
            }
            let report = NetworkReport {
                role: job.role.clone(),
                loss: out.loss,
                mse: out.mse,
                epochs: out.epochs,
            };
            Ok((out.net, report))
        })
        .collect();
    let mut nets = Vec::with_capacity(trained.len());
    let mut reports = Vec::with_capacity(trained.len());
    for t in trained {
        let (net, rep) = t?;
        nets.push(net);
        reports.push(rep);
    }
    let mut out = model.clone();
    let mut nets = nets.into_iter();
    out.phi0.net = nets.next();
    for t in &mut out.terms {
        t.phi_net = nets.next();
        t.psi_net = nets.next();
    }
    out.provenance.algorithm = Algorithm::DiscreteContinuous;
    out.provenance.seed = Some(seed);
    out.provenance
        .tolerances
        .insert("learning_rate".into(), config.learning_rate);
    out.provenance
        .tolerances
        .insert("loss_threshold".into(), config.loss_threshold);
    out.provenance
        .tolerances
        .insert("max_epochs".into(), config.max_epochs as f64);

    let mut report = FitReport::new(Algorithm::DiscreteContinuous, out.provenance.residual_mse.clone());
    report.networks = reports;
    let (train, test) = network_errors(&out, dataset)?;
    report.train_mse = Some(train);
    report.test_mse = test;
    report
        .stage_seconds
        .insert("networks".into(), start.elapsed().as_secs_f64());
    Ok((out, report))
}

/// Largest number of cosine terms resolvable on `m` grid points.
pub fn cosine_term_limit(m: usize) -> usize {
    m.saturating_sub(1) / 3
}

/// Deterministic basis fixed to `cos(kπx̂)`, `k = 1..=terms`, on the grid
/// rescaled to `[0, 1]`; each stochastic coefficient is the single
/// closed-form update given its cosine.
pub fn fit_fixed_cosine(dataset: &Dataset, terms: usize) -> Result<(SpectralModel, FitReport)> {
    if dataset.dim_x() != 1 {
        return Err(Error::Config(
            "fixed cosine basis needs a one-dimensional grid".into(),
        ));
    }
    let limit = cosine_term_limit(dataset.m());
    if terms > limit {
        return Err(Error::Config(format!(
            "{terms} cosine terms exceed the limit of {limit} for {} grid points",
            dataset.m()
        )));
    }
    let start = Instant::now();
    let x = dataset.grid.column(0);
    let (lo, hi) = x.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
        (a.min(v), b.max(v))
    });
    let phi0 = fit_mean(dataset)?;
    let mut r = dataset.train_values() - &phi0;
    let mut history = vec![mean_square(&r)];
    let mut out_terms = Vec::new();
    for k in 1..=terms {
        let freq = k as f64 * std::f64::consts::PI;
        let basis = x.mapv(|v| (freq * (v - lo) / (hi - lo)).cos());
        let psi = update_psi(r.view(), basis.view())?;
        let ms = psi.dot(&psi) / psi.len() as f64;
        if ms == 0.0 {
            log::info!("cosine term {k} has no projection onto the residual; stopping");
            break;
        }
        let s = ms.sqrt();
        push_term(&mut out_terms, &mut history, &mut r, basis * s, psi / s);
    }
    let provenance = Provenance {
        algorithm: Algorithm::FixedCosine,
        tolerances: BTreeMap::from([("terms".to_string(), terms as f64)]),
        seed: None,
        residual_mse: history.clone(),
    };
    let model = SpectralModel::new(
        MeanTerm {
            discrete: phi0,
            net: None,
        },
        out_terms,
        support(dataset),
        provenance,
    )?;
    let mut report = FitReport::new(Algorithm::FixedCosine, history);
    report.train_mse = report.residual_mse.last().copied();
    report
        .stage_seconds
        .insert("discrete".into(), start.elapsed().as_secs_f64());
    Ok((model, report))
}
