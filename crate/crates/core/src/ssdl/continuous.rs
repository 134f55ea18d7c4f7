use std::time::Instant;

use ndarray::{Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::{mean_square, network_errors, FitReport, NetSpecs, NetworkReport};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::model::{add_outer, Algorithm, MeanTerm, Provenance, SpectralModel, SpectralTerm, Support};
use crate::nnet::{
    train_regression, AdamState, BasisNetwork, NetError, OutputMap, Standardizer, TrainConfig,
};
use crate::rngdist::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuousOptions {
    /// Stop adding terms once the residual MSE falls below `tol` times the
    /// MSE left by the mean network.
    pub tol: f64,
    pub max_terms: usize,
    pub specs: NetSpecs,
    /// `loss_threshold` applies to the product loss divided by the mean
    /// square of the residual being fitted.
    pub train: TrainConfig,
    /// Stop a product fit when the best loss has not improved by 0.01% for
    /// this many epochs.
    pub patience: usize,
    pub seed: u64,
}

impl ContinuousOptions {
    pub fn new(specs: NetSpecs, train: TrainConfig, seed: u64) -> Self {
        Self {
            tol: 1e-12,
            max_terms: 20,
            specs,
            train,
            patience: 5_000,
            seed,
        }
    }
}

const MIN_REL_IMPROVEMENT: f64 = 1e-4;

struct PairFit {
    phi: BasisNetwork,
    psi: BasisNetwork,
    loss: f64,
    epochs: usize,
}

/// Jointly trains `φ` on the grid and `ψ` on the samples to minimize
/// `mean_ij (r_ij - ψ(ξ_i) φ(x_j))²`.
fn train_pair(
    r: &Array2<f64>,
    grid: ArrayView2<f64>,
    xi: ArrayView2<f64>,
    opts: &ContinuousOptions,
    rng: &mut Rng,
) -> std::result::Result<PairFit, NetError> {
    let (n, m) = r.dim();
    let scale = mean_square(r);
    let mut phi = BasisNetwork::init(opts.specs.phi.clone(), rng)?;
    phi.standardizer = Standardizer::fit(grid);
    phi.output = OutputMap {
        shift: 0.0,
        scale: scale.sqrt(),
    };
    let mut psi = BasisNetwork::init(opts.specs.psi.clone(), rng)?;
    psi.standardizer = Standardizer::fit(xi);

    let mut adam_phi = AdamState::new(&phi.params);
    let mut adam_psi = AdamState::new(&psi.params);
    let mut best = (phi.params.clone(), psi.params.clone());
    let mut best_loss = f64::INFINITY;
    let mut last_improvement = 0;
    let mut reference = f64::INFINITY;
    let mut epochs = 0;
    let factor = -2.0 / (n * m) as f64;
    loop {
        let (phi_v, phi_cache) = phi.forward_cached(grid)?;
        let (psi_v, psi_cache) = psi.forward_cached(xi)?;
        let mut e = r.clone();
        add_outer(&mut e, (-&psi_v).view(), phi_v.view());
        let loss = mean_square(&e) / scale;
        if !loss.is_finite() {
            return Err(NetError::Divergence { epoch: epochs, loss });
        }
        if loss < best_loss {
            best_loss = loss;
            best.0.clone_from(&phi.params);
            best.1.clone_from(&psi.params);
        }
        if loss < reference * (1.0 - MIN_REL_IMPROVEMENT) {
            reference = loss;
            last_improvement = epochs;
        }
        if loss <= opts.train.loss_threshold
            || epochs >= opts.train.max_epochs
            || epochs - last_improvement >= opts.patience
        {
            break;
        }
        let d_phi: Array1<f64> = e.t().dot(&psi_v) * factor;
        let d_psi: Array1<f64> = e.dot(&phi_v) * factor;
        let g_phi = phi.backward(&phi_cache, &d_phi);
        let g_psi = psi.backward(&psi_cache, &d_psi);
        adam_phi.step(&mut phi.params, &g_phi, opts.train.learning_rate);
        adam_psi.step(&mut psi.params, &g_psi, opts.train.learning_rate);
        epochs += 1;
    }
    phi.params = best.0;
    psi.params = best.1;
    Ok(PairFit {
        phi,
        psi,
        loss: best_loss,
        epochs,
    })
}

/// Fully continuous fit: a mean network, then one jointly trained
/// (deterministic, stochastic) network pair per term, deflating the residual
/// with the network predictions after each term.
///
/// The mean network is fitted to the column means of the training data, which
/// has the same minimizer and gradients as fitting it to every `(x, ξ) → u`
/// pair. A term whose best loss does not beat the zero term ends the fit.
pub fn fit_continuous(dataset: &Dataset, opts: &ContinuousOptions) -> Result<(SpectralModel, FitReport)> {
    opts.train.validate()?;
    let start = Instant::now();
    let values = dataset.train_values();
    let xi = dataset.train_xi();
    let grid = dataset.grid.view();
    let base = Rng::new(opts.seed);
    let column_means = super::fit_mean(dataset)?;

    let mut rng = base.substream(0);
    let mean_fit = train_regression(&opts.specs.phi0, grid, &column_means, &opts.train, &mut rng)
        .map_err(|source| Error::Training {
            role: "phi0".into(),
            source,
        })?;
    let mut reports = vec![NetworkReport {
        role: "phi0".into(),
        loss: mean_fit.loss,
        mse: mean_fit.mse,
        epochs: mean_fit.epochs,
    }];
    let phi0_net = mean_fit.net;
    let phi0 = phi0_net.forward(grid)?;
    let mut r = values - &phi0;
    let e0 = mean_square(&r);
    let mut history = vec![e0];
    let mut terms = Vec::new();

    while terms.len() < opts.max_terms {
        let current = *history.last().expect("nonempty");
        if current < opts.tol * e0 || current == 0.0 {
            break;
        }
        let p = terms.len() + 1;
        let mut rng = base.substream(p as u64);
        let fit = train_pair(&r, grid, xi.view(), opts, &mut rng).map_err(|source| {
            Error::Training {
                role: format!("pair{p}"),
                source,
            }
        })?;
        if fit.loss >= 1.0 {
            log::info!("term {p}: product fit does not reduce the residual; stopping");
            break;
        }
        let (mut phi_net, mut psi_net) = (fit.phi, fit.psi);
        let psi_raw = psi_net.forward(xi.view())?;
        let s = (psi_raw.dot(&psi_raw) / psi_raw.len() as f64).sqrt();
        if s == 0.0 {
            break;
        }
        psi_net.rescale_output(1.0 / s);
        phi_net.rescale_output(s);
        let psi = psi_net.forward(xi.view())?;
        let psi = &psi / (psi.dot(&psi) / psi.len() as f64).sqrt();
        let phi = phi_net.forward(grid)?;
        add_outer(&mut r, (-&psi).view(), phi.view());
        let mse = mean_square(&r);
        if mse >= current {
            log::info!("term {p}: residual did not decrease; stopping");
            break;
        }
        reports.push(NetworkReport {
            role: format!("pair{p}"),
            loss: fit.loss,
            mse,
            epochs: fit.epochs,
        });
        history.push(mse);
        let psi_norm = (phi.dot(&phi) / phi.len() as f64).sqrt();
        terms.push(SpectralTerm {
            phi_discrete: phi,
            psi_discrete: psi,
            phi_net: Some(phi_net),
            psi_net: Some(psi_net),
            psi_norm,
        });
    }

    let provenance = Provenance {
        algorithm: Algorithm::Continuous,
        tolerances: [
            ("tol", opts.tol),
            ("max_terms", opts.max_terms as f64),
            ("learning_rate", opts.train.learning_rate),
            ("loss_threshold", opts.train.loss_threshold),
            ("max_epochs", opts.train.max_epochs as f64),
            ("patience", opts.patience as f64),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect(),
        seed: Some(opts.seed),
        residual_mse: history.clone(),
    };
    let model = SpectralModel::new(
        MeanTerm {
            discrete: phi0,
            net: Some(phi0_net),
        },
        terms,
        Support {
            grid: dataset.grid.clone(),
            xi,
        },
        provenance,
    )?;
    let mut report = FitReport::new(Algorithm::Continuous, history);
    report.networks = reports;
    let (train, test) = network_errors(&model, dataset)?;
    report.train_mse = Some(train);
    report.test_mse = test;
    report
        .stage_seconds
        .insert("continuous".into(), start.elapsed().as_secs_f64());
    Ok((model, report))
}
