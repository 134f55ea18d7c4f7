//! Spectral stochastic dictionary learning.
//!
//! A field `u(x, ξ)` is expanded as `Φ0(x) + Σ_p Φ_p(x) Ψ_p(ξ)` with
//! `E[Ψ_p Ψ_q] = δ_pq`. Terms are learned one at a time by deflation:
//!
//! * [`fit_discrete`] extracts each term as the best rank-1 factor of the
//!   residual matrix ([`crate::cmd`]), then [`fit_networks`] learns continuous
//!   versions of the resulting vectors;
//! * [`fit_continuous`] trains a pair of networks directly on the product
//!   loss for every term;
//! * [`fit_fixed_cosine`] fixes the deterministic basis to cosines and only
//!   solves for the stochastic coefficients.

mod continuous;
mod discrete;
mod moments;

pub use continuous::{fit_continuous, ContinuousOptions};
pub use discrete::{cosine_term_limit, fit_discrete, fit_fixed_cosine, fit_networks, DiscreteOptions};
pub use moments::{
    diagnostics, gram_matrix, gram_matrix_network, max_off_diagonal, mean_field, variance_field,
    Diagnostics,
};

use std::collections::BTreeMap;
use std::fmt::Write as _;

use ndarray::{Array1, Axis};
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::io::fmt_float;
use crate::model::{Algorithm, SpectralModel};
use crate::nnet::{Activation, NetSpec, TrainConfig};
use crate::problems::ProblemId;

/// Architectures for the mean, deterministic and stochastic networks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetSpecs {
    pub phi0: NetSpec,
    pub phi: NetSpec,
    pub psi: NetSpec,
}

impl NetSpecs {
    /// Same architecture everywhere, with the right input dimensions.
    pub fn uniform(spec: &NetSpec, dim_x: usize, dim_xi: usize) -> Self {
        let with_dim = |d| NetSpec {
            input_dim: d,
            ..spec.clone()
        };
        Self {
            phi0: with_dim(dim_x),
            phi: with_dim(dim_x),
            psi: with_dim(dim_xi),
        }
    }
}

/// Per-problem network architectures and learning rates; the stopping
/// threshold is 5e-4 throughout.
pub fn default_hyperparameters(problem: ProblemId, dim_x: usize, dim_xi: usize) -> (NetSpecs, TrainConfig) {
    let mlp20 = NetSpec::mlp(1, &[20, 20], Activation::Elu);
    let (specs, lr) = match problem {
        ProblemId::Ex1 | ProblemId::Ex2 => (NetSpecs::uniform(&mlp20, dim_x, dim_xi), 5e-4),
        ProblemId::Ex5 => (NetSpecs::uniform(&mlp20, dim_x, dim_xi), 1e-3),
        ProblemId::Ex3 => (
            NetSpecs::uniform(&NetSpec::siren(1, &[50, 50], 10.0), dim_x, dim_xi),
            5e-4,
        ),
        ProblemId::Ex4 => {
            let siren = NetSpec::siren(dim_x, &[100, 100, 100], 15.0);
            (
                NetSpecs {
                    phi0: siren.clone(),
                    phi: siren,
                    psi: NetSpec::mlp(dim_xi, &[200, 200, 200], Activation::Relu),
                },
                1e-3,
            )
        }
    };
    (specs, TrainConfig::new(lr, 200_000, 5e-4))
}

/// Final loss of one trained network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkReport {
    /// `phi0`, `phi<p>` or `psi<p>`; `pair<p>` for jointly trained terms.
    pub role: String,
    pub loss: f64,
    pub mse: f64,
    pub epochs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub algorithm: Algorithm,
    /// Training residual MSE after the mean (entry 0) and after each term.
    pub residual_mse: Vec<f64>,
    pub networks: Vec<NetworkReport>,
    /// Network-form MSE over the training and test rows.
    pub train_mse: Option<f64>,
    pub test_mse: Option<f64>,
    pub stage_seconds: BTreeMap<String, f64>,
}

impl FitReport {
    fn new(algorithm: Algorithm, residual_mse: Vec<f64>) -> Self {
        Self {
            algorithm,
            residual_mse,
            networks: Vec::new(),
            train_mse: None,
            test_mse: None,
            stage_seconds: BTreeMap::new(),
        }
    }

    /// `term,residual_mse` rows, term 0 being the mean-only model.
    pub fn residual_csv(&self) -> String {
        let mut out = String::from("term,residual_mse\n");
        for (p, v) in self.residual_mse.iter().enumerate() {
            writeln!(out, "{p},{}", fmt_float(*v)).expect("write to string");
        }
        out
    }

    /// `split,mse` rows for the network-form errors.
    pub fn error_csv(&self) -> String {
        let mut out = String::from("split,mse\n");
        for (name, v) in [("train", self.train_mse), ("test", self.test_mse)] {
            if let Some(v) = v {
                writeln!(out, "{name},{}", fmt_float(v)).expect("write to string");
            }
        }
        out
    }
}

/// Column means of the training values.
pub fn fit_mean(dataset: &Dataset) -> Result<Array1<f64>> {
    if dataset.split.train.is_empty() {
        return Err(Error::Dataset("training split is empty".into()));
    }
    Ok(dataset
        .train_values()
        .mean_axis(Axis(0))
        .expect("nonempty training split"))
}

fn mean_square(a: &ndarray::Array2<f64>) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>() / a.len().max(1) as f64
}

/// Network-form MSE over the training and test rows of `dataset`.
pub fn network_errors(model: &SpectralModel, dataset: &Dataset) -> Result<(f64, Option<f64>)> {
    let grid = dataset.grid.view();
    let train = model.predict_network(grid, dataset.train_xi().view())? - dataset.train_values();
    let test = if dataset.split.test.is_empty() {
        None
    } else {
        let pred = model.predict_network(grid, dataset.test_xi().view())?;
        Some(mean_square(&(pred - dataset.test_values())))
    };
    Ok((mean_square(&train), test))
}
