use ndarray::{Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::SpectralModel;

const UNIT_TOL: f64 = 1e-10;

/// `E[u](x_j) = Φ0(x_j)`.
pub fn mean_field(model: &SpectralModel) -> Array1<f64> {
    model.phi0.discrete.clone()
}

/// `Var[u](x_j) = Σ_p Φ_p(x_j)²`, valid only when every stochastic factor
/// has unit mean square over the support samples.
pub fn variance_field(model: &SpectralModel) -> Result<Array1<f64>> {
    let mut var = Array1::zeros(model.phi0.discrete.len());
    for (p, t) in model.terms.iter().enumerate() {
        let ms = t.psi_discrete.dot(&t.psi_discrete) / t.psi_discrete.len() as f64;
        if (ms - 1.0).abs() > UNIT_TOL {
            return Err(Error::Contract(format!(
                "term {}: E[Ψ²] = {ms}, the variance identity needs 1",
                p + 1
            )));
        }
        var += &t.phi_discrete.mapv(|v| v * v);
    }
    Ok(var)
}

fn gram_of(columns: &Array2<f64>) -> Array2<f64> {
    columns.t().dot(columns) / columns.nrows() as f64
}

/// Empirical `E[Ψ_p Ψ_q]` over the support samples, with `Ψ_0 = 1`.
pub fn gram_matrix(model: &SpectralModel) -> Array2<f64> {
    let n = model.support.xi.nrows();
    let mut cols = Array2::ones((n, model.n_terms() + 1));
    for (p, t) in model.terms.iter().enumerate() {
        cols.column_mut(p + 1).assign(&t.psi_discrete);
    }
    gram_of(&cols)
}

/// `E[Ψ_p Ψ_q]` of the stochastic networks over the samples `xi`, with
/// `Ψ_0 = 1`.
pub fn gram_matrix_network(model: &SpectralModel, xi: ArrayView2<f64>) -> Result<Array2<f64>> {
    let mut cols = Array2::ones((xi.nrows(), model.n_terms() + 1));
    for (p, t) in model.terms.iter().enumerate() {
        let net = t.psi_net.as_ref().ok_or_else(|| {
            Error::Model(format!("term {} has no stochastic network", p + 1))
        })?;
        cols.column_mut(p + 1).assign(&net.forward(xi)?);
    }
    Ok(gram_of(&cols))
}

/// Largest `|G_pq - δ_pq|` over all entries.
pub fn max_off_diagonal(gram: &Array2<f64>) -> f64 {
    gram.indexed_iter()
        .map(|((p, q), v)| if p == q { (v - 1.0).abs() } else { v.abs() })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub n_terms: usize,
    pub gram_discrete: Vec<Vec<f64>>,
    pub orthonormality_discrete: f64,
    pub gram_network: Option<Vec<Vec<f64>>>,
    pub orthonormality_network: Option<f64>,
    /// Largest `|E[Ψ_p²] - 1|` of the stochastic networks.
    pub psi_mean_square_drift: Option<f64>,
    /// Largest gap between `Σ_p Φ_p²` and the variance of the truncated
    /// expansion over the support samples, relative to the largest variance.
    pub variance_identity_drift: f64,
}

fn rows(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.outer_iter().map(|r| r.to_vec()).collect()
}

/// Orthonormality and variance-identity checks of a fitted model. The
/// network checks run over `xi`, or over the support samples when `None`.
pub fn diagnostics(model: &SpectralModel, xi: Option<ArrayView2<f64>>) -> Result<Diagnostics> {
    let g = gram_matrix(model);
    let m = model.phi0.discrete.len();
    let mut phis = Array2::zeros((m, model.n_terms() + 1));
    phis.column_mut(0).assign(&model.phi0.discrete);
    for (p, t) in model.terms.iter().enumerate() {
        phis.column_mut(p + 1).assign(&t.phi_discrete);
    }
    // Var = Σ_pq φ_p φ_q G_pq - (Σ_p φ_p G_0p)², all indices from 0
    let second = (phis.dot(&g) * &phis).sum_axis(ndarray::Axis(1));
    let first = phis.dot(&g.row(0));
    let empirical = second - first.mapv(|v| v * v);
    let identity = phis
        .columns()
        .into_iter()
        .skip(1)
        .fold(Array1::zeros(m), |acc, c| acc + c.mapv(|v| v * v));
    let scale = empirical.iter().chain(identity.iter()).fold(0.0f64, |a, v| a.max(v.abs()));
    let variance_identity_drift = if scale > 0.0 {
        (&empirical - &identity).iter().fold(0.0f64, |a, v| a.max(v.abs())) / scale
    } else {
        0.0
    };

    let (gram_network, orthonormality_network, psi_mean_square_drift) =
        if model.terms.iter().all(|t| t.psi_net.is_some()) && model.n_terms() > 0 {
            let xi = xi.unwrap_or(model.support.xi.view());
            let gn = gram_matrix_network(model, xi)?;
            let drift = (1..gn.nrows()).map(|p| (gn[[p, p]] - 1.0).abs()).fold(0.0, f64::max);
            (Some(rows(&gn)), Some(max_off_diagonal(&gn)), Some(drift))
        } else {
            (None, None, None)
        };

    Ok(Diagnostics {
        n_terms: model.n_terms(),
        orthonormality_discrete: max_off_diagonal(&g),
        gram_discrete: rows(&g),
        gram_network,
        orthonormality_network,
        psi_mean_square_drift,
        variance_identity_drift,
    })
}
