//! Closest multiplicative decomposition: the best rank-1 approximation
//! `r_ij ≈ ψ_i φ_j` of a residual matrix by alternating closed-form updates.
//!
//! Rows of `r` index realizations (N), columns index grid points (M). Each
//! update is the exact minimizer of the mean squared error with the other
//! factor held fixed, so the iteration is an unnormalized power iteration on
//! `r rᵀ` and converges to the leading singular pair.

use ndarray::{Array1, ArrayView1, ArrayView2};
use thiserror::Error;

use crate::rngdist::Rng;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CmdError {
    #[error("residual matrix is identically zero")]
    ZeroResidual,
    #[error("degenerate factor: {0} vanished")]
    DegenerateFactor(&'static str),
    #[error("residual matrix contains non-finite values")]
    NonFinite,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

pub type Result<T> = std::result::Result<T, CmdError>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CmdOptions {
    /// Relative L2 change of the normalized ψ between sweeps.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for CmdOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iter: 10_000,
        }
    }
}

/// One rank-1 factor with `mean(ψ²) = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct CmdResult {
    pub phi: Array1<f64>,
    pub psi: Array1<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub psi_change_final: f64,
    /// Mean square of ψ before normalization.
    pub psi_mean_square: f64,
}

fn mean_square(v: ArrayView1<f64>) -> f64 {
    v.dot(&v) / v.len() as f64
}

/// `Φ_j = mean_i(Ψ_i r_ij) / mean_i(Ψ_i²)`.
pub fn update_phi(r: ArrayView2<f64>, psi: ArrayView1<f64>) -> Result<Array1<f64>> {
    if psi.len() != r.nrows() {
        return Err(CmdError::Dimension(format!(
            "psi has {} entries for {} rows",
            psi.len(),
            r.nrows()
        )));
    }
    let ms = mean_square(psi);
    if ms == 0.0 {
        return Err(CmdError::DegenerateFactor("psi"));
    }
    let n = r.nrows() as f64;
    Ok(r.t().dot(&psi) / (n * ms))
}

/// `Ψ_i = mean_j(Φ_j r_ij) / mean_j(Φ_j²)`.
pub fn update_psi(r: ArrayView2<f64>, phi: ArrayView1<f64>) -> Result<Array1<f64>> {
    if phi.len() != r.ncols() {
        return Err(CmdError::Dimension(format!(
            "phi has {} entries for {} columns",
            phi.len(),
            r.ncols()
        )));
    }
    let ms = mean_square(phi);
    if ms == 0.0 {
        return Err(CmdError::DegenerateFactor("phi"));
    }
    let m = r.ncols() as f64;
    Ok(r.dot(&phi) / (m * ms))
}

fn normalized(psi: &Array1<f64>) -> Array1<f64> {
    psi / mean_square(psi.view()).sqrt()
}

fn relative_change(new: &Array1<f64>, old: &Array1<f64>) -> f64 {
    let diff = new - old;
    (diff.dot(&diff) / old.dot(old)).sqrt()
}

// Seed for the one-off restart; fixed so that restarts stay reproducible.
const RESTART_SEED: u64 = 0x636d_6472;

/// Alternates [`update_phi`] and [`update_psi`] from `ψ = 1` until the
/// normalized ψ stops changing, then rescales so that `mean(ψ²) = 1`.
///
/// If a factor vanishes (ψ orthogonal to every column of `r`) the iteration
/// restarts once from a random ψ. Running out of iterations is not an error;
/// `converged` is false in that case.
pub fn cmd(r: ArrayView2<f64>, options: &CmdOptions) -> Result<CmdResult> {
    if r.nrows() == 0 || r.ncols() == 0 {
        return Err(CmdError::Dimension("empty residual matrix".into()));
    }
    if !r.iter().all(|v| v.is_finite()) {
        return Err(CmdError::NonFinite);
    }
    if r.iter().all(|v| *v == 0.0) {
        return Err(CmdError::ZeroResidual);
    }
    match iterate(r, Array1::ones(r.nrows()), options) {
        Err(CmdError::DegenerateFactor(which)) => {
            log::debug!("cmd: {which} vanished from the ones start, restarting from random psi");
            let mut rng = Rng::new(RESTART_SEED);
            let start = Array1::from_shape_simple_fn(r.nrows(), || rng.standard_normal());
            iterate(r, start, options)
        }
        other => other,
    }
}

// A factor whose RMS is this small relative to the RMS of `r` carries only
// rounding noise, e.g. φ from ψ = 1 once the column means have been removed.
const DEGENERATE_RATIO: f64 = 1e-12;

fn iterate(r: ArrayView2<f64>, start: Array1<f64>, options: &CmdOptions) -> Result<CmdResult> {
    let r_rms = r.iter().map(|v| v * v).sum::<f64>().sqrt() / (r.len() as f64).sqrt();
    let mut psi_n = normalized(&start);
    let mut phi = update_phi(r, psi_n.view())?;
    if mean_square(phi.view()).sqrt() <= DEGENERATE_RATIO * r_rms {
        return Err(CmdError::DegenerateFactor("phi"));
    }
    let mut psi = update_psi(r, phi.view())?;
    let mut change = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < options.max_iter {
        iterations += 1;
        let next = normalized(&psi);
        change = relative_change(&next, &psi_n);
        psi_n = next;
        if change <= options.tol {
            converged = true;
            break;
        }
        phi = update_phi(r, psi_n.view())?;
        psi = update_psi(r, phi.view())?;
    }
    if !converged {
        log::warn!(
            "cmd: no convergence after {} iterations (change {change:e})",
            options.max_iter
        );
    }
    let psi_mean_square = mean_square(psi.view());
    // final consistent pair: φ is the exact update for the returned ψ
    let phi = update_phi(r, psi_n.view())?;
    Ok(CmdResult {
        phi,
        psi: psi_n,
        iterations,
        converged,
        psi_change_final: change,
        psi_mean_square,
    })
}
