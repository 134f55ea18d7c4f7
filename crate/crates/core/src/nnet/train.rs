use ndarray::{Array1, ArrayView2};
use serde::{Deserialize, Serialize};

use super::{AdamState, BasisNetwork, NetError, NetSpec, OutputMap, Result, Standardizer};
use crate::rngdist::Rng;

/// Full-batch Adam settings.
///
/// `loss_threshold` is compared against the MSE divided by the target
/// variance (or the raw MSE when the targets are constant).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub loss_threshold: f64,
}

impl TrainConfig {
    pub fn new(learning_rate: f64, max_epochs: usize, loss_threshold: f64) -> Self {
        Self {
            learning_rate,
            max_epochs,
            loss_threshold,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(NetError::InvalidConfig(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(self.loss_threshold >= 0.0) {
            return Err(NetError::InvalidConfig(format!(
                "loss_threshold must be nonnegative, got {}",
                self.loss_threshold
            )));
        }
        Ok(())
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::new(5e-4, 200_000, 5e-4)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub net: BasisNetwork,
    /// Normalized loss of the returned (best-seen) parameters.
    pub loss: f64,
    /// Raw MSE of the returned parameters.
    pub mse: f64,
    /// Number of Adam updates performed.
    pub epochs: usize,
    /// Normalized loss before each update, plus the loss after the last one.
    pub history: Vec<f64>,
}

impl TrainOutcome {
    pub fn converged(&self, config: &TrainConfig) -> bool {
        self.loss <= config.loss_threshold
    }
}

/// Fits a fresh network to `(inputs, targets)` by full-batch Adam.
///
/// Inputs are standardized with their column statistics and the output map is
/// set to the target mean and standard deviation before training starts.
pub fn train_regression(
    spec: &NetSpec,
    inputs: ArrayView2<f64>,
    targets: &Array1<f64>,
    config: &TrainConfig,
    rng: &mut Rng,
) -> Result<TrainOutcome> {
    config.validate()?;
    if inputs.nrows() == 0 {
        return Err(NetError::Shape("empty training batch".into()));
    }
    if inputs.nrows() != targets.len() {
        return Err(NetError::Shape(format!(
            "{} inputs but {} targets",
            inputs.nrows(),
            targets.len()
        )));
    }
    if !targets.iter().all(|t| t.is_finite()) || !inputs.iter().all(|x| x.is_finite()) {
        return Err(NetError::Shape("training data contains non-finite values".into()));
    }

    let n = targets.len() as f64;
    let mean = targets.sum() / n;
    let var = targets.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>() / n;
    let (shift, scale, norm) = if var > 0.0 {
        (mean, var.sqrt(), var)
    } else {
        (0.0, 1.0, 1.0)
    };

    let mut net = BasisNetwork::init(spec.clone(), rng)?;
    net.standardizer = Standardizer::fit(inputs);
    net.output = OutputMap { shift, scale };

    let mut adam = AdamState::new(&net.params);
    let mut best = net.params.clone();
    let mut best_loss = f64::INFINITY;
    let mut history = Vec::new();
    let mut epochs = 0;
    loop {
        let (grads, mse) = net.grad_mse(inputs, targets)?;
        let loss = mse / norm;
        if !loss.is_finite() {
            return Err(NetError::Divergence { epoch: epochs, loss });
        }
        history.push(loss);
        if loss < best_loss {
            best_loss = loss;
            best.clone_from(&net.params);
        }
        if loss <= config.loss_threshold || epochs >= config.max_epochs {
            break;
        }
        adam.step(&mut net.params, &grads, config.learning_rate);
        epochs += 1;
    }
    net.params = best;
    Ok(TrainOutcome {
        net,
        loss: best_loss,
        mse: best_loss * norm,
        epochs,
        history,
    })
}
