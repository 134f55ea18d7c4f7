//! Small fully connected regression networks used as basis functions.
//!
//! Networks map `input_dim` reals to one real. Hidden layers use ELU, ReLU or
//! sine activations (SIREN); the output layer is affine. Inputs are
//! standardized with statistics stored alongside the weights and the output
//! is passed through a fixed affine map, so a trained network can be
//! evaluated on raw coordinates.

mod adam;
mod train;

pub use adam::AdamState;
pub use train::{train_regression, TrainConfig, TrainOutcome};

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rngdist::Rng;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetError {
    #[error("invalid network spec: {0}")]
    InvalidSpec(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("training diverged at epoch {epoch} (loss {loss})")]
    Divergence { epoch: usize, loss: f64 },
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, NetError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Elu,
    Relu,
    Sine,
}

/// Architecture of a scalar-output network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetSpec {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega0: Option<f64>,
}

impl NetSpec {
    pub fn mlp(input_dim: usize, hidden: &[usize], activation: Activation) -> Self {
        Self {
            input_dim,
            hidden: hidden.to_vec(),
            activation,
            omega0: None,
        }
    }

    pub fn siren(input_dim: usize, hidden: &[usize], omega0: f64) -> Self {
        Self {
            input_dim,
            hidden: hidden.to_vec(),
            activation: Activation::Sine,
            omega0: Some(omega0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(NetError::InvalidSpec("input_dim must be positive".into()));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(NetError::InvalidSpec(
                "hidden layer widths must be nonempty and positive".into(),
            ));
        }
        match (self.activation, self.omega0) {
            (Activation::Sine, None) => Err(NetError::InvalidSpec(
                "sine activation requires omega0".into(),
            )),
            (Activation::Sine, Some(w)) if !(w > 0.0 && w.is_finite()) => Err(
                NetError::InvalidSpec(format!("omega0 must be positive, got {w}")),
            ),
            (Activation::Elu | Activation::Relu, Some(_)) => Err(NetError::InvalidSpec(
                "omega0 only applies to sine activation".into(),
            )),
            _ => Ok(()),
        }
    }

    /// `(fan_in, fan_out)` for every layer including the output layer.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut dims = vec![self.input_dim];
        dims.extend(&self.hidden);
        dims.push(1);
        dims.windows(2).map(|w| (w[0], w[1])).collect()
    }

    fn omega(&self) -> f64 {
        self.omega0.unwrap_or(1.0)
    }
}

/// One affine layer; `w` is `fan_out x fan_in`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    #[serde(with = "crate::io::matrix")]
    pub w: Array2<f64>,
    #[serde(with = "crate::io::vector")]
    pub b: Array1<f64>,
}

/// Weights and biases for every layer. Also used as the gradient container.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NetParams {
    pub layers: Vec<Layer>,
}

impl NetParams {
    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| Layer {
                    w: Array2::zeros(l.w.raw_dim()),
                    b: Array1::zeros(l.b.len()),
                })
                .collect(),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(|l| l.w.iter().chain(l.b.iter()))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.w.iter_mut().chain(l.b.iter_mut()))
    }

    pub fn len(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn max_abs(&self) -> f64 {
        self.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    fn check_shapes(&self, spec: &NetSpec) -> Result<()> {
        let shapes = spec.layer_shapes();
        if shapes.len() != self.layers.len() {
            return Err(NetError::Shape(format!(
                "spec has {} layers, parameters have {}",
                shapes.len(),
                self.layers.len()
            )));
        }
        for (k, ((fan_in, fan_out), layer)) in shapes.iter().zip(&self.layers).enumerate() {
            if layer.w.dim() != (*fan_out, *fan_in) || layer.b.len() != *fan_out {
                return Err(NetError::Shape(format!(
                    "layer {k}: expected {fan_out}x{fan_in}, got {:?} with bias {}",
                    layer.w.dim(),
                    layer.b.len()
                )));
            }
        }
        if !self.iter().all(|v| v.is_finite()) {
            return Err(NetError::Shape("parameters contain non-finite values".into()));
        }
        Ok(())
    }
}

/// Random initialization.
///
/// ELU/ReLU layers draw weights and biases from `U(-1/√fan_in, 1/√fan_in)`.
/// SIREN: the first layer's weights come from `U(-1/fan_in, 1/fan_in)` (the
/// forward pass multiplies by `omega0`), later weights from
/// `U(-√(6/fan_in)/omega0, √(6/fan_in)/omega0)`; biases follow the ELU rule.
pub fn init(spec: &NetSpec, rng: &mut Rng) -> Result<NetParams> {
    spec.validate()?;
    let omega = spec.omega();
    let layers = spec
        .layer_shapes()
        .into_iter()
        .enumerate()
        .map(|(k, (fan_in, fan_out))| {
            let fan = fan_in as f64;
            let w_bound = match spec.activation {
                Activation::Sine if k == 0 => 1.0 / fan,
                Activation::Sine => (6.0 / fan).sqrt() / omega,
                _ => 1.0 / fan.sqrt(),
            };
            let b_bound = 1.0 / fan.sqrt();
            let w = Array2::from_shape_simple_fn((fan_out, fan_in), || {
                w_bound * (2.0 * rng.uniform() - 1.0)
            });
            let b = Array1::from_shape_simple_fn(fan_out, || b_bound * (2.0 * rng.uniform() - 1.0));
            Layer { w, b }
        })
        .collect();
    Ok(NetParams { layers })
}

/// Affine input map `z = (x - mean) / scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            scale: vec![1.0; dim],
        }
    }

    /// Column statistics of `inputs`; zero-variance columns keep unit scale.
    pub fn fit(inputs: ArrayView2<f64>) -> Self {
        let n = inputs.nrows().max(1) as f64;
        let mut mean = Vec::with_capacity(inputs.ncols());
        let mut scale = Vec::with_capacity(inputs.ncols());
        for col in inputs.columns() {
            let m = col.sum() / n;
            let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
            mean.push(m);
            scale.push(if var > 0.0 { var.sqrt() } else { 1.0 });
        }
        Self { mean, scale }
    }

    fn apply(&self, inputs: ArrayView2<f64>) -> Array2<f64> {
        let mut z = inputs.to_owned();
        for (j, mut col) in z.columns_mut().into_iter().enumerate() {
            let (m, s) = (self.mean[j], self.scale[j]);
            col.mapv_inplace(|v| (v - m) / s);
        }
        z
    }
}

/// Affine output map `y = shift + scale * raw`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutputMap {
    pub shift: f64,
    pub scale: f64,
}

impl Default for OutputMap {
    fn default() -> Self {
        Self {
            shift: 0.0,
            scale: 1.0,
        }
    }
}

/// A network together with its input and output maps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisNetwork {
    pub spec: NetSpec,
    pub standardizer: Standardizer,
    #[serde(default)]
    pub output: OutputMap,
    #[serde(rename = "layers")]
    pub params: NetParams,
}

/// Intermediate values kept by [`BasisNetwork::forward_cached`] for backprop.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Input to each layer (standardized inputs first).
    inputs: Vec<Array2<f64>>,
    /// Pre-activation of each hidden layer, after the omega0 factor.
    pre: Vec<Array2<f64>>,
}

fn activate(act: Activation, x: f64) -> f64 {
    match act {
        Activation::Elu => {
            if x > 0.0 {
                x
            } else {
                x.exp_m1()
            }
        }
        Activation::Relu => x.max(0.0),
        Activation::Sine => x.sin(),
    }
}

fn activate_grad(act: Activation, x: f64) -> f64 {
    match act {
        Activation::Elu => {
            if x > 0.0 {
                1.0
            } else {
                x.exp()
            }
        }
        Activation::Relu => {
            if x > 0.0 {
                1.0
            } else {
                0.0
            }
        }
        Activation::Sine => x.cos(),
    }
}

impl BasisNetwork {
    pub fn new(spec: NetSpec, standardizer: Standardizer, output: OutputMap, params: NetParams) -> Result<Self> {
        spec.validate()?;
        params.check_shapes(&spec)?;
        if standardizer.mean.len() != spec.input_dim || standardizer.scale.len() != spec.input_dim {
            return Err(NetError::Shape(format!(
                "standardizer has {} entries for input_dim {}",
                standardizer.mean.len(),
                spec.input_dim
            )));
        }
        Ok(Self {
            spec,
            standardizer,
            output,
            params,
        })
    }

    /// Freshly initialized network with identity input/output maps.
    pub fn init(spec: NetSpec, rng: &mut Rng) -> Result<Self> {
        let params = init(&spec, rng)?;
        let standardizer = Standardizer::identity(spec.input_dim);
        Self::new(spec, standardizer, OutputMap::default(), params)
    }

    fn check_inputs(&self, inputs: ArrayView2<f64>) -> Result<()> {
        if inputs.ncols() != self.spec.input_dim {
            return Err(NetError::Shape(format!(
                "network expects {} input columns, got {}",
                self.spec.input_dim,
                inputs.ncols()
            )));
        }
        Ok(())
    }

    /// Evaluates the network on a `batch x input_dim` matrix.
    pub fn forward(&self, inputs: ArrayView2<f64>) -> Result<Array1<f64>> {
        Ok(self.forward_cached(inputs)?.0)
    }

    pub fn forward_cached(&self, inputs: ArrayView2<f64>) -> Result<(Array1<f64>, ForwardCache)> {
        self.check_inputs(inputs)?;
        let act = self.spec.activation;
        let omega = self.spec.omega();
        let n_layers = self.params.layers.len();
        let mut h = self.standardizer.apply(inputs);
        let mut cache = ForwardCache {
            inputs: Vec::with_capacity(n_layers),
            pre: Vec::with_capacity(n_layers - 1),
        };
        for (k, layer) in self.params.layers.iter().enumerate() {
            let mut a = h.dot(&layer.w.t());
            a += &layer.b;
            cache.inputs.push(h);
            if k + 1 == n_layers {
                let raw = a.index_axis_move(Axis(1), 0);
                let out = raw.mapv(|v| self.output.shift + self.output.scale * v);
                return Ok((out, cache));
            }
            if act == Activation::Sine && k == 0 {
                a.mapv_inplace(|v| omega * v);
            }
            h = a.mapv(|v| activate(act, v));
            cache.pre.push(a);
        }
        unreachable!("network has an output layer")
    }

    /// Gradient of `Σ_i dout[i] * out[i]` with respect to the parameters.
    pub fn backward(&self, cache: &ForwardCache, dout: &Array1<f64>) -> NetParams {
        let act = self.spec.activation;
        let omega = self.spec.omega();
        let n_layers = self.params.layers.len();
        let mut grads = self.params.zeros_like();
        // gradient w.r.t. the current layer's pre-activation (batch x fan_out)
        let mut delta = (dout * self.output.scale).insert_axis(Axis(1));
        for k in (0..n_layers).rev() {
            let input = &cache.inputs[k];
            grads.layers[k].w = delta.t().dot(input);
            grads.layers[k].b = delta.sum_axis(Axis(0));
            if k == 0 {
                break;
            }
            let mut dh = delta.dot(&self.params.layers[k].w);
            let pre = &cache.pre[k - 1];
            let first_sine = act == Activation::Sine && k - 1 == 0;
            ndarray::Zip::from(&mut dh).and(pre).for_each(|d, &p| {
                *d *= activate_grad(act, p);
                if first_sine {
                    *d *= omega;
                }
            });
            delta = dh;
        }
        grads
    }

    /// Mean squared error over the batch and its exact gradient.
    pub fn grad_mse(
        &self,
        inputs: ArrayView2<f64>,
        targets: &Array1<f64>,
    ) -> Result<(NetParams, f64)> {
        if inputs.nrows() != targets.len() {
            return Err(NetError::Shape(format!(
                "{} inputs but {} targets",
                inputs.nrows(),
                targets.len()
            )));
        }
        let (out, cache) = self.forward_cached(inputs)?;
        let n = targets.len().max(1) as f64;
        let resid = &out - targets;
        let loss = resid.iter().map(|r| r * r).sum::<f64>() / n;
        let dout = resid * (2.0 / n);
        Ok((self.backward(&cache, &dout), loss))
    }

    /// Multiplies the output map by `factor`.
    pub fn rescale_output(&mut self, factor: f64) {
        self.output.shift *= factor;
        self.output.scale *= factor;
    }
}
