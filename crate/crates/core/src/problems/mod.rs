//! Seeded generators for the five benchmark problems.
//!
//! Every generator pairs an input sampler with a deterministic solver.
//! Inputs are drawn from per-realization RNG substreams, so the emitted
//! dataset does not depend on the number of worker threads.

mod beam;
mod heat;
mod nonlinear2d;

pub use beam::{bending_moment, solve_beam};
pub use heat::solve_heat1d;
pub use nonlinear2d::{nonlinear_residual, solve_nonlinear2d, NonlinearSolve, PicardOptions};

use ndarray::{Array1, Array2, ArrayView1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, DatasetMeta, Split};
use crate::error::{Error, Result};
use crate::rngdist::{self, Copula, Dist, KlField, Marginal, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProblemId {
    Ex1,
    Ex2,
    Ex3,
    Ex4,
    Ex5,
}

impl ProblemId {
    pub const ALL: [ProblemId; 5] = [Self::Ex1, Self::Ex2, Self::Ex3, Self::Ex4, Self::Ex5];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Ex1 => "ex1",
            Self::Ex2 => "ex2",
            Self::Ex3 => "ex3",
            Self::Ex4 => "ex4",
            Self::Ex5 => "ex5",
        }
    }
}

impl std::fmt::Display for ProblemId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ProblemId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown problem `{s}` (expected ex1..ex5)")))
    }
}

/// Beam with a random Gaussian-process stiffness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeamParams {
    pub length: f64,
    pub mean_stiffness: f64,
    pub length_scale: f64,
    pub kl_dims: usize,
    /// Distributed load per unit length (negative is downward).
    pub load: f64,
    /// Realizations whose stiffness drops to this value or below are redrawn.
    pub min_stiffness: f64,
    pub max_resamples: usize,
}

impl Default for BeamParams {
    fn default() -> Self {
        Self {
            length: 10.0,
            mean_stiffness: 8.0,
            length_scale: 2.0,
            kl_dims: 7,
            load: -0.005,
            min_stiffness: 0.5,
            max_resamples: 100,
        }
    }
}

/// Nonlinear diffusion on the unit square with a random source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonlinearParams {
    pub length_scale: f64,
    pub kl_dims: usize,
    /// Amplitude of the deterministic source `A sin(5 x1) sin(4 x2)`.
    pub amplitude: f64,
    pub picard: PicardOptions,
}

impl Default for NonlinearParams {
    fn default() -> Self {
        Self {
            length_scale: 0.2,
            kl_dims: 13,
            amplitude: 100.0,
            picard: PicardOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "problem", rename_all = "lowercase")]
pub enum Problem {
    /// `du/dx = ξ x`, `u(0) = 0`.
    Ex1 { dist: Dist },
    /// `d/dx(κ du/dx) = sin(2πx)`, `κ = 1.1 + cos(xξ)`.
    Ex2 { xi: Dist },
    Ex3(BeamParams),
    Ex4(NonlinearParams),
    /// `-(e^{ξ1} u')' = e^{ξ2}`, `u(0) = 0`, `e^{ξ1} u'(1) = 1`.
    Ex5 {
        copula: Copula,
        marginals: [Marginal; 2],
    },
}

impl Problem {
    pub fn id(&self) -> ProblemId {
        match self {
            Problem::Ex1 { .. } => ProblemId::Ex1,
            Problem::Ex2 { .. } => ProblemId::Ex2,
            Problem::Ex3(_) => ProblemId::Ex3,
            Problem::Ex4(_) => ProblemId::Ex4,
            Problem::Ex5 { .. } => ProblemId::Ex5,
        }
    }

    pub fn default_for(id: ProblemId) -> Self {
        match id {
            ProblemId::Ex1 => Problem::Ex1 {
                dist: Dist::Uniform { a: 0.0, b: 1.0 },
            },
            ProblemId::Ex2 => Problem::Ex2 {
                xi: Dist::Uniform { a: 1.0, b: 3.0 },
            },
            ProblemId::Ex3 => Problem::Ex3(BeamParams::default()),
            ProblemId::Ex4 => Problem::Ex4(NonlinearParams::default()),
            ProblemId::Ex5 => Problem::Ex5 {
                copula: Copula::Gaussian {
                    rho: -0.5,
                    sigma: 0.25,
                },
                marginals: [Marginal::Gamma { k: 2.0, theta: 1.0 }, Marginal::STANDARD_NORMAL],
            },
        }
    }

    fn describe(&self) -> String {
        match self {
            Problem::Ex1 { dist } | Problem::Ex2 { xi: dist } => describe_dist(dist),
            Problem::Ex3(p) => format!(
                "gp(mean={}, l_c={}, kl_dims={})",
                p.mean_stiffness, p.length_scale, p.kl_dims
            ),
            Problem::Ex4(p) => format!("gp(mean=0, l_c={}, kl_dims={})", p.length_scale, p.kl_dims),
            Problem::Ex5 { copula, marginals } => match copula {
                Copula::Gaussian { rho, sigma } => format!("gaussian(rho={rho}, sigma={sigma})"),
                Copula::Gumbel { theta } => format!(
                    "gumbel(theta={theta}) x [{}, {}]",
                    describe_marginal(&marginals[0]),
                    describe_marginal(&marginals[1])
                ),
            },
        }
    }
}

fn describe_dist(d: &Dist) -> String {
    match *d {
        Dist::Uniform { a, b } => format!("uniform({a}, {b})"),
        Dist::Normal { mu, sigma } => format!("normal({mu}, {sigma})"),
        Dist::Gamma { k, theta } => format!("gamma({k}, {theta})"),
        Dist::Poisson { lambda } => format!("poisson({lambda})"),
    }
}

fn describe_marginal(m: &Marginal) -> String {
    match *m {
        Marginal::Normal { mu, sigma } => format!("normal({mu}, {sigma})"),
        Marginal::Gamma { k, theta } => format!("gamma({k}, {theta})"),
    }
}

/// Everything needed to regenerate a dataset.
///
/// `grid` is the number of grid points (per side for the 2-D problem).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemConfig {
    pub n: usize,
    pub grid: usize,
    pub seed: u64,
    pub train_fraction: f64,
    #[serde(flatten)]
    pub problem: Problem,
}

impl ProblemConfig {
    /// Default sizes: `N = 1000` on 20/30/51/50 points for ex1/ex2/ex3/ex5,
    /// `N = 5000` on 20x20 nodes for ex4; 70/30 split (80/20 for ex4).
    pub fn default_for(id: ProblemId) -> Self {
        let (n, grid, train_fraction) = match id {
            ProblemId::Ex1 => (1000, 20, 0.7),
            ProblemId::Ex2 => (1000, 30, 0.7),
            ProblemId::Ex3 => (1000, 51, 0.7),
            ProblemId::Ex4 => (5000, 20, 0.8),
            ProblemId::Ex5 => (1000, 50, 0.7),
        };
        Self {
            n,
            grid,
            seed: 0,
            train_fraction,
            problem: Problem::default_for(id),
        }
    }

    pub fn id(&self) -> ProblemId {
        self.problem.id()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Config("n must be positive".into()));
        }
        if self.grid < 3 {
            return Err(Error::Config(format!("grid must have at least 3 points, got {}", self.grid)));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Config(format!(
                "train fraction must lie in (0, 1), got {}",
                self.train_fraction
            )));
        }
        match &self.problem {
            Problem::Ex1 { dist } => dist.validate()?,
            Problem::Ex2 { xi } => xi.validate()?,
            Problem::Ex3(p) => {
                if !(p.length > 0.0 && p.length_scale > 0.0 && p.kl_dims > 0) {
                    return Err(Error::Config(format!("invalid beam parameters {p:?}")));
                }
                if p.kl_dims > self.grid {
                    return Err(Error::Config(format!(
                        "kl_dims {} exceeds the {} grid points",
                        p.kl_dims, self.grid
                    )));
                }
            }
            Problem::Ex4(p) => {
                if !(p.length_scale > 0.0 && p.kl_dims > 0) {
                    return Err(Error::Config(format!("invalid source parameters {p:?}")));
                }
                if p.kl_dims > self.grid * self.grid {
                    return Err(Error::Config(format!(
                        "kl_dims {} exceeds the {} grid nodes",
                        p.kl_dims,
                        self.grid * self.grid
                    )));
                }
                p.picard.validate()?;
            }
            Problem::Ex5 { copula, .. } => match *copula {
                Copula::Gaussian { rho, sigma } => {
                    if !(rho > -1.0 && rho < 1.0 && sigma > 0.0) {
                        return Err(Error::Config(format!("invalid gaussian copula {copula:?}")));
                    }
                }
                Copula::Gumbel { theta } => {
                    if !(theta >= 1.0 && theta.is_finite()) {
                        return Err(Error::Config(format!(
                            "gumbel parameter must be >= 1, got {theta}"
                        )));
                    }
                }
            },
        }
        Ok(())
    }

    /// Grid coordinates, `M x d_x`.
    pub fn grid_points(&self) -> Array2<f64> {
        match &self.problem {
            Problem::Ex3(p) => linspace_column(0.0, p.length, self.grid),
            Problem::Ex4(_) => nonlinear2d::square_nodes(self.grid),
            _ => linspace_column(0.0, 1.0, self.grid),
        }
    }
}

fn linspace_column(a: f64, b: f64, m: usize) -> Array2<f64> {
    let h = (b - a) / (m - 1) as f64;
    Array2::from_shape_fn((m, 1), |(j, _)| if j + 1 == m { b } else { a + h * j as f64 })
}

// RNG stream layout: the split and the sequential input draws each get their
// own stream; realization i of a field problem uses stream REALIZATION + i.
const SPLIT_STREAM: u64 = 1;
const INPUT_STREAM: u64 = 2;
const REALIZATION_STREAM: u64 = 1 << 32;

/// Prepared problem: grid, random-field discretization and solver settings.
pub struct Simulator {
    config: ProblemConfig,
    grid: Array2<f64>,
    field: Option<KlField>,
}

impl Simulator {
    pub fn new(config: &ProblemConfig) -> Result<Self> {
        config.validate()?;
        let grid = config.grid_points();
        let field = match &config.problem {
            Problem::Ex3(p) => Some(KlField::rbf(&grid, p.mean_stiffness, p.length_scale, p.kl_dims)?),
            Problem::Ex4(p) => Some(KlField::rbf(&grid, 0.0, p.length_scale, p.kl_dims)?),
            _ => None,
        };
        Ok(Self {
            config: config.clone(),
            grid,
            field,
        })
    }

    pub fn grid(&self) -> &Array2<f64> {
        &self.grid
    }

    pub fn field(&self) -> Option<&KlField> {
        self.field.as_ref()
    }

    /// Realizations `first .. first + count` drawn from the streams of `seed`:
    /// returns `(xi, values)`.
    ///
    /// Problems with scalar inputs draw them sequentially from one stream, so
    /// ranges must be requested in order starting at 0 for the draws to line
    /// up; `input_rng` carries that state between calls.
    pub fn simulate(
        &self,
        seed: u64,
        input_rng: &mut Rng,
        first: usize,
        count: usize,
    ) -> Result<(Array2<f64>, Array2<f64>)> {
        let x = self.grid.column(0);
        match &self.config.problem {
            Problem::Ex1 { dist } => {
                let xi = rngdist::sample(input_rng, *dist, count)?;
                let values = Array2::from_shape_fn((count, x.len()), |(i, j)| {
                    ex1_solution(xi[i], x[j])
                });
                Ok((xi.insert_axis(ndarray::Axis(1)), values))
            }
            Problem::Ex2 { xi: dist } => {
                let xi = rngdist::sample(input_rng, *dist, count)?;
                let xs = x.to_vec();
                let rows: Vec<Result<Vec<f64>>> = xi
                    .as_slice()
                    .expect("contiguous")
                    .par_iter()
                    .enumerate()
                    .map(|(i, &s)| {
                        solve_heat1d(&xs, |t| ex2_conductivity(t, s), ex2_forcing).map_err(|e| {
                            Error::Solver {
                                realization: first + i,
                                message: e.to_string(),
                            }
                        })
                    })
                    .collect();
                Ok((xi.insert_axis(ndarray::Axis(1)), stack_rows(rows, x.len())?))
            }
            Problem::Ex3(p) => {
                let field = self.field.as_ref().expect("ex3 field");
                let xs = x.to_vec();
                let results: Vec<Result<(Vec<f64>, Vec<f64>)>> = (first..first + count)
                    .into_par_iter()
                    .map(|idx| {
                        let mut rng = Rng::with_stream(seed, REALIZATION_STREAM + idx as u64);
                        let (xi, k) = draw_stiffness(field, p, &mut rng, idx)?;
                        let u = solve_beam(&xs, &k.to_vec(), p.load).map_err(|e| Error::Solver {
                            realization: idx,
                            message: e.to_string(),
                        })?;
                        Ok((xi.to_vec(), u))
                    })
                    .collect();
                split_pairs(results, field.dim(), x.len())
            }
            Problem::Ex4(p) => {
                let field = self.field.as_ref().expect("ex4 field");
                let nodes = self.config.grid;
                let results: Vec<Result<(Vec<f64>, Vec<f64>)>> = (first..first + count)
                    .into_par_iter()
                    .map(|idx| {
                        let mut rng = Rng::with_stream(seed, REALIZATION_STREAM + idx as u64);
                        let xi = Array1::from_shape_simple_fn(field.dim(), || rng.standard_normal());
                        let f = field.realize(xi.view());
                        let sol = solve_nonlinear2d(nodes, p.amplitude, f.view(), &p.picard)
                            .map_err(|e| match e {
                                Error::Solver { message, .. } => Error::Solver {
                                    realization: idx,
                                    message,
                                },
                                other => other,
                            })?;
                        Ok((xi.to_vec(), sol.u.to_vec()))
                    })
                    .collect();
                split_pairs(results, field.dim(), nodes * nodes)
            }
            Problem::Ex5 { copula, marginals } => {
                let xi = rngdist::sample_dependent_pair(
                    input_rng,
                    *copula,
                    (marginals[0], marginals[1]),
                    count,
                )?;
                let values = Array2::from_shape_fn((count, x.len()), |(i, j)| {
                    ex5_solution(xi[[i, 0]], xi[[i, 1]], x[j])
                });
                Ok((xi, values))
            }
        }
    }
}

fn stack_rows(rows: Vec<Result<Vec<f64>>>, m: usize) -> Result<Array2<f64>> {
    let n = rows.len();
    let mut flat = Vec::with_capacity(n * m);
    for r in rows {
        flat.extend(r?);
    }
    Ok(Array2::from_shape_vec((n, m), flat).expect("rows of equal length"))
}

fn split_pairs(
    results: Vec<Result<(Vec<f64>, Vec<f64>)>>,
    d: usize,
    m: usize,
) -> Result<(Array2<f64>, Array2<f64>)> {
    let n = results.len();
    let mut xi = Vec::with_capacity(n * d);
    let mut values = Vec::with_capacity(n * m);
    for r in results {
        let (a, b) = r?;
        xi.extend(a);
        values.extend(b);
    }
    Ok((
        Array2::from_shape_vec((n, d), xi).expect("xi rows"),
        Array2::from_shape_vec((n, m), values).expect("value rows"),
    ))
}

fn draw_stiffness(
    field: &KlField,
    p: &BeamParams,
    rng: &mut Rng,
    realization: usize,
) -> Result<(Array1<f64>, Array1<f64>)> {
    for attempt in 0..=p.max_resamples {
        let xi = Array1::from_shape_simple_fn(field.dim(), || rng.standard_normal());
        let k = field.realize(xi.view());
        if k.iter().all(|&v| v > p.min_stiffness) {
            if attempt > 0 {
                log::info!("ex3 realization {realization}: stiffness redrawn {attempt} times");
            }
            return Ok((xi, k));
        }
    }
    Err(Error::Solver {
        realization,
        message: format!(
            "stiffness stayed at or below {} after {} redraws",
            p.min_stiffness, p.max_resamples
        ),
    })
}

/// `u(x) = ξ x² / 2`.
pub fn ex1_solution(xi: f64, x: f64) -> f64 {
    0.5 * xi * x * x
}

pub fn ex2_conductivity(x: f64, xi: f64) -> f64 {
    1.1 + (x * xi).cos()
}

pub fn ex2_forcing(x: f64) -> f64 {
    (2.0 * std::f64::consts::PI * x).sin()
}

/// `u(x) = e^{-ξ1} (x + e^{ξ2} (x - x²/2))`.
pub fn ex5_solution(xi1: f64, xi2: f64, x: f64) -> f64 {
    (-xi1).exp() * (x + xi2.exp() * (x - 0.5 * x * x))
}

/// Generates the dataset described by `config`.
pub fn generate(config: &ProblemConfig) -> Result<Dataset> {
    let sim = Simulator::new(config)?;
    let base = Rng::new(config.seed);
    let mut input_rng = base.substream(INPUT_STREAM);
    let (xi, values) = sim.simulate(config.seed, &mut input_rng, 0, config.n)?;
    let mut split_rng = base.substream(SPLIT_STREAM);
    let split = Split::random(config.n, config.train_fraction, &mut split_rng)?;
    let meta = DatasetMeta {
        problem: config.id().to_string(),
        seed: config.seed,
        distribution: config.problem.describe(),
        config: Some(config.clone()),
    };
    Dataset::new(sim.grid.clone(), xi, values, split, meta)
}

impl ProblemConfig {
    pub fn with_problem(mut self, problem: Problem) -> Self {
        self.problem = problem;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_n(mut self, n: usize) -> Self {
        self.n = n;
        self
    }
}

/// Pointwise mean and standard deviation of the solution field.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldMoments {
    pub mean: Array1<f64>,
    pub std: Array1<f64>,
    pub samples: usize,
}

/// Monte Carlo moments from `n` fresh realizations drawn with `seed`,
/// accumulated in chunks with Welford's update.
pub fn mc_moments(config: &ProblemConfig, n: usize, seed: u64) -> Result<FieldMoments> {
    const CHUNK: usize = 10_000;
    if n < 2 {
        return Err(Error::Config("Monte Carlo needs at least 2 samples".into()));
    }
    let sim = Simulator::new(config)?;
    let m = sim.grid.nrows();
    let mut input_rng = Rng::new(seed).substream(INPUT_STREAM);
    let mut mean = Array1::<f64>::zeros(m);
    let mut m2 = Array1::<f64>::zeros(m);
    let mut count = 0usize;
    let mut first = 0;
    while first < n {
        let len = CHUNK.min(n - first);
        let (_, values) = sim.simulate(seed, &mut input_rng, first, len)?;
        for row in values.rows() {
            count += 1;
            welford_update(&mut mean, &mut m2, row, count);
        }
        first += len;
    }
    let std = m2.mapv(|v| (v / (count - 1) as f64).sqrt());
    Ok(FieldMoments {
        mean,
        std,
        samples: count,
    })
}

fn welford_update(mean: &mut Array1<f64>, m2: &mut Array1<f64>, row: ArrayView1<f64>, count: usize) {
    let c = count as f64;
    for ((mu, s), &v) in mean.iter_mut().zip(m2.iter_mut()).zip(row) {
        let delta = v - *mu;
        *mu += delta / c;
        *s += delta * (v - *mu);
    }
}
