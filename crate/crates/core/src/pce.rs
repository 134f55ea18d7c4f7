//! Regression polynomial chaos baseline.
//!
//! Multivariate bases are tensor products of orthonormal univariate
//! polynomials with total degree at most `n`. Coefficients are fitted by least
//! squares on flattened `(x, ξ) → u` pairs, the spatial coordinates being
//! treated as extra uniform inputs.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::io::fmt_float;
use crate::linalg::lstsq_view;
use crate::problems::{Problem, ProblemConfig};
use crate::rngdist::Dist;

/// Highest degree the recurrences are evaluated to.
pub const MAX_DEGREE: usize = 50;

/// `binomial(d + n, n)`, the size of the total-degree basis.
pub fn count_terms(d: usize, n: usize) -> Result<u64> {
    if d == 0 {
        return Err(Error::Range("dimension must be at least 1".into()));
    }
    let mut c: u128 = 1;
    for i in 1..=n as u128 {
        // c * (d + i) / i is exact: it is binomial(d + i, i)
        c = c
            .checked_mul(d as u128 + i)
            .map(|v| v / i)
            .filter(|v| *v <= i64::MAX as u128)
            .ok_or_else(|| Error::Range(format!("count_terms({d}, {n}) overflows")))?;
    }
    Ok(c as u64)
}

/// Total-degree multi-indices in graded lexicographic order: by total degree,
/// then by decreasing first component, then second, and so on.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MultiIndexSet {
    pub d: usize,
    pub n: usize,
    pub indices: Vec<Vec<usize>>,
}

impl MultiIndexSet {
    pub fn new(d: usize, n: usize) -> Result<Self> {
        let count = count_terms(d, n)?;
        if n > MAX_DEGREE {
            return Err(Error::Range(format!("degree {n} above {MAX_DEGREE}")));
        }
        let mut indices = Vec::with_capacity(usize::try_from(count).unwrap_or(0));
        let mut current = vec![0; d];
        for total in 0..=n {
            fill(&mut current, 0, total, &mut indices);
        }
        Ok(Self { d, n, indices })
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

fn fill(current: &mut [usize], pos: usize, remaining: usize, out: &mut Vec<Vec<usize>>) {
    if pos + 1 == current.len() {
        current[pos] = remaining;
        out.push(current.to_vec());
        return;
    }
    for k in (0..=remaining).rev() {
        current[pos] = k;
        fill(current, pos + 1, remaining - k, out);
    }
    current[pos] = 0;
}

/// Univariate orthonormal family and the input law it is orthonormal under.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum Family {
    /// Legendre polynomials under uniform(a, b).
    Legendre { a: f64, b: f64 },
    /// Probabilists' Hermite polynomials under normal(mu, sigma).
    Hermite {
        #[serde(default)]
        mu: f64,
        #[serde(default = "one")]
        sigma: f64,
    },
}

fn one() -> f64 {
    1.0
}

impl Family {
    pub const STANDARD_HERMITE: Family = Family::Hermite { mu: 0.0, sigma: 1.0 };

    fn standardize(&self, t: f64) -> f64 {
        match *self {
            Family::Legendre { a, b } => 2.0 * (t - a) / (b - a) - 1.0,
            Family::Hermite { mu, sigma } => (t - mu) / sigma,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Family::Legendre { a, b } => a.is_finite() && b.is_finite() && b > a,
            Family::Hermite { mu, sigma } => mu.is_finite() && sigma.is_finite() && sigma > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid polynomial family {self:?}")))
        }
    }

    /// Orthonormal polynomials of degrees `0..=n` at `t`.
    pub fn eval_all(&self, n: usize, t: f64) -> Result<Vec<f64>> {
        if n > MAX_DEGREE {
            return Err(Error::Range(format!("degree {n} above {MAX_DEGREE}")));
        }
        let s = self.standardize(t);
        let mut out = Vec::with_capacity(n + 1);
        match self {
            Family::Legendre { .. } => {
                let (mut prev, mut cur) = (0.0, 1.0);
                for k in 0..=n {
                    out.push(cur * ((2 * k + 1) as f64).sqrt());
                    let next = ((2 * k + 1) as f64 * s * cur - k as f64 * prev) / (k + 1) as f64;
                    prev = cur;
                    cur = next;
                }
            }
            Family::Hermite { .. } => {
                // normalized recurrence: h_{k+1} = (s h_k - √k h_{k-1}) / √(k+1)
                let (mut prev, mut cur) = (0.0, 1.0);
                for k in 0..=n {
                    out.push(cur);
                    let next = (s * cur - (k as f64).sqrt() * prev) / ((k + 1) as f64).sqrt();
                    prev = cur;
                    cur = next;
                }
            }
        }
        Ok(out)
    }

    fn in_support(&self, t: f64) -> bool {
        match *self {
            Family::Legendre { a, b } => {
                let slack = 1e-12 * (b - a);
                t >= a - slack && t <= b + slack
            }
            Family::Hermite { .. } => t.is_finite(),
        }
    }
}

/// Orthonormal polynomial of degree `k` of `family` at `t`.
pub fn eval_orthonormal(family: Family, k: usize, t: f64) -> Result<f64> {
    Ok(family.eval_all(k, t)?[k])
}

/// Design matrix with entry `(i, p) = Π_m ψ_{α_p[m]}(samples[i, m])`.
///
/// Samples outside a Legendre interval are evaluated anyway, with a warning.
pub fn build_design(set: &MultiIndexSet, families: &[Family], samples: ArrayView2<f64>) -> Result<Array2<f64>> {
    if families.len() != set.d || samples.ncols() != set.d {
        return Err(Error::Config(format!(
            "{} families and {}-column samples for a {}-dimensional basis",
            families.len(),
            samples.ncols(),
            set.d
        )));
    }
    for f in families {
        f.validate()?;
    }
    let outside = samples
        .rows()
        .into_iter()
        .filter(|row| row.iter().zip(families).any(|(t, f)| !f.in_support(*t)))
        .count();
    if outside > 0 {
        log::warn!("{outside} samples lie outside the support of their polynomial family");
    }
    let p = set.len();
    let mut data = vec![0.0; samples.nrows() * p];
    data.par_chunks_mut(p.max(1))
        .enumerate()
        .try_for_each(|(i, out)| -> Result<()> {
            let tables = samples
                .row(i)
                .iter()
                .zip(families)
                .map(|(t, f)| f.eval_all(set.n, *t))
                .collect::<Result<Vec<_>>>()?;
            for (o, alpha) in out.iter_mut().zip(&set.indices) {
                *o = alpha.iter().zip(&tables).map(|(k, tab)| tab[*k]).product();
            }
            Ok(())
        })?;
    Ok(Array2::from_shape_vec((samples.nrows(), p), data).expect("shape matches"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PceModel {
    pub families: Vec<Family>,
    pub degree: usize,
    pub indices: Vec<Vec<usize>>,
    #[serde(with = "crate::io::vector")]
    pub coeffs: Array1<f64>,
    /// Leading input dimensions that are spatial coordinates.
    #[serde(default)]
    pub spatial_dims: usize,
}

impl PceModel {
    fn index_set(&self) -> MultiIndexSet {
        MultiIndexSet {
            d: self.families.len(),
            n: self.degree,
            indices: self.indices.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.indices.len() != self.coeffs.len() {
            return Err(Error::Model(format!(
                "{} indices and {} coefficients",
                self.indices.len(),
                self.coeffs.len()
            )));
        }
        if self.spatial_dims > self.families.len() {
            return Err(Error::Model("more spatial dimensions than inputs".into()));
        }
        for alpha in &self.indices {
            if alpha.len() != self.families.len() || alpha.iter().sum::<usize>() > self.degree {
                return Err(Error::Model(format!("multi-index {alpha:?} out of range")));
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self).map_err(|e| Error::Model(e.to_string()))?;
        std::fs::write(path, text + "\n").map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let de = &mut serde_json::Deserializer::from_str(&text);
        let model: Self = serde_path_to_error::deserialize(de).map_err(|e| Error::Schema {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        model.validate()?;
        Ok(model)
    }
}

/// Least-squares fit of a total-degree basis to `targets` at `inputs`.
pub fn pce_fit_points(
    inputs: ArrayView2<f64>,
    targets: ArrayView1<f64>,
    families: &[Family],
    degree: usize,
) -> Result<PceModel> {
    let set = MultiIndexSet::new(families.len(), degree)?;
    let design = build_design(&set, families, inputs)?;
    let coeffs = lstsq_view(design.view(), targets)?;
    Ok(PceModel {
        families: families.to_vec(),
        degree,
        indices: set.indices,
        coeffs,
        spatial_dims: 0,
    })
}

/// Flattens the given rows of a dataset into `(x, ξ)` inputs, row-major over
/// (sample, grid point), with the matching values.
pub fn flatten_pairs(dataset: &Dataset, rows: &[usize]) -> (Array2<f64>, Array1<f64>) {
    let (m, dx, dxi) = (dataset.m(), dataset.dim_x(), dataset.dim_xi());
    let mut inputs = Array2::zeros((rows.len() * m, dx + dxi));
    let mut targets = Array1::zeros(rows.len() * m);
    for (r, &i) in rows.iter().enumerate() {
        for j in 0..m {
            let k = r * m + j;
            let mut row = inputs.row_mut(k);
            for c in 0..dx {
                row[c] = dataset.grid[[j, c]];
            }
            for c in 0..dxi {
                row[dx + c] = dataset.xi[[i, c]];
            }
            targets[k] = dataset.values[[i, j]];
        }
    }
    (inputs, targets)
}

/// Legendre families spanning the bounding box of the grid.
pub fn spatial_families(dataset: &Dataset) -> Vec<Family> {
    dataset
        .grid
        .columns()
        .into_iter()
        .map(|c| Family::Legendre {
            a: c.iter().copied().fold(f64::INFINITY, f64::min),
            b: c.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        })
        .collect()
}

/// Families matching the random inputs of a problem: Legendre for uniform
/// inputs, Hermite for normal inputs and Gaussian field coefficients.
pub fn input_families(config: &ProblemConfig) -> Result<Vec<Family>> {
    let unsupported = |what: &str| Err(Error::Config(format!("no polynomial family for {what} inputs")));
    match &config.problem {
        Problem::Ex1 { dist } | Problem::Ex2 { xi: dist } => match *dist {
            Dist::Uniform { a, b } => Ok(vec![Family::Legendre { a, b }]),
            Dist::Normal { mu, sigma } => Ok(vec![Family::Hermite { mu, sigma }]),
            Dist::Gamma { .. } => unsupported("gamma"),
            Dist::Poisson { .. } => unsupported("Poisson"),
        },
        Problem::Ex3(p) => Ok(vec![Family::STANDARD_HERMITE; p.kl_dims]),
        Problem::Ex4(p) => Ok(vec![Family::STANDARD_HERMITE; p.kl_dims]),
        Problem::Ex5 { .. } => unsupported("dependent"),
    }
}

/// Fits a PCE in `(x, ξ)` to the training rows of `dataset`.
pub fn pce_fit(dataset: &Dataset, degree: usize, xi_families: &[Family]) -> Result<PceModel> {
    if xi_families.len() != dataset.dim_xi() {
        return Err(Error::Config(format!(
            "{} families for {} random inputs",
            xi_families.len(),
            dataset.dim_xi()
        )));
    }
    let (inputs, targets) = flatten_pairs(dataset, &dataset.split.train);
    let mut families = spatial_families(dataset);
    families.extend_from_slice(xi_families);
    let mut model = pce_fit_points(inputs.view(), targets.view(), &families, degree)?;
    model.spatial_dims = dataset.dim_x();
    Ok(model)
}

/// Model values at `points`, one row per point.
pub fn pce_predict(model: &PceModel, points: ArrayView2<f64>) -> Result<Array1<f64>> {
    model.validate()?;
    Ok(build_design(&model.index_set(), &model.families, points)?.dot(&model.coeffs))
}

/// Mean and variance over all inputs: the constant coefficient and the sum of
/// the other squared coefficients.
pub fn pce_moments(model: &PceModel) -> (f64, f64) {
    let mut mean = 0.0;
    let mut var = 0.0;
    for (alpha, c) in model.indices.iter().zip(&model.coeffs) {
        if alpha.iter().all(|k| *k == 0) {
            mean += c;
        } else {
            var += c * c;
        }
    }
    (mean, var)
}

/// Mean and variance over the random inputs at each spatial point of `grid`.
///
/// Coefficients sharing a random-input index are summed with their spatial
/// polynomials evaluated at the point; the zero index gives the mean and the
/// others the variance.
pub fn pce_field_moments(model: &PceModel, grid: ArrayView2<f64>) -> Result<(Array1<f64>, Array1<f64>)> {
    model.validate()?;
    let s = model.spatial_dims;
    if grid.ncols() != s {
        return Err(Error::Config(format!("{}-column grid for {s} spatial dimensions", grid.ncols())));
    }
    let mut groups: Vec<(&[usize], Vec<usize>)> = Vec::new();
    for (p, alpha) in model.indices.iter().enumerate() {
        let key = &alpha[s..];
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, members)) => members.push(p),
            None => groups.push((key, vec![p])),
        }
    }
    let mut mean = Array1::zeros(grid.nrows());
    let mut var = Array1::zeros(grid.nrows());
    for (j, x) in grid.rows().into_iter().enumerate() {
        let tables = x
            .iter()
            .zip(&model.families[..s])
            .map(|(t, f)| f.eval_all(model.degree, *t))
            .collect::<Result<Vec<_>>>()?;
        for (key, members) in &groups {
            let c: f64 = members
                .iter()
                .map(|&p| {
                    let spatial: f64 = model.indices[p][..s]
                        .iter()
                        .zip(&tables)
                        .map(|(k, tab)| tab[*k])
                        .product();
                    model.coeffs[p] * spatial
                })
                .sum();
            if key.iter().all(|k| *k == 0) {
                mean[j] += c;
            } else {
                var[j] += c * c;
            }
        }
    }
    Ok((mean, var))
}

/// 1-D Legendre least-squares fit with `terms` polynomials (degrees
/// `0..terms`) on uniform(a, b); returns the coefficients and the fit MSE.
pub fn legendre_fit_1d(
    samples: ArrayView1<f64>,
    targets: ArrayView1<f64>,
    terms: usize,
    a: f64,
    b: f64,
) -> Result<(Array1<f64>, f64)> {
    if terms == 0 {
        return Err(Error::Config("at least one Legendre term is needed".into()));
    }
    let family = Family::Legendre { a, b };
    let inputs = samples.insert_axis(Axis(1));
    let model = pce_fit_points(inputs, targets, &[family], terms - 1)?;
    let pred = pce_predict(&model, inputs)?;
    let mse = (&pred - &targets).mapv(|v| v * v).mean().unwrap_or(0.0);
    Ok((model.coeffs, mse))
}

/// One row of the PCE comparison table; empty cells mark a failed fit.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub degree: String,
    pub basis_count: Option<u64>,
    pub train_mse: Option<f64>,
    pub test_mse: Option<f64>,
}

pub fn comparison_csv(rows: &[ComparisonRow]) -> String {
    let cell = |v: Option<String>| v.unwrap_or_default();
    let mut out = String::from("degree,basis_count,train_mse,test_mse\n");
    for r in rows {
        writeln!(
            out,
            "{},{},{},{}",
            r.degree,
            cell(r.basis_count.map(|v| v.to_string())),
            cell(r.train_mse.map(fmt_float)),
            cell(r.test_mse.map(fmt_float))
        )
        .expect("write to string");
    }
    out
}

/// Fits degrees `degrees` to the training rows and reports flattened train
/// and test MSE per degree. Failed fits produce rows with empty errors.
pub fn compare_degrees(
    dataset: &Dataset,
    xi_families: &[Family],
    degrees: std::ops::RangeInclusive<usize>,
) -> Result<Vec<ComparisonRow>> {
    let d = dataset.dim_x() + xi_families.len();
    let (test_inputs, test_targets) = flatten_pairs(dataset, &dataset.split.test);
    let mut rows = Vec::new();
    for n in degrees {
        let basis_count = count_terms(d, n)?;
        let row = match pce_fit(dataset, n, xi_families) {
            Ok(model) => {
                let (train_inputs, train_targets) = flatten_pairs(dataset, &dataset.split.train);
                let mse = |inputs: &Array2<f64>, targets: &Array1<f64>| -> Result<f64> {
                    let pred = pce_predict(&model, inputs.view())?;
                    Ok((pred - targets).mapv(|v| v * v).mean().unwrap_or(0.0))
                };
                ComparisonRow {
                    degree: n.to_string(),
                    basis_count: Some(basis_count),
                    train_mse: Some(mse(&train_inputs, &train_targets)?),
                    test_mse: if test_targets.is_empty() {
                        None
                    } else {
                        Some(mse(&test_inputs, &test_targets)?)
                    },
                }
            }
            Err(e) => {
                log::error!("degree {n}: {e}");
                ComparisonRow {
                    degree: n.to_string(),
                    basis_count: Some(basis_count),
                    train_mse: None,
                    test_mse: None,
                }
            }
        };
        rows.push(row);
    }
    Ok(rows)
}
