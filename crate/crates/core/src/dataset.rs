use std::path::Path;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;
use crate::problems::ProblemConfig;
use crate::rngdist::Rng;

/// Disjoint 0-based row indices, each list sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    /// Every row in the training set.
    pub fn all_train(n: usize) -> Self {
        Self {
            train: (0..n).collect(),
            test: Vec::new(),
        }
    }

    /// Random split with `round(train_fraction * n)` training rows.
    pub fn random(n: usize, train_fraction: f64, rng: &mut Rng) -> Result<Self> {
        if !(train_fraction > 0.0 && train_fraction < 1.0) {
            return Err(Error::Config(format!(
                "train fraction must lie in (0, 1), got {train_fraction}"
            )));
        }
        let n_train = (train_fraction * n as f64).round() as usize;
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        let mut train = order[..n_train].to_vec();
        let mut test = order[n_train..].to_vec();
        train.sort_unstable();
        test.sort_unstable();
        Ok(Self { train, test })
    }

    fn validate(&self, n: usize) -> Result<()> {
        let mut seen = vec![false; n];
        for &i in self.train.iter().chain(&self.test) {
            if i >= n {
                return Err(Error::Dataset(format!("split index {i} out of range for {n} rows")));
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::Dataset(format!("row {i} appears twice in the split")));
            }
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(Error::Dataset(format!("row {i} is in neither split")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub problem: String,
    pub seed: u64,
    pub distribution: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<ProblemConfig>,
}

/// `N` realizations of a process sampled on `M` grid points.
///
/// `grid` is `M x d_x`, `xi` is `N x d_xi` and `values` is `N x M`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    #[serde(with = "io::version")]
    version: (),
    #[serde(with = "io::matrix")]
    pub grid: Array2<f64>,
    #[serde(with = "io::matrix")]
    pub xi: Array2<f64>,
    #[serde(with = "io::matrix")]
    pub values: Array2<f64>,
    pub split: Split,
    pub meta: DatasetMeta,
}

impl Dataset {
    pub fn new(
        grid: Array2<f64>,
        xi: Array2<f64>,
        values: Array2<f64>,
        split: Split,
        meta: DatasetMeta,
    ) -> Result<Self> {
        let ds = Self {
            version: (),
            grid,
            xi,
            values,
            split,
            meta,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        let (n, m) = self.values.dim();
        if self.xi.nrows() != n {
            return Err(Error::Dataset(format!(
                "values have {n} rows but xi has {}",
                self.xi.nrows()
            )));
        }
        if self.grid.nrows() != m {
            return Err(Error::Dataset(format!(
                "values have {m} columns but the grid has {} points",
                self.grid.nrows()
            )));
        }
        if self.grid.ncols() == 0 {
            return Err(Error::Dataset("grid points have no coordinates".into()));
        }
        for (name, arr) in [("grid", &self.grid), ("xi", &self.xi), ("values", &self.values)] {
            if let Some(pos) = arr.indexed_iter().find(|(_, v)| !v.is_finite()).map(|(p, _)| p) {
                return Err(Error::Dataset(format!("{name}{pos:?} is not finite")));
            }
        }
        self.split.validate(n)
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn m(&self) -> usize {
        self.values.ncols()
    }

    pub fn dim_x(&self) -> usize {
        self.grid.ncols()
    }

    pub fn dim_xi(&self) -> usize {
        self.xi.ncols()
    }

    pub fn train_values(&self) -> Array2<f64> {
        self.values.select(Axis(0), &self.split.train)
    }

    pub fn test_values(&self) -> Array2<f64> {
        self.values.select(Axis(0), &self.split.test)
    }

    pub fn train_xi(&self) -> Array2<f64> {
        self.xi.select(Axis(0), &self.split.train)
    }

    pub fn test_xi(&self) -> Array2<f64> {
        self.xi.select(Axis(0), &self.split.test)
    }

    /// Copy restricted to the first `n_train` training rows (and all test
    /// rows), for data-size ablations.
    pub fn truncate_train(&self, n_train: usize) -> Result<Self> {
        if n_train == 0 || n_train > self.split.train.len() {
            return Err(Error::Config(format!(
                "cannot keep {n_train} of {} training rows",
                self.split.train.len()
            )));
        }
        let mut rows: Vec<usize> = self.split.train[..n_train].to_vec();
        rows.extend(&self.split.test);
        let train = (0..n_train).collect();
        let test = (n_train..rows.len()).collect();
        Self::new(
            self.grid.clone(),
            self.xi.select(Axis(0), &rows),
            self.values.select(Axis(0), &rows),
            Split { train, test },
            self.meta.clone(),
        )
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io::write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let ds: Self = io::read_json(path)?;
        ds.validate()?;
        Ok(ds)
    }
}
