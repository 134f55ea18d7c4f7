use std::collections::BTreeMap;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::io;
use crate::nnet::BasisNetwork;

/// How [`SpectralModel::predict`] evaluates the basis functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvalForm {
    /// Exact lookup of the stored vectors; `x` must be a grid point and `ξ`
    /// a training sample.
    DiscreteNearest,
    Network,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Discrete,
    DiscreteContinuous,
    Continuous,
    FixedCosine,
}

/// The mean term `Φ0` (paired with `Ψ0 ≡ 1`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanTerm {
    #[serde(with = "io::vector")]
    pub discrete: ndarray::Array1<f64>,
    #[serde(default)]
    pub net: Option<BasisNetwork>,
}

/// One product `Φ_p(x) Ψ_p(ξ)`.
///
/// `psi_discrete` holds Ψ at the training samples, scaled to unit mean square;
/// `psi_norm` is the root mean square before that scaling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralTerm {
    #[serde(with = "io::vector")]
    pub phi_discrete: Array1<f64>,
    #[serde(with = "io::vector")]
    pub psi_discrete: Array1<f64>,
    #[serde(default)]
    pub phi_net: Option<BasisNetwork>,
    #[serde(default)]
    pub psi_net: Option<BasisNetwork>,
    pub psi_norm: f64,
}

/// Grid and training samples the discrete vectors are attached to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Support {
    #[serde(with = "io::matrix")]
    pub grid: Array2<f64>,
    #[serde(with = "io::matrix")]
    pub xi: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub algorithm: Algorithm,
    pub tolerances: BTreeMap<String, f64>,
    pub seed: Option<u64>,
    /// Training residual MSE after removing the mean (entry 0) and after each
    /// term.
    pub residual_mse: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralModel {
    #[serde(with = "io::version")]
    version: (),
    pub phi0: MeanTerm,
    pub terms: Vec<SpectralTerm>,
    pub support: Support,
    pub provenance: Provenance,
}

// Mean-square tolerance for normalized ψ vectors.
const NORMALIZATION_TOL: f64 = 1e-12;

fn find_row(rows: ArrayView2<f64>, target: &[f64]) -> Option<usize> {
    rows.rows().into_iter().position(|row| {
        row.iter()
            .zip(target)
            .all(|(a, b)| (a - b).abs() <= 1e-12 * b.abs().max(1.0))
    })
}

impl SpectralModel {
    pub fn new(
        phi0: MeanTerm,
        terms: Vec<SpectralTerm>,
        support: Support,
        provenance: Provenance,
    ) -> Result<Self> {
        let model = Self {
            version: (),
            phi0,
            terms,
            support,
            provenance,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.support.grid.nrows();
        let n = self.support.xi.nrows();
        if self.phi0.discrete.len() != m {
            return Err(Error::Model(format!(
                "phi0 has {} entries for {m} grid points",
                self.phi0.discrete.len()
            )));
        }
        for (p, t) in self.terms.iter().enumerate() {
            let p = p + 1;
            if t.phi_discrete.len() != m || t.psi_discrete.len() != n {
                return Err(Error::Model(format!(
                    "term {p}: phi has {} entries (grid {m}), psi has {} (samples {n})",
                    t.phi_discrete.len(),
                    t.psi_discrete.len()
                )));
            }
            if !t.phi_discrete.iter().chain(&t.psi_discrete).all(|v| v.is_finite()) {
                return Err(Error::Model(format!("term {p} has non-finite entries")));
            }
            if n > 0 {
                let ms = t.psi_discrete.dot(&t.psi_discrete) / n as f64;
                if (ms - 1.0).abs() > NORMALIZATION_TOL {
                    return Err(Error::Model(format!(
                        "term {p}: psi mean square is {ms}, expected 1"
                    )));
                }
            }
        }
        let hist = &self.provenance.residual_mse;
        if let Some(first) = hist.first() {
            let slack = 1e-12 * first.abs();
            if let Some(k) = (1..hist.len()).find(|&k| hist[k] > hist[k - 1] + slack) {
                return Err(Error::Model(format!(
                    "residual history increases at term {k}: {} -> {}",
                    hist[k - 1],
                    hist[k]
                )));
            }
        }
        Ok(())
    }

    /// Number of stochastic terms `P` (the mean term is not counted).
    pub fn n_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn has_networks(&self) -> bool {
        self.phi0.net.is_some()
            && self
                .terms
                .iter()
                .all(|t| t.phi_net.is_some() && t.psi_net.is_some())
    }

    fn require_networks(&self) -> Result<()> {
        if self.has_networks() {
            Ok(())
        } else {
            Err(Error::Config(
                "network evaluation requested but the model has no trained networks".into(),
            ))
        }
    }

    /// `Φ0(x) + Σ_p Φ_p(x) Ψ_p(ξ)` at a single point.
    pub fn predict(&self, x: &[f64], xi: &[f64], form: EvalForm) -> Result<f64> {
        if x.len() != self.support.grid.ncols() || xi.len() != self.support.xi.ncols() {
            return Err(Error::Lookup(format!(
                "expected x of length {} and xi of length {}",
                self.support.grid.ncols(),
                self.support.xi.ncols()
            )));
        }
        match form {
            EvalForm::DiscreteNearest => {
                let j = find_row(self.support.grid.view(), x)
                    .ok_or_else(|| Error::Lookup(format!("x = {x:?} is not a grid point")))?;
                let i = find_row(self.support.xi.view(), xi).ok_or_else(|| {
                    Error::Lookup(format!("xi = {xi:?} is not a training sample"))
                })?;
                Ok(self.phi0.discrete[j]
                    + self
                        .terms
                        .iter()
                        .map(|t| t.phi_discrete[j] * t.psi_discrete[i])
                        .sum::<f64>())
            }
            EvalForm::Network => {
                let xs = ArrayView2::from_shape((1, x.len()), x).expect("row vector");
                let xis = ArrayView2::from_shape((1, xi.len()), xi).expect("row vector");
                Ok(self.predict_network(xs, xis)?[[0, 0]])
            }
        }
    }

    /// Network predictions for every pair of `xi` row and `grid` row:
    /// result is `xi.nrows() x grid.nrows()`.
    pub fn predict_network(&self, grid: ArrayView2<f64>, xi: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.require_networks()?;
        let phi0 = self.phi0.net.as_ref().expect("checked").forward(grid)?;
        let mut out = Array2::from_shape_fn((xi.nrows(), grid.nrows()), |(_, j)| phi0[j]);
        for t in &self.terms {
            let phi = t.phi_net.as_ref().expect("checked").forward(grid)?;
            let psi = t.psi_net.as_ref().expect("checked").forward(xi)?;
            add_outer(&mut out, psi.view(), phi.view());
        }
        Ok(out)
    }

    /// `Φ0 + Σ_{p ≤ upto} Ψ_p ⊗ Φ_p` over the training rows, from the
    /// discrete vectors.
    pub fn reconstruct(&self, dataset: &Dataset, upto: usize) -> Result<Array2<f64>> {
        self.check_dataset(dataset)?;
        if upto > self.terms.len() {
            return Err(Error::Range(format!(
                "upto = {upto} exceeds the {} terms of the model",
                self.terms.len()
            )));
        }
        let n = self.support.xi.nrows();
        let mut out = Array2::from_shape_fn((n, self.phi0.discrete.len()), |(_, j)| {
            self.phi0.discrete[j]
        });
        for t in &self.terms[..upto] {
            add_outer(&mut out, t.psi_discrete.view(), t.phi_discrete.view());
        }
        Ok(out)
    }

    /// Training values minus [`reconstruct`](Self::reconstruct).
    pub fn residual(&self, dataset: &Dataset, upto: usize) -> Result<Array2<f64>> {
        Ok(dataset.train_values() - self.reconstruct(dataset, upto)?)
    }

    /// Checks that `dataset` has the grid and training samples the model was
    /// fitted on.
    pub fn check_dataset(&self, dataset: &Dataset) -> Result<()> {
        if dataset.grid != self.support.grid {
            return Err(Error::Dataset(format!(
                "dataset grid ({} x {}) differs from the model grid ({} x {})",
                dataset.grid.nrows(),
                dataset.grid.ncols(),
                self.support.grid.nrows(),
                self.support.grid.ncols()
            )));
        }
        if dataset.xi.ncols() != self.support.xi.ncols()
            || dataset.split.train.len() != self.support.xi.nrows()
        {
            return Err(Error::Dataset(format!(
                "dataset has {} training samples of dimension {}, model expects {} of dimension {}",
                dataset.split.train.len(),
                dataset.xi.ncols(),
                self.support.xi.nrows(),
                self.support.xi.ncols()
            )));
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io::write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let model: Self = io::read_json(path)?;
        model.validate()?;
        Ok(model)
    }
}

/// `out += a ⊗ b`.
pub(crate) fn add_outer(out: &mut Array2<f64>, a: ArrayView1<f64>, b: ArrayView1<f64>) {
    for (mut row, &ai) in out.axis_iter_mut(Axis(0)).zip(a.iter()) {
        row.scaled_add(ai, &b);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{DatasetMeta, Split};
    use ndarray::array;

    fn support() -> Support {
        Support {
            grid: array![[0.0], [0.5], [1.0]],
            xi: array![[1.0], [2.0], [-1.0]],
        }
    }

    fn provenance() -> Provenance {
        Provenance {
            algorithm: Algorithm::Discrete,
            tolerances: BTreeMap::from([("tol".to_string(), 1e-12)]),
            seed: Some(3),
            residual_mse: vec![],
        }
    }

    fn mean_only(value: f64) -> SpectralModel {
        SpectralModel::new(
            MeanTerm {
                discrete: Array1::from_elem(3, value),
                net: None,
            },
            vec![],
            support(),
            provenance(),
        )
        .unwrap()
    }

    fn one_term() -> SpectralModel {
        // Φ1 = x²/2 on the grid, Ψ1 = ξ scaled to unit mean square
        let xi = array![1.0, 2.0, -1.0];
        let rms = (xi.dot(&xi) / 3.0f64).sqrt();
        SpectralModel::new(
            MeanTerm {
                discrete: Array1::zeros(3),
                net: None,
            },
            vec![SpectralTerm {
                phi_discrete: array![0.0, 0.125, 0.5] * rms,
                psi_discrete: xi / rms,
                phi_net: None,
                psi_net: None,
                psi_norm: rms,
            }],
            support(),
            provenance(),
        )
        .unwrap()
    }

    #[test]
    fn zero_term_predicts_mean() {
        let m = mean_only(3.0);
        let v = m.predict(&[0.5], &[2.0], EvalForm::DiscreteNearest).unwrap();
        assert_eq!(v, 3.0);
    }

    #[test]
    fn one_term_arithmetic() {
        let m = one_term();
        let v = m.predict(&[1.0], &[2.0], EvalForm::DiscreteNearest).unwrap();
        assert!((v - 1.0).abs() < 1e-15);
    }

    #[test]
    fn lookup_errors() {
        let m = one_term();
        assert!(matches!(
            m.predict(&[0.3], &[2.0], EvalForm::DiscreteNearest),
            Err(Error::Lookup(_))
        ));
        assert!(matches!(
            m.predict(&[0.5], &[7.0], EvalForm::DiscreteNearest),
            Err(Error::Lookup(_))
        ));
        assert!(matches!(
            m.predict(&[0.5], &[2.0], EvalForm::Network),
            Err(Error::Config(_))
        ));
    }

    fn dataset(values: Array2<f64>) -> Dataset {
        Dataset::new(
            support().grid,
            support().xi,
            values,
            Split::all_train(3),
            DatasetMeta {
                problem: "test".into(),
                seed: 0,
                distribution: "none".into(),
                config: None,
            },
        )
        .unwrap()
    }

    #[test]
    fn reconstruct_levels() {
        let m = one_term();
        let ds = dataset(Array2::from_shape_fn((3, 3), |(i, j)| {
            [1.0, 2.0, -1.0][i] * [0.0, 0.125, 0.5][j]
        }));
        let r0 = m.reconstruct(&ds, 0).unwrap();
        assert!(r0.iter().all(|v| *v == 0.0));
        let r1 = m.residual(&ds, 1).unwrap();
        assert!(r1.iter().all(|v| v.abs() < 1e-15));
        assert!(matches!(m.reconstruct(&ds, 2), Err(Error::Range(_))));
    }

    #[test]
    fn unnormalized_psi_rejected() {
        let mut m = one_term();
        m.terms[0].psi_discrete *= 2.0;
        assert!(m.validate().is_err());
    }

    #[test]
    fn increasing_history_rejected() {
        let mut m = mean_only(0.0);
        m.provenance.residual_mse = vec![1.0, 0.5, 0.6];
        assert!(m.validate().unwrap_err().to_string().contains("term 2"));
    }

    #[test]
    fn round_trip_and_missing_terms() {
        let m = one_term();
        let text = io::to_json_string(&m).unwrap();
        let back: SpectralModel = io::from_json_str(&text).unwrap();
        assert_eq!(back, m);
        let mut value: serde_json::Value = serde_json::from_str(&text).unwrap();
        value.as_object_mut().unwrap().remove("terms");
        let err = io::from_json_str::<SpectralModel>(&value.to_string()).unwrap_err();
        assert!(err.to_string().contains("terms"), "{err}");
    }
}
