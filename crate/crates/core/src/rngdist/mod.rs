//! Seeded random sampling.
//!
//! A single [`Rng`] type wraps a counter-based ChaCha generator; independent
//! sub-streams are derived by stream id so parallel work stays reproducible.
//! On top of it sit scalar distributions, multivariate normals, Gaussian
//! random fields through a truncated Karhunen–Loève expansion, and
//! copula-coupled pairs.

pub mod special;

use ndarray::{Array1, Array2, ArrayView1};
use rand::{Rng as _, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{self, LinalgError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DistError {
    #[error("invalid distribution parameter: {0}")]
    InvalidParameter(String),
    #[error("probability {0} outside the open interval (0, 1)")]
    Domain(f64),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

pub type Result<T> = std::result::Result<T, DistError>;

/// Seeded, stream-addressable random generator.
#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    stream: u64,
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self {
            seed,
            stream,
            inner,
        }
    }

    /// Independent generator sharing this seed on stream `id + 1`. Sub-streams
    /// of sub-streams are not supported; ids index a flat namespace.
    pub fn substream(&self, id: u64) -> Self {
        Self::with_stream(self.seed, id.wrapping_add(1))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Uniform on [0, 1).
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    /// Uniform on the open interval (0, 1).
    pub fn uniform_open(&mut self) -> f64 {
        loop {
            let u = self.uniform();
            if u > 0.0 {
                return u;
            }
        }
    }

    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    pub fn exp1(&mut self) -> f64 {
        Exp1.sample(&mut self.inner)
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }
}

impl RngCore for Rng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// Scalar input distributions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Dist {
    Uniform { a: f64, b: f64 },
    Normal { mu: f64, sigma: f64 },
    /// Shape `k`, scale `theta`.
    Gamma { k: f64, theta: f64 },
    Poisson { lambda: f64 },
}

impl Dist {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Dist::Uniform { a, b } => a.is_finite() && b.is_finite() && b > a,
            Dist::Normal { mu, sigma } => mu.is_finite() && sigma.is_finite() && sigma > 0.0,
            Dist::Gamma { k, theta } => k.is_finite() && theta.is_finite() && k > 0.0 && theta > 0.0,
            Dist::Poisson { lambda } => lambda.is_finite() && lambda > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(DistError::InvalidParameter(format!("{self:?}")))
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Dist::Uniform { a, b } => 0.5 * (a + b),
            Dist::Normal { mu, .. } => mu,
            Dist::Gamma { k, theta } => k * theta,
            Dist::Poisson { lambda } => lambda,
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            Dist::Uniform { a, b } => (b - a) * (b - a) / 12.0,
            Dist::Normal { sigma, .. } => sigma * sigma,
            Dist::Gamma { k, theta } => k * theta * theta,
            Dist::Poisson { lambda } => lambda,
        }
    }

    fn draw(&self, rng: &mut Rng) -> f64 {
        match *self {
            Dist::Uniform { a, b } => a + (b - a) * rng.uniform(),
            Dist::Normal { mu, sigma } => mu + sigma * rng.standard_normal(),
            Dist::Gamma { k, theta } => {
                // parameters validated by the caller
                let g = rand_distr::Gamma::new(k, theta).expect("validated gamma");
                g.sample(rng)
            }
            Dist::Poisson { lambda } => {
                let p = rand_distr::Poisson::new(lambda).expect("validated poisson");
                p.sample(rng)
            }
        }
    }
}

/// Draws `n` independent samples.
pub fn sample(rng: &mut Rng, dist: Dist, n: usize) -> Result<Array1<f64>> {
    dist.validate()?;
    Ok(Array1::from_iter((0..n).map(|_| dist.draw(rng))))
}

/// Distributions with a quantile function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Marginal {
    Normal { mu: f64, sigma: f64 },
    Gamma { k: f64, theta: f64 },
}

impl Marginal {
    pub const STANDARD_NORMAL: Marginal = Marginal::Normal { mu: 0.0, sigma: 1.0 };

    fn validate(&self) -> Result<()> {
        match *self {
            Marginal::Normal { mu, sigma } => Dist::Normal { mu, sigma }.validate(),
            Marginal::Gamma { k, theta } => Dist::Gamma { k, theta }.validate(),
        }
    }
}

/// Inverse CDF, accurate to about 1e-12 absolute over the bulk of (0, 1).
pub fn quantile(dist: Marginal, p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(DistError::Domain(p));
    }
    dist.validate()?;
    Ok(match dist {
        Marginal::Normal { mu, sigma } => mu + sigma * special::normal_quantile(p),
        Marginal::Gamma { k, theta } => theta * special::gamma_quantile_unit(k, p),
    })
}

/// `n` draws from N(mu, sigma), one per row.
pub fn sample_mvnormal(
    rng: &mut Rng,
    mu: ArrayView1<f64>,
    sigma: &Array2<f64>,
    n: usize,
) -> Result<Array2<f64>> {
    let d = mu.len();
    if sigma.dim() != (d, d) {
        return Err(DistError::Dimension(format!(
            "mean has {} entries but covariance is {:?}",
            d,
            sigma.dim()
        )));
    }
    let l = linalg::cholesky(sigma)?;
    let mut out = Array2::<f64>::zeros((n, d));
    let mut z = vec![0.0; d];
    for mut row in out.rows_mut() {
        for zi in z.iter_mut() {
            *zi = rng.standard_normal();
        }
        for i in 0..d {
            let mut s = mu[i];
            for k in 0..=i {
                s += l[[i, k]] * z[k];
            }
            row[i] = s;
        }
    }
    Ok(out)
}

/// Squared-exponential covariance `exp(-|xi - xj|² / (2 lc²))` between grid points (rows).
pub fn build_rbf_covariance(points: &Array2<f64>, length_scale: f64) -> Result<Array2<f64>> {
    if !(length_scale > 0.0 && length_scale.is_finite()) {
        return Err(DistError::InvalidParameter(format!(
            "length scale must be positive, got {length_scale}"
        )));
    }
    let m = points.nrows();
    let denom = 2.0 * length_scale * length_scale;
    let mut c = Array2::<f64>::zeros((m, m));
    for i in 0..m {
        c[[i, i]] = 1.0;
        for j in (i + 1)..m {
            let d2: f64 = points
                .row(i)
                .iter()
                .zip(points.row(j).iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            let v = (-d2 / denom).exp();
            c[[i, j]] = v;
            c[[j, i]] = v;
        }
    }
    Ok(c)
}

/// Leading eigenpairs of a covariance matrix.
#[derive(Debug, Clone)]
pub struct KlModes {
    /// Retained eigenvalues, descending, clamped at zero.
    pub eigenvalues: Array1<f64>,
    /// `M x d_eff`, orthonormal columns.
    pub modes: Array2<f64>,
    /// Sum of all (clamped) eigenvalues, for energy-fraction reporting.
    pub total_variance: f64,
}

impl KlModes {
    pub fn retained_fraction(&self) -> f64 {
        if self.total_variance == 0.0 {
            1.0
        } else {
            self.eigenvalues.sum() / self.total_variance
        }
    }
}

pub fn kl_decompose(cov: &Array2<f64>, d_eff: usize) -> Result<KlModes> {
    let m = cov.nrows();
    if d_eff > m {
        return Err(DistError::Dimension(format!(
            "requested {d_eff} modes from a {m}-point covariance"
        )));
    }
    let eig = linalg::sym_eig(cov)?;
    let mut clamped = 0usize;
    let values: Vec<f64> = eig
        .eigenvalues
        .iter()
        .map(|&v| {
            if v < 0.0 {
                clamped += 1;
                0.0
            } else {
                v
            }
        })
        .collect();
    if clamped > 0 {
        log::warn!("clamped {clamped} negative covariance eigenvalues to zero");
    }
    let total_variance = values.iter().sum();
    Ok(KlModes {
        eigenvalues: Array1::from(values[..d_eff].to_vec()),
        modes: eig.eigenvectors.slice(ndarray::s![.., ..d_eff]).to_owned(),
        total_variance,
    })
}

/// Gaussian random field discretized on a grid, truncated to `d_eff` modes.
#[derive(Debug, Clone)]
pub struct KlField {
    pub mean: Array1<f64>,
    pub eigenvalues: Array1<f64>,
    pub modes: Array2<f64>,
    pub length_scale: f64,
}

impl KlField {
    pub fn new(mean: Array1<f64>, modes: KlModes, length_scale: f64) -> Result<Self> {
        if modes.modes.nrows() != mean.len() {
            return Err(DistError::Dimension(format!(
                "mean has {} points, modes have {}",
                mean.len(),
                modes.modes.nrows()
            )));
        }
        Ok(Self {
            mean,
            eigenvalues: modes.eigenvalues,
            modes: modes.modes,
            length_scale,
        })
    }

    /// RBF-covariance field on `points` with constant mean.
    pub fn rbf(points: &Array2<f64>, mean: f64, length_scale: f64, d_eff: usize) -> Result<Self> {
        let cov = build_rbf_covariance(points, length_scale)?;
        let modes = kl_decompose(&cov, d_eff)?;
        Self::new(Array1::from_elem(points.nrows(), mean), modes, length_scale)
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `mean + Σ_k √λ_k · mode_k · ξ_k`.
    pub fn realize(&self, xi: ArrayView1<f64>) -> Array1<f64> {
        let mut field = self.mean.clone();
        for (k, &x) in xi.iter().enumerate() {
            let w = self.eigenvalues[k].sqrt() * x;
            field.scaled_add(w, &self.modes.column(k));
        }
        field
    }

    /// Pointwise variance of the truncated field, `Σ_k λ_k mode_k²`.
    pub fn pointwise_variance(&self) -> Array1<f64> {
        let mut var = Array1::<f64>::zeros(self.mean.len());
        for (k, &lam) in self.eigenvalues.iter().enumerate() {
            var.zip_mut_with(&self.modes.column(k), |v, m| *v += lam * m * m);
        }
        var
    }
}

/// Returns `(xi, fields)` with `xi` an `n x d_eff` standard-normal matrix.
pub fn sample_kl_field(rng: &mut Rng, kl: &KlField, n: usize) -> (Array2<f64>, Array2<f64>) {
    let d = kl.dim();
    let xi = Array2::from_shape_simple_fn((n, d), || rng.standard_normal());
    let mut fields = Array2::<f64>::zeros((n, kl.mean.len()));
    for (i, mut row) in fields.rows_mut().into_iter().enumerate() {
        row.assign(&kl.realize(xi.row(i)));
    }
    (xi, fields)
}

/// Positive stable variate with Laplace transform `exp(-t^alpha)`, `0 < alpha <= 1`
/// (Chambers–Mallows–Stuck / Kanter representation).
fn positive_stable(rng: &mut Rng, alpha: f64) -> f64 {
    if alpha >= 1.0 {
        return 1.0;
    }
    let u = std::f64::consts::PI * rng.uniform_open();
    let w = rng.exp1();
    let a = (alpha * u).sin() / u.sin().powf(1.0 / alpha);
    let b = (((1.0 - alpha) * u).sin() / w).powf((1.0 - alpha) / alpha);
    a * b
}

fn clamp_open(u: f64) -> f64 {
    u.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

/// Pairs `(u, v)` from the Gumbel copula with parameter `theta >= 1`
/// (Marshall–Olkin construction).
pub fn sample_gumbel_copula(rng: &mut Rng, theta: f64, n: usize) -> Result<Array2<f64>> {
    if !(theta >= 1.0 && theta.is_finite()) {
        return Err(DistError::InvalidParameter(format!(
            "Gumbel copula parameter must be >= 1, got {theta}"
        )));
    }
    let alpha = 1.0 / theta;
    let mut out = Array2::<f64>::zeros((n, 2));
    for mut row in out.rows_mut() {
        let s = positive_stable(rng, alpha);
        for c in 0..2 {
            let e = rng.exp1();
            row[c] = clamp_open((-(e / s).powf(alpha)).exp());
        }
    }
    Ok(out)
}

/// Dependence structure for a pair of random variables.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Copula {
    /// Zero-mean jointly Gaussian pair with common standard deviation `sigma`
    /// and correlation `rho`; marginals are implied.
    Gaussian { rho: f64, sigma: f64 },
    Gumbel { theta: f64 },
}

impl Copula {
    pub fn gaussian_covariance(rho: f64, sigma: f64) -> Array2<f64> {
        let s2 = sigma * sigma;
        ndarray::array![[s2, rho * s2], [rho * s2, s2]]
    }
}

/// Draws dependent pairs by Sklar's construction `(F₁⁻¹(u), F₂⁻¹(v))` for the
/// Gumbel copula, or directly from the bivariate normal in the Gaussian case.
pub fn sample_dependent_pair(
    rng: &mut Rng,
    copula: Copula,
    marginals: (Marginal, Marginal),
    n: usize,
) -> Result<Array2<f64>> {
    match copula {
        Copula::Gaussian { rho, sigma } => {
            if !(rho > -1.0 && rho < 1.0) {
                return Err(DistError::InvalidParameter(format!(
                    "correlation must lie in (-1, 1), got {rho}"
                )));
            }
            let cov = Copula::gaussian_covariance(rho, sigma);
            sample_mvnormal(rng, Array1::zeros(2).view(), &cov, n)
        }
        Copula::Gumbel { theta } => {
            marginals.0.validate()?;
            marginals.1.validate()?;
            let mut uv = sample_gumbel_copula(rng, theta, n)?;
            for mut row in uv.rows_mut() {
                row[0] = quantile(marginals.0, row[0])?;
                row[1] = quantile(marginals.1, row[1])?;
            }
            Ok(uv)
        }
    }
}

/// Kendall's tau-a by exhaustive pair counting (O(n²)).
pub fn kendall_tau(x: ArrayView1<f64>, y: ArrayView1<f64>) -> f64 {
    let n = x.len().min(y.len());
    if n < 2 {
        return 0.0;
    }
    let xs = x.as_slice().map(|s| s.to_vec()).unwrap_or_else(|| x.to_vec());
    let ys = y.as_slice().map(|s| s.to_vec()).unwrap_or_else(|| y.to_vec());
    let mut score: i64 = 0;
    for i in 0..n {
        let (xi, yi) = (xs[i], ys[i]);
        for j in (i + 1)..n {
            let s = (xs[j] - xi) * (ys[j] - yi);
            if s > 0.0 {
                score += 1;
            } else if s < 0.0 {
                score -= 1;
            }
        }
    }
    score as f64 / (n as f64 * (n as f64 - 1.0) / 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn mean(v: ArrayView1<f64>) -> f64 {
        v.sum() / v.len() as f64
    }

    fn pearson(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
        let (ma, mb) = (mean(a), mean(b));
        let cov: f64 = a.iter().zip(b.iter()).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }

    #[test]
    fn same_seed_same_stream() {
        let a = sample(&mut Rng::new(3), Dist::Normal { mu: 0.0, sigma: 1.0 }, 50).unwrap();
        let b = sample(&mut Rng::new(3), Dist::Normal { mu: 0.0, sigma: 1.0 }, 50).unwrap();
        assert_eq!(a, b);
        let c = sample(&mut Rng::new(3).substream(0), Dist::Normal { mu: 0.0, sigma: 1.0 }, 50)
            .unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn scalar_sample_moments() {
        let n = 100_000;
        let u = sample(&mut Rng::new(1), Dist::Uniform { a: 0.0, b: 1.0 }, n).unwrap();
        assert!((mean(u.view()) - 0.5).abs() < 0.01);

        let g = sample(&mut Rng::new(2), Dist::Gamma { k: 1.0, theta: 1.0 }, n).unwrap();
        assert!((mean(g.view()) - 1.0).abs() < 0.02);

        let p = sample(&mut Rng::new(3), Dist::Poisson { lambda: 1.0 }, n).unwrap();
        let zeros = p.iter().filter(|&&v| v == 0.0).count() as f64 / n as f64;
        assert!((zeros - (-1.0f64).exp()).abs() < 0.01);
        assert!(p.iter().all(|v| v.fract() == 0.0));
    }

    #[test]
    fn invalid_parameters() {
        let mut rng = Rng::new(0);
        assert!(sample(&mut rng, Dist::Uniform { a: 1.0, b: 1.0 }, 3).is_err());
        assert!(sample(&mut rng, Dist::Normal { mu: 0.0, sigma: 0.0 }, 3).is_err());
        assert!(sample(&mut rng, Dist::Gamma { k: -1.0, theta: 1.0 }, 3).is_err());
        assert!(sample(&mut rng, Dist::Poisson { lambda: 0.0 }, 3).is_err());
    }

    #[test]
    fn quantile_domain() {
        assert_eq!(quantile(Marginal::STANDARD_NORMAL, 0.0), Err(DistError::Domain(0.0)));
        assert_eq!(quantile(Marginal::STANDARD_NORMAL, 1.0), Err(DistError::Domain(1.0)));
        assert_eq!(quantile(Marginal::STANDARD_NORMAL, 0.5).unwrap(), 0.0);
    }

    #[test]
    fn mvnormal_independent_and_degenerate() {
        let mut rng = Rng::new(9);
        let s = sample_mvnormal(&mut rng, array![0.0, 0.0].view(), &Array2::eye(2), 100_000)
            .unwrap();
        assert!(pearson(s.column(0), s.column(1)).abs() < 0.01);

        let err = sample_mvnormal(&mut rng, array![1.0, 2.0].view(), &Array2::zeros((2, 2)), 10);
        assert!(matches!(err, Err(DistError::Linalg(LinalgError::NotPositiveDefinite { .. }))));
    }

    #[test]
    fn mvnormal_negative_correlation() {
        let cov = Copula::gaussian_covariance(-0.5, 0.25);
        let s = sample_mvnormal(&mut Rng::new(4), array![0.0, 0.0].view(), &cov, 100_000).unwrap();
        assert!((pearson(s.column(0), s.column(1)) + 0.5).abs() < 0.02);
    }

    #[test]
    fn rbf_entries() {
        let pts = array![[0.0], [0.3], [0.3]];
        let c = build_rbf_covariance(&pts, 0.3).unwrap();
        assert_eq!(c[[0, 0]], 1.0);
        assert!((c[[0, 1]] - (-0.5f64).exp()).abs() < 1e-15);
        assert_eq!(c[[1, 2]], 1.0);
        assert!(build_rbf_covariance(&pts, 0.0).is_err());
    }

    #[test]
    fn kl_of_identity_and_rank_one() {
        let kl = kl_decompose(&Array2::eye(5), 5).unwrap();
        assert!(kl.eigenvalues.iter().all(|v| (v - 1.0).abs() < 1e-14));

        let v = array![1.0, 2.0, -1.0, 0.5];
        let c = v
            .view()
            .insert_axis(ndarray::Axis(1))
            .dot(&v.view().insert_axis(ndarray::Axis(0)));
        let kl = kl_decompose(&c, 4).unwrap();
        assert!((kl.eigenvalues[0] - v.dot(&v)).abs() < 1e-12);
        assert!(kl.eigenvalues.iter().skip(1).all(|x| x.abs() < 1e-12));

        assert!(matches!(kl_decompose(&Array2::eye(3), 4), Err(DistError::Dimension(_))));
    }

    #[test]
    fn kl_field_single_mode_activation() {
        let pts = Array2::from_shape_fn((21, 1), |(i, _)| i as f64 * 0.5);
        let field = KlField::rbf(&pts, 8.0, 2.0, 7).unwrap();
        let mut xi = Array1::zeros(7);
        xi[0] = 1.0;
        let f = field.realize(xi.view());
        let expected = &field.mean + &(field.modes.column(0).to_owned() * field.eigenvalues[0].sqrt());
        assert!((&f - &expected).iter().all(|d| d.abs() < 1e-14));

        let mut zero = field.clone();
        zero.eigenvalues.fill(0.0);
        let (_, fields) = sample_kl_field(&mut Rng::new(1), &zero, 4);
        for row in fields.rows() {
            assert_eq!(row, zero.mean.view());
        }
    }

    #[test]
    fn gumbel_rejects_small_theta() {
        assert!(sample_gumbel_copula(&mut Rng::new(0), 0.5, 10).is_err());
    }

    #[test]
    fn gaussian_pair_matches_mvnormal() {
        let cop = Copula::Gaussian { rho: -0.5, sigma: 0.25 };
        let a = sample_dependent_pair(
            &mut Rng::new(11),
            cop,
            (Marginal::STANDARD_NORMAL, Marginal::STANDARD_NORMAL),
            500,
        )
        .unwrap();
        let b = sample_mvnormal(
            &mut Rng::new(11),
            array![0.0, 0.0].view(),
            &Copula::gaussian_covariance(-0.5, 0.25),
            500,
        )
        .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn kendall_tau_simple() {
        let x = array![1.0, 2.0, 3.0, 4.0];
        assert_eq!(kendall_tau(x.view(), x.view()), 1.0);
        let y = array![4.0, 3.0, 2.0, 1.0];
        assert_eq!(kendall_tau(x.view(), y.view()), -1.0);
    }
}
