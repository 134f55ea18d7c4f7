//! Dense linear algebra kernels.
//!
//! Everything here works on `ndarray` matrices of `f64` and is written for
//! the modest sizes this crate deals with (a few hundred rows/columns for the
//! square problems, tens of thousands of rows for least squares).

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix is not symmetric: |a[{row}][{col}] - a[{col}][{row}]| = {diff:e}")]
    NotSymmetric { row: usize, col: usize, diff: f64 },
    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },
    #[error("singular system: zero pivot at row {0}")]
    Singular(usize),
    #[error("rank deficient design: column {column} has pivot {pivot:e} below threshold {threshold:e}")]
    RankDeficient {
        column: usize,
        pivot: f64,
        threshold: f64,
    },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

pub type Result<T> = std::result::Result<T, LinalgError>;

/// Eigen-decomposition of a symmetric matrix, eigenvalues in descending order.
#[derive(Debug, Clone)]
pub struct SymEig {
    pub eigenvalues: Array1<f64>,
    /// Column `k` is the unit eigenvector for `eigenvalues[k]`.
    pub eigenvectors: Array2<f64>,
}

fn frobenius(a: &ArrayView2<f64>) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Symmetric eigen-decomposition by cyclic Jacobi rotations.
pub fn sym_eig(a: &Array2<f64>) -> Result<SymEig> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(LinalgError::Dimension(format!(
            "sym_eig expects a square matrix, got {}x{}",
            n,
            a.ncols()
        )));
    }
    let scale = frobenius(&a.view()).max(f64::MIN_POSITIVE);
    for i in 0..n {
        for j in (i + 1)..n {
            let diff = (a[[i, j]] - a[[j, i]]).abs();
            if diff > 1e-12 * scale {
                return Err(LinalgError::NotSymmetric {
                    row: i,
                    col: j,
                    diff,
                });
            }
        }
    }

    let mut m = a.clone();
    // symmetrize exactly so rotations act on a consistent matrix
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[[i, j]] + m[[j, i]]);
            m[[i, j]] = avg;
            m[[j, i]] = avg;
        }
    }
    let mut v = Array2::<f64>::eye(n);

    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
            .map(|(i, j)| m[[i, j]] * m[[i, j]])
            .sum();
        if off.sqrt() <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[[p, q]];
                if apq == 0.0 {
                    continue;
                }
                let app = m[[p, p]];
                let aqq = m[[q, q]];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;

                for k in 0..n {
                    let mkp = m[[k, p]];
                    let mkq = m[[k, q]];
                    m[[k, p]] = c * mkp - s * mkq;
                    m[[k, q]] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[[p, k]];
                    let mqk = m[[q, k]];
                    m[[p, k]] = c * mpk - s * mqk;
                    m[[q, k]] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[[k, p]];
                    let vkq = v[[k, q]];
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[[j, j]].total_cmp(&m[[i, i]]));
    let eigenvalues = Array1::from_iter(order.iter().map(|&i| m[[i, i]]));
    let mut eigenvectors = Array2::<f64>::zeros((n, n));
    for (k, &i) in order.iter().enumerate() {
        eigenvectors.column_mut(k).assign(&v.column(i));
    }
    Ok(SymEig {
        eigenvalues,
        eigenvectors,
    })
}

/// Thomas algorithm for a tridiagonal system.
///
/// `lower` and `upper` have length `n - 1`; `lower[i]` couples row `i + 1` to
/// column `i`, `upper[i]` couples row `i` to column `i + 1`.
pub fn solve_tridiagonal(
    lower: &[f64],
    diag: &[f64],
    upper: &[f64],
    rhs: &[f64],
) -> Result<Vec<f64>> {
    let n = diag.len();
    if rhs.len() != n || lower.len() + 1 != n.max(1) || upper.len() + 1 != n.max(1) {
        return Err(LinalgError::Dimension(format!(
            "tridiagonal sizes: diag {}, lower {}, upper {}, rhs {}",
            n,
            lower.len(),
            upper.len(),
            rhs.len()
        )));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    if diag[0] == 0.0 {
        return Err(LinalgError::Singular(0));
    }
    if n > 1 {
        c[0] = upper[0] / diag[0];
    }
    d[0] = rhs[0] / diag[0];
    for i in 1..n {
        let denom = diag[i] - lower[i - 1] * c[i - 1];
        if denom == 0.0 || !denom.is_finite() {
            return Err(LinalgError::Singular(i));
        }
        if i < n - 1 {
            c[i] = upper[i] / denom;
        }
        d[i] = (rhs[i] - lower[i - 1] * d[i - 1]) / denom;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = d[i] - c[i] * x[i + 1];
    }
    Ok(x)
}

/// Cholesky factor `L` with `L Lᵀ = A`.
pub fn cholesky(a: &Array2<f64>) -> Result<Array2<f64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(LinalgError::Dimension(format!(
            "cholesky expects a square matrix, got {}x{}",
            n,
            a.ncols()
        )));
    }
    let mut l = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        let mut d = a[[j, j]];
        for k in 0..j {
            d -= l[[j, k]] * l[[j, k]];
        }
        if !(d > 0.0) {
            return Err(LinalgError::NotPositiveDefinite { pivot: j, value: d });
        }
        let djj = d.sqrt();
        l[[j, j]] = djj;
        for i in (j + 1)..n {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = s / djj;
        }
    }
    Ok(l)
}

/// Symmetric positive definite banded matrix in lower band storage:
/// `band[[i, k]] = A[i][i - k]` for `k <= bandwidth`.
#[derive(Debug, Clone)]
pub struct BandedSpd {
    pub band: Array2<f64>,
}

impl BandedSpd {
    pub fn zeros(n: usize, bandwidth: usize) -> Self {
        Self {
            band: Array2::zeros((n, bandwidth + 1)),
        }
    }

    pub fn n(&self) -> usize {
        self.band.nrows()
    }

    pub fn bandwidth(&self) -> usize {
        self.band.ncols() - 1
    }

    /// Adds `value` to `A[i][j]` (and implicitly `A[j][i]`). Requires `|i - j| <= bandwidth`.
    pub fn add(&mut self, i: usize, j: usize, value: f64) {
        let (hi, lo) = if i >= j { (i, j) } else { (j, i) };
        self.band[[hi, hi - lo]] += value;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (hi, lo) = if i >= j { (i, j) } else { (j, i) };
        if hi - lo > self.bandwidth() {
            0.0
        } else {
            self.band[[hi, hi - lo]]
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let n = self.n();
        let bw = self.bandwidth();
        let mut y = vec![0.0; n];
        for i in 0..n {
            for k in 0..=bw.min(i) {
                let a = self.band[[i, k]];
                let j = i - k;
                y[i] += a * x[j];
                if k > 0 {
                    y[j] += a * x[i];
                }
            }
        }
        y
    }

    /// Solves `A x = rhs` by banded Cholesky factorization.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let n = self.n();
        let bw = self.bandwidth();
        if rhs.len() != n {
            return Err(LinalgError::Dimension(format!(
                "banded solve: rhs has {} entries, matrix has {}",
                rhs.len(),
                n
            )));
        }
        // l[[i, k]] = L[i][i - k]
        let mut l = Array2::<f64>::zeros((n, bw + 1));
        for i in 0..n {
            let jmin = i.saturating_sub(bw);
            for j in jmin..=i {
                let mut s = self.band[[i, i - j]];
                let kmin = jmin.max(j.saturating_sub(bw));
                for k in kmin..j {
                    s -= l[[i, i - k]] * l[[j, j - k]];
                }
                if i == j {
                    if !(s > 0.0) {
                        return Err(LinalgError::NotPositiveDefinite { pivot: i, value: s });
                    }
                    l[[i, 0]] = s.sqrt();
                } else {
                    l[[i, i - j]] = s / l[[j, 0]];
                }
            }
        }
        let mut y = rhs.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in i.saturating_sub(bw)..i {
                s -= l[[i, i - k]] * y[k];
            }
            y[i] = s / l[[i, 0]];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..n.min(i + bw + 1) {
                s -= l[[k, k - i]] * y[k];
            }
            y[i] = s / l[[i, 0]];
        }
        Ok(y)
    }
}

/// Least-squares solution of `A c ≈ b` by Householder QR.
///
/// Fails with [`LinalgError::RankDeficient`] when a diagonal entry of `R`
/// falls below `1e-12` times the largest one.
pub fn lstsq(a: &Array2<f64>, b: &Array1<f64>) -> Result<Array1<f64>> {
    lstsq_view(a.view(), b.view())
}

pub fn lstsq_view(a: ArrayView2<f64>, b: ArrayView1<f64>) -> Result<Array1<f64>> {
    let (m, k) = a.dim();
    if b.len() != m {
        return Err(LinalgError::Dimension(format!(
            "lstsq: A has {} rows, b has {}",
            m,
            b.len()
        )));
    }
    if m < k {
        return Err(LinalgError::Dimension(format!(
            "lstsq needs at least as many rows as columns ({m} < {k})"
        )));
    }
    // Work column-major: each column is a contiguous Vec.
    let mut cols: Vec<Vec<f64>> = (0..k).map(|j| a.column(j).to_vec()).collect();
    let mut rhs = b.to_vec();
    let mut diag_r = vec![0.0; k];

    for j in 0..k {
        let (done, rest) = cols.split_at_mut(j + 1);
        let col = &mut done[j];
        let norm = col[j..].iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            diag_r[j] = 0.0;
            continue;
        }
        let alpha = if col[j] > 0.0 { -norm } else { norm };
        // v = x - alpha e1, stored in col[j..]
        col[j] -= alpha;
        let vnorm2 = col[j..].iter().map(|v| v * v).sum::<f64>();
        diag_r[j] = alpha;
        if vnorm2 == 0.0 {
            continue;
        }
        let v = &col[j..];
        for other in rest.iter_mut() {
            let dot: f64 = v.iter().zip(&other[j..]).map(|(a, b)| a * b).sum();
            let f = 2.0 * dot / vnorm2;
            for (o, vi) in other[j..].iter_mut().zip(v) {
                *o -= f * vi;
            }
        }
        let dot: f64 = v.iter().zip(&rhs[j..]).map(|(a, b)| a * b).sum();
        let f = 2.0 * dot / vnorm2;
        for (o, vi) in rhs[j..].iter_mut().zip(v) {
            *o -= f * vi;
        }
    }

    let largest = diag_r.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let threshold = 1e-12 * largest;
    for (j, d) in diag_r.iter().enumerate() {
        if d.abs() <= threshold || largest == 0.0 {
            return Err(LinalgError::RankDeficient {
                column: j,
                pivot: d.abs(),
                threshold,
            });
        }
    }

    // Back substitution with R: R[i][j] = cols[j][i] for i < j, R[j][j] = diag_r[j].
    let mut c = vec![0.0; k];
    for i in (0..k).rev() {
        let mut s = rhs[i];
        for j in (i + 1)..k {
            s -= cols[j][i] * c[j];
        }
        c[i] = s / diag_r[i];
    }
    Ok(Array1::from(c))
}

/// Dense Gaussian elimination with partial pivoting.
pub fn solve_dense(a: &Array2<f64>, b: &[f64]) -> Result<Vec<f64>> {
    let n = a.nrows();
    if a.ncols() != n || b.len() != n {
        return Err(LinalgError::Dimension(format!(
            "solve_dense: {}x{} matrix, rhs {}",
            n,
            a.ncols(),
            b.len()
        )));
    }
    let mut m = a.clone();
    let mut x = b.to_vec();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| m[[i, col]].abs().total_cmp(&m[[j, col]].abs()))
            .unwrap_or(col);
        if m[[pivot, col]] == 0.0 {
            return Err(LinalgError::Singular(col));
        }
        if pivot != col {
            for k in 0..n {
                m.swap([pivot, k], [col, k]);
            }
            x.swap(pivot, col);
        }
        let p = m[[col, col]];
        for row in (col + 1)..n {
            let f = m[[row, col]] / p;
            if f == 0.0 {
                continue;
            }
            let (top, mut bottom) = m.view_mut().split_at(ndarray::Axis(0), row);
            let src = top.slice(s![col, col..]);
            let mut dst = bottom.slice_mut(s![0, col..]);
            dst.scaled_add(-f, &src);
            x[row] -= f * x[col];
        }
    }
    for i in (0..n).rev() {
        let mut s = x[i];
        for j in (i + 1)..n {
            s -= m[[i, j]] * x[j];
        }
        x[i] = s / m[[i, i]];
    }
    Ok(x)
}
