use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::BandedSpd;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PicardOptions {
    /// Weight of the new iterate, `u ← (1 - ω) u + ω u*`.
    pub damping: f64,
    /// Relative L2 change between iterates.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PicardOptions {
    fn default() -> Self {
        Self {
            damping: 0.7,
            tol: 1e-8,
            max_iter: 200,
        }
    }
}

impl PicardOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.damping > 0.0 && self.damping <= 1.0) || !(self.tol > 0.0) || self.max_iter == 0 {
            return Err(Error::Config(format!("invalid Picard options {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NonlinearSolve {
    /// Nodal solution including the zero boundary, node `i2 * n + i1`.
    pub u: Array1<f64>,
    pub iterations: usize,
    pub change: f64,
}

/// Nodes of an `n x n` grid on the unit square; node `i2 * n + i1` sits at
/// `(i1 h, i2 h)`.
pub fn square_nodes(n: usize) -> Array2<f64> {
    let h = 1.0 / (n - 1) as f64;
    let coord = |i: usize| if i + 1 == n { 1.0 } else { i as f64 * h };
    Array2::from_shape_fn((n * n, 2), |(k, c)| if c == 0 { coord(k % n) } else { coord(k / n) })
}

fn source(n: usize, amplitude: f64, f: ArrayView1<f64>) -> Array1<f64> {
    let nodes = square_nodes(n);
    Array1::from_shape_fn(n * n, |k| {
        let (x1, x2) = (nodes[[k, 0]], nodes[[k, 1]]);
        amplitude * (5.0 * x1).sin() * (4.0 * x2).sin() + f[k]
    })
}

fn coefficient(u: f64) -> f64 {
    1.0 + 0.5 * u * u
}

/// Neighbours of interior node `(i1, i2)` as `(node index, interior index)`;
/// the interior index is `None` on the boundary.
fn neighbours(n: usize, i1: usize, i2: usize) -> [(usize, Option<usize>); 4] {
    let ni = n - 2;
    let interior = |a: usize, b: usize| {
        (a >= 1 && a <= ni && b >= 1 && b <= ni).then(|| (b - 1) * ni + (a - 1))
    };
    [
        (i2 * n + i1 - 1, interior(i1 - 1, i2)),
        (i2 * n + i1 + 1, interior(i1 + 1, i2)),
        ((i2 - 1) * n + i1, interior(i1, i2 - 1)),
        ((i2 + 1) * n + i1, interior(i1, i2 + 1)),
    ]
}

/// Discrete residual `A(u) u - s` at the interior nodes (five-point stencil,
/// face coefficients averaged from the nodes) and `‖s‖∞`.
pub fn nonlinear_residual(
    n: usize,
    amplitude: f64,
    f: ArrayView1<f64>,
    u: ArrayView1<f64>,
) -> (Array1<f64>, f64) {
    let h2 = 1.0 / ((n - 1) as f64).powi(2);
    let s = source(n, amplitude, f);
    let ni = n - 2;
    let mut r = Array1::zeros(ni * ni);
    let mut s_max = 0.0f64;
    for i2 in 1..=ni {
        for i1 in 1..=ni {
            let p = i2 * n + i1;
            let ap = coefficient(u[p]);
            let mut acc = 0.0;
            for (q, _) in neighbours(n, i1, i2) {
                let face = 0.5 * (ap + coefficient(u[q]));
                acc += face * (u[p] - u[q]) / h2;
            }
            r[(i2 - 1) * ni + (i1 - 1)] = acc - s[p];
            s_max = s_max.max(s[p].abs());
        }
    }
    (r, s_max)
}

/// Solves `-∇·((1 + u²/2) ∇u) = A sin(5 x1) sin(4 x2) + f` on the `n x n`
/// node grid with `u = 0` on the boundary by damped Picard iteration.
pub fn solve_nonlinear2d(
    n: usize,
    amplitude: f64,
    f: ArrayView1<f64>,
    opts: &PicardOptions,
) -> Result<NonlinearSolve> {
    opts.validate()?;
    if n < 3 || f.len() != n * n {
        return Err(Error::Config(format!(
            "{n} x {n} grid with a source of length {}",
            f.len()
        )));
    }
    let h2 = 1.0 / ((n - 1) as f64).powi(2);
    let s = source(n, amplitude, f);
    let ni = n - 2;
    let rhs: Vec<f64> = (0..ni * ni)
        .map(|q| s[(q / ni + 1) * n + q % ni + 1])
        .collect();
    let mut u = Array1::<f64>::zeros(n * n);
    let mut change = f64::INFINITY;
    for iter in 1..=opts.max_iter {
        let mut a = BandedSpd::zeros(ni * ni, ni);
        for i2 in 1..=ni {
            for i1 in 1..=ni {
                let p = i2 * n + i1;
                let qp = (i2 - 1) * ni + (i1 - 1);
                let ap = coefficient(u[p]);
                for (node, interior) in neighbours(n, i1, i2) {
                    let face = 0.5 * (ap + coefficient(u[node])) / h2;
                    a.add(qp, qp, face);
                    // each interior face is visited from both sides; store it once
                    if let Some(qn) = interior {
                        if qn < qp {
                            a.add(qp, qn, -face);
                        }
                    }
                }
            }
        }
        let star = a.solve(&rhs).map_err(|e| Error::Solver {
            realization: 0,
            message: e.to_string(),
        })?;
        let mut diff2 = 0.0;
        let mut norm2 = 0.0;
        for (q, v) in star.iter().enumerate() {
            let p = (q / ni + 1) * n + q % ni + 1;
            let next = (1.0 - opts.damping) * u[p] + opts.damping * v;
            diff2 += (next - u[p]) * (next - u[p]);
            norm2 += next * next;
            u[p] = next;
        }
        change = if norm2 > 0.0 { (diff2 / norm2).sqrt() } else { 0.0 };
        if change <= opts.tol {
            return Ok(NonlinearSolve {
                u,
                iterations: iter,
                change,
            });
        }
    }
    Err(Error::Solver {
        realization: 0,
        message: format!(
            "Picard iteration did not converge in {} iterations (change {change:e})",
            opts.max_iter
        ),
    })
}
