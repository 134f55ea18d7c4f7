use crate::linalg::{solve_tridiagonal, LinalgError};

/// Solves `d/dx(κ(x) du/dx) = f(x)` with `u = 0` at both ends on the uniform
/// grid `x` by the conservative three-point scheme, `κ` taken at cell
/// midpoints.
pub fn solve_heat1d(
    x: &[f64],
    kappa: impl Fn(f64) -> f64,
    forcing: impl Fn(f64) -> f64,
) -> Result<Vec<f64>, LinalgError> {
    let m = x.len();
    if m < 3 {
        return Err(LinalgError::Dimension(format!("need at least 3 nodes, got {m}")));
    }
    let h = (x[m - 1] - x[0]) / (m - 1) as f64;
    let k_half: Vec<f64> = (0..m - 1).map(|i| kappa(0.5 * (x[i] + x[i + 1]))).collect();
    let n = m - 2;
    // interior node i = k + 1 sits between half-cells i - 1/2 and i + 1/2
    let diag: Vec<f64> = (0..n).map(|k| -(k_half[k] + k_half[k + 1])).collect();
    let off: Vec<f64> = k_half[1..n].to_vec();
    let rhs: Vec<f64> = (0..n).map(|k| h * h * forcing(x[k + 1])).collect();
    let inner = solve_tridiagonal(&off, &diag, &off, &rhs)?;
    let mut u = Vec::with_capacity(m);
    u.push(0.0);
    u.extend(inner);
    u.push(0.0);
    Ok(u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn manufactured_error(m: usize) -> f64 {
        let x: Vec<f64> = (0..m).map(|j| j as f64 / (m - 1) as f64).collect();
        let u = solve_heat1d(&x, |_| 1.0, |t| -PI * PI * (PI * t).sin()).unwrap();
        x.iter()
            .zip(&u)
            .map(|(t, v)| (v - (PI * t).sin()).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn manufactured_solution_second_order() {
        let e30 = manufactured_error(30);
        assert!(e30 < 1e-2, "{e30}");
        // doubling the number of intervals quarters the error
        let e59 = manufactured_error(59);
        let ratio = e30 / e59;
        assert!((ratio - 4.0).abs() < 0.2, "{ratio}");
    }

    #[test]
    fn boundaries_are_zero() {
        let x: Vec<f64> = (0..30).map(|j| j as f64 / 29.0).collect();
        let u = solve_heat1d(&x, |t| 1.1 + (2.0 * t).cos(), |t| (2.0 * PI * t).sin()).unwrap();
        assert_eq!(u[0], 0.0);
        assert_eq!(u[29], 0.0);
    }
}
