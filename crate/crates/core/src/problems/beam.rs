use crate::linalg::{solve_tridiagonal, LinalgError};

/// Bending moment of a simply supported beam of length `length` under the
/// uniform load `load`: `M'' = -load`, `M(0) = M(L) = 0`.
pub fn bending_moment(x: f64, length: f64, load: f64) -> f64 {
    -0.5 * load * x * (x - length)
}

/// Deflection of a simply supported beam with nodal stiffness `k` on the
/// uniform grid `x`: solves `u'' = -M/K` with `u = 0` at both ends, `M` from
/// [`bending_moment`].
pub fn solve_beam(x: &[f64], k: &[f64], load: f64) -> Result<Vec<f64>, LinalgError> {
    let m = x.len();
    if m < 3 || k.len() != m {
        return Err(LinalgError::Dimension(format!(
            "{m} nodes with {} stiffness values",
            k.len()
        )));
    }
    let length = x[m - 1] - x[0];
    let h = length / (m - 1) as f64;
    let n = m - 2;
    let rhs: Vec<f64> = (1..m - 1)
        .map(|i| -h * h * bending_moment(x[i] - x[0], length, load) / k[i])
        .collect();
    let inner = solve_tridiagonal(&vec![1.0; n - 1], &vec![-2.0; n], &vec![1.0; n - 1], &rhs)?;
    let mut u = Vec::with_capacity(m);
    u.push(0.0);
    u.extend(inner);
    u.push(0.0);
    Ok(u)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moment_at_midspan() {
        assert!((bending_moment(5.0, 10.0, -0.005) + 0.0625).abs() < 1e-15);
        assert_eq!(bending_moment(0.0, 10.0, -0.005), 0.0);
        assert_eq!(bending_moment(10.0, 10.0, -0.005), 0.0);
    }

    #[test]
    fn constant_stiffness_midspan() {
        let x: Vec<f64> = (0..51).map(|j| j as f64 * 0.2).collect();
        let u = solve_beam(&x, &[8.0; 51], -0.005).unwrap();
        // 5 q L⁴ / (384 EI)
        let exact = 5.0 * -0.005 * 1e4 / (384.0 * 8.0);
        assert!((u[25] / exact - 1.0).abs() < 5e-3, "{} vs {exact}", u[25]);
        assert_eq!(u[0], 0.0);
        assert_eq!(u[50], 0.0);
    }
}
