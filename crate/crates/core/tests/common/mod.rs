//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use neural_chaos::nnet::{Activation, BasisNetwork, NetParams, NetSpec, OutputMap, Standardizer};
use neural_chaos::rngdist::Rng;

/// Singular values by one-sided Jacobi rotations, descending.
pub fn jacobi_singular_values(a: ArrayView2<f64>) -> Vec<f64> {
    // work on the orientation with fewer columns
    let mut u = if a.ncols() <= a.nrows() { a.to_owned() } else { a.t().to_owned() };
    let k = u.ncols();
    for _sweep in 0..100 {
        let mut off = 0.0f64;
        for p in 0..k {
            for q in p + 1..k {
                let alpha = u.column(p).dot(&u.column(p));
                let beta = u.column(q).dot(&u.column(q));
                let gamma = u.column(p).dot(&u.column(q));
                if gamma == 0.0 {
                    continue;
                }
                off = off.max(gamma.abs() / (alpha * beta).sqrt());
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..u.nrows() {
                    let (x, y) = (u[[i, p]], u[[i, q]]);
                    u[[i, p]] = c * x - s * y;
                    u[[i, q]] = s * x + c * y;
                }
            }
        }
        if off < 1e-15 {
            break;
        }
    }
    let mut s: Vec<f64> = u.columns().into_iter().map(|c| c.dot(&c).sqrt()).collect();
    s.sort_by(|a, b| b.partial_cmp(a).unwrap());
    s
}

/// Leading singular value and left singular vector by power iteration on
/// `rᵀr`, iterated until `‖Gv - λv‖ ≤ tol λ`.
pub fn power_top_pair(r: ArrayView2<f64>, tol: f64) -> (f64, Array1<f64>) {
    let g = r.t().dot(&r);
    let m = g.nrows();
    let mut v = Array1::from_shape_fn(m, |j| 1.0 + 0.01 * j as f64);
    v /= v.dot(&v).sqrt();
    let mut lambda = 0.0f64;
    for _ in 0..1_000_000 {
        let w = g.dot(&v);
        let next = w.dot(&w).sqrt();
        if next == 0.0 {
            break;
        }
        v = w / next;
        let gv = g.dot(&v);
        lambda = v.dot(&gv);
        let res = &gv - &(&v * lambda);
        if res.dot(&res).sqrt() <= tol * lambda {
            break;
        }
    }
    let u = r.dot(&v);
    let norm = u.dot(&u).sqrt();
    (lambda.sqrt(), u / norm)
}

/// Tail energies `Σ_{k ≥ p} σ_k²` for `p = 0..=len`.
pub fn tail_energies(sigma: &[f64]) -> Vec<f64> {
    let mut tails = vec![0.0; sigma.len() + 1];
    for p in (0..sigma.len()).rev() {
        tails[p] = tails[p + 1] + sigma[p] * sigma[p];
    }
    tails
}

/// `a` with its column means removed.
pub fn centered(a: &Array2<f64>) -> Array2<f64> {
    let mean = a.mean_axis(Axis(0)).unwrap();
    a - &mean
}

/// Population variance of every column.
pub fn column_variance(a: &Array2<f64>) -> Array1<f64> {
    centered(a).mapv(|v| v * v).mean_axis(Axis(0)).unwrap()
}

/// Kendall's tau from concordant/discordant pair counts.
pub fn concordance_tau(x: ArrayView1<f64>, y: ArrayView1<f64>) -> f64 {
    let n = x.len();
    let (mut conc, mut disc) = (0u64, 0u64);
    for i in 0..n {
        for j in 0..i {
            let s = (x[i] - x[j]) * (y[i] - y[j]);
            if s > 0.0 {
                conc += 1;
            } else if s < 0.0 {
                disc += 1;
            }
        }
    }
    (conc as f64 - disc as f64) / (n * (n - 1) / 2) as f64
}

fn mse(net: &BasisNetwork, inputs: ArrayView2<f64>, targets: &Array1<f64>) -> f64 {
    let out = net.forward(inputs).unwrap();
    (&out - targets).mapv(|v| v * v).mean().unwrap()
}

/// Max relative error between the analytic MSE gradient and central finite
/// differences with step `eps`; relative to `max(|g|, |fd|, floor)`.
pub fn gradient_check(
    net: &BasisNetwork,
    inputs: ArrayView2<f64>,
    targets: &Array1<f64>,
    eps: f64,
    floor: f64,
) -> f64 {
    let (grad, _) = net.grad_mse(inputs, targets).unwrap();
    let flat_grad: Vec<f64> = grad.iter().copied().collect();
    let mut worst = 0.0f64;
    let mut probe = net.clone();
    for (k, g) in flat_grad.iter().enumerate() {
        let original = *probe.params.iter().nth(k).unwrap();
        set(&mut probe.params, k, original + eps);
        let up = mse(&probe, inputs, targets);
        set(&mut probe.params, k, original - eps);
        let down = mse(&probe, inputs, targets);
        set(&mut probe.params, k, original);
        let fd = (up - down) / (2.0 * eps);
        let rel = (g - fd).abs() / g.abs().max(fd.abs()).max(floor);
        worst = worst.max(rel);
    }
    worst
}

fn set(params: &mut NetParams, k: usize, value: f64) {
    *params.iter_mut().nth(k).unwrap() = value;
}

/// Random architecture, weights, input standardizer and output map.
pub fn random_network(rng: &mut Rng, activation: Activation) -> BasisNetwork {
    let input_dim = 1 + rng.below(3);
    let hidden: Vec<usize> = (0..1 + rng.below(3)).map(|_| 2 + rng.below(7)).collect();
    let spec = match activation {
        Activation::Sine => NetSpec::siren(input_dim, &hidden, 1.0 + 29.0 * rng.uniform()),
        a => NetSpec::mlp(input_dim, &hidden, a),
    };
    let mut net = BasisNetwork::init(spec, rng).unwrap();
    net.standardizer = Standardizer {
        mean: (0..input_dim).map(|_| rng.standard_normal()).collect(),
        scale: (0..input_dim).map(|_| 0.5 + rng.uniform()).collect(),
    };
    net.output = OutputMap {
        shift: rng.standard_normal(),
        scale: 0.5 + rng.uniform(),
    };
    net
}

/// Worst gradient-check error over 20 random networks.
pub fn check_activation(activation: Activation, seed: u64) -> f64 {
    let mut rng = Rng::new(seed);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let net = random_network(&mut rng, activation);
        let d = net.spec.input_dim;
        let inputs = Array2::from_shape_simple_fn((12, d), || rng.standard_normal());
        let targets = Array1::from_shape_simple_fn(12, || rng.standard_normal());
        worst = worst.max(gradient_check(&net, inputs.view(), &targets, 1e-6, 1e-4));
    }
    worst
}
