//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};

pub const GRID_N: usize = 400;
pub const GRID_HALF_WIDTH: f64 = 4.0;

/// Cell centers of the regular grid over `[-4, 4]^2`.
pub fn grid_points() -> Vec<[f64; 2]> {
    let h = 2.0 * GRID_HALF_WIDTH / GRID_N as f64;
    let mut pts = Vec::with_capacity(GRID_N * GRID_N);
    for i in 0..GRID_N {
        for j in 0..GRID_N {
            pts.push([-GRID_HALF_WIDTH + (i as f64 + 0.5) * h, -GRID_HALF_WIDTH + (j as f64 + 0.5) * h]);
        }
    }
    pts
}

fn normalize_log(logw: Vec<f64>) -> Vec<f64> {
    let m = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logw.iter().map(|v| (v - m).exp()).collect();
    let z: f64 = w.iter().sum();
    w.into_iter().map(|v| v / z).collect()
}

/// Grid posterior for prior `N(0, I)` times `exp(log_lik)`.
pub fn grid_posterior(log_lik: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    let logw = grid_points().iter().map(|p| -0.5 * (p[0] * p[0] + p[1] * p[1]) + log_lik(p[0], p[1])).collect();
    normalize_log(logw)
}

/// `KL(q || p)` with the Gaussian `q` discretized on the same grid.
pub fn kl_gaussian_to_grid(mu: &DVector<f64>, sigma: &DMatrix<f64>, p: &[f64]) -> f64 {
    let prec = sigma.clone().try_inverse().expect("invertible covariance");
    let logq = grid_points()
        .iter()
        .map(|t| {
            let d0 = t[0] - mu[0];
            let d1 = t[1] - mu[1];
            -0.5 * (prec[(0, 0)] * d0 * d0 + 2.0 * prec[(0, 1)] * d0 * d1 + prec[(1, 1)] * d1 * d1)
        })
        .collect();
    let q = normalize_log(logq);
    q.iter()
        .zip(p)
        .filter(|(qi, _)| **qi > 0.0)
        .map(|(qi, pi)| qi * (qi.ln() - pi.max(1e-300).ln()))
        .sum()
}

pub fn log1pexp(t: f64) -> f64 {
    if t > 30.0 {
        t
    } else {
        t.exp().ln_1p()
    }
}

/// `log P[y | z]` with `P[y = +1] = 1 / (1 + exp(w z))`.
pub fn log_label(z: f64, w: f64, positive: bool) -> f64 {
    if positive {
        -log1pexp(w * z)
    } else {
        -log1pexp(-w * z)
    }
}

pub fn lse(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// `log softmax_i(k z)`.
pub fn log_choice(z: &[f64], i: usize, k: f64) -> f64 {
    let u: Vec<f64> = z.iter().map(|v| k * v).collect();
    u[i] - lse(&u)
}

/// Plackett–Luce log probability of `order` (best first).
pub fn log_plackett_luce(z: &[f64], order: &[usize], k: f64) -> f64 {
    (0..order.len().saturating_sub(1))
        .map(|j| {
            let rest: Vec<f64> = order[j..].iter().map(|&i| k * z[i]).collect();
            rest[0] - lse(&rest)
        })
        .sum()
}

/// All permutations of `0..n` by Heap's algorithm.
pub fn all_permutations(n: usize) -> Vec<Vec<usize>> {
    fn heap(k: usize, a: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if k <= 1 {
            out.push(a.clone());
            return;
        }
        heap(k - 1, a, out);
        for i in 0..k - 1 {
            if k.is_multiple_of(2) {
                a.swap(i, k - 1);
            } else {
                a.swap(0, k - 1);
            }
            heap(k - 1, a, out);
        }
    }
    let mut a: Vec<usize> = (0..n).collect();
    let mut out = Vec::new();
    heap(n, &mut a, &mut out);
    out
}

/// Item on the circle of radius `sqrt(2)` (the augmented-embedding norm).
pub fn circle_item(angle: f64) -> DVector<f64> {
    DVector::from_vec(vec![2f64.sqrt() * angle.cos(), 2f64.sqrt() * angle.sin()])
}
