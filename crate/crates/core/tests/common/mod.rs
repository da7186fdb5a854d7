//! Independent reference implementations used by the integration tests.
//!
//! Nothing here calls into the solver modules: states, bases, increments,
//! rollbacks and normal equations are recomputed from raw prices with plain
//! loops and a hand-written Gaussian elimination.
#![allow(dead_code)]

use nalgebra::DMatrix;
use qlbs::{BasisSet, MarketParams, PathSet};

pub const EPS: f64 = 1e-3;

/// 3 paths, 2 steps, hand-picked prices.
pub fn toy_paths() -> PathSet {
    let market = MarketParams::new(100.0, 0.05, 0.15, 0.03, 2.0 / 24.0, 1.0 / 24.0).unwrap();
    let s = DMatrix::from_row_slice(3, 3, &[100.0, 104.0, 109.0, 100.0, 97.0, 92.5, 100.0, 101.5, 99.0]);
    PathSet::from_prices(market, s, 0).unwrap()
}

/// Quadratic Bernstein basis over the toy's state range (`M = 3`).
pub fn toy_basis(paths: &PathSet) -> BasisSet {
    let (lo, hi) = state_range(paths);
    BasisSet::new(lo, hi, 3, 2).unwrap()
}

pub fn states(paths: &PathSet) -> Vec<Vec<f64>> {
    let p = &paths.params;
    let drift = p.mu - 0.5 * p.sigma * p.sigma;
    (0..paths.n_paths())
        .map(|k| (0..=paths.n_steps()).map(|t| paths.s[(k, t)].ln() - drift * p.dt * t as f64).collect())
        .collect()
}

pub fn state_range(paths: &PathSet) -> (f64, f64) {
    let x = states(paths);
    let all = x.iter().flatten();
    (all.clone().cloned().fold(f64::INFINITY, f64::min), all.cloned().fold(f64::NEG_INFINITY, f64::max))
}

/// Quadratic Bernstein polynomials on `[lo, hi]`.
pub fn bernstein2(x: f64, lo: f64, hi: f64) -> Vec<f64> {
    let u = ((x - lo) / (hi - lo)).clamp(0.0, 1.0);
    vec![(1.0 - u) * (1.0 - u), 2.0 * u * (1.0 - u), u * u]
}

/// Gaussian elimination with partial pivoting on `(A + eps I) x = b`.
pub fn solve_ridge(mut a: Vec<Vec<f64>>, mut b: Vec<f64>, eps: f64) -> Vec<f64> {
    let n = b.len();
    for (i, row) in a.iter_mut().enumerate() {
        row[i] += eps;
    }
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for c in col..n {
                a[row][c] -= f * a[col][c];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|c| a[row][c] * x[c]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

/// `(sum_k w_k f_k f_k^T, sum_k f_k y_k)`.
pub fn normal_equations(features: &[Vec<f64>], weights: &[f64], y: &[f64]) -> (Vec<Vec<f64>>, Vec<f64>) {
    let m = features[0].len();
    let mut a = vec![vec![0.0; m]; m];
    let mut b = vec![0.0; m];
    for (k, f) in features.iter().enumerate() {
        for i in 0..m {
            b[i] += f[i] * y[k];
            for j in 0..m {
                a[i][j] += weights[k] * f[i] * f[j];
            }
        }
    }
    (a, b)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn centered(v: &[f64]) -> Vec<f64> {
    let m = mean(v);
    v.iter().map(|x| x - m).collect()
}

#[derive(Debug)]
pub struct OracleSolution {
    pub phi: Vec<Vec<f64>>,
    pub omega: Vec<Vec<f64>>,
    pub w: Vec<Vec<f64>>,
    pub a: Vec<Vec<f64>>,
    pub pi: Vec<Vec<f64>>,
    pub rewards: Vec<Vec<f64>>,
    pub dp_price: f64,
    pub fqi_price: f64,
}

/// Backward DP and on-policy FQI by direct normal equations, with the
/// quadratic Bernstein basis on the toy's state range.
pub fn brute_force(paths: &PathSet, payoff: &[f64], lambda: f64, risk_only: bool) -> OracleSolution {
    let p = &paths.params;
    let n_paths = paths.n_paths();
    let n = paths.n_steps();
    let gamma = (-p.r * p.dt).exp();
    let x = states(paths);
    let (lo, hi) = state_range(paths);
    let phi_at = |k: usize, t: usize| bernstein2(x[k][t], lo, hi);

    let ds: Vec<Vec<f64>> = (0..n)
        .map(|t| (0..n_paths).map(|k| paths.s[(k, t + 1)] - paths.s[(k, t)] / gamma).collect())
        .collect();
    let ds_hat: Vec<Vec<f64>> = ds.iter().map(|d| centered(d)).collect();

    let mut pi = vec![vec![0.0; n_paths]; n + 1];
    pi[n] = payoff.to_vec();
    let var_t = {
        let m = mean(payoff);
        payoff.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n_paths as f64
    };
    let mut q = vec![vec![0.0; n_paths]; n + 1];
    q[n] = payoff.iter().map(|v| -v - lambda * var_t).collect();

    let mut phi = vec![Vec::new(); n];
    let mut omega = vec![Vec::new(); n];
    let mut a = vec![Vec::new(); n];
    let mut rewards = vec![Vec::new(); n];
    for t in (0..n).rev() {
        let feats: Vec<Vec<f64>> = (0..n_paths).map(|k| phi_at(k, t)).collect();
        let pi_hat = centered(&pi[t + 1]);
        let w2: Vec<f64> = ds_hat[t].iter().map(|d| d * d).collect();
        let y: Vec<f64> = (0..n_paths)
            .map(|k| {
                let drift = if risk_only { 0.0 } else { ds[t][k] / (2.0 * gamma * lambda) };
                pi_hat[k] * ds_hat[t][k] + drift
            })
            .collect();
        let (am, bv) = normal_equations(&feats, &w2, &y);
        phi[t] = solve_ridge(am, bv, EPS);
        a[t] = feats.iter().map(|f| dot(f, &phi[t])).collect();
        pi[t] = (0..n_paths).map(|k| gamma * (pi[t + 1][k] - a[t][k] * ds[t][k])).collect();
        rewards[t] = (0..n_paths)
            .map(|k| {
                let (ak, ph, dh) = (a[t][k], pi_hat[k], ds_hat[t][k]);
                gamma * ak * ds[t][k] - lambda * gamma * gamma * (ph * ph - 2.0 * ak * dh * ph + ak * ak * dh * dh)
            })
            .collect();
        let target: Vec<f64> = (0..n_paths).map(|k| rewards[t][k] + gamma * q[t + 1][k]).collect();
        let (cm, dv) = normal_equations(&feats, &vec![1.0; n_paths], &target);
        omega[t] = solve_ridge(cm, dv, EPS);
        q[t] = feats.iter().map(|f| dot(f, &omega[t])).collect();
    }
    let dp_price = -mean(&q[0]);

    // On-policy FQI: Psi index 3j + i for action power i and basis function j.
    let psi = |f: &[f64], act: f64| -> Vec<f64> {
        let powers = [1.0, act, 0.5 * act * act];
        f.iter().flat_map(|fj| powers.iter().map(move |pw| pw * fj)).collect()
    };
    let eval = |w: &[f64], f: &[f64], act: f64| dot(w, &psi(f, act));
    let mut w = vec![Vec::new(); n];
    let mut q_next: Vec<f64> = q[n].clone();
    for t in (0..n).rev() {
        let feats: Vec<Vec<f64>> = (0..n_paths).map(|k| psi(&phi_at(k, t), a[t][k])).collect();
        let target: Vec<f64> = (0..n_paths).map(|k| rewards[t][k] + gamma * q_next[k]).collect();
        let (sm, mv) = normal_equations(&feats, &vec![1.0; n_paths], &target);
        w[t] = solve_ridge(sm, mv, EPS);
        q_next = (0..n_paths).map(|k| eval(&w[t], &phi_at(k, t), a[t][k])).collect();
    }
    let fqi_price = -mean(&q_next);

    OracleSolution { phi, omega, w, a, pi, rewards, dp_price, fqi_price }
}

/// Reshape a `3 x M` coefficient matrix into the oracle's `3j + i` layout.
pub fn flatten_w(w: &DMatrix<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(w.len());
    for j in 0..w.ncols() {
        for i in 0..3 {
            out.push(w[(i, j)]);
        }
    }
    out
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
