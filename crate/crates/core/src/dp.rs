//! Model-based backward recursion for the optimal hedge and Q-function.
//!
//! Walking back from maturity, each step
//!
//! 1. regresses the risk-minimising hedge on the basis (`phi_t`),
//! 2. rolls the replicating portfolio back with `Pi_t = gamma (Pi_{t+1} - a_t dS_t)`,
//! 3. books the one-step risk-adjusted reward,
//! 4. regresses `R_t + gamma Q*_{t+1}` on the basis (`omega_t`).
//!
//! The option (ask) price is minus the cross-path mean of `Q*_0`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::basis::BasisSet;
use crate::bsm::EuropeanPut;
use crate::error::{QlbsError, Result};
use crate::market::{demean, increments, PathSet};
use crate::regression::{self, gram, moment, predict, ridge_solve};
use crate::{stats, DEFAULT_REGULARIZATION};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskParams {
    /// Weight on the discounted sum of portfolio variances.
    pub lambda: f64,
    /// Drop the drift term `dS / (2 gamma lambda)` from the hedge.
    pub risk_only_hedge: bool,
}

impl RiskParams {
    pub fn new(lambda: f64, risk_only_hedge: bool) -> Result<Self> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(QlbsError::Parameter(format!("lambda must be positive, got {lambda}")));
        }
        Ok(Self { lambda, risk_only_hedge })
    }

    /// Pure risk-minimising hedge, the default for all experiments.
    pub fn risk_only(lambda: f64) -> Result<Self> {
        Self::new(lambda, true)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DpSolution {
    /// Hedge coefficients, `n_steps x M`.
    pub phi: DMatrix<f64>,
    /// Q-function coefficients, `n_steps x M`.
    pub omega: DMatrix<f64>,
    /// Optimal hedges, `n_paths x n_steps`.
    pub a_star: DMatrix<f64>,
    /// Replicating portfolio values, `n_paths x (n_steps + 1)`.
    pub pi: DMatrix<f64>,
    /// `Q*_t(X_t, a*_t)` per path, `n_paths x (n_steps + 1)`.
    pub q_star: DMatrix<f64>,
    /// One-step rewards, `n_paths x n_steps`.
    pub rewards: DMatrix<f64>,
    /// `R_T = -lambda Var[Pi_T]`.
    pub terminal_reward: f64,
    /// Coefficient of `a^2` in the expected one-step reward per step,
    /// `-lambda gamma^2 E[dS_hat^2]`; negative means the Q-function is concave in the hedge.
    pub action_curvature: Vec<f64>,
    pub price: f64,
    pub lambda: f64,
    pub regularization: f64,
}

/// Put payoff at maturity, `max(K - S_T, 0)` per path.
pub fn terminal_portfolio(paths: &PathSet, put: &EuropeanPut) -> Vec<f64> {
    paths.terminal_prices().into_iter().map(|s| put.payoff(s)).collect()
}

/// `Q*_T = -Pi_T - lambda Var[Pi_T]`.
pub fn terminal_q(pi_terminal: &[f64], lambda: f64) -> Vec<f64> {
    let penalty = lambda * stats::variance(pi_terminal);
    pi_terminal.iter().map(|p| -p - penalty).collect()
}

/// Hedge coefficients from a precomputed design matrix: solves
/// `(A + eps I) phi = B` with `A = sum Phi Phi^T dS_hat^2` and
/// `B = sum Phi (Pi_hat dS_hat [+ dS / (2 gamma lambda)])`.
pub fn action_coeffs_from_design(
    design: &DMatrix<f64>,
    ds: &[f64],
    ds_hat: &[f64],
    pi_hat_next: &[f64],
    gamma: f64,
    risk: &RiskParams,
    eps: f64,
) -> Result<DVector<f64>> {
    let w: Vec<f64> = ds_hat.iter().map(|d| d * d).collect();
    let a = gram(design, Some(&w));
    let drift_scale = if risk.risk_only_hedge { 0.0 } else { 1.0 / (2.0 * gamma * risk.lambda) };
    let target: Vec<f64> = (0..ds.len())
        .map(|k| pi_hat_next[k] * ds_hat[k] + drift_scale * ds[k])
        .collect();
    ridge_solve(&a, &moment(design, &target), eps)
}

/// Optimal hedge coefficients at step `t` given next-step portfolio values.
pub fn optimal_action_coeffs(
    t: usize,
    paths: &PathSet,
    basis: &BasisSet,
    pi_next: &[f64],
    risk: &RiskParams,
    eps: f64,
) -> Result<DVector<f64>> {
    if t >= paths.n_steps() {
        return Err(QlbsError::Parameter(format!("step {t} has no successor")));
    }
    let inc = increments(paths);
    let design = basis.design_matrix(paths.x.column(t).as_slice());
    let pi_hat = demean(pi_next)?;
    action_coeffs_from_design(
        &design,
        inc.ds.column(t).as_slice(),
        inc.ds_hat.column(t).as_slice(),
        &pi_hat,
        paths.params.gamma(),
        risk,
        eps,
    )
    .map_err(|e| e.at_step(t))
}

/// `a*_t(X_t) = sum_n phi_nt Phi_n(X_t)` on every path.
pub fn optimal_action(t: usize, paths: &PathSet, basis: &BasisSet, phi_t: &DVector<f64>) -> Vec<f64> {
    predict(&basis.design_matrix(paths.x.column(t).as_slice()), phi_t)
}

/// Self-financing rollback `Pi_t = gamma (Pi_{t+1} - a_t dS_t)`.
pub fn portfolio_rollback(pi_next: &[f64], a_t: &[f64], ds_t: &[f64], gamma: f64) -> Vec<f64> {
    pi_next
        .iter()
        .zip(a_t)
        .zip(ds_t)
        .map(|((p, a), d)| gamma * (p - a * d))
        .collect()
}

/// Realised one-step reward per path,
/// `gamma a dS - lambda gamma^2 (Pi_hat^2 - 2 a dS_hat Pi_hat + a^2 dS_hat^2)`.
pub fn reward(
    gamma: f64,
    lambda: f64,
    a_t: &[f64],
    ds_t: &[f64],
    ds_hat_t: &[f64],
    pi_hat_next: &[f64],
) -> Vec<f64> {
    (0..a_t.len())
        .map(|k| {
            let (a, p, dh) = (a_t[k], pi_hat_next[k], ds_hat_t[k]);
            gamma * a * ds_t[k] - lambda * gamma * gamma * (p * p - 2.0 * a * dh * p + a * a * dh * dh)
        })
        .collect()
}

/// Q-function coefficients at step `t`: ridge regression of
/// `R_t + gamma Q*_{t+1}(X_{t+1}, a*_{t+1})` on the basis at `X_t`.
pub fn q_coeffs(
    t: usize,
    paths: &PathSet,
    basis: &BasisSet,
    rewards_t: &[f64],
    q_next_at_astar: &[f64],
    eps: f64,
) -> Result<DVector<f64>> {
    let design = basis.design_matrix(paths.x.column(t).as_slice());
    q_coeffs_from_design(&design, rewards_t, q_next_at_astar, paths.params.gamma(), eps)
        .map_err(|e| e.at_step(t))
}

pub fn q_coeffs_from_design(
    design: &DMatrix<f64>,
    rewards_t: &[f64],
    q_next: &[f64],
    gamma: f64,
    eps: f64,
) -> Result<DVector<f64>> {
    let target: Vec<f64> = rewards_t.iter().zip(q_next).map(|(r, q)| r + gamma * q).collect();
    regression::ridge_fit(design, &target, eps)
}

/// Full backward pass for a European put with the default regularisation.
pub fn solve_dp(
    paths: &PathSet,
    basis: &BasisSet,
    put: &EuropeanPut,
    risk: &RiskParams,
) -> Result<DpSolution> {
    if (put.maturity - paths.params.t_maturity).abs() > 1e-12 {
        return Err(QlbsError::Parameter(format!(
            "option maturity {} does not match path horizon {}",
            put.maturity, paths.params.t_maturity
        )));
    }
    solve_dp_with_payoff(paths, basis, &terminal_portfolio(paths, put), risk, DEFAULT_REGULARIZATION)
}

/// Full backward pass for an arbitrary terminal payoff vector.
pub fn solve_dp_with_payoff(
    paths: &PathSet,
    basis: &BasisSet,
    payoff: &[f64],
    risk: &RiskParams,
    eps: f64,
) -> Result<DpSolution> {
    let n_paths = paths.n_paths();
    let n = paths.n_steps();
    let m = basis.len();
    if n_paths < 2 {
        return Err(QlbsError::DatasetTooSmall { needed: 2, got: n_paths });
    }
    if payoff.len() != n_paths {
        return Err(QlbsError::Schema(format!(
            "payoff has {} entries for {n_paths} paths",
            payoff.len()
        )));
    }
    let gamma = paths.params.gamma();
    let lambda = risk.lambda;
    let inc = increments(paths);

    let mut phi = DMatrix::zeros(n, m);
    let mut omega = DMatrix::zeros(n, m);
    let mut a_star = DMatrix::zeros(n_paths, n);
    let mut pi = DMatrix::zeros(n_paths, n + 1);
    let mut q_star = DMatrix::zeros(n_paths, n + 1);
    let mut rewards = DMatrix::zeros(n_paths, n);
    let mut action_curvature = vec![0.0; n];

    pi.set_column(n, &DVector::from_column_slice(payoff));
    let q_terminal = terminal_q(payoff, lambda);
    q_star.set_column(n, &DVector::from_vec(q_terminal));
    let terminal_reward = -lambda * stats::variance(payoff);

    for t in (0..n).rev() {
        let design = basis.design_matrix(paths.x.column(t).as_slice());
        let ds = inc.ds.column(t);
        let ds_hat = inc.ds_hat.column(t);
        let pi_next: Vec<f64> = pi.column(t + 1).iter().copied().collect();
        let pi_hat_next = demean(&pi_next)?;

        let phi_t = action_coeffs_from_design(
            &design,
            ds.as_slice(),
            ds_hat.as_slice(),
            &pi_hat_next,
            gamma,
            risk,
            eps,
        )
        .map_err(|e| e.at_step(t))?;
        let a_t = predict(&design, &phi_t);
        let pi_t = portfolio_rollback(&pi_next, &a_t, ds.as_slice(), gamma);
        let r_t = reward(gamma, lambda, &a_t, ds.as_slice(), ds_hat.as_slice(), &pi_hat_next);

        let q_next: Vec<f64> = q_star.column(t + 1).iter().copied().collect();
        let omega_t = q_coeffs_from_design(&design, &r_t, &q_next, gamma, eps).map_err(|e| e.at_step(t))?;
        let q_t = predict(&design, &omega_t);

        action_curvature[t] = -lambda * gamma * gamma * stats::mean(
            &ds_hat.iter().map(|d| d * d).collect::<Vec<_>>(),
        );
        phi.set_row(t, &phi_t.transpose());
        omega.set_row(t, &omega_t.transpose());
        a_star.set_column(t, &DVector::from_vec(a_t));
        pi.set_column(t, &DVector::from_vec(pi_t));
        rewards.set_column(t, &DVector::from_vec(r_t));
        q_star.set_column(t, &DVector::from_vec(q_t));
    }

    let price = -stats::mean(q_star.column(0).as_slice());
    if !price.is_finite() {
        return Err(QlbsError::Numerical { step: Some(0), msg: "non-finite option price".into() });
    }
    Ok(DpSolution {
        phi,
        omega,
        a_star,
        pi,
        q_star,
        rewards,
        terminal_reward,
        action_curvature,
        price,
        lambda,
        regularization: eps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{simulate_paths, MarketParams};

    #[test]
    fn terminal_payoff_examples() {
        let put = EuropeanPut::new(100.0, 1.0).unwrap();
        assert_eq!(put.payoff(90.0), 10.0);
        assert_eq!(put.payoff(110.0), 0.0);
        assert_eq!(put.payoff(100.0), 0.0);
    }

    #[test]
    fn rollback_examples() {
        assert_eq!(portfolio_rollback(&[3.0, -2.0], &[0.0, 0.0], &[1.0, 5.0], 1.0), vec![3.0, -2.0]);
        assert_eq!(portfolio_rollback(&[10.0], &[1.0], &[5.0], 1.0), vec![5.0]);
    }

    #[test]
    fn reward_limits() {
        let a = [0.3, -0.7];
        let ds = [1.5, -2.0];
        let ds_hat = [1.75, -1.75];
        let pi_hat = [0.4, -0.4];
        let g = 0.99;
        let r0 = reward(g, 0.0, &a, &ds, &ds_hat, &pi_hat);
        for k in 0..2 {
            assert_eq!(r0[k], g * a[k] * ds[k]);
        }
        let r = reward(g, 0.01, &[0.0, 0.0], &ds, &ds_hat, &pi_hat);
        for k in 0..2 {
            assert!((r[k] + 0.01 * g * g * pi_hat[k] * pi_hat[k]).abs() < 1e-15);
        }
    }

    #[test]
    fn two_path_hand_case() {
        // ds_hat = [5, -5], pi_hat = [-2.5, 2.5], a = -0.5, gamma = 1, lambda = 1e-3:
        // each path has Pi_hat - a dS_hat = 0, so only gamma a dS survives.
        let r = reward(1.0, 1e-3, &[-0.5, -0.5], &[5.0, -5.0], &[5.0, -5.0], &[-2.5, 2.5]);
        assert!((r[0] - (-2.5)).abs() < 1e-15);
        assert!((r[1] - 2.5).abs() < 1e-15);
    }

    #[test]
    fn one_function_basis_gives_ratio() {
        let basis = BasisSet::new(0.0, 1.0, 1, 0).unwrap();
        let design = basis.design_matrix(&[0.5, 0.5]);
        let risk = RiskParams::risk_only(1e-3).unwrap();
        let phi = action_coeffs_from_design(&design, &[5.0, -5.0], &[5.0, -5.0], &[-2.5, 2.5], 1.0, &risk, 0.0)
            .unwrap();
        assert!((phi[0] + 0.5).abs() < 1e-15);
    }

    #[test]
    fn zero_phi_means_no_hedge() {
        let p = MarketParams::benchmark();
        let paths = simulate_paths(&p, 50, 1).unwrap();
        let basis = BasisSet::from_states(&paths.x, 12).unwrap();
        let a = optimal_action(3, &paths, &basis, &DVector::zeros(12));
        assert!(a.iter().all(|v| *v == 0.0));
        let one = BasisSet::new(0.0, 10.0, 1, 0).unwrap();
        let a = optimal_action(3, &paths, &one, &DVector::from_element(1, 0.25));
        assert!(a.iter().all(|v| *v == 0.25));
    }

    #[test]
    fn constant_targets_are_reproduced() {
        let p = MarketParams::benchmark();
        let paths = simulate_paths(&p, 400, 3).unwrap();
        let basis = BasisSet::from_states(&paths.x, 12).unwrap();
        let n = paths.n_paths();
        let omega = q_coeffs(5, &paths, &basis, &vec![0.0; n], &vec![-3.0 / p.gamma(); n], 1e-12).unwrap();
        let fitted = predict(&basis.design_matrix(paths.x.column(5).as_slice()), &omega);
        assert!(fitted.iter().all(|q| (q + 3.0).abs() < 1e-8));
    }

    #[test]
    fn flat_paths_need_no_hedge() {
        let p = MarketParams::benchmark().with_sigma(1e-12);
        let paths = simulate_paths(&p, 200, 2).unwrap();
        let basis = BasisSet::new(paths.x.min() - 1e-3, paths.x.max() + 1e-3, 12, 3).unwrap();
        let put = EuropeanPut::new(100.0, 1.0).unwrap();
        let sol = solve_dp(&paths, &basis, &put, &RiskParams::risk_only(1e-3).unwrap()).unwrap();
        assert!(sol.a_star.iter().all(|a| a.abs() < 1e-6));
    }

    #[test]
    fn terminal_conditions_hold() {
        let p = MarketParams::benchmark();
        let paths = simulate_paths(&p, 500, 11).unwrap();
        let basis = BasisSet::from_states(&paths.x, 12).unwrap();
        let put = EuropeanPut::new(100.0, 1.0).unwrap();
        let risk = RiskParams::risk_only(1e-3).unwrap();
        let sol = solve_dp(&paths, &basis, &put, &risk).unwrap();
        let payoff = terminal_portfolio(&paths, &put);
        let var = stats::variance(&payoff);
        for k in 0..paths.n_paths() {
            assert_eq!(sol.pi[(k, 24)], payoff[k]);
            assert_eq!(sol.q_star[(k, 24)], -payoff[k] - 1e-3 * var);
        }
        assert!(sol.action_curvature.iter().all(|c| *c < 0.0));
        assert!(sol.price.is_finite());
    }

    #[test]
    fn zero_strike_put_is_free() {
        let p = MarketParams::benchmark();
        let paths = simulate_paths(&p, 500, 5).unwrap();
        let basis = BasisSet::from_states(&paths.x, 12).unwrap();
        let put = EuropeanPut::new(0.0, 1.0).unwrap();
        let sol = solve_dp(&paths, &basis, &put, &RiskParams::risk_only(1e-3).unwrap()).unwrap();
        assert!(sol.price.abs() <= 1e-6);
    }

    #[test]
    fn maturity_mismatch_is_rejected() {
        let p = MarketParams::benchmark();
        let paths = simulate_paths(&p, 10, 5).unwrap();
        let basis = BasisSet::from_states(&paths.x, 12).unwrap();
        let put = EuropeanPut::new(100.0, 2.0).unwrap();
        assert!(solve_dp(&paths, &basis, &put, &RiskParams::risk_only(1e-3).unwrap()).is_err());
        assert!(RiskParams::risk_only(0.0).is_err());
    }
}
