//! Batch Fitted Q Iteration for the hedging problem.
//!
//! The Q-function is quadratic in the hedge:
//! `Q_t(x, a) = (1, a, a^2/2) W_t Phi(x)` with `W_t` a `3 x M` matrix. Each
//! backward step regresses `R_t + gamma Q_{t+1}(X_{t+1}, a*_{t+1})` on the
//! features `Psi(x, a) = vec((1, a, a^2/2) ⊗ Phi(x)^T)`.
//!
//! The continuation value uses the analytic hedge `a*_{t+1}` (computed from
//! the portfolio rolled back along the observed actions) instead of the
//! maximiser of the fitted quadratic. Maximising on the same sample that fitted
//! `W_{t+1}` would bias the continuation upward. The price read-out at
//! `t = 0` uses the analytic hedge for the same reason.

use nalgebra::{DMatrix, DVector};

use crate::basis::BasisSet;
use crate::dp::{action_coeffs_from_design, portfolio_rollback, terminal_q, RiskParams};
use crate::error::{QlbsError, Result};
use crate::market::{demean, from_state, MarketParams, PathSet, StepIncrements};
use crate::regression::{gram, moment, predict, ridge_solve};
use crate::{stats, DEFAULT_REGULARIZATION};

/// Observed trajectories `(X_t, a_t, R_t, X_{t+1})` plus terminal payoffs.
///
/// `r` is `None` when rewards are not observed (inverse RL).
#[derive(Debug, Clone, PartialEq)]
pub struct HedgeDataset {
    /// States, `n x (n_steps + 1)`.
    pub x: DMatrix<f64>,
    /// Hedges, `n x n_steps`.
    pub a: DMatrix<f64>,
    /// Rewards, `n x n_steps`.
    pub r: Option<DMatrix<f64>>,
    pub terminal_payoff: Vec<f64>,
}

impl HedgeDataset {
    pub fn new(
        x: DMatrix<f64>,
        a: DMatrix<f64>,
        r: Option<DMatrix<f64>>,
        terminal_payoff: Vec<f64>,
    ) -> Result<Self> {
        let n = x.nrows();
        if n < 2 {
            return Err(QlbsError::DatasetTooSmall { needed: 2, got: n });
        }
        if x.ncols() < 2 {
            return Err(QlbsError::Schema("states need at least two time columns".into()));
        }
        let steps = x.ncols() - 1;
        if a.shape() != (n, steps) {
            return Err(QlbsError::Schema(format!(
                "actions are {:?}, expected {:?}",
                a.shape(),
                (n, steps)
            )));
        }
        if let Some(r) = &r {
            if r.shape() != (n, steps) {
                return Err(QlbsError::Schema(format!(
                    "rewards are {:?}, expected {:?}",
                    r.shape(),
                    (n, steps)
                )));
            }
        }
        if terminal_payoff.len() != n {
            return Err(QlbsError::Schema(format!(
                "{} terminal payoffs for {n} paths",
                terminal_payoff.len()
            )));
        }
        Ok(Self { x, a, r, terminal_payoff })
    }

    /// Dataset recording the DP-optimal hedges and rewards on `paths`.
    pub fn on_policy(paths: &PathSet, dp: &crate::dp::DpSolution) -> Self {
        let n = paths.n_steps();
        Self {
            x: paths.x.clone(),
            a: dp.a_star.clone(),
            r: Some(dp.rewards.clone()),
            terminal_payoff: dp.pi.column(n).iter().copied().collect(),
        }
    }

    pub fn without_rewards(&self) -> Self {
        Self { r: None, ..self.clone() }
    }

    pub fn with_rewards(&self, r: DMatrix<f64>) -> Result<Self> {
        Self::new(self.x.clone(), self.a.clone(), Some(r), self.terminal_payoff.clone())
    }

    pub fn n_paths(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_steps(&self) -> usize {
        self.x.ncols() - 1
    }

    fn check_market(&self, market: &MarketParams) -> Result<()> {
        market.validate()?;
        if market.n_steps != self.n_steps() {
            return Err(QlbsError::Schema(format!(
                "dataset has {} steps, market has {}",
                self.n_steps(),
                market.n_steps
            )));
        }
        Ok(())
    }

    /// Stock prices recovered from the states.
    pub fn prices(&self, market: &MarketParams) -> DMatrix<f64> {
        DMatrix::from_fn(self.x.nrows(), self.x.ncols(), |k, t| from_state(self.x[(k, t)], t, market))
    }

    pub fn increments(&self, market: &MarketParams) -> StepIncrements {
        StepIncrements::from_prices(&self.prices(market), market.gamma())
    }

    /// Replicating portfolio obtained by rolling the terminal payoff back
    /// along the observed hedges.
    pub fn rollback_portfolio(&self, inc: &StepIncrements, gamma: f64) -> DMatrix<f64> {
        let n = self.n_steps();
        let mut pi = DMatrix::zeros(self.n_paths(), n + 1);
        pi.set_column(n, &DVector::from_column_slice(&self.terminal_payoff));
        for t in (0..n).rev() {
            let next: Vec<f64> = pi.column(t + 1).iter().copied().collect();
            let a: Vec<f64> = self.a.column(t).iter().copied().collect();
            let rolled = portfolio_rollback(&next, &a, inc.ds.column(t).as_slice(), gamma);
            pi.set_column(t, &DVector::from_vec(rolled));
        }
        pi
    }
}

/// `vec((1, a, a^2/2) ⊗ Phi^T)` with the action index running fastest:
/// entry `3 j + i` is `A_i Phi_j`.
pub fn psi_features(phi_x: &[f64], a: f64) -> Vec<f64> {
    let action = [1.0, a, 0.5 * a * a];
    phi_x.iter().flat_map(|p| action.map(|ai| ai * p)).collect()
}

/// Row-wise [`psi_features`] for a design matrix and one action per row.
pub fn psi_design(design: &DMatrix<f64>, actions: &[f64]) -> DMatrix<f64> {
    let m = design.ncols();
    DMatrix::from_fn(design.nrows(), 3 * m, |k, col| {
        let (j, i) = (col / 3, col % 3);
        let a = actions[k];
        let ai = match i {
            0 => 1.0,
            1 => a,
            _ => 0.5 * a * a,
        };
        ai * design[(k, j)]
    })
}

/// Reshapes `vec(W)` (action index fastest) into the `3 x M` matrix.
pub fn unvec(w: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_column_slice(3, w.len() / 3, w.as_slice())
}

/// `U_W = W Phi(x)` for every row of the design: an `n x 3` matrix holding
/// the constant, linear and quadratic action coefficients.
pub fn action_coefficients(w: &DMatrix<f64>, design: &DMatrix<f64>) -> DMatrix<f64> {
    design * w.transpose()
}

/// `Q = U0 + a U1 + a^2/2 U2` row by row.
pub fn q_at(u: &DMatrix<f64>, actions: &[f64]) -> Vec<f64> {
    (0..u.nrows())
        .map(|k| {
            let a = actions[k];
            u[(k, 0)] + a * u[(k, 1)] + 0.5 * a * a * u[(k, 2)]
        })
        .collect()
}

/// What the regression target at step `t` continues into.
#[derive(Debug, Clone, Copy)]
pub enum Continuation<'a> {
    /// `Q*_T(X_T, a_T = 0)` per path.
    Terminal(&'a [f64]),
    /// Fitted `W_{t+1}` evaluated at the analytic `a*_{t+1}`.
    Fitted { w_next: &'a DMatrix<f64>, a_star_next: &'a [f64] },
}

/// One FQI regression: `(S_t + eps I) vec(W_t) = M_t`.
pub fn fit_step(
    t: usize,
    dataset: &HedgeDataset,
    basis: &BasisSet,
    continuation: Continuation<'_>,
    gamma: f64,
    eps: f64,
) -> Result<DMatrix<f64>> {
    let rewards = dataset
        .r
        .as_ref()
        .ok_or_else(|| QlbsError::Schema("fitted Q iteration needs observed rewards".into()))?;
    let q_next = match continuation {
        Continuation::Terminal(q) => q.to_vec(),
        Continuation::Fitted { w_next, a_star_next } => {
            let design_next = basis.design_matrix(dataset.x.column(t + 1).as_slice());
            q_at(&action_coefficients(w_next, &design_next), a_star_next)
        }
    };
    let design = basis.design_matrix(dataset.x.column(t).as_slice());
    let actions: Vec<f64> = dataset.a.column(t).iter().copied().collect();
    let psi = psi_design(&design, &actions);
    let target: Vec<f64> = rewards
        .column(t)
        .iter()
        .zip(&q_next)
        .map(|(r, q)| r + gamma * q)
        .collect();
    let w = ridge_solve(&gram(&psi, None), &moment(&psi, &target), eps).map_err(|e| e.at_step(t))?;
    Ok(unvec(&w))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConcavityReport {
    /// States per step where `U_W^(2) >= 0`.
    pub violations: Vec<usize>,
    pub points_per_step: usize,
    /// States at `t = 0` whose fitted quadratic is not strictly concave.
    pub readout_convex: usize,
    /// More than 0.1% of all evaluated states violate concavity.
    pub warning: bool,
}

impl ConcavityReport {
    pub fn total_violations(&self) -> usize {
        self.violations.iter().sum()
    }

    pub fn violation_fraction(&self) -> f64 {
        self.total_violations() as f64 / (self.points_per_step * self.violations.len()) as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FqiSolution {
    /// `W_t` matrices (`3 x M`), indexed by step.
    pub w: Vec<DMatrix<f64>>,
    /// `-mean_k Q_0(X_0, a*_0)` with the analytic hedge `a*_0`.
    pub price: f64,
    /// Analytic hedges used in the continuation values, `n x n_steps`.
    pub a_star_fqi: DMatrix<f64>,
    /// `Q_t(X_t, a*_t)` per path for `t < T` and the terminal condition at `T`.
    pub q_star: DMatrix<f64>,
    /// Maximiser of the fitted quadratic at `t = 0`, clamped to the observed
    /// action range. Diagnostic only: the price uses the analytic hedge.
    pub argmax_action: Vec<f64>,
    /// `-mean Q_0` at `argmax_action`; biased upward when the curvature is noisy.
    pub argmax_price: f64,
    /// `U_W^(2)(t, X_t)` per path and step.
    pub curvature: DMatrix<f64>,
    pub concavity: ConcavityReport,
    pub regularization: f64,
}

pub fn solve_fqi(
    dataset: &HedgeDataset,
    basis: &BasisSet,
    market: &MarketParams,
    risk: &RiskParams,
) -> Result<FqiSolution> {
    solve_fqi_with(dataset, basis, market, risk, DEFAULT_REGULARIZATION)
}

pub fn solve_fqi_with(
    dataset: &HedgeDataset,
    basis: &BasisSet,
    market: &MarketParams,
    risk: &RiskParams,
    eps: f64,
) -> Result<FqiSolution> {
    dataset.check_market(market)?;
    if dataset.r.is_none() {
        return Err(QlbsError::Schema("fitted Q iteration needs observed rewards".into()));
    }
    let n_paths = dataset.n_paths();
    let n = dataset.n_steps();
    let gamma = market.gamma();
    let inc = dataset.increments(market);
    let pi = dataset.rollback_portfolio(&inc, gamma);

    let mut w: Vec<DMatrix<f64>> = vec![DMatrix::zeros(3, basis.len()); n];
    let mut a_star = DMatrix::zeros(n_paths, n);
    let mut q_star = DMatrix::zeros(n_paths, n + 1);
    let mut curvature = DMatrix::zeros(n_paths, n);
    let mut violations = vec![0; n];

    let q_terminal = terminal_q(&dataset.terminal_payoff, risk.lambda);
    q_star.set_column(n, &DVector::from_column_slice(&q_terminal));

    let mut u0 = DMatrix::zeros(0, 3);
    for t in (0..n).rev() {
        let design = basis.design_matrix(dataset.x.column(t).as_slice());
        let pi_next: Vec<f64> = pi.column(t + 1).iter().copied().collect();
        let pi_hat_next = demean(&pi_next)?;
        let phi_t = action_coeffs_from_design(
            &design,
            inc.ds.column(t).as_slice(),
            inc.ds_hat.column(t).as_slice(),
            &pi_hat_next,
            gamma,
            risk,
            eps,
        )
        .map_err(|e| e.at_step(t))?;
        let a_t = predict(&design, &phi_t);

        let w_t = if t + 1 == n {
            fit_step(t, dataset, basis, Continuation::Terminal(&q_terminal), gamma, eps)?
        } else {
            let a_next: Vec<f64> = a_star.column(t + 1).iter().copied().collect();
            fit_step(
                t,
                dataset,
                basis,
                Continuation::Fitted { w_next: &w[t + 1], a_star_next: &a_next },
                gamma,
                eps,
            )?
        };

        let u = action_coefficients(&w_t, &design);
        violations[t] = u.column(2).iter().filter(|c| **c >= 0.0).count();
        curvature.set_column(t, &u.column(2));
        q_star.set_column(t, &DVector::from_vec(q_at(&u, &a_t)));
        a_star.set_column(t, &DVector::from_vec(a_t));
        w[t] = w_t;
        if t == 0 {
            u0 = u;
        }
    }

    let observed = dataset.a.column(0);
    let (lo, hi) = observed
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
    let mut argmax_action = Vec::with_capacity(n_paths);
    let mut argmax_q = Vec::with_capacity(n_paths);
    let mut readout_convex = 0;
    for k in 0..n_paths {
        let (c0, c1, c2) = (u0[(k, 0)], u0[(k, 1)], u0[(k, 2)]);
        let value = |a: f64| c0 + a * c1 + 0.5 * a * a * c2;
        let a = if c2 < 0.0 {
            (-c1 / c2).clamp(lo, hi)
        } else {
            readout_convex += 1;
            if value(hi) >= value(lo) {
                hi
            } else {
                lo
            }
        };
        argmax_action.push(a);
        argmax_q.push(value(a));
    }
    let q0: Vec<f64> = q_star.column(0).iter().copied().collect();
    let price = -stats::mean(&q0);
    if !price.is_finite() {
        return Err(QlbsError::Numerical { step: Some(0), msg: "non-finite option price".into() });
    }
    let argmax_price = -stats::mean(&argmax_q);

    let total: usize = violations.iter().sum();
    let warning = total as f64 > 1e-3 * (n_paths * n) as f64;
    Ok(FqiSolution {
        w,
        price,
        a_star_fqi: a_star,
        q_star,
        argmax_action,
        argmax_price,
        curvature,
        concavity: ConcavityReport { violations, points_per_step: n_paths, readout_convex, warning },
        regularization: eps,
    })
}
