//! Inverse RL: rewards from observed hedges, and a per-step maximum-entropy
//! estimate of the risk-aversion parameter.
//!
//! With a quadratic expected reward `c0 + a c1 - a^2 c2 / 2`, the
//! maximum-entropy action density is Gaussian with mean `c1 / c2` and
//! precision `c2`. The conditional expectations inside `c0, c1, c2` are
//! basis regressions on `X_t`, so the coefficients vary per path.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::basis::BasisSet;
use crate::dp::{portfolio_rollback, reward};
use crate::error::{QlbsError, Result};
use crate::fqi::HedgeDataset;
use crate::market::{demean, increments, MarketParams, PathSet, StepIncrements};
use crate::regression::{gram, moment, predict, ridge_solve};
use crate::{stats, DEFAULT_REGULARIZATION};

/// Search bracket for the implied risk aversion.
pub const LAMBDA_MIN: f64 = 1e-9;
pub const LAMBDA_MAX: f64 = 10.0;

fn check_payoffs(dataset: &HedgeDataset) -> Result<()> {
    if dataset.terminal_payoff.len() != dataset.n_paths()
        || dataset.terminal_payoff.iter().any(|p| !p.is_finite())
    {
        return Err(QlbsError::Schema("terminal payoffs are missing or not finite".into()));
    }
    Ok(())
}

/// Rewards implied by the observed hedges for a known `lambda`.
pub fn rewards_from_actions(
    dataset: &HedgeDataset,
    lambda: f64,
    market: &MarketParams,
) -> Result<DMatrix<f64>> {
    if !(lambda >= 0.0) {
        return Err(QlbsError::Domain(format!("lambda must be nonnegative, got {lambda}")));
    }
    check_payoffs(dataset)?;
    let gamma = market.gamma();
    let inc = dataset.increments(market);
    let pi = dataset.rollback_portfolio(&inc, gamma);
    let n = dataset.n_steps();
    let mut r = DMatrix::zeros(dataset.n_paths(), n);
    for t in 0..n {
        let pi_next: Vec<f64> = pi.column(t + 1).iter().copied().collect();
        let pi_hat = demean(&pi_next)?;
        let a: Vec<f64> = dataset.a.column(t).iter().copied().collect();
        let r_t = reward(
            gamma,
            lambda,
            &a,
            inc.ds.column(t).as_slice(),
            inc.ds_hat.column(t).as_slice(),
            &pi_hat,
        );
        r.set_column(t, &DVector::from_vec(r_t));
    }
    Ok(r)
}

/// Per-path conditional expectations at one step:
/// `E[Pi_hat^2]`, `E[dS]`, `E[dS_hat Pi_hat]` and `E[dS_hat^2]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalMoments {
    pub pi_hat_sq: Vec<f64>,
    pub ds: Vec<f64>,
    pub ds_pi_hat: Vec<f64>,
    pub ds_hat_sq: Vec<f64>,
    pub gamma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardCoeffs {
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
}

impl ConditionalMoments {
    fn from_step(
        design: &DMatrix<f64>,
        ds: &[f64],
        ds_hat: &[f64],
        pi_hat_next: &[f64],
        gamma: f64,
        eps: f64,
    ) -> Result<Self> {
        let g = gram(design, None);
        let fit = |y: Vec<f64>| -> Result<Vec<f64>> {
            Ok(predict(design, &ridge_solve(&g, &moment(design, &y), eps)?))
        };
        // A second moment must be positive; where the regression undershoots
        // (sparse tails) fall back to the step's unconditional sample mean.
        let second_moment = |y: Vec<f64>| -> Result<Vec<f64>> {
            let fallback = stats::mean(&y);
            Ok(fit(y)?.into_iter().map(|v| if v > 0.0 { v } else { fallback }).collect())
        };
        Ok(Self {
            pi_hat_sq: second_moment(pi_hat_next.iter().map(|p| p * p).collect())?,
            ds: fit(ds.to_vec())?,
            ds_pi_hat: fit(ds_hat.iter().zip(pi_hat_next).map(|(d, p)| d * p).collect())?,
            ds_hat_sq: second_moment(ds_hat.iter().map(|d| d * d).collect())?,
            gamma,
        })
    }

    pub fn len(&self) -> usize {
        self.ds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ds.is_empty()
    }

    pub fn coeffs(&self, k: usize, lambda: f64) -> RewardCoeffs {
        let g = self.gamma;
        RewardCoeffs {
            c0: -lambda * g * g * self.pi_hat_sq[k],
            c1: g * (self.ds[k] + 2.0 * lambda * g * self.ds_pi_hat[k]),
            c2: 2.0 * lambda * g * g * self.ds_hat_sq[k],
        }
    }

    fn select(&self, idx: &[usize]) -> Self {
        let pick = |v: &[f64]| idx.iter().map(|&k| v[k]).collect();
        Self {
            pi_hat_sq: pick(&self.pi_hat_sq),
            ds: pick(&self.ds),
            ds_pi_hat: pick(&self.ds_pi_hat),
            ds_hat_sq: pick(&self.ds_hat_sq),
            gamma: self.gamma,
        }
    }
}

/// Observed-action portfolio and increments, shared by all steps.
struct Rolled {
    inc: StepIncrements,
    pi: DMatrix<f64>,
}

fn roll(dataset: &HedgeDataset, market: &MarketParams) -> Result<Rolled> {
    check_payoffs(dataset)?;
    market.validate()?;
    if market.n_steps != dataset.n_steps() {
        return Err(QlbsError::Schema(format!(
            "dataset has {} steps, market has {}",
            dataset.n_steps(),
            market.n_steps
        )));
    }
    let inc = dataset.increments(market);
    let pi = dataset.rollback_portfolio(&inc, market.gamma());
    Ok(Rolled { inc, pi })
}

fn moments_at(
    t: usize,
    dataset: &HedgeDataset,
    rolled: &Rolled,
    basis: &BasisSet,
    gamma: f64,
    eps: f64,
) -> Result<ConditionalMoments> {
    let design = basis.design_matrix(dataset.x.column(t).as_slice());
    let pi_next: Vec<f64> = rolled.pi.column(t + 1).iter().copied().collect();
    ConditionalMoments::from_step(
        &design,
        rolled.inc.ds.column(t).as_slice(),
        rolled.inc.ds_hat.column(t).as_slice(),
        &demean(&pi_next)?,
        gamma,
        eps,
    )
    .map_err(|e| e.at_step(t))
}

/// Conditional moments at step `t` of a dataset.
pub fn conditional_moments(
    t: usize,
    dataset: &HedgeDataset,
    basis: &BasisSet,
    market: &MarketParams,
    eps: f64,
) -> Result<ConditionalMoments> {
    if t >= dataset.n_steps() {
        return Err(QlbsError::Parameter(format!("step {t} has no successor")));
    }
    let rolled = roll(dataset, market)?;
    moments_at(t, dataset, &rolled, basis, market.gamma(), eps)
}

/// `(c0, c1, c2)` per path at step `t`.
pub fn expected_reward_coeffs(
    t: usize,
    dataset: &HedgeDataset,
    basis: &BasisSet,
    market: &MarketParams,
    lambda: f64,
) -> Result<Vec<RewardCoeffs>> {
    let m = conditional_moments(t, dataset, basis, market, DEFAULT_REGULARIZATION)?;
    Ok((0..m.len()).map(|k| m.coeffs(k, lambda)).collect())
}

/// Gaussian action density implied by the expected-reward coefficients.
pub fn maxent_density(a: f64, c: &RewardCoeffs) -> f64 {
    let mean = c.c1 / c.c2;
    (c.c2 / (2.0 * std::f64::consts::PI)).sqrt() * (-0.5 * c.c2 * (a - mean) * (a - mean)).exp()
}

/// Log-likelihood of the observed hedges at one step, without the
/// `-log(2 pi) / 2` constant. Returns `-inf` if any `c2` is not positive.
pub fn action_loglik(lambda: f64, moments: &ConditionalMoments, actions: &[f64]) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(QlbsError::Domain(format!("lambda must be positive, got {lambda}")));
    }
    Ok(loglik_unchecked(lambda, moments, actions))
}

fn loglik_unchecked(lambda: f64, moments: &ConditionalMoments, actions: &[f64]) -> f64 {
    let mut degenerate = false;
    let ll = stats::sum((0..actions.len()).map(|k| {
        let c = moments.coeffs(k, lambda);
        if !(c.c2 > 0.0) {
            degenerate = true;
            return 0.0;
        }
        let dev = actions[k] - c.c1 / c.c2;
        0.5 * c.c2.ln() - 0.5 * c.c2 * dev * dev
    }));
    if degenerate {
        f64::NEG_INFINITY
    } else {
        ll
    }
}

/// Result of maximising the one-step likelihood over `log(lambda)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaFit {
    pub lambda: f64,
    pub loglik: f64,
    pub at_boundary: bool,
    /// `-d^2 LL / d(log lambda)^2` at the maximum.
    pub information: f64,
}

/// Golden-section search of `LL` on `log(lambda)` over `[1e-9, 10]`.
pub fn maximize_loglik(moments: &ConditionalMoments, actions: &[f64]) -> LambdaFit {
    let f = |u: f64| loglik_unchecked(u.exp(), moments, actions);
    let (lo, hi) = (LAMBDA_MIN.ln(), LAMBDA_MAX.ln());
    let ratio = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (lo, hi);
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > 1e-7 {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - ratio * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + ratio * (b - a);
            fd = f(d);
        }
    }
    let mut u = 0.5 * (a + b);
    let mut ll = f(u);
    for end in [lo, hi] {
        let fe = f(end);
        if fe > ll {
            u = end;
            ll = fe;
        }
    }
    let at_boundary = (u - lo).abs() < 1e-5 || (hi - u).abs() < 1e-5;
    let h = 1e-3;
    let information = -(f(u + h) - 2.0 * ll + f(u - h)) / (h * h);
    LambdaFit { lambda: u.exp(), loglik: ll, at_boundary, information }
}

/// Implied risk aversion per time step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaTermStructure {
    pub lambda_impl: Vec<f64>,
    pub loglik: Vec<f64>,
    pub boundary_flag: Vec<bool>,
    /// Observed information of each step's maximum, used as median weights.
    pub information: Vec<f64>,
    /// Information-weighted median of `lambda_impl`.
    pub summary: f64,
}

pub fn estimate_lambda(
    dataset: &HedgeDataset,
    market: &MarketParams,
    basis: &BasisSet,
) -> Result<LambdaTermStructure> {
    estimate_lambda_with(dataset, market, basis, DEFAULT_REGULARIZATION)
}

pub fn estimate_lambda_with(
    dataset: &HedgeDataset,
    market: &MarketParams,
    basis: &BasisSet,
    eps: f64,
) -> Result<LambdaTermStructure> {
    let per_step = step_moments(dataset, market, basis, eps)?;
    let fits: Vec<LambdaFit> = per_step
        .par_iter()
        .enumerate()
        .map(|(t, m)| {
            let a: Vec<f64> = dataset.a.column(t).iter().copied().collect();
            maximize_loglik(m, &a)
        })
        .collect();
    let lambda_impl: Vec<f64> = fits.iter().map(|f| f.lambda).collect();
    let information: Vec<f64> = fits.iter().map(|f| f.information).collect();
    let summary = stats::weighted_median(&lambda_impl, &information);
    Ok(LambdaTermStructure {
        loglik: fits.iter().map(|f| f.loglik).collect(),
        boundary_flag: fits.iter().map(|f| f.at_boundary).collect(),
        lambda_impl,
        information,
        summary,
    })
}

/// Conditional moments for every step.
pub fn step_moments(
    dataset: &HedgeDataset,
    market: &MarketParams,
    basis: &BasisSet,
    eps: f64,
) -> Result<Vec<ConditionalMoments>> {
    if dataset.n_paths() < 2 {
        return Err(QlbsError::DatasetTooSmall { needed: 2, got: dataset.n_paths() });
    }
    let rolled = roll(dataset, market)?;
    let gamma = market.gamma();
    (0..dataset.n_steps())
        .map(|t| moments_at(t, dataset, &rolled, basis, gamma, eps))
        .collect()
}

/// Per-step bootstrap interval for the implied risk aversion.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaInterval {
    pub lower: f64,
    pub upper: f64,
    pub replicates: Vec<f64>,
}

impl LambdaInterval {
    pub fn contains(&self, lambda: f64) -> bool {
        self.lower <= lambda && lambda <= self.upper
    }
}

/// Normal-approximation bootstrap interval on `log(lambda)` at the given
/// coverage, resampling paths with replacement. The conditional moments
/// are fitted once on the full sample.
pub fn bootstrap_lambda(
    dataset: &HedgeDataset,
    market: &MarketParams,
    basis: &BasisSet,
    n_resamples: usize,
    level: f64,
    seed: u64,
) -> Result<Vec<LambdaInterval>> {
    if n_resamples < 2 {
        return Err(QlbsError::Parameter("bootstrap needs at least two resamples".into()));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(QlbsError::Parameter(format!("coverage level must be in (0, 1), got {level}")));
    }
    let per_step = step_moments(dataset, market, basis, DEFAULT_REGULARIZATION)?;
    let n = dataset.n_paths();
    let draws: Vec<Vec<usize>> = (0..n_resamples)
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(b as u64);
            (0..n).map(|_| rng.random_range(0..n)).collect()
        })
        .collect();
    let z = Normal::standard().inverse_cdf(0.5 + 0.5 * level);

    Ok(per_step
        .par_iter()
        .enumerate()
        .map(|(t, m)| {
            let a: Vec<f64> = dataset.a.column(t).iter().copied().collect();
            let center = maximize_loglik(m, &a).lambda.ln();
            let replicates: Vec<f64> = draws
                .iter()
                .map(|idx| {
                    let sub = m.select(idx);
                    let sub_a: Vec<f64> = idx.iter().map(|&k| a[k]).collect();
                    maximize_loglik(&sub, &sub_a).lambda
                })
                .collect();
            let logs: Vec<f64> = replicates.iter().map(|l| l.ln()).collect();
            let half = z * stats::sample_std(&logs);
            LambdaInterval { lower: (center - half).exp(), upper: (center + half).exp(), replicates }
        })
        .collect())
}

/// Draws hedges from the maximum-entropy policy at risk aversion `lambda`,
/// walking backward so that each step's portfolio reflects the hedges
/// already drawn for later steps. Rewards are left unobserved.
pub fn sample_maxent_actions(
    paths: &PathSet,
    basis: &BasisSet,
    payoff: &[f64],
    lambda: f64,
    seed: u64,
) -> Result<HedgeDataset> {
    if !(lambda > 0.0) {
        return Err(QlbsError::Domain(format!("lambda must be positive, got {lambda}")));
    }
    let n_paths = paths.n_paths();
    let n = paths.n_steps();
    let gamma = paths.params.gamma();
    let inc = increments(paths);
    let noise: Vec<Vec<f64>> = (0..n_paths)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
        })
        .collect();

    let mut a = DMatrix::zeros(n_paths, n);
    let mut pi_next = payoff.to_vec();
    for t in (0..n).rev() {
        let design = basis.design_matrix(paths.x.column(t).as_slice());
        let m = ConditionalMoments::from_step(
            &design,
            inc.ds.column(t).as_slice(),
            inc.ds_hat.column(t).as_slice(),
            &demean(&pi_next)?,
            gamma,
            DEFAULT_REGULARIZATION,
        )
        .map_err(|e| e.at_step(t))?;
        let a_t: Vec<f64> = (0..n_paths)
            .map(|k| {
                let c = m.coeffs(k, lambda);
                if c.c2 > 0.0 {
                    c.c1 / c.c2 + noise[k][t] / c.c2.sqrt()
                } else {
                    0.0
                }
            })
            .collect();
        pi_next = portfolio_rollback(&pi_next, &a_t, inc.ds.column(t).as_slice(), gamma);
        a.set_column(t, &DVector::from_vec(a_t));
    }
    HedgeDataset::new(paths.x.clone(), a, None, payoff.to_vec())
}

/// Multiplies every hedge by an independent uniform draw from `[1 - eta, 1 + eta]`.
pub fn perturb_actions(a: &DMatrix<f64>, eta: f64, seed: u64) -> DMatrix<f64> {
    let mut out = a.clone();
    for k in 0..a.nrows() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(k as u64);
        for t in 0..a.ncols() {
            let u: f64 = rng.random_range(-1.0..=1.0);
            out[(k, t)] *= 1.0 + eta * u;
        }
    }
    out
}
