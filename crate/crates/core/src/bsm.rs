//! Closed-form Black-Scholes prices and deltas used as benchmarks.

use serde::{Deserialize, Serialize};
use libm::erfc;

use crate::error::{QlbsError, Result};

/// European put on the simulated underlying.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EuropeanPut {
    pub strike: f64,
    pub maturity: f64,
}

impl EuropeanPut {
    pub fn new(strike: f64, maturity: f64) -> Result<Self> {
        if !(strike >= 0.0) {
            return Err(QlbsError::Parameter(format!("strike must be nonnegative, got {strike}")));
        }
        if !(maturity > 0.0) {
            return Err(QlbsError::Parameter(format!("maturity must be positive, got {maturity}")));
        }
        Ok(Self { strike, maturity })
    }

    pub fn payoff(&self, s_t: f64) -> f64 {
        (self.strike - s_t).max(0.0)
    }
}

/// Standard normal CDF via `erfc`, accurate in both tails.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

fn d1_d2(s0: f64, strike: f64, r: f64, sigma: f64, t: f64) -> Result<(f64, f64)> {
    if !(s0 > 0.0) || !(sigma > 0.0) || !(t > 0.0) || !(strike >= 0.0) {
        return Err(QlbsError::Domain(format!(
            "Black-Scholes needs s0 > 0, sigma > 0, t > 0, strike >= 0 (got s0={s0}, sigma={sigma}, t={t}, strike={strike})"
        )));
    }
    let vol = sigma * t.sqrt();
    let d1 = ((s0 / strike).ln() + (r + 0.5 * sigma * sigma) * t) / vol;
    Ok((d1, d1 - vol))
}

pub fn bs_put_price(s0: f64, strike: f64, r: f64, sigma: f64, t: f64) -> Result<f64> {
    let (d1, d2) = d1_d2(s0, strike, r, sigma, t)?;
    Ok(strike * (-r * t).exp() * norm_cdf(-d2) - s0 * norm_cdf(-d1))
}

pub fn bs_call_price(s0: f64, strike: f64, r: f64, sigma: f64, t: f64) -> Result<f64> {
    let (d1, d2) = d1_d2(s0, strike, r, sigma, t)?;
    Ok(s0 * norm_cdf(d1) - strike * (-r * t).exp() * norm_cdf(d2))
}

/// `N(d1) - 1`: stock position that hedges a long put.
pub fn bs_put_delta(s0: f64, strike: f64, r: f64, sigma: f64, t: f64) -> Result<f64> {
    let (d1, _) = d1_d2(s0, strike, r, sigma, t)?;
    Ok(-norm_cdf(-d1))
}

pub fn bs_call_delta(s0: f64, strike: f64, r: f64, sigma: f64, t: f64) -> Result<f64> {
    let (d1, _) = d1_d2(s0, strike, r, sigma, t)?;
    Ok(norm_cdf(d1))
}
