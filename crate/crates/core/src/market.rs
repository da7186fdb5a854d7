//! Lognormal stock paths, the time-homogeneous state transform and the
//! per-step increments consumed by every solver.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{QlbsError, Result};
use crate::stats;

/// Market and discretisation parameters.
///
/// Rates and volatilities are annualised; `dt` is the rebalancing interval in
/// years and `n_steps * dt == t_maturity`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarketParams {
    pub s0: f64,
    pub mu: f64,
    pub sigma: f64,
    pub r: f64,
    pub t_maturity: f64,
    pub dt: f64,
    pub n_steps: usize,
}

impl MarketParams {
    pub fn new(s0: f64, mu: f64, sigma: f64, r: f64, t_maturity: f64, dt: f64) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(QlbsError::Parameter(format!("dt must be positive, got {dt}")));
        }
        let n_steps = (t_maturity / dt).round().max(0.0) as usize;
        let params = Self { s0, mu, sigma, r, t_maturity, dt, n_steps };
        params.validate()?;
        Ok(params)
    }

    /// `S0 = 100`, `mu = 5%`, `sigma = 15%`, `r = 3%`, one year, 24 rebalancing dates.
    pub fn benchmark() -> Self {
        Self::new(100.0, 0.05, 0.15, 0.03, 1.0, 1.0 / 24.0).expect("valid defaults")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(QlbsError::Parameter(msg));
        if !(self.s0 > 0.0) {
            return bad(format!("s0 must be positive, got {}", self.s0));
        }
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return bad(format!("sigma must be positive, got {}", self.sigma));
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.r >= 0.0) || !self.r.is_finite() {
            return bad(format!("r must be nonnegative so that gamma <= 1, got {}", self.r));
        }
        if !self.mu.is_finite() {
            return bad(format!("mu must be finite, got {}", self.mu));
        }
        if self.n_steps == 0 {
            return bad("at least one rebalancing step is required".into());
        }
        if (self.n_steps as f64 * self.dt - self.t_maturity).abs() > 1e-12 {
            return bad(format!(
                "maturity {} is not a whole number of steps of length {}",
                self.t_maturity, self.dt
            ));
        }
        Ok(())
    }

    /// One-step discount factor `exp(-r dt)`.
    pub fn gamma(&self) -> f64 {
        (-self.r * self.dt).exp()
    }

    /// Time in years at step `t`.
    pub fn time(&self, step: usize) -> f64 {
        step as f64 * self.dt
    }

    fn log_drift(&self) -> f64 {
        self.mu - 0.5 * self.sigma * self.sigma
    }

    pub fn with_mu(mut self, mu: f64) -> Self {
        self.mu = mu;
        self
    }

    pub fn with_sigma(mut self, sigma: f64) -> Self {
        self.sigma = sigma;
        self
    }
}

/// Maps a price at step `t` to the state `X_t = log S_t - (mu - sigma^2/2) t`.
pub fn to_state(s_value: f64, step: usize, params: &MarketParams) -> Result<f64> {
    if !(s_value > 0.0) {
        return Err(QlbsError::Domain(format!("price must be positive, got {s_value}")));
    }
    Ok(s_value.ln() - params.log_drift() * params.time(step))
}

/// Inverse of [`to_state`].
pub fn from_state(x_value: f64, step: usize, params: &MarketParams) -> f64 {
    (x_value + params.log_drift() * params.time(step)).exp()
}

/// Simulated (or imported) prices and states, `n_paths x (n_steps + 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSet {
    pub s: DMatrix<f64>,
    pub x: DMatrix<f64>,
    pub seed: u64,
    pub params: MarketParams,
}

impl PathSet {
    /// Builds a path set from a price matrix, deriving the states.
    pub fn from_prices(params: MarketParams, s: DMatrix<f64>, seed: u64) -> Result<Self> {
        params.validate()?;
        if s.ncols() != params.n_steps + 1 {
            return Err(QlbsError::Schema(format!(
                "expected {} price columns, got {}",
                params.n_steps + 1,
                s.ncols()
            )));
        }
        if s.nrows() < 2 {
            return Err(QlbsError::DatasetTooSmall { needed: 2, got: s.nrows() });
        }
        for k in 0..s.nrows() {
            if ((s[(k, 0)] - params.s0) / params.s0).abs() > 1e-12 {
                return Err(QlbsError::Schema(format!(
                    "path {k} starts at {} instead of s0 = {}",
                    s[(k, 0)],
                    params.s0
                )));
            }
        }
        let mut x = DMatrix::zeros(s.nrows(), s.ncols());
        for t in 0..s.ncols() {
            for k in 0..s.nrows() {
                x[(k, t)] = to_state(s[(k, t)], t, &params)?;
            }
        }
        Ok(Self { s, x, seed, params })
    }

    pub fn n_paths(&self) -> usize {
        self.s.nrows()
    }

    pub fn n_steps(&self) -> usize {
        self.s.ncols() - 1
    }

    /// Prices at maturity.
    pub fn terminal_prices(&self) -> Vec<f64> {
        self.s.column(self.n_steps()).iter().copied().collect()
    }
}

/// Generates `n_paths` exact lognormal paths.
///
/// Path `k` draws its normals from its own ChaCha stream `k` under `seed`, so
/// the result does not depend on how paths are scheduled across threads.
pub fn simulate_paths(params: &MarketParams, n_paths: usize, seed: u64) -> Result<PathSet> {
    params.validate()?;
    if n_paths < 2 {
        return Err(QlbsError::DatasetTooSmall { needed: 2, got: n_paths });
    }
    let n = params.n_steps;
    let drift = params.log_drift() * params.dt;
    let vol = params.sigma * params.dt.sqrt();

    let rows: Vec<Vec<f64>> = (0..n_paths)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            let mut row = Vec::with_capacity(n + 1);
            let mut s = params.s0;
            row.push(s);
            for _ in 0..n {
                let z: f64 = StandardNormal.sample(&mut rng);
                s *= (drift + vol * z).exp();
                row.push(s);
            }
            row
        })
        .collect();

    let x = DMatrix::from_fn(n_paths, n + 1, |k, t| {
        rows[k][t].ln() - params.log_drift() * params.time(t)
    });
    // Prices are re-derived from the states so that anything rebuilt from a
    // state-only dataset sees bit-identical inputs.
    let s = DMatrix::from_fn(n_paths, n + 1, |k, t| from_state(x[(k, t)], t, params));
    Ok(PathSet { s, x, seed, params: *params })
}

/// Forward price increments `dS_t = S_{t+1} - S_t / gamma` and their
/// cross-path demeaned version, both `n_paths x n_steps`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepIncrements {
    pub ds: DMatrix<f64>,
    pub ds_hat: DMatrix<f64>,
}

impl StepIncrements {
    /// Increments from a price matrix and discount factor.
    pub fn from_prices(s: &DMatrix<f64>, gamma: f64) -> Self {
        let n_paths = s.nrows();
        let n_steps = s.ncols() - 1;
        let ds = DMatrix::from_fn(n_paths, n_steps, |k, t| s[(k, t + 1)] - s[(k, t)] / gamma);
        let mut ds_hat = ds.clone();
        for t in 0..n_steps {
            let m = stats::mean(ds.column(t).as_slice());
            ds_hat.column_mut(t).iter_mut().for_each(|v| *v -= m);
        }
        Self { ds, ds_hat }
    }
}

pub fn increments(paths: &PathSet) -> StepIncrements {
    StepIncrements::from_prices(&paths.s, paths.params.gamma())
}

/// Subtracts the cross-path mean.
pub fn demean(values: &[f64]) -> Result<Vec<f64>> {
    if values.len() < 2 {
        return Err(QlbsError::DatasetTooSmall { needed: 2, got: values.len() });
    }
    let m = stats::mean(values);
    Ok(values.iter().map(|v| v - m).collect())
}
