//! Discrete-time option hedging and pricing as a risk-averse Markov decision
//! process.
//!
//! The crate covers the whole pipeline:
//!
//! - [`market`]: lognormal path simulation and the time-homogeneous state transform.
//! - [`basis`]: clamped B-spline bases used by every regression.
//! - [`bsm`]: closed-form Black-Scholes benchmarks.
//! - [`dp`]: the model-based backward recursion for hedges, portfolio values and Q-values.
//! - [`fqi`]: batch, off-policy Fitted Q Iteration on `(X, a, R, X')` tuples.
//! - [`irl`]: reward reconstruction from observed hedges and a per-step
//!   maximum-entropy estimate of the risk-aversion parameter.
//! - [`portfolio`]: option baskets on one underlying and exotic pricing by subtraction.
//! - [`experiments`]: seeded experiment runners producing CSV/JSON reports.

pub mod basis;
pub mod bsm;
pub mod dp;
pub mod error;
pub mod experiments;
pub mod fqi;
pub mod io;
pub mod irl;
pub mod market;
pub mod portfolio;
pub mod regression;
pub mod stats;

pub use basis::BasisSet;
pub use bsm::EuropeanPut;
pub use dp::{solve_dp, DpSolution, RiskParams};
pub use error::{QlbsError, Result};
pub use fqi::{solve_fqi, FqiSolution, HedgeDataset};
pub use irl::{estimate_lambda, LambdaTermStructure};
pub use market::{simulate_paths, MarketParams, PathSet, StepIncrements};
pub use portfolio::{OptionBasket, OptionKind};

/// Ridge term added to every normal-equation system unless overridden.
pub const DEFAULT_REGULARIZATION: f64 = 1e-3;
