//! Baskets of European options on one underlying, priced as a single
//! replicating-portfolio problem, and exotic prices by subtraction.

use serde::{Deserialize, Serialize};

use crate::basis::BasisSet;
use crate::dp::{solve_dp_with_payoff, RiskParams};
use crate::error::{QlbsError, Result};
use crate::fqi::{solve_fqi_with, HedgeDataset};
use crate::market::PathSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptionKind {
    Put,
    Call,
}

/// One position in the basket; `market_price` is the quoted unit price, if any.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Leg {
    pub kind: OptionKind,
    pub strike: f64,
    pub quantity: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub market_price: Option<f64>,
}

impl Leg {
    pub fn put(strike: f64, quantity: f64) -> Self {
        Self { kind: OptionKind::Put, strike, quantity, market_price: None }
    }

    pub fn call(strike: f64, quantity: f64) -> Self {
        Self { kind: OptionKind::Call, strike, quantity, market_price: None }
    }

    pub fn with_market_price(mut self, price: f64) -> Self {
        self.market_price = Some(price);
        self
    }

    pub fn payoff(&self, s_t: f64) -> f64 {
        let unit = match self.kind {
            OptionKind::Put => (self.strike - s_t).max(0.0),
            OptionKind::Call => (s_t - self.strike).max(0.0),
        };
        self.quantity * unit
    }
}

/// Serialised as a bare JSON array of legs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct OptionBasket {
    pub legs: Vec<Leg>,
}

impl OptionBasket {
    pub fn new(legs: Vec<Leg>) -> Result<Self> {
        let basket = Self { legs };
        basket.validate()?;
        Ok(basket)
    }

    pub fn validate(&self) -> Result<()> {
        if self.legs.is_empty() {
            return Err(QlbsError::Schema("a basket needs at least one leg".into()));
        }
        for (i, leg) in self.legs.iter().enumerate() {
            if leg.quantity == 0.0 || !leg.quantity.is_finite() {
                return Err(QlbsError::Schema(format!("leg {i} has zero or non-finite quantity")));
            }
            if !(leg.strike >= 0.0) {
                return Err(QlbsError::Schema(format!("leg {i} has a negative strike")));
            }
        }
        Ok(())
    }

    /// Every leg's quantity multiplied by `k`.
    pub fn scaled(&self, k: f64) -> Self {
        Self {
            legs: self.legs.iter().map(|l| Leg { quantity: l.quantity * k, ..*l }).collect(),
        }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let basket: Self = serde_json::from_str(s)?;
        basket.validate()?;
        Ok(basket)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Aggregate payoff `sum_legs quantity * payoff(S_T)` per path.
pub fn basket_terminal_payoff(basket: &OptionBasket, s_t: &[f64]) -> Vec<f64> {
    s_t.iter()
        .map(|&s| basket.legs.iter().map(|l| l.payoff(s)).sum())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    Dp,
    /// On-policy fitted Q iteration on a dataset generated by the DP solution.
    Fqi,
}

/// Time-zero price `P_0` of the whole basket.
pub fn price_basket(
    basket: &OptionBasket,
    paths: &PathSet,
    basis: &BasisSet,
    risk: &RiskParams,
    solver: SolverKind,
    eps: f64,
) -> Result<f64> {
    basket.validate()?;
    let payoff = basket_terminal_payoff(basket, &paths.terminal_prices());
    let dp = solve_dp_with_payoff(paths, basis, &payoff, risk, eps)?;
    match solver {
        SolverKind::Dp => Ok(dp.price),
        SolverKind::Fqi => {
            let data = HedgeDataset::on_policy(paths, &dp);
            Ok(solve_fqi_with(&data, basis, &paths.params, risk, eps)?.price)
        }
    }
}

/// `C_e = P_0 - sum C_i`.
pub fn exotic_price_by_subtraction(p0: f64, known_prices: &[f64]) -> f64 {
    p0 - known_prices.iter().sum::<f64>()
}

/// Subtracts the quoted value of every leg except `exotic` from `p0`.
///
/// Each other leg must carry a market price; its contribution is
/// `quantity * market_price`.
pub fn exotic_price(basket: &OptionBasket, p0: f64, exotic: usize) -> Result<f64> {
    if exotic >= basket.legs.len() {
        return Err(QlbsError::Schema(format!(
            "exotic leg {exotic} is out of range for {} legs",
            basket.legs.len()
        )));
    }
    let known = basket
        .legs
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != exotic)
        .map(|(i, l)| {
            l.market_price
                .map(|p| p * l.quantity)
                .ok_or_else(|| QlbsError::Schema(format!("leg {i} has no market price")))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(exotic_price_by_subtraction(p0, &known) / basket.legs[exotic].quantity)
}
