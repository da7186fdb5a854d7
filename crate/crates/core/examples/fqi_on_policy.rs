//! Fitted Q Iteration on the DP's own hedges and rewards, and the same run
//! with rewards rebuilt from the hedges at the known risk aversion.
//!
//! cargo run --release --example fqi_on_policy

use qlbs::dp::solve_dp_with_payoff;
use qlbs::irl::rewards_from_actions;
use qlbs::{simulate_paths, solve_fqi, BasisSet, HedgeDataset, MarketParams, RiskParams, DEFAULT_REGULARIZATION};

fn main() -> qlbs::Result<()> {
    let market = MarketParams::benchmark();
    let risk = RiskParams::risk_only(1e-3)?;
    let paths = simulate_paths(&market, 10_000, 42)?;
    let basis = BasisSet::from_states(&paths.x, 12)?;
    let payoff: Vec<f64> = paths.terminal_prices().iter().map(|s| (100.0 - s).max(0.0)).collect();
    let dp = solve_dp_with_payoff(&paths, &basis, &payoff, &risk, DEFAULT_REGULARIZATION)?;

    let data = HedgeDataset::on_policy(&paths, &dp);
    let fqi = solve_fqi(&data, &basis, &market, &risk)?;
    println!("DP price  {:.6}", dp.price);
    println!("FQI price {:.6}  (argmax read-out {:.6})", fqi.price, fqi.argmax_price);
    println!(
        "fitted curvature >= 0 at {:.1}% of (path, step) points; convex t=0 read-outs {}",
        100.0 * fqi.concavity.violation_fraction(),
        fqi.concavity.readout_convex
    );

    let unlabeled = data.without_rewards();
    let rebuilt = unlabeled.with_rewards(rewards_from_actions(&unlabeled, risk.lambda, &market)?)?;
    let irl = solve_fqi(&rebuilt, &basis, &market, &risk)?;
    println!("price from rebuilt rewards {:.6} (gap {:.1e})", irl.price, (irl.price - fqi.price).abs());
    Ok(())
}
