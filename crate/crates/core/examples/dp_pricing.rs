//! Risk-averse hedging and pricing by backward dynamic programming, with the
//! risk-neutral limit for comparison.
//!
//! cargo run --release --example dp_pricing

use qlbs::bsm::{bs_put_delta, bs_put_price};
use qlbs::{simulate_paths, solve_dp, stats, BasisSet, EuropeanPut, MarketParams, RiskParams};

fn main() -> qlbs::Result<()> {
    let put = EuropeanPut::new(100.0, 1.0)?;
    let bs = bs_put_price(100.0, 100.0, 0.03, 0.15, 1.0)?;

    let market = MarketParams::benchmark();
    let paths = simulate_paths(&market, 10_000, 42)?;
    let basis = BasisSet::from_states(&paths.x, 12)?;
    let dp = solve_dp(&paths, &basis, &put, &RiskParams::risk_only(1e-3)?)?;
    println!("lambda=1e-3: price {:.4} (BS {bs:.4}), mean hedge at t=0 {:.4}", dp.price, stats::mean(dp.a_star.column(0).as_slice()));

    // With mu = r and a vanishing lambda the hedge tends to the BS delta.
    let rn = market.with_mu(market.r);
    let paths = simulate_paths(&rn, 10_000, 42)?;
    let basis = BasisSet::from_states(&paths.x, 12)?;
    let dp = solve_dp(&paths, &basis, &put, &RiskParams::risk_only(1e-9)?)?;
    println!(
        "lambda=1e-9, mu=r: price {:.4}, hedge at t=0 {:.4} (BS delta {:.4})",
        dp.price,
        stats::mean(dp.a_star.column(0).as_slice()),
        bs_put_delta(100.0, 100.0, 0.03, 0.15, 1.0)?
    );

    let mut out = Vec::new();
    qlbs::io::write_json(&qlbs::io::DpSummary::from(&dp), &mut out)?;
    println!("{}", String::from_utf8_lossy(&out).lines().take(6).collect::<Vec<_>>().join("\n"));
    Ok(())
}
