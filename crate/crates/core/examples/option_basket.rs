//! Price a basket of puts and calls on one underlying, then back out one
//! leg's price from the others' quotes.
//!
//! cargo run --release --example option_basket

use qlbs::portfolio::{exotic_price, price_basket, Leg, SolverKind};
use qlbs::{simulate_paths, BasisSet, MarketParams, OptionBasket, RiskParams, DEFAULT_REGULARIZATION};

fn main() -> qlbs::Result<()> {
    let market = MarketParams::benchmark();
    let paths = simulate_paths(&market, 10_000, 42)?;
    let basis = BasisSet::from_states(&paths.x, 12)?;
    let risk = RiskParams::risk_only(1e-3)?;
    let price = |b: &OptionBasket, s| price_basket(b, &paths, &basis, &risk, s, DEFAULT_REGULARIZATION);

    let legs = vec![Leg::put(100.0, 1.0), Leg::call(110.0, 1.0), Leg::put(90.0, -2.0)];
    let basket = OptionBasket::new(legs.clone())?;
    let p_dp = price(&basket, SolverKind::Dp)?;
    println!("basket (DP)  {p_dp:.4}");
    println!("basket (FQI) {:.4}", price(&basket, SolverKind::Fqi)?);

    let standalone: Vec<f64> =
        legs.iter().map(|l| price(&OptionBasket::new(vec![Leg { quantity: 1.0, ..l.clone() }])?, SolverKind::Dp)).collect::<qlbs::Result<_>>()?;
    for (l, p) in legs.iter().zip(&standalone) {
        println!("  {:?} K={} x{}: standalone {p:.4}", l.kind, l.strike, l.quantity);
    }

    // Quote legs 1 and 2 at their standalone prices and solve for leg 0.
    let quoted = OptionBasket::new(
        legs.iter().zip(&standalone).enumerate().map(|(i, (l, p))| if i == 0 { l.clone() } else { l.clone().with_market_price(*p) }).collect(),
    )?;
    // With lambda > 0 the gap to the standalone price is the variance the legs
    // offset when hedged together.
    println!("leg 0 by subtraction {:.4} (standalone {:.4})", exotic_price(&quoted, p_dp, 0)?, standalone[0]);
    println!("{}", basket.to_json()?);
    Ok(())
}
