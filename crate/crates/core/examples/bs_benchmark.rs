//! Closed-form Black-Scholes prices and deltas for the benchmark put.
//!
//! cargo run --release --example bs_benchmark

use qlbs::bsm::{bs_call_price, bs_put_delta, bs_put_price};

fn main() -> qlbs::Result<()> {
    let (s0, k, r, sigma, t) = (100.0, 100.0, 0.03, 0.15, 1.0);
    println!("ATM put  {:.6}  delta {:.6}", bs_put_price(s0, k, r, sigma, t)?, bs_put_delta(s0, k, r, sigma, t)?);
    println!("ATM call {:.6}", bs_call_price(s0, k, r, sigma, t)?);
    println!("strike   put       delta");
    for strike in [80.0, 90.0, 100.0, 110.0, 120.0] {
        println!("{strike:>6.1}   {:>7.4}   {:>7.4}", bs_put_price(s0, strike, r, sigma, t)?, bs_put_delta(s0, strike, r, sigma, t)?);
    }
    Ok(())
}
