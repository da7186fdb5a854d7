//! DP option price across a log grid of risk aversions, against Black-Scholes.
//!
//! cargo run --release --example price_vs_lambda

use qlbs::experiments::{run_price_vs_lambda, ExperimentConfig, Profile};

fn main() -> qlbs::Result<()> {
    let cfg = ExperimentConfig::with_profile(Profile::Desk);
    let report = run_price_vs_lambda(&cfg)?;
    println!("method     lambda     mean      std");
    for row in &report.summary {
        println!("{:<6} {:>10.2e} {:>8.4} {:>8.4}", row.method, row.lambda, row.mean, row.std);
    }
    let mut rows = Vec::new();
    report.write_rows_csv(&mut rows)?;
    println!("{} CSV rows", String::from_utf8_lossy(&rows).lines().count() - 1);
    Ok(())
}
