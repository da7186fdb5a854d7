//! Simulate lognormal paths and inspect the state transform.
//!
//! cargo run --release --example simulate_paths

use qlbs::market::from_state;
use qlbs::{simulate_paths, stats, MarketParams};

fn main() -> qlbs::Result<()> {
    let market = MarketParams::benchmark();
    let paths = simulate_paths(&market, 10_000, 42)?;
    let s_t = paths.terminal_prices();
    println!("{} paths, {} steps, seed {}", paths.n_paths(), paths.n_steps(), paths.seed);
    println!("E[S_T] = {:.4} (lognormal mean {:.4})", stats::mean(&s_t), market.s0 * (market.mu * market.t_maturity).exp());

    // The state removes the deterministic drift, so its mean stays at log S_0.
    for t in [0, 6, 12, 24] {
        let x: Vec<f64> = paths.x.column(t).iter().copied().collect();
        println!("t={t:>2}  mean X {:.4}  std X {:.4}", stats::mean(&x), stats::sample_std(&x));
    }
    let k = 7;
    println!("path {k} at t=12: S {:.4}, rebuilt from X {:.4}", paths.s[(k, 12)], from_state(paths.x[(k, 12)], 12, &market));

    let mut out = Vec::new();
    qlbs::io::write_paths_csv(&paths, &mut out)?;
    println!("paths CSV is {} bytes; header {:?}", out.len(), String::from_utf8_lossy(&out).lines().next().unwrap_or(""));
    Ok(())
}
