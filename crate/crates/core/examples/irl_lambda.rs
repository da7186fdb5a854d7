//! Recover the risk-aversion parameter from hedges drawn out of the
//! maximum-entropy policy, with per-step bootstrap intervals.
//!
//! cargo run --release --example irl_lambda

use qlbs::experiments::{run_irl_lambda, ExperimentConfig, Profile};

fn main() -> qlbs::Result<()> {
    let cfg = ExperimentConfig::with_profile(Profile::Desk);
    let report = run_irl_lambda(&cfg)?;
    let ts = &report.term_structure;
    println!("true lambda {:.1e}, summary estimate {:.3e}", report.true_lambda, ts.summary);
    println!("step  lambda_impl   90% interval");
    for (t, (l, ci)) in ts.lambda_impl.iter().zip(&report.intervals).enumerate() {
        let flag = if ts.boundary_flag[t] { " (boundary)" } else { "" };
        println!("{t:>4}  {l:>11.3e}   [{:.2e}, {:.2e}]{flag}", ci.lower, ci.upper);
    }
    println!("coverage {:.1}%", 100.0 * report.coverage());
    Ok(())
}
