//! Off-policy FQI: hedges multiplied by uniform noise in [1 - eta, 1 + eta].
//!
//! cargo run --release --example off_policy_noise

use qlbs::experiments::{run_offpolicy_noise, ExperimentConfig, Profile};

fn main() -> qlbs::Result<()> {
    let cfg = ExperimentConfig { n_noise_scenarios: 3, ..ExperimentConfig::with_profile(Profile::Desk) };
    let report = run_offpolicy_noise(&cfg)?;
    println!("config {}", report.config_hash);
    println!("  eta   count       mean        std   mean|dev|");
    for row in &report.summary {
        println!(
            "{:>5.2} {:>6} {:>10.4} {:>10.4} {:>11}",
            row.eta,
            row.count,
            row.mean,
            row.std,
            row.mean_abs_deviation.map_or("-".into(), |d| format!("{d:.4}"))
        );
    }
    Ok(())
}
