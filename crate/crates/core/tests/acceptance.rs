//! Acceptance checks at the stated tolerances. Prints one PASS/FAIL line per
//! criterion and exits non-zero if any criterion fails.

mod common;

use std::time::Instant;

use qlbs::bsm::{bs_call_price, bs_put_price};
use qlbs::dp::solve_dp_with_payoff;
use qlbs::experiments::{
    run_irl_lambda, run_offpolicy_noise, run_onpolicy_rl, ExperimentConfig, Profile,
};
use qlbs::fqi::{solve_fqi_with, HedgeDataset};
use qlbs::irl::{action_loglik, rewards_from_actions, sample_maxent_actions, step_moments};
use qlbs::portfolio::{exotic_price, price_basket, Leg, OptionBasket, SolverKind};
use qlbs::{solve_dp, stats, EuropeanPut, RiskParams};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn paper_scale() -> ExperimentConfig {
    ExperimentConfig::with_profile(Profile::Paper)
}

fn risk_neutral(cfg: ExperimentConfig) -> ExperimentConfig {
    ExperimentConfig {
        market: cfg.market.clone().with_mu(cfg.market.r),
        risk: RiskParams::risk_only(1e-9).unwrap(),
        ..cfg
    }
}

fn dp_prices(cfg: &ExperimentConfig) -> Vec<f64> {
    (0..cfg.n_mc_runs)
        .map(|run| {
            let (paths, basis) = cfg.simulate_run(run).unwrap();
            let payoff = cfg.option.terminal_payoff(&paths);
            solve_dp_with_payoff(&paths, &basis, &payoff, &cfg.risk, cfg.regularization).unwrap().price
        })
        .collect()
}

fn bs_atm() -> f64 {
    bs_put_price(100.0, 100.0, 0.03, 0.15, 1.0).unwrap()
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let paper_prices = dp_prices(&paper_scale());
    let elapsed = start.elapsed().as_secs_f64();
    let desk_prices = dp_prices(&ExperimentConfig::with_profile(Profile::Desk));
    let (pm, dm) = (stats::mean(&paper_prices), stats::mean(&desk_prices));
    let pass = (4.66..=5.14).contains(&pm) && (4.5..=5.3).contains(&dm) && elapsed < 300.0;
    outcome(
        pass,
        format!(
            "paper-scale mean {pm:.4} +/- {:.4} in [4.66, 5.14] ({elapsed:.1}s); desk-scale mean {dm:.4} in [4.5, 5.3]",
            stats::sample_std(&paper_prices)
        ),
    )
}

fn criterion_2() -> Outcome {
    let p = bs_atm();
    outcome(format!("{p:.2}") == "4.53", format!("bs_put_price = {p:.6}"))
}

fn criterion_3() -> Outcome {
    let cfg = risk_neutral(paper_scale());
    let prices = dp_prices(&cfg);
    let bs = bs_atm();
    let rel = (stats::mean(&prices) - bs).abs() / bs;
    outcome(rel <= 0.02, format!("lambda=1e-9, mu=r: DP {:.4} vs BS {bs:.4} ({:.2}%)", stats::mean(&prices), 100.0 * rel))
}

fn criteria_4_and_5() -> (Outcome, Outcome) {
    let cfg = paper_scale();
    let report = run_onpolicy_rl(&cfg).unwrap();
    let dp = report.summary_for("dp", cfg.risk.lambda, 0.0).unwrap();
    let fqi = report.summary_for("fqi", cfg.risk.lambda, 0.0).unwrap();
    let diff = (dp.mean - fqi.mean).abs();
    let c4 = outcome(
        diff <= 2.0 * dp.std,
        format!("DP {:.5} +/- {:.5}, FQI {:.5} +/- {:.5}, |diff| {diff:.2e} <= 2 std {:.2e}", dp.mean, dp.std, fqi.mean, fqi.std, 2.0 * dp.std),
    );

    // Reward reconstruction and the downstream solve, path by path.
    let (paths, basis) = cfg.simulate_run(0).unwrap();
    let payoff = cfg.option.terminal_payoff(&paths);
    let dp_sol = solve_dp_with_payoff(&paths, &basis, &payoff, &cfg.risk, cfg.regularization).unwrap();
    let data = HedgeDataset::on_policy(&paths, &dp_sol);
    let rebuilt = data.without_rewards();
    let rebuilt = rebuilt.with_rewards(rewards_from_actions(&rebuilt, cfg.risk.lambda, &cfg.market).unwrap()).unwrap();
    let reward_gap = (data.r.as_ref().unwrap() - rebuilt.r.as_ref().unwrap()).amax();
    let rl = solve_fqi_with(&data, &basis, &cfg.market, &cfg.risk, cfg.regularization).unwrap();
    let irl = solve_fqi_with(&rebuilt, &basis, &cfg.market, &cfg.risk, cfg.regularization).unwrap();
    let q_gap = (&rl.q_star - &irl.q_star).amax();
    let price_gaps: Vec<f64> = report
        .prices("fqi")
        .iter()
        .zip(report.prices("irl"))
        .map(|(a, b)| (a - b).abs())
        .collect();
    let price_gap = price_gaps.iter().fold(0.0f64, |m, v| m.max(*v));
    let c5 = outcome(
        reward_gap <= 1e-12 && q_gap <= 1e-12 && price_gap <= 1e-12,
        format!("max |R_RL - R_IRL| {reward_gap:.2e}, max |Q_RL - Q_IRL| {q_gap:.2e}, max price gap {price_gap:.2e}"),
    );
    (c4, c5)
}

fn criterion_6() -> Outcome {
    let cfg = paper_scale();
    let report = run_offpolicy_noise(&cfg).unwrap();
    let lambda = cfg.risk.lambda;
    let on = report.summary_for("fqi", lambda, 0.0).unwrap();
    let rows: Vec<_> = cfg.eta_grid.iter().map(|e| report.summary_for("fqi", lambda, *e).unwrap()).collect();
    let worst = rows.last().unwrap();
    let within = (worst.mean - on.mean).abs() <= 3.0 * worst.std;
    let devs: Vec<(f64, f64)> =
        rows.iter().map(|r| (r.mean_abs_deviation.unwrap(), r.deviation_std.unwrap())).collect();
    let monotone = devs.windows(2).all(|w| w[1].0 >= w[0].0 - w[0].1.max(w[1].1));
    let medians: Vec<String> = cfg
        .eta_grid
        .iter()
        .map(|e| {
            let mut d: Vec<f64> = report
                .rows
                .iter()
                .filter(|r| r.eta == *e)
                .map(|r| {
                    let reference = report.rows.iter().find(|x| x.run == r.run && x.eta == 0.0).unwrap().price;
                    (r.price - reference).abs()
                })
                .collect();
            d.sort_by(f64::total_cmp);
            format!("{:.3}", d[d.len() / 2])
        })
        .collect();
    outcome(
        within && monotone,
        format!(
            "on-policy {:.4}; eta=0.5 mean {:.4} +/- {:.4}; mean |dev| by eta {:?}; median |dev| by eta [{}]",
            on.mean,
            worst.mean,
            worst.std,
            devs.iter().map(|d| format!("{:.3}+/-{:.3}", d.0, d.1)).collect::<Vec<_>>(),
            medians.join(", ")
        ),
    )
}

fn criterion_7() -> Outcome {
    let cfg = paper_scale();
    let (paths, basis) = cfg.simulate_run(0).unwrap();
    let payoff = cfg.option.terminal_payoff(&paths);
    let data = sample_maxent_actions(&paths, &basis, &payoff, cfg.risk.lambda, 17).unwrap();
    let moments = step_moments(&data, &cfg.market, &basis, cfg.regularization).unwrap();
    let grid: Vec<f64> = qlbs::experiments::log_grid(1e-6, 1e-1, 50);
    let mut worst = f64::NEG_INFINITY;
    for (t, m) in moments.iter().enumerate() {
        let actions: Vec<f64> = data.a.column(t).iter().copied().collect();
        let ll: Vec<f64> = grid.iter().map(|l| action_loglik(*l, m, &actions).unwrap()).collect();
        for i in 1..ll.len() - 1 {
            worst = worst.max(ll[i + 1] - 2.0 * ll[i] + ll[i - 1]);
        }
    }
    let report = run_irl_lambda(&cfg).unwrap();
    let positive = report.term_structure.lambda_impl.iter().all(|l| *l > 0.0);
    let coverage = report.coverage();
    outcome(
        worst <= 1e-9 && positive && coverage >= 0.8,
        format!(
            "max second difference {worst:.3e}; estimates positive: {positive}; summary {:.4e}; 90% interval covers 1e-3 at {:.1}% of steps",
            report.term_structure.summary,
            100.0 * coverage
        ),
    )
}

fn criterion_8() -> Outcome {
    let cfg = paper_scale();
    let (paths, basis) = cfg.simulate_run(0).unwrap();
    let payoff = cfg.option.terminal_payoff(&paths);
    let dp = solve_dp_with_payoff(&paths, &basis, &payoff, &cfg.risk, cfg.regularization).unwrap();
    let fqi = solve_fqi_with(&HedgeDataset::on_policy(&paths, &dp), &basis, &cfg.market, &cfg.risk, cfg.regularization)
        .unwrap();
    let c = &fqi.concavity;
    outcome(
        c.readout_convex == 0 && c.total_violations() == 0,
        format!(
            "hard (t=0 read-out) violations {}; states with U2 >= 0: {} of {} ({:.2}%)",
            c.readout_convex,
            c.total_violations(),
            c.points_per_step * c.violations.len(),
            100.0 * c.violation_fraction()
        ),
    )
}

fn criterion_9() -> Outcome {
    let cfg = paper_scale();
    let lambda = cfg.risk.lambda;
    let put = OptionBasket::new(vec![Leg::put(100.0, 1.0)]).unwrap();
    let double = put.scaled(2.0);
    let mut lhs = Vec::new();
    let mut rhs = Vec::new();
    let mut reduction_gap = 0.0f64;
    for run in 0..cfg.n_mc_runs {
        let (paths, basis) = cfg.simulate_run(run).unwrap();
        let risk = |l: f64| RiskParams::risk_only(l).unwrap();
        lhs.push(price_basket(&double, &paths, &basis, &risk(lambda), SolverKind::Dp, cfg.regularization).unwrap());
        rhs.push(2.0 * price_basket(&put, &paths, &basis, &risk(2.0 * lambda), SolverKind::Dp, cfg.regularization).unwrap());
        let single = solve_dp(&paths, &basis, &EuropeanPut::new(100.0, 1.0).unwrap(), &risk(lambda)).unwrap().price;
        let basket = price_basket(&put, &paths, &basis, &risk(lambda), SolverKind::Dp, cfg.regularization).unwrap();
        reduction_gap = reduction_gap.max((single - basket).abs());
    }
    let homog_gap = (stats::mean(&lhs) - stats::mean(&rhs)).abs();
    let mc_std = stats::sample_std(&rhs);
    let homogeneous = homog_gap <= 2.0 * mc_std;

    // Risk-neutral limit: basket additivity and exotic recovery by subtraction.
    let rn = risk_neutral(cfg);
    let (paths, basis) = rn.simulate_run(0).unwrap();
    let legs = vec![Leg::put(100.0, 1.0), Leg::call(110.0, 1.0), Leg::put(90.0, 2.0)];
    let basket = OptionBasket::new(legs.clone()).unwrap();
    let m = &rn.market;
    let bs_leg = |l: &Leg| match l.kind {
        qlbs::OptionKind::Put => bs_put_price(m.s0, l.strike, m.r, m.sigma, m.t_maturity).unwrap(),
        qlbs::OptionKind::Call => bs_call_price(m.s0, l.strike, m.r, m.sigma, m.t_maturity).unwrap(),
    };
    let bs_sum: f64 = legs.iter().map(|l| l.quantity * bs_leg(l)).sum();
    let p0 = price_basket(&basket, &paths, &basis, &rn.risk, SolverKind::Dp, rn.regularization).unwrap();
    let additivity = (p0 - bs_sum).abs() / bs_sum;
    let standalone = |l: &Leg| {
        let b = OptionBasket::new(vec![Leg { quantity: 1.0, market_price: None, ..l.clone() }]).unwrap();
        price_basket(&b, &paths, &basis, &rn.risk, SolverKind::Dp, rn.regularization).unwrap()
    };
    let quoted = OptionBasket::new(
        legs.iter().enumerate().map(|(i, l)| if i == 0 { l.clone() } else { l.clone().with_market_price(standalone(l)) }).collect(),
    )
    .unwrap();
    let exotic = exotic_price(&quoted, p0, 0).unwrap();
    let leg0 = standalone(&legs[0]);
    let exotic_gap = (exotic - leg0).abs() / leg0;

    outcome(
        homogeneous && reduction_gap <= 1e-12 && additivity <= 0.02 && exotic_gap <= 0.02,
        format!(
            "2x put at lambda {:.4} vs 2 x put at 2 lambda {:.4} (gap {homog_gap:.2e}, 2 std {:.2e}); one-leg reduction gap {reduction_gap:.1e}; \
             lambda->0 basket {p0:.4} vs BS sum {bs_sum:.4} ({:.2}%); exotic by subtraction {exotic:.4} vs standalone {leg0:.4} ({:.2}%)",
            stats::mean(&lhs),
            stats::mean(&rhs),
            2.0 * mc_std,
            100.0 * additivity,
            100.0 * exotic_gap
        ),
    )
}

fn criterion_10() -> Outcome {
    use common::*;
    let paths = toy_paths();
    let basis = toy_basis(&paths);
    let payoff: Vec<f64> = paths.terminal_prices().iter().map(|s| (101.0 - s).max(0.0)).collect();
    let mut worst = 0.0f64;
    for (lambda, risk_only) in [(1e-3, true), (0.2, false)] {
        let risk = RiskParams::new(lambda, risk_only).unwrap();
        let oracle = brute_force(&paths, &payoff, lambda, risk_only);
        let dp = solve_dp_with_payoff(&paths, &basis, &payoff, &risk, EPS).unwrap();
        let fqi =
            solve_fqi_with(&HedgeDataset::on_policy(&paths, &dp), &basis, &paths.params, &risk, EPS).unwrap();
        for t in 0..paths.n_steps() {
            let phi: Vec<f64> = dp.phi.row(t).iter().copied().collect();
            let omega: Vec<f64> = dp.omega.row(t).iter().copied().collect();
            worst = worst
                .max(max_abs_diff(&phi, &oracle.phi[t]))
                .max(max_abs_diff(&omega, &oracle.omega[t]))
                .max(max_abs_diff(&flatten_w(&fqi.w[t]), &oracle.w[t]) / oracle.w[t].iter().fold(1.0f64, |m, v| m.max(v.abs())));
        }
        worst = worst.max((dp.price - oracle.dp_price).abs()).max((fqi.price - oracle.fqi_price).abs());
    }
    outcome(worst <= 1e-8, format!("3 paths, 2 steps, M=3: max coefficient gap {worst:.2e} (W relative to its largest entry)"))
}

fn main() {
    // `cargo test` passes harness flags such as `--quiet`; a name filter that
    // does not mention acceptance skips the run.
    if let Some(filter) = std::env::args().skip(1).find(|a| !a.starts_with('-')) {
        if !"acceptance".contains(filter.as_str()) {
            return;
        }
    }
    let names = [
        "paper-scale DP price",
        "Black-Scholes benchmark",
        "lambda -> 0 convergence",
        "on-policy DP = FQI",
        "RL = IRL with known lambda",
        "off-policy noise tolerance",
        "log-likelihood concavity and lambda recovery",
        "fitted Q concave in the hedge",
        "portfolio homogeneity, reduction, additivity",
        "oracle equivalence on tiny instances",
    ];
    let (c4, c5) = criteria_4_and_5();
    let results = vec![
        criterion_1(),
        criterion_2(),
        criterion_3(),
        c4,
        c5,
        criterion_6(),
        criterion_7(),
        criterion_8(),
        criterion_9(),
        criterion_10(),
    ];
    let mut failed = Vec::new();
    for (i, (name, r)) in names.iter().zip(&results).enumerate() {
        let tag = if r.pass { "PASS" } else { "FAIL" };
        println!("criterion {:>2} [{tag}] {name}: {}", i + 1, r.detail);
        if !r.pass {
            failed.push(i + 1);
        }
    }
    println!("{} of {} criteria passed", results.len() - failed.len(), results.len());
    if !failed.is_empty() {
        println!("failing criteria: {failed:?}");
        std::process::exit(1);
    }
}
