//! Seeded experiment runners: price versus risk aversion, on-policy RL/IRL
//! against DP, off-policy noise sweeps and implied risk-aversion recovery.
//!
//! Every grid cell is an isolated computation; cells run in parallel and the
//! report is assembled in grid order, so reruns are bit-identical.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::basis::BasisSet;
use crate::bsm::{bs_call_price, bs_put_price, EuropeanPut};
use crate::dp::{solve_dp_with_payoff, DpSolution, RiskParams};
use crate::error::{QlbsError, Result};
use crate::fqi::{solve_fqi_with, HedgeDataset};
use crate::irl::{bootstrap_lambda, estimate_lambda, perturb_actions, rewards_from_actions, sample_maxent_actions};
use crate::irl::{LambdaInterval, LambdaTermStructure};
use crate::market::{simulate_paths, MarketParams, PathSet};
use crate::portfolio::{basket_terminal_payoff, OptionBasket, OptionKind};
use crate::{stats, DEFAULT_REGULARIZATION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Desk,
    Paper,
}

impl Profile {
    pub fn n_paths(self) -> usize {
        match self {
            Profile::Desk => 5_000,
            Profile::Paper => 50_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptionSpec {
    Put(EuropeanPut),
    Basket(OptionBasket),
}

impl OptionSpec {
    pub fn terminal_payoff(&self, paths: &PathSet) -> Vec<f64> {
        match self {
            OptionSpec::Put(put) => paths.terminal_prices().into_iter().map(|s| put.payoff(s)).collect(),
            OptionSpec::Basket(b) => basket_terminal_payoff(b, &paths.terminal_prices()),
        }
    }

    /// Black-Scholes value of the position (sum over legs for a basket).
    pub fn bs_price(&self, market: &MarketParams) -> Result<f64> {
        let (s0, r, sigma, t) = (market.s0, market.r, market.sigma, market.t_maturity);
        match self {
            OptionSpec::Put(put) => bs_put_price(s0, put.strike, r, sigma, t),
            OptionSpec::Basket(b) => b
                .legs
                .iter()
                .map(|l| {
                    let unit = match l.kind {
                        OptionKind::Put => bs_put_price(s0, l.strike, r, sigma, t)?,
                        OptionKind::Call => bs_call_price(s0, l.strike, r, sigma, t)?,
                    };
                    Ok(l.quantity * unit)
                })
                .sum(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub market: MarketParams,
    pub option: OptionSpec,
    pub risk: RiskParams,
    pub n_paths: usize,
    /// Base seed of the path generator; run `r` uses `seed + r`.
    pub seed: u64,
    /// Independent seed stream for action noise and MaxEnt sampling.
    pub noise_seed: u64,
    pub n_mc_runs: usize,
    pub basis_m: usize,
    pub regularization: f64,
    pub lambda_grid: Vec<f64>,
    pub eta_grid: Vec<f64>,
    pub n_noise_scenarios: usize,
    pub n_bootstrap: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            market: MarketParams::benchmark(),
            option: OptionSpec::Put(EuropeanPut { strike: 100.0, maturity: 1.0 }),
            risk: RiskParams { lambda: 1e-3, risk_only_hedge: true },
            n_paths: Profile::Paper.n_paths(),
            seed: 42,
            noise_seed: 4242,
            n_mc_runs: 2,
            basis_m: 12,
            regularization: DEFAULT_REGULARIZATION,
            lambda_grid: log_grid(1e-5, 3e-3, 10),
            eta_grid: vec![0.15, 0.25, 0.35, 0.5],
            n_noise_scenarios: 5,
            n_bootstrap: 20,
        }
    }
}

/// `n` points spaced evenly in `log` between `lo` and `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    let mut grid: Vec<f64> = (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect();
    grid[0] = lo;
    grid[n - 1] = hi;
    grid
}

impl ExperimentConfig {
    pub fn with_profile(profile: Profile) -> Self {
        Self { n_paths: profile.n_paths(), ..Self::default() }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.market.validate()?;
        RiskParams::new(self.risk.lambda, self.risk.risk_only_hedge)?;
        if self.n_paths < 2 {
            return Err(QlbsError::DatasetTooSmall { needed: 2, got: self.n_paths });
        }
        if self.n_mc_runs == 0 {
            return Err(QlbsError::Parameter("at least one MC run is required".into()));
        }
        if let OptionSpec::Put(p) = &self.option {
            if (p.maturity - self.market.t_maturity).abs() > 1e-12 {
                return Err(QlbsError::Parameter("option maturity differs from market horizon".into()));
            }
        }
        if let OptionSpec::Basket(b) = &self.option {
            b.validate()?;
        }
        Ok(())
    }

    /// First 16 hex digits of the SHA-256 of the canonical JSON encoding.
    pub fn config_hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serialises");
        Sha256::digest(&json).iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn run_seed(&self, run: usize) -> u64 {
        self.seed.wrapping_add(run as u64)
    }

    fn risk_at(&self, lambda: f64) -> Result<RiskParams> {
        RiskParams::new(lambda, self.risk.risk_only_hedge)
    }

    /// Paths and basis for one MC run.
    pub fn simulate_run(&self, run: usize) -> Result<(PathSet, BasisSet)> {
        let paths = simulate_paths(&self.market, self.n_paths, self.run_seed(run))?;
        let basis = BasisSet::from_states(&paths.x, self.basis_m)?;
        Ok((paths, basis))
    }

    fn solve_dp(&self, paths: &PathSet, basis: &BasisSet, risk: &RiskParams) -> Result<DpSolution> {
        solve_dp_with_payoff(paths, basis, &self.option.terminal_payoff(paths), risk, self.regularization)
    }
}

/// Deterministic seed for one noise cell.
pub fn cell_seed(base: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(base, |acc, p| {
        let mut z = acc ^ p.wrapping_add(0x9e37_79b9_7f4a_7c15).wrapping_add(acc << 6).wrapping_add(acc >> 2);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub method: String,
    pub lambda: f64,
    pub eta: f64,
    pub scenario: usize,
    pub run: usize,
    pub seed: u64,
    pub config_hash: String,
    pub price: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: String,
    pub lambda: f64,
    pub eta: f64,
    pub count: usize,
    pub mean: f64,
    /// One sample standard deviation across the cells (zero for a single cell).
    pub std: f64,
    /// Mean absolute deviation from the same run's on-policy price (noise sweeps only).
    pub mean_abs_deviation: Option<f64>,
    pub deviation_std: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub experiment: String,
    pub config_hash: String,
    pub rows: Vec<ReportRow>,
    pub summary: Vec<SummaryRow>,
}

impl ExperimentReport {
    pub fn prices(&self, method: &str) -> Vec<f64> {
        self.rows.iter().filter(|r| r.method == method).map(|r| r.price).collect()
    }

    pub fn summary_for(&self, method: &str, lambda: f64, eta: f64) -> Option<&SummaryRow> {
        self.summary
            .iter()
            .find(|s| s.method == method && s.lambda == lambda && s.eta == eta)
    }

    /// `method,lambda,eta,scenario,run,seed,config_hash,price`.
    pub fn write_rows_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    /// `method,lambda,eta,count,mean,std,mean_abs_deviation,deviation_std`.
    pub fn write_summary_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for s in &self.summary {
            w.serialize(s)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn summarize(method: &str, lambda: f64, eta: f64, prices: &[f64]) -> SummaryRow {
    SummaryRow {
        method: method.to_string(),
        lambda,
        eta,
        count: prices.len(),
        mean: stats::mean(prices),
        std: stats::sample_std(prices),
        mean_abs_deviation: None,
        deviation_std: None,
    }
}

/// DP price across the lambda grid, plus the Black-Scholes reference row.
pub fn run_price_vs_lambda(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    if cfg.lambda_grid.is_empty() {
        return Err(QlbsError::Parameter("lambda grid is empty".into()));
    }
    let hash = cfg.config_hash();
    let per_run: Vec<Vec<ReportRow>> = (0..cfg.n_mc_runs)
        .into_par_iter()
        .map(|run| -> Result<Vec<ReportRow>> {
            let (paths, basis) = cfg.simulate_run(run)?;
            cfg.lambda_grid
                .par_iter()
                .map(|&lambda| {
                    let sol = cfg.solve_dp(&paths, &basis, &cfg.risk_at(lambda)?)?;
                    Ok(ReportRow {
                        method: "dp".into(),
                        lambda,
                        eta: 0.0,
                        scenario: 0,
                        run,
                        seed: cfg.run_seed(run),
                        config_hash: hash.clone(),
                        price: sol.price,
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let mut rows: Vec<ReportRow> = per_run.into_iter().flatten().collect();
    rows.sort_by(|a, b| a.lambda.total_cmp(&b.lambda).then(a.run.cmp(&b.run)));

    let mut summary: Vec<SummaryRow> = cfg
        .lambda_grid
        .iter()
        .map(|&l| {
            let p: Vec<f64> = rows.iter().filter(|r| r.lambda == l).map(|r| r.price).collect();
            summarize("dp", l, 0.0, &p)
        })
        .collect();
    let bs = cfg.option.bs_price(&cfg.market)?;
    rows.push(ReportRow {
        method: "bs".into(),
        lambda: 0.0,
        eta: 0.0,
        scenario: 0,
        run: 0,
        seed: cfg.seed,
        config_hash: hash.clone(),
        price: bs,
    });
    summary.push(summarize("bs", 0.0, 0.0, &[bs]));
    Ok(ExperimentReport { experiment: "price-vs-lambda".into(), config_hash: hash, rows, summary })
}

/// DP solution, then FQI on the DP hedges and rewards, then the IRL variant
/// that reconstructs rewards from hedges at the known lambda.
pub fn run_onpolicy_rl(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let hash = cfg.config_hash();
    let lambda = cfg.risk.lambda;
    let per_run: Vec<Vec<ReportRow>> = (0..cfg.n_mc_runs)
        .into_par_iter()
        .map(|run| -> Result<Vec<ReportRow>> {
            let (paths, basis) = cfg.simulate_run(run)?;
            let dp = cfg.solve_dp(&paths, &basis, &cfg.risk)?;
            let data = HedgeDataset::on_policy(&paths, &dp);
            let fqi = solve_fqi_with(&data, &basis, &cfg.market, &cfg.risk, cfg.regularization)?;
            let irl_data = data.without_rewards();
            let rebuilt = irl_data.with_rewards(rewards_from_actions(&irl_data, lambda, &cfg.market)?)?;
            let irl = solve_fqi_with(&rebuilt, &basis, &cfg.market, &cfg.risk, cfg.regularization)?;
            Ok([("dp", dp.price), ("fqi", fqi.price), ("irl", irl.price)]
                .into_iter()
                .map(|(m, price)| ReportRow {
                    method: m.into(),
                    lambda,
                    eta: 0.0,
                    scenario: 0,
                    run,
                    seed: cfg.run_seed(run),
                    config_hash: hash.clone(),
                    price,
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    let rows: Vec<ReportRow> = per_run.into_iter().flatten().collect();
    let summary = ["dp", "fqi", "irl"]
        .iter()
        .map(|m| {
            let p: Vec<f64> = rows.iter().filter(|r| r.method == *m).map(|r| r.price).collect();
            summarize(m, lambda, 0.0, &p)
        })
        .collect();
    Ok(ExperimentReport { experiment: "onpolicy-rl".into(), config_hash: hash, rows, summary })
}

/// Off-policy FQI on DP hedges multiplied by `U[1 - eta, 1 + eta]` noise, with
/// rewards recomputed for the perturbed hedges. Rows with `eta = 0` are the
/// on-policy reference.
pub fn run_offpolicy_noise(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    if cfg.eta_grid.is_empty() {
        return Err(QlbsError::Parameter("eta grid is empty".into()));
    }
    if cfg.eta_grid.iter().any(|e| !(*e >= 0.0 && *e < 1.0)) {
        return Err(QlbsError::Parameter("noise levels must lie in [0, 1)".into()));
    }
    let hash = cfg.config_hash();
    let lambda = cfg.risk.lambda;
    let per_run: Vec<Vec<ReportRow>> = (0..cfg.n_mc_runs)
        .into_par_iter()
        .map(|run| -> Result<Vec<ReportRow>> {
            let (paths, basis) = cfg.simulate_run(run)?;
            let dp = cfg.solve_dp(&paths, &basis, &cfg.risk)?;
            let data = HedgeDataset::on_policy(&paths, &dp);
            let row = |eta: f64, scenario: usize, price: f64| ReportRow {
                method: "fqi".into(),
                lambda,
                eta,
                scenario,
                run,
                seed: cfg.run_seed(run),
                config_hash: hash.clone(),
                price,
            };
            let on_policy = solve_fqi_with(&data, &basis, &cfg.market, &cfg.risk, cfg.regularization)?;
            let cells: Vec<(usize, usize)> = (0..cfg.eta_grid.len())
                .flat_map(|e| (0..cfg.n_noise_scenarios).map(move |s| (e, s)))
                .collect();
            let mut rows = vec![row(0.0, 0, on_policy.price)];
            let noisy: Vec<ReportRow> = cells
                .par_iter()
                .map(|&(e, s)| -> Result<ReportRow> {
                    let eta = cfg.eta_grid[e];
                    let seed = cell_seed(cfg.noise_seed, &[run as u64, e as u64, s as u64]);
                    let a = perturb_actions(&data.a, eta, seed);
                    let observed = HedgeDataset::new(data.x.clone(), a, None, data.terminal_payoff.clone())?;
                    let observed = observed.with_rewards(rewards_from_actions(&observed, lambda, &cfg.market)?)?;
                    let sol = solve_fqi_with(&observed, &basis, &cfg.market, &cfg.risk, cfg.regularization)?;
                    Ok(row(eta, s, sol.price))
                })
                .collect::<Result<_>>()?;
            rows.extend(noisy);
            Ok(rows)
        })
        .collect::<Result<_>>()?;
    let rows: Vec<ReportRow> = per_run.into_iter().flatten().collect();

    let reference: Vec<f64> = (0..cfg.n_mc_runs)
        .map(|run| {
            rows.iter()
                .find(|r| r.run == run && r.eta == 0.0)
                .map(|r| r.price)
                .expect("on-policy row per run")
        })
        .collect();
    let mut summary = vec![summarize("fqi", lambda, 0.0, &reference)];
    for &eta in &cfg.eta_grid {
        let cells: Vec<&ReportRow> = rows.iter().filter(|r| r.eta == eta).collect();
        let prices: Vec<f64> = cells.iter().map(|r| r.price).collect();
        let devs: Vec<f64> = cells.iter().map(|r| (r.price - reference[r.run]).abs()).collect();
        let mut s = summarize("fqi", lambda, eta, &prices);
        s.mean_abs_deviation = Some(stats::mean(&devs));
        s.deviation_std = Some(stats::sample_std(&devs));
        summary.push(s);
    }
    Ok(ExperimentReport { experiment: "offpolicy-noise".into(), config_hash: hash, rows, summary })
}

#[derive(Debug, Clone, PartialEq)]
pub struct IrlReport {
    pub config_hash: String,
    pub true_lambda: f64,
    pub term_structure: LambdaTermStructure,
    pub intervals: Vec<LambdaInterval>,
}

impl IrlReport {
    /// Fraction of steps whose bootstrap interval contains the generating lambda.
    pub fn coverage(&self) -> f64 {
        let hits = self.intervals.iter().filter(|i| i.contains(self.true_lambda)).count();
        hits as f64 / self.intervals.len() as f64
    }
}

/// Generate hedges from the maximum-entropy policy at the configured lambda on
/// run 0's paths, then recover the per-step implied lambda with
/// 90% bootstrap intervals.
pub fn run_irl_lambda(cfg: &ExperimentConfig) -> Result<IrlReport> {
    cfg.validate()?;
    let (paths, basis) = cfg.simulate_run(0)?;
    let payoff = cfg.option.terminal_payoff(&paths);
    let data = sample_maxent_actions(&paths, &basis, &payoff, cfg.risk.lambda, cell_seed(cfg.noise_seed, &[0]))?;
    let term_structure = estimate_lambda(&data, &cfg.market, &basis)?;
    let intervals = bootstrap_lambda(&data, &cfg.market, &basis, cfg.n_bootstrap, 0.9, cell_seed(cfg.noise_seed, &[1]))?;
    Ok(IrlReport { config_hash: cfg.config_hash(), true_lambda: cfg.risk.lambda, term_structure, intervals })
}
