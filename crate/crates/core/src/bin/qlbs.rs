use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};

use qlbs::experiments::{
    run_irl_lambda, run_offpolicy_noise, run_price_vs_lambda, ExperimentConfig, ExperimentReport,
    OptionSpec, Profile,
};
use qlbs::fqi::{solve_fqi_with, HedgeDataset};
use qlbs::io::{
    read_dataset_csv, write_dataset_csv, write_dp_csv, write_lambda_csv, write_lambda_intervals_csv,
    write_json, write_paths_csv, DpSummary, FqiExport,
};
use qlbs::irl::{estimate_lambda, perturb_actions, rewards_from_actions};
use qlbs::portfolio::{exotic_price, price_basket, OptionBasket, SolverKind};
use qlbs::{stats, BasisSet, RiskParams};

#[derive(Parser)]
#[command(name = "qlbs", version, about = "Discrete-time option pricing and hedging by Q-learning")]
struct Cli {
    /// JSON experiment config; missing fields take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Number of simulated paths (overrides the profile).
    #[arg(long, global = true)]
    paths: Option<usize>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// desk = 5,000 paths, paper = 50,000 paths. Defaults to desk without a config file.
    #[arg(long, global = true, value_enum)]
    profile: Option<ProfileArg>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProfileArg {
    Desk,
    Paper,
}

#[derive(Clone, Copy, ValueEnum)]
enum SolverArg {
    Dp,
    Fqi,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate price paths. CSV: path,step,s,x
    Simulate,
    /// Price by backward dynamic programming. CSV (first run): path,step,a,pi,q,reward
    PriceDp {
        #[arg(long)]
        lambda: Option<f64>,
        /// JSON summary of the first run: price and per-step coefficients.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Price by fitted Q iteration on DP hedges (optionally noisy) or on a
    /// dataset read from disk. CSV: path,step,x,a,r of the dataset used
    PriceFqi {
        #[arg(long)]
        lambda: Option<f64>,
        /// Multiply hedges by U[1-eta, 1+eta] and recompute rewards.
        #[arg(long, default_value_t = 0.0)]
        eta: f64,
        /// Dataset CSV with columns path,step,x,a[,r].
        #[arg(long, requires = "payoffs")]
        dataset: Option<PathBuf>,
        /// Terminal payoff CSV with columns path,payoff.
        #[arg(long)]
        payoffs: Option<PathBuf>,
        /// JSON export: price and the fitted coefficient matrices.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Implied risk aversion per step. With --dataset, estimated from the file;
    /// otherwise from hedges sampled at the configured lambda, with bootstrap
    /// intervals. CSV: step,lambda_impl,loglik,boundary_flag[,lower,upper]
    IrlLambda {
        #[arg(long, requires = "payoffs")]
        dataset: Option<PathBuf>,
        #[arg(long)]
        payoffs: Option<PathBuf>,
    },
    /// DP price over the lambda grid with a Black-Scholes reference row.
    /// CSV: method,lambda,eta,scenario,run,seed,config_hash,price
    SweepLambda {
        /// Write the per-lambda mean/std table here as well.
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Off-policy FQI over the noise grid.
    /// CSV: method,lambda,eta,scenario,run,seed,config_hash,price
    SweepNoise {
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Price a basket of puts and calls; optionally back out one leg.
    /// CSV: run,seed,config_hash,basket_price[,exotic_price]
    PriceBasket {
        /// Basket JSON (array of legs); defaults to the basket in the config.
        #[arg(long)]
        basket: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "dp")]
        solver: SolverArg,
        /// Index of the leg to price by subtracting the quoted others.
        #[arg(long)]
        exotic: Option<usize>,
    },
}

fn load_config(cli: &Cli) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            ExperimentConfig::from_json(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => ExperimentConfig::with_profile(Profile::Desk),
    };
    if let Some(p) = cli.profile {
        cfg.n_paths = match p {
            ProfileArg::Desk => Profile::Desk,
            ProfileArg::Paper => Profile::Paper,
        }
        .n_paths();
    }
    if let Some(n) = cli.paths {
        cfg.n_paths = n;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn output(path: &Option<PathBuf>) -> anyhow::Result<Option<BufWriter<File>>> {
    path.as_ref()
        .map(|p| File::create(p).map(BufWriter::new).with_context(|| format!("creating {}", p.display())))
        .transpose()
}

fn open(p: &Path) -> anyhow::Result<File> {
    File::open(p).with_context(|| format!("opening {}", p.display()))
}

fn with_lambda(cfg: &mut ExperimentConfig, lambda: Option<f64>) -> anyhow::Result<()> {
    if let Some(l) = lambda {
        cfg.risk = RiskParams::new(l, cfg.risk.risk_only_hedge)?;
    }
    Ok(())
}

fn print_report(report: &ExperimentReport, summary: &Option<PathBuf>, out: &Option<PathBuf>) -> anyhow::Result<()> {
    report.write_summary_csv(io::stdout().lock())?;
    if let Some(w) = output(summary)? {
        report.write_summary_csv(w)?;
    }
    if let Some(w) = output(out)? {
        report.write_rows_csv(w)?;
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut cfg = load_config(&cli)?;
    let mut stdout = io::stdout().lock();
    match &cli.command {
        Command::Simulate => {
            let (paths, _) = cfg.simulate_run(0)?;
            let s_t = paths.terminal_prices();
            writeln!(
                stdout,
                "paths={} steps={} mean_terminal={:.6}",
                paths.n_paths(),
                paths.n_steps(),
                stats::mean(&s_t)
            )?;
            if let Some(w) = output(&cli.out)? {
                write_paths_csv(&paths, w)?;
            }
        }
        Command::PriceDp { lambda, json } => {
            with_lambda(&mut cfg, *lambda)?;
            let mut prices = Vec::new();
            for run in 0..cfg.n_mc_runs {
                let (paths, basis) = cfg.simulate_run(run)?;
                let payoff = cfg.option.terminal_payoff(&paths);
                let sol = qlbs::dp::solve_dp_with_payoff(&paths, &basis, &payoff, &cfg.risk, cfg.regularization)?;
                writeln!(stdout, "run={run} seed={} price={:.6}", cfg.run_seed(run), sol.price)?;
                if run == 0 {
                    if let Some(w) = output(&cli.out)? {
                        write_dp_csv(&sol, w)?;
                    }
                    if let Some(w) = output(json)? {
                        write_json(&DpSummary::from(&sol), w)?;
                    }
                }
                prices.push(sol.price);
            }
            writeln!(stdout, "mean={:.6} std={:.6}", stats::mean(&prices), stats::sample_std(&prices))?;
        }
        Command::PriceFqi { lambda, eta, dataset, payoffs, json } => {
            with_lambda(&mut cfg, *lambda)?;
            let (data, basis) = match (dataset, payoffs) {
                (Some(d), Some(p)) => {
                    let data = read_dataset_csv(open(d)?, open(p)?)?;
                    let data = match data.r {
                        Some(_) => data,
                        None => {
                            let r = rewards_from_actions(&data, cfg.risk.lambda, &cfg.market)?;
                            data.with_rewards(r)?
                        }
                    };
                    let basis = BasisSet::from_states(&data.x, cfg.basis_m)?;
                    (data, basis)
                }
                _ => {
                    let (paths, basis) = cfg.simulate_run(0)?;
                    let payoff = cfg.option.terminal_payoff(&paths);
                    let dp = qlbs::dp::solve_dp_with_payoff(&paths, &basis, &payoff, &cfg.risk, cfg.regularization)?;
                    let mut data = HedgeDataset::on_policy(&paths, &dp);
                    if *eta > 0.0 {
                        let a = perturb_actions(&data.a, *eta, cfg.noise_seed);
                        data = HedgeDataset::new(data.x.clone(), a, None, data.terminal_payoff.clone())?;
                        let r = rewards_from_actions(&data, cfg.risk.lambda, &cfg.market)?;
                        data = data.with_rewards(r)?;
                    }
                    writeln!(stdout, "dp_price={:.6}", dp.price)?;
                    (data, basis)
                }
            };
            let sol = solve_fqi_with(&data, &basis, &cfg.market, &cfg.risk, cfg.regularization)?;
            if sol.concavity.warning {
                eprintln!(
                    "warning: fitted Q is not concave in the hedge at {:.3}% of states",
                    100.0 * sol.concavity.violation_fraction()
                );
            }
            writeln!(
                stdout,
                "fqi_price={:.6} argmax_price={:.6} readout_convex={}",
                sol.price, sol.argmax_price, sol.concavity.readout_convex
            )?;
            if let Some(w) = output(&cli.out)? {
                write_dataset_csv(&data, w)?;
            }
            if let Some(w) = output(json)? {
                write_json(&FqiExport::from(&sol), w)?;
            }
        }
        Command::IrlLambda { dataset, payoffs } => match (dataset, payoffs) {
            (Some(d), Some(p)) => {
                let data = read_dataset_csv(open(d)?, open(p)?)?;
                let basis = BasisSet::from_states(&data.x, cfg.basis_m)?;
                let ts = estimate_lambda(&data, &cfg.market, &basis)?;
                writeln!(stdout, "lambda_summary={:.6e}", ts.summary)?;
                if let Some(w) = output(&cli.out)? {
                    write_lambda_csv(&ts, w)?;
                }
            }
            _ => {
                let rep = run_irl_lambda(&cfg)?;
                writeln!(
                    stdout,
                    "true_lambda={:.6e} lambda_summary={:.6e} coverage={:.3}",
                    rep.true_lambda,
                    rep.term_structure.summary,
                    rep.coverage()
                )?;
                if let Some(w) = output(&cli.out)? {
                    write_lambda_intervals_csv(&rep.term_structure, &rep.intervals, w)?;
                }
            }
        },
        Command::SweepLambda { summary } => {
            print_report(&run_price_vs_lambda(&cfg)?, summary, &cli.out)?;
        }
        Command::SweepNoise { summary } => {
            print_report(&run_offpolicy_noise(&cfg)?, summary, &cli.out)?;
        }
        Command::PriceBasket { basket, solver, exotic } => {
            let basket = match basket {
                Some(p) => OptionBasket::from_json(&std::fs::read_to_string(p)?)?,
                None => match &cfg.option {
                    OptionSpec::Basket(b) => b.clone(),
                    OptionSpec::Put(_) => bail!("no basket given: pass --basket or set option.basket in the config"),
                },
            };
            let solver = match solver {
                SolverArg::Dp => SolverKind::Dp,
                SolverArg::Fqi => SolverKind::Fqi,
            };
            let hash = cfg.config_hash();
            let mut csv_out = output(&cli.out)?.map(csv::Writer::from_writer);
            if let Some(w) = csv_out.as_mut() {
                let mut header = vec!["run", "seed", "config_hash", "basket_price"];
                if exotic.is_some() {
                    header.push("exotic_price");
                }
                w.write_record(header)?;
            }
            for run in 0..cfg.n_mc_runs {
                let (paths, basis) = cfg.simulate_run(run)?;
                let p0 = price_basket(&basket, &paths, &basis, &cfg.risk, solver, cfg.regularization)?;
                let mut line = format!("run={run} seed={} basket_price={p0:.6}", cfg.run_seed(run));
                let mut record = vec![run.to_string(), cfg.run_seed(run).to_string(), hash.clone(), p0.to_string()];
                if let Some(i) = exotic {
                    let ce = exotic_price(&basket, p0, *i)?;
                    line.push_str(&format!(" exotic_price={ce:.6}"));
                    record.push(ce.to_string());
                }
                writeln!(stdout, "{line}")?;
                if let Some(w) = csv_out.as_mut() {
                    w.write_record(record)?;
                }
            }
            if let Some(mut w) = csv_out {
                w.flush()?;
            }
        }
    }
    Ok(())
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
