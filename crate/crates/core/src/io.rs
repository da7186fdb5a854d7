//! CSV and JSON formats for paths, solutions, datasets and reports.
//!
//! Floats are written with Rust's shortest round-trip representation, so a
//! write followed by a read reproduces every value exactly.

use std::io::{Read, Write};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dp::DpSolution;
use crate::error::{QlbsError, Result};
use crate::fqi::{FqiSolution, HedgeDataset};
use crate::irl::{LambdaInterval, LambdaTermStructure};
use crate::market::{MarketParams, PathSet};

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// `path,step,s,x`, one row per path and step.
pub fn write_paths_csv<W: Write>(paths: &PathSet, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["path", "step", "s", "x"])?;
    for k in 0..paths.n_paths() {
        for t in 0..=paths.n_steps() {
            w.write_record([
                k.to_string(),
                t.to_string(),
                paths.s[(k, t)].to_string(),
                paths.x[(k, t)].to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Deserialize)]
struct PathRow {
    path: usize,
    step: usize,
    s: f64,
    #[allow(dead_code)]
    x: f64,
}

/// Reads `path,step,s,x`; states are re-derived from prices with `params`.
pub fn read_paths_csv<R: Read>(input: R, params: MarketParams, seed: u64) -> Result<PathSet> {
    let mut rdr = csv::Reader::from_reader(input);
    let rows: Vec<PathRow> = rdr.deserialize().collect::<std::result::Result<_, _>>()?;
    let n_paths = rows.iter().map(|r| r.path + 1).max().unwrap_or(0);
    let cols = params.n_steps + 1;
    let mut s = DMatrix::from_element(n_paths, cols, f64::NAN);
    for r in &rows {
        if r.step >= cols {
            return Err(QlbsError::Schema(format!("step {} beyond horizon {}", r.step, params.n_steps)));
        }
        s[(r.path, r.step)] = r.s;
    }
    if s.iter().any(|v| v.is_nan()) {
        return Err(QlbsError::Schema("path file does not cover every (path, step)".into()));
    }
    PathSet::from_prices(params, s, seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpSummary {
    pub price: f64,
    pub lambda: f64,
    pub regularization: f64,
    pub terminal_reward: f64,
    /// `phi[t]` holds the hedge coefficients at step `t`.
    pub phi: Vec<Vec<f64>>,
    pub omega: Vec<Vec<f64>>,
}

impl From<&DpSolution> for DpSummary {
    fn from(s: &DpSolution) -> Self {
        Self {
            price: s.price,
            lambda: s.lambda,
            regularization: s.regularization,
            terminal_reward: s.terminal_reward,
            phi: rows_of(&s.phi),
            omega: rows_of(&s.omega),
        }
    }
}

/// `path,step,a,pi,q,reward`; at maturity the hedge is zero and the reward is
/// the terminal variance penalty.
pub fn write_dp_csv<W: Write>(sol: &DpSolution, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["path", "step", "a", "pi", "q", "reward"])?;
    let n = sol.a_star.ncols();
    for k in 0..sol.pi.nrows() {
        for t in 0..=n {
            let (a, r) = if t < n {
                (sol.a_star[(k, t)], sol.rewards[(k, t)])
            } else {
                (0.0, sol.terminal_reward)
            };
            w.write_record([
                k.to_string(),
                t.to_string(),
                a.to_string(),
                sol.pi[(k, t)].to_string(),
                sol.q_star[(k, t)].to_string(),
                r.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `path,step,x,a,r`: `a` and `r` are empty at maturity, and the `r` column is
/// omitted entirely when the dataset has no rewards.
pub fn write_dataset_csv<W: Write>(data: &HedgeDataset, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let with_r = data.r.is_some();
    if with_r {
        w.write_record(["path", "step", "x", "a", "r"])?;
    } else {
        w.write_record(["path", "step", "x", "a"])?;
    }
    let n = data.n_steps();
    for k in 0..data.n_paths() {
        for t in 0..=n {
            let mut rec = vec![k.to_string(), t.to_string(), data.x[(k, t)].to_string()];
            rec.push(if t < n { data.a[(k, t)].to_string() } else { String::new() });
            if let Some(r) = &data.r {
                rec.push(if t < n { r[(k, t)].to_string() } else { String::new() });
            }
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `path,payoff`.
pub fn write_payoffs_csv<W: Write>(payoff: &[f64], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["path", "payoff"])?;
    for (k, p) in payoff.iter().enumerate() {
        w.write_record([k.to_string(), p.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Deserialize)]
struct DatasetRow {
    path: usize,
    step: usize,
    x: f64,
    a: Option<f64>,
    #[serde(default)]
    r: Option<f64>,
}

#[derive(Debug, Deserialize)]
struct PayoffRow {
    path: usize,
    payoff: f64,
}

/// Reads a dataset CSV and its companion payoff CSV.
///
/// Rewards are present only if every `(path, step < T)` row has an `r` value;
/// a file with no `r` values at all yields an inverse-RL dataset.
pub fn read_dataset_csv<R1: Read, R2: Read>(data: R1, payoffs: R2) -> Result<HedgeDataset> {
    let mut rdr = csv::Reader::from_reader(data);
    let rows: Vec<DatasetRow> = rdr.deserialize().collect::<std::result::Result<_, _>>()?;
    let n_paths = rows.iter().map(|r| r.path + 1).max().unwrap_or(0);
    let cols = rows.iter().map(|r| r.step + 1).max().unwrap_or(0);
    if cols < 2 {
        return Err(QlbsError::Schema("dataset needs at least two steps per path".into()));
    }
    let steps = cols - 1;
    let mut x = DMatrix::from_element(n_paths, cols, f64::NAN);
    let mut a = DMatrix::from_element(n_paths, steps, f64::NAN);
    let mut r = DMatrix::from_element(n_paths, steps, f64::NAN);
    let mut seen_r = 0usize;
    for row in &rows {
        x[(row.path, row.step)] = row.x;
        if row.step < steps {
            a[(row.path, row.step)] = row
                .a
                .ok_or_else(|| QlbsError::Schema(format!("missing action at path {} step {}", row.path, row.step)))?;
            if let Some(v) = row.r {
                r[(row.path, row.step)] = v;
                seen_r += 1;
            }
        }
    }
    if x.iter().chain(a.iter()).any(|v| v.is_nan()) {
        return Err(QlbsError::Schema("dataset does not cover every (path, step)".into()));
    }
    let rewards = match seen_r {
        0 => None,
        n if n == n_paths * steps => Some(r),
        _ => return Err(QlbsError::Schema("reward column is only partially filled".into())),
    };

    let mut prdr = csv::Reader::from_reader(payoffs);
    let prow: Vec<PayoffRow> = prdr.deserialize().collect::<std::result::Result<_, _>>()?;
    let mut payoff = vec![f64::NAN; n_paths];
    for p in prow {
        if p.path >= n_paths {
            return Err(QlbsError::Schema(format!("payoff for unknown path {}", p.path)));
        }
        payoff[p.path] = p.payoff;
    }
    if payoff.iter().any(|v| v.is_nan()) {
        return Err(QlbsError::Schema("terminal payoffs are missing for some paths".into()));
    }
    HedgeDataset::new(x, a, rewards, payoff)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FqiExport {
    pub price: f64,
    pub regularization: f64,
    /// `w[t]` is the `3 x M` matrix as rows `(U0, U1, U2)`.
    pub w: Vec<Vec<Vec<f64>>>,
    pub concavity_violations: Vec<usize>,
    pub concavity_warning: bool,
    pub readout_convex: usize,
    pub argmax_price: f64,
}

impl From<&FqiSolution> for FqiExport {
    fn from(s: &FqiSolution) -> Self {
        Self {
            price: s.price,
            regularization: s.regularization,
            w: s.w.iter().map(rows_of).collect(),
            concavity_violations: s.concavity.violations.clone(),
            concavity_warning: s.concavity.warning,
            readout_convex: s.concavity.readout_convex,
            argmax_price: s.argmax_price,
        }
    }
}

/// `step,lambda_impl,loglik,boundary_flag`.
pub fn write_lambda_csv<W: Write>(ts: &LambdaTermStructure, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["step", "lambda_impl", "loglik", "boundary_flag"])?;
    for t in 0..ts.lambda_impl.len() {
        w.write_record([
            t.to_string(),
            ts.lambda_impl[t].to_string(),
            ts.loglik[t].to_string(),
            ts.boundary_flag[t].to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `step,lambda_impl,loglik,boundary_flag,lower,upper` with one bootstrap
/// interval per step.
pub fn write_lambda_intervals_csv<W: Write>(
    ts: &LambdaTermStructure,
    intervals: &[LambdaInterval],
    out: W,
) -> Result<()> {
    if intervals.len() != ts.lambda_impl.len() {
        return Err(QlbsError::Schema(format!(
            "{} intervals for {} steps",
            intervals.len(),
            ts.lambda_impl.len()
        )));
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["step", "lambda_impl", "loglik", "boundary_flag", "lower", "upper"])?;
    for (t, iv) in intervals.iter().enumerate() {
        w.write_record([
            t.to_string(),
            ts.lambda_impl[t].to_string(),
            ts.loglik[t].to_string(),
            ts.boundary_flag[t].to_string(),
            iv.lower.to_string(),
            iv.upper.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize, W: Write>(value: &T, out: W) -> Result<()> {
    serde_json::to_writer_pretty(out, value)?;
    Ok(())
}
