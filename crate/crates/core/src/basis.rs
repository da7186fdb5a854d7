//! Clamped B-spline bases on a uniform knot grid.
//!
//! Values are computed with the triangular Cox-de Boor scheme, which yields
//! the `degree + 1` non-zero functions on a knot span in `O(degree^2)`.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{QlbsError, Result};

pub const CUBIC: usize = 3;

/// `m` B-spline functions of a given degree over `[x_min, x_max]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisSet {
    pub degree: usize,
    pub knots: Vec<f64>,
    pub domain: [f64; 2],
}

/// Cubic basis with `m` functions over `[x_min, x_max]`.
pub fn build_basis(x_min: f64, x_max: f64, m: usize) -> Result<BasisSet> {
    BasisSet::new(x_min, x_max, m, CUBIC)
}

impl BasisSet {
    /// Clamped knot vector with `m - degree` uniform spans.
    pub fn new(x_min: f64, x_max: f64, m: usize, degree: usize) -> Result<Self> {
        if !(x_max > x_min) || !x_min.is_finite() || !x_max.is_finite() {
            return Err(QlbsError::Range { min: x_min, max: x_max });
        }
        if m < degree + 1 {
            return Err(QlbsError::Parameter(format!(
                "need at least {} basis functions for degree {degree}, got {m}",
                degree + 1
            )));
        }
        let spans = m - degree;
        let width = (x_max - x_min) / spans as f64;
        let mut knots = Vec::with_capacity(m + degree + 1);
        knots.extend(std::iter::repeat(x_min).take(degree + 1));
        knots.extend((1..spans).map(|i| x_min + i as f64 * width));
        knots.extend(std::iter::repeat(x_max).take(degree + 1));
        Ok(Self { degree, knots, domain: [x_min, x_max] })
    }

    /// Cubic basis over the smallest and largest state in `x`.
    pub fn from_states(x: &DMatrix<f64>, m: usize) -> Result<Self> {
        let (lo, hi) = x
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        build_basis(lo, hi, m)
    }

    pub fn len(&self) -> usize {
        self.knots.len() - self.degree - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Index `i` of the span `[knots[i], knots[i+1])` containing `x`; the
    /// right end point belongs to the last non-empty span.
    fn find_span(&self, x: f64) -> usize {
        let n = self.len() - 1;
        let p = self.degree;
        if x >= self.knots[n + 1] {
            return n;
        }
        if x <= self.knots[p] {
            return p;
        }
        let (mut lo, mut hi) = (p, n + 1);
        let mut mid = (lo + hi) / 2;
        while x < self.knots[mid] || x >= self.knots[mid + 1] {
            if x < self.knots[mid] {
                hi = mid;
            } else {
                lo = mid;
            }
            mid = (lo + hi) / 2;
        }
        mid
    }

    /// Index of the first non-zero function at `x` plus the `degree + 1` values
    /// starting there. `x` is clamped to the domain first.
    pub fn nonzero(&self, x: f64) -> (usize, Vec<f64>) {
        let x = x.clamp(self.domain[0], self.domain[1]);
        let p = self.degree;
        let span = self.find_span(x);
        let mut values = vec![0.0; p + 1];
        let mut left = vec![0.0; p + 1];
        let mut right = vec![0.0; p + 1];
        values[0] = 1.0;
        for j in 1..=p {
            left[j] = x - self.knots[span + 1 - j];
            right[j] = self.knots[span + j] - x;
            let mut saved = 0.0;
            for r in 0..j {
                let denom = right[r + 1] + left[j - r];
                let tmp = if denom == 0.0 { 0.0 } else { values[r] / denom };
                values[r] = saved + right[r + 1] * tmp;
                saved = left[j - r] * tmp;
            }
            values[j] = saved;
        }
        (span - p, values)
    }

    /// All `m` basis values at `x`.
    pub fn evaluate(&self, x: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        self.evaluate_into(x, &mut out);
        out
    }

    pub fn evaluate_into(&self, x: f64, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        let (first, values) = self.nonzero(x);
        out[first..first + values.len()].copy_from_slice(&values);
    }

    /// Design matrix `n x m` with row `k` holding the basis at `xs[k]`.
    pub fn design_matrix(&self, xs: &[f64]) -> DMatrix<f64> {
        let m = self.len();
        let rows: Vec<Vec<f64>> = xs.par_iter().map(|&x| self.evaluate(x)).collect();
        DMatrix::from_fn(xs.len(), m, |k, j| rows[k][j])
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let basis: Self = serde_json::from_str(s)?;
        if basis.knots.len() < 2 * (basis.degree + 1) || !(basis.domain[1] > basis.domain[0]) {
            return Err(QlbsError::Schema("inconsistent basis description".into()));
        }
        Ok(basis)
    }
}
