//! Small cross-path statistics shared by the solvers.

/// Compensated (Neumaier) sum; keeps long path sums stable to a few ulps.
pub fn sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut total = 0.0_f64;
    let mut comp = 0.0_f64;
    for v in values {
        let t = total + v;
        if total.abs() >= v.abs() {
            comp += (total - t) + v;
        } else {
            comp += (v - t) + total;
        }
        total = t;
    }
    total + comp
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    sum(values.iter().copied()) / values.len() as f64
}

/// Population variance (divides by `n`), the cross-sectional convention used
/// for `Var[Pi_t]`.
pub fn variance(values: &[f64]) -> f64 {
    let m = mean(values);
    sum(values.iter().map(|v| (v - m) * (v - m))) / values.len() as f64
}

/// Sample standard deviation (divides by `n - 1`); zero for fewer than two values.
pub fn sample_std(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    (sum(values.iter().map(|v| (v - m) * (v - m))) / (values.len() - 1) as f64).sqrt()
}

/// Weighted median: smallest value whose cumulative weight reaches half the total.
pub fn weighted_median(values: &[f64], weights: &[f64]) -> f64 {
    let mut pairs: Vec<(f64, f64)> = values
        .iter()
        .copied()
        .zip(weights.iter().copied())
        .filter(|(v, w)| v.is_finite() && w.is_finite() && *w > 0.0)
        .collect();
    if pairs.is_empty() {
        return f64::NAN;
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = pairs.iter().map(|p| p.1).sum();
    let mut acc = 0.0;
    for (v, w) in &pairs {
        acc += w;
        if acc >= 0.5 * total {
            return *v;
        }
    }
    pairs[pairs.len() - 1].0
}
