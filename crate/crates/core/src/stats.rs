//! Small statistical helpers for the attack and accounting checks.

use statrs::distribution::{Binomial, ChiSquared, ContinuousCDF, DiscreteCDF};

/// `P(X >= k)` for `X ~ Binomial(n, p)`.
pub fn binomial_upper_tail(k: u64, n: u64, p: f64) -> f64 {
    if k == 0 {
        return 1.0;
    }
    if k > n {
        return 0.0;
    }
    let p = p.clamp(0.0, 1.0);
    Binomial::new(p, n).map(|b| b.sf(k - 1)).unwrap_or(0.0)
}

/// One-sided test: is `k` successes out of `n` significantly above a chance
/// rate `p` at level `alpha`?
pub fn above_chance(k: u64, n: u64, p: f64, alpha: f64) -> bool {
    binomial_upper_tail(k, n, p) < alpha
}

/// `|k - np| <= sigmas * sqrt(np(1-p))`.
pub fn binomial_within_sigma(k: u64, n: u64, p: f64, sigmas: f64) -> bool {
    let mean = n as f64 * p;
    let sd = (n as f64 * p * (1.0 - p)).sqrt();
    (k as f64 - mean).abs() <= sigmas * sd
}

/// Count within `sigmas` standard deviations of a Poisson mean.
pub fn poisson_within_sigma(count: u64, mean: f64, sigmas: f64) -> bool {
    (count as f64 - mean).abs() <= sigmas * mean.sqrt()
}

/// Pearson chi-square p-value of `counts` against the uniform distribution.
pub fn chi_square_uniform(counts: &[u64]) -> f64 {
    if counts.len() < 2 {
        return 1.0;
    }
    let total: u64 = counts.iter().sum();
    let expected = total as f64 / counts.len() as f64;
    if expected == 0.0 {
        return 1.0;
    }
    let stat: f64 = counts
        .iter()
        .map(|&c| (c as f64 - expected).powi(2) / expected)
        .sum();
    ChiSquared::new((counts.len() - 1) as f64)
        .map(|d| d.sf(stat))
        .unwrap_or(0.0)
}

/// Geometric mean of positive values; `None` if empty or any value <= 0.
pub fn geometric_mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() || values.iter().any(|&v| v <= 0.0 || !v.is_finite()) {
        return None;
    }
    Some((values.iter().map(|v| v.ln()).sum::<f64>() / values.len() as f64).exp())
}

/// Geometric mean of relative changes, taken over the ratios `1 + x`.
pub fn geometric_mean_change(changes: &[f64]) -> Option<f64> {
    let ratios: Vec<f64> = changes.iter().map(|c| 1.0 + c).collect();
    geometric_mean(&ratios).map(|g| g - 1.0)
}
