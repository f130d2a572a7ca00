//! Histogram entropy of weight matrices, plus exact-value entropies of
//! discrete samples.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::ExchangeError;
use crate::linalg::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EntropyConfig {
    pub num_bins: usize,
}

impl Default for EntropyConfig {
    fn default() -> Self {
        Self { num_bins: 30 }
    }
}

impl EntropyConfig {
    pub fn validate(&self) -> Result<(), ExchangeError> {
        if self.num_bins < 2 {
            return Err(ExchangeError::InvalidConfig(format!(
                "num_bins must be at least 2, got {}",
                self.num_bins
            )));
        }
        Ok(())
    }
}

/// Equal-width binning of `[lo, hi]` into `bins` buckets. The top edge falls
/// in the last bucket. Monotone non-decreasing in `v`, which the fast
/// selector relies on.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Binning {
    lo: f64,
    width: f64,
    bins: usize,
}

impl Binning {
    /// `None` when the range is degenerate.
    pub(crate) fn new(lo: f64, hi: f64, bins: usize) -> Option<Self> {
        (hi > lo).then_some(Self {
            lo,
            width: hi - lo,
            bins,
        })
    }

    #[inline]
    pub(crate) fn bin(&self, v: f64) -> usize {
        let b = ((v - self.lo) / self.width * self.bins as f64).floor();
        (b.max(0.0) as usize).min(self.bins - 1)
    }
}

/// `-Σ p ln p` over `counts`, accumulated in index order; empty buckets add
/// nothing.
pub fn entropy_from_counts(counts: &[usize]) -> f64 {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return 0.0;
    }
    let n = total as f64;
    let mut h = 0.0;
    for &c in counts {
        if c > 0 {
            let p = c as f64 / n;
            h -= p * p.ln();
        }
    }
    h
}

/// Bucket counts of `values` over their own `[min, max]`; `None` for a
/// degenerate range.
pub fn histogram(values: &[f64], bins: usize) -> Option<Vec<usize>> {
    let (lo, hi) = min_max(values)?;
    let binning = Binning::new(lo, hi, bins)?;
    let mut counts = vec![0usize; bins];
    for &v in values {
        counts[binning.bin(v)] += 1;
    }
    Some(counts)
}

pub(crate) fn min_max(values: &[f64]) -> Option<(f64, f64)> {
    let first = *values.first()?;
    Some(values.iter().fold((first, first), |(lo, hi), &v| (lo.min(v), hi.max(v))))
}

/// Histogram entropy of a flat list of values.
pub fn values_entropy(values: &[f64], bins: usize) -> f64 {
    histogram(values, bins).map_or(0.0, |c| entropy_from_counts(&c))
}

/// Entropy of the weight values of `w`, binned into `cfg.num_bins` equal-width
/// buckets over `[min(w), max(w)]`. Lies in `[0, ln B]`.
pub fn matrix_entropy(w: &Matrix, cfg: &EntropyConfig) -> Result<f64, ExchangeError> {
    cfg.validate()?;
    if w.is_empty() {
        return Err(ExchangeError::EmptyMatrix);
    }
    Ok(values_entropy(w.as_slice(), cfg.num_bins))
}

/// Plug-in entropy of a discrete sample, counting exact values.
pub fn empirical_entropy<T: Ord>(samples: &[T]) -> f64 {
    let mut counts: BTreeMap<&T, usize> = BTreeMap::new();
    for s in samples {
        *counts.entry(s).or_default() += 1;
    }
    entropy_from_counts(&counts.into_values().collect::<Vec<_>>())
}

/// Plug-in joint entropy of paired discrete samples.
pub fn joint_entropy<A: Ord, B: Ord>(a: &[A], b: &[B]) -> f64 {
    assert_eq!(a.len(), b.len(), "paired samples must have equal length");
    let pairs: Vec<(&A, &B)> = a.iter().zip(b).collect();
    empirical_entropy(&pairs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_matrix_has_zero_entropy() {
        let w = Matrix::from_fn(4, 5, |_, _| 0.25);
        assert_eq!(matrix_entropy(&w, &EntropyConfig::default()).unwrap(), 0.0);
    }

    #[test]
    fn two_bins_half_and_half() {
        let w = Matrix::from_fn(10, 10, |i, _| if i < 5 { 0.0 } else { 1.0 });
        let h = matrix_entropy(&w, &EntropyConfig { num_bins: 2 }).unwrap();
        assert!((h - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn evenly_spread_over_four_bins() {
        // 0..100 over [0, 99]: bin = floor(v / 99 * 4) gives 25 per bin
        let w = Matrix::from_fn(10, 10, |i, j| (i * 10 + j) as f64);
        let counts = histogram(w.as_slice(), 4).unwrap();
        assert_eq!(counts, vec![25; 4]);
        let h = matrix_entropy(&w, &EntropyConfig { num_bins: 4 }).unwrap();
        assert!((h - 4f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn maximum_lands_in_last_bin() {
        let counts = histogram(&[0.0, 0.5, 1.0], 3).unwrap();
        assert_eq!(counts, vec![1, 1, 1]);
    }

    #[test]
    fn empty_and_invalid() {
        let cfg = EntropyConfig::default();
        assert_eq!(matrix_entropy(&Matrix::zeros(0, 3), &cfg), Err(ExchangeError::EmptyMatrix));
        assert!(matrix_entropy(&Matrix::zeros(1, 1), &EntropyConfig { num_bins: 1 }).is_err());
    }

    #[test]
    fn discrete_entropies() {
        assert!((empirical_entropy(&[1, 2, 1, 2]) - 2f64.ln()).abs() < 1e-15);
        assert_eq!(empirical_entropy(&[7, 7, 7]), 0.0);
        assert!((joint_entropy(&[0, 0, 1, 1], &[0, 1, 0, 1]) - 4f64.ln()).abs() < 1e-15);
    }
}
