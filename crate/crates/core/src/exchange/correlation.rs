use serde::{Deserialize, Serialize};

use super::{Axis, ExchangeError};
use crate::linalg::Matrix;

/// The most correlated channel pair of a matrix, `idx1 < idx2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelatedPair {
    pub idx1: usize,
    pub idx2: usize,
    pub correlation: f64,
}

pub(crate) fn channel_count(w: &Matrix, axis: Axis) -> usize {
    match axis {
        Axis::Output => w.cols(),
        Axis::Input => w.rows(),
    }
}

pub(crate) fn channel_len(w: &Matrix, axis: Axis) -> usize {
    match axis {
        Axis::Output => w.rows(),
        Axis::Input => w.cols(),
    }
}

pub(crate) fn channel(w: &Matrix, axis: Axis, c: usize) -> Vec<f64> {
    match axis {
        Axis::Output => w.column(c),
        Axis::Input => w.row(c).to_vec(),
    }
}

/// Pairwise Pearson correlations of the channels of one matrix, kept current
/// one channel at a time.
#[derive(Debug, Clone)]
pub struct CorrelationTable {
    axis: Axis,
    n: usize,
    centered: Vec<Vec<f64>>,
    sum_sq: Vec<f64>,
    corr: Vec<f64>,
}

impl CorrelationTable {
    pub fn new(w: &Matrix, axis: Axis) -> Result<Self, ExchangeError> {
        let n = channel_count(w, axis);
        let len = channel_len(w, axis);
        if n < 2 || len < 2 {
            return Err(ExchangeError::TooFewChannels { channels: n, length: len });
        }
        let mut t = Self {
            axis,
            n,
            centered: vec![Vec::new(); n],
            sum_sq: vec![0.0; n],
            corr: vec![0.0; n * n],
        };
        for c in 0..n {
            t.load(w, c);
        }
        for a in 0..n {
            for b in a + 1..n {
                t.set_pair(a, b);
            }
        }
        Ok(t)
    }

    fn load(&mut self, w: &Matrix, c: usize) {
        let mut x = channel(w, self.axis, c);
        let mean = x.iter().sum::<f64>() / x.len() as f64;
        x.iter_mut().for_each(|v| *v -= mean);
        self.sum_sq[c] = x.iter().map(|v| v * v).sum();
        self.centered[c] = x;
    }

    fn set_pair(&mut self, a: usize, b: usize) {
        let denom = self.sum_sq[a] * self.sum_sq[b];
        let r = if denom > 0.0 {
            let dot: f64 = self.centered[a].iter().zip(&self.centered[b]).map(|(x, y)| x * y).sum();
            dot / denom.sqrt()
        } else {
            0.0
        };
        self.corr[a * self.n + b] = r;
        self.corr[b * self.n + a] = r;
    }

    /// Re-reads channel `c` from `w` after it changed.
    pub fn update(&mut self, w: &Matrix, c: usize) {
        self.load(w, c);
        for other in (0..self.n).filter(|&o| o != c) {
            self.set_pair(c.min(other), c.max(other));
        }
    }

    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.corr[a * self.n + b]
    }

    /// Highest signed correlation; ties go to the lexicographically smallest pair.
    pub fn best(&self) -> CorrelatedPair {
        let mut best = CorrelatedPair {
            idx1: 0,
            idx2: 1,
            correlation: self.get(0, 1),
        };
        for a in 0..self.n {
            let row = &self.corr[a * self.n..(a + 1) * self.n];
            for (b, &r) in row.iter().enumerate().skip(a + 1) {
                if r > best.correlation {
                    best = CorrelatedPair {
                        idx1: a,
                        idx2: b,
                        correlation: r,
                    };
                }
            }
        }
        best
    }
}

/// Pearson correlation over all channel pairs along `axis`, returning the
/// maximum (signed). Zero-variance channels correlate 0 with everything.
pub fn most_correlated_pair(w: &Matrix, axis: Axis) -> Result<CorrelatedPair, ExchangeError> {
    Ok(CorrelationTable::new(w, axis)?.best())
}
