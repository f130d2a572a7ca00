use serde::{Deserialize, Serialize};

use super::correlation::{channel_count, channel_len};
use super::entropy::{entropy_from_counts, Binning, EntropyConfig};
use super::{Axis, ExchangeError};
use crate::linalg::Matrix;

/// Winner of an entropy-guided substitution search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    /// Source channel.
    pub i: usize,
    /// Replaced target channel, one of the redundant pair.
    pub r: usize,
    /// Target entropy after the substitution.
    pub entropy: f64,
}

/// Flat positions of the leading `len` entries of channel `c`.
pub(crate) fn segment_positions(w: &Matrix, axis: Axis, c: usize, len: usize) -> impl Iterator<Item = usize> {
    let cols = w.cols();
    (0..len).map(move |k| match axis {
        Axis::Output => k * cols + c,
        Axis::Input => c * cols + k,
    })
}

/// Picks source channel `i` and target channel `r ∈ {idx1, idx2}` so that
/// writing source column `i` over target column `r` maximizes the histogram
/// entropy of the target weights. Ties go to the smallest `i`, then the
/// smallest `r`.
pub fn select_exchange(
    source: &Matrix,
    target: &Matrix,
    idx1: usize,
    idx2: usize,
    cfg: &EntropyConfig,
) -> Result<Selection, ExchangeError> {
    select_exchange_along(source, target, Axis::Output, idx1, idx2, source.rows(), cfg)
}

/// [`select_exchange`] generalized to either axis and to a leading segment of
/// `len` entries per channel.
pub fn select_exchange_along(
    source: &Matrix,
    target: &Matrix,
    axis: Axis,
    idx1: usize,
    idx2: usize,
    len: usize,
    cfg: &EntropyConfig,
) -> Result<Selection, ExchangeError> {
    cfg.validate()?;
    if source.shape() != target.shape() {
        return Err(ExchangeError::ShapeMismatch {
            expected: format!("{:?}", target.shape()),
            actual: format!("{:?}", source.shape()),
        });
    }
    let channels = channel_count(target, axis);
    for idx in [idx1, idx2] {
        if idx >= channels {
            return Err(ExchangeError::IndexOutOfRange { index: idx, bound: channels });
        }
    }
    if idx1 == idx2 {
        return Err(ExchangeError::InvalidConfig(format!("redundant pair repeats channel {idx1}")));
    }
    if len == 0 || len > channel_len(target, axis) {
        return Err(ExchangeError::IndexOutOfRange {
            index: len,
            bound: channel_len(target, axis) + 1,
        });
    }

    let bins = cfg.num_bins;
    let candidates_r = [idx1.min(idx2), idx1.max(idx2)];
    // Values of the target outside each replaced segment, sorted once.
    let rests: Vec<Vec<f64>> = candidates_r
        .iter()
        .map(|&r| {
            let mut skip = vec![false; target.as_slice().len()];
            segment_positions(target, axis, r, len).for_each(|p| skip[p] = true);
            let mut rest: Vec<f64> = target
                .as_slice()
                .iter()
                .zip(&skip)
                .filter(|(_, &s)| !s)
                .map(|(&v, _)| v)
                .collect();
            rest.sort_by(f64::total_cmp);
            rest
        })
        .collect();

    let mut best = Selection {
        i: 0,
        r: candidates_r[0],
        entropy: f64::NEG_INFINITY,
    };
    let mut counts = vec![0usize; bins];
    let src = source.as_slice();
    for i in 0..channels {
        let seg: Vec<f64> = segment_positions(source, axis, i, len).map(|p| src[p]).collect();
        let (seg_lo, seg_hi) = seg
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        for (&r, rest) in candidates_r.iter().zip(&rests) {
            let lo = rest.first().map_or(seg_lo, |&v| v.min(seg_lo));
            let hi = rest.last().map_or(seg_hi, |&v| v.max(seg_hi));
            let h = match Binning::new(lo, hi, bins) {
                None => 0.0,
                Some(binning) => {
                    let mut below = 0;
                    for (b, slot) in counts.iter_mut().enumerate() {
                        let upto = if b + 1 == bins {
                            rest.len()
                        } else {
                            rest.partition_point(|&v| binning.bin(v) <= b)
                        };
                        *slot = upto - below;
                        below = upto;
                    }
                    for &v in &seg {
                        counts[binning.bin(v)] += 1;
                    }
                    entropy_from_counts(&counts)
                }
            };
            if h > best.entropy {
                best = Selection { i, r, entropy: h };
            }
        }
    }
    Ok(best)
}
