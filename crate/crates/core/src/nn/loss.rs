use super::ModelError;
use crate::linalg::Matrix;

/// Row-wise log-softmax, stabilised by subtracting each row's maximum.
pub fn log_softmax_rows(logits: &Matrix) -> Matrix {
    let mut out = logits.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
        row.iter_mut().for_each(|x| *x -= lse);
    }
    out
}

pub fn softmax_rows(logits: &Matrix) -> Matrix {
    let mut out = log_softmax_rows(logits);
    out.map_inplace(f64::exp);
    out
}

/// Mean negative log-likelihood over the rows selected by `mask`.
pub fn masked_cross_entropy(logits: &Matrix, labels: &[usize], mask: &[bool]) -> Result<f64, ModelError> {
    let n = logits.rows();
    if labels.len() != n || mask.len() != n {
        return Err(ModelError::ShapeMismatch {
            expected: format!("{n} labels and mask entries"),
            actual: format!("{} labels, {} mask entries", labels.len(), mask.len()),
        });
    }
    let logp = log_softmax_rows(logits);
    let mut total = 0.0;
    let mut count = 0usize;
    for i in (0..n).filter(|&i| mask[i]) {
        total -= logp.get(i, labels[i]);
        count += 1;
    }
    if count == 0 {
        return Err(ModelError::EmptyMask);
    }
    Ok(total / count as f64)
}
