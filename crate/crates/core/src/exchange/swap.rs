use super::correlation::{channel_count, channel_len};
use super::select::segment_positions;
use super::{Axis, ExchangeError};
use crate::nn::GnnModel;

fn check_layer(a: &GnnModel, b: &GnnModel, l: usize) -> Result<(), ExchangeError> {
    let layers = a.num_layers().min(b.num_layers());
    if l >= layers {
        return Err(ExchangeError::IndexOutOfRange { index: l, bound: layers });
    }
    if a.layer(l).shape() != b.layer(l).shape() {
        return Err(ExchangeError::ShapeMismatch {
            expected: format!("{:?}", a.layer(l).shape()),
            actual: format!("{:?}", b.layer(l).shape()),
        });
    }
    Ok(())
}

fn check_channel(a: &GnnModel, l: usize, axis: Axis, c: usize) -> Result<(), ExchangeError> {
    let bound = channel_count(&a.layer(l).weight, axis);
    if c >= bound {
        return Err(ExchangeError::IndexOutOfRange { index: c, bound });
    }
    Ok(())
}

/// Exchanges channel `chan_a` of `a` with channel `chan_b` of `b` in layer
/// `l`. Output channels carry their bias entry along; input channels are
/// weight rows only.
pub fn swap_channels(
    a: &mut GnnModel,
    b: &mut GnnModel,
    l: usize,
    chan_a: usize,
    chan_b: usize,
    axis: Axis,
) -> Result<(), ExchangeError> {
    check_layer(a, b, l)?;
    let len = channel_len(&a.layer(l).weight, axis);
    swap_segments(a, b, l, axis, chan_a, chan_b, len)?;
    if axis == Axis::Output {
        std::mem::swap(&mut a.layer_mut(l).bias[chan_a], &mut b.layer_mut(l).bias[chan_b]);
    }
    Ok(())
}

/// Exchanges the leading `len` weights of the two channels; biases stay put.
pub fn swap_segments(
    a: &mut GnnModel,
    b: &mut GnnModel,
    l: usize,
    axis: Axis,
    chan_a: usize,
    chan_b: usize,
    len: usize,
) -> Result<(), ExchangeError> {
    check_layer(a, b, l)?;
    check_channel(a, l, axis, chan_a)?;
    check_channel(b, l, axis, chan_b)?;
    let full = channel_len(&a.layer(l).weight, axis);
    if len > full {
        return Err(ExchangeError::IndexOutOfRange { index: len, bound: full + 1 });
    }
    let pa: Vec<usize> = segment_positions(&a.layer(l).weight, axis, chan_a, len).collect();
    let pb: Vec<usize> = segment_positions(&b.layer(l).weight, axis, chan_b, len).collect();
    let wa = a.layer_mut(l).weight.as_mut_slice();
    let wb = b.layer_mut(l).weight.as_mut_slice();
    for (&x, &y) in pa.iter().zip(&pb) {
        std::mem::swap(&mut wa[x], &mut wb[y]);
    }
    Ok(())
}

/// Exchanges the weights at the given flat (row-major) positions.
pub fn swap_positions(a: &mut GnnModel, b: &mut GnnModel, l: usize, positions: &[usize]) -> Result<(), ExchangeError> {
    check_layer(a, b, l)?;
    let bound = a.layer(l).weight.as_slice().len();
    if let Some(&bad) = positions.iter().find(|&&p| p >= bound) {
        return Err(ExchangeError::IndexOutOfRange { index: bad, bound });
    }
    let wa = a.layer_mut(l).weight.as_mut_slice();
    let wb = b.layer_mut(l).weight.as_mut_slice();
    for &p in positions {
        std::mem::swap(&mut wa[p], &mut wb[p]);
    }
    Ok(())
}

/// Exchanges two output channels (columns plus bias) inside one model.
pub fn swap_within(m: &mut GnnModel, l: usize, c1: usize, c2: usize) -> Result<(), ExchangeError> {
    if l >= m.num_layers() {
        return Err(ExchangeError::IndexOutOfRange { index: l, bound: m.num_layers() });
    }
    check_channel(m, l, Axis::Output, c1)?;
    check_channel(m, l, Axis::Output, c2)?;
    let p = m.layer_mut(l);
    for i in 0..p.weight.rows() {
        let row = p.weight.row_mut(i);
        row.swap(c1, c2);
    }
    p.bias.swap(c1, c2);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{init_model, ModelSpec};

    fn pair() -> (GnnModel, GnnModel) {
        let spec = ModelSpec::new(vec![5, 4, 3], 0.0).unwrap();
        let mut a = init_model(&spec, 1).unwrap();
        let mut b = init_model(&spec, 2).unwrap();
        for (m, s) in [(&mut a, 1.0), (&mut b, -1.0)] {
            for l in 0..2 {
                m.layer_mut(l).bias.iter_mut().enumerate().for_each(|(j, x)| *x = s * (j + 1) as f64);
            }
        }
        (a, b)
    }

    #[test]
    fn output_swap_moves_column_and_bias() {
        let (mut a, mut b) = pair();
        let (a0, b0) = (a.clone(), b.clone());
        swap_channels(&mut a, &mut b, 0, 1, 3, Axis::Output).unwrap();
        assert_eq!(a.layer(0).weight.column(1), b0.layer(0).weight.column(3));
        assert_eq!(b.layer(0).weight.column(3), a0.layer(0).weight.column(1));
        assert_eq!((a.layer(0).bias[1], b.layer(0).bias[3]), (-4.0, 2.0));
        assert_eq!(a.layer(0).weight.column(0), a0.layer(0).weight.column(0));
    }

    #[test]
    fn input_swap_moves_rows_only() {
        let (mut a, mut b) = pair();
        let (a0, b0) = (a.clone(), b.clone());
        swap_channels(&mut a, &mut b, 0, 4, 0, Axis::Input).unwrap();
        assert_eq!(a.layer(0).weight.row(4), b0.layer(0).weight.row(0));
        assert_eq!(b.layer(0).weight.row(0), a0.layer(0).weight.row(4));
        assert_eq!(a.layer(0).bias, a0.layer(0).bias);
    }

    #[test]
    fn swap_is_an_involution() {
        let (mut a, mut b) = pair();
        let (a0, b0) = (a.clone(), b.clone());
        for axis in [Axis::Output, Axis::Input] {
            swap_channels(&mut a, &mut b, 1, 2, 0, axis).unwrap();
            swap_channels(&mut a, &mut b, 1, 2, 0, axis).unwrap();
        }
        assert_eq!((a, b), (a0, b0));
    }

    #[test]
    fn self_swap_of_identical_models_is_invisible() {
        let (a, _) = pair();
        let (mut x, mut y) = (a.clone(), a.clone());
        swap_channels(&mut x, &mut y, 0, 2, 2, Axis::Output).unwrap();
        assert_eq!((x, y), (a.clone(), a));
    }

    #[test]
    fn bounds_are_checked() {
        let (mut a, mut b) = pair();
        assert!(swap_channels(&mut a, &mut b, 2, 0, 0, Axis::Output).is_err());
        assert!(swap_channels(&mut a, &mut b, 0, 4, 0, Axis::Output).is_err());
        assert!(swap_positions(&mut a, &mut b, 0, &[20]).is_err());
        let mut c = init_model(&ModelSpec::new(vec![5, 3, 3], 0.0).unwrap(), 0).unwrap();
        assert!(matches!(
            swap_channels(&mut a, &mut c, 0, 0, 0, Axis::Output),
            Err(ExchangeError::ShapeMismatch { .. })
        ));
    }
}
