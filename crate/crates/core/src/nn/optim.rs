use serde::{Deserialize, Serialize};

use super::{GnnModel, Gradients, ModelError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates, flattened like [`Gradients::flat`].
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamState {
    pub fn new(model: &GnnModel, config: AdamConfig) -> Self {
        let n = model.num_params();
        Self {
            config,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }
}

/// One bias-corrected Adam update. L2 decay `weight_decay[l] * θ` is added to
/// the gradient of every weight and bias of layer `l`.
pub fn adam_step(
    model: &mut GnnModel,
    grads: &Gradients,
    state: &mut AdamState,
    lr: f64,
    weight_decay: &[f64],
) -> Result<(), ModelError> {
    if grads.layers.len() != model.num_layers() || weight_decay.len() != model.num_layers() {
        return Err(ModelError::ShapeMismatch {
            expected: format!("{} layers of gradients and decay", model.num_layers()),
            actual: format!("{} gradients, {} decay", grads.layers.len(), weight_decay.len()),
        });
    }
    if state.m.len() != model.num_params() {
        return Err(ModelError::ShapeMismatch {
            expected: format!("{} optimizer slots", model.num_params()),
            actual: format!("{}", state.m.len()),
        });
    }
    state.t += 1;
    let AdamConfig { beta1, beta2, eps } = state.config;
    let c1 = 1.0 - beta1.powi(state.t as i32);
    let c2 = 1.0 - beta2.powi(state.t as i32);
    let mut k = 0;
    for (l, (g, &wd)) in grads.layers.iter().zip(weight_decay).enumerate() {
        let p = model.layer_mut(l);
        if g.weight.shape() != p.weight.shape() || g.bias.len() != p.bias.len() {
            return Err(ModelError::ShapeMismatch {
                expected: format!("layer {l} gradient {:?}", p.weight.shape()),
                actual: format!("{:?}", g.weight.shape()),
            });
        }
        let params = p.weight.as_mut_slice().iter_mut().chain(p.bias.iter_mut());
        let gs = g.weight.as_slice().iter().chain(&g.bias);
        for (theta, &gi) in params.zip(gs) {
            let gi = gi + wd * *theta;
            state.m[k] = beta1 * state.m[k] + (1.0 - beta1) * gi;
            state.v[k] = beta2 * state.v[k] + (1.0 - beta2) * gi * gi;
            let m_hat = state.m[k] / c1;
            let v_hat = state.v[k] / c2;
            *theta -= lr * m_hat / (v_hat.sqrt() + eps);
            k += 1;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use crate::nn::{init_model, LayerGrad, ModelSpec};

    fn grads_like(model: &GnnModel, value: f64) -> Gradients {
        Gradients {
            layers: model
                .layers()
                .iter()
                .map(|p| LayerGrad {
                    weight: Matrix::from_fn(p.weight.rows(), p.weight.cols(), |_, _| value),
                    bias: vec![value; p.bias.len()],
                })
                .collect(),
        }
    }

    #[test]
    fn zero_gradient_without_decay_is_a_no_op() {
        let mut m = init_model(&ModelSpec::new(vec![3, 4, 2], 0.0).unwrap(), 1).unwrap();
        let before = m.flat_params();
        let mut st = AdamState::new(&m, AdamConfig::default());
        let g = grads_like(&m, 0.0);
        adam_step(&mut m, &g, &mut st, 0.01, &[0.0, 0.0]).unwrap();
        assert_eq!(before, m.flat_params());
    }

    #[test]
    fn first_step_moves_by_lr_against_gradient_sign() {
        let mut m = init_model(&ModelSpec::new(vec![2, 2], 0.0).unwrap(), 1).unwrap();
        let before = m.flat_params();
        let mut st = AdamState::new(&m, AdamConfig::default());
        let g = grads_like(&m, 3.0);
        adam_step(&mut m, &g, &mut st, 0.01, &[0.0]).unwrap();
        for (a, b) in before.iter().zip(m.flat_params()) {
            assert!((a - b - 0.01).abs() < 1e-8);
        }
    }

    #[test]
    fn constant_gradient_moves_monotonically() {
        let mut m = init_model(&ModelSpec::new(vec![2, 1], 0.0).unwrap(), 1).unwrap();
        let mut st = AdamState::new(&m, AdamConfig::default());
        let g = grads_like(&m, -0.5);
        let mut last = m.flat_params()[0];
        for _ in 0..20 {
            adam_step(&mut m, &g, &mut st, 0.01, &[0.0]).unwrap();
            let now = m.flat_params()[0];
            assert!(now > last);
            last = now;
        }
        assert_eq!(st.steps(), 20);
    }
}
