//! GCN model, forward/backward passes, loss, optimizer, and training loop.

mod forward;
mod loss;
mod optim;
mod train;

use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::Matrix;
use crate::rng;

pub use forward::{backward, forward, infer, ForwardCache, ForwardOutput, Gradients, LayerGrad, ModelInput};
pub use loss::{log_softmax_rows, masked_cross_entropy, softmax_rows};
pub use optim::{adam_step, AdamConfig, AdamState};
pub use train::{
    accuracy, evaluate, predict, train, train_on, StopMetric, TrainConfig, TrainHistory,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: String, actual: String },
    #[error("mask selects no nodes")]
    EmptyMask,
    #[error("forward cache was produced by a different model state")]
    StaleCache,
    #[error("invalid model spec: {0}")]
    InvalidSpec(String),
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
}

/// Layer widths `[d, hidden.., classes]` plus dropout; ReLU between layers,
/// identity after the last one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub layer_sizes: Vec<usize>,
    pub dropout: f64,
}

impl ModelSpec {
    pub fn new(layer_sizes: Vec<usize>, dropout: f64) -> Result<Self, ModelError> {
        let spec = Self {
            layer_sizes,
            dropout,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// `[input, hidden.., classes]`.
    pub fn gcn(input: usize, hidden: &[usize], classes: usize, dropout: f64) -> Result<Self, ModelError> {
        let mut sizes = Vec::with_capacity(hidden.len() + 2);
        sizes.push(input);
        sizes.extend_from_slice(hidden);
        sizes.push(classes);
        Self::new(sizes, dropout)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.layer_sizes.len() < 2 {
            return Err(ModelError::InvalidSpec("need at least one layer".into()));
        }
        if self.layer_sizes.contains(&0) {
            return Err(ModelError::InvalidSpec("layer widths must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(ModelError::InvalidSpec(format!(
                "dropout must lie in [0, 1), got {}",
                self.dropout
            )));
        }
        Ok(())
    }

    pub fn num_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    /// `(C_l, C_{l+1})` for layer `l`.
    pub fn layer_shape(&self, l: usize) -> (usize, usize) {
        (self.layer_sizes[l], self.layer_sizes[l + 1])
    }
}

/// Weight `C_l × C_{l+1}` and bias `C_{l+1}`. Output channel `j` is weight
/// column `j` together with `bias[j]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerParams {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl LayerParams {
    pub fn shape(&self) -> (usize, usize) {
        self.weight.shape()
    }

    pub fn num_params(&self) -> usize {
        self.weight.as_slice().len() + self.bias.len()
    }

    pub fn is_finite(&self) -> bool {
        self.weight.as_slice().iter().chain(&self.bias).all(|x| x.is_finite())
    }
}

static NEXT_MODEL_ID: AtomicU64 = AtomicU64::new(1);

/// A multi-layer GCN.
///
/// Parameters are only reachable mutably through [`GnnModel::layer_mut`],
/// which bumps an internal revision so forward caches taken before a mutation
/// are rejected by [`backward`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GnnModel {
    spec: ModelSpec,
    layers: Vec<LayerParams>,
    init_seed: u64,
    #[serde(skip, default = "fresh_id")]
    id: u64,
    #[serde(skip)]
    revision: u64,
}

fn fresh_id() -> u64 {
    NEXT_MODEL_ID.fetch_add(1, Ordering::Relaxed)
}

impl PartialEq for GnnModel {
    fn eq(&self, other: &Self) -> bool {
        self.spec == other.spec && self.layers == other.layers && self.init_seed == other.init_seed
    }
}

impl GnnModel {
    /// Wraps explicit parameters, checking them against `spec`.
    pub fn from_layers(spec: ModelSpec, layers: Vec<LayerParams>, init_seed: u64) -> Result<Self, ModelError> {
        spec.validate()?;
        if layers.len() != spec.num_layers() {
            return Err(ModelError::ShapeMismatch {
                expected: format!("{} layers", spec.num_layers()),
                actual: format!("{} layers", layers.len()),
            });
        }
        for (l, p) in layers.iter().enumerate() {
            let want = spec.layer_shape(l);
            if p.shape() != want || p.bias.len() != want.1 {
                return Err(ModelError::ShapeMismatch {
                    expected: format!("layer {l} weight {want:?}, bias {}", want.1),
                    actual: format!("weight {:?}, bias {}", p.shape(), p.bias.len()),
                });
            }
        }
        Ok(Self {
            spec,
            layers,
            init_seed,
            id: fresh_id(),
            revision: 0,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn init_seed(&self) -> u64 {
        self.init_seed
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn layers(&self) -> &[LayerParams] {
        &self.layers
    }

    pub fn layer(&self, l: usize) -> &LayerParams {
        &self.layers[l]
    }

    pub fn layer_mut(&mut self, l: usize) -> &mut LayerParams {
        self.revision += 1;
        &mut self.layers[l]
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(LayerParams::num_params).sum()
    }

    /// All scalars, layer by layer, weights before biases.
    pub fn flat_params(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|p| p.weight.as_slice().iter().chain(&p.bias).copied())
            .collect()
    }

    pub(crate) fn stamp(&self) -> (u64, u64) {
        (self.id, self.revision)
    }
}

/// Glorot-uniform weights in `±sqrt(6 / (C_l + C_{l+1}))`, zero biases.
pub fn init_model(spec: &ModelSpec, seed: u64) -> Result<GnnModel, ModelError> {
    spec.validate()?;
    let mut r = rng::seeded(seed);
    let layers = (0..spec.num_layers())
        .map(|l| {
            let (fan_in, fan_out) = spec.layer_shape(l);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            LayerParams {
                weight: Matrix::from_fn(fan_in, fan_out, |_, _| r.random_range(-limit..=limit)),
                bias: vec![0.0; fan_out],
            }
        })
        .collect();
    GnnModel::from_layers(spec.clone(), layers, seed)
}
