//! Channel exchange between trained models.
//!
//! In each step the target's two most correlated output channels form a
//! redundant pair; one of them is swapped with the source channel that leaves
//! the target weights with the highest histogram entropy. The other
//! strategies are ablations that move the same number of weight scalars per
//! layer: `M · C_l`, where `C_l × C_{l+1}` is the layer's weight shape.

mod correlation;
mod entropy;
mod select;
mod swap;

use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::{init_model, GnnModel};
use crate::rng;

pub use correlation::{most_correlated_pair, CorrelatedPair, CorrelationTable};
pub use entropy::{
    empirical_entropy, entropy_from_counts, histogram, joint_entropy, matrix_entropy, values_entropy, EntropyConfig,
};
pub use select::{select_exchange, select_exchange_along, Selection};
pub use swap::{swap_channels, swap_positions, swap_segments, swap_within};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExchangeError {
    #[error("matrix has no entries")]
    EmptyMatrix,
    #[error("need at least 2 channels of length at least 2, got {channels} of length {length}")]
    TooFewChannels { channels: usize, length: usize },
    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: String, actual: String },
    #[error("index {index} out of range (bound {bound})")]
    IndexOutOfRange { index: usize, bound: usize },
    #[error("M = {m} exceeds the {limit} output channels available to {strategy}")]
    MTooLarge { m: usize, limit: usize, strategy: ExchangeStrategy },
    #[error("models do not share one architecture")]
    SpecMismatch,
    #[error("exchange needs at least 2 models, got {0}")]
    TooFewModels(usize),
    #[error("invalid exchange config: {0}")]
    InvalidConfig(String),
}

/// Output channels are weight columns (plus bias); input channels are rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Output,
    Input,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExchangeStrategy {
    AdaptiveOutput,
    RandomOutput,
    InOrderOutput,
    AdaptiveInput,
    RandomInput,
    InOrderInput,
    PointwiseRandom,
    RandomInitPartner,
    SelfExchange,
}

impl ExchangeStrategy {
    pub const ALL: [ExchangeStrategy; 9] = [
        ExchangeStrategy::AdaptiveOutput,
        ExchangeStrategy::RandomOutput,
        ExchangeStrategy::InOrderOutput,
        ExchangeStrategy::AdaptiveInput,
        ExchangeStrategy::RandomInput,
        ExchangeStrategy::InOrderInput,
        ExchangeStrategy::PointwiseRandom,
        ExchangeStrategy::RandomInitPartner,
        ExchangeStrategy::SelfExchange,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExchangeStrategy::AdaptiveOutput => "adaptive-output",
            ExchangeStrategy::RandomOutput => "random-output",
            ExchangeStrategy::InOrderOutput => "in-order-output",
            ExchangeStrategy::AdaptiveInput => "adaptive-input",
            ExchangeStrategy::RandomInput => "random-input",
            ExchangeStrategy::InOrderInput => "in-order-input",
            ExchangeStrategy::PointwiseRandom => "pointwise-random",
            ExchangeStrategy::RandomInitPartner => "random-init-partner",
            ExchangeStrategy::SelfExchange => "self-exchange",
        }
    }

    /// `None` for the pointwise strategy, which ignores channels.
    pub fn axis(self) -> Option<Axis> {
        match self {
            ExchangeStrategy::AdaptiveInput | ExchangeStrategy::RandomInput | ExchangeStrategy::InOrderInput => {
                Some(Axis::Input)
            }
            ExchangeStrategy::PointwiseRandom => None,
            _ => Some(Axis::Output),
        }
    }

    /// True when the pair's combined parameter multiset is preserved.
    pub fn conserves_parameters(self) -> bool {
        !matches!(self, ExchangeStrategy::RandomInitPartner | ExchangeStrategy::SelfExchange)
    }
}

impl fmt::Display for ExchangeStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExchangeStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Some(exact) = Self::ALL.into_iter().find(|st| st.name() == s) {
            return Ok(exact);
        }
        // an unambiguous prefix such as `pointwise` is accepted too
        let hits: Vec<_> = Self::ALL.into_iter().filter(|st| !s.is_empty() && st.name().starts_with(s)).collect();
        match hits.as_slice() {
            [one] => Ok(*one),
            _ => {
                let names: Vec<_> = Self::ALL.iter().map(|st| st.name()).collect();
                Err(format!("unknown strategy '{s}', expected one of {}", names.join(", ")))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExchangeConfig {
    /// `N`, number of source→target rounds.
    pub iterations: usize,
    /// `M`, output channels exchanged per layer and round.
    pub channels_per_layer: usize,
    pub strategy: ExchangeStrategy,
    pub entropy: EntropyConfig,
    /// Layers to exchange; `None` means all of them.
    pub layers: Option<Vec<usize>>,
}

impl Default for ExchangeConfig {
    fn default() -> Self {
        Self {
            iterations: 3,
            channels_per_layer: 5,
            strategy: ExchangeStrategy::AdaptiveOutput,
            entropy: EntropyConfig::default(),
            layers: None,
        }
    }
}

impl ExchangeConfig {
    pub fn validate(&self) -> Result<(), ExchangeError> {
        if self.iterations == 0 {
            return Err(ExchangeError::InvalidConfig("iterations must be at least 1".into()));
        }
        if self.channels_per_layer == 0 {
            return Err(ExchangeError::InvalidConfig("channels_per_layer must be at least 1".into()));
        }
        self.entropy.validate()
    }

    /// Layer indices to visit for a model with `num_layers` layers.
    pub fn layer_indices(&self, num_layers: usize) -> Result<Vec<usize>, ExchangeError> {
        match &self.layers {
            None => Ok((0..num_layers).collect()),
            Some(ls) => {
                if let Some(&bad) = ls.iter().find(|&&l| l >= num_layers) {
                    return Err(ExchangeError::IndexOutOfRange {
                        index: bad,
                        bound: num_layers,
                    });
                }
                let mut ls = ls.clone();
                ls.sort_unstable();
                ls.dedup();
                Ok(ls)
            }
        }
    }
}

/// One exchange step, as written to the trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExchangeEvent {
    /// 1-based round `n`.
    pub iteration: usize,
    /// 0-based model indices.
    pub source_model: usize,
    pub target_model: usize,
    pub layer: usize,
    /// Step within the layer.
    pub step: usize,
    pub strategy: ExchangeStrategy,
    pub axis: Option<Axis>,
    pub source_channel: Option<usize>,
    pub redundant_pair: Option<(usize, usize)>,
    pub target_channel: Option<usize>,
    /// Weight scalars moved in each direction (bias entries not counted).
    pub scalars_moved: usize,
    pub correlation: Option<f64>,
    pub entropy_before: f64,
    pub entropy_after: f64,
}

/// Splits the layer budget of `m · rows` scalars into row-sized segments; the
/// last one may be shorter.
fn input_segments(m: usize, rows: usize, cols: usize) -> Vec<usize> {
    let budget = m * rows;
    let full = budget / cols;
    let mut segs = vec![cols; full];
    if !budget.is_multiple_of(cols) {
        segs.push(budget % cols);
    }
    segs
}

/// Runs `cfg.channels_per_layer` sequential steps of `cfg.strategy` on layer
/// `l`, moving channels from `source` into `target`. Swaps are bidirectional
/// except for the strategies that never touch `source`. The returned events
/// carry `iteration = 0` and model indices `0 → 1`; [`run_schedule`] fills in
/// the real ones.
pub fn exchange_layer<R: Rng + ?Sized>(
    source: &mut GnnModel,
    target: &mut GnnModel,
    l: usize,
    cfg: &ExchangeConfig,
    rng: &mut R,
) -> Result<Vec<ExchangeEvent>, ExchangeError> {
    cfg.validate()?;
    if source.spec().layer_sizes != target.spec().layer_sizes {
        return Err(ExchangeError::SpecMismatch);
    }
    if l >= target.num_layers() {
        return Err(ExchangeError::IndexOutOfRange {
            index: l,
            bound: target.num_layers(),
        });
    }
    let strategy = cfg.strategy;
    let m = cfg.channels_per_layer;
    let (rows, cols) = target.layer(l).shape();
    let bins = &cfg.entropy;
    let too_large = |limit| ExchangeError::MTooLarge { m, limit, strategy };
    let entropy = |t: &GnnModel| matrix_entropy(&t.layer(l).weight, bins);

    let event = |step, before, after| ExchangeEvent {
        iteration: 0,
        source_model: 0,
        target_model: 1,
        layer: l,
        step,
        strategy,
        axis: strategy.axis(),
        source_channel: None,
        redundant_pair: None,
        target_channel: None,
        scalars_moved: rows,
        correlation: None,
        entropy_before: before,
        entropy_after: after,
    };

    let mut events = Vec::new();
    match strategy {
        ExchangeStrategy::AdaptiveOutput | ExchangeStrategy::AdaptiveInput => {
            let axis = strategy.axis().expect("channel strategy");
            let segments = match axis {
                Axis::Output => vec![rows; m],
                Axis::Input => {
                    if m > cols {
                        return Err(too_large(cols));
                    }
                    input_segments(m, rows, cols)
                }
            };
            let mut table = CorrelationTable::new(&target.layer(l).weight, axis)?;
            for (step, &len) in segments.iter().enumerate() {
                let pair = table.best();
                let before = entropy(target)?;
                let sel = select_exchange_along(
                    &source.layer(l).weight,
                    &target.layer(l).weight,
                    axis,
                    pair.idx1,
                    pair.idx2,
                    len,
                    bins,
                )?;
                if axis == Axis::Output {
                    swap_channels(source, target, l, sel.i, sel.r, axis)?;
                } else {
                    swap_segments(source, target, l, axis, sel.i, sel.r, len)?;
                }
                table.update(&target.layer(l).weight, sel.r);
                let after = entropy(target)?;
                events.push(ExchangeEvent {
                    source_channel: Some(sel.i),
                    redundant_pair: Some((pair.idx1, pair.idx2)),
                    target_channel: Some(sel.r),
                    scalars_moved: len,
                    correlation: Some(pair.correlation),
                    ..event(step, before, after)
                });
            }
        }
        ExchangeStrategy::RandomOutput | ExchangeStrategy::InOrderOutput | ExchangeStrategy::RandomInitPartner => {
            if strategy == ExchangeStrategy::InOrderOutput && m > cols {
                return Err(too_large(cols));
            }
            let mut fresh = (strategy == ExchangeStrategy::RandomInitPartner)
                .then(|| init_model(source.spec(), rng.random()))
                .transpose()
                .map_err(|e| ExchangeError::InvalidConfig(e.to_string()))?;
            for step in 0..m {
                let (i, r) = if strategy == ExchangeStrategy::InOrderOutput {
                    (step, step)
                } else {
                    (rng.random_range(0..cols), rng.random_range(0..cols))
                };
                let before = entropy(target)?;
                let partner = fresh.as_mut().unwrap_or(source);
                swap_channels(partner, target, l, i, r, Axis::Output)?;
                events.push(ExchangeEvent {
                    source_channel: Some(i),
                    target_channel: Some(r),
                    ..event(step, before, entropy(target)?)
                });
            }
        }
        ExchangeStrategy::RandomInput | ExchangeStrategy::InOrderInput => {
            if m > cols {
                return Err(too_large(cols));
            }
            for (step, len) in input_segments(m, rows, cols).into_iter().enumerate() {
                let (i, r) = if strategy == ExchangeStrategy::InOrderInput {
                    (step, step)
                } else {
                    (rng.random_range(0..rows), rng.random_range(0..rows))
                };
                let before = entropy(target)?;
                swap_segments(source, target, l, Axis::Input, i, r, len)?;
                events.push(ExchangeEvent {
                    source_channel: Some(i),
                    target_channel: Some(r),
                    scalars_moved: len,
                    ..event(step, before, entropy(target)?)
                });
            }
        }
        ExchangeStrategy::PointwiseRandom => {
            if m > cols {
                return Err(too_large(cols));
            }
            let mut positions = index::sample(rng, rows * cols, m * rows).into_vec();
            positions.sort_unstable();
            let before = entropy(target)?;
            swap_positions(source, target, l, &positions)?;
            events.push(ExchangeEvent {
                scalars_moved: positions.len(),
                ..event(0, before, entropy(target)?)
            });
        }
        ExchangeStrategy::SelfExchange => {
            if cols < 2 {
                return Err(ExchangeError::TooFewChannels { channels: cols, length: rows });
            }
            for step in 0..m {
                let a = rng.random_range(0..cols);
                let b = (a + rng.random_range(1..cols)) % cols;
                let before = entropy(target)?;
                swap_within(target, l, a, b)?;
                events.push(ExchangeEvent {
                    source_channel: Some(a),
                    target_channel: Some(b),
                    ..event(step, before, entropy(target)?)
                });
            }
        }
    }
    Ok(events)
}

/// 0-based `(source, target)` for 1-based round `n` among `k` models:
/// `s = (n − 1) mod k`, `t = n mod k`.
pub fn schedule_pair(n: usize, k: usize) -> (usize, usize) {
    ((n - 1) % k, n % k)
}

fn pair_mut(models: &mut [GnnModel], s: usize, t: usize) -> (&mut GnnModel, &mut GnnModel) {
    assert_ne!(s, t);
    if s < t {
        let (a, b) = models.split_at_mut(t);
        (&mut a[s], &mut b[0])
    } else {
        let (a, b) = models.split_at_mut(s);
        (&mut b[0], &mut a[t])
    }
}

/// Runs rounds `n = 1..=N`; in round `n` model `s` feeds model `t` on every
/// selected layer. Layer `l` of round `n` draws from its own stream derived
/// from `seed`, so layer order does not affect the outcome.
pub fn run_schedule(models: &mut [GnnModel], cfg: &ExchangeConfig, seed: u64) -> Result<Vec<ExchangeEvent>, ExchangeError> {
    cfg.validate()?;
    let k = models.len();
    if k < 2 {
        return Err(ExchangeError::TooFewModels(k));
    }
    if models.iter().any(|m| m.spec().layer_sizes != models[0].spec().layer_sizes) {
        return Err(ExchangeError::SpecMismatch);
    }
    let layers = cfg.layer_indices(models[0].num_layers())?;
    let mut events = Vec::new();
    for n in 1..=cfg.iterations {
        let (s, t) = schedule_pair(n, k);
        let (source, target) = pair_mut(models, s, t);
        for &l in &layers {
            let mut stream = rng::seeded(rng::derive(seed, &[n as u64, l as u64]));
            for mut e in exchange_layer(source, target, l, cfg, &mut stream)? {
                e.iteration = n;
                e.source_model = s;
                e.target_model = t;
                events.push(e);
            }
        }
    }
    Ok(events)
}
