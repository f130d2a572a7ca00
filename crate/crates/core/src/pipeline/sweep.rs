use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::run::{prepare_graph, run_prepared, seed_run, Context};
use super::{ExperimentConfig, ExperimentResult, Method, PipelineError, SeedRun};
use crate::exchange::{ExchangeConfig, ExchangeStrategy};
use crate::graph::{Graph, Splits};
use crate::rng::{derive, seeded};

const FEWSHOT: u64 = 6;

/// AKE once per strategy, all with the same seeds and exchange budget.
pub fn ablation_sweep(
    g: &Graph,
    cfg: &ExperimentConfig,
    strategies: &[ExchangeStrategy],
) -> Result<Vec<ExperimentResult>, PipelineError> {
    if strategies.is_empty() {
        return Err(PipelineError::InvalidConfig("no strategies given".into()));
    }
    let g = prepare_graph(g, cfg);
    strategies
        .iter()
        .map(|&strategy| {
            let cfg = ExperimentConfig {
                exchange: ExchangeConfig {
                    strategy,
                    ..cfg.exchange.clone()
                },
                ..cfg.clone()
            };
            run_prepared(&g, &cfg, Method::Ake)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthPoint {
    /// Number of GCN layers.
    pub depth: usize,
    pub backbone: ExperimentResult,
    pub ake: ExperimentResult,
}

/// Backbone and AKE at each depth, every hidden layer as wide as the first
/// configured one.
pub fn depth_sweep(g: &Graph, cfg: &ExperimentConfig, depths: &[usize]) -> Result<Vec<DepthPoint>, PipelineError> {
    let g = prepare_graph(g, cfg);
    depths
        .iter()
        .map(|&depth| {
            let cfg = cfg.with_depth(depth)?;
            Ok(DepthPoint {
                depth,
                backbone: run_prepared(&g, &cfg, Method::Backbone)?,
                ake: run_prepared(&g, &cfg, Method::Ake)?,
            })
        })
        .collect()
}

/// Public split with the training set replaced by `per_class` nodes of each
/// class, drawn uniformly without replacement from nodes outside validation
/// and test.
pub fn fewshot_split(g: &Graph, per_class: usize, seed: u64) -> Result<Splits, PipelineError> {
    if per_class == 0 {
        return Err(PipelineError::InvalidConfig("labels per class must be at least 1".into()));
    }
    let mut pools = vec![Vec::new(); g.num_classes()];
    for i in 0..g.num_nodes() {
        if !g.val_mask()[i] && !g.test_mask()[i] {
            pools[g.labels()[i]].push(i);
        }
    }
    let mut rng = seeded(seed);
    let mut train = Vec::with_capacity(per_class * pools.len());
    for (class, pool) in pools.iter().enumerate() {
        if pool.len() < per_class {
            return Err(PipelineError::InsufficientLabeledNodes {
                class,
                available: pool.len(),
                requested: per_class,
            });
        }
        train.extend(index::sample(&mut rng, pool.len(), per_class).iter().map(|k| pool[k]));
    }
    train.sort_unstable();
    let base = g.splits();
    Ok(Splits {
        train,
        val: base.val,
        test: base.test,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FewShotPoint {
    pub labels_per_class: usize,
    pub backbone: ExperimentResult,
    pub ake: ExperimentResult,
}

/// Backbone and AKE on resampled training sets; each seed draws its own set,
/// shared by both methods.
pub fn fewshot_sweep(g: &Graph, cfg: &ExperimentConfig, budgets: &[usize]) -> Result<Vec<FewShotPoint>, PipelineError> {
    cfg.validate()?;
    let g = prepare_graph(g, cfg);
    budgets
        .iter()
        .map(|&per_class| {
            let paired: Vec<(SeedRun, SeedRun)> = cfg
                .seeds
                .par_iter()
                .map(|&seed| {
                    let splits = fewshot_split(&g, per_class, derive(seed, &[FEWSHOT, per_class as u64]))?;
                    let resampled = g.with_splits(&splits)?;
                    let ctx = Context::new(&resampled, cfg)?;
                    Ok((seed_run(&ctx, Method::Backbone, seed)?, seed_run(&ctx, Method::Ake, seed)?))
                })
                .collect::<Result<_, PipelineError>>()?;
            let (backbone, ake): (Vec<_>, Vec<_>) = paired.into_iter().unzip();
            Ok(FewShotPoint {
                labels_per_class: per_class,
                backbone: ExperimentResult::from_runs(cfg, Method::Backbone, backbone),
                ake: ExperimentResult::from_runs(cfg, Method::Ake, ake),
            })
        })
        .collect()
}
