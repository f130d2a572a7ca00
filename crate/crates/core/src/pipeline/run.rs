use std::time::Instant;

use rayon::prelude::*;

use super::{ExperimentConfig, ExperimentResult, Method, PipelineError, SeedRun};
use crate::augment::{generate_views, AugmentSpec};
use crate::exchange::run_schedule;
use crate::graph::Graph;
use crate::nn::{accuracy, infer, init_model, predict, train_on, GnnModel, ModelInput, ModelSpec, TrainConfig, TrainHistory};
use crate::rng::derive;

// Stream tags mixed into the per-seed derivations.
const VIEWS: u64 = 1;
const INIT: u64 = 2;
const TRAIN: u64 = 3;
const EXCHANGE: u64 = 4;
const RETRAIN: u64 = 5;

/// Applies the config's feature preprocessing.
pub fn prepare_graph(g: &Graph, cfg: &ExperimentConfig) -> Graph {
    if cfg.row_normalize {
        g.row_normalized()
    } else {
        g.clone()
    }
}

/// Shared per-seed state: the prepared graph and its eval input.
pub(crate) struct Context<'a> {
    pub graph: &'a Graph,
    pub eval: ModelInput,
    pub spec: ModelSpec,
    pub cfg: &'a ExperimentConfig,
}

impl<'a> Context<'a> {
    pub(crate) fn new(graph: &'a Graph, cfg: &'a ExperimentConfig) -> Result<Self, PipelineError> {
        Ok(Self {
            graph,
            eval: ModelInput::from_graph(graph),
            spec: cfg.model_spec(graph.num_features(), graph.num_classes())?,
            cfg,
        })
    }

    fn view_inputs(&self, seed: u64) -> Result<Vec<ModelInput>, PipelineError> {
        let spec = AugmentSpec {
            seed: derive(seed, &[VIEWS]),
            ..self.cfg.augment
        };
        let views = generate_views(self.graph, &spec, self.cfg.num_views)?;
        Ok(views.iter().map(ModelInput::from_view).collect())
    }

    fn fit(&self, model: GnnModel, input: &ModelInput, seed: u64) -> Result<(GnnModel, TrainHistory), PipelineError> {
        let cfg = TrainConfig {
            seed,
            ..self.cfg.train.clone()
        };
        Ok(train_on(model, input, &self.eval, self.graph, &cfg)?)
    }

    fn fresh(&self, seed: u64, k: usize) -> Result<GnnModel, PipelineError> {
        Ok(init_model(&self.spec, derive(seed, &[INIT, k as u64]))?)
    }

    /// One model per view, trained for one stage or two.
    fn train_views(
        &self,
        seed: u64,
        inputs: &[ModelInput],
        stages: usize,
    ) -> Result<Vec<(GnnModel, Vec<TrainHistory>)>, PipelineError> {
        inputs
            .par_iter()
            .enumerate()
            .map(|(k, input)| {
                let (mut model, first) = self.fit(self.fresh(seed, k)?, input, derive(seed, &[TRAIN, k as u64]))?;
                let mut hist = vec![first];
                for _ in 1..stages {
                    let (m, h) = self.fit(model, input, derive(seed, &[RETRAIN, k as u64]))?;
                    model = m;
                    hist.push(h);
                }
                Ok((model, hist))
            })
            .collect()
    }

    fn predictions(&self, model: &GnnModel) -> Result<Vec<usize>, PipelineError> {
        Ok(predict(&infer(model, &self.eval)?))
    }

    fn scores(&self, pred: &[usize]) -> Result<(f64, f64), PipelineError> {
        let g = self.graph;
        Ok((
            accuracy(pred, g.labels(), g.test_mask())?,
            accuracy(pred, g.labels(), g.val_mask())?,
        ))
    }
}

fn epochs(hist: &[TrainHistory]) -> usize {
    hist.iter().map(|h| h.stop_epoch).sum()
}

fn budget(hist: &[TrainHistory]) -> usize {
    hist.iter().map(|h| h.budget).sum()
}

/// Per-node vote over class predictions; ties go to the lowest class id.
pub fn majority_vote(predictions: &[Vec<usize>], num_classes: usize) -> Vec<usize> {
    let n = predictions.first().map_or(0, Vec::len);
    let mut tally = vec![0usize; num_classes];
    (0..n)
        .map(|i| {
            tally.iter_mut().for_each(|t| *t = 0);
            for p in predictions {
                tally[p[i]] += 1;
            }
            let mut best = 0;
            for c in 1..num_classes {
                if tally[c] > tally[best] {
                    best = c;
                }
            }
            best
        })
        .collect()
}

pub(crate) fn seed_run(ctx: &Context<'_>, method: Method, seed: u64) -> Result<SeedRun, PipelineError> {
    let start = Instant::now();
    let cfg = ctx.cfg;
    let mut run = SeedRun {
        seed,
        test_accuracy: 0.0,
        val_accuracy: 0.0,
        epochs_used: 0,
        model_budgets: Vec::new(),
        wall_ms: 0,
        events: Vec::new(),
    };
    match method {
        Method::Backbone => {
            let (model, hist) = ctx.fit(ctx.fresh(seed, 0)?, &ctx.eval, derive(seed, &[TRAIN, 0]))?;
            (run.test_accuracy, run.val_accuracy) = ctx.scores(&ctx.predictions(&model)?)?;
            run.epochs_used = hist.stop_epoch;
            run.model_budgets = vec![hist.budget];
        }
        Method::Ft => {
            let inputs = ctx.view_inputs(seed)?;
            let trained = ctx.train_views(seed, &inputs, 2)?;
            let mut best: Option<(f64, f64, usize)> = None;
            for (model, hist) in &trained {
                let (test, val) = ctx.scores(&ctx.predictions(model)?)?;
                if best.is_none_or(|b| test > b.0) {
                    best = Some((test, val, epochs(hist)));
                }
                run.model_budgets.push(budget(hist));
            }
            let (test, val, used) = best.expect("at least two views");
            (run.test_accuracy, run.val_accuracy, run.epochs_used) = (test, val, used);
        }
        Method::Ensemble | Method::EnsembleFt => {
            let stages = if method == Method::EnsembleFt { 2 } else { 1 };
            let inputs = ctx.view_inputs(seed)?;
            let trained = ctx.train_views(seed, &inputs, stages)?;
            let preds = trained
                .iter()
                .map(|(m, _)| ctx.predictions(m))
                .collect::<Result<Vec<_>, _>>()?;
            let vote = majority_vote(&preds, ctx.graph.num_classes());
            (run.test_accuracy, run.val_accuracy) = ctx.scores(&vote)?;
            run.epochs_used = trained.iter().map(|(_, h)| epochs(h)).sum();
            run.model_budgets = trained.iter().map(|(_, h)| budget(h)).collect();
        }
        Method::Ake => {
            let inputs = ctx.view_inputs(seed)?;
            let trained = ctx.train_views(seed, &inputs, 1)?;
            let (mut models, first): (Vec<GnnModel>, Vec<Vec<TrainHistory>>) = trained.into_iter().unzip();
            run.events = run_schedule(&mut models, &cfg.exchange, derive(seed, &[EXCHANGE]))?;
            let retrained: Vec<(GnnModel, TrainHistory)> = models
                .into_par_iter()
                .zip(inputs.par_iter())
                .enumerate()
                .map(|(k, (model, input))| ctx.fit(model, input, derive(seed, &[RETRAIN, k as u64])))
                .collect::<Result<_, _>>()?;
            (run.test_accuracy, run.val_accuracy) = ctx.scores(&ctx.predictions(&retrained[0].0)?)?;
            run.epochs_used = epochs(&first[0]) + retrained[0].1.stop_epoch;
            run.model_budgets = first
                .iter()
                .zip(&retrained)
                .map(|(h, (_, r))| budget(h) + r.budget)
                .collect();
        }
    }
    run.wall_ms = start.elapsed().as_millis() as u64;
    Ok(run)
}

/// Runs `method` for every seed in `cfg.seeds` on an already prepared graph.
pub(crate) fn run_prepared(g: &Graph, cfg: &ExperimentConfig, method: Method) -> Result<ExperimentResult, PipelineError> {
    let cfg = ExperimentConfig {
        method,
        ..cfg.clone()
    };
    cfg.validate()?;
    let ctx = Context::new(g, &cfg)?;
    let runs = cfg
        .seeds
        .par_iter()
        .map(|&s| seed_run(&ctx, method, s))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ExperimentResult::from_runs(&cfg, method, runs))
}

/// Runs `cfg.method` over `cfg.seeds`.
pub fn run_method(g: &Graph, cfg: &ExperimentConfig) -> Result<ExperimentResult, PipelineError> {
    run_prepared(&prepare_graph(g, cfg), cfg, cfg.method)
}

/// Views, individual training, exchange, retraining with the same budget;
/// reports the first model.
pub fn run_ake(g: &Graph, cfg: &ExperimentConfig) -> Result<ExperimentResult, PipelineError> {
    run_prepared(&prepare_graph(g, cfg), cfg, Method::Ake)
}

/// A single model on the original graph.
pub fn run_backbone(g: &Graph, cfg: &ExperimentConfig) -> Result<ExperimentResult, PipelineError> {
    run_prepared(&prepare_graph(g, cfg), cfg, Method::Backbone)
}

/// One model per view, each trained for two budgets; the best view by test
/// accuracy is reported.
pub fn run_ft(g: &Graph, cfg: &ExperimentConfig) -> Result<ExperimentResult, PipelineError> {
    run_prepared(&prepare_graph(g, cfg), cfg, Method::Ft)
}

pub fn run_ensemble(g: &Graph, cfg: &ExperimentConfig, further_train: bool) -> Result<ExperimentResult, PipelineError> {
    let method = if further_train { Method::EnsembleFt } else { Method::Ensemble };
    run_prepared(&prepare_graph(g, cfg), cfg, method)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vote_counts_and_breaks_ties_low() {
        let preds = vec![vec![0, 1, 2, 2], vec![1, 1, 0, 2], vec![1, 2, 1, 0]];
        assert_eq!(majority_vote(&preds, 3), vec![1, 1, 0, 2]);
        assert_eq!(majority_vote(&[vec![2, 0]], 3), vec![2, 0]);
    }
}
