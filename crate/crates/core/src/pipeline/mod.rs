//! Experiments: the AKE procedure, its baselines, and the sweeps built on them.
//!
//! Every stochastic choice in a run is drawn from a stream derived from the
//! run's seed, so a seed list fixes the outcome. Independent trainings run on
//! the rayon pool; results are gathered in seed order and do not depend on the
//! number of threads.

mod run;
mod sweep;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::augment::{AugmentError, AugmentSpec};
use crate::exchange::{ExchangeConfig, ExchangeError, ExchangeEvent, ExchangeStrategy};
use crate::graph::GraphError;
use crate::nn::{ModelError, ModelSpec, TrainConfig};

pub use run::{majority_vote, prepare_graph, run_ake, run_backbone, run_ensemble, run_ft, run_method};
pub use sweep::{ablation_sweep, depth_sweep, fewshot_split, fewshot_sweep, DepthPoint, FewShotPoint};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Augment(#[from] AugmentError),
    #[error(transparent)]
    Exchange(#[from] ExchangeError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("class {class} has {available} labeled nodes outside validation and test, {requested} requested")]
    InsufficientLabeledNodes {
        class: usize,
        available: usize,
        requested: usize,
    },
    #[error("invalid experiment config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// One model on the original graph.
    Backbone,
    /// One model per view, trained twice as long; best view reported.
    Ft,
    /// Class vote over one model per view.
    Ensemble,
    /// Class vote over per-view models trained twice as long.
    EnsembleFt,
    /// Views, individual training, exchange, retraining; first model reported.
    Ake,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Backbone, Method::Ft, Method::Ensemble, Method::EnsembleFt, Method::Ake];

    pub fn name(self) -> &'static str {
        match self {
            Method::Backbone => "backbone",
            Method::Ft => "ft",
            Method::Ensemble => "ensemble",
            Method::EnsembleFt => "ensemble-ft",
            Method::Ake => "ake",
        }
    }

    /// Whether the run trains on augmented views.
    pub fn uses_views(self) -> bool {
        self != Method::Backbone
    }
}

/// Field-for-field mirror of the JSON config file. The defaults describe a
/// two-layer GCN with four views on a citation graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Hidden widths; the input and class widths come from the graph.
    pub hidden: Vec<usize>,
    pub dropout: f64,
    pub train: TrainConfig,
    /// The `seed` field is ignored; views are seeded per run.
    pub augment: AugmentSpec,
    pub exchange: ExchangeConfig,
    pub num_views: usize,
    pub seeds: Vec<u64>,
    pub method: Method,
    /// Scale each feature row to unit L1 norm before training.
    pub row_normalize: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            hidden: vec![16],
            dropout: 0.5,
            train: TrainConfig::default(),
            augment: AugmentSpec::default(),
            exchange: ExchangeConfig::default(),
            num_views: 4,
            seeds: (0..10).collect(),
            method: Method::Ake,
            row_normalize: true,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.seeds.is_empty() {
            return Err(PipelineError::InvalidConfig("seed list is empty".into()));
        }
        if self.method.uses_views() && self.num_views < 2 {
            return Err(PipelineError::InvalidConfig(format!(
                "{} needs at least 2 views, got {}",
                self.method.name(),
                self.num_views
            )));
        }
        self.train.validate()?;
        self.augment.validate()?;
        self.exchange.validate()?;
        Ok(())
    }

    pub fn model_spec(&self, input: usize, classes: usize) -> Result<ModelSpec, PipelineError> {
        Ok(ModelSpec::gcn(input, &self.hidden, classes, self.dropout)?)
    }

    /// Hex SHA-256 of the config's JSON form.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }

    /// Same config with `depth` GCN layers of the first hidden width.
    pub fn with_depth(&self, depth: usize) -> Result<Self, PipelineError> {
        if depth < 2 {
            return Err(PipelineError::InvalidConfig(format!("depth must be at least 2, got {depth}")));
        }
        let width = self.hidden.first().copied().unwrap_or(16);
        Ok(Self {
            hidden: vec![width; depth - 1],
            ..self.clone()
        })
    }
}

/// Outcome of one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRun {
    pub seed: u64,
    pub test_accuracy: f64,
    pub val_accuracy: f64,
    /// Epochs actually run by the reported model, summed over its stages.
    pub epochs_used: usize,
    /// Configured epoch budget of each trained model, summed over stages.
    pub model_budgets: Vec<usize>,
    pub wall_ms: u64,
    pub events: Vec<ExchangeEvent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub method: Method,
    /// Exchange strategy for AKE runs.
    pub strategy: Option<ExchangeStrategy>,
    pub runs: Vec<SeedRun>,
    pub mean: f64,
    /// Population standard deviation of the per-seed test accuracies.
    pub std: f64,
    pub wall_ms: u64,
    pub fingerprint: String,
}

impl ExperimentResult {
    pub(crate) fn from_runs(cfg: &ExperimentConfig, method: Method, runs: Vec<SeedRun>) -> Self {
        let acc: Vec<f64> = runs.iter().map(|r| r.test_accuracy).collect();
        let (mean, std) = mean_std(&acc);
        Self {
            method,
            strategy: (method == Method::Ake).then_some(cfg.exchange.strategy),
            wall_ms: runs.iter().map(|r| r.wall_ms).sum(),
            runs,
            mean,
            std,
            fingerprint: cfg.fingerprint(),
        }
    }

    pub fn test_accuracies(&self) -> Vec<f64> {
        self.runs.iter().map(|r| r.test_accuracy).collect()
    }
}

/// Mean and population standard deviation; `(NaN, NaN)` for no values.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}
