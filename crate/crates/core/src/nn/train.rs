use serde::{Deserialize, Serialize};

use super::forward::{backward, forward, infer, ModelInput};
use super::loss::masked_cross_entropy;
use super::optim::{adam_step, AdamConfig, AdamState};
use super::{GnnModel, ModelError};
use crate::augment::GraphView;
use crate::graph::Graph;
use crate::linalg::Matrix;
use crate::rng;

/// Validation quantity watched by early stopping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum StopMetric {
    /// Stop once validation loss has not decreased for `tolerance_num` epochs.
    #[default]
    Loss,
    /// Stop once validation accuracy has not increased for `tolerance_num` epochs.
    Accuracy,
    /// Stop as soon as either of the two stalls. The kept epoch is the one
    /// with the lowest validation loss.
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    /// Per-layer decay; overrides `weight_decay` when present.
    pub layer_weight_decay: Option<Vec<f64>>,
    pub tolerance_metric: StopMetric,
    /// Patience in epochs; 0 turns early stopping off.
    pub tolerance_num: usize,
    pub adam: AdamConfig,
    /// Seeds the dropout stream.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            lr: 0.01,
            weight_decay: 5e-4,
            layer_weight_decay: None,
            tolerance_metric: StopMetric::Loss,
            tolerance_num: 10,
            adam: AdamConfig::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.epochs == 0 {
            return Err(ModelError::InvalidConfig("epochs must be at least 1".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(ModelError::InvalidConfig(format!("lr must be positive, got {}", self.lr)));
        }
        let decays = std::iter::once(&self.weight_decay).chain(self.layer_weight_decay.iter().flatten());
        for &wd in decays {
            if !(wd >= 0.0 && wd.is_finite()) {
                return Err(ModelError::InvalidConfig(format!(
                    "weight decay must be nonnegative, got {wd}"
                )));
            }
        }
        Ok(())
    }

    /// Decay per layer for a model with `layers` layers.
    pub fn decay_for(&self, layers: usize) -> Result<Vec<f64>, ModelError> {
        match &self.layer_weight_decay {
            None => Ok(vec![self.weight_decay; layers]),
            Some(v) if v.len() == layers => Ok(v.clone()),
            Some(v) => Err(ModelError::InvalidConfig(format!(
                "layer_weight_decay has {} entries for a {layers}-layer model",
                v.len()
            ))),
        }
    }
}

/// Per-epoch curves (index `e` is epoch `e + 1`). Validation curves are empty
/// when the graph has no validation nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub train_loss: Vec<f64>,
    pub train_accuracy: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub val_accuracy: Vec<f64>,
    /// Epochs actually run.
    pub stop_epoch: usize,
    /// 1-based epoch whose parameters were returned.
    pub best_epoch: usize,
    /// The configured epoch budget.
    pub budget: usize,
    pub stopped_early: bool,
}

/// Trains on `view` and validates on the view's base graph.
pub fn train(model: GnnModel, view: &GraphView<'_>, cfg: &TrainConfig) -> Result<(GnnModel, TrainHistory), ModelError> {
    let train_input = ModelInput::from_view(view);
    let eval_input = ModelInput::from_graph(view.base());
    train_on(model, &train_input, &eval_input, view.base(), cfg)
}

/// Full-batch training with prepared inputs. Gradients come from
/// `train_input`; validation and the reported accuracies from `eval_input`.
/// Labels and masks come from `graph`.
pub fn train_on(
    mut model: GnnModel,
    train_input: &ModelInput,
    eval_input: &ModelInput,
    graph: &Graph,
    cfg: &TrainConfig,
) -> Result<(GnnModel, TrainHistory), ModelError> {
    cfg.validate()?;
    let decay = cfg.decay_for(model.num_layers())?;
    let labels = graph.labels();
    let train_mask = graph.train_mask();
    let val_mask = graph.val_mask();
    let has_val = val_mask.iter().any(|&m| m);
    let patience = if has_val { cfg.tolerance_num } else { 0 };

    let mut dropout = rng::seeded(cfg.seed);
    let mut adam = AdamState::new(&model, cfg.adam);
    let mut history = TrainHistory {
        train_loss: Vec::with_capacity(cfg.epochs),
        train_accuracy: Vec::with_capacity(cfg.epochs),
        val_loss: Vec::new(),
        val_accuracy: Vec::new(),
        stop_epoch: 0,
        best_epoch: 0,
        budget: cfg.epochs,
        stopped_early: false,
    };

    let mut best: Option<GnnModel> = None;
    let (mut best_loss, mut best_acc) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut loss_stall, mut acc_stall) = (0usize, 0usize);

    for epoch in 1..=cfg.epochs {
        let out = forward(&model, train_input, true, &mut dropout)?;
        let loss = masked_cross_entropy(&out.logits, labels, train_mask)?;
        let grads = backward(&model, &out.cache, labels, train_mask)?;
        drop(out);
        adam_step(&mut model, &grads, &mut adam, cfg.lr, &decay)?;

        let logits = infer(&model, eval_input)?;
        let pred = predict(&logits);
        history.train_loss.push(loss);
        history.train_accuracy.push(accuracy(&pred, labels, train_mask)?);
        history.stop_epoch = epoch;

        if !has_val {
            continue;
        }
        let val_loss = masked_cross_entropy(&logits, labels, val_mask)?;
        let val_acc = accuracy(&pred, labels, val_mask)?;
        history.val_loss.push(val_loss);
        history.val_accuracy.push(val_acc);

        let loss_better = val_loss < best_loss;
        let acc_better = val_acc > best_acc;
        if loss_better {
            best_loss = val_loss;
            loss_stall = 0;
        } else {
            loss_stall += 1;
        }
        if acc_better {
            best_acc = val_acc;
            acc_stall = 0;
        } else {
            acc_stall += 1;
        }
        let keep = match cfg.tolerance_metric {
            StopMetric::Loss | StopMetric::Both => loss_better,
            StopMetric::Accuracy => acc_better,
        };
        if keep {
            history.best_epoch = epoch;
            best = Some(model.clone());
        }
        if patience > 0 {
            let stalled = match cfg.tolerance_metric {
                StopMetric::Loss => loss_stall >= patience,
                StopMetric::Accuracy => acc_stall >= patience,
                StopMetric::Both => loss_stall >= patience || acc_stall >= patience,
            };
            if stalled && epoch < cfg.epochs {
                history.stopped_early = true;
                break;
            }
        }
    }

    match best {
        Some(m) => Ok((m, history)),
        None => {
            history.best_epoch = history.stop_epoch;
            Ok((model, history))
        }
    }
}

/// Argmax per row; ties go to the lowest class id.
pub fn predict(logits: &Matrix) -> Vec<usize> {
    (0..logits.rows())
        .map(|i| {
            let row = logits.row(i);
            let mut arg = 0;
            for (c, &v) in row.iter().enumerate().skip(1) {
                if v > row[arg] {
                    arg = c;
                }
            }
            arg
        })
        .collect()
}

/// Fraction of masked nodes whose prediction equals the label.
pub fn accuracy(pred: &[usize], labels: &[usize], mask: &[bool]) -> Result<f64, ModelError> {
    if pred.len() != labels.len() || mask.len() != labels.len() {
        return Err(ModelError::ShapeMismatch {
            expected: format!("{} predictions and mask entries", labels.len()),
            actual: format!("{} predictions, {} mask entries", pred.len(), mask.len()),
        });
    }
    let (mut hit, mut total) = (0usize, 0usize);
    for i in (0..labels.len()).filter(|&i| mask[i]) {
        total += 1;
        hit += usize::from(pred[i] == labels[i]);
    }
    if total == 0 {
        return Err(ModelError::EmptyMask);
    }
    Ok(hit as f64 / total as f64)
}

/// Eval-mode accuracy on `graph` over `mask`.
pub fn evaluate(model: &GnnModel, graph: &Graph, mask: &[bool]) -> Result<f64, ModelError> {
    let logits = infer(model, &ModelInput::from_graph(graph))?;
    accuracy(&predict(&logits), graph.labels(), mask)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_graph, Splits};
    use crate::nn::{init_model, LayerParams, ModelSpec};
    use crate::synthetic::{planted_partition, PlantedPartition};

    fn toy() -> Graph {
        // two cliques of 4, one feature per class, single bridge edge
        let edges = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3), (4, 5), (4, 6), (4, 7), (5, 6), (5, 7), (6, 7), (3, 4)];
        let feats = Matrix::from_fn(8, 2, |i, j| if (i < 4) == (j == 0) { 1.0 } else { 0.0 });
        let labels = (0..8).map(|i| usize::from(i >= 4)).collect();
        let splits = Splits {
            train: vec![0, 1, 2, 4, 5, 6],
            val: vec![3, 7],
            test: vec![],
        };
        build_graph(8, 2, &edges, feats, labels, &splits).unwrap()
    }

    #[test]
    fn one_epoch_gives_one_entry() {
        let g = toy();
        let m = init_model(&ModelSpec::gcn(2, &[4], 2, 0.5).unwrap(), 0).unwrap();
        let cfg = TrainConfig {
            epochs: 1,
            ..TrainConfig::default()
        };
        let (_, h) = train(m, &GraphView::identity(&g), &cfg).unwrap();
        assert_eq!(h.train_loss.len(), 1);
        assert_eq!((h.stop_epoch, h.best_epoch, h.budget), (1, 1, 1));
    }

    #[test]
    fn separable_toy_fits_training_set() {
        let g = toy();
        let m = init_model(&ModelSpec::gcn(2, &[8], 2, 0.0).unwrap(), 3).unwrap();
        let cfg = TrainConfig {
            epochs: 300,
            lr: 0.05,
            weight_decay: 0.0,
            tolerance_num: 0,
            ..TrainConfig::default()
        };
        let (m, h) = train(m, &GraphView::identity(&g), &cfg).unwrap();
        assert_eq!(evaluate(&m, &g, g.train_mask()).unwrap(), 1.0);
        assert_eq!(h.stop_epoch, 300);
        assert!(h.train_loss.last().unwrap() < &h.train_loss[0]);
    }

    #[test]
    fn training_is_deterministic() {
        let g = planted_partition(&PlantedPartition::default());
        let spec = ModelSpec::gcn(g.num_features(), &[8], g.num_classes(), 0.5).unwrap();
        let cfg = TrainConfig {
            epochs: 30,
            seed: 9,
            ..TrainConfig::default()
        };
        let run = || train(init_model(&spec, 4).unwrap(), &GraphView::identity(&g), &cfg).unwrap();
        let (a, ha) = run();
        let (b, hb) = run();
        assert_eq!(a.flat_params(), b.flat_params());
        assert_eq!(ha, hb);
    }

    #[test]
    fn early_stop_gap_is_bounded() {
        let g = planted_partition(&PlantedPartition::default());
        let spec = ModelSpec::gcn(g.num_features(), &[16], g.num_classes(), 0.5).unwrap();
        for metric in [StopMetric::Loss, StopMetric::Accuracy, StopMetric::Both] {
            let cfg = TrainConfig {
                epochs: 400,
                lr: 0.05,
                tolerance_metric: metric,
                tolerance_num: 5,
                ..TrainConfig::default()
            };
            let (_, h) = train(init_model(&spec, 1).unwrap(), &GraphView::identity(&g), &cfg).unwrap();
            assert!(h.stop_epoch <= h.budget);
            assert!(h.best_epoch >= 1 && h.best_epoch <= h.stop_epoch);
            if h.stopped_early {
                assert!(h.stop_epoch - h.best_epoch <= cfg.tolerance_num, "{metric:?}: {h:?}");
            }
        }
    }

    #[test]
    fn equal_logits_predict_class_zero() {
        let g = build_graph(
            3,
            3,
            &[],
            Matrix::zeros(3, 2),
            vec![0, 0, 0],
            &Splits::default(),
        )
        .unwrap();
        let m = GnnModel::from_layers(
            ModelSpec::new(vec![2, 3], 0.0).unwrap(),
            vec![LayerParams {
                weight: Matrix::zeros(2, 3),
                bias: vec![0.0; 3],
            }],
            0,
        )
        .unwrap();
        assert_eq!(evaluate(&m, &g, &[true; 3]).unwrap(), 1.0);
        assert_eq!(evaluate(&m, &g, &[false; 3]), Err(ModelError::EmptyMask));
    }

    #[test]
    fn config_validation() {
        let bad = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = TrainConfig {
            lr: 0.0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
        let cfg = TrainConfig {
            layer_weight_decay: Some(vec![5e-4, 0.0]),
            ..TrainConfig::default()
        };
        assert_eq!(cfg.decay_for(2).unwrap(), vec![5e-4, 0.0]);
        assert!(cfg.decay_for(3).is_err());
    }
}
