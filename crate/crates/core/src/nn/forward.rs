use rand::Rng;

use super::loss::softmax_rows;
use super::{GnnModel, ModelError};
use crate::augment::GraphView;
use crate::graph::{Graph, NormalizedAdjacency};
use crate::linalg::{CsrMatrix, Matrix};

/// Everything a forward pass reads from a graph: the normalized adjacency and
/// the (sparse) input features.
#[derive(Debug, Clone)]
pub struct ModelInput {
    adjacency: NormalizedAdjacency,
    features: CsrMatrix,
}

impl ModelInput {
    pub fn new(adjacency: NormalizedAdjacency, features: &Matrix) -> Result<Self, ModelError> {
        if adjacency.num_nodes() != features.rows() {
            return Err(ModelError::ShapeMismatch {
                expected: format!("{} feature rows", adjacency.num_nodes()),
                actual: format!("{} feature rows", features.rows()),
            });
        }
        Ok(Self {
            adjacency,
            features: CsrMatrix::from_dense(features),
        })
    }

    pub fn from_graph(g: &Graph) -> Self {
        Self {
            adjacency: NormalizedAdjacency::from_edges(g.num_nodes(), g.edges()),
            features: CsrMatrix::from_dense(g.features()),
        }
    }

    pub fn from_view(v: &GraphView<'_>) -> Self {
        Self {
            adjacency: NormalizedAdjacency::from_edges(v.num_nodes(), v.edges()),
            features: CsrMatrix::from_dense(v.features()),
        }
    }

    pub fn adjacency(&self) -> &NormalizedAdjacency {
        &self.adjacency
    }

    pub fn features(&self) -> &CsrMatrix {
        &self.features
    }

    pub fn num_nodes(&self) -> usize {
        self.adjacency.num_nodes()
    }
}

#[derive(Debug, Clone)]
enum LayerInput {
    Sparse(CsrMatrix),
    Dense(Matrix),
}

impl LayerInput {
    fn matmul(&self, w: &Matrix) -> Matrix {
        match self {
            LayerInput::Sparse(x) => x.matmul_dense(w),
            LayerInput::Dense(h) => h.matmul(w),
        }
    }

    fn t_matmul(&self, g: &Matrix) -> Matrix {
        match self {
            LayerInput::Sparse(x) => x.t_matmul_dense(g),
            LayerInput::Dense(h) => h.t_matmul(g),
        }
    }
}

#[derive(Debug, Clone)]
struct LayerCache {
    /// Layer input after dropout.
    input: LayerInput,
    /// Per-entry dropout multipliers (0 or 1/(1-p)) for dense inputs.
    keep: Option<Vec<f64>>,
    pre_activation: Matrix,
}

/// Activations recorded by [`forward`] for [`backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache<'a> {
    input: &'a ModelInput,
    stamp: (u64, u64),
    layers: Vec<LayerCache>,
}

#[derive(Debug, Clone)]
pub struct ForwardOutput<'a> {
    pub logits: Matrix,
    pub cache: ForwardCache<'a>,
}

fn check_input(model: &GnnModel, input: &ModelInput) -> Result<(), ModelError> {
    let d = model.spec().input_dim();
    if input.features.cols() != d {
        return Err(ModelError::ShapeMismatch {
            expected: format!("{d} input features"),
            actual: format!("{} input features", input.features.cols()),
        });
    }
    Ok(())
}

fn inverted_scale(p: f64) -> f64 {
    if p < 1.0 {
        1.0 / (1.0 - p)
    } else {
        0.0
    }
}

/// Runs the GCN. In training mode each layer input goes through inverted
/// dropout before `Â · H · W + b`; ReLU follows every layer but the last.
pub fn forward<'a, R: Rng + ?Sized>(
    model: &GnnModel,
    input: &'a ModelInput,
    train_mode: bool,
    rng: &mut R,
) -> Result<ForwardOutput<'a>, ModelError> {
    check_input(model, input)?;
    let p = if train_mode { model.spec().dropout } else { 0.0 };
    let scale = inverted_scale(p);
    let last = model.num_layers() - 1;

    let mut caches = Vec::with_capacity(model.num_layers());
    let mut hidden: Option<Matrix> = None;
    for (l, params) in model.layers().iter().enumerate() {
        let (layer_input, keep) = match hidden.take() {
            None => {
                let mut x = input.features.clone();
                if p > 0.0 {
                    for v in x.values_mut() {
                        *v = if rng.random::<f64>() < p { 0.0 } else { *v * scale };
                    }
                }
                (LayerInput::Sparse(x), None)
            }
            Some(mut h) => {
                let keep = (p > 0.0).then(|| {
                    let keep: Vec<f64> = (0..h.as_slice().len())
                        .map(|_| if rng.random::<f64>() < p { 0.0 } else { scale })
                        .collect();
                    for (x, k) in h.as_mut_slice().iter_mut().zip(&keep) {
                        *x *= k;
                    }
                    keep
                });
                (LayerInput::Dense(h), keep)
            }
        };
        let mut z = input.adjacency.as_csr().matmul_dense(&layer_input.matmul(&params.weight));
        z.add_row_vector(&params.bias);
        if l < last {
            let mut a = z.clone();
            a.map_inplace(|x| x.max(0.0));
            hidden = Some(a);
        } else {
            hidden = Some(z.clone());
        }
        caches.push(LayerCache {
            input: layer_input,
            keep,
            pre_activation: z,
        });
    }
    Ok(ForwardOutput {
        logits: hidden.expect("at least one layer"),
        cache: ForwardCache {
            input,
            stamp: model.stamp(),
            layers: caches,
        },
    })
}

/// Eval-mode logits without keeping a cache.
pub fn infer(model: &GnnModel, input: &ModelInput) -> Result<Matrix, ModelError> {
    let mut unused = crate::rng::seeded(0);
    Ok(forward(model, input, false, &mut unused)?.logits)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

/// Gradients laid out like [`GnnModel::layers`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGrad>,
}

impl Gradients {
    pub fn flat(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|g| g.weight.as_slice().iter().chain(&g.bias).copied())
            .collect()
    }

    pub fn norm(&self) -> f64 {
        self.flat().iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

/// Reverse-mode gradients of [`masked_cross_entropy`](super::masked_cross_entropy)
/// with respect to every weight and bias, reusing the dropout masks recorded
/// in `cache`. `Â` is symmetric, so it is its own transpose here.
pub fn backward(
    model: &GnnModel,
    cache: &ForwardCache<'_>,
    labels: &[usize],
    mask: &[bool],
) -> Result<Gradients, ModelError> {
    if cache.stamp != model.stamp() || cache.layers.len() != model.num_layers() {
        return Err(ModelError::StaleCache);
    }
    let n = cache.input.num_nodes();
    if labels.len() != n || mask.len() != n {
        return Err(ModelError::ShapeMismatch {
            expected: format!("{n} labels and mask entries"),
            actual: format!("{} labels, {} mask entries", labels.len(), mask.len()),
        });
    }
    let count = mask.iter().filter(|&&m| m).count();
    if count == 0 {
        return Err(ModelError::EmptyMask);
    }

    let logits = &cache.layers.last().unwrap().pre_activation;
    let mut upstream = softmax_rows(logits);
    let inv = 1.0 / count as f64;
    for i in 0..n {
        let row = upstream.row_mut(i);
        if mask[i] {
            row[labels[i]] -= 1.0;
            row.iter_mut().for_each(|x| *x *= inv);
        } else {
            row.iter_mut().for_each(|x| *x = 0.0);
        }
    }

    let adj = cache.input.adjacency.as_csr();
    let last = model.num_layers() - 1;
    let mut grads = Vec::with_capacity(model.num_layers());
    for l in (0..model.num_layers()).rev() {
        let layer = &cache.layers[l];
        let mut dz = upstream;
        if l < last {
            for (g, &z) in dz.as_mut_slice().iter_mut().zip(layer.pre_activation.as_slice()) {
                if z <= 0.0 {
                    *g = 0.0;
                }
            }
        }
        let bias = dz.column_sums();
        let propagated = adj.matmul_dense(&dz);
        let weight = layer.input.t_matmul(&propagated);
        grads.push(LayerGrad { weight, bias });
        if l == 0 {
            break;
        }
        let mut dh = propagated.matmul_t(&model.layer(l).weight);
        if let Some(keep) = &layer.keep {
            for (g, k) in dh.as_mut_slice().iter_mut().zip(keep) {
                *g *= k;
            }
        }
        upstream = dh;
    }
    grads.reverse();
    Ok(Gradients { layers: grads })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_graph, Splits};
    use crate::nn::{init_model, masked_cross_entropy, LayerParams, ModelSpec};
    use crate::rng::seeded;

    fn graph(n: usize, edges: &[(usize, usize)], feats: Matrix, classes: usize, labels: Vec<usize>) -> Graph {
        build_graph(n, classes, edges, feats, labels, &Splits::default()).unwrap()
    }

    #[test]
    fn single_node_identity_layer() {
        let g = graph(1, &[], Matrix::from_rows(&[[2.0]]).unwrap(), 1, vec![0]);
        let spec = ModelSpec::new(vec![1, 1], 0.0).unwrap();
        let m = GnnModel::from_layers(
            spec,
            vec![LayerParams {
                weight: Matrix::from_rows(&[[1.0]]).unwrap(),
                bias: vec![0.0],
            }],
            0,
        )
        .unwrap();
        let logits = infer(&m, &ModelInput::from_graph(&g)).unwrap();
        assert_eq!(logits.get(0, 0), 2.0);
    }

    #[test]
    fn zero_weights_give_bias_logits() {
        let g = graph(
            3,
            &[(0, 1)],
            Matrix::from_fn(3, 4, |i, j| (i + j) as f64),
            3,
            vec![0, 1, 2],
        );
        let spec = ModelSpec::new(vec![4, 3], 0.0).unwrap();
        let m = GnnModel::from_layers(
            spec,
            vec![LayerParams {
                weight: Matrix::zeros(4, 3),
                bias: vec![0.5, -1.0, 2.0],
            }],
            0,
        )
        .unwrap();
        let logits = infer(&m, &ModelInput::from_graph(&g)).unwrap();
        for i in 0..3 {
            assert_eq!(logits.row(i), &[0.5, -1.0, 2.0]);
        }
    }

    #[test]
    fn triangle_with_constant_features_gives_equal_rows() {
        let g = graph(
            3,
            &[(0, 1), (1, 2), (0, 2)],
            Matrix::from_fn(3, 5, |_, j| j as f64 * 0.3 + 1.0),
            2,
            vec![0, 1, 0],
        );
        let spec = ModelSpec::new(vec![5, 4, 2], 0.0).unwrap();
        let m = init_model(&spec, 8).unwrap();
        let logits = infer(&m, &ModelInput::from_graph(&g)).unwrap();
        assert_eq!(logits.row(0), logits.row(1));
        assert_eq!(logits.row(1), logits.row(2));
    }

    #[test]
    fn feature_width_is_checked() {
        let g = graph(2, &[], Matrix::zeros(2, 3), 2, vec![0, 1]);
        let m = init_model(&ModelSpec::new(vec![4, 2], 0.0).unwrap(), 0).unwrap();
        assert!(matches!(
            infer(&m, &ModelInput::from_graph(&g)),
            Err(ModelError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn stale_cache_is_rejected() {
        let g = graph(2, &[(0, 1)], Matrix::from_fn(2, 3, |i, j| (i + j) as f64), 2, vec![0, 1]);
        let input = ModelInput::from_graph(&g);
        let mut m = init_model(&ModelSpec::new(vec![3, 2], 0.0).unwrap(), 0).unwrap();
        let out = forward(&m, &input, true, &mut seeded(0)).unwrap();
        assert!(backward(&m, &out.cache, g.labels(), &[true, true]).is_ok());
        assert_eq!(
            backward(&m, &out.cache, g.labels(), &[false, false]),
            Err(ModelError::EmptyMask)
        );
        m.layer_mut(0).bias[0] += 1.0;
        assert_eq!(
            backward(&m, &out.cache, g.labels(), &[true, true]),
            Err(ModelError::StaleCache)
        );
        let other = init_model(&ModelSpec::new(vec![3, 2], 0.0).unwrap(), 0).unwrap();
        assert_eq!(
            backward(&other, &out.cache, g.labels(), &[true, true]).unwrap_err(),
            ModelError::StaleCache
        );
    }

    #[test]
    fn saturated_correct_logits_have_vanishing_gradient() {
        let g = graph(1, &[], Matrix::from_rows(&[[1.0]]).unwrap(), 2, vec![0]);
        let spec = ModelSpec::new(vec![1, 2], 0.0).unwrap();
        let m = GnnModel::from_layers(
            spec,
            vec![LayerParams {
                weight: Matrix::from_rows(&[[50.0, -50.0]]).unwrap(),
                bias: vec![0.0, 0.0],
            }],
            0,
        )
        .unwrap();
        let input = ModelInput::from_graph(&g);
        let out = forward(&m, &input, true, &mut seeded(0)).unwrap();
        let grads = backward(&m, &out.cache, &[0], &[true]).unwrap();
        assert!(grads.norm() < 1e-8, "{}", grads.norm());
    }

    #[test]
    fn isolated_unmasked_component_gets_no_gradient() {
        // nodes 0-1 connected and labelled; node 2 isolated and unmasked.
        // Feature 2 is only non-zero on node 2, so row 2 of W must get zero gradient.
        let feats = Matrix::from_rows(&[[1.0, 0.5, 0.0], [0.2, 1.0, 0.0], [0.0, 0.0, 3.0]]).unwrap();
        let g = graph(3, &[(0, 1)], feats, 2, vec![0, 1, 1]);
        let input = ModelInput::from_graph(&g);
        let m = init_model(&ModelSpec::new(vec![3, 2], 0.0).unwrap(), 5).unwrap();
        let out = forward(&m, &input, false, &mut seeded(0)).unwrap();
        let grads = backward(&m, &out.cache, g.labels(), &[true, true, false]).unwrap();
        assert_eq!(grads.layers[0].weight.row(2), &[0.0, 0.0]);
        assert!(grads.layers[0].weight.row(0).iter().any(|&x| x != 0.0));
        let loss = masked_cross_entropy(&out.logits, g.labels(), &[true, true, false]).unwrap();
        assert!(loss > 0.0);
    }
}
