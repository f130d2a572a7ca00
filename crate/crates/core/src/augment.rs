//! Stochastic graph views: feature masking, feature corruption, edge
//! dropping, and induced-subgraph extraction.
//!
//! Every view keeps the node index space of its base graph (same `n`, `d`,
//! labels, and split masks) so models trained on different views can be
//! evaluated on the same transductive test set.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::Graph;
use crate::linalg::Matrix;
use crate::rng;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AugmentError {
    #[error("at least two views are required, got {0}")]
    TooFewViews(usize),
    #[error("probability `{name}` must lie in [0, 1], got {value}")]
    InvalidProbability { name: &'static str, value: f64 },
}

/// Probabilities for the four augmentation functions plus the view seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentSpec {
    pub p_mask: f64,
    pub p_corrupt: f64,
    pub p_drop_edge: f64,
    pub p_subgraph: f64,
    pub seed: u64,
}

impl Default for AugmentSpec {
    /// Citation-network setting: mask 0.1, corrupt 0, drop edges 0.1, subgraph 0.
    fn default() -> Self {
        Self {
            p_mask: 0.1,
            p_corrupt: 0.0,
            p_drop_edge: 0.1,
            p_subgraph: 0.0,
            seed: 0,
        }
    }
}

impl AugmentSpec {
    pub fn none(seed: u64) -> Self {
        Self {
            p_mask: 0.0,
            p_corrupt: 0.0,
            p_drop_edge: 0.0,
            p_subgraph: 0.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), AugmentError> {
        for (name, value) in [
            ("p_mask", self.p_mask),
            ("p_corrupt", self.p_corrupt),
            ("p_drop_edge", self.p_drop_edge),
            ("p_subgraph", self.p_subgraph),
        ] {
            check_probability(name, value)?;
        }
        Ok(())
    }

    pub fn probability(&self, kind: AugmentKind) -> f64 {
        match kind {
            AugmentKind::MaskFeatures => self.p_mask,
            AugmentKind::CorruptFeatures => self.p_corrupt,
            AugmentKind::DropEdges => self.p_drop_edge,
            AugmentKind::ExtractSubgraph => self.p_subgraph,
        }
    }
}

fn check_probability(name: &'static str, value: f64) -> Result<(), AugmentError> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(AugmentError::InvalidProbability { name, value })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AugmentKind {
    MaskFeatures,
    CorruptFeatures,
    DropEdges,
    ExtractSubgraph,
}

impl AugmentKind {
    /// Order in which views cycle through the augmentation functions.
    pub const CYCLE: [AugmentKind; 4] = [
        AugmentKind::MaskFeatures,
        AugmentKind::CorruptFeatures,
        AugmentKind::DropEdges,
        AugmentKind::ExtractSubgraph,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViewProvenance {
    pub kind: Option<AugmentKind>,
    pub probability: f64,
    pub seed: u64,
}

/// An augmented copy of a base graph.
#[derive(Debug, Clone)]
pub struct GraphView<'g> {
    base: &'g Graph,
    features: Matrix,
    edges: Vec<(usize, usize)>,
    provenance: ViewProvenance,
}

impl<'g> GraphView<'g> {
    /// The unmodified graph seen as a view.
    pub fn identity(base: &'g Graph) -> Self {
        Self {
            base,
            features: base.features().clone(),
            edges: base.edges().to_vec(),
            provenance: ViewProvenance {
                kind: None,
                probability: 0.0,
                seed: 0,
            },
        }
    }

    pub fn base(&self) -> &'g Graph {
        self.base
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    /// Surviving edges, canonical and sorted like [`Graph::edges`].
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn provenance(&self) -> &ViewProvenance {
        &self.provenance
    }

    pub fn num_nodes(&self) -> usize {
        self.base.num_nodes()
    }

    /// True when features and edges equal the base graph exactly.
    pub fn matches_base(&self) -> bool {
        self.features == *self.base.features() && self.edges == self.base.edges()
    }

    fn with_provenance(mut self, kind: AugmentKind, p: f64) -> Self {
        self.provenance = ViewProvenance {
            kind: Some(kind),
            probability: p,
            seed: 0,
        };
        self
    }
}

/// Zeroes the same randomly chosen feature columns for every node
/// (`x_i ⊙ m` with one shared Bernoulli mask `m`).
pub fn mask_features<'g, R: Rng + ?Sized>(
    g: &'g Graph,
    p: f64,
    rng: &mut R,
) -> Result<GraphView<'g>, AugmentError> {
    check_probability("p_mask", p)?;
    let mut view = GraphView::identity(g);
    let masked: Vec<bool> = (0..g.num_features()).map(|_| rng.random::<f64>() < p).collect();
    for i in 0..g.num_nodes() {
        for (x, &m) in view.features.row_mut(i).iter_mut().zip(&masked) {
            if m {
                *x = 0.0;
            }
        }
    }
    Ok(view.with_provenance(AugmentKind::MaskFeatures, p))
}

/// Replaces each entry independently with probability `p` by a draw from
/// `N(mean(x_i), 1)`, where `x_i` is the node's original feature row.
pub fn corrupt_features<'g, R: Rng + ?Sized>(
    g: &'g Graph,
    p: f64,
    rng: &mut R,
) -> Result<GraphView<'g>, AugmentError> {
    check_probability("p_corrupt", p)?;
    let mut view = GraphView::identity(g);
    let d = g.num_features();
    for i in 0..g.num_nodes() {
        let mean = if d == 0 {
            0.0
        } else {
            g.features().row(i).iter().sum::<f64>() / d as f64
        };
        let noise = Normal::new(mean, 1.0).expect("unit variance is valid");
        for x in view.features.row_mut(i) {
            if rng.random::<f64>() < p {
                *x = noise.sample(rng);
            }
        }
    }
    Ok(view.with_provenance(AugmentKind::CorruptFeatures, p))
}

/// Keeps each undirected edge independently with probability `1 - p`.
pub fn drop_edges<'g, R: Rng + ?Sized>(
    g: &'g Graph,
    p: f64,
    rng: &mut R,
) -> Result<GraphView<'g>, AugmentError> {
    check_probability("p_drop_edge", p)?;
    let mut view = GraphView::identity(g);
    view.edges.retain(|_| rng.random::<f64>() >= p);
    Ok(view.with_provenance(AugmentKind::DropEdges, p))
}

/// Samples `V'` by keeping each node with probability `1 - p`, then zeroes the
/// feature rows of dropped nodes and removes every edge touching them.
pub fn extract_subgraph<'g, R: Rng + ?Sized>(
    g: &'g Graph,
    p: f64,
    rng: &mut R,
) -> Result<GraphView<'g>, AugmentError> {
    check_probability("p_subgraph", p)?;
    let keep: Vec<bool> = (0..g.num_nodes()).map(|_| rng.random::<f64>() >= p).collect();
    Ok(induced_view(g, &keep).with_provenance(AugmentKind::ExtractSubgraph, p))
}

/// Induced subgraph on the nodes flagged in `keep`, with the node slots kept.
pub fn induced_view<'g>(g: &'g Graph, keep: &[bool]) -> GraphView<'g> {
    let mut view = GraphView::identity(g);
    for (i, _) in keep.iter().enumerate().filter(|(_, &k)| !k) {
        view.features.row_mut(i).iter_mut().for_each(|x| *x = 0.0);
    }
    view.edges.retain(|&(u, v)| keep[u] && keep[v]);
    view
}

/// Produces `k` views; view `j` (0-based) applies the function
/// `AugmentKind::CYCLE[j % 4]` with its probability from `spec`, drawing from
/// a stream seeded with `spec.seed ^ (j + 1)`.
pub fn generate_views<'g>(
    g: &'g Graph,
    spec: &AugmentSpec,
    k: usize,
) -> Result<Vec<GraphView<'g>>, AugmentError> {
    if k < 2 {
        return Err(AugmentError::TooFewViews(k));
    }
    spec.validate()?;
    (0..k)
        .map(|j| {
            let kind = AugmentKind::CYCLE[j % AugmentKind::CYCLE.len()];
            let p = spec.probability(kind);
            let seed = spec.seed ^ (j as u64 + 1);
            let mut stream = rng::seeded(seed);
            let mut view = match kind {
                AugmentKind::MaskFeatures => mask_features(g, p, &mut stream),
                AugmentKind::CorruptFeatures => corrupt_features(g, p, &mut stream),
                AugmentKind::DropEdges => drop_edges(g, p, &mut stream),
                AugmentKind::ExtractSubgraph => extract_subgraph(g, p, &mut stream),
            }?;
            view.provenance.seed = seed;
            Ok(view)
        })
        .collect()
}
