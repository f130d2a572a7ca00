//! Graph storage, validation, and the renormalized adjacency `D̂^{-1/2}(A+I)D̂^{-1/2}`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{CsrMatrix, Matrix};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("{what} index {index} is out of range for {bound} nodes")]
    OutOfRangeIndex {
        what: &'static str,
        index: usize,
        bound: usize,
    },
    #[error("edge ({0}, {0}) is a self-loop")]
    SelfLoopEdge(usize),
    #[error("node {node} appears in both the {first} and {second} split")]
    OverlappingSplits {
        node: usize,
        first: &'static str,
        second: &'static str,
    },
    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: String, actual: String },
    #[error("node {node} has label {label} but there are only {num_classes} classes")]
    InvalidLabel {
        node: usize,
        label: usize,
        num_classes: usize,
    },
}

/// Node index lists for the train/validation/test partition.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Splits {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// An undirected, unweighted attributed graph with a labelled node split.
///
/// Edges are canonicalized to `(u, v)` with `u < v`, sorted, and stored once.
/// Self-loops are rejected here; they only appear during normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    num_classes: usize,
    features: Matrix,
    edges: Vec<(usize, usize)>,
    labels: Vec<usize>,
    train_mask: Vec<bool>,
    val_mask: Vec<bool>,
    test_mask: Vec<bool>,
}

/// Validates and canonicalizes the raw parts of a graph.
pub fn build_graph(
    num_nodes: usize,
    num_classes: usize,
    edges: &[(usize, usize)],
    features: Matrix,
    labels: Vec<usize>,
    splits: &Splits,
) -> Result<Graph, GraphError> {
    if features.rows() != num_nodes {
        return Err(GraphError::ShapeMismatch {
            expected: format!("{num_nodes} feature rows"),
            actual: format!("{} feature rows", features.rows()),
        });
    }
    if labels.len() != num_nodes {
        return Err(GraphError::ShapeMismatch {
            expected: format!("{num_nodes} labels"),
            actual: format!("{} labels", labels.len()),
        });
    }
    if let Some((node, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= num_classes) {
        return Err(GraphError::InvalidLabel {
            node,
            label,
            num_classes,
        });
    }
    let edges = canonical_edges(num_nodes, edges)?;

    let mut owner: Vec<Option<&'static str>> = vec![None; num_nodes];
    let mut masks = [
        vec![false; num_nodes],
        vec![false; num_nodes],
        vec![false; num_nodes],
    ];
    for (k, (name, idx)) in [("train", &splits.train), ("val", &splits.val), ("test", &splits.test)]
        .into_iter()
        .enumerate()
    {
        for &node in idx {
            if node >= num_nodes {
                return Err(GraphError::OutOfRangeIndex {
                    what: name,
                    index: node,
                    bound: num_nodes,
                });
            }
            if let Some(first) = owner[node] {
                if first != name {
                    return Err(GraphError::OverlappingSplits {
                        node,
                        first,
                        second: name,
                    });
                }
            }
            owner[node] = Some(name);
            masks[k][node] = true;
        }
    }
    let [train_mask, val_mask, test_mask] = masks;
    Ok(Graph {
        num_classes,
        features,
        edges,
        labels,
        train_mask,
        val_mask,
        test_mask,
    })
}

/// Sorts, deduplicates and orients edges as `u < v`.
pub(crate) fn canonical_edges(
    num_nodes: usize,
    edges: &[(usize, usize)],
) -> Result<Vec<(usize, usize)>, GraphError> {
    let mut out = Vec::with_capacity(edges.len());
    for &(u, v) in edges {
        for x in [u, v] {
            if x >= num_nodes {
                return Err(GraphError::OutOfRangeIndex {
                    what: "edge endpoint",
                    index: x,
                    bound: num_nodes,
                });
            }
        }
        if u == v {
            return Err(GraphError::SelfLoopEdge(u));
        }
        out.push((u.min(v), u.max(v)));
    }
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

impl Graph {
    pub fn num_nodes(&self) -> usize {
        self.labels.len()
    }

    pub fn num_features(&self) -> usize {
        self.features.cols()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    /// Canonical `(u, v)` pairs with `u < v`, sorted.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn train_mask(&self) -> &[bool] {
        &self.train_mask
    }

    pub fn val_mask(&self) -> &[bool] {
        &self.val_mask
    }

    pub fn test_mask(&self) -> &[bool] {
        &self.test_mask
    }

    pub fn splits(&self) -> Splits {
        let idx = |m: &[bool]| m.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i).collect();
        Splits {
            train: idx(&self.train_mask),
            val: idx(&self.val_mask),
            test: idx(&self.test_mask),
        }
    }

    /// Node degrees in the undirected graph (without self-loops).
    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.num_nodes()];
        for &(u, v) in &self.edges {
            deg[u] += 1;
            deg[v] += 1;
        }
        deg
    }

    /// Same graph with a different partition.
    pub fn with_splits(&self, splits: &Splits) -> Result<Graph, GraphError> {
        build_graph(
            self.num_nodes(),
            self.num_classes,
            &self.edges,
            self.features.clone(),
            self.labels.clone(),
            splits,
        )
    }

    /// Scales every feature row to unit L1 norm; all-zero rows stay zero.
    pub fn row_normalized(&self) -> Graph {
        let mut g = self.clone();
        for i in 0..g.features.rows() {
            let row = g.features.row_mut(i);
            let sum: f64 = row.iter().sum();
            if sum != 0.0 {
                row.iter_mut().for_each(|x| *x /= sum);
            }
        }
        g
    }
}

/// Symmetric renormalized adjacency in CSR layout.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedAdjacency {
    csr: CsrMatrix,
}

/// `D̂^{-1/2}(A+I)D̂^{-1/2}` for the graph's own edge set.
pub fn normalize_adjacency(g: &Graph) -> NormalizedAdjacency {
    NormalizedAdjacency::from_edges(g.num_nodes(), g.edges())
}

impl NormalizedAdjacency {
    /// Builds the normalized adjacency from canonical `u < v` edges.
    ///
    /// Entry `(u, v)` is `1 / sqrt((deg(u)+1)(deg(v)+1))`; the product is
    /// formed before the square root so `(u, v)` and `(v, u)` are bitwise
    /// equal.
    pub fn from_edges(num_nodes: usize, edges: &[(usize, usize)]) -> Self {
        let mut neighbors: Vec<Vec<usize>> = vec![Vec::new(); num_nodes];
        for &(u, v) in edges {
            neighbors[u].push(v);
            neighbors[v].push(u);
        }
        let deg_hat: Vec<f64> = neighbors.iter().map(|n| (n.len() + 1) as f64).collect();

        let mut row_offsets = Vec::with_capacity(num_nodes + 1);
        let mut col_indices = Vec::with_capacity(2 * edges.len() + num_nodes);
        let mut values = Vec::with_capacity(2 * edges.len() + num_nodes);
        row_offsets.push(0);
        for (u, nbrs) in neighbors.iter_mut().enumerate() {
            nbrs.push(u);
            nbrs.sort_unstable();
            nbrs.dedup();
            for &v in nbrs.iter() {
                col_indices.push(v);
                values.push(1.0 / (deg_hat[u] * deg_hat[v]).sqrt());
            }
            row_offsets.push(values.len());
        }
        Self {
            csr: CsrMatrix::from_parts(num_nodes, num_nodes, row_offsets, col_indices, values),
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.csr.rows()
    }

    pub fn nnz(&self) -> usize {
        self.csr.nnz()
    }

    pub fn row_offsets(&self) -> &[usize] {
        self.csr.row_offsets()
    }

    pub fn col_indices(&self) -> &[usize] {
        self.csr.col_indices()
    }

    pub fn values(&self) -> &[f64] {
        self.csr.values()
    }

    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.csr.get(u, v)
    }

    pub fn as_csr(&self) -> &CsrMatrix {
        &self.csr
    }

    pub fn to_dense(&self) -> Matrix {
        self.csr.to_dense()
    }
}

/// Sparse-dense product `Â · h`.
pub fn spmm(adj: &NormalizedAdjacency, h: &Matrix) -> Result<Matrix, GraphError> {
    if h.rows() != adj.num_nodes() {
        return Err(GraphError::ShapeMismatch {
            expected: format!("{} rows", adj.num_nodes()),
            actual: format!("{} rows", h.rows()),
        });
    }
    Ok(adj.csr.matmul_dense(h))
}
