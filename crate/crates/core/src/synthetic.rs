//! Planted-partition citation-style graphs for tests, docs, and demos.
//!
//! Nodes belong to one of `classes` communities. Edges join same-class nodes
//! with probability `homophily`, and each node carries a sparse binary
//! bag-of-words whose words come mostly from its class's topic block.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::graph::{build_graph, Graph, Splits};
use crate::linalg::Matrix;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlantedPartition {
    pub nodes: usize,
    pub classes: usize,
    pub features: usize,
    /// Exact number of undirected edges; `None` means two per node.
    pub edges: Option<usize>,
    pub homophily: f64,
    pub words_per_node: usize,
    pub topic_probability: f64,
    pub train_per_class: usize,
    pub val: usize,
    pub test: usize,
    pub seed: u64,
}

impl Default for PlantedPartition {
    fn default() -> Self {
        Self {
            nodes: 300,
            classes: 3,
            features: 120,
            edges: None,
            homophily: 0.8,
            words_per_node: 8,
            topic_probability: 0.6,
            train_per_class: 10,
            val: 60,
            test: 120,
            seed: 0,
        }
    }
}

/// Generates a graph; deterministic in `spec.seed`.
pub fn planted_partition(spec: &PlantedPartition) -> Graph {
    let n = spec.nodes;
    let classes = spec.classes.max(1);
    let mut r = rng::seeded(spec.seed);

    let mut labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
    labels.shuffle(&mut r);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (i, &c) in labels.iter().enumerate() {
        members[c].push(i);
    }

    let max_edges = n * n.saturating_sub(1) / 2;
    let target = spec.edges.unwrap_or(2 * n).min(max_edges);
    let mut seen = HashSet::with_capacity(target);
    let mut edges = Vec::with_capacity(target);
    let mut attempts = 0usize;
    while edges.len() < target {
        attempts += 1;
        let u = r.random_range(0..n);
        let same = attempts < 50 * target.max(1) && r.random::<f64>() < spec.homophily;
        let v = if same {
            let pool = &members[labels[u]];
            pool[r.random_range(0..pool.len())]
        } else {
            r.random_range(0..n)
        };
        if u != v && seen.insert((u.min(v), u.max(v))) {
            edges.push((u.min(v), u.max(v)));
        }
    }

    let d = spec.features.max(1);
    let block = (d / classes).max(1);
    let mut features = Matrix::zeros(n, d);
    for (i, &c) in labels.iter().enumerate() {
        for _ in 0..spec.words_per_node {
            let word = if r.random::<f64>() < spec.topic_probability {
                (c * block + r.random_range(0..block)).min(d - 1)
            } else {
                r.random_range(0..d)
            };
            features.set(i, word, 1.0);
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut r);
    let mut taken = vec![0usize; classes];
    let mut splits = Splits::default();
    let mut rest = Vec::new();
    for &i in &order {
        if taken[labels[i]] < spec.train_per_class {
            taken[labels[i]] += 1;
            splits.train.push(i);
        } else {
            rest.push(i);
        }
    }
    let val = spec.val.min(rest.len());
    splits.val = rest[..val].to_vec();
    let test = spec.test.min(rest.len() - val);
    splits.test = rest[val..val + test].to_vec();
    for s in [&mut splits.train, &mut splits.val, &mut splits.test] {
        s.sort_unstable();
    }

    build_graph(n, classes, &edges, features, labels, &splits)
        .expect("generator produces a valid graph")
}
