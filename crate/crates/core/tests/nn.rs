mod common;

use ake_gnn::graph::{build_graph, Splits};
use ake_gnn::linalg::Matrix;
use ake_gnn::nn::{infer, init_model, ModelInput, ModelSpec};
use ake_gnn::rng::seeded;
use common::*;
use proptest::prelude::*;
use rand::Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn analytic_gradient_matches_central_differences(
        n in 2usize..=10,
        d in 1usize..=6,
        hidden in 1usize..=5,
        classes in 2usize..=4,
        depth in 1usize..=3,
        seed in any::<u64>(),
    ) {
        let err = max_gradient_error(n, d, hidden, classes, depth, seed);
        prop_assert!(err < 1e-4, "max relative error {err}");
    }

    #[test]
    fn logits_are_permutation_equivariant(n in 2usize..=12, seed in any::<u64>()) {
        let g = random_graph(n, 4, 3, seed);
        let mut perm: Vec<usize> = (0..n).collect();
        let mut r = seeded(seed.wrapping_add(1));
        for i in (1..n).rev() {
            perm.swap(i, r.random_range(0..=i));
        }
        // node i of g becomes node perm[i] of h
        let edges: Vec<_> = g.edges().iter().map(|&(u, v)| (perm[u], perm[v])).collect();
        let mut feats = Matrix::zeros(n, 4);
        let mut labels = vec![0; n];
        for i in 0..n {
            feats.row_mut(perm[i]).copy_from_slice(g.features().row(i));
            labels[perm[i]] = g.labels()[i];
        }
        let h = build_graph(n, 3, &edges, feats, labels, &Splits::default()).unwrap();

        let model = init_model(&ModelSpec::gcn(4, &[5], 3, 0.0).unwrap(), seed).unwrap();
        let a = infer(&model, &ModelInput::from_graph(&g)).unwrap();
        let b = infer(&model, &ModelInput::from_graph(&h)).unwrap();
        for i in 0..n {
            for (x, y) in a.row(i).iter().zip(b.row(perm[i])) {
                prop_assert!((x - y).abs() <= 1e-12, "node {i}: {x} vs {y}");
            }
        }
    }
}

#[test]
fn uninformative_model_scores_chance_on_random_labels() {
    let n = 7_000;
    let mut r = seeded(11);
    let labels: Vec<usize> = (0..n).map(|_| r.random_range(0..7)).collect();
    let g = build_graph(n, 7, &[], Matrix::zeros(n, 3), labels, &Splits::default()).unwrap();
    let model = init_model(&ModelSpec::gcn(3, &[4], 7, 0.0).unwrap(), 2).unwrap();
    let acc = ake_gnn::nn::evaluate(&model, &g, &vec![true; n]).unwrap();
    // zero features give identical logits everywhere, so the model always predicts one class
    let sd = (1.0f64 / 7.0 * 6.0 / 7.0 / n as f64).sqrt();
    assert!((acc - 1.0 / 7.0).abs() < 4.0 * sd, "accuracy {acc}");
}
