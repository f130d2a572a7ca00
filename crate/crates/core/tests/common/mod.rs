//! Independent oracles shared by the integration suites and the acceptance
//! runner.
#![allow(dead_code)]

use ake_gnn::exchange::Axis;
use ake_gnn::graph::{build_graph, Graph, Splits};
use ake_gnn::linalg::Matrix;
use ake_gnn::nn::{backward, forward, init_model, masked_cross_entropy, GnnModel, ModelInput, ModelSpec};
use ake_gnn::rng::seeded;
use rand::Rng;

/// Straightforward histogram entropy: bucket every value, then `-Σ p ln p`.
pub fn oracle_entropy(values: &[f64], bins: usize) -> f64 {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi <= lo {
        return 0.0;
    }
    let mut counts = vec![0usize; bins];
    for &v in values {
        let b = ((v - lo) / (hi - lo) * bins as f64).floor() as usize;
        counts[b.min(bins - 1)] += 1;
    }
    let n = values.len() as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| c as f64 / n)
        .fold(0.0, |h, p| h - p * p.ln())
}

/// Every `(i, r)` substitution evaluated on a rebuilt matrix; returns the
/// lexicographically first maximizer and the full score table.
pub fn oracle_select(
    source: &Matrix,
    target: &Matrix,
    axis: Axis,
    pair: (usize, usize),
    len: usize,
    bins: usize,
) -> ((usize, usize, f64), Vec<f64>) {
    let channels = match axis {
        Axis::Output => target.cols(),
        Axis::Input => target.rows(),
    };
    let rs = [pair.0.min(pair.1), pair.0.max(pair.1)];
    let mut best = (0, rs[0], f64::NEG_INFINITY);
    let mut all = Vec::new();
    for i in 0..channels {
        for &r in &rs {
            let mut t = target.clone();
            for k in 0..len {
                match axis {
                    Axis::Output => t.set(k, r, source.get(k, i)),
                    Axis::Input => t.set(r, k, source.get(i, k)),
                }
            }
            let h = oracle_entropy(t.as_slice(), bins);
            all.push(h);
            if h > best.2 {
                best = (i, r, h);
            }
        }
    }
    (best, all)
}

pub fn oracle_pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    if va == 0.0 || vb == 0.0 {
        0.0
    } else {
        cov / (va * vb).sqrt()
    }
}

/// Random matrix; `levels > 0` quantizes values so ties and repeats are common.
pub fn random_matrix(rows: usize, cols: usize, levels: u32, seed: u64) -> Matrix {
    let mut r = seeded(seed);
    Matrix::from_fn(rows, cols, |_, _| {
        let x: f64 = r.random_range(-1.0..1.0);
        if levels > 0 {
            (x * levels as f64).round() / levels as f64
        } else {
            x
        }
    })
}

pub fn trained_like(seed: u64, sizes: Vec<usize>) -> GnnModel {
    let mut m = init_model(&ModelSpec::new(sizes, 0.0).unwrap(), seed).unwrap();
    let mut r = seeded(seed ^ 1);
    for l in 0..m.num_layers() {
        m.layer_mut(l).bias.iter_mut().for_each(|b| *b = r.random_range(-0.2..0.2));
    }
    m
}

pub fn all_params(models: &[&GnnModel]) -> Vec<f64> {
    let mut v: Vec<f64> = models.iter().flat_map(|m| m.flat_params()).collect();
    v.sort_by(f64::total_cmp);
    v
}

pub fn random_graph(n: usize, d: usize, classes: usize, seed: u64) -> Graph {
    let mut r = seeded(seed);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if r.random::<f64>() < 0.35 {
                edges.push((u, v));
            }
        }
    }
    let feats = Matrix::from_fn(n, d, |_, _| r.random_range(-1.0..1.0));
    let labels = (0..n).map(|_| r.random_range(0..classes)).collect();
    let splits = Splits {
        train: (0..n).filter(|i| i % 3 != 2).collect(),
        val: (0..n).filter(|i| i % 3 == 2).collect(),
        test: vec![],
    };
    build_graph(n, classes, &edges, feats, labels, &splits).unwrap()
}

/// Dense reference GCN: returns the masked loss and the sign pattern of every
/// hidden pre-activation.
pub fn reference(model: &GnnModel, g: &Graph) -> (f64, Vec<bool>) {
    let n = g.num_nodes();
    let mut a = vec![vec![0.0; n]; n];
    for i in 0..n {
        a[i][i] = 1.0;
    }
    for &(u, v) in g.edges() {
        a[u][v] = 1.0;
        a[v][u] = 1.0;
    }
    let deg: Vec<f64> = a.iter().map(|r| r.iter().sum()).collect();
    let mut h: Vec<Vec<f64>> = (0..n).map(|i| g.features().row(i).to_vec()).collect();
    let mut pattern = Vec::new();
    for (l, p) in model.layers().iter().enumerate() {
        let (cin, cout) = p.shape();
        let xw: Vec<Vec<f64>> = h
            .iter()
            .map(|row| (0..cout).map(|j| (0..cin).map(|k| row[k] * p.weight.get(k, j)).sum()).collect())
            .collect();
        let mut z = vec![vec![0.0; cout]; n];
        for i in 0..n {
            for j in 0..cout {
                z[i][j] = p.bias[j]
                    + (0..n).map(|u| a[i][u] / (deg[i] * deg[u]).sqrt() * xw[u][j]).sum::<f64>();
            }
        }
        if l + 1 < model.num_layers() {
            pattern.extend(z.iter().flatten().map(|&x| x > 0.0));
            z.iter_mut().flatten().for_each(|x| *x = x.max(0.0));
        }
        h = z;
    }
    let mut total = 0.0;
    let mut count = 0.0;
    for i in (0..n).filter(|&i| g.train_mask()[i]) {
        let max = h[i].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + h[i].iter().map(|x| (x - max).exp()).sum::<f64>().ln();
        total += lse - h[i][g.labels()[i]];
        count += 1.0;
    }
    (total / count, pattern)
}

/// Slot `k` of layer `l`, weights first then biases.
pub fn param_mut(m: &mut GnnModel, l: usize, k: usize) -> &mut f64 {
    let p = m.layer_mut(l);
    let w = p.weight.as_slice().len();
    if k < w {
        &mut p.weight.as_mut_slice()[k]
    } else {
        &mut p.bias[k - w]
    }
}


/// Largest relative gap between backprop and central differences over all
/// parameters of a random instance, skipping slots where a ReLU flips inside
/// the stencil. Panics if our loss disagrees with the dense reference.
pub fn max_gradient_error(n: usize, d: usize, hidden: usize, classes: usize, depth: usize, seed: u64) -> f64 {
    let g = random_graph(n, d, classes, seed);
    let mut sizes = vec![d];
    sizes.extend(std::iter::repeat_n(hidden, depth - 1));
    sizes.push(classes);
    let spec = ModelSpec::new(sizes, 0.0).unwrap();
    let mut model = init_model(&spec, seed ^ 0xA5).unwrap();
    // nonzero biases keep pre-activations off the ReLU kink at exactly 0
    let mut r = seeded(seed ^ 0x5A);
    for l in 0..model.num_layers() {
        model.layer_mut(l).bias.iter_mut().for_each(|b| *b = r.random_range(-0.5..0.5));
    }
    let input = ModelInput::from_graph(&g);
    let out = forward(&model, &input, true, &mut seeded(0)).unwrap();
    let grads = backward(&model, &out.cache, g.labels(), g.train_mask()).unwrap();
    let ours = masked_cross_entropy(&out.logits, g.labels(), g.train_mask()).unwrap();
    assert!((ours - reference(&model, &g).0).abs() < 1e-12, "loss disagrees with the reference");

    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for l in 0..model.num_layers() {
        let (rows, cols) = model.layer(l).shape();
        for k in 0..rows * cols + cols {
            let orig = *param_mut(&mut model, l, k);
            *param_mut(&mut model, l, k) = orig + h;
            let (plus, pat_plus) = reference(&model, &g);
            *param_mut(&mut model, l, k) = orig - h;
            let (minus, pat_minus) = reference(&model, &g);
            *param_mut(&mut model, l, k) = orig;
            if pat_plus != pat_minus {
                continue;
            }
            let numeric = (plus - minus) / (2.0 * h);
            let lg = &grads.layers[l];
            let analytic = lg.weight.as_slice().iter().chain(&lg.bias).nth(k).copied().unwrap();
            worst = worst.max((analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6));
        }
    }
    worst
}
