//! Frozen-embedding evaluation.
//!
//! - Random 10/10/80 splits of the labeled nodes.
//! - A multinomial logistic-regression probe on standardized embeddings.
//! - The degradation study: cosine similarity of each node's embedding on a
//!   progressively degraded graph to its embedding on the clean graph.
//! - Random structure and feature poisoning.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::encoder::{encode, project_head, EncoderParams};
use crate::error::{ensure, Result};
use crate::graph::{Degrade, Graph};
use crate::numerics::{cosine_similarity, norm, Matrix, RngStream};

/// Default L2 strength of the probe.
pub const PROBE_LAMBDA: f64 = 1e-4;
/// Default iteration cap of the probe.
pub const PROBE_MAX_ITER: usize = 2000;
/// Gradient-norm stopping threshold of the probe.
pub const PROBE_GRAD_TOL: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitMasks {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Uniform 10/10/80 split of nodes with a non-negative label.
pub fn make_split(labels: &[i64], rng: &mut RngStream) -> Result<SplitMasks> {
    let mut labeled: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] >= 0).collect();
    ensure!(
        labeled.len() >= 10,
        Domain,
        "need at least 10 labeled nodes, found {}",
        labeled.len()
    );
    rng.shuffle(&mut labeled);
    let k = (0.1 * labeled.len() as f64).round() as usize;
    let test = labeled.split_off(2 * k);
    let val = labeled.split_off(k);
    Ok(SplitMasks {
        train: labeled,
        val,
        test,
    })
}

/// Multinomial logistic regression on standardized inputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeModel {
    /// `d × classes`.
    pub weights: Matrix,
    pub bias: Vec<f64>,
    pub lambda: f64,
    /// Standardization statistics from the training rows.
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    /// Set when training saw a single class; the model then predicts it everywhere.
    pub single_class: Option<usize>,
    pub iterations: usize,
    pub converged: bool,
    /// Objective value after every accepted step, starting from the initial point.
    pub loss_trace: Vec<f64>,
}

impl ProbeModel {
    pub fn classes(&self) -> usize {
        self.bias.len()
    }

    fn standardize(&self, h: &Matrix) -> Matrix {
        Matrix::from_fn(h.rows(), h.cols(), |i, j| (h[(i, j)] - self.mean[j]) / self.scale[j])
    }

    /// Class scores `standardize(H)·W + b`.
    pub fn logits(&self, h: &Matrix) -> Matrix {
        self.standardize(h).matmul(&self.weights).add_row_vector(&self.bias)
    }

    /// Argmax class per row, ties to the lowest index.
    pub fn predict(&self, h: &Matrix) -> Vec<usize> {
        if let Some(c) = self.single_class {
            return vec![c; h.rows()];
        }
        let s = self.logits(h);
        (0..s.rows()).map(|i| argmax(s.row(i))).collect()
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (k, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = k;
        }
    }
    best
}

fn softmax_rows(s: &Matrix) -> Matrix {
    let mut p = s.clone();
    for i in 0..p.rows() {
        let row = p.row_mut(i);
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            z += *v;
        }
        for v in row.iter_mut() {
            *v /= z;
        }
    }
    p
}

/// Mean cross-entropy plus `λ‖W‖²`, with gradients for `W` and `b`.
fn probe_objective(x: &Matrix, y: &[usize], w: &Matrix, b: &[f64], lambda: f64) -> (f64, Matrix, Vec<f64>) {
    let n = x.rows() as f64;
    let s = x.matmul(w).add_row_vector(b);
    let mut loss = 0.0;
    for (i, &c) in y.iter().enumerate() {
        let row = s.row(i);
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        loss += lse - row[c];
    }
    loss /= n;
    loss += lambda * w.as_slice().iter().map(|v| v * v).sum::<f64>();
    let mut r = softmax_rows(&s);
    for (i, &c) in y.iter().enumerate() {
        r[(i, c)] -= 1.0;
    }
    let r = r.scale(1.0 / n);
    let mut gw = x.t_matmul(&r);
    gw.add_scaled(w, 2.0 * lambda);
    (loss, gw, r.column_sums())
}

/// Fits the probe by gradient descent with Armijo backtracking.
///
/// `classes` fixes the output width so classes absent from the training rows
/// still get a (never predicted) column.
pub fn fit_probe(h_train: &Matrix, y_train: &[usize], classes: usize, lambda: f64, max_iter: usize) -> Result<ProbeModel> {
    ensure!(lambda >= 0.0, Domain, "probe lambda must be non-negative, got {lambda}");
    ensure!(
        h_train.rows() == y_train.len() && !y_train.is_empty(),
        Contract,
        "{} training rows for {} labels",
        h_train.rows(),
        y_train.len()
    );
    ensure!(h_train.is_finite(), Domain, "probe inputs contain non-finite values");
    ensure!(
        y_train.iter().all(|&c| c < classes),
        Domain,
        "a training label is >= the class count {classes}"
    );
    let d = h_train.cols();
    let n = h_train.rows() as f64;
    let mean: Vec<f64> = h_train.column_sums().iter().map(|s| s / n).collect();
    let scale: Vec<f64> = (0..d)
        .map(|j| {
            let var = (0..h_train.rows()).map(|i| (h_train[(i, j)] - mean[j]).powi(2)).sum::<f64>() / n;
            if var > 0.0 {
                var.sqrt()
            } else {
                1.0
            }
        })
        .collect();
    let mut model = ProbeModel {
        weights: Matrix::zeros(d, classes),
        bias: vec![0.0; classes],
        lambda,
        mean,
        scale,
        single_class: None,
        iterations: 0,
        converged: false,
        loss_trace: Vec::new(),
    };

    let first = y_train[0];
    if y_train.iter().all(|&c| c == first) {
        log::warn!("probe training split contains a single class ({first}); using a constant predictor");
        model.single_class = Some(first);
        model.converged = true;
        return Ok(model);
    }

    let x = model.standardize(h_train);
    let (mut w, mut b) = (model.weights.clone(), model.bias.clone());
    let (mut f, mut gw, mut gb) = probe_objective(&x, y_train, &w, &b, lambda);
    model.loss_trace.push(f);
    let mut step = 1.0;
    for _ in 0..max_iter {
        let gnorm2 = gw.as_slice().iter().map(|v| v * v).sum::<f64>() + gb.iter().map(|v| v * v).sum::<f64>();
        if gnorm2.sqrt() < PROBE_GRAD_TOL {
            model.converged = true;
            break;
        }
        let mut accepted = None;
        while step > 1e-12 {
            let mut w_new = w.clone();
            w_new.add_scaled(&gw, -step);
            let b_new: Vec<f64> = b.iter().zip(&gb).map(|(v, g)| v - step * g).collect();
            let (f_new, gw_new, gb_new) = probe_objective(&x, y_train, &w_new, &b_new, lambda);
            if f_new <= f - 0.5 * step * gnorm2 {
                accepted = Some((w_new, b_new, f_new, gw_new, gb_new));
                break;
            }
            step *= 0.5;
        }
        let Some((w_new, b_new, f_new, gw_new, gb_new)) = accepted else {
            break;
        };
        (w, b, f, gw, gb) = (w_new, b_new, f_new, gw_new, gb_new);
        model.loss_trace.push(f);
        model.iterations += 1;
        step *= 2.0;
    }
    model.weights = w;
    model.bias = b;
    Ok(model)
}

/// Fraction of predictions equal to the labels (0 for no rows).
pub fn accuracy(model: &ProbeModel, h: &Matrix, y: &[usize]) -> f64 {
    prediction_accuracy(&model.predict(h), y)
}

pub fn prediction_accuracy(pred: &[usize], y: &[usize]) -> f64 {
    assert_eq!(pred.len(), y.len(), "prediction and label lengths differ");
    if y.is_empty() {
        return 0.0;
    }
    pred.iter().zip(y).filter(|(p, t)| p == t).count() as f64 / y.len() as f64
}

/// Accuracy summary over repeated random splits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeMetrics {
    pub splits: usize,
    pub mean_acc: f64,
    /// Population standard deviation over splits.
    pub std_acc: f64,
    pub accuracies: Vec<f64>,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (0.0, 0.0);
    }
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    (m, var.sqrt())
}

/// Fits one probe per split (split `s` draws from sub-stream `split/s`) and
/// reports test accuracy.
pub fn evaluate_embeddings(
    h: &Matrix,
    labels: &[i64],
    splits: usize,
    lambda: f64,
    rng: &RngStream,
) -> Result<ProbeMetrics> {
    ensure!(h.rows() == labels.len(), Contract, "{} embedding rows for {} labels", h.rows(), labels.len());
    ensure!(splits >= 1, Domain, "need at least one split");
    let classes = labels.iter().copied().max().unwrap_or(-1).max(0) as usize + 1;
    let mut accuracies = Vec::with_capacity(splits);
    for s in 0..splits {
        let masks = make_split(labels, &mut rng.substream_indexed("split", s as u64))?;
        let y = |idx: &[usize]| idx.iter().map(|&i| labels[i] as usize).collect::<Vec<_>>();
        let model = fit_probe(&h.select_rows(&masks.train), &y(&masks.train), classes, lambda, PROBE_MAX_ITER)?;
        accuracies.push(accuracy(&model, &h.select_rows(&masks.test), &y(&masks.test)));
    }
    let (mean_acc, std_acc) = mean_std(&accuracies);
    Ok(ProbeMetrics {
        splits,
        mean_acc,
        std_acc,
        accuracies,
    })
}

/// One row of the degradation study.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VulnerabilityRow {
    pub t: usize,
    pub mean_sim: f64,
    pub std_sim: f64,
    pub surviving_edge_frac: f64,
    pub surviving_dim_frac: f64,
}

/// Embedding stability under cumulative random edge drops and feature masks.
///
/// For each `t = 0..=steps`, reports mean and population std over nodes of
/// `cos(H_t[i], H_0[i])`. Nodes whose clean embedding is the zero vector are
/// excluded; a zero `H_t[i]` counts as similarity 0. With `projected`, the
/// projection-head outputs are compared instead.
pub fn vulnerability_study(
    params: &EncoderParams,
    g: &Graph,
    p: f64,
    steps: usize,
    projected: bool,
    rng: &mut RngStream,
) -> Result<Vec<VulnerabilityRow>> {
    let embed = |graph: &Graph| -> Result<Matrix> {
        let (h, _) = encode(graph.adjacency(), graph.features(), params)?;
        Ok(if projected { project_head(&h, params)?.0 } else { h })
    };
    let edges = g.edge_count();
    let dims = g.feature_dim();
    let mut rows = Vec::with_capacity(steps + 1);
    let mut base: Option<(Matrix, Vec<usize>)> = None;
    for (t, view) in Degrade::new(g, p, steps, RngStream::new(rng.next_u64()))?.enumerate() {
        let view = view?;
        let h = embed(&view.graph)?;
        let (h0, nodes) = base.get_or_insert_with(|| {
            let nodes = (0..h.rows()).filter(|&i| norm(h.row(i)) > 0.0).collect();
            (h.clone(), nodes)
        });
        let sims: Vec<f64> = nodes
            .iter()
            .map(|&i| {
                if t == 0 {
                    1.0
                } else if norm(h.row(i)) == 0.0 {
                    0.0
                } else {
                    cosine_similarity(h.row(i), h0.row(i)).expect("both rows are nonzero")
                }
            })
            .collect();
        let (mean_sim, std_sim) = mean_std(&sims);
        rows.push(VulnerabilityRow {
            t,
            mean_sim,
            std_sim,
            surviving_edge_frac: if edges == 0 {
                1.0
            } else {
                1.0 - view.dropped_edges.len() as f64 / edges as f64
            },
            surviving_dim_frac: if dims == 0 {
                1.0
            } else {
                1.0 - view.masked_dims.len() as f64 / dims as f64
            },
        });
    }
    if base.as_ref().is_some_and(|(_, nodes)| nodes.is_empty()) {
        log::warn!("every clean embedding row is zero; similarities are empty");
    }
    Ok(rows)
}

/// CSV with header `t,mean_sim,std_sim,surviving_edge_frac,surviving_dim_frac`.
pub fn vulnerability_csv(rows: &[VulnerabilityRow]) -> String {
    let mut out = String::from("t,mean_sim,std_sim,surviving_edge_frac,surviving_dim_frac\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.t, r.mean_sim, r.std_sim, r.surviving_edge_frac, r.surviving_dim_frac
        ));
    }
    out
}

pub fn write_vulnerability_csv(rows: &[VulnerabilityRow], path: &Path) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(vulnerability_csv(rows).as_bytes())?;
    Ok(())
}

/// Which pairs random poisoning may flip.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoisonScope {
    /// Any unordered pair: flips add or delete edges.
    #[default]
    AllPairs,
    /// Existing edges only: flips delete.
    EdgesOnly,
}

/// Flips `round(edge_flip_fraction · |E|)` uniformly chosen pairs and zeroes
/// `round(feat_mask_fraction · d)` uniformly chosen feature dimensions.
pub fn random_poison(
    g: &Graph,
    edge_flip_fraction: f64,
    feat_mask_fraction: f64,
    scope: PoisonScope,
    rng: &mut RngStream,
) -> Result<Graph> {
    ensure!(
        (0.0..=1.0).contains(&edge_flip_fraction) && (0.0..=1.0).contains(&feat_mask_fraction),
        Domain,
        "poisoning fractions must lie in [0, 1]"
    );
    ensure!(g.is_binary(), Contract, "poisoning expects a binary graph");
    let n = g.n();
    let flips = (edge_flip_fraction * g.edge_count() as f64).round() as usize;
    let mut adj = g.adjacency().clone();
    let mut toggle = |i: usize, j: usize| {
        let v = 1.0 - adj[(i, j)];
        adj[(i, j)] = v;
        adj[(j, i)] = v;
    };
    match scope {
        PoisonScope::AllPairs => {
            let pairs = crate::attack::PairIndex::new(n);
            let chosen = rng.sample_indices(pairs.len(), flips.min(pairs.len()))?;
            let mut it = chosen.into_iter().peekable();
            for (k, (i, j)) in pairs.iter().enumerate() {
                if it.peek() == Some(&k) {
                    it.next();
                    toggle(i, j);
                }
            }
        }
        PoisonScope::EdgesOnly => {
            let edges = g.edges();
            for k in rng.sample_indices(edges.len(), flips)? {
                let (i, j) = edges[k];
                toggle(i, j);
            }
        }
    }
    let d = g.feature_dim();
    let masked = rng.sample_indices(d, (feat_mask_fraction * d as f64).round() as usize)?;
    let mut x = g.features().clone();
    for i in 0..n {
        let row = x.row_mut(i);
        for &c in &masked {
            row[c] = 0.0;
        }
    }
    g.with_adjacency(adj)?.with_features(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::{init_params, Architecture};
    use crate::graph::generate_sbm;

    #[test]
    fn split_sizes_and_disjointness() {
        let labels: Vec<i64> = (0..100).map(|i| i % 3).collect();
        let s = make_split(&labels, &mut RngStream::new(0)).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (10, 10, 80));
        let mut all: Vec<usize> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
        assert_eq!(s, make_split(&labels, &mut RngStream::new(0)).unwrap());
    }

    #[test]
    fn split_excludes_unlabeled_and_rejects_tiny_sets() {
        let mut labels = vec![0i64; 30];
        for l in labels.iter_mut().step_by(2) {
            *l = -1;
        }
        let s = make_split(&labels, &mut RngStream::new(1)).unwrap();
        assert_eq!(s.train.len() + s.val.len() + s.test.len(), 15);
        assert!(s.train.iter().chain(&s.val).chain(&s.test).all(|&i| labels[i] == 0));
        assert!(make_split(&[0; 9], &mut RngStream::new(0)).is_err());
    }

    fn separable() -> (Matrix, Vec<usize>) {
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for k in 0..20 {
            let t = k as f64 / 20.0;
            rows.push(vec![1.0 + t, 0.5 - t]);
            y.push(0);
            rows.push(vec![-1.0 - t, -0.5 + t]);
            y.push(1);
        }
        (Matrix::from_rows(&rows), y)
    }

    #[test]
    fn separable_toy_set_is_fit_exactly() {
        let (h, y) = separable();
        let m = fit_probe(&h, &y, 2, 1e-4, PROBE_MAX_ITER).unwrap();
        assert_eq!(accuracy(&m, &h, &y), 1.0);
        assert!(m.loss_trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn single_class_gives_constant_predictor() {
        let h = Matrix::from_rows(&[vec![1.0], vec![2.0]]);
        let m = fit_probe(&h, &[2, 2], 4, 1e-4, 100).unwrap();
        assert_eq!(m.single_class, Some(2));
        assert_eq!(m.predict(&Matrix::from_rows(&[vec![-5.0], vec![9.0]])), vec![2, 2]);
    }

    #[test]
    fn heavy_regularization_predicts_the_prior() {
        let (h, mut y) = separable();
        y[1] = 0;
        y[3] = 0;
        let m = fit_probe(&h, &y, 2, 1e6, PROBE_MAX_ITER).unwrap();
        assert!(m.weights.frobenius_norm() < 1e-2);
        assert!(m.predict(&h).iter().all(|&c| c == 0));
    }

    #[test]
    fn accuracy_examples() {
        assert_eq!(prediction_accuracy(&[0, 1, 0, 1], &[0, 1, 0, 1]), 1.0);
        assert_eq!(prediction_accuracy(&[0, 1, 0, 1], &[1, 0, 1, 0]), 0.0);
        let mut rng = RngStream::new(9);
        let y: Vec<usize> = (0..10_000).map(|i| i % 4).collect();
        let pred: Vec<usize> = (0..10_000).map(|_| rng.index(4)).collect();
        let acc = prediction_accuracy(&pred, &y);
        assert!((acc - 0.25).abs() <= 0.02, "{acc}");
    }

    #[test]
    fn ties_go_to_the_lowest_class() {
        assert_eq!(argmax(&[0.3, 0.7, 0.7]), 1);
        assert_eq!(argmax(&[0.0, 0.0]), 0);
    }

    #[test]
    fn metrics_report_one_accuracy_per_split() {
        let (h, y) = separable();
        let labels: Vec<i64> = y.iter().map(|&c| c as i64).collect();
        let m = evaluate_embeddings(&h, &labels, 20, PROBE_LAMBDA, &RngStream::new(4)).unwrap();
        assert_eq!(m.accuracies.len(), 20);
        assert_eq!(m.splits, 20);
        let json = serde_json::to_string(&m).unwrap();
        assert!(json.starts_with("{\"splits\":20,\"mean_acc\":"));
    }

    fn trained_fixture() -> (Graph, EncoderParams) {
        let mut rng = RngStream::new(5);
        let g = generate_sbm(&[15, 15], 0.3, 0.05, 8, &mut rng).unwrap();
        let p = init_params(Architecture::new(8, 32), &mut rng).unwrap();
        (g, p)
    }

    #[test]
    fn vulnerability_starts_at_one() {
        let (g, p) = trained_fixture();
        let rows = vulnerability_study(&p, &g, 0.1, 10, false, &mut RngStream::new(0)).unwrap();
        assert_eq!(rows.len(), 11);
        assert_eq!(rows[0].mean_sim, 1.0);
        assert_eq!(rows[0].std_sim, 0.0);
        assert_eq!(rows[0].surviving_edge_frac, 1.0);
        for r in &rows {
            assert!((-1.0..=1.0).contains(&r.mean_sim));
        }
        assert!(rows.windows(2).all(|w| w[1].surviving_edge_frac <= w[0].surviving_edge_frac));
        let csv = vulnerability_csv(&rows);
        assert_eq!(csv.lines().count(), 12);
        let projected = vulnerability_study(&p, &g, 0.1, 3, true, &mut RngStream::new(0)).unwrap();
        assert_eq!(projected[0].mean_sim, 1.0);
    }

    #[test]
    fn poison_examples() {
        let (g, _) = trained_fixture();
        let mut rng = RngStream::new(2);
        assert_eq!(random_poison(&g, 0.0, 0.0, PoisonScope::AllPairs, &mut rng).unwrap(), g);
        let empty = random_poison(&g, 1.0, 0.0, PoisonScope::EdgesOnly, &mut rng).unwrap();
        assert_eq!(empty.edge_count(), 0);
        let poisoned = random_poison(&g, 0.2, 0.25, PoisonScope::AllPairs, &mut rng).unwrap();
        let flips = g
            .edges()
            .iter()
            .filter(|&&(i, j)| !poisoned.has_edge(i, j))
            .count()
            + poisoned.edges().iter().filter(|&&(i, j)| !g.has_edge(i, j)).count();
        assert_eq!(flips, (0.2 * g.edge_count() as f64).round() as usize);
        let zero_cols = (0..8).filter(|&c| poisoned.features().column(c).iter().all(|&v| v == 0.0)).count();
        assert_eq!(zero_cols, 2);
        assert_eq!(poisoned.labels(), g.labels());
    }

    #[test]
    fn poison_count_arithmetic() {
        assert_eq!((0.2f64 * 5429.0).round() as usize, 1086);
    }
}

#[cfg(test)]
mod proptests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn splits_partition_labeled_nodes(n in 10usize..300, seed in any::<u64>()) {
            let labels: Vec<i64> = (0..n).map(|i| if i % 7 == 3 { -1 } else { (i % 4) as i64 }).collect();
            let labeled = labels.iter().filter(|&&l| l >= 0).count();
            prop_assume!(labeled >= 10);
            let s = make_split(&labels, &mut RngStream::new(seed)).unwrap();
            let mut all: Vec<usize> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
            all.sort_unstable();
            all.dedup();
            prop_assert_eq!(all.len(), labeled);
            let k = (0.1 * labeled as f64).round() as usize;
            prop_assert_eq!(s.train.len(), k);
            prop_assert_eq!(s.val.len(), k);
        }

        #[test]
        fn accuracy_is_relabeling_invariant(
            pairs in prop::collection::vec((0usize..4, 0usize..4), 1..60),
            perm_seed in any::<u64>(),
        ) {
            let perm = RngStream::new(perm_seed).permutation(4);
            let (pred, y): (Vec<usize>, Vec<usize>) = pairs.iter().copied().unzip();
            let pred2: Vec<usize> = pred.iter().map(|&c| perm[c]).collect();
            let y2: Vec<usize> = y.iter().map(|&c| perm[c]).collect();
            prop_assert_eq!(prediction_accuracy(&pred, &y), prediction_accuracy(&pred2, &y2));
        }
    }
}
