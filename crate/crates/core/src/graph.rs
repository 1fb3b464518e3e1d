//! Graph data model and the graph-level transformations used in training and
//! evaluation: normalization, complement mask, augmentation, subgraph
//! sampling, progressive degradation and synthetic block-model generation.

use std::collections::BTreeSet;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::numerics::{Matrix, RngStream};

/// Tolerance used when checking symmetry of weighted adjacencies.
const SYM_TOL: f64 = 1e-12;

/// Undirected graph with dense adjacency and node features.
///
/// The adjacency is symmetric with zero diagonal and entries in `[0, 1]`;
/// binary graphs hold only 0/1, relaxed graphs produced inside the adversary
/// may hold fractional weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Graph {
    adjacency: Matrix,
    features: Matrix,
    labels: Option<Vec<i64>>,
}

impl Graph {
    pub fn new(adjacency: Matrix, features: Matrix, labels: Option<Vec<i64>>) -> Result<Self> {
        let n = adjacency.rows();
        ensure!(
            adjacency.cols() == n,
            Contract,
            "adjacency must be square, got {:?}",
            adjacency.shape()
        );
        ensure!(
            features.rows() == n,
            Contract,
            "feature matrix has {} rows for {n} nodes",
            features.rows()
        );
        ensure!(features.is_finite(), Contract, "feature matrix has non-finite entries");
        check_weighted_adjacency(&adjacency)?;
        if let Some(l) = &labels {
            ensure!(l.len() == n, Contract, "{} labels for {n} nodes", l.len());
            ensure!(
                l.iter().all(|&y| y >= -1),
                Contract,
                "labels must be >= -1 (-1 marks unlabeled)"
            );
        }
        Ok(Self {
            adjacency,
            features,
            labels,
        })
    }

    pub fn n(&self) -> usize {
        self.adjacency.rows()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn adjacency(&self) -> &Matrix {
        &self.adjacency
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> Option<&[i64]> {
        self.labels.as_deref()
    }

    pub fn is_binary(&self) -> bool {
        self.adjacency
            .as_slice()
            .iter()
            .all(|&a| a == 0.0 || a == 1.0)
    }

    /// Unordered edges `(i, j)` with `i < j` and nonzero weight, row-major.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let n = self.n();
        let mut out = Vec::new();
        for i in 0..n {
            let row = self.adjacency.row(i);
            for (j, &w) in row.iter().enumerate().skip(i + 1) {
                if w != 0.0 {
                    out.push((i, j));
                }
            }
        }
        out
    }

    pub fn edge_count(&self) -> usize {
        let n = self.n();
        (0..n)
            .map(|i| self.adjacency.row(i)[i + 1..].iter().filter(|&&w| w != 0.0).count())
            .sum()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adjacency[(i, j)] != 0.0
    }

    pub fn with_features(&self, features: Matrix) -> Result<Graph> {
        Graph::new(self.adjacency.clone(), features, self.labels.clone())
    }

    pub fn with_adjacency(&self, adjacency: Matrix) -> Result<Graph> {
        Graph::new(adjacency, self.features.clone(), self.labels.clone())
    }

    /// Builds a binary graph from an edge list.
    pub fn from_edges(
        n: usize,
        edges: &[(usize, usize)],
        features: Matrix,
        labels: Option<Vec<i64>>,
    ) -> Result<Graph> {
        let mut adj = Matrix::zeros(n, n);
        for &(u, v) in edges {
            ensure!(u < n && v < n, Contract, "edge ({u}, {v}) out of range for n={n}");
            if u != v {
                adj[(u, v)] = 1.0;
                adj[(v, u)] = 1.0;
            }
        }
        Graph::new(adj, features, labels)
    }
}

fn check_weighted_adjacency(a: &Matrix) -> Result<()> {
    let n = a.rows();
    ensure!(a.cols() == n, Contract, "adjacency must be square");
    for i in 0..n {
        ensure!(a[(i, i)] == 0.0, Contract, "adjacency diagonal entry ({i}, {i}) is nonzero");
        for j in i + 1..n {
            let (x, y) = (a[(i, j)], a[(j, i)]);
            ensure!(
                (0.0..=1.0).contains(&x) && (0.0..=1.0).contains(&y),
                Contract,
                "adjacency entry ({i}, {j}) = {x} outside [0, 1]"
            );
            ensure!(
                (x - y).abs() <= SYM_TOL,
                Contract,
                "adjacency asymmetric at ({i}, {j}): {x} vs {y}"
            );
        }
    }
    Ok(())
}

fn check_binary_adjacency(a: &Matrix) -> Result<()> {
    check_weighted_adjacency(a)?;
    ensure!(
        a.as_slice().iter().all(|&x| x == 0.0 || x == 1.0),
        Contract,
        "adjacency is not binary"
    );
    Ok(())
}

/// Counts reported by [`load_graph`].
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub self_loops_dropped: usize,
    pub duplicate_edges: usize,
}

fn ingest_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Ingestion {
        path: path.display().to_string(),
        line,
        message: message.into(),
    }
}

/// Reads a graph from an edge list, a feature table and an optional label
/// column. The node count is the number of feature rows.
pub fn load_graph(
    edge_path: &Path,
    feature_path: &Path,
    label_path: Option<&Path>,
) -> Result<(Graph, IngestReport)> {
    let features = read_table(feature_path)?;
    let n = features.rows();

    let text = fs::read_to_string(edge_path)?;
    let mut adj = Matrix::zeros(n, n);
    let mut report = IngestReport::default();
    for (lineno, line) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut toks = line.split_whitespace();
        let node = |toks: &mut std::str::SplitWhitespace<'_>| -> Result<usize> {
            let tok = toks
                .next()
                .ok_or_else(|| ingest_err(edge_path, lineno, "expected two node ids"))?;
            let id: usize = tok
                .parse()
                .map_err(|_| ingest_err(edge_path, lineno, format!("unparsable node id {tok:?}")))?;
            if id >= n {
                return Err(ingest_err(
                    edge_path,
                    lineno,
                    format!("node id {id} out of range for {n} nodes"),
                ));
            }
            Ok(id)
        };
        let u = node(&mut toks)?;
        let v = node(&mut toks)?;
        if toks.next().is_some() {
            return Err(ingest_err(edge_path, lineno, "trailing tokens after edge"));
        }
        if u == v {
            report.self_loops_dropped += 1;
            continue;
        }
        if adj[(u, v)] == 1.0 {
            report.duplicate_edges += 1;
        }
        adj[(u, v)] = 1.0;
        adj[(v, u)] = 1.0;
    }
    if report.self_loops_dropped > 0 {
        log::warn!(
            "{}: dropped {} self-loop(s)",
            edge_path.display(),
            report.self_loops_dropped
        );
    }

    let labels = label_path.map(|p| read_labels(p, n)).transpose()?;
    Ok((Graph::new(adj, features, labels)?, report))
}

/// Reads a whitespace-separated real table, one row per line (features or
/// embeddings). Blank lines are skipped.
pub fn read_table(path: &Path) -> Result<Matrix> {
    let text = fs::read_to_string(path)?;
    let mut data = Vec::new();
    let mut d: Option<usize> = None;
    let mut rows = 0;
    for (lineno, line) in text.lines().enumerate() {
        let lineno = lineno + 1;
        if line.trim().is_empty() {
            continue;
        }
        let before = data.len();
        for tok in line.split_whitespace() {
            let x: f64 = tok
                .parse()
                .map_err(|_| ingest_err(path, lineno, format!("unparsable feature value {tok:?}")))?;
            if !x.is_finite() {
                return Err(ingest_err(path, lineno, "non-finite feature value"));
            }
            data.push(x);
        }
        let width = data.len() - before;
        match d {
            None => d = Some(width),
            Some(w) if w != width => {
                return Err(ingest_err(
                    path,
                    lineno,
                    format!("ragged feature row: {width} values, expected {w}"),
                ))
            }
            _ => {}
        }
        rows += 1;
    }
    Matrix::from_vec(rows, d.unwrap_or(0), data)
}

/// Reads one integer label per line (`-1` marks unlabeled) and checks the count.
pub fn read_labels(path: &Path, n: usize) -> Result<Vec<i64>> {
    let text = fs::read_to_string(path)?;
    let mut labels = Vec::with_capacity(n);
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let y: i64 = line
            .parse()
            .map_err(|_| ingest_err(path, lineno + 1, format!("unparsable label {line:?}")))?;
        if y < -1 {
            return Err(ingest_err(path, lineno + 1, format!("label {y} below -1")));
        }
        labels.push(y);
    }
    if labels.len() != n {
        return Err(ingest_err(
            path,
            labels.len(),
            format!("{} labels for {n} nodes", labels.len()),
        ));
    }
    Ok(labels)
}

/// Integrity sidecar written next to an exported graph.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphSidecar {
    pub n: usize,
    pub d: usize,
    pub edges: usize,
}

/// File names used by [`save_graph`] inside the output directory.
pub const EDGE_FILE: &str = "edges.txt";
pub const FEATURE_FILE: &str = "features.txt";
pub const LABEL_FILE: &str = "labels.txt";
pub const SIDECAR_FILE: &str = "graph.json";

/// Writes a binary graph in the text exchange format plus a JSON sidecar.
/// Real values use Rust's shortest round-trip formatting.
pub fn save_graph(graph: &Graph, dir: &Path) -> Result<GraphSidecar> {
    ensure!(graph.is_binary(), Contract, "only binary graphs can be exported");
    fs::create_dir_all(dir)?;
    let edges = graph.edges();

    let mut w = BufWriter::new(fs::File::create(dir.join(EDGE_FILE))?);
    for &(u, v) in &edges {
        writeln!(w, "{u} {v}")?;
    }
    w.flush()?;

    let mut w = BufWriter::new(fs::File::create(dir.join(FEATURE_FILE))?);
    for r in 0..graph.n() {
        let row: Vec<String> = graph.features().row(r).iter().map(|x| format!("{x}")).collect();
        writeln!(w, "{}", row.join(" "))?;
    }
    w.flush()?;

    if let Some(labels) = graph.labels() {
        let mut w = BufWriter::new(fs::File::create(dir.join(LABEL_FILE))?);
        for y in labels {
            writeln!(w, "{y}")?;
        }
        w.flush()?;
    }

    let sidecar = GraphSidecar {
        n: graph.n(),
        d: graph.feature_dim(),
        edges: edges.len(),
    };
    fs::write(dir.join(SIDECAR_FILE), serde_json::to_string(&sidecar)? + "\n")?;
    Ok(sidecar)
}

/// Loads a directory written by [`save_graph`] and checks it against the sidecar.
pub fn load_graph_dir(dir: &Path) -> Result<(Graph, IngestReport)> {
    let label_path = dir.join(LABEL_FILE);
    let (graph, report) = load_graph(
        &dir.join(EDGE_FILE),
        &dir.join(FEATURE_FILE),
        label_path.exists().then_some(label_path.as_path()),
    )?;
    let sidecar_path = dir.join(SIDECAR_FILE);
    if sidecar_path.exists() {
        let sidecar: GraphSidecar = serde_json::from_str(&fs::read_to_string(&sidecar_path)?)?;
        let actual = GraphSidecar {
            n: graph.n(),
            d: graph.feature_dim(),
            edges: graph.edge_count(),
        };
        if sidecar != actual {
            return Err(ingest_err(
                &sidecar_path,
                1,
                format!("sidecar {sidecar:?} does not match loaded graph {actual:?}"),
            ));
        }
    }
    Ok((graph, report))
}

/// `D̃^{-1/2} (A + I) D̃^{-1/2}` with `D̃` the row sums of `A + I`.
pub fn normalize_adjacency(a: &Matrix) -> Result<Matrix> {
    check_weighted_adjacency(a)?;
    Ok(normalize_unchecked(a).0)
}

/// Normalized adjacency together with the `D̃^{-1/2}` diagonal.
pub(crate) fn normalize_unchecked(a: &Matrix) -> (Matrix, Vec<f64>) {
    let n = a.rows();
    let inv_sqrt: Vec<f64> = a.row_sums().iter().map(|d| 1.0 / (d + 1.0).sqrt()).collect();
    let mut out = Matrix::zeros(n, n);
    for i in 0..n {
        let si = inv_sqrt[i];
        let src = a.row(i);
        let dst = out.row_mut(i);
        for j in 0..n {
            let w = if i == j { 1.0 } else { src[j] };
            if w != 0.0 {
                dst[j] = si * w * inv_sqrt[j];
            }
        }
    }
    (out, inv_sqrt)
}

/// `C = Ā − A` where `Ā` is the off-diagonal complement of `A`: +1 where an
/// edge could be added, −1 where one could be removed, 0 on the diagonal.
pub fn complement_mask(a: &Matrix) -> Result<Matrix> {
    check_binary_adjacency(a)?;
    let n = a.rows();
    Ok(Matrix::from_fn(n, n, |i, j| {
        if i == j {
            0.0
        } else {
            1.0 - 2.0 * a[(i, j)]
        }
    }))
}

/// A stochastically transformed copy of a source graph, with the
/// transformation recorded.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphView {
    pub graph: Graph,
    /// Removed unordered edges `(i, j)`, `i < j`.
    pub dropped_edges: BTreeSet<(usize, usize)>,
    /// Feature dimensions zeroed across all nodes.
    pub masked_dims: BTreeSet<usize>,
}

impl GraphView {
    /// Re-applies the recorded drops and masks to `source`.
    pub fn replay(&self, source: &Graph) -> Result<Graph> {
        apply_drops(source, &self.dropped_edges, &self.masked_dims)
    }

    pub fn identity(source: &Graph) -> GraphView {
        GraphView {
            graph: source.clone(),
            dropped_edges: BTreeSet::new(),
            masked_dims: BTreeSet::new(),
        }
    }
}

fn apply_drops(
    source: &Graph,
    dropped: &BTreeSet<(usize, usize)>,
    masked: &BTreeSet<usize>,
) -> Result<Graph> {
    let mut adj = source.adjacency().clone();
    for &(i, j) in dropped {
        adj[(i, j)] = 0.0;
        adj[(j, i)] = 0.0;
    }
    let mut x = source.features().clone();
    if !masked.is_empty() {
        for r in 0..x.rows() {
            let row = x.row_mut(r);
            for &c in masked {
                row[c] = 0.0;
            }
        }
    }
    Graph::new(adj, x, source.labels().map(<[i64]>::to_vec))
}

fn check_prob(name: &str, p: f64) -> Result<()> {
    ensure!((0.0..=1.0).contains(&p), Domain, "{name} = {p} outside [0, 1]");
    Ok(())
}

/// Drops each edge with probability `p_edge` and zeroes each feature
/// dimension with probability `p_feat`.
pub fn augment(g: &Graph, p_edge: f64, p_feat: f64, rng: &mut RngStream) -> Result<GraphView> {
    check_prob("p_edge", p_edge)?;
    check_prob("p_feat", p_feat)?;
    ensure!(g.is_binary(), Contract, "augment expects a binary graph");
    let dropped: BTreeSet<(usize, usize)> = g
        .edges()
        .into_iter()
        .filter(|_| rng.bernoulli_unchecked(p_edge))
        .collect();
    let masked: BTreeSet<usize> = (0..g.feature_dim())
        .filter(|_| rng.bernoulli_unchecked(p_feat))
        .collect();
    Ok(GraphView {
        graph: apply_drops(g, &dropped, &masked)?,
        dropped_edges: dropped,
        masked_dims: masked,
    })
}

/// Induced subgraph on a node subset, with the map back to original ids.
#[derive(Clone, Debug, PartialEq)]
pub struct SubgraphHandle {
    pub graph: Graph,
    /// `node_map[k]` is the original id of subgraph node `k`.
    pub node_map: Vec<usize>,
}

/// Induced subgraph on the given nodes (in the given order).
pub fn induced_subgraph(g: &Graph, nodes: &[usize]) -> Result<SubgraphHandle> {
    let mut seen = vec![false; g.n()];
    for &v in nodes {
        ensure!(v < g.n(), Domain, "node {v} out of range for n={}", g.n());
        ensure!(!seen[v], Domain, "node {v} listed twice");
        seen[v] = true;
    }
    let adj = g.adjacency().select_square(nodes);
    let x = g.features().select_rows(nodes);
    let labels = g.labels().map(|l| nodes.iter().map(|&v| l[v]).collect());
    Ok(SubgraphHandle {
        graph: Graph::new(adj, x, labels)?,
        node_map: nodes.to_vec(),
    })
}

/// Uniformly samples `m` distinct nodes and returns their induced subgraph.
/// Nodes are kept in ascending original order.
pub fn sample_subgraph(g: &Graph, m: usize, rng: &mut RngStream) -> Result<SubgraphHandle> {
    ensure!(
        (1..=g.n()).contains(&m),
        Domain,
        "subgraph size {m} outside [1, {}]",
        g.n()
    );
    let mut nodes = rng.permutation(g.n());
    nodes.truncate(m);
    nodes.sort_unstable();
    induced_subgraph(g, &nodes)
}

/// Progressive degradation: each step drops every surviving edge and masks
/// every still-unmasked feature dimension with probability `p`. Masks and
/// drops are cumulative. Yields `G_0 = G` first.
pub struct Degrade<'a> {
    source: &'a Graph,
    p: f64,
    remaining: usize,
    rng: RngStream,
    current: Option<GraphView>,
}

impl<'a> Degrade<'a> {
    pub fn new(g: &'a Graph, p: f64, steps: usize, rng: RngStream) -> Result<Self> {
        ensure!(p > 0.0 && p < 1.0, Domain, "degradation probability {p} outside (0, 1)");
        ensure!(steps >= 1, Domain, "degradation needs at least one step");
        ensure!(g.is_binary(), Contract, "degradation expects a binary graph");
        Ok(Self {
            source: g,
            p,
            remaining: steps + 1,
            rng,
            current: None,
        })
    }
}

impl Iterator for Degrade<'_> {
    type Item = Result<GraphView>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.remaining == 0 {
            return None;
        }
        self.remaining -= 1;
        let next = match self.current.take() {
            None => Ok(GraphView::identity(self.source)),
            Some(prev) => {
                let mut dropped = prev.dropped_edges;
                for e in prev.graph.edges() {
                    if self.rng.bernoulli_unchecked(self.p) {
                        dropped.insert(e);
                    }
                }
                let mut masked = prev.masked_dims;
                for c in 0..self.source.feature_dim() {
                    if !masked.contains(&c) && self.rng.bernoulli_unchecked(self.p) {
                        masked.insert(c);
                    }
                }
                apply_drops(self.source, &dropped, &masked).map(|graph| GraphView {
                    graph,
                    dropped_edges: dropped,
                    masked_dims: masked,
                })
            }
        };
        if let Ok(view) = &next {
            self.current = Some(view.clone());
        }
        Some(next)
    }
}

/// Collects the full sequence `G_0, …, G_steps`.
pub fn degrade_sequence(
    g: &Graph,
    p: f64,
    steps: usize,
    rng: &mut RngStream,
) -> Result<Vec<GraphView>> {
    let sub = RngStream::new(rng.next_u64());
    Degrade::new(g, p, steps, sub)?.collect()
}

/// Stochastic block model parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SbmParams {
    pub block_sizes: Vec<usize>,
    pub p_in: f64,
    pub p_out: f64,
    pub feature_dim: usize,
    /// Standard deviation of the per-block mean vectors; noise is unit variance.
    pub mean_scale: f64,
}

/// Block-model graph with labels equal to block ids and Gaussian features
/// around per-block means.
pub fn generate_sbm(
    block_sizes: &[usize],
    p_in: f64,
    p_out: f64,
    d: usize,
    rng: &mut RngStream,
) -> Result<Graph> {
    generate_sbm_with(
        &SbmParams {
            block_sizes: block_sizes.to_vec(),
            p_in,
            p_out,
            feature_dim: d,
            mean_scale: 1.0,
        },
        rng,
    )
}

pub fn generate_sbm_with(params: &SbmParams, rng: &mut RngStream) -> Result<Graph> {
    check_prob("p_in", params.p_in)?;
    check_prob("p_out", params.p_out)?;
    ensure!(
        !params.block_sizes.is_empty() && params.block_sizes.iter().all(|&b| b > 0),
        Domain,
        "block sizes must be positive"
    );
    let block: Vec<usize> = params
        .block_sizes
        .iter()
        .enumerate()
        .flat_map(|(b, &s)| std::iter::repeat_n(b, s))
        .collect();
    let n = block.len();
    let mut adj = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            let p = if block[i] == block[j] { params.p_in } else { params.p_out };
            if rng.bernoulli_unchecked(p) {
                adj[(i, j)] = 1.0;
                adj[(j, i)] = 1.0;
            }
        }
    }
    let d = params.feature_dim;
    let means = Matrix::from_fn(params.block_sizes.len(), d, |_, _| {
        params.mean_scale * rng.gaussian()
    });
    let x = Matrix::from_fn(n, d, |i, c| means[(block[i], c)] + rng.gaussian());
    let labels = block.iter().map(|&b| b as i64).collect();
    Graph::new(adj, x, Some(labels))
}


#[cfg(test)]
mod proptests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn normalize_preserves_symmetry(seed in any::<u64>(), n in 1usize..12) {
            let mut rng = RngStream::new(seed);
            let mut a = Matrix::zeros(n, n);
            for i in 0..n {
                for j in i + 1..n {
                    let w = rng.uniform();
                    a[(i, j)] = w;
                    a[(j, i)] = w;
                }
            }
            let na = normalize_adjacency(&a).unwrap();
            prop_assert!(na.is_symmetric(1e-15));
        }

        #[test]
        fn augment_only_removes(seed in any::<u64>(), pe in 0.0f64..1.0, pf in 0.0f64..1.0) {
            let mut rng = RngStream::new(seed);
            let g = generate_sbm(&[6, 7], 0.5, 0.2, 5, &mut rng).unwrap();
            let v = augment(&g, pe, pf, &mut rng).unwrap();
            for i in 0..g.n() {
                for j in 0..g.n() {
                    prop_assert!(v.graph.adjacency()[(i, j)] <= g.adjacency()[(i, j)]);
                }
                for c in 0..g.feature_dim() {
                    let x = v.graph.features()[(i, c)];
                    prop_assert!(x == 0.0 || x == g.features()[(i, c)]);
                }
            }
        }

        #[test]
        fn subgraph_preserves_edges(seed in any::<u64>(), m in 1usize..13) {
            let mut rng = RngStream::new(seed);
            let g = generate_sbm(&[6, 6], 0.5, 0.2, 2, &mut rng).unwrap();
            let s = sample_subgraph(&g, m, &mut rng).unwrap();
            let mut seen = s.node_map.clone();
            seen.dedup();
            prop_assert_eq!(seen.len(), m);
            for a in 0..m {
                prop_assert!(s.node_map[a] < g.n());
                for b in 0..m {
                    prop_assert_eq!(
                        s.graph.has_edge(a, b),
                        g.has_edge(s.node_map[a], s.node_map[b])
                    );
                }
            }
        }

        #[test]
        fn complement_flips_every_pair(seed in any::<u64>()) {
            let mut rng = RngStream::new(seed);
            let g = generate_sbm(&[4, 5], 0.5, 0.3, 1, &mut rng).unwrap();
            let a = g.adjacency();
            let flipped = a.add(&complement_mask(a).unwrap());
            for i in 0..g.n() {
                for j in 0..g.n() {
                    let want = if i == j { 0.0 } else { 1.0 - a[(i, j)] };
                    prop_assert_eq!(flipped[(i, j)], want);
                }
            }
        }
    }
}
