//! Projected-gradient adversary over graph structure and node features.
//!
//! Structure perturbations live on unordered node pairs as relaxed variables
//! `ℓ ∈ [0, 1]`; the perturbed adjacency is `A + C ∘ ℓ` (mirrored), with `C`
//! the complement mask, so `ℓ = 1` flips a pair. Features are perturbed
//! additively by `L_X` with `‖L_X‖_∞ ≤ δ_X`. Each step ascends the contrastive
//! loss against a fixed anchor view:
//!
//! ```text
//! ℓ   ← Π_A[ℓ + α ∇_ℓ L]          (plain gradient)
//! L_X ← Π_X[L_X + β sgn(∇_X L)]   (sign gradient)
//! ```
//!
//! `Π_A` clips to `[0, 1]` and, when the clipped mass exceeds the budget,
//! shifts by the dual variable `μ` found by bisection. The relaxed `ℓ` is
//! finally discretized by independent Bernoulli draws.
//!
//! Budget convention: the structure budget is a fraction of the number of
//! undirected edges, `B = fraction · |E|`. This equals half of
//! `fraction · Σᵢⱼ Aᵢⱼ`, because the full-matrix sum counts each edge twice
//! and each pair variable is mirrored into two matrix entries.

use serde::{Deserialize, Serialize};

use crate::encoder::{backward_from_projection, forward, EncoderParams, GradRequest};
use crate::error::{ensure, Error, Result};
use crate::graph::{complement_mask, Graph};
use crate::loss::contrastive_loss;
use crate::numerics::{Matrix, RngStream};

/// Residual tolerance of the dual bisection.
pub const DUAL_TOL: f64 = 1e-6;

/// Which view the adversary contrasts against.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Anchor {
    #[default]
    View1,
    View2,
    Original,
}

impl std::str::FromStr for Anchor {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "view1" => Ok(Anchor::View1),
            "view2" => Ok(Anchor::View2),
            "original" => Ok(Anchor::Original),
            other => Err(format!("unknown anchor {other:?} (expected view1, view2 or original)")),
        }
    }
}

impl std::fmt::Display for Anchor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Anchor::View1 => "view1",
            Anchor::View2 => "view2",
            Anchor::Original => "original",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    pub steps: usize,
    /// Structure step size.
    pub alpha: f64,
    /// Feature step size.
    pub beta: f64,
    /// Edge budget as a fraction of the clean graph's edge mass.
    #[serde(rename = "delta_A_fraction")]
    pub delta_a_fraction: f64,
    /// l∞ bound on feature perturbations.
    #[serde(rename = "delta_X")]
    pub delta_x: f64,
    pub anchor: Anchor,
    /// Bernoulli candidates drawn; the one with the highest loss is kept.
    pub discrete_samples: usize,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            steps: 5,
            alpha: 0.1,
            beta: 0.01,
            delta_a_fraction: 0.1,
            delta_x: 0.5,
            anchor: Anchor::View1,
            discrete_samples: 1,
        }
    }
}

impl AttackConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.alpha > 0.0, Domain, "attack alpha must be positive");
        ensure!(self.beta > 0.0, Domain, "attack beta must be positive");
        ensure!(self.delta_a_fraction >= 0.0, Domain, "delta_a_fraction must be non-negative");
        ensure!(self.delta_x >= 0.0, Domain, "delta_x must be non-negative");
        ensure!(self.discrete_samples >= 1, Domain, "discrete_samples must be at least 1");
        Ok(())
    }
}

/// Row-major enumeration of unordered pairs `(i, j)`, `i < j`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PairIndex {
    n: usize,
}

impl PairIndex {
    pub fn new(n: usize) -> Self {
        Self { n }
    }

    pub fn len(&self) -> usize {
        self.n * self.n.saturating_sub(1) / 2
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flat index of pair `(i, j)` with `i < j`.
    pub fn index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < j && j < self.n);
        i * (2 * self.n - i - 1) / 2 + (j - i - 1)
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n).flat_map(move |i| (i + 1..self.n).map(move |j| (i, j)))
    }

    /// Mirrors pair values into a symmetric matrix with zero diagonal.
    pub fn to_matrix(&self, values: &[f64]) -> Matrix {
        assert_eq!(values.len(), self.len());
        let mut m = Matrix::zeros(self.n, self.n);
        for (k, (i, j)) in self.iter().enumerate() {
            m[(i, j)] = values[k];
            m[(j, i)] = values[k];
        }
        m
    }

    /// Reads the upper triangle of a matrix in pair order.
    pub fn from_matrix(&self, m: &Matrix) -> Vec<f64> {
        self.iter().map(|(i, j)| m[(i, j)]).collect()
    }
}

/// Structure budget in unordered-pair units for a clean graph.
pub fn structure_budget(g: &Graph, fraction: f64) -> f64 {
    fraction * g.adjacency().sum() / 2.0
}

fn clipped_mass(z: &[f64], mu: f64) -> f64 {
    z.iter().map(|&x| (x - mu).clamp(0.0, 1.0)).sum()
}

/// Solves `Σ clip(zᵢ − μ, 0, 1) = B` for `μ > 0` by bisection on `[0, max z]`.
pub fn bisect_dual(z: &[f64], budget: f64) -> Result<f64> {
    ensure!(budget >= 0.0, Domain, "budget must be non-negative, got {budget}");
    let f = |mu: f64| clipped_mass(z, mu) - budget;
    ensure!(
        f(0.0) > 0.0,
        Domain,
        "clipped mass does not exceed the budget; no dual shift is needed"
    );
    let mut lo = 0.0;
    let mut hi = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    if !(f(hi) <= 0.0) {
        return Err(Error::Internal(format!("bisection bracket [0, {hi}] does not straddle the root")));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let v = f(mid);
        if v == 0.0 {
            return Ok(mid);
        }
        if v > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // `hi` keeps the mass at or below the budget.
    let r = f(hi);
    if r.abs() > DUAL_TOL {
        let rl = f(lo);
        if rl.abs() <= DUAL_TOL {
            return Ok(lo);
        }
        return Err(Error::Internal(format!("bisection residual {r} exceeds {DUAL_TOL}")));
    }
    Ok(hi)
}

/// Projection of relaxed pair variables onto `{ℓ ∈ [0,1] : Σℓ ≤ B}`.
/// Returns the projected vector and the dual shift `μ` (0 when inactive).
pub fn project_structure(z: &[f64], budget: f64) -> Result<(Vec<f64>, f64)> {
    ensure!(budget >= 0.0, Domain, "budget must be non-negative, got {budget}");
    if clipped_mass(z, 0.0) <= budget {
        return Ok((z.iter().map(|&x| x.clamp(0.0, 1.0)).collect(), 0.0));
    }
    if budget == 0.0 {
        let mu = z.iter().copied().fold(0.0, f64::max);
        return Ok((vec![0.0; z.len()], mu));
    }
    let mu = bisect_dual(z, budget)?;
    Ok((z.iter().map(|&x| (x - mu).clamp(0.0, 1.0)).collect(), mu))
}

/// Entry-wise clip to `[−δ_X, δ_X]`.
pub fn project_features(lx: &Matrix, delta_x: f64) -> Result<Matrix> {
    ensure!(delta_x >= 0.0, Domain, "delta_x must be non-negative, got {delta_x}");
    Ok(lx.map(|v| v.clamp(-delta_x, delta_x)))
}

/// Independent Bernoulli draw per pair variable.
pub fn sample_edge_perturbation(edge_vars: &[f64], rng: &mut RngStream) -> Result<Vec<bool>> {
    ensure!(
        edge_vars.iter().all(|p| (0.0..=1.0).contains(p)),
        Domain,
        "edge perturbation probabilities must lie in [0, 1]"
    );
    Ok(edge_vars.iter().map(|&p| rng.bernoulli_unchecked(p)).collect())
}

/// `A + C ∘ ℓ` for relaxed pair variables.
pub fn relaxed_adjacency(a: &Matrix, c: &Matrix, edge_vars: &[f64]) -> Matrix {
    let pairs = PairIndex::new(a.rows());
    let mut out = a.clone();
    for (k, (i, j)) in pairs.iter().enumerate() {
        let l = edge_vars[k];
        if l != 0.0 {
            let v = a[(i, j)] + c[(i, j)] * l;
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    out
}

/// Toggles flipped pairs and adds the feature perturbation.
pub fn apply_perturbation(g: &Graph, edge_flips: &[bool], lx: &Matrix) -> Result<Graph> {
    ensure!(g.is_binary(), Contract, "apply_perturbation expects a binary graph");
    let pairs = PairIndex::new(g.n());
    ensure!(
        edge_flips.len() == pairs.len(),
        Contract,
        "{} flip flags for {} pairs",
        edge_flips.len(),
        pairs.len()
    );
    ensure!(
        lx.shape() == g.features().shape(),
        Contract,
        "feature perturbation shape {:?} vs features {:?}",
        lx.shape(),
        g.features().shape()
    );
    let mut adj = g.adjacency().clone();
    for ((i, j), &flip) in pairs.iter().zip(edge_flips) {
        if flip {
            let v = 1.0 - adj[(i, j)];
            adj[(i, j)] = v;
            adj[(j, i)] = v;
        }
    }
    g.with_adjacency(adj)?.with_features(g.features().add(lx))
}

/// Relaxed perturbation variables.
#[derive(Clone, Debug, PartialEq)]
pub struct PerturbationState {
    pub edge_vars: Vec<f64>,
    pub feat_vars: Matrix,
}

/// Per-attack record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackDiagnostics {
    /// Relaxed loss at the start of each step.
    pub step_losses: Vec<f64>,
    /// Final dual shift of the structure projection (0 when inactive).
    pub mu: f64,
    /// Realized number of flipped pairs.
    pub flips: usize,
    /// Final `‖L_X‖_∞`.
    pub linf: f64,
    /// Structure budget `B` in pair units.
    pub budget: f64,
    /// `Σℓ` after each step.
    pub edge_mass: Vec<f64>,
    /// `‖L_X‖_∞` after each step.
    pub step_linf: Vec<f64>,
}

impl AttackDiagnostics {
    /// Whether every step respected both constraint sets.
    pub fn within_budget(&self, delta_x: f64) -> bool {
        self.edge_mass.iter().all(|&m| m <= self.budget + DUAL_TOL)
            && self.step_linf.iter().all(|&l| l <= delta_x)
    }
}

/// Adversarial view produced by [`pgd_attack`].
#[derive(Clone, Debug)]
pub struct AttackOutcome {
    pub graph: Graph,
    pub state: PerturbationState,
    pub diagnostics: AttackDiagnostics,
}

/// Runs the PGD adversary on `g` against `anchor` with frozen `params`.
pub fn pgd_attack(
    g: &Graph,
    anchor: &Graph,
    params: &EncoderParams,
    config: &AttackConfig,
    tau: f64,
    rng: &mut RngStream,
) -> Result<AttackOutcome> {
    config.validate()?;
    ensure!(g.is_binary(), Contract, "the attacked graph must be binary");
    ensure!(
        anchor.n() == g.n(),
        Contract,
        "anchor has {} nodes, attacked graph {}",
        anchor.n(),
        g.n()
    );
    let anchor_z = forward(anchor.adjacency(), anchor.features(), params)?.projection;
    let a = g.adjacency();
    let c = complement_mask(a)?;
    let pairs = PairIndex::new(g.n());
    let budget = structure_budget(g, config.delta_a_fraction);

    let mut state = PerturbationState {
        edge_vars: vec![0.0; pairs.len()],
        feat_vars: Matrix::zeros(g.n(), g.feature_dim()),
    };
    let mut diag = AttackDiagnostics {
        step_losses: Vec::with_capacity(config.steps),
        mu: 0.0,
        flips: 0,
        linf: 0.0,
        budget,
        edge_mass: Vec::with_capacity(config.steps),
        step_linf: Vec::with_capacity(config.steps),
    };

    for _ in 0..config.steps {
        let a_t = relaxed_adjacency(a, &c, &state.edge_vars);
        let x_t = g.features().add(&state.feat_vars);
        let fwd = forward(&a_t, &x_t, params)?;
        let out = contrastive_loss(&anchor_z, &fwd.projection, tau)?;
        diag.step_losses.push(out.loss);
        let grads = backward_from_projection(params, &fwd, &out.dz2, GradRequest::INPUTS)?;

        let ascended: Vec<f64> = pairs
            .iter()
            .zip(&state.edge_vars)
            .map(|((i, j), &l)| l + config.alpha * c[(i, j)] * grads.da_raw[(i, j)])
            .collect();
        let (edge_vars, mu) = project_structure(&ascended, budget)?;
        state.edge_vars = edge_vars;
        diag.mu = mu;

        let mut stepped = state.feat_vars.clone();
        stepped.add_scaled(&grads.dx.map(sign), config.beta);
        state.feat_vars = project_features(&stepped, config.delta_x)?;

        diag.edge_mass.push(state.edge_vars.iter().sum());
        diag.step_linf.push(state.feat_vars.max_abs());
    }

    let mut best: Option<(f64, Vec<bool>)> = None;
    for _ in 0..config.discrete_samples {
        let flips = sample_edge_perturbation(&state.edge_vars, rng)?;
        if config.discrete_samples == 1 {
            best = Some((0.0, flips));
            break;
        }
        let cand = apply_perturbation(g, &flips, &state.feat_vars)?;
        let z = forward(cand.adjacency(), cand.features(), params)?.projection;
        let loss = contrastive_loss(&anchor_z, &z, tau)?.loss;
        if best.as_ref().is_none_or(|(l, _)| loss > *l) {
            best = Some((loss, flips));
        }
    }
    let (_, flips) = best.expect("at least one discrete sample");
    diag.flips = flips.iter().filter(|&&f| f).count();
    diag.linf = state.feat_vars.max_abs();
    let graph = apply_perturbation(g, &flips, &state.feat_vars)?;
    Ok(AttackOutcome {
        graph,
        state,
        diagnostics: diag,
    })
}

#[inline]
fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::{init_params, Architecture};
    use crate::graph::generate_sbm;

    #[test]
    fn pair_index_round_trip() {
        let p = PairIndex::new(6);
        assert_eq!(p.len(), 15);
        for (k, (i, j)) in p.iter().enumerate() {
            assert_eq!(p.index(i, j), k);
        }
        let vals: Vec<f64> = (0..15).map(|k| k as f64 / 15.0).collect();
        let m = p.to_matrix(&vals);
        assert!(m.is_symmetric(0.0));
        assert_eq!(p.from_matrix(&m), vals);
    }

    #[test]
    fn bisect_examples() {
        let mu = bisect_dual(&[0.9, 0.9], 1.0).unwrap();
        assert!((mu - 0.4).abs() < 1e-6);
        let mu = bisect_dual(&[2.0, 2.0], 1.0).unwrap();
        assert!((mu - 1.5).abs() < 1e-6);
        assert!(bisect_dual(&[0.1, 0.1], 1.0).is_err());
    }

    #[test]
    fn project_structure_examples() {
        let (z, mu) = project_structure(&[0.2, 0.3], 1.0).unwrap();
        assert_eq!(z, vec![0.2, 0.3]);
        assert_eq!(mu, 0.0);
        let (z, _) = project_structure(&[0.9, 0.9], 1.0).unwrap();
        assert!((z[0] - 0.5).abs() < 1e-6 && (z[1] - 0.5).abs() < 1e-6);
        let (z, _) = project_structure(&[-0.5, 0.4, -2.0], 10.0).unwrap();
        assert_eq!(z, vec![0.0, 0.4, 0.0]);
        let (z, _) = project_structure(&[0.7, 3.0], 0.0).unwrap();
        assert_eq!(z, vec![0.0, 0.0]);
    }

    #[test]
    fn project_features_examples() {
        let m = Matrix::from_rows(&[vec![0.1, -0.2], vec![0.9, -3.0]]);
        let p = project_features(&m, 0.5).unwrap();
        assert_eq!(p, Matrix::from_rows(&[vec![0.1, -0.2], vec![0.5, -0.5]]));
        assert_eq!(project_features(&p, 0.5).unwrap(), p);
        assert!(project_features(&m, -1.0).is_err());
    }

    #[test]
    fn bernoulli_sampling() {
        let mut rng = RngStream::new(0);
        assert!(sample_edge_perturbation(&[0.0; 50], &mut rng).unwrap().iter().all(|&b| !b));
        assert!(sample_edge_perturbation(&[1.0; 50], &mut rng).unwrap().iter().all(|&b| b));
        let hits = (0..10_000)
            .filter(|_| sample_edge_perturbation(&[0.3], &mut rng).unwrap()[0])
            .count();
        let mean = hits as f64 / 10_000.0;
        assert!((0.28..=0.32).contains(&mean), "{mean}");
        assert!(sample_edge_perturbation(&[1.2], &mut rng).is_err());
    }

    #[test]
    fn apply_perturbation_examples() {
        let x = Matrix::filled(2, 1, 1.0);
        let edge = Graph::from_edges(2, &[(0, 1)], x.clone(), None).unwrap();
        let empty = Graph::from_edges(2, &[], x.clone(), None).unwrap();
        let zero = Matrix::zeros(2, 1);
        assert_eq!(apply_perturbation(&edge, &[false], &zero).unwrap(), edge);
        assert_eq!(apply_perturbation(&edge, &[true], &zero).unwrap().edge_count(), 0);
        let added = apply_perturbation(&empty, &[true], &zero).unwrap();
        assert_eq!(added.adjacency(), &Matrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]));
        let lx = Matrix::from_rows(&[vec![0.25], vec![-0.5]]);
        let moved = apply_perturbation(&edge, &[false], &lx).unwrap();
        assert_eq!(moved.features(), &Matrix::from_rows(&[vec![1.25], vec![0.5]]));
    }

    fn fixture(seed: u64) -> (Graph, EncoderParams) {
        let mut rng = RngStream::new(seed);
        let g = generate_sbm(&[3, 3], 0.8, 0.2, 4, &mut rng).unwrap();
        let p = init_params(Architecture::new(4, 32), &mut rng).unwrap();
        (g, p)
    }

    #[test]
    fn zero_steps_returns_clean_graph() {
        let (g, p) = fixture(1);
        let cfg = AttackConfig {
            steps: 0,
            ..AttackConfig::default()
        };
        let out = pgd_attack(&g, &g, &p, &cfg, 0.5, &mut RngStream::new(0)).unwrap();
        assert_eq!(out.graph, g);
        assert!(out.diagnostics.step_losses.is_empty());
    }

    #[test]
    fn zero_budgets_return_clean_graph() {
        let (g, p) = fixture(2);
        let cfg = AttackConfig {
            steps: 4,
            delta_a_fraction: 0.0,
            delta_x: 0.0,
            alpha: 10.0,
            ..AttackConfig::default()
        };
        let out = pgd_attack(&g, &g, &p, &cfg, 0.5, &mut RngStream::new(0)).unwrap();
        assert_eq!(out.graph, g);
        assert_eq!(out.diagnostics.flips, 0);
    }

    #[test]
    fn budgets_hold_after_every_step() {
        for seed in 0..5 {
            let (g, p) = fixture(10 + seed);
            let cfg = AttackConfig {
                steps: 6,
                alpha: 50.0,
                beta: 0.2,
                delta_a_fraction: 0.3,
                delta_x: 0.3,
                ..AttackConfig::default()
            };
            let out = pgd_attack(&g, &g, &p, &cfg, 0.5, &mut RngStream::new(seed)).unwrap();
            let d = &out.diagnostics;
            assert_eq!(d.edge_mass.len(), 6);
            assert!(d.within_budget(cfg.delta_x), "{d:?}");
            assert!(out.state.edge_vars.iter().all(|v| (0.0..=1.0).contains(v)));
            assert!(out.graph.is_binary());
            assert!(out.graph.adjacency().is_symmetric(0.0));
        }
    }

    #[test]
    fn feature_step_ascends_loss() {
        let mut rng = RngStream::new(42);
        let g = generate_sbm(&[3, 3], 0.7, 0.2, 5, &mut rng).unwrap();
        let p = init_params(Architecture::new(5, 8), &mut rng).unwrap();
        let view = crate::graph::augment(&g, 0.3, 0.2, &mut rng).unwrap().graph;
        let anchor_z = forward(view.adjacency(), view.features(), &p).unwrap().projection;
        let clean = contrastive_loss(
            &anchor_z,
            &forward(g.adjacency(), g.features(), &p).unwrap().projection,
            0.5,
        )
        .unwrap()
        .loss;
        // α must be positive, so a negligible structure step stands in for α = 0.
        let cfg = AttackConfig {
            steps: 1,
            alpha: 1e-300,
            beta: 0.01,
            ..AttackConfig::default()
        };
        let out = pgd_attack(&g, &view, &p, &cfg, 0.5, &mut RngStream::new(1)).unwrap();
        let x_adv = g.features().add(&out.state.feat_vars);
        let relaxed = contrastive_loss(
            &anchor_z,
            &forward(g.adjacency(), &x_adv, &p).unwrap().projection,
            0.5,
        )
        .unwrap()
        .loss;
        assert!(relaxed >= clean, "{relaxed} < {clean}");
    }

    #[test]
    fn anchor_parses() {
        assert_eq!("view2".parse::<Anchor>().unwrap(), Anchor::View2);
        assert!("view3".parse::<Anchor>().is_err());
        assert_eq!(Anchor::Original.to_string(), "original");
    }
}
