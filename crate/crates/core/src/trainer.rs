//! Training loop: per epoch, sample a subgraph, build two augmented views and
//! an adversarial view, encode all four with shared parameters, and take one
//! optimizer step on
//!
//! ```text
//! L = L_con(Z1, Z2) + ε₁ L_con(Z1, Z_adv) + ε₂ L_I(Z1, Z2, Z0)
//! ```
//!
//! `Z0` is the projection of the clean subgraph. `ε₁` is multiplied by `γ`
//! after every epoch `k` with `(k + 1) mod T = 0`.
//!
//! Randomness is drawn from sub-streams of the config seed: `init` for the
//! parameters and `subgraph`, `augment`, `attack` indexed by epoch, so any
//! epoch can be replayed on its own.

use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use crate::config::TrainConfig;

use crate::attack::{pgd_attack, Anchor, AttackDiagnostics};
use crate::encoder::{
    backward_from_projection, encode, forward, init_params, Architecture, EncoderParams,
    GradRequest,
};
use crate::error::{ensure, Error, Result};
use crate::graph::{augment, sample_subgraph, Graph};
use crate::loss::{total_loss, LossBreakdown};
use crate::numerics::{Matrix, RngStream};

/// A total loss above this is treated as divergence.
pub const COLLAPSE_THRESHOLD: f64 = 1e4;

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// `γ·ε₁` when `(epoch_index + 1) mod T = 0`, else `ε₁`.
pub fn curriculum_update(eps1: f64, epoch_index: usize, gamma: f64, period_t: usize) -> f64 {
    if period_t > 0 && (epoch_index + 1).is_multiple_of(period_t) {
        gamma * eps1
    } else {
        eps1
    }
}

/// Moment accumulators of the adaptive-moment optimizer.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub first: EncoderParams,
    pub second: EncoderParams,
    pub step: u64,
}

impl OptimizerState {
    pub fn new(params: &EncoderParams) -> Self {
        Self {
            first: params.zeros_like(),
            second: params.zeros_like(),
            step: 0,
        }
    }
}

/// One bias-corrected adaptive-moment step with decoupled weight decay,
/// applied in place.
pub fn optimizer_step(
    params: &mut EncoderParams,
    grads: &EncoderParams,
    state: &mut OptimizerState,
    learning_rate: f64,
    weight_decay: f64,
) -> Result<()> {
    ensure!(
        grads.architecture() == params.architecture()
            && state.first.architecture() == params.architecture()
            && state.second.architecture() == params.architecture(),
        Contract,
        "optimizer shapes do not match the parameters"
    );
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - BETA1.powi(t);
    let c2 = 1.0 - BETA2.powi(t);
    let g = grads.tensors();
    let m = state.first.tensors_mut();
    let v = state.second.tensors_mut();
    let p = params.tensors_mut();
    for (((p, g), m), v) in p.into_iter().zip(g).zip(m).zip(v) {
        for k in 0..p.len() {
            m[k] = BETA1 * m[k] + (1.0 - BETA1) * g[k];
            v[k] = BETA2 * v[k] + (1.0 - BETA2) * g[k] * g[k];
            let m_hat = m[k] / c1;
            let v_hat = v[k] / c2;
            p[k] -= learning_rate * (m_hat / (v_hat.sqrt() + ADAM_EPS) + weight_decay * p[k]);
        }
    }
    Ok(())
}

/// What happened in one epoch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// `ε₁` used in this epoch's loss.
    pub eps1: f64,
    pub subgraph_nodes: usize,
    pub loss: LossBreakdown,
    /// Absent when the adversarial term is off (`ε₁ = 0`).
    pub attack: Option<AttackDiagnostics>,
    /// Kept out of the serialized log so that logs are reproducible.
    #[serde(skip)]
    pub wall_seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub records: Vec<EpochRecord>,
}

impl TrainingLog {
    /// One JSON object per line.
    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn from_jsonl(text: &str) -> Result<TrainingLog> {
        let records = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<std::result::Result<Vec<EpochRecord>, _>>()?;
        Ok(TrainingLog { records })
    }
}

/// Encoder shape implied by a config and an input width.
pub fn architecture_for(config: &TrainConfig, input_dim: usize) -> Architecture {
    Architecture {
        input_dim,
        hidden_dim: config.hidden_dim,
        embed_dim: config.embed_dim,
        proj_hidden_dim: config.proj_hidden_dim,
    }
}

/// Trains from freshly initialized parameters.
pub fn train(g: &Graph, config: &TrainConfig) -> Result<(EncoderParams, TrainingLog)> {
    train_with(g, config, |_, _| Ok(()))
}

/// Like [`train`], calling `on_epoch` after every completed epoch with the
/// record and the updated parameters (for streaming logs and checkpoints).
pub fn train_with<F>(g: &Graph, config: &TrainConfig, mut on_epoch: F) -> Result<(EncoderParams, TrainingLog)>
where
    F: FnMut(&EpochRecord, &EncoderParams) -> Result<()>,
{
    config.validate()?;
    ensure!(g.is_binary(), Contract, "training expects a binary graph");
    let root = RngStream::new(config.seed);
    let mut params = init_params(architecture_for(config, g.feature_dim()), &mut root.substream("init"))?;
    let mut opt = OptimizerState::new(&params);
    let mut eps1 = config.eps1;
    let mut log = TrainingLog::default();
    let m = config.subgraph_size.min(g.n());

    for epoch in 0..config.epochs {
        let started = Instant::now();
        let collapse = |detail: String| Error::Collapse { epoch, detail };

        let sub = sample_subgraph(g, m, &mut root.substream_indexed("subgraph", epoch as u64))?.graph;
        let mut aug_rng = root.substream_indexed("augment", epoch as u64);
        let v1 = augment(&sub, config.p_edge_1, config.p_feat_1, &mut aug_rng)?.graph;
        let v2 = augment(&sub, config.p_edge_2, config.p_feat_2, &mut aug_rng)?.graph;

        let adversarial = if eps1 > 0.0 {
            let anchor = match config.attack.anchor {
                Anchor::View1 => &v1,
                Anchor::View2 => &v2,
                Anchor::Original => &sub,
            };
            let before = params.checksum();
            let outcome = pgd_attack(
                &sub,
                anchor,
                &params,
                &config.attack,
                config.tau,
                &mut root.substream_indexed("attack", epoch as u64),
            )
            .map_err(|e| numeric_to_collapse(e, epoch))?;
            if params.checksum() != before {
                return Err(Error::Internal(format!("parameters changed during the attack at epoch {epoch}")));
            }
            Some(outcome)
        } else {
            None
        };

        let f0 = forward(sub.adjacency(), sub.features(), &params)?;
        let f1 = forward(v1.adjacency(), v1.features(), &params)?;
        let f2 = forward(v2.adjacency(), v2.features(), &params)?;
        let f_adv = match &adversarial {
            Some(o) => Some(forward(o.graph.adjacency(), o.graph.features(), &params)?),
            None => None,
        };
        let (loss, dz) = total_loss(
            &f1.projection,
            &f2.projection,
            f_adv.as_ref().map(|f| &f.projection),
            &f0.projection,
            config.tau,
            eps1,
            config.eps2,
        )
        .map_err(|e| match e {
            Error::Domain(msg) => collapse(format!("degenerate embeddings: {msg}")),
            other => other,
        })?;
        if !loss.total.is_finite() || loss.total > COLLAPSE_THRESHOLD {
            return Err(collapse(format!("total loss {} ({loss:?})", loss.total)));
        }

        let mut grads = params.zeros_like();
        for (f, d) in [(&f0, &dz.dz0), (&f1, &dz.dz1), (&f2, &dz.dz2)] {
            grads.add_scaled(&backward_from_projection(&params, f, d, GradRequest::PARAMS)?.params, 1.0);
        }
        if let (Some(f), Some(d)) = (&f_adv, &dz.dz_adv) {
            grads.add_scaled(&backward_from_projection(&params, f, d, GradRequest::PARAMS)?.params, 1.0);
        }
        if grads.tensors().iter().any(|t| t.iter().any(|v| !v.is_finite())) {
            return Err(collapse("non-finite parameter gradient".into()));
        }
        optimizer_step(&mut params, &grads, &mut opt, config.learning_rate, config.weight_decay)?;

        let record = EpochRecord {
            epoch,
            eps1,
            subgraph_nodes: sub.n(),
            loss,
            attack: adversarial.map(|o| o.diagnostics),
            wall_seconds: started.elapsed().as_secs_f64(),
        };
        log::debug!("epoch {epoch}: total {:.6} eps1 {eps1:.4}", loss.total);
        on_epoch(&record, &params)?;
        log.records.push(record);
        eps1 = curriculum_update(eps1, epoch, config.gamma, config.period_t);
    }
    Ok((params, log))
}

fn numeric_to_collapse(e: Error, epoch: usize) -> Error {
    match e {
        Error::Domain(msg) | Error::Numeric(msg) => Error::Collapse {
            epoch,
            detail: format!("attack failed: {msg}"),
        },
        other => other,
    }
}

/// Embeddings `H = f(A, X)` of the full graph.
pub fn embed(g: &Graph, params: &EncoderParams) -> Result<Matrix> {
    Ok(encode(g.adjacency(), g.features(), params)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::Architecture;
    use crate::graph::generate_sbm;

    #[test]
    fn curriculum_examples() {
        let mut e = 1.0;
        for k in 0..40 {
            e = curriculum_update(e, k, 1.1, 20);
        }
        assert!((e - 1.21).abs() < 1e-12);
        let mut e = 2.0;
        for k in 0..100 {
            e = curriculum_update(e, k, 1.0, 7);
        }
        assert_eq!(e, 2.0);
        let mut e = 0.5;
        for k in 0..10 {
            e = curriculum_update(e, k, 1.1, 50);
        }
        assert_eq!(e, 0.5);
    }

    fn small_params() -> EncoderParams {
        crate::encoder::init_params(Architecture::new(3, 4), &mut RngStream::new(3)).unwrap()
    }

    #[test]
    fn zero_gradient_zero_decay_is_a_no_op() {
        let mut p = small_params();
        let orig = p.clone();
        let mut st = OptimizerState::new(&p);
        optimizer_step(&mut p, &orig.zeros_like(), &mut st, 1e-3, 0.0).unwrap();
        assert_eq!(p, orig);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = small_params();
        let orig = p.clone();
        let mut ones = p.zeros_like();
        for t in ones.tensors_mut() {
            t.fill(1.0);
        }
        let mut st = OptimizerState::new(&p);
        optimizer_step(&mut p, &ones, &mut st, 1e-3, 0.0).unwrap();
        for (a, b) in p.tensors().iter().zip(orig.tensors()) {
            for (x, y) in a.iter().zip(b.iter()) {
                assert!(((y - x) - 1e-3).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn optimizer_rejects_shape_mismatch() {
        let mut p = small_params();
        let other = EncoderParams::zeros(Architecture::new(3, 5));
        let mut st = OptimizerState::new(&p);
        assert!(matches!(
            optimizer_step(&mut p, &other, &mut st, 1e-3, 0.0),
            Err(Error::Contract(_))
        ));
    }

    fn tiny_config() -> TrainConfig {
        let mut c = TrainConfig::default();
        c.apply_overrides(&[
            "epochs=6",
            "subgraph_size=16",
            "hidden_dim=16",
            "embed_dim=16",
            "proj_hidden_dim=16",
            "period_T=2",
            "attack.steps=2",
        ])
        .unwrap();
        c
    }

    fn tiny_graph() -> Graph {
        generate_sbm(&[10, 10], 0.4, 0.05, 6, &mut RngStream::new(11)).unwrap()
    }

    #[test]
    fn training_is_deterministic_and_logs_every_epoch() {
        let g = tiny_graph();
        let cfg = tiny_config();
        let (p1, l1) = train(&g, &cfg).unwrap();
        let (p2, l2) = train(&g, &cfg).unwrap();
        assert_eq!(p1, p2);
        assert_eq!(l1.to_jsonl().unwrap(), l2.to_jsonl().unwrap());
        assert_eq!(l1.records.len(), 6);
        for r in &l1.records {
            assert!(r.loss.arithmetic_residual() <= 1e-12);
            assert_eq!(r.subgraph_nodes, 16);
            assert!(r.attack.as_ref().unwrap().within_budget(cfg.attack.delta_x));
        }
        let eps: Vec<f64> = l1.records.iter().map(|r| r.eps1).collect();
        assert_eq!(eps[0], eps[1]);
        assert_eq!(eps[2], 1.1 * eps[0]);
        let back = TrainingLog::from_jsonl(&l1.to_jsonl().unwrap()).unwrap();
        assert_eq!(back.records.len(), 6);
    }

    #[test]
    fn zero_coefficients_skip_the_attack() {
        let g = tiny_graph();
        let mut cfg = tiny_config();
        cfg.apply_overrides(&["eps1=0", "eps2=0"]).unwrap();
        let (_, log) = train(&g, &cfg).unwrap();
        for r in &log.records {
            assert!(r.attack.is_none());
            assert_eq!(r.loss.total, r.loss.contrastive);
        }
    }

    #[test]
    fn divergence_is_reported_as_collapse() {
        let g = tiny_graph();
        let mut cfg = tiny_config();
        // A tiny temperature pushes the loss past the collapse threshold.
        cfg.apply_overrides(&["tau=1e-5"]).unwrap();
        match train(&g, &cfg) {
            Err(Error::Collapse { epoch, .. }) => assert_eq!(epoch, 0),
            other => panic!("expected collapse, got {:?}", other.map(|(_, l)| l.records.len())),
        }
    }

    #[test]
    fn embed_has_full_graph_rows() {
        let g = tiny_graph();
        let (p, _) = train(&g, &tiny_config()).unwrap();
        let h = embed(&g, &p).unwrap();
        assert_eq!(h.shape(), (20, 16));
    }
}
