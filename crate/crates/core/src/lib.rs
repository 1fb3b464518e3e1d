//! Adversarial graph contrastive learning.
//!
//! A two-layer GCN encoder is trained to agree across two randomly augmented
//! views of a sampled subgraph, against a third view produced by a projected
//! gradient adversary over edges and features, with a hinge penalty that keeps
//! view-to-view similarity below the view-to-original similarities.
//!
//! Modules, bottom-up:
//! - [`numerics`]: dense matrices, seeded random streams, finite differences.
//! - [`graph`]: graph model, normalization, augmentation, sampling, degradation.
//! - [`encoder`]: GCN + projection head with hand-written reverse mode.
//! - [`loss`]: contrastive loss, information regularization, combined objective.
//! - [`attack`]: budgeted PGD adversary over structure and features.
//! - [`trainer`]: the training loop, optimizer and curriculum.
//! - [`eval`]: splits, logistic probe, degradation study, random poisoning.
//! - [`config`]: flat key-value configuration.

pub mod attack;
pub mod config;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod graph;
pub mod loss;
pub mod numerics;
pub mod trainer;

pub use error::{Error, Result};
pub use graph::Graph;
pub use numerics::{Matrix, RngStream};
