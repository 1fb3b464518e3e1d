//! Training configuration and its flat `key = value` file format.
//!
//! One key per line, `#` starts a comment, blank lines are ignored. Attack
//! settings use an `attack.` prefix. Unknown keys, repeated keys and values
//! that fail to parse are errors naming the key.
//!
//! ```text
//! tau = 0.4
//! eps1 = 1.5
//! attack.steps = 5
//! attack.anchor = view1
//! ```

use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::attack::{Anchor, AttackConfig};
use crate::error::{ensure, Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Contrastive temperature.
    pub tau: f64,
    /// Weight of the adversarial contrastive term; grows by `gamma` every `period_T` epochs.
    pub eps1: f64,
    /// Weight of the information-regularization hinge.
    pub eps2: f64,
    pub gamma: f64,
    #[serde(rename = "period_T")]
    pub period_t: usize,
    pub subgraph_size: usize,
    pub p_edge_1: f64,
    pub p_feat_1: f64,
    pub p_edge_2: f64,
    pub p_feat_2: f64,
    pub learning_rate: f64,
    pub weight_decay: f64,
    /// Number of subgraph iterations.
    pub epochs: usize,
    pub seed: u64,
    pub hidden_dim: usize,
    pub embed_dim: usize,
    pub proj_hidden_dim: usize,
    /// Write an intermediate checkpoint every this many epochs; 0 disables.
    pub checkpoint_every: usize,
    pub attack: AttackConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            tau: 0.4,
            eps1: 1.0,
            eps2: 1.0,
            gamma: 1.1,
            period_t: 20,
            subgraph_size: 500,
            p_edge_1: 0.2,
            p_feat_1: 0.3,
            p_edge_2: 0.4,
            p_feat_2: 0.4,
            learning_rate: 1e-3,
            weight_decay: 1e-5,
            epochs: 200,
            seed: 0,
            hidden_dim: 128,
            embed_dim: 128,
            proj_hidden_dim: 128,
            checkpoint_every: 0,
            attack: AttackConfig::default(),
        }
    }
}

/// Every addressable key with a one-line description, in file order.
pub const KEYS: &[(&str, &str)] = &[
    ("tau", "contrastive temperature (> 0)"),
    ("eps1", "adversarial term weight (>= 0)"),
    ("eps2", "information-regularization weight (>= 0)"),
    ("gamma", "curriculum multiplier for eps1 (> 0)"),
    ("period_T", "epochs between curriculum updates (>= 1)"),
    ("subgraph_size", "nodes per sampled subgraph (>= 1)"),
    ("p_edge_1", "edge drop rate of view 1"),
    ("p_feat_1", "feature mask rate of view 1"),
    ("p_edge_2", "edge drop rate of view 2"),
    ("p_feat_2", "feature mask rate of view 2"),
    ("learning_rate", "optimizer step size (> 0)"),
    ("weight_decay", "decoupled weight decay (>= 0)"),
    ("epochs", "training iterations"),
    ("seed", "root random seed"),
    ("hidden_dim", "first GCN layer width"),
    ("embed_dim", "embedding width"),
    ("proj_hidden_dim", "projection head hidden width"),
    ("checkpoint_every", "intermediate checkpoint period in epochs (0 = off)"),
    ("attack.steps", "PGD iterations"),
    ("attack.alpha", "structure step size (> 0)"),
    ("attack.beta", "feature step size (> 0)"),
    ("attack.delta_A_fraction", "edge budget as a fraction of the edge count"),
    ("attack.delta_X", "l-infinity feature budget"),
    ("attack.anchor", "view1, view2 or original"),
    ("attack.discrete_samples", "Bernoulli candidates per attack (>= 1)"),
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value.parse::<T>().map_err(|e| Error::Config {
        key: key.to_string(),
        message: format!("cannot parse {value:?}: {e}"),
    })
}

impl TrainConfig {
    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "tau" => self.tau = parse(key, v)?,
            "eps1" => self.eps1 = parse(key, v)?,
            "eps2" => self.eps2 = parse(key, v)?,
            "gamma" => self.gamma = parse(key, v)?,
            "period_T" => self.period_t = parse(key, v)?,
            "subgraph_size" => self.subgraph_size = parse(key, v)?,
            "p_edge_1" => self.p_edge_1 = parse(key, v)?,
            "p_feat_1" => self.p_feat_1 = parse(key, v)?,
            "p_edge_2" => self.p_edge_2 = parse(key, v)?,
            "p_feat_2" => self.p_feat_2 = parse(key, v)?,
            "learning_rate" => self.learning_rate = parse(key, v)?,
            "weight_decay" => self.weight_decay = parse(key, v)?,
            "epochs" => self.epochs = parse(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            "hidden_dim" => self.hidden_dim = parse(key, v)?,
            "embed_dim" => self.embed_dim = parse(key, v)?,
            "proj_hidden_dim" => self.proj_hidden_dim = parse(key, v)?,
            "checkpoint_every" => self.checkpoint_every = parse(key, v)?,
            "attack.steps" => self.attack.steps = parse(key, v)?,
            "attack.alpha" => self.attack.alpha = parse(key, v)?,
            "attack.beta" => self.attack.beta = parse(key, v)?,
            "attack.delta_A_fraction" => self.attack.delta_a_fraction = parse(key, v)?,
            "attack.delta_X" => self.attack.delta_x = parse(key, v)?,
            "attack.anchor" => self.attack.anchor = parse::<Anchor>(key, v)?,
            "attack.discrete_samples" => self.attack.discrete_samples = parse(key, v)?,
            _ => {
                return Err(Error::Config {
                    key: key.to_string(),
                    message: "unknown key".into(),
                })
            }
        }
        Ok(())
    }

    /// Parses a config file body on top of the defaults.
    pub fn parse_str(text: &str) -> Result<TrainConfig> {
        let mut cfg = TrainConfig::default();
        let mut seen = std::collections::BTreeSet::new();
        for raw in text.lines() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Config {
                key: line.to_string(),
                message: "expected `key = value`".into(),
            })?;
            let key = key.trim();
            if !seen.insert(key.to_string()) {
                return Err(Error::Config {
                    key: key.to_string(),
                    message: "key given more than once".into(),
                });
            }
            cfg.set(key, value)?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<TrainConfig> {
        Self::parse_str(&std::fs::read_to_string(path)?)
    }

    /// Applies `key=value` overrides in order.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<()> {
        for o in overrides {
            let o = o.as_ref();
            let (k, v) = o.split_once('=').ok_or_else(|| Error::Config {
                key: o.to_string(),
                message: "override must look like key=value".into(),
            })?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    /// Value of a key as it would be written to a config file.
    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "tau" => self.tau.to_string(),
            "eps1" => self.eps1.to_string(),
            "eps2" => self.eps2.to_string(),
            "gamma" => self.gamma.to_string(),
            "period_T" => self.period_t.to_string(),
            "subgraph_size" => self.subgraph_size.to_string(),
            "p_edge_1" => self.p_edge_1.to_string(),
            "p_feat_1" => self.p_feat_1.to_string(),
            "p_edge_2" => self.p_edge_2.to_string(),
            "p_feat_2" => self.p_feat_2.to_string(),
            "learning_rate" => self.learning_rate.to_string(),
            "weight_decay" => self.weight_decay.to_string(),
            "epochs" => self.epochs.to_string(),
            "seed" => self.seed.to_string(),
            "hidden_dim" => self.hidden_dim.to_string(),
            "embed_dim" => self.embed_dim.to_string(),
            "proj_hidden_dim" => self.proj_hidden_dim.to_string(),
            "checkpoint_every" => self.checkpoint_every.to_string(),
            "attack.steps" => self.attack.steps.to_string(),
            "attack.alpha" => self.attack.alpha.to_string(),
            "attack.beta" => self.attack.beta.to_string(),
            "attack.delta_A_fraction" => self.attack.delta_a_fraction.to_string(),
            "attack.delta_X" => self.attack.delta_x.to_string(),
            "attack.anchor" => self.attack.anchor.to_string(),
            "attack.discrete_samples" => self.attack.discrete_samples.to_string(),
            _ => return None,
        })
    }

    /// Fully materialized config in file format; parses back to `self`.
    pub fn to_config_string(&self) -> String {
        let mut out = String::new();
        for (key, _) in KEYS {
            out.push_str(key);
            out.push_str(" = ");
            out.push_str(&self.get(key).expect("every listed key is readable"));
            out.push('\n');
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.tau > 0.0, Domain, "tau must be positive, got {}", self.tau);
        ensure!(self.eps1 >= 0.0, Domain, "eps1 must be non-negative, got {}", self.eps1);
        ensure!(self.eps2 >= 0.0, Domain, "eps2 must be non-negative, got {}", self.eps2);
        ensure!(self.gamma > 0.0, Domain, "gamma must be positive, got {}", self.gamma);
        ensure!(self.period_t >= 1, Domain, "period_T must be at least 1");
        ensure!(self.subgraph_size >= 1, Domain, "subgraph_size must be at least 1");
        for (name, p) in [
            ("p_edge_1", self.p_edge_1),
            ("p_feat_1", self.p_feat_1),
            ("p_edge_2", self.p_edge_2),
            ("p_feat_2", self.p_feat_2),
        ] {
            ensure!((0.0..=1.0).contains(&p), Domain, "{name} must lie in [0, 1], got {p}");
        }
        ensure!(self.learning_rate > 0.0, Domain, "learning_rate must be positive");
        ensure!(self.weight_decay >= 0.0, Domain, "weight_decay must be non-negative");
        ensure!(
            self.hidden_dim >= 1 && self.embed_dim >= 1 && self.proj_hidden_dim >= 1,
            Domain,
            "layer widths must be at least 1"
        );
        self.attack.validate()
    }
}
