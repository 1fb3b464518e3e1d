//! Command-line front end: `train`, `embed`, `probe`, `degrade`, `poison`.
//!
//! Every command writes its artifacts plus a `manifest.json` into `--out`.
//! The manifest records the fully resolved configuration, the command
//! arguments, SHA-256 digests of every input and the tool version, and holds
//! no timestamps, so identical invocations produce identical bytes.
//!
//! Failures print a single line on standard error,
//! `ariel-error code=<n> kind=<usage|data|numeric>: <reason>`, and exit with
//! code 1 (usage), 2 (data) or 3 (numeric failure such as collapse).

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

use ariel::encoder::{load_checkpoint, save_checkpoint};
use ariel::eval::{evaluate_embeddings, random_poison, vulnerability_study, write_vulnerability_csv, PoisonScope};
use ariel::graph::{load_graph, read_labels, read_table, save_graph, EDGE_FILE, FEATURE_FILE, LABEL_FILE, SIDECAR_FILE};
use ariel::trainer::{embed, train_with, TrainConfig};
use ariel::{Graph, Matrix, RngStream};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const LOG_FILE: &str = "training_log.jsonl";
pub const EMBEDDING_FILE: &str = "embeddings.txt";
pub const METRICS_FILE: &str = "metrics.json";
pub const VULNERABILITY_FILE: &str = "vulnerability.csv";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Data(_) => "data",
            CliError::Numeric(_) => "numeric",
        }
    }

    /// The single stderr line for this failure.
    pub fn line(&self) -> String {
        let reason = self.to_string().replace(['\n', '\r'], " ");
        format!("ariel-error code={} kind={}: {reason}", self.code(), self.kind())
    }
}

impl From<ariel::Error> for CliError {
    fn from(e: ariel::Error) -> Self {
        use ariel::Error as E;
        let msg = e.to_string();
        match e {
            E::Config { .. } => CliError::Usage(msg),
            E::Collapse { .. } | E::Numeric(_) | E::Internal(_) => CliError::Numeric(msg),
            E::Domain(_) | E::Contract(_) | E::Ingestion { .. } | E::Io(_) | E::Json(_) => CliError::Data(msg),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "ariel", version, about = "Adversarial graph contrastive learning")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Graph input: a directory in the exchange format, or explicit files.
#[derive(Debug, Clone, Args)]
pub struct GraphArgs {
    /// Directory holding edges.txt, features.txt and optionally labels.txt and graph.json.
    #[arg(long, conflicts_with_all = ["edges", "features"])]
    pub graph: Option<PathBuf>,
    /// Edge list, one `u v` pair per line.
    #[arg(long, requires = "features")]
    pub edges: Option<PathBuf>,
    /// Feature table, one row of reals per node.
    #[arg(long, requires = "edges")]
    pub features: Option<PathBuf>,
    /// One integer label per node (-1 = unlabeled).
    #[arg(long, conflicts_with = "graph")]
    pub labels: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ConfigArgs {
    /// Flat `key = value` config file; unset keys take their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override a config key; repeatable, applied after the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train an encoder; writes checkpoint.bin and training_log.jsonl.
    Train {
        #[command(flatten)]
        graph: GraphArgs,
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Encode the full graph with a checkpoint; writes embeddings.txt.
    Embed {
        #[command(flatten)]
        graph: GraphArgs,
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a logistic probe over random 10/10/80 splits; writes metrics.json.
    Probe {
        /// Embedding table (as written by `embed`).
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long, default_value_t = 20)]
        splits: usize,
        #[arg(long, default_value_t = ariel::eval::PROBE_LAMBDA)]
        lambda: f64,
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Embedding stability under progressive degradation; writes vulnerability.csv.
    Degrade {
        #[command(flatten)]
        graph: GraphArgs,
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Per-step drop and mask probability.
        #[arg(long, default_value_t = 0.03)]
        p: f64,
        #[arg(long, default_value_t = 60)]
        steps: usize,
        /// Compare projection-head outputs instead of embeddings.
        #[arg(long)]
        projected: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a randomly poisoned copy of a graph in the exchange format.
    Poison {
        #[command(flatten)]
        graph: GraphArgs,
        #[command(flatten)]
        config: ConfigArgs,
        /// Flipped pairs as a fraction of the existing edge count.
        #[arg(long, default_value_t = 0.2)]
        edge_fraction: f64,
        /// Fraction of feature dimensions zeroed.
        #[arg(long, default_value_t = 0.2)]
        feat_fraction: f64,
        /// Only delete existing edges instead of flipping arbitrary pairs.
        #[arg(long)]
        edges_only: bool,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Digest of one input file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

/// Everything needed to reproduce a command's outputs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub config: TrainConfig,
    pub arguments: BTreeMap<String, String>,
    pub inputs: BTreeMap<String, InputDigest>,
    pub outputs: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn new(command: &str, config: &TrainConfig) -> Self {
        Self {
            tool: "ariel".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            seed: config.seed,
            config: config.clone(),
            arguments: BTreeMap::new(),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        }
    }

    pub fn input(&mut self, role: &str, path: &Path) -> CliResult<()> {
        let bytes = fs::read(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        self.inputs.insert(
            role.into(),
            InputDigest {
                path: path.display().to_string(),
                sha256: format!("{:x}", Sha256::digest(&bytes)),
            },
        );
        Ok(())
    }

    pub fn argument(&mut self, key: &str, value: impl ToString) {
        self.arguments.insert(key.into(), value.to_string());
    }

    pub fn output(&mut self, role: &str, path: &Path) {
        self.outputs.insert(role.into(), path.display().to_string());
    }

    pub fn write(&mut self, out: &Path) -> CliResult<()> {
        let path = out.join(MANIFEST_FILE);
        self.output("manifest", &path);
        fs::write(&path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }
}

/// Defaults, then the config file, then `--set` overrides; validated.
pub fn resolve_config(path: Option<&Path>, overrides: &[String]) -> CliResult<TrainConfig> {
    let mut cfg = match path {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| CliError::Usage(format!("config {}: {e}", p.display())))?;
            TrainConfig::parse_str(&text)?
        }
        None => TrainConfig::default(),
    };
    cfg.apply_overrides(overrides)?;
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(cfg)
}

fn resolve(args: &ConfigArgs, command: &str) -> CliResult<(TrainConfig, RunManifest)> {
    let cfg = resolve_config(args.config.as_deref(), &args.set)?;
    let mut manifest = RunManifest::new(command, &cfg);
    if let Some(p) = &args.config {
        manifest.input("config", p)?;
    }
    Ok((cfg, manifest))
}

fn load_input_graph(args: &GraphArgs, manifest: &mut RunManifest) -> CliResult<Graph> {
    let (edges, features, labels, sidecar) = match (&args.graph, &args.edges, &args.features) {
        (Some(dir), _, _) => {
            let labels = dir.join(LABEL_FILE);
            let sidecar = dir.join(SIDECAR_FILE);
            (
                dir.join(EDGE_FILE),
                dir.join(FEATURE_FILE),
                labels.exists().then_some(labels),
                sidecar.exists().then_some(sidecar),
            )
        }
        (None, Some(e), Some(f)) => (e.clone(), f.clone(), args.labels.clone(), None),
        _ => return Err(CliError::Usage("give --graph DIR or both --edges and --features".into())),
    };
    manifest.input("edges", &edges)?;
    manifest.input("features", &features)?;
    if let Some(l) = &labels {
        manifest.input("labels", l)?;
    }
    let (graph, report) = if let Some(s) = &sidecar {
        manifest.input("sidecar", s)?;
        ariel::graph::load_graph_dir(args.graph.as_deref().expect("sidecar implies a directory"))?
    } else {
        load_graph(&edges, &features, labels.as_deref())?
    };
    if report.self_loops_dropped > 0 || report.duplicate_edges > 0 {
        log::warn!(
            "ingestion dropped {} self-loops and {} duplicate edges",
            report.self_loops_dropped,
            report.duplicate_edges
        );
    }
    Ok(graph)
}

fn create_out(out: &Path) -> CliResult<()> {
    fs::create_dir_all(out).map_err(|e| CliError::Data(format!("cannot create {}: {e}", out.display())))
}

/// Writes a real table, one row per line, shortest round-trip formatting.
pub fn write_table(m: &Matrix, path: &Path) -> CliResult<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for i in 0..m.rows() {
        let row: Vec<String> = m.row(i).iter().map(|v| format!("{v}")).collect();
        writeln!(w, "{}", row.join(" "))?;
    }
    w.flush()?;
    Ok(())
}

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Train { graph, config, out } => cmd_train(&graph, &config, &out),
        Command::Embed {
            graph,
            config,
            checkpoint,
            out,
        } => cmd_embed(&graph, &config, &checkpoint, &out),
        Command::Probe {
            embeddings,
            labels,
            splits,
            lambda,
            config,
            out,
        } => cmd_probe(&embeddings, &labels, splits, lambda, &config, &out),
        Command::Degrade {
            graph,
            config,
            checkpoint,
            p,
            steps,
            projected,
            out,
        } => cmd_degrade(&graph, &config, &checkpoint, p, steps, projected, &out),
        Command::Poison {
            graph,
            config,
            edge_fraction,
            feat_fraction,
            edges_only,
            out,
        } => cmd_poison(&graph, &config, edge_fraction, feat_fraction, edges_only, &out),
    }
}

fn cmd_train(graph: &GraphArgs, config: &ConfigArgs, out: &Path) -> CliResult<()> {
    let (cfg, mut manifest) = resolve(config, "train")?;
    let g = load_input_graph(graph, &mut manifest)?;
    create_out(out)?;
    let log_path = out.join(LOG_FILE);
    let mut log_file = BufWriter::new(fs::File::create(&log_path)?);
    let mut periodic = Vec::new();
    let result = train_with(&g, &cfg, |rec, params| {
        serde_json::to_writer(&mut log_file, rec)?;
        log_file.write_all(b"\n")?;
        log::info!("epoch {} total {:.6} ({:.3}s)", rec.epoch, rec.loss.total, rec.wall_seconds);
        if cfg.checkpoint_every > 0 && (rec.epoch + 1) % cfg.checkpoint_every == 0 {
            let p = out.join(format!("checkpoint_epoch{}.bin", rec.epoch + 1));
            save_checkpoint(params, &p)?;
            periodic.push(p);
        }
        Ok(())
    });
    log_file.flush()?;
    let (params, log) = result?;
    let ckpt = out.join(CHECKPOINT_FILE);
    save_checkpoint(&params, &ckpt)?;
    manifest.output("checkpoint", &ckpt);
    manifest.output("training_log", &log_path);
    for (k, p) in periodic.iter().enumerate() {
        manifest.output(&format!("checkpoint_periodic_{k:04}"), p);
    }
    manifest.argument("epochs_completed", log.records.len());
    manifest.write(out)
}

fn cmd_embed(graph: &GraphArgs, config: &ConfigArgs, checkpoint: &Path, out: &Path) -> CliResult<()> {
    let (_, mut manifest) = resolve(config, "embed")?;
    let g = load_input_graph(graph, &mut manifest)?;
    manifest.input("checkpoint", checkpoint)?;
    let params = load_checkpoint(checkpoint)?;
    let h = embed(&g, &params)?;
    create_out(out)?;
    let path = out.join(EMBEDDING_FILE);
    write_table(&h, &path)?;
    manifest.output("embeddings", &path);
    manifest.write(out)
}

fn cmd_probe(
    embeddings: &Path,
    labels: &Path,
    splits: usize,
    lambda: f64,
    config: &ConfigArgs,
    out: &Path,
) -> CliResult<()> {
    let (cfg, mut manifest) = resolve(config, "probe")?;
    if splits == 0 {
        return Err(CliError::Usage("--splits must be at least 1".into()));
    }
    manifest.input("embeddings", embeddings)?;
    manifest.input("labels", labels)?;
    manifest.argument("splits", splits);
    manifest.argument("lambda", lambda);
    let h = read_table(embeddings)?;
    let y = read_labels(labels, h.rows())?;
    let metrics = evaluate_embeddings(&h, &y, splits, lambda, &RngStream::new(cfg.seed).substream("probe"))?;
    create_out(out)?;
    let path = out.join(METRICS_FILE);
    fs::write(&path, serde_json::to_string_pretty(&metrics)? + "\n")?;
    manifest.output("metrics", &path);
    manifest.write(out)
}

#[allow(clippy::too_many_arguments)]
fn cmd_degrade(
    graph: &GraphArgs,
    config: &ConfigArgs,
    checkpoint: &Path,
    p: f64,
    steps: usize,
    projected: bool,
    out: &Path,
) -> CliResult<()> {
    let (cfg, mut manifest) = resolve(config, "degrade")?;
    let g = load_input_graph(graph, &mut manifest)?;
    manifest.input("checkpoint", checkpoint)?;
    manifest.argument("p", p);
    manifest.argument("steps", steps);
    manifest.argument("projected", projected);
    let params = load_checkpoint(checkpoint)?;
    let rows = vulnerability_study(&params, &g, p, steps, projected, &mut RngStream::new(cfg.seed).substream("degrade"))?;
    create_out(out)?;
    let path = out.join(VULNERABILITY_FILE);
    write_vulnerability_csv(&rows, &path)?;
    manifest.output("vulnerability", &path);
    manifest.write(out)
}

fn cmd_poison(
    graph: &GraphArgs,
    config: &ConfigArgs,
    edge_fraction: f64,
    feat_fraction: f64,
    edges_only: bool,
    out: &Path,
) -> CliResult<()> {
    let (cfg, mut manifest) = resolve(config, "poison")?;
    let g = load_input_graph(graph, &mut manifest)?;
    manifest.argument("edge_fraction", edge_fraction);
    manifest.argument("feat_fraction", feat_fraction);
    manifest.argument("edges_only", edges_only);
    let scope = if edges_only {
        PoisonScope::EdgesOnly
    } else {
        PoisonScope::AllPairs
    };
    let poisoned = random_poison(
        &g,
        edge_fraction,
        feat_fraction,
        scope,
        &mut RngStream::new(cfg.seed).substream("poison"),
    )?;
    save_graph(&poisoned, out)?;
    for name in [EDGE_FILE, FEATURE_FILE, SIDECAR_FILE] {
        manifest.output(name.trim_end_matches(".txt").trim_end_matches(".json"), &out.join(name));
    }
    if poisoned.labels().is_some() {
        manifest.output("labels", &out.join(LABEL_FILE));
    }
    manifest.write(out)
}
