//! Ablation over the adversarial weight on a block-model graph.
//!
//! Trains the plain two-view baseline (ε₁ = ε₂ = 0) and the adversarial model
//! for each ε₁ in the grid with ε₂ = 1, then reports probe accuracy over
//! random splits next to a probe on the raw features. Also prints the hinge
//! penalty trend (first versus last 10% of epochs) for each adversarial run.
//!
//! ```text
//! cargo run --release -p ariel-core --example ablation -- [epochs] [seed]
//! ```

use ariel::eval::{evaluate_embeddings, PROBE_LAMBDA};
use ariel::graph::{generate_sbm_with, SbmParams};
use ariel::trainer::{embed, train, TrainConfig};
use ariel::RngStream;

fn env_or<T: std::str::FromStr>(key: &str, default: T) -> T {
    std::env::var(key).ok().and_then(|v| v.parse().ok()).unwrap_or(default)
}

fn main() -> ariel::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let epochs: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(200);
    let seed: u64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(0);

    let sbm = SbmParams {
        block_sizes: vec![env_or("BLOCK", 100); env_or("BLOCKS", 7)],
        p_in: env_or("P_IN", 0.0327),
        p_out: env_or("P_OUT", 0.00127),
        feature_dim: env_or("DIM", 64),
        mean_scale: env_or("SCALE", 0.3),
    };
    let g = generate_sbm_with(&sbm, &mut RngStream::new(env_or("GRAPH_SEED", 7)))?;
    let labels = g.labels().expect("block model graphs are labeled").to_vec();
    let splits = 10;
    let probe_rng = RngStream::new(seed).substream("probe");
    println!("graph: n={} edges={} d={}", g.n(), g.edge_count(), g.feature_dim());

    let raw = evaluate_embeddings(g.features(), &labels, splits, PROBE_LAMBDA, &probe_rng)?;
    println!("raw features     acc {:.4} ± {:.4}", raw.mean_acc, raw.std_acc);

    let mut base = TrainConfig::default();
    base.epochs = epochs;
    base.seed = seed;
    base.hidden_dim = env_or("WIDTH", 64);
    base.embed_dim = base.hidden_dim;
    base.proj_hidden_dim = base.hidden_dim;
    base.subgraph_size = env_or("SUB", 500);
    base.learning_rate = env_or("LR", 1e-3);
    base.attack.alpha = env_or("ALPHA", base.attack.alpha);
    base.attack.beta = env_or("BETA", base.attack.beta);

    let mut runs = vec![("baseline".to_string(), 0.0, 0.0)];
    match std::env::var("RUNS") {
        // Extra (ε₁, ε₂) pairs, e.g. RUNS="0:1,1:0".
        Ok(list) => {
            for pair in list.split(',') {
                let (a, b) = pair.split_once(':').expect("RUNS entries look like eps1:eps2");
                runs.push((format!("eps={a}/{b}"), a.parse().unwrap(), b.parse().unwrap()));
            }
        }
        Err(_) => {
            for e in [0.5, 1.0, 1.5, 2.0] {
                runs.push((format!("eps1={e}"), e, 1.0));
            }
        }
    }
    for (name, eps1, eps2) in runs {
        let mut cfg = base.clone();
        cfg.eps1 = eps1;
        cfg.eps2 = eps2;
        let t = std::time::Instant::now();
        let (params, log) = train(&g, &cfg)?;
        let h = embed(&g, &params)?;
        let m = evaluate_embeddings(&h, &labels, splits, PROBE_LAMBDA, &probe_rng)?;
        let k = (log.records.len() / 10).max(1);
        let head: f64 = log.records[..k].iter().map(|r| r.loss.info_reg).sum::<f64>() / k as f64;
        let tail: f64 = log.records[log.records.len() - k..].iter().map(|r| r.loss.info_reg).sum::<f64>() / k as f64;
        let flips: usize = log.records.iter().filter_map(|r| r.attack.as_ref()).map(|a| a.flips).sum();
        if eps1 == 0.0 && eps2 == 0.0 {
            let rows = ariel::eval::vulnerability_study(&params, &g, 0.03, 60, std::env::var("PROJECTED").is_ok(), &mut RngStream::new(seed).substream("degrade"))?;
            for r in rows.iter().step_by(10) {
                println!("  degrade t={:>2} sim {:.4} ± {:.4} edges {:.3}", r.t, r.mean_sim, r.std_sim, r.surviving_edge_frac);
            }
        }
        println!(
            "{name:<16} acc {:.4} ± {:.4}  con {:.4} -> {:.4}  hinge {:.4} -> {:.4}  flips {flips}  {:.1}s",
            m.mean_acc,
            m.std_acc,
            log.records[0].loss.contrastive,
            log.records.last().map_or(f64::NAN, |r| r.loss.contrastive),
            head,
            tail,
            t.elapsed().as_secs_f64()
        );
    }
    Ok(())
}
