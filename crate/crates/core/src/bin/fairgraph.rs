use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use fairgraph_core::augment::AugmentConfig;
use fairgraph_core::experiment::{
    emit_report, evaluate, load_graph, predictions_of, prepare, ranking, run_experiment, train_seeded, DatasetConfig,
    ExperimentBundle, ExperimentConfig, Method, MetricNodes, ReportFormat,
};
use fairgraph_core::fairness::FairnessMetric;
use fairgraph_core::gcn::TrainConfig;
use fairgraph_core::graph::group_counts;
use fairgraph_core::io::{atomic_write, read_graph, read_predictions, write_graph, write_predictions, Provenance};
use fairgraph_core::knn::Metric;

/// Bias-mitigation data preparation and GCN fairness evaluation for
/// graph-structured credit data.
#[derive(Parser)]
#[command(name = "fairgraph", version)]
struct Cli {
    /// RNG seed (overrides the config's base seed).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Experiment config file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides the config's).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Repeats per method (overrides the config's).
    #[arg(long, global = true)]
    repeats: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GraphFiles {
    /// Node table written by `ingest` or `prepare`.
    #[arg(long)]
    nodes: PathBuf,
    /// Edge list matching `--nodes`.
    #[arg(long)]
    edges: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Encode the tabular dataset and build the kNN graph.
    Ingest {
        /// Dataset CSV (defaults to the config's).
        #[arg(long)]
        data: Option<PathBuf>,
        /// Column-role schema (defaults to the config's).
        #[arg(long)]
        schema: Option<PathBuf>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long, value_parser = parse_metric)]
        metric: Option<Metric>,
    },
    /// Apply one mitigation method to an ingested graph.
    Prepare {
        #[command(flatten)]
        input: GraphFiles,
        #[arg(long, value_parser = parse_method)]
        method: Method,
        /// Mixture components for `augment`.
        #[arg(long)]
        gmm_k: Option<usize>,
        /// Latent width for `augment`.
        #[arg(long)]
        latent: Option<usize>,
    },
    /// Train the GCN on a graph and write per-node predictions.
    Train {
        #[command(flatten)]
        input: GraphFiles,
    },
    /// Compute fairness metrics from a predictions file.
    Evaluate {
        #[arg(long)]
        predictions: PathBuf,
        /// Score every node instead of the test split only.
        #[arg(long)]
        all_nodes: bool,
    },
    /// Run the full method x repeat grid from the config.
    RunExperiment,
    /// Render a report from an experiment bundle.
    Report {
        /// `bundle.json` (defaults to `<out-dir>/bundle.json`).
        #[arg(long)]
        bundle: Option<PathBuf>,
        /// records | table | plot-data
        #[arg(long, default_value = "records")]
        format: String,
    },
}

fn parse_method(s: &str) -> std::result::Result<Method, String> {
    s.parse().map_err(|e: fairgraph_core::Error| e.to_string())
}

fn parse_metric(s: &str) -> std::result::Result<Metric, String> {
    match s {
        "euclidean" => Ok(Metric::Euclidean),
        "cosine" => Ok(Metric::Cosine),
        other => Err(format!("unknown metric `{other}`")),
    }
}

struct RunContext {
    config: Option<ExperimentConfig>,
    seed: Option<u64>,
    out_dir: PathBuf,
}

impl RunContext {
    fn seed(&self) -> u64 {
        self.seed.or(self.config.as_ref().map(|c| c.base_seed)).unwrap_or(0)
    }

    fn hash(&self) -> String {
        self.config.as_ref().map(ExperimentConfig::hash).unwrap_or_default()
    }

    fn provenance(&self) -> Provenance {
        Provenance {
            config_hash: self.hash(),
            seed: self.seed(),
        }
    }

    fn train(&self) -> TrainConfig {
        self.config.as_ref().map(|c| c.train.clone()).unwrap_or_default()
    }

    fn augment(&self) -> AugmentConfig {
        self.config.as_ref().map(|c| c.augment.clone()).unwrap_or_default()
    }

    fn metrics_on(&self) -> MetricNodes {
        self.config.as_ref().map(|c| c.metrics_on).unwrap_or_default()
    }
}

fn stem_of(path: &Path) -> String {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("graph");
    name.split('.').next().unwrap_or("graph").to_owned()
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let mut config = match &cli.config {
        Some(path) => Some(ExperimentConfig::load(path).with_context(|| format!("loading {}", path.display()))?),
        None => None,
    };
    if let Some(c) = config.as_mut() {
        if let Some(seed) = cli.seed {
            c.base_seed = seed;
        }
        if let Some(r) = cli.repeats {
            c.repeats = r;
        }
        if let Some(dir) = &cli.out_dir {
            c.out_dir = dir.clone();
        }
        c.validate()?;
    }
    let out_dir = cli
        .out_dir
        .clone()
        .or_else(|| config.as_ref().map(|c| c.out_dir.clone()))
        .unwrap_or_else(|| PathBuf::from("out"));
    let ctx = RunContext {
        config,
        seed: cli.seed,
        out_dir,
    };

    match cli.command {
        Command::Ingest { data, schema, k, metric } => {
            let dataset = match (data, schema, &ctx.config) {
                (Some(path), Some(schema), _) => DatasetConfig { path, schema },
                (data, schema, Some(c)) => DatasetConfig {
                    path: data.unwrap_or_else(|| c.dataset.path.clone()),
                    schema: schema.unwrap_or_else(|| c.dataset.schema.clone()),
                },
                _ => bail!("ingest needs --data and --schema, or --config"),
            };
            let mut graph_cfg = ctx.config.as_ref().map(|c| c.graph.clone()).unwrap_or_default();
            graph_cfg.k = k.unwrap_or(graph_cfg.k);
            graph_cfg.metric = metric.unwrap_or(graph_cfg.metric);
            let graph = load_graph(&dataset, &graph_cfg)?;
            let nodes = ctx.out_dir.join("graph.nodes.csv");
            let edges = ctx.out_dir.join("graph.edges.csv");
            write_graph(&nodes, &edges, &graph, &ctx.provenance())?;
            let c = group_counts(&graph);
            println!(
                "{} nodes, {} edges; {} {} / {} {}",
                graph.len(),
                graph.edges().len(),
                graph.group_names().majority,
                c.majority,
                graph.group_names().minority,
                c.minority
            );
            println!("wrote {} and {}", nodes.display(), edges.display());
        }
        Command::Prepare {
            input,
            method,
            gmm_k,
            latent,
        } => {
            let (graph, _) = read_graph(&input.nodes, &input.edges)?;
            let mut aug = ctx.augment();
            if let Some(k) = gmm_k {
                aug.gmm.components = k;
            }
            if let Some(d) = latent {
                aug.autoencoder.latent = d;
            }
            let prepared = prepare(&graph, method, ctx.seed(), &aug)?;
            let stem = format!("{method}-s{}", ctx.seed());
            let nodes = ctx.out_dir.join(format!("{stem}.nodes.csv"));
            let edges = ctx.out_dir.join(format!("{stem}.edges.csv"));
            let prov = ctx.provenance();
            write_graph(&nodes, &edges, &prepared.graph, &prov)?;
            let record = serde_json::json!({
                "config_hash": prov.config_hash,
                "seed": prov.seed,
                "record": prepared.record,
            });
            let record_path = ctx.out_dir.join(format!("{stem}.provenance.json"));
            atomic_write(&record_path, format!("{}\n", serde_json::to_string_pretty(&record)?).as_bytes())?;
            let c = prepared.record.counts;
            println!(
                "{method}: groups {} / {}, bad {} / {}, good {} / {}",
                c.majority, c.minority, c.cells[0][0], c.cells[1][0], c.cells[0][1], c.cells[1][1]
            );
            println!("wrote {}, {}, {}", nodes.display(), edges.display(), record_path.display());
        }
        Command::Train { input } => {
            let (graph, _) = read_graph(&input.nodes, &input.edges)?;
            let trained = train_seeded(&graph, &ctx.train(), ctx.seed())?;
            let predictions = predictions_of(&graph, &trained);
            let path = ctx.out_dir.join(format!("{}.predictions.csv", stem_of(&input.nodes)));
            write_predictions(&path, &predictions, &ctx.provenance())?;
            println!(
                "loss {:.4} -> {:.4}; wrote {}",
                trained.loss_trace[0],
                trained.loss_trace.last().copied().unwrap_or(f64::NAN),
                path.display()
            );
        }
        Command::Evaluate { predictions, all_nodes } => {
            let (preds, prov) = read_predictions(&predictions)?;
            let on = if all_nodes { MetricNodes::All } else { ctx.metrics_on() };
            let report = evaluate(&preds, on)?;
            let path = ctx.out_dir.join(format!("{}.report.json", stem_of(&predictions)));
            let doc = serde_json::json!({
                "config_hash": prov.config_hash,
                "seed": prov.seed,
                "nodes": on,
                "report": report,
            });
            atomic_write(&path, format!("{}\n", serde_json::to_string_pretty(&doc)?).as_bytes())?;
            println!("metric,{},{},delta", preds.group_names.majority, preds.group_names.minority);
            for m in FairnessMetric::ALL {
                match report.get(m) {
                    Some(c) => println!("{},{},{},{}", m.name(), c.majority, c.minority, c.delta),
                    None => println!("{},undefined,undefined,undefined", m.name()),
                }
            }
            println!("accuracy_overall,{}", report.accuracy.overall);
        }
        Command::RunExperiment => {
            let Some(config) = &ctx.config else {
                bail!("run-experiment needs --config");
            };
            let bundle = run_experiment(config)?;
            print!("{}", emit_report(&bundle, ReportFormat::Table)?);
            for m in [
                FairnessMetric::StatisticalParity,
                FairnessMetric::EqualOpportunity,
                FairnessMetric::FalsePositiveRate,
            ] {
                let order: Vec<String> = ranking(&bundle, m)
                    .into_iter()
                    .map(|(method, d)| match d {
                        Some(d) => format!("{method} ({d:.3})"),
                        None => format!("{method} (undefined)"),
                    })
                    .collect();
                println!("fairest by {}: {}", m.name(), order.join(" < "));
            }
            let failed: Vec<_> = bundle.cells.iter().filter(|c| c.outcome.is_err()).collect();
            for c in &failed {
                eprintln!("cell {} r{} failed: {}", c.method, c.repeat, c.outcome.as_ref().unwrap_err());
            }
            println!("wrote results to {}", config.out_dir.display());
            if !failed.is_empty() {
                bail!("{} of {} cells failed", failed.len(), bundle.cells.len());
            }
        }
        Command::Report { bundle, format } => {
            let path = bundle.unwrap_or_else(|| ctx.out_dir.join("bundle.json"));
            let bundle = ExperimentBundle::load(&path)?;
            let format: ReportFormat = format.parse()?;
            print!("{}", emit_report(&bundle, format)?);
        }
    }
    Ok(())
}
