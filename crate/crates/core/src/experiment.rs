//! Experiment harness: the method x repeat grid, artifact persistence, and
//! report emission.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::augment::{augment, AugmentConfig, AugmentProvenance};
use crate::error::{Error, Result};
use crate::fairness::{aggregate_repeats, AggregateReport, FairnessMetric, FairnessReport};
use crate::feature_edit::{reassign_sensitive_and_label, reassign_sensitive_random, EditRecord};
use crate::gcn::{split_nodes, train_from, GcnModel, TrainConfig, TrainedModel};
use crate::graph::{group_counts, induced_subgraph, BalanceCounts, CreditGraph, GroupNames};
use crate::ingest::{ingest_dataset, Schema};
use crate::io::{atomic_write, write_graph, write_predictions, PredictionRow, Predictions, Provenance, SplitRole};
use crate::knn::{build_knn_edges, Metric};
use crate::sampling::{sample, SamplingMethod, SamplingSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Original,
    Random,
    Stratified,
    Weighted,
    FeatRandom,
    FeatEqual,
    Augment,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Original,
        Method::Random,
        Method::Stratified,
        Method::Weighted,
        Method::FeatEqual,
        Method::FeatRandom,
        Method::Augment,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Original => "original",
            Method::Random => "random",
            Method::Stratified => "stratified",
            Method::Weighted => "weighted",
            Method::FeatRandom => "feat-random",
            Method::FeatEqual => "feat-equal",
            Method::Augment => "augment",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown method `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricNodes {
    #[default]
    Test,
    All,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub path: PathBuf,
    pub schema: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphConfig {
    pub k: usize,
    pub metric: Metric,
}

impl Default for GraphConfig {
    fn default() -> Self {
        GraphConfig {
            k: 10,
            metric: Metric::Euclidean,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    /// All methods in a repeat share the split and initialization seed.
    #[serde(default = "default_true")]
    pub shared_split: bool,
    #[serde(default)]
    pub metrics_on: MetricNodes,
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub graph: GraphConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub augment: AugmentConfig,
}

fn default_methods() -> Vec<Method> {
    Method::ALL.to_vec()
}

fn default_repeats() -> usize {
    3
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_true() -> bool {
    true
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Loads a config file. Relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = Self::from_toml_str(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut config.dataset.path, &mut config.dataset.schema, &mut config.out_dir] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.repeats == 0 {
            return Err(Error::Config("repeats must be at least 1".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("method list is empty".into()));
        }
        if self.graph.k == 0 {
            return Err(Error::Config("graph.k must be positive".into()));
        }
        self.train.validate()
    }

    /// SHA-256 over the canonical serialization, excluding the output
    /// directory so that relocating a run does not change its identity.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.out_dir = PathBuf::new();
        let text = serde_json::to_string(&canonical).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    /// Seed for preparation in `repeat`.
    pub fn repeat_seed(&self, repeat: usize) -> u64 {
        self.base_seed + repeat as u64
    }

    /// Seed for the split and weight initialization of `method` in `repeat`.
    pub fn train_seed(&self, method: Method, repeat: usize) -> u64 {
        let seed = self.repeat_seed(repeat);
        if self.shared_split {
            seed
        } else {
            seed.wrapping_add((method as u64 + 1) << 32)
        }
    }
}

/// Ingests the dataset and builds the kNN edge set.
pub fn load_graph(dataset: &DatasetConfig, graph: &GraphConfig) -> Result<CreditGraph> {
    let schema = Schema::load(&dataset.schema)?;
    let g = ingest_dataset(&dataset.path, &schema)?;
    let edges = build_knn_edges(&g, graph.k, graph.metric)?;
    g.with_edges(edges)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MethodDetail {
    None,
    Sampling { kept: usize },
    Edit(EditRecord),
    Augment(AugmentProvenance),
}

/// Provenance of a prepared dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrepareRecord {
    pub method: Method,
    pub seed: u64,
    pub counts: BalanceCounts,
    pub detail: MethodDetail,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PreparedDataset {
    pub graph: CreditGraph,
    pub record: PrepareRecord,
}

pub fn prepare(graph: &CreditGraph, method: Method, seed: u64, augment_config: &AugmentConfig) -> Result<PreparedDataset> {
    let sampling = |m| -> Result<(CreditGraph, MethodDetail)> {
        let keep = sample(graph, &SamplingSpec::new(m, seed))?;
        let kept = keep.len();
        Ok((induced_subgraph(graph, keep)?, MethodDetail::Sampling { kept }))
    };
    let (out, detail) = match method {
        Method::Original => (graph.clone(), MethodDetail::None),
        Method::Random => sampling(SamplingMethod::Random)?,
        Method::Stratified => sampling(SamplingMethod::Stratified)?,
        Method::Weighted => sampling(SamplingMethod::Weighted)?,
        Method::FeatRandom => {
            let (g, rec) = reassign_sensitive_random(graph, seed)?;
            (g, MethodDetail::Edit(rec))
        }
        Method::FeatEqual => {
            let (g, rec) = reassign_sensitive_and_label(graph, seed)?;
            (g, MethodDetail::Edit(rec))
        }
        Method::Augment => {
            let (g, prov) = augment(graph, augment_config, seed)?;
            (g, MethodDetail::Augment(prov))
        }
    };
    Ok(PreparedDataset {
        record: PrepareRecord {
            method,
            seed,
            counts: group_counts(&out),
            detail,
        },
        graph: out,
    })
}

/// Trains with an explicit seed (split and initialization both derive from it).
pub fn train_seeded(graph: &CreditGraph, config: &TrainConfig, seed: u64) -> Result<TrainedModel> {
    config.validate()?;
    let split = split_nodes(graph, config.train_fraction, seed)?;
    let model = GcnModel::init(graph.features().ncols(), config.hidden1, config.hidden2, seed);
    train_from(graph, model, split, config)
}

pub fn predictions_of(graph: &CreditGraph, trained: &TrainedModel) -> Predictions {
    let test = trained.split.is_test_mask(graph.len());
    let prob = trained.prob_good();
    let rows = (0..graph.len())
        .map(|i| PredictionRow {
            id: graph.node_ids()[i],
            true_label: graph.labels()[i],
            predicted_label: trained.predictions[i],
            prob_positive: prob[i],
            group: graph.groups()[i],
            split: if test[i] { SplitRole::Test } else { SplitRole::Train },
        })
        .collect();
    Predictions {
        group_names: graph.group_names().clone(),
        rows,
    }
}

pub fn evaluate(predictions: &Predictions, on: MetricNodes) -> Result<FairnessReport> {
    let split = match on {
        MetricNodes::Test => Some(SplitRole::Test),
        MetricNodes::All => None,
    };
    let (p, y, g) = predictions.select(split);
    FairnessReport::evaluate(&p, &y, &g)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub prepared: PrepareRecord,
    pub train_seed: u64,
    pub first_loss: f64,
    pub final_loss: f64,
    pub report: FairnessReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub method: Method,
    pub repeat: usize,
    pub seed: u64,
    pub outcome: std::result::Result<CellResult, String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub completed: usize,
    pub failed: usize,
    /// Counts of the first completed repeat.
    pub counts: Option<BalanceCounts>,
    pub aggregate: Option<AggregateReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentBundle {
    pub config_hash: String,
    pub base_seed: u64,
    pub group_names: GroupNames,
    pub config: ExperimentConfig,
    pub cells: Vec<CellRecord>,
    pub methods: Vec<MethodSummary>,
    pub complete: bool,
}

impl ExperimentBundle {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::malformed(path, e.to_string()))
    }

    fn provenance(&self) -> Provenance {
        Provenance {
            config_hash: self.config_hash.clone(),
            seed: self.base_seed,
        }
    }
}

fn cell_stem(method: Method, repeat: usize) -> String {
    format!("{method}-r{repeat}")
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("plain data serializes");
    s.push('\n');
    s
}

fn run_cell(config: &ExperimentConfig, hash: &str, graph: &CreditGraph, method: Method, repeat: usize) -> Result<CellResult> {
    let seed = config.repeat_seed(repeat);
    let prepared = prepare(graph, method, seed, &config.augment)?;
    let prov = Provenance {
        config_hash: hash.to_owned(),
        seed,
    };
    let out = &config.out_dir;
    let stem = cell_stem(method, repeat);
    write_graph(
        &out.join("prepared").join(format!("{stem}.nodes.csv")),
        &out.join("prepared").join(format!("{stem}.edges.csv")),
        &prepared.graph,
        &prov,
    )?;
    atomic_write(
        &out.join("prepared").join(format!("{stem}.provenance.json")),
        to_json(&serde_json::json!({
            "config_hash": hash,
            "seed": seed,
            "record": prepared.record,
        }))
        .as_bytes(),
    )?;

    let train_seed = config.train_seed(method, repeat);
    let trained = train_seeded(&prepared.graph, &config.train, train_seed)?;
    let predictions = predictions_of(&prepared.graph, &trained);
    write_predictions(&out.join("predictions").join(format!("{stem}.csv")), &predictions, &prov)?;
    let report = evaluate(&predictions, config.metrics_on)?;
    let result = CellResult {
        prepared: prepared.record,
        train_seed,
        first_loss: trained.loss_trace[0],
        final_loss: *trained.loss_trace.last().expect("epochs > 0"),
        report,
    };
    atomic_write(
        &out.join("reports").join(format!("{stem}.json")),
        to_json(&serde_json::json!({
            "config_hash": hash,
            "seed": seed,
            "method": method,
            "repeat": repeat,
            "result": result,
        }))
        .as_bytes(),
    )?;
    Ok(result)
}

/// Runs every (method, repeat) cell, in parallel, and writes all artifacts
/// plus the aggregated bundle under `config.out_dir`. A failing cell is
/// recorded and the rest of the grid continues.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentBundle> {
    config.validate()?;
    let hash = config.hash();
    let graph = load_graph(&config.dataset, &config.graph)?;
    let jobs: Vec<(Method, usize)> = config
        .methods
        .iter()
        .flat_map(|&m| (0..config.repeats).map(move |r| (m, r)))
        .collect();
    let cells: Vec<CellRecord> = jobs
        .par_iter()
        .map(|&(method, repeat)| CellRecord {
            method,
            repeat,
            seed: config.repeat_seed(repeat),
            outcome: run_cell(config, &hash, &graph, method, repeat).map_err(|e| e.to_string()),
        })
        .collect();

    let mut methods = Vec::new();
    for &method in &config.methods {
        let done: Vec<&CellResult> = cells
            .iter()
            .filter(|c| c.method == method)
            .filter_map(|c| c.outcome.as_ref().ok())
            .collect();
        let reports: Vec<FairnessReport> = done.iter().map(|c| c.report.clone()).collect();
        methods.push(MethodSummary {
            method,
            completed: done.len(),
            failed: config.repeats - done.len(),
            counts: done.first().map(|c| c.prepared.counts),
            aggregate: aggregate_repeats(&reports).ok(),
        });
    }
    let bundle = ExperimentBundle {
        config_hash: hash,
        base_seed: config.base_seed,
        group_names: graph.group_names().clone(),
        config: config.clone(),
        complete: cells.iter().all(|c| c.outcome.is_ok()),
        cells,
        methods,
    };
    let out = &config.out_dir;
    atomic_write(&out.join("bundle.json"), to_json(&bundle).as_bytes())?;
    for format in ReportFormat::ALL {
        atomic_write(&out.join(format.file_name()), emit_report(&bundle, format)?.as_bytes())?;
    }
    Ok(bundle)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    /// One row per method, metric and group (plus delta).
    Records,
    /// Group and label distribution per method.
    Table,
    /// One row per method and metric with both group values, delta and std.
    PlotData,
}

impl ReportFormat {
    pub const ALL: [ReportFormat; 3] = [ReportFormat::Records, ReportFormat::Table, ReportFormat::PlotData];

    pub fn file_name(self) -> &'static str {
        match self {
            ReportFormat::Records => "records.csv",
            ReportFormat::Table => "distribution.csv",
            ReportFormat::PlotData => "plot_data.csv",
        }
    }
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "records" => Ok(ReportFormat::Records),
            "table" => Ok(ReportFormat::Table),
            "plot-data" => Ok(ReportFormat::PlotData),
            other => Err(Error::UnknownFormat(other.to_owned())),
        }
    }
}

fn provenance_header(bundle: &ExperimentBundle) -> String {
    let p = bundle.provenance();
    format!("# config_hash: {}\n# seed: {}\n", p.config_hash, p.seed)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn emit_report(bundle: &ExperimentBundle, format: ReportFormat) -> Result<String> {
    if bundle.methods.is_empty() {
        return Err(Error::Empty("bundle has no methods"));
    }
    let mut out = provenance_header(bundle);
    match format {
        ReportFormat::Records => {
            out.push_str("method,metric,group,mean,std,defined,undefined\n");
            for m in &bundle.methods {
                let Some(agg) = &m.aggregate else { continue };
                for metric in FairnessMetric::ALL {
                    let s = agg.get(metric);
                    let rows: [(&str, Option<_>); 3] = [
                        (bundle.group_names.majority.as_str(), s.summary.map(|c| c.majority)),
                        (bundle.group_names.minority.as_str(), s.summary.map(|c| c.minority)),
                        ("delta", s.summary.map(|c| c.delta)),
                    ];
                    for (group, stat) in rows {
                        let _ = writeln!(
                            out,
                            "{},{},{},{},{},{},{}",
                            m.method,
                            metric.name(),
                            group,
                            opt(stat.map(|x| x.mean)),
                            opt(stat.map(|x| x.std)),
                            s.defined,
                            s.undefined
                        );
                    }
                }
                let acc = agg.overall_accuracy;
                let _ = writeln!(
                    out,
                    "{},accuracy,overall,{},{},{},0",
                    m.method, acc.mean, acc.std, agg.repeats
                );
            }
        }
        ReportFormat::Table => {
            let names = &bundle.group_names;
            let pair = format!("{} / {}", names.majority, names.minority);
            out.push_str("# counts from the first completed repeat of each method\n");
            out.push_str("row");
            for m in &bundle.methods {
                let _ = write!(out, ",{}", m.method);
            }
            out.push('\n');
            type Pick = fn(&BalanceCounts) -> (usize, usize);
            let rows: [(&str, Pick); 3] = [
                ("group sizes", |c| (c.majority, c.minority)),
                ("bad customers", |c| (c.cells[0][0], c.cells[1][0])),
                ("good customers", |c| (c.cells[0][1], c.cells[1][1])),
            ];
            for (title, pick) in rows {
                let _ = write!(out, "{title} ({pair})");
                for m in &bundle.methods {
                    match &m.counts {
                        Some(c) => {
                            let (a, b) = pick(c);
                            let _ = write!(out, ",{a} / {b}");
                        }
                        None => out.push(','),
                    }
                }
                out.push('\n');
            }
        }
        ReportFormat::PlotData => {
            out.push_str("method,metric,majority,minority,delta,majority_std,minority_std,delta_std\n");
            for m in &bundle.methods {
                for metric in FairnessMetric::ALL {
                    let s = m.aggregate.as_ref().and_then(|a| a.get(metric).summary);
                    let _ = writeln!(
                        out,
                        "{},{},{},{},{},{},{},{}",
                        m.method,
                        metric.name(),
                        opt(s.map(|c| c.majority.mean)),
                        opt(s.map(|c| c.minority.mean)),
                        opt(s.map(|c| c.delta.mean)),
                        opt(s.map(|c| c.majority.std)),
                        opt(s.map(|c| c.minority.std)),
                        opt(s.map(|c| c.delta.std)),
                    );
                }
            }
        }
    }
    Ok(out)
}

/// Per-method ranking by mean delta, smallest (fairest) first.
pub fn ranking(bundle: &ExperimentBundle, metric: FairnessMetric) -> Vec<(Method, Option<f64>)> {
    let named: Vec<(String, AggregateReport)> = bundle
        .methods
        .iter()
        .filter_map(|m| m.aggregate.clone().map(|a| (m.method.name().to_owned(), a)))
        .collect();
    let mut out: Vec<(Method, Option<f64>)> = crate::fairness::rank_by_delta(&named, metric)
        .into_iter()
        .map(|(name, d)| (name.parse().expect("own names"), d))
        .collect();
    out.extend(
        bundle
            .methods
            .iter()
            .filter(|m| m.aggregate.is_none())
            .map(|m| (m.method, None)),
    );
    out
}

/// Group/label counts per method, from the first completed repeat.
pub fn distribution(bundle: &ExperimentBundle) -> BTreeMap<Method, BalanceCounts> {
    bundle
        .methods
        .iter()
        .filter_map(|m| m.counts.map(|c| (m.method, c)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        methods = ["original", "stratified"]
        repeats = 2

        [dataset]
        path = "data.csv"
        schema = "schema.toml"
    "#;

    #[test]
    fn config_defaults_and_validation() {
        let c = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
        assert_eq!(c.methods, vec![Method::Original, Method::Stratified]);
        assert_eq!(c.graph.k, 10);
        assert_eq!(c.train.epochs, 200);
        assert!(c.shared_split);
        assert_eq!(c.metrics_on, MetricNodes::Test);
        assert!(ExperimentConfig::from_toml_str(&MINIMAL.replace("repeats = 2", "repeats = 0")).is_err());
        assert!(ExperimentConfig::from_toml_str(&MINIMAL.replace("\"original\", \"stratified\"", "")).is_err());
        assert!(ExperimentConfig::from_toml_str(&MINIMAL.replace("repeats", "repeets")).is_err());
        assert!(ExperimentConfig::from_toml_str(&MINIMAL.replace("\"original\"", "\"smote\"")).is_err());
    }

    #[test]
    fn seeds_and_hash() {
        let mut c = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
        c.base_seed = 40;
        assert_eq!(c.repeat_seed(2), 42);
        assert_eq!(c.train_seed(Method::Augment, 2), c.train_seed(Method::Original, 2));
        let h = c.hash();
        assert_eq!(h.len(), 64);
        c.out_dir = PathBuf::from("elsewhere");
        assert_eq!(c.hash(), h);
        c.shared_split = false;
        assert_ne!(c.hash(), h);
        assert_ne!(c.train_seed(Method::Augment, 2), c.train_seed(Method::Original, 2));
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("plot".parse::<ReportFormat>().is_err());
        assert_eq!("plot-data".parse::<ReportFormat>().unwrap(), ReportFormat::PlotData);
    }
}
