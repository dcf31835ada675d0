//! On-disk formats: node and edge tables, predictions, and provenance
//! headers.
//!
//! Every file starts with `# key: value` comment lines carrying the config
//! hash and seed, followed by plain comma-separated rows. Floats are written
//! in Rust's shortest round-trip form, so a write/read cycle is lossless and
//! reruns are byte-identical.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{CreditGraph, FeatureLayout, Group, GroupNames, Label, NodeId};

/// Identifies the run that produced a file.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
}

#[derive(Serialize, Deserialize)]
struct NodeMeta {
    group_names: GroupNames,
    layout: FeatureLayout,
}

/// Writes `contents` to a temporary file beside `path`, then renames it into
/// place, creating parent directories as needed.
pub fn atomic_write(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(contents).map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

fn header(kind: &str, prov: &Provenance, extra: &[(&str, String)]) -> String {
    let mut out = format!("# fairgraph {kind}\n# config_hash: {}\n# seed: {}\n", prov.config_hash, prov.seed);
    for (k, v) in extra {
        let _ = writeln!(out, "# {k}: {v}");
    }
    out
}

/// Splits leading `# key: value` lines from the body.
fn split_header<'a>(path: &Path, text: &'a str) -> Result<(BTreeMap<String, String>, &'a str)> {
    let mut meta = BTreeMap::new();
    let mut rest = text;
    while let Some(line) = rest.strip_prefix('#') {
        let (line, tail) = line.split_once('\n').unwrap_or((line, ""));
        if let Some((k, v)) = line.split_once(':') {
            meta.insert(k.trim().to_owned(), v.trim().to_owned());
        }
        rest = tail;
    }
    if rest.trim().is_empty() && meta.is_empty() {
        return Err(Error::malformed(path, "empty file"));
    }
    Ok((meta, rest))
}

fn provenance_from(path: &Path, meta: &BTreeMap<String, String>) -> Result<Provenance> {
    let seed = meta
        .get("seed")
        .ok_or_else(|| Error::malformed(path, "missing seed header"))?
        .parse()
        .map_err(|_| Error::malformed(path, "seed header is not an integer"))?;
    Ok(Provenance {
        config_hash: meta.get("config_hash").cloned().unwrap_or_default(),
        seed,
    })
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse_field<T: std::str::FromStr>(path: &Path, line: usize, what: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::malformed(path, format!("row {line}: bad {what} `{value}`")))
}

pub fn render_nodes(graph: &CreditGraph, prov: &Provenance) -> Result<String> {
    let meta = NodeMeta {
        group_names: graph.group_names().clone(),
        layout: graph.layout().clone(),
    };
    let meta = serde_json::to_string(&meta).expect("plain data serializes");
    let mut out = header("nodes", prov, &[("meta", meta)]);
    out.push_str("id,group,label");
    for name in graph.layout().column_names() {
        out.push(',');
        out.push_str(&name);
    }
    out.push('\n');
    let names = graph.group_names();
    for (i, row) in graph.features().rows().into_iter().enumerate() {
        let _ = write!(
            out,
            "{},{},{}",
            graph.node_ids()[i],
            names.name(graph.groups()[i]),
            graph.labels()[i].name()
        );
        for v in row {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn render_edges(graph: &CreditGraph, prov: &Provenance) -> String {
    let mut out = header("edges", prov, &[]);
    for (a, b) in graph.edge_ids() {
        let _ = writeln!(out, "{a},{b}");
    }
    out
}

pub fn write_graph(nodes: &Path, edges: &Path, graph: &CreditGraph, prov: &Provenance) -> Result<()> {
    atomic_write(nodes, render_nodes(graph, prov)?.as_bytes())?;
    atomic_write(edges, render_edges(graph, prov).as_bytes())
}

/// Reads a node table and edge list written by [`write_graph`].
pub fn read_graph(nodes: &Path, edges: &Path) -> Result<(CreditGraph, Provenance)> {
    let text = read_text(nodes)?;
    let (meta, body) = split_header(nodes, &text)?;
    let prov = provenance_from(nodes, &meta)?;
    let node_meta: NodeMeta = serde_json::from_str(
        meta.get("meta")
            .ok_or_else(|| Error::malformed(nodes, "missing meta header"))?,
    )
    .map_err(|e| Error::malformed(nodes, format!("meta header: {e}")))?;
    let width = node_meta.layout.width();

    let mut lines = body.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, head) = lines.next().ok_or_else(|| Error::malformed(nodes, "missing column header"))?;
    let mut expected = vec!["id".to_owned(), "group".into(), "label".into()];
    expected.extend(node_meta.layout.column_names());
    if head.split(',').map(str::trim).ne(expected.iter().map(String::as_str)) {
        return Err(Error::malformed(nodes, "column header does not match the layout"));
    }

    let mut ids = Vec::new();
    let mut groups = Vec::new();
    let mut labels = Vec::new();
    let mut values = Vec::new();
    for (n, line) in lines {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != width + 3 {
            return Err(Error::malformed(nodes, format!("row {n}: expected {} fields", width + 3)));
        }
        ids.push(NodeId(parse_field(nodes, n, "id", fields[0])?));
        groups.push(
            node_meta
                .group_names
                .parse(fields[1])
                .ok_or_else(|| Error::malformed(nodes, format!("row {n}: unknown group `{}`", fields[1])))?,
        );
        labels.push(
            Label::parse(fields[2])
                .ok_or_else(|| Error::malformed(nodes, format!("row {n}: unknown label `{}`", fields[2])))?,
        );
        for f in &fields[3..] {
            values.push(parse_field::<f64>(nodes, n, "feature", f)?);
        }
    }
    let features = Array2::from_shape_vec((ids.len(), width), values).expect("row widths checked");

    let positions: BTreeMap<NodeId, usize> = ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
    let edge_text = read_text(edges)?;
    let (_, edge_body) = split_header(edges, &edge_text)?;
    let mut edge_list = Vec::new();
    for (idx, line) in edge_body.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let (a, b) = line
            .split_once(',')
            .ok_or_else(|| Error::malformed(edges, format!("row {}: expected `id,id`", idx + 1)))?;
        let lookup = |s: &str| -> Result<usize> {
            let id = NodeId(parse_field(edges, idx + 1, "node id", s.trim())?);
            positions.get(&id).copied().ok_or(Error::UnknownNode(id))
        };
        edge_list.push((lookup(a)?, lookup(b)?));
    }
    let graph = CreditGraph::new(
        ids,
        features,
        groups,
        labels,
        edge_list,
        node_meta.layout,
        node_meta.group_names,
    )?;
    Ok((graph, prov))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitRole {
    Train,
    Test,
}

impl SplitRole {
    pub fn name(self) -> &'static str {
        match self {
            SplitRole::Train => "train",
            SplitRole::Test => "test",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub id: NodeId,
    pub true_label: Label,
    pub predicted_label: Label,
    /// Probability of the good outcome.
    pub prob_positive: f64,
    pub group: Group,
    pub split: SplitRole,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Predictions {
    pub group_names: GroupNames,
    pub rows: Vec<PredictionRow>,
}

impl Predictions {
    pub fn select(&self, split: Option<SplitRole>) -> (Vec<Label>, Vec<Label>, Vec<Group>) {
        let rows = self.rows.iter().filter(|r| split.is_none_or(|s| r.split == s));
        let mut preds = Vec::new();
        let mut labels = Vec::new();
        let mut groups = Vec::new();
        for r in rows {
            preds.push(r.predicted_label);
            labels.push(r.true_label);
            groups.push(r.group);
        }
        (preds, labels, groups)
    }
}

pub fn render_predictions(predictions: &Predictions, prov: &Provenance) -> String {
    let names = &predictions.group_names;
    let mut out = header(
        "predictions",
        prov,
        &[
            ("majority", names.majority.clone()),
            ("minority", names.minority.clone()),
        ],
    );
    out.push_str("id,true_label,predicted_label,prob_positive,group,split\n");
    for r in &predictions.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.id,
            r.true_label.name(),
            r.predicted_label.name(),
            r.prob_positive,
            names.name(r.group),
            r.split.name()
        );
    }
    out
}

pub fn write_predictions(path: &Path, predictions: &Predictions, prov: &Provenance) -> Result<()> {
    atomic_write(path, render_predictions(predictions, prov).as_bytes())
}

pub fn read_predictions(path: &Path) -> Result<(Predictions, Provenance)> {
    let text = read_text(path)?;
    let (meta, body) = split_header(path, &text)?;
    let prov = provenance_from(path, &meta)?;
    let group_names = GroupNames {
        majority: meta.get("majority").cloned().unwrap_or_else(|| "majority".into()),
        minority: meta.get("minority").cloned().unwrap_or_else(|| "minority".into()),
    };
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(body.as_bytes());
    let headers = reader.headers().map_err(|e| Error::Csv {
        path: path.to_path_buf(),
        source: e,
    })?;
    if headers.iter().ne(["id", "true_label", "predicted_label", "prob_positive", "group", "split"]) {
        return Err(Error::malformed(path, "unexpected prediction columns"));
    }
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Csv {
            path: path.to_path_buf(),
            source: e,
        })?;
        let n = i + 2;
        let label = |s: &str| Label::parse(s).ok_or_else(|| Error::malformed(path, format!("row {n}: label `{s}`")));
        rows.push(PredictionRow {
            id: NodeId(parse_field(path, n, "id", &record[0])?),
            true_label: label(&record[1])?,
            predicted_label: label(&record[2])?,
            prob_positive: parse_field(path, n, "probability", &record[3])?,
            group: group_names
                .parse(&record[4])
                .ok_or_else(|| Error::malformed(path, format!("row {n}: group `{}`", &record[4])))?,
            split: match &record[5] {
                "train" => SplitRole::Train,
                "test" => SplitRole::Test,
                other => return Err(Error::malformed(path, format!("row {n}: split `{other}`"))),
            },
        });
    }
    Ok((Predictions { group_names, rows }, prov))
}
