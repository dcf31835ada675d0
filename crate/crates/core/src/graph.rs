//! Graph data model shared by every mitigation strategy.
//!
//! A [`CreditGraph`] stores a dense, already-encoded feature matrix together
//! with one sensitive-group tag and one binary outcome per node, plus an
//! undirected edge list. Edges are kept as positional index pairs `(a, b)`
//! with `a < b`, sorted and deduplicated; node identity across subsetting is
//! carried by [`NodeId`].

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use ndarray::{s, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Sensitive-group tag. `Majority` is the group that was overrepresented at
/// ingestion time; the tag keeps its meaning after rebalancing.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Group {
    Majority,
    Minority,
}

impl Group {
    pub const ALL: [Group; 2] = [Group::Majority, Group::Minority];

    pub fn index(self) -> usize {
        match self {
            Group::Majority => 0,
            Group::Minority => 1,
        }
    }

    pub fn flipped(self) -> Group {
        match self {
            Group::Majority => Group::Minority,
            Group::Minority => Group::Majority,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Bad,
    Good,
}

impl Label {
    pub const ALL: [Label; 2] = [Label::Bad, Label::Good];

    pub fn index(self) -> usize {
        match self {
            Label::Bad => 0,
            Label::Good => 1,
        }
    }

    pub fn from_index(i: usize) -> Label {
        if i == 0 {
            Label::Bad
        } else {
            Label::Good
        }
    }

    pub fn flipped(self) -> Label {
        match self {
            Label::Bad => Label::Good,
            Label::Good => Label::Bad,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Label::Bad => "bad",
            Label::Good => "good",
        }
    }

    pub fn parse(s: &str) -> Option<Label> {
        match s {
            "bad" => Some(Label::Bad),
            "good" => Some(Label::Good),
            _ => None,
        }
    }
}

/// Raw values of the sensitive column, e.g. `male` / `female`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupNames {
    pub majority: String,
    pub minority: String,
}

impl GroupNames {
    pub fn name(&self, group: Group) -> &str {
        match group {
            Group::Majority => &self.majority,
            Group::Minority => &self.minority,
        }
    }

    pub fn parse(&self, value: &str) -> Option<Group> {
        if value == self.majority {
            Some(Group::Majority)
        } else if value == self.minority {
            Some(Group::Minority)
        } else {
            None
        }
    }
}

impl Default for GroupNames {
    fn default() -> Self {
        GroupNames {
            majority: "majority".into(),
            minority: "minority".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ColumnKind {
    /// Min-max scaled into `[0, 1]`; `min`/`max` are in raw units.
    Continuous { min: f64, max: f64, integral: bool },
    /// One-hot block, one matrix column per level.
    Categorical { levels: Vec<String> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureColumn {
    pub name: String,
    pub offset: usize,
    pub kind: ColumnKind,
}

impl FeatureColumn {
    pub fn width(&self) -> usize {
        match &self.kind {
            ColumnKind::Continuous { .. } => 1,
            ColumnKind::Categorical { levels } => levels.len(),
        }
    }
}

/// Maps raw attributes onto matrix columns.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FeatureLayout {
    pub columns: Vec<FeatureColumn>,
}

impl FeatureLayout {
    pub fn width(&self) -> usize {
        self.columns.iter().map(FeatureColumn::width).sum()
    }

    /// Per-matrix-column names; one-hot columns render as `attr=level`.
    pub fn column_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.width());
        for col in &self.columns {
            match &col.kind {
                ColumnKind::Continuous { .. } => names.push(col.name.clone()),
                ColumnKind::Categorical { levels } => {
                    names.extend(levels.iter().map(|l| format!("{}={}", col.name, l)))
                }
            }
        }
        names
    }

    /// Layout of `width` unnamed continuous columns already in `[0, 1]`.
    pub fn anonymous(width: usize) -> Self {
        FeatureLayout {
            columns: (0..width)
                .map(|i| FeatureColumn {
                    name: format!("f{i}"),
                    offset: i,
                    kind: ColumnKind::Continuous {
                        min: 0.0,
                        max: 1.0,
                        integral: false,
                    },
                })
                .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CreditGraph {
    node_ids: Vec<NodeId>,
    features: Array2<f64>,
    groups: Vec<Group>,
    labels: Vec<Label>,
    edges: Vec<(usize, usize)>,
    layout: FeatureLayout,
    group_names: GroupNames,
}

impl CreditGraph {
    /// Builds a graph, checking every structural invariant. `edges` are
    /// positional and may arrive in either orientation; duplicates and
    /// self-loops are rejected.
    pub fn new(
        node_ids: Vec<NodeId>,
        features: Array2<f64>,
        groups: Vec<Group>,
        labels: Vec<Label>,
        edges: Vec<(usize, usize)>,
        layout: FeatureLayout,
        group_names: GroupNames,
    ) -> Result<Self> {
        let n = node_ids.len();
        if features.nrows() != n || groups.len() != n || labels.len() != n {
            return Err(Error::InvalidGraph(format!(
                "row counts disagree: ids {n}, features {}, groups {}, labels {}",
                features.nrows(),
                groups.len(),
                labels.len()
            )));
        }
        if layout.width() != features.ncols() {
            return Err(Error::InvalidGraph(format!(
                "layout width {} does not match {} feature columns",
                layout.width(),
                features.ncols()
            )));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidGraph("feature matrix has non-finite entries".into()));
        }
        let unique: BTreeSet<NodeId> = node_ids.iter().copied().collect();
        if unique.len() != n {
            return Err(Error::InvalidGraph("duplicate node ids".into()));
        }
        let edges = normalize_edges(n, edges, false)?;
        Ok(CreditGraph {
            node_ids,
            features,
            groups,
            labels,
            edges,
            layout,
            group_names,
        })
    }

    pub fn len(&self) -> usize {
        self.node_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.node_ids.is_empty()
    }

    pub fn node_ids(&self) -> &[NodeId] {
        &self.node_ids
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn groups(&self) -> &[Group] {
        &self.groups
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    /// Positional edges, `a < b`, sorted.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge_ids(&self) -> Vec<(NodeId, NodeId)> {
        self.edges
            .iter()
            .map(|&(a, b)| (self.node_ids[a], self.node_ids[b]))
            .collect()
    }

    pub fn layout(&self) -> &FeatureLayout {
        &self.layout
    }

    pub fn group_names(&self) -> &GroupNames {
        &self.group_names
    }

    pub fn position_map(&self) -> HashMap<NodeId, usize> {
        self.node_ids.iter().enumerate().map(|(i, &id)| (id, i)).collect()
    }

    pub fn neighbors(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.len()];
        for &(a, b) in &self.edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        adj
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.len()];
        for &(a, b) in &self.edges {
            deg[a] += 1;
            deg[b] += 1;
        }
        deg
    }

    /// Smallest id strictly greater than every existing id.
    pub fn next_node_id(&self) -> NodeId {
        NodeId(self.node_ids.iter().map(|id| id.0 + 1).max().unwrap_or(0))
    }

    /// Replaces the edge set. Duplicates under orientation are merged.
    pub fn with_edges(mut self, edges: Vec<(usize, usize)>) -> Result<Self> {
        self.edges = normalize_edges(self.len(), edges, true)?;
        Ok(self)
    }

    pub fn with_groups(mut self, groups: Vec<Group>) -> Result<Self> {
        if groups.len() != self.len() {
            return Err(Error::InvalidGraph("group vector length mismatch".into()));
        }
        self.groups = groups;
        Ok(self)
    }

    pub fn with_labels(mut self, labels: Vec<Label>) -> Result<Self> {
        if labels.len() != self.len() {
            return Err(Error::InvalidGraph("label vector length mismatch".into()));
        }
        self.labels = labels;
        Ok(self)
    }

    /// Appends new nodes after the existing ones. `new_edges` are positional
    /// in the combined graph.
    pub fn append_nodes(
        &self,
        ids: Vec<NodeId>,
        features: Array2<f64>,
        groups: Vec<Group>,
        labels: Vec<Label>,
        new_edges: Vec<(usize, usize)>,
    ) -> Result<Self> {
        if features.ncols() != self.features.ncols() && features.nrows() > 0 {
            return Err(Error::InvalidGraph("appended feature width mismatch".into()));
        }
        let mut all_features = Array2::zeros((self.len() + features.nrows(), self.features.ncols()));
        all_features.slice_mut(s![..self.len(), ..]).assign(&self.features);
        if features.nrows() > 0 {
            all_features.slice_mut(s![self.len().., ..]).assign(&features);
        }
        let mut node_ids = self.node_ids.clone();
        node_ids.extend(ids);
        let mut all_groups = self.groups.clone();
        all_groups.extend(groups);
        let mut all_labels = self.labels.clone();
        all_labels.extend(labels);
        let mut edges = self.edges.clone();
        edges.extend(new_edges);
        CreditGraph::new(
            node_ids,
            all_features,
            all_groups,
            all_labels,
            edges,
            self.layout.clone(),
            self.group_names.clone(),
        )
    }
}

fn normalize_edges(n: usize, edges: Vec<(usize, usize)>, merge_duplicates: bool) -> Result<Vec<(usize, usize)>> {
    let mut out = Vec::with_capacity(edges.len());
    for (a, b) in edges {
        if a >= n || b >= n {
            return Err(Error::InvalidGraph(format!("edge ({a}, {b}) out of range for {n} nodes")));
        }
        if a == b {
            return Err(Error::InvalidGraph(format!("self-loop on node {a}")));
        }
        out.push((a.min(b), a.max(b)));
    }
    out.sort_unstable();
    let before = out.len();
    out.dedup();
    if !merge_duplicates && out.len() != before {
        return Err(Error::InvalidGraph("duplicate edges".into()));
    }
    Ok(out)
}

/// Sizes of the sensitive groups, label classes, and their four cells.
///
/// `cells[group][label]`, with groups indexed by [`Group::index`] and labels
/// by [`Label::index`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BalanceCounts {
    pub total: usize,
    pub majority: usize,
    pub minority: usize,
    pub good: usize,
    pub bad: usize,
    pub cells: [[usize; 2]; 2],
}

impl BalanceCounts {
    pub fn tally(groups: &[Group], labels: &[Label]) -> Self {
        let mut cells = [[0usize; 2]; 2];
        for (g, l) in groups.iter().zip(labels) {
            cells[g.index()][l.index()] += 1;
        }
        BalanceCounts::from_cells(cells)
    }

    pub fn from_cells(cells: [[usize; 2]; 2]) -> Self {
        let majority = cells[0][0] + cells[0][1];
        let minority = cells[1][0] + cells[1][1];
        BalanceCounts {
            total: majority + minority,
            majority,
            minority,
            good: cells[0][1] + cells[1][1],
            bad: cells[0][0] + cells[1][0],
            cells,
        }
    }

    pub fn cell(&self, group: Group, label: Label) -> usize {
        self.cells[group.index()][label.index()]
    }

    pub fn group(&self, group: Group) -> usize {
        match group {
            Group::Majority => self.majority,
            Group::Minority => self.minority,
        }
    }
}

pub fn group_counts(graph: &CreditGraph) -> BalanceCounts {
    BalanceCounts::tally(graph.groups(), graph.labels())
}

/// Restricts the graph to `keep`, preserving the original node order and ids.
/// Edges survive only when both endpoints are kept.
pub fn induced_subgraph<I>(graph: &CreditGraph, keep: I) -> Result<CreditGraph>
where
    I: IntoIterator<Item = NodeId>,
{
    let positions = graph.position_map();
    let mut selected = BTreeSet::new();
    for id in keep {
        let pos = *positions.get(&id).ok_or(Error::UnknownNode(id))?;
        selected.insert(pos);
    }
    let rows: Vec<usize> = selected.into_iter().collect();
    let mut remap = vec![usize::MAX; graph.len()];
    for (new, &old) in rows.iter().enumerate() {
        remap[old] = new;
    }
    let features = if rows.is_empty() {
        Array2::zeros((0, graph.features.ncols()))
    } else {
        graph.features.select(Axis(0), &rows)
    };
    let edges = graph
        .edges
        .iter()
        .filter(|&&(a, b)| remap[a] != usize::MAX && remap[b] != usize::MAX)
        .map(|&(a, b)| (remap[a], remap[b]))
        .collect();
    CreditGraph::new(
        rows.iter().map(|&r| graph.node_ids[r]).collect(),
        features,
        rows.iter().map(|&r| graph.groups[r]).collect(),
        rows.iter().map(|&r| graph.labels[r]).collect(),
        edges,
        graph.layout.clone(),
        graph.group_names.clone(),
    )
}
