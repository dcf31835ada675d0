//! Synthetic node generation: GMM draws decoded to feature rows, checked
//! against the original data's attribute ranges, labelled by a latent-space
//! neighbour vote, and wired into the graph.

use std::collections::{BTreeMap, BTreeSet};

use ndarray::{Array1, Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use super::gmm::LatentGmm;
use super::sage::{FeatureDecoder, SageEncoder};
use crate::error::{Error, Result};
use crate::graph::{ColumnKind, CreditGraph, FeatureLayout, Group, Label, NodeId};
use crate::knn::{nearest, Metric};
use crate::seeded_stream;

const SAMPLE_STREAM: u64 = 5;

/// Admissible values per attribute, taken from the original dataset's
/// layout. Continuous bounds are in raw units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidityRules {
    layout: FeatureLayout,
    ranges: BTreeMap<String, (f64, f64)>,
    levels: BTreeMap<String, BTreeSet<String>>,
}

impl ValidityRules {
    pub fn from_layout(layout: &FeatureLayout) -> Self {
        let mut ranges = BTreeMap::new();
        let mut levels = BTreeMap::new();
        for col in &layout.columns {
            match &col.kind {
                ColumnKind::Continuous { min, max, .. } => {
                    ranges.insert(col.name.clone(), (*min, *max));
                }
                ColumnKind::Categorical { levels: seen } => {
                    levels.insert(col.name.clone(), seen.iter().cloned().collect());
                }
            }
        }
        ValidityRules {
            layout: layout.clone(),
            ranges,
            levels,
        }
    }

    /// Tightens a continuous range. The result is the intersection with the
    /// current range, so rules can only ever narrow; an empty intersection
    /// makes every candidate invalid.
    pub fn narrow_range(&mut self, column: &str, lo: f64, hi: f64) -> Result<()> {
        let range = self
            .ranges
            .get_mut(column)
            .ok_or_else(|| Error::UnknownColumn(column.to_owned()))?;
        range.0 = range.0.max(lo);
        range.1 = range.1.min(hi);
        Ok(())
    }

    /// Restricts a categorical attribute to a subset of its seen levels.
    pub fn restrict_levels<'a, I>(&mut self, column: &str, allowed: I) -> Result<()>
    where
        I: IntoIterator<Item = &'a str>,
    {
        let current = self
            .levels
            .get_mut(column)
            .ok_or_else(|| Error::UnknownColumn(column.to_owned()))?;
        let allowed: BTreeSet<&str> = allowed.into_iter().collect();
        current.retain(|l| allowed.contains(l.as_str()));
        Ok(())
    }

    pub fn range(&self, column: &str) -> Option<(f64, f64)> {
        self.ranges.get(column).copied()
    }

    /// Snaps a decoded row onto the encoding (argmax one-hot, integral
    /// rounding) and checks it. Returns `None` when any attribute falls
    /// outside its admissible values.
    pub fn validate(&self, row: ArrayView1<f64>) -> Option<Array1<f64>> {
        if row.len() != self.layout.width() || row.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let mut out = Array1::zeros(row.len());
        for col in &self.layout.columns {
            match &col.kind {
                ColumnKind::Continuous { min, max, integral } => {
                    let span = max - min;
                    let mut raw = min + row[col.offset] * span;
                    if *integral {
                        raw = raw.round();
                    }
                    let (lo, hi) = self.ranges[&col.name];
                    if !(lo <= raw && raw <= hi) {
                        return None;
                    }
                    out[col.offset] = if span > 0.0 { (raw - min) / span } else { 0.0 };
                }
                ColumnKind::Categorical { levels } => {
                    let block = row.slice(ndarray::s![col.offset..col.offset + levels.len()]);
                    let mut best = 0;
                    for (i, &v) in block.iter().enumerate() {
                        if v > block[best] {
                            best = i;
                        }
                    }
                    if !self.levels[&col.name].contains(&levels[best]) {
                        return None;
                    }
                    out[col.offset + best] = 1.0;
                }
            }
        }
        Some(out)
    }
}

/// Majority label among the `k` nearest real nodes in latent space.
#[derive(Clone, Debug)]
pub struct LabelVoter {
    latents: Array2<f64>,
    labels: Vec<Label>,
    k: usize,
}

impl LabelVoter {
    pub fn new(latents: Array2<f64>, labels: Vec<Label>, k: usize) -> Result<Self> {
        if k == 0 || k > labels.len() || latents.nrows() != labels.len() {
            return Err(Error::InvalidK { k, nodes: labels.len() });
        }
        Ok(LabelVoter { latents, labels, k })
    }

    /// Ties go to the label of the single nearest neighbour.
    pub fn vote(&self, z: ArrayView1<f64>) -> Label {
        let near = nearest(self.labels.len(), self.k, None, |j| {
            Metric::Euclidean.distance(z, self.latents.row(j))
        });
        let good = near.iter().filter(|&&j| self.labels[j] == Label::Good).count();
        let bad = near.len() - good;
        match good.cmp(&bad) {
            std::cmp::Ordering::Greater => Label::Good,
            std::cmp::Ordering::Less => Label::Bad,
            std::cmp::Ordering::Equal => self.labels[near[0]],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticBatch {
    /// Accepted rows in the graph's feature encoding.
    pub features: Array2<f64>,
    pub labels: Vec<Label>,
    /// The GMM draw each accepted row was decoded from.
    pub latents: Array2<f64>,
    pub draws: usize,
    pub rejected: usize,
}

impl SyntheticBatch {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Rejection sampling: draw from the mixture, decode, keep rows that pass
/// `rules`, until `na` rows are accepted or `retry_factor * na` draws have
/// been spent. Candidates are drawn in blocks but accepted in draw order.
pub fn sample_synthetic(
    gmm: &LatentGmm,
    decoder: &FeatureDecoder,
    na: usize,
    rules: &ValidityRules,
    voter: &LabelVoter,
    retry_factor: usize,
    seed: u64,
) -> Result<SyntheticBatch> {
    let d = gmm.means.ncols();
    let width = decoder.w2.ncols();
    let cap = retry_factor.saturating_mul(na);
    let mut rng = seeded_stream(seed, SAMPLE_STREAM);
    let mut rows: Vec<Array1<f64>> = Vec::with_capacity(na);
    let mut codes: Vec<Array1<f64>> = Vec::with_capacity(na);
    let mut draws = 0;
    while rows.len() < na {
        let block = (na - rows.len()).min(cap - draws);
        if block == 0 {
            return Err(Error::RetryCapExhausted {
                accepted: rows.len(),
                requested: na,
                draws,
            });
        }
        let mut z = Array2::zeros((block, d));
        for mut r in z.rows_mut() {
            r.assign(&gmm.sample(&mut rng));
        }
        let decoded = decoder.decode(&z);
        for (zr, xr) in z.rows().into_iter().zip(decoded.rows()) {
            draws += 1;
            if let Some(valid) = rules.validate(xr) {
                rows.push(valid);
                codes.push(zr.to_owned());
                if rows.len() == na {
                    break;
                }
            }
        }
    }
    let stack = |v: &[Array1<f64>], cols: usize| {
        let mut m = Array2::zeros((v.len(), cols));
        for (mut dst, src) in m.axis_iter_mut(Axis(0)).zip(v) {
            dst.assign(src);
        }
        m
    };
    let latents = stack(&codes, d);
    let labels = latents.rows().into_iter().map(|z| voter.vote(z)).collect();
    Ok(SyntheticBatch {
        features: stack(&rows, width),
        labels,
        latents,
        draws,
        rejected: draws - na,
    })
}

/// Appends the batch as underrepresented-group nodes, each linked to its `k`
/// nearest real nodes (by latent distance between its GMM draw and the
/// encoder's codes for the real graph). Original nodes and edges are kept
/// as they are; new ids continue after the largest existing id.
pub fn attach_synthetic(graph: &CreditGraph, batch: &SyntheticBatch, encoder: &SageEncoder, k: usize) -> Result<CreditGraph> {
    if batch.is_empty() {
        return Ok(graph.clone());
    }
    let n = graph.len();
    if k == 0 || k > n {
        return Err(Error::InvalidK { k, nodes: n });
    }
    let real = encoder.encode(graph);
    let mut edges = Vec::with_capacity(batch.len() * k);
    for (i, z) in batch.latents.rows().into_iter().enumerate() {
        for j in nearest(n, k, None, |j| Metric::Euclidean.distance(z, real.row(j))) {
            edges.push((n + i, j));
        }
    }
    let first = graph.next_node_id().0;
    let ids = (0..batch.len() as u32).map(|i| NodeId(first + i)).collect();
    graph.append_nodes(
        ids,
        batch.features.clone(),
        vec![Group::Minority; batch.len()],
        batch.labels.clone(),
        edges,
    )
}
