//! Sparsification by node sampling.
//!
//! Each sampler keeps every minority-group node and downsamples the majority
//! group; the prepared dataset is the induced subgraph on the returned ids.

use std::collections::BTreeSet;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{group_counts, CreditGraph, Group, Label, NodeId};
use crate::seeded_rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplingMethod {
    Random,
    Stratified,
    Weighted,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplingSpec {
    pub method: SamplingMethod,
    pub seed: u64,
    /// Number of majority nodes to keep; `None` means the minority size.
    /// Ignored by stratified sampling, which is fixed by the cell sizes.
    #[serde(default)]
    pub target: Option<usize>,
}

impl SamplingSpec {
    pub fn new(method: SamplingMethod, seed: u64) -> Self {
        SamplingSpec {
            method,
            seed,
            target: None,
        }
    }
}

/// Dispatches on `spec.method`.
pub fn sample(graph: &CreditGraph, spec: &SamplingSpec) -> Result<BTreeSet<NodeId>> {
    match spec.method {
        SamplingMethod::Random => random_downsample(graph, spec),
        SamplingMethod::Stratified => stratified_downsample(graph, spec),
        SamplingMethod::Weighted => weighted_downsample(graph, spec),
    }
}

fn majority_target(graph: &CreditGraph, spec: &SamplingSpec) -> Result<usize> {
    let counts = group_counts(graph);
    let target = spec.target.unwrap_or(counts.minority);
    if target > counts.majority {
        return Err(Error::TargetTooLarge {
            target,
            available: counts.majority,
        });
    }
    Ok(target)
}

fn positions_where(graph: &CreditGraph, pred: impl Fn(Group, Label) -> bool) -> Vec<usize> {
    graph
        .groups()
        .iter()
        .zip(graph.labels())
        .enumerate()
        .filter(|(_, (&g, &l))| pred(g, l))
        .map(|(i, _)| i)
        .collect()
}

fn with_minority(graph: &CreditGraph, majority_kept: impl IntoIterator<Item = usize>) -> BTreeSet<NodeId> {
    let ids = graph.node_ids();
    let mut keep: BTreeSet<NodeId> = positions_where(graph, |g, _| g == Group::Minority)
        .into_iter()
        .map(|i| ids[i])
        .collect();
    keep.extend(majority_kept.into_iter().map(|i| ids[i]));
    keep
}

/// Uniform sample of the majority group, without replacement.
pub fn random_downsample(graph: &CreditGraph, spec: &SamplingSpec) -> Result<BTreeSet<NodeId>> {
    let target = majority_target(graph, spec)?;
    let majority = positions_where(graph, |g, _| g == Group::Majority);
    let mut rng = seeded_rng(spec.seed);
    let picked = index::sample(&mut rng, majority.len(), target);
    Ok(with_minority(graph, picked.into_iter().map(|i| majority[i])))
}

/// Per label, keeps as many majority nodes as the minority cell holds, so
/// every (group, label) cell matches its counterpart exactly.
pub fn stratified_downsample(graph: &CreditGraph, spec: &SamplingSpec) -> Result<BTreeSet<NodeId>> {
    let counts = group_counts(graph);
    let mut rng = seeded_rng(spec.seed);
    let mut kept = Vec::new();
    for label in Label::ALL {
        let want = counts.cell(Group::Minority, label);
        let cell = positions_where(graph, |g, l| g == Group::Majority && l == label);
        if cell.len() < want {
            return Err(Error::CellTooSmall {
                label: label.name(),
                majority: cell.len(),
                minority: want,
            });
        }
        kept.extend(index::sample(&mut rng, cell.len(), want).into_iter().map(|i| cell[i]));
    }
    Ok(with_minority(graph, kept))
}

/// Majority nodes drawn one at a time without replacement, each with weight
/// proportional to the inverse size of its (group, label) cell. Remaining
/// weights are renormalized after every draw.
pub fn weighted_downsample(graph: &CreditGraph, spec: &SamplingSpec) -> Result<BTreeSet<NodeId>> {
    let target = majority_target(graph, spec)?;
    let counts = group_counts(graph);
    let majority = positions_where(graph, |g, _| g == Group::Majority);
    let mut weights: Vec<f64> = majority
        .iter()
        .map(|&i| 1.0 / counts.cell(Group::Majority, graph.labels()[i]) as f64)
        .collect();
    let mut rng = seeded_rng(spec.seed);
    let mut kept = Vec::with_capacity(target);
    for _ in 0..target {
        let total: f64 = weights.iter().sum();
        let mut u = rng.random::<f64>() * total;
        let mut chosen = None;
        for (j, &w) in weights.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            chosen = Some(j);
            if u < w {
                break;
            }
            u -= w;
        }
        // rounding can run past the end; `chosen` is then the last live entry
        let j = chosen.expect("target <= majority size leaves a live weight");
        weights[j] = 0.0;
        kept.push(majority[j]);
    }
    Ok(with_minority(graph, kept))
}
