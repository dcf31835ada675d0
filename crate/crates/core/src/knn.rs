//! Symmetrized k-nearest-neighbour edge construction.

use std::collections::BTreeSet;

use ndarray::ArrayView1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::CreditGraph;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    #[default]
    Euclidean,
    Cosine,
}

impl Metric {
    pub fn distance(self, a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
        match self {
            Metric::Euclidean => a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt(),
            Metric::Cosine => {
                let dot = a.dot(&b);
                let na = a.dot(&a).sqrt();
                let nb = b.dot(&b).sqrt();
                if na == 0.0 || nb == 0.0 {
                    1.0
                } else {
                    1.0 - dot / (na * nb)
                }
            }
        }
    }
}

/// The `k` indices in `0..count` with the smallest `dist`, ties broken by
/// ascending index. `skip` excludes one index (usually the query itself).
pub(crate) fn nearest<F>(count: usize, k: usize, skip: Option<usize>, dist: F) -> Vec<usize>
where
    F: Fn(usize) -> f64,
{
    let mut scored: Vec<(f64, usize)> = (0..count)
        .filter(|&j| Some(j) != skip)
        .map(|j| (dist(j), j))
        .collect();
    let by_dist = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if k < scored.len() {
        scored.select_nth_unstable_by(k, by_dist);
        scored.truncate(k);
    }
    scored.sort_by(by_dist);
    scored.into_iter().map(|(_, j)| j).collect()
}

/// Each node is linked to its `k` nearest neighbours in feature space; the
/// directed relation is then symmetrized. Returned pairs are positional with
/// `a < b`, sorted.
pub fn build_knn_edges(graph: &CreditGraph, k: usize, metric: Metric) -> Result<Vec<(usize, usize)>> {
    let n = graph.len();
    if k == 0 || k >= n {
        return Err(Error::InvalidK { k, nodes: n });
    }
    let x = graph.features();
    let mut edges = BTreeSet::new();
    for i in 0..n {
        let row = x.row(i);
        for j in nearest(n, k, Some(i), |j| metric.distance(row, x.row(j))) {
            edges.insert((i.min(j), i.max(j)));
        }
    }
    Ok(edges.into_iter().collect())
}
