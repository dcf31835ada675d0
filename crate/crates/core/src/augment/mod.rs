//! Augmentation of the underrepresented group with synthetic nodes.

pub mod gmm;
pub mod sage;
pub mod synth;

use ndarray::Axis;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{group_counts, BalanceCounts, CreditGraph, Group, Label, NodeId};
use gmm::{fit_gmm_with, GmmConfig};
use sage::{train_autoencoder, AutoencoderConfig};
use synth::{attach_synthetic, sample_synthetic, LabelVoter, ValidityRules};

/// Number of synthetic nodes that equalizes the groups: `O - U`.
pub fn compute_na(counts: &BalanceCounts) -> Result<usize> {
    counts
        .majority
        .checked_sub(counts.minority)
        .ok_or(Error::GroupsInverted {
            majority: counts.majority,
            required: counts.minority,
        })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    pub autoencoder: AutoencoderConfig,
    pub gmm: GmmConfig,
    pub attach_k: usize,
    pub vote_k: usize,
    /// Rejection sampling stops after `retry_factor * na` draws.
    pub retry_factor: usize,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            autoencoder: AutoencoderConfig::default(),
            gmm: GmmConfig::default(),
            attach_k: 10,
            vote_k: 5,
            retry_factor: 100,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AugmentProvenance {
    pub na: usize,
    pub draws: usize,
    pub rejected: usize,
    pub gmm_log_likelihood: Vec<f64>,
    pub gmm_converged: bool,
    pub autoencoder_loss: Vec<f64>,
    pub synthetic_ids: Vec<NodeId>,
    pub synthetic_bad: usize,
    pub synthetic_good: usize,
}

/// Trains the autoencoder on `graph`, fits the mixture to the latent codes
/// of the underrepresented group, samples `O - U` valid synthetic rows and
/// attaches them.
pub fn augment(graph: &CreditGraph, config: &AugmentConfig, seed: u64) -> Result<(CreditGraph, AugmentProvenance)> {
    let na = compute_na(&group_counts(graph))?;
    if na == 0 {
        return Ok((graph.clone(), AugmentProvenance::default()));
    }
    let trained = train_autoencoder(graph, &config.autoencoder, seed)?;
    let model = &trained.model;
    let latents = model.encoder.encode(graph);
    let minority: Vec<usize> = graph
        .groups()
        .iter()
        .enumerate()
        .filter(|(_, &g)| g == Group::Minority)
        .map(|(i, _)| i)
        .collect();
    let fit = fit_gmm_with(&latents.select(Axis(0), &minority), &config.gmm, seed)?;

    let rules = ValidityRules::from_layout(graph.layout());
    let voter = LabelVoter::new(latents, graph.labels().to_vec(), config.vote_k)?;
    let batch = sample_synthetic(&fit.gmm, &model.decoder, na, &rules, &voter, config.retry_factor, seed)?;
    let out = attach_synthetic(graph, &batch, &model.encoder, config.attach_k)?;

    let synthetic_bad = batch.labels.iter().filter(|&&l| l == Label::Bad).count();
    let provenance = AugmentProvenance {
        na,
        draws: batch.draws,
        rejected: batch.rejected,
        gmm_log_likelihood: fit.log_likelihood,
        gmm_converged: fit.converged,
        autoencoder_loss: trained.loss_trace,
        synthetic_ids: out.node_ids()[graph.len()..].to_vec(),
        synthetic_bad,
        synthetic_good: na - synthetic_bad,
    };
    Ok((out, provenance))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::tests::toy_from_cells;
    use crate::graph::{ColumnKind, FeatureColumn, FeatureLayout, GroupNames};
    use ndarray::Array2;

    #[test]
    fn na_arithmetic() {
        assert_eq!(compute_na(&BalanceCounts::from_cells([[191, 499], [109, 201]])).unwrap(), 380);
        assert_eq!(compute_na(&BalanceCounts::from_cells([[2, 3], [1, 4]])).unwrap(), 0);
        assert_eq!(compute_na(&BalanceCounts::from_cells([[3, 4], [1, 2]])).unwrap(), 4);
        assert!(compute_na(&BalanceCounts::from_cells([[1, 2], [3, 4]])).is_err());
    }

    #[test]
    fn balanced_input_is_identity() {
        let g = toy_from_cells([2, 3, 2, 3]);
        let (out, prov) = augment(&g, &AugmentConfig::default(), 0).unwrap();
        assert_eq!(out, g);
        assert_eq!(prov.na, 0);
    }

    fn mixed_graph(n: usize, minority: usize) -> CreditGraph {
        let layout = FeatureLayout {
            columns: vec![
                FeatureColumn {
                    name: "amount".into(),
                    offset: 0,
                    kind: ColumnKind::Continuous {
                        min: 250.0,
                        max: 18424.0,
                        integral: true,
                    },
                },
                FeatureColumn {
                    name: "kind".into(),
                    offset: 1,
                    kind: ColumnKind::Categorical {
                        levels: vec!["a".into(), "b".into(), "c".into(), "d".into()],
                    },
                },
                FeatureColumn {
                    name: "score".into(),
                    offset: 5,
                    kind: ColumnKind::Continuous {
                        min: 0.0,
                        max: 1.0,
                        integral: false,
                    },
                },
            ],
        };
        let features = Array2::from_shape_fn((n, 6), |(i, j)| match j {
            0 => ((i * 37) % n) as f64 / (n - 1) as f64,
            1..=4 => f64::from(u8::from(i % 4 + 1 == j)),
            _ => ((i * 11) % 17) as f64 / 16.0,
        });
        CreditGraph::new(
            (0..n as u32).map(NodeId).collect(),
            features,
            (0..n).map(|i| if i < minority { Group::Minority } else { Group::Majority }).collect(),
            (0..n).map(|i| if i % 4 == 0 { Label::Bad } else { Label::Good }).collect(),
            (1..n).map(|i| (i - 1, i)).collect(),
            layout,
            GroupNames::default(),
        )
        .unwrap()
    }

    #[test]
    fn pipeline_balances_and_preserves_originals() {
        let g = mixed_graph(40, 12);
        let config = AugmentConfig {
            autoencoder: AutoencoderConfig {
                epochs: 30,
                hidden: 8,
                latent: 3,
                ..AutoencoderConfig::default()
            },
            gmm: GmmConfig {
                components: 2,
                ..GmmConfig::default()
            },
            attach_k: 4,
            ..AugmentConfig::default()
        };
        let (out, prov) = augment(&g, &config, 7).unwrap();
        let counts = group_counts(&out);
        assert_eq!(counts.majority, counts.minority);
        assert_eq!(prov.na, 16);
        assert_eq!(out.len(), 56);
        assert_eq!(&out.node_ids()[..40], g.node_ids());
        assert_eq!(out.features().slice(ndarray::s![..40, ..]), g.features().view());
        assert_eq!(&out.labels()[..40], g.labels());
        assert!(g.edges().iter().all(|e| out.edges().contains(e)));
        assert_eq!(out.edges().len(), g.edges().len() + 16 * 4);
        for row in out.features().rows() {
            let amount = 250.0 + row[0] * (18424.0 - 250.0);
            assert!((250.0 - 1e-6..=18424.0 + 1e-6).contains(&amount));
        }
        let (again, _) = augment(&g, &config, 7).unwrap();
        assert_eq!(again, out);
    }
}
