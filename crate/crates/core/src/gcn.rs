//! Three-layer graph convolutional network for node classification.
//!
//! Each layer computes `Â · H · W + b`, where `Â = D^{-1/2} (A + I) D^{-1/2}`.
//! Hidden layers use ReLU; the output layer has two logits per node
//! (bad, good) followed by a row softmax. Training is full-batch and
//! transductive: the forward pass covers every node while the cross-entropy
//! only sees the training mask.

use std::rc::Rc;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{softmax_rows, Tape, Var};
use crate::error::{Error, Result};
use crate::graph::{CreditGraph, Group, Label};
use crate::optim::{glorot_uniform, Adam};
use crate::sparse::CsrMatrix;
use crate::seeded_stream;

const SPLIT_STREAM: u64 = 1;
const INIT_STREAM: u64 = 2;

/// Symmetrically normalized adjacency with self-loops.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalizedAdjacency(CsrMatrix);

impl NormalizedAdjacency {
    pub fn matrix(&self) -> &CsrMatrix {
        &self.0
    }
}

pub fn normalize_adjacency(graph: &CreditGraph) -> NormalizedAdjacency {
    let n = graph.len();
    let neighbors = graph.neighbors();
    // degree of A + I
    let inv_sqrt: Vec<f64> = neighbors.iter().map(|nb| 1.0 / ((nb.len() + 1) as f64).sqrt()).collect();
    let rows = (0..n)
        .map(|i| {
            let mut row = Vec::with_capacity(neighbors[i].len() + 1);
            row.push((i, inv_sqrt[i] * inv_sqrt[i]));
            row.extend(neighbors[i].iter().map(|&j| (j, inv_sqrt[i] * inv_sqrt[j])));
            row
        })
        .collect();
    NormalizedAdjacency(CsrMatrix::from_rows(n, rows))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub hidden1: usize,
    pub hidden2: usize,
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            learning_rate: 0.01,
            hidden1: 32,
            hidden2: 16,
            train_fraction: 0.8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Config(format!(
                "train_fraction must lie in (0, 1), got {}",
                self.train_fraction
            )));
        }
        if self.epochs == 0 || self.hidden1 == 0 || self.hidden2 == 0 {
            return Err(Error::Config("epochs and hidden sizes must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    /// Cells too small to stratify; their nodes were assigned at random.
    pub fallback_cells: Vec<(Group, Label)>,
}

impl Split {
    pub fn is_test_mask(&self, n: usize) -> Vec<bool> {
        let mut mask = vec![false; n];
        for &i in &self.test {
            mask[i] = true;
        }
        mask
    }
}

/// Train/test split stratified by (group, label) cell. Each cell with at
/// least two nodes contributes `round(len * fraction)` training nodes,
/// clamped so both sides get at least one.
pub fn split_nodes(graph: &CreditGraph, fraction: f64, seed: u64) -> Result<Split> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Config(format!("split fraction must lie in (0, 1), got {fraction}")));
    }
    let mut rng = seeded_stream(seed, SPLIT_STREAM);
    let mut train = Vec::new();
    let mut test = Vec::new();
    let mut fallback_cells = Vec::new();
    for group in Group::ALL {
        for label in Label::ALL {
            let mut cell: Vec<usize> = (0..graph.len())
                .filter(|&i| graph.groups()[i] == group && graph.labels()[i] == label)
                .collect();
            if cell.is_empty() {
                continue;
            }
            if cell.len() < 2 {
                fallback_cells.push((group, label));
                for i in cell {
                    if rng.random::<f64>() < fraction {
                        train.push(i);
                    } else {
                        test.push(i);
                    }
                }
                continue;
            }
            cell.shuffle(&mut rng);
            let n_train = ((cell.len() as f64 * fraction).round() as usize).clamp(1, cell.len() - 1);
            train.extend_from_slice(&cell[..n_train]);
            test.extend_from_slice(&cell[n_train..]);
        }
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(Split {
        train,
        test,
        fallback_cells,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GcnModel {
    pub weights: [Array2<f64>; 3],
    pub biases: [Array2<f64>; 3],
}

pub(crate) struct Forward {
    pub tape: Tape,
    pub weights: [Var; 3],
    pub biases: [Var; 3],
    pub logits: Var,
}

impl GcnModel {
    pub fn init(in_dim: usize, hidden1: usize, hidden2: usize, seed: u64) -> Self {
        let mut rng = seeded_stream(seed, INIT_STREAM);
        let dims = [in_dim, hidden1, hidden2, 2];
        let weights = [0, 1, 2].map(|l| glorot_uniform(&mut rng, dims[l], dims[l + 1]));
        let biases = [0, 1, 2].map(|l| Array2::zeros((1, dims[l + 1])));
        GcnModel { weights, biases }
    }

    pub(crate) fn forward(&self, adj: &Rc<CsrMatrix>, x: &Array2<f64>) -> Forward {
        let mut tape = Tape::new();
        let weights = self.weights.clone().map(|w| tape.leaf(w));
        let biases = self.biases.clone().map(|b| tape.leaf(b));
        let mut h = tape.leaf(x.clone());
        for layer in 0..3 {
            let hw = tape.matmul(h, weights[layer]);
            let propagated = tape.propagate(adj, hw);
            h = tape.add_bias(propagated, biases[layer]);
            if layer < 2 {
                h = tape.relu(h);
            }
        }
        Forward {
            tape,
            weights,
            biases,
            logits: h,
        }
    }

    /// Row-softmax class probabilities, column 0 = bad, column 1 = good.
    pub fn predict_proba(&self, adj: &NormalizedAdjacency, x: &Array2<f64>) -> Array2<f64> {
        let adj = Rc::new(adj.matrix().clone());
        let fwd = self.forward(&adj, x);
        softmax_rows(fwd.tape.value(fwd.logits))
    }

    fn params(&self) -> Vec<Array2<f64>> {
        self.weights.iter().chain(&self.biases).cloned().collect()
    }

    fn set_params(&mut self, params: Vec<Array2<f64>>) {
        let mut it = params.into_iter();
        for w in self.weights.iter_mut() {
            *w = it.next().unwrap();
        }
        for b in self.biases.iter_mut() {
            *b = it.next().unwrap();
        }
    }
}

/// Masked cross-entropy over the `train` positions of `graph`, with
/// gradients ordered `[w1, w2, w3, b1, b2, b3]`.
pub fn training_loss_and_gradients(model: &GcnModel, graph: &CreditGraph, train: &[usize]) -> (f64, Vec<Array2<f64>>) {
    let adj = Rc::new(normalize_adjacency(graph).0);
    let targets = Rc::new(graph.labels().iter().map(|l| l.index()).collect());
    loss_and_grads(model, &adj, graph.features(), &targets, &Rc::new(train.to_vec()))
}

/// Loss and gradients `[w1, w2, w3, b1, b2, b3]` for one full-batch step.
pub(crate) fn loss_and_grads(
    model: &GcnModel,
    adj: &Rc<CsrMatrix>,
    x: &Array2<f64>,
    targets: &Rc<Vec<usize>>,
    mask: &Rc<Vec<usize>>,
) -> (f64, Vec<Array2<f64>>) {
    let mut fwd = model.forward(adj, x);
    let loss = fwd.tape.softmax_cross_entropy(fwd.logits, targets, mask);
    let grads = fwd.tape.backward(loss);
    let vars = fwd.weights.iter().chain(&fwd.biases);
    let out = vars
        .map(|&v| {
            grads
                .get(v)
                .cloned()
                .unwrap_or_else(|| Array2::zeros(fwd.tape.value(v).raw_dim()))
        })
        .collect();
    (fwd.tape.scalar(loss), out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub model: GcnModel,
    /// `n x 2`, rows sum to one.
    pub probabilities: Array2<f64>,
    pub predictions: Vec<Label>,
    /// Training loss before each epoch's update.
    pub loss_trace: Vec<f64>,
    pub split: Split,
}

impl TrainedModel {
    pub fn prob_good(&self) -> Vec<f64> {
        self.probabilities.column(Label::Good.index()).to_vec()
    }
}

/// Stratified split plus fresh Glorot initialization, both from `config.seed`.
pub fn train(graph: &CreditGraph, config: &TrainConfig) -> Result<TrainedModel> {
    config.validate()?;
    let split = split_nodes(graph, config.train_fraction, config.seed)?;
    let model = GcnModel::init(graph.features().ncols(), config.hidden1, config.hidden2, config.seed);
    train_from(graph, model, split, config)
}

/// Trains starting from `model` on the given split.
pub fn train_from(graph: &CreditGraph, mut model: GcnModel, split: Split, config: &TrainConfig) -> Result<TrainedModel> {
    let targets: Rc<Vec<usize>> = Rc::new(graph.labels().iter().map(|l| l.index()).collect());
    let has_class = |c: usize| split.train.iter().any(|&i| targets[i] == c);
    if !(has_class(0) && has_class(1)) {
        return Err(Error::SingleClass);
    }
    let adj = normalize_adjacency(graph);
    let adj_rc = Rc::new(adj.matrix().clone());
    let x = graph.features();
    let mask = Rc::new(split.train.clone());

    let mut params = model.params();
    let mut adam = Adam::new(config.learning_rate, &params);
    let mut loss_trace = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let (loss, grads) = loss_and_grads(&model, &adj_rc, x, &targets, &mask);
        if !loss.is_finite() {
            return Err(Error::Diverged { epoch: epoch + 1 });
        }
        loss_trace.push(loss);
        adam.step(&mut params, &grads);
        model.set_params(params.clone());
    }

    let probabilities = model.predict_proba(&adj, x);
    let predictions = probabilities
        .axis_iter(Axis(0))
        .map(|row| if row[1] > row[0] { Label::Good } else { Label::Bad })
        .collect();
    Ok(TrainedModel {
        model,
        probabilities,
        predictions,
        loss_trace,
        split,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::tests::{max_relative_error, numeric_grad};
    use crate::graph::tests::{toy, toy_from_cells};
    use crate::graph::{FeatureLayout, GroupNames, NodeId};
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn isolated_node_is_one() {
        let g = toy(&[(Group::Majority, Label::Good)], vec![]);
        assert_eq!(normalize_adjacency(&g).matrix().to_dense(), array![[1.0]]);
    }

    #[test]
    fn two_connected_nodes() {
        let g = toy(&[(Group::Majority, Label::Good); 2], vec![(0, 1)]);
        let a = normalize_adjacency(&g).matrix().to_dense();
        assert!(a.iter().all(|v| (v - 0.5).abs() < 1e-15), "{a}");
    }

    #[test]
    fn path_of_three() {
        // degrees with self loops: 2, 3, 2
        let g = toy(&[(Group::Majority, Label::Good); 3], vec![(0, 1), (1, 2)]);
        let a = normalize_adjacency(&g).matrix().to_dense();
        let r6 = 1.0 / 6f64.sqrt();
        let expected = array![[0.5, r6, 0.0], [r6, 1.0 / 3.0, r6], [0.0, r6, 0.5]];
        for (x, y) in a.iter().zip(expected.iter()) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn normalized_adjacency_is_symmetric_with_edge_pattern() {
        let g = toy(
            &[(Group::Majority, Label::Good); 6],
            vec![(0, 1), (0, 2), (1, 2), (3, 4), (2, 4)],
        );
        let a = normalize_adjacency(&g).matrix().to_dense();
        for i in 0..6 {
            for j in 0..6 {
                assert!((a[[i, j]] - a[[j, i]]).abs() < 1e-12);
                let linked = i == j || g.edges().contains(&(i.min(j), i.max(j)));
                assert_eq!(a[[i, j]] != 0.0, linked);
            }
        }
        assert_eq!(a[[5, 5]], 1.0);
    }

    #[test]
    fn german_sized_split_counts() {
        let g = toy_from_cells([191, 499, 109, 201]);
        let split = split_nodes(&g, 0.8, 3).unwrap();
        assert_eq!(split.train.len(), 800);
        assert_eq!(split.test.len(), 200);
        assert!(split.fallback_cells.is_empty());
    }

    #[test]
    fn tiny_cells_fall_back() {
        let g = toy(&[(Group::Majority, Label::Good), (Group::Minority, Label::Bad)], vec![]);
        let split = split_nodes(&g, 0.5, 0).unwrap();
        assert_eq!(split.fallback_cells.len(), 2);
        assert_eq!(split.train.len() + split.test.len(), 2);
    }

    #[test]
    fn split_partition_over_seeds() {
        let g = toy_from_cells([7, 13, 5, 1]);
        for seed in 0..100 {
            let split = split_nodes(&g, 0.7, seed).unwrap();
            let mut all: Vec<usize> = split.train.iter().chain(&split.test).copied().collect();
            all.sort_unstable();
            assert_eq!(all, (0..g.len()).collect::<Vec<_>>());
        }
        assert!(split_nodes(&g, 1.0, 0).is_err());
        assert!(split_nodes(&g, 0.0, 0).is_err());
    }

    fn random_graph(n: usize, d: usize, seed: u64) -> CreditGraph {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array2::from_shape_simple_fn((n, d), || rng.random::<f64>());
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if rng.random::<f64>() < 0.4 {
                    edges.push((i, j));
                }
            }
        }
        CreditGraph::new(
            (0..n as u32).map(NodeId).collect(),
            x,
            (0..n).map(|i| if i % 3 == 0 { Group::Minority } else { Group::Majority }).collect(),
            (0..n).map(|i| Label::from_index(i % 2)).collect(),
            edges,
            FeatureLayout::anonymous(d),
            GroupNames::default(),
        )
        .unwrap()
    }

    #[test]
    fn gradients_match_finite_differences() {
        let g = random_graph(6, 3, 11);
        let adj = Rc::new(normalize_adjacency(&g).matrix().clone());
        let targets = Rc::new(g.labels().iter().map(|l| l.index()).collect::<Vec<_>>());
        let mask = Rc::new(vec![0, 1, 2, 4]);
        let model = GcnModel::init(3, 4, 3, 5);
        let mut model = model;
        // nonzero biases so every ReLU sees both signs
        for (l, b) in model.biases.iter_mut().enumerate() {
            b.mapv_inplace(|_| 0.05 * (l as f64 + 1.0));
        }
        let (_, analytic) = loss_and_grads(&model, &adj, g.features(), &targets, &mask);
        let mut params = model.params();
        for which in 0..6 {
            let numeric = numeric_grad(&mut params, which, |p| {
                let mut m = model.clone();
                m.set_params(p.to_vec());
                loss_and_grads(&m, &adj, g.features(), &targets, &mask).0
            });
            let err = max_relative_error(&analytic[which], &numeric);
            assert!(err < 1e-4, "parameter {which}: relative error {err}");
        }
    }

    fn two_communities(seed: u64) -> CreditGraph {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 20;
        let x = Array2::from_shape_fn((n, 3), |(i, j)| {
            let indicator = if (i < 10) == (j == 0) { 1.0 } else { 0.0 };
            if j < 2 {
                indicator + 0.1 * rng.random::<f64>()
            } else {
                rng.random::<f64>()
            }
        });
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if (i < 10) == (j < 10) {
                    edges.push((i, j));
                }
            }
        }
        CreditGraph::new(
            (0..n as u32).map(NodeId).collect(),
            x,
            (0..n).map(|i| if i % 2 == 0 { Group::Majority } else { Group::Minority }).collect(),
            (0..n).map(|i| if i < 10 { Label::Good } else { Label::Bad }).collect(),
            edges,
            FeatureLayout::anonymous(3),
            GroupNames::default(),
        )
        .unwrap()
    }

    #[test]
    fn separable_communities_are_learned() {
        let g = two_communities(1);
        let config = TrainConfig {
            seed: 4,
            ..TrainConfig::default()
        };
        let trained = train(&g, &config).unwrap();
        let correct = trained
            .split
            .test
            .iter()
            .filter(|&&i| trained.predictions[i] == g.labels()[i])
            .count();
        assert_eq!(correct, trained.split.test.len());
        assert!(trained.loss_trace.last().unwrap() <= &trained.loss_trace[0]);
        for row in trained.probabilities.rows() {
            assert!(row.iter().all(|&p| p >= 0.0));
            assert!((row.sum() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn constant_features_have_no_skill() {
        let n = 200;
        let mut accs = Vec::new();
        for seed in 0..10 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let mut labels: Vec<Label> = (0..n).map(|i| Label::from_index(i % 2)).collect();
            labels.shuffle(&mut rng);
            let mut edges = Vec::new();
            for i in 0..n {
                for _ in 0..3 {
                    let j = rng.random_range(0..n);
                    if j != i {
                        edges.push((i, j));
                    }
                }
            }
            let g = CreditGraph::new(
                (0..n as u32).map(NodeId).collect(),
                Array2::ones((n, 4)),
                vec![Group::Majority; n],
                labels,
                vec![],
                FeatureLayout::anonymous(4),
                GroupNames::default(),
            )
            .unwrap()
            .with_edges(edges)
            .unwrap();
            let trained = train(&g, &TrainConfig { seed, ..TrainConfig::default() }).unwrap();
            let test = &trained.split.test;
            let correct = test.iter().filter(|&&i| trained.predictions[i] == g.labels()[i]).count();
            accs.push(correct as f64 / test.len() as f64);
        }
        let mean = accs.iter().sum::<f64>() / accs.len() as f64;
        assert!((mean - 0.5).abs() <= 0.05, "mean accuracy {mean}");
    }

    #[test]
    fn single_class_training_set_is_rejected() {
        let g = toy(&[(Group::Majority, Label::Good); 4], vec![(0, 1)]);
        assert!(matches!(train(&g, &TrainConfig::default()), Err(Error::SingleClass)));
    }

    #[test]
    fn permutation_equivariance() {
        let g = random_graph(12, 4, 2);
        let perm: Vec<usize> = vec![5, 3, 11, 0, 7, 1, 9, 2, 10, 4, 8, 6]; // new position p holds old node perm[p]
        let mut inverse = vec![0; 12];
        for (new, &old) in perm.iter().enumerate() {
            inverse[old] = new;
        }
        let permuted = CreditGraph::new(
            perm.iter().map(|&o| g.node_ids()[o]).collect(),
            g.features().select(Axis(0), &perm),
            perm.iter().map(|&o| g.groups()[o]).collect(),
            perm.iter().map(|&o| g.labels()[o]).collect(),
            g.edges().iter().map(|&(a, b)| (inverse[a], inverse[b])).collect(),
            g.layout().clone(),
            GroupNames::default(),
        )
        .unwrap();
        let config = TrainConfig {
            epochs: 50,
            ..TrainConfig::default()
        };
        let split = split_nodes(&g, 0.75, 1).unwrap();
        let permuted_split = Split {
            train: split.train.iter().map(|&i| inverse[i]).collect(),
            test: split.test.iter().map(|&i| inverse[i]).collect(),
            fallback_cells: vec![],
        };
        let init = GcnModel::init(4, 8, 4, 9);
        let a = train_from(&g, init.clone(), split, &config).unwrap();
        let b = train_from(&permuted, init, permuted_split, &config).unwrap();
        for (new, &old) in perm.iter().enumerate() {
            let (pa, pb) = (a.probabilities[[old, 1]], b.probabilities[[new, 1]]);
            assert!((pa - pb).abs() < 1e-9, "node {old}: {pa} vs {pb}");
        }
    }

    #[test]
    fn training_is_deterministic() {
        let g = random_graph(12, 4, 3);
        let config = TrainConfig {
            epochs: 20,
            train_fraction: 0.6,
            seed: 8,
            ..TrainConfig::default()
        };
        assert_eq!(train(&g, &config).unwrap(), train(&g, &config).unwrap());
    }
}
