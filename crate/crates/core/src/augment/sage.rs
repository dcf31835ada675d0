//! Neighbourhood-aggregating autoencoder.
//!
//! The encoder has two mean-aggregation layers,
//! `h' = act(h · W_self + mean_{j ∈ N(i)} h_j · W_neigh + b)`, with ReLU after
//! the first layer and tanh on the latent code. The decoder is a two-layer
//! dense network whose sigmoid output matches the `[0, 1]` feature encoding.

use std::rc::Rc;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::graph::CreditGraph;
use crate::optim::{glorot_uniform, Adam};
use crate::seeded_stream;
use crate::sparse::CsrMatrix;

const INIT_STREAM: u64 = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AutoencoderConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub hidden: usize,
    pub latent: usize,
}

impl Default for AutoencoderConfig {
    fn default() -> Self {
        AutoencoderConfig {
            epochs: 200,
            learning_rate: 0.01,
            hidden: 32,
            latent: 16,
        }
    }
}

/// Row-normalized adjacency: row `i` averages the neighbours of `i`.
/// An isolated node aggregates only itself.
pub fn mean_aggregator(graph: &CreditGraph) -> CsrMatrix {
    let rows = graph
        .neighbors()
        .into_iter()
        .enumerate()
        .map(|(i, nb)| {
            if nb.is_empty() {
                vec![(i, 1.0)]
            } else {
                let w = 1.0 / nb.len() as f64;
                nb.into_iter().map(|j| (j, w)).collect()
            }
        })
        .collect();
    CsrMatrix::from_rows(graph.len(), rows)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SageLayer {
    pub w_self: Array2<f64>,
    pub w_neigh: Array2<f64>,
    pub bias: Array2<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SageEncoder {
    pub layers: [SageLayer; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureDecoder {
    pub w1: Array2<f64>,
    pub b1: Array2<f64>,
    pub w2: Array2<f64>,
    pub b2: Array2<f64>,
}

impl SageEncoder {
    pub fn latent_dim(&self) -> usize {
        self.layers[1].w_self.ncols()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].w_self.nrows()
    }

    fn forward(&self, tape: &mut Tape, agg: &Rc<CsrMatrix>, x: Var) -> ([Var; 6], Var) {
        let mut vars = Vec::with_capacity(6);
        let mut h = x;
        for (l, layer) in self.layers.iter().enumerate() {
            let ws = tape.leaf(layer.w_self.clone());
            let wn = tape.leaf(layer.w_neigh.clone());
            let b = tape.leaf(layer.bias.clone());
            vars.extend([ws, wn, b]);
            let own = tape.matmul(h, ws);
            let pooled = tape.propagate(agg, h);
            let neigh = tape.matmul(pooled, wn);
            let sum = tape.add(own, neigh);
            let pre = tape.add_bias(sum, b);
            h = if l == 0 { tape.relu(pre) } else { tape.tanh(pre) };
        }
        (vars.try_into().unwrap(), h)
    }

    /// Latent codes for every node of `graph`, using its own edges.
    pub fn encode(&self, graph: &CreditGraph) -> Array2<f64> {
        let agg = Rc::new(mean_aggregator(graph));
        let mut tape = Tape::new();
        let x = tape.leaf(graph.features().clone());
        let (_, z) = self.forward(&mut tape, &agg, x);
        tape.value(z).clone()
    }

    fn params(&self) -> Vec<Array2<f64>> {
        self.layers
            .iter()
            .flat_map(|l| [l.w_self.clone(), l.w_neigh.clone(), l.bias.clone()])
            .collect()
    }
}

impl FeatureDecoder {
    fn forward(&self, tape: &mut Tape, z: Var) -> ([Var; 4], Var) {
        let w1 = tape.leaf(self.w1.clone());
        let b1 = tape.leaf(self.b1.clone());
        let w2 = tape.leaf(self.w2.clone());
        let b2 = tape.leaf(self.b2.clone());
        let h = tape.matmul(z, w1);
        let h = tape.add_bias(h, b1);
        let h = tape.relu(h);
        let h = tape.matmul(h, w2);
        let h = tape.add_bias(h, b2);
        let out = tape.sigmoid(h);
        ([w1, b1, w2, b2], out)
    }

    pub fn decode(&self, z: &Array2<f64>) -> Array2<f64> {
        let mut tape = Tape::new();
        let zv = tape.leaf(z.clone());
        let (_, out) = self.forward(&mut tape, zv);
        tape.value(out).clone()
    }

    fn params(&self) -> Vec<Array2<f64>> {
        vec![self.w1.clone(), self.b1.clone(), self.w2.clone(), self.b2.clone()]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Autoencoder {
    pub encoder: SageEncoder,
    pub decoder: FeatureDecoder,
}

impl Autoencoder {
    pub fn init(input: usize, config: &AutoencoderConfig, seed: u64) -> Result<Self> {
        if config.latent == 0 || config.latent >= input {
            return Err(Error::Config(format!(
                "latent size {} must be positive and smaller than the feature width {input}",
                config.latent
            )));
        }
        let mut rng = seeded_stream(seed, INIT_STREAM);
        let mut layer = |fan_in: usize, fan_out: usize| SageLayer {
            w_self: glorot_uniform(&mut rng, fan_in, fan_out),
            w_neigh: glorot_uniform(&mut rng, fan_in, fan_out),
            bias: Array2::zeros((1, fan_out)),
        };
        let encoder = SageEncoder {
            layers: [layer(input, config.hidden), layer(config.hidden, config.latent)],
        };
        let decoder = FeatureDecoder {
            w1: glorot_uniform(&mut rng, config.latent, config.hidden),
            b1: Array2::zeros((1, config.hidden)),
            w2: glorot_uniform(&mut rng, config.hidden, input),
            b2: Array2::zeros((1, input)),
        };
        Ok(Autoencoder { encoder, decoder })
    }

    fn params(&self) -> Vec<Array2<f64>> {
        let mut p = self.encoder.params();
        p.extend(self.decoder.params());
        p
    }

    fn set_params(&mut self, params: Vec<Array2<f64>>) {
        let mut it = params.into_iter();
        for layer in self.encoder.layers.iter_mut() {
            layer.w_self = it.next().unwrap();
            layer.w_neigh = it.next().unwrap();
            layer.bias = it.next().unwrap();
        }
        self.decoder.w1 = it.next().unwrap();
        self.decoder.b1 = it.next().unwrap();
        self.decoder.w2 = it.next().unwrap();
        self.decoder.b2 = it.next().unwrap();
    }

    /// Reconstruction MSE on `graph` with gradients ordered as the encoder
    /// layers (`w_self`, `w_neigh`, `bias` each) followed by the decoder's
    /// `w1`, `b1`, `w2`, `b2`.
    pub fn reconstruction_loss_and_gradients(&self, graph: &CreditGraph) -> (f64, Vec<Array2<f64>>) {
        let agg = Rc::new(mean_aggregator(graph));
        self.loss_and_grads(&agg, &Rc::new(graph.features().clone()))
    }

    /// Reconstruction MSE and gradients, in [`Autoencoder::params`] order.
    pub(crate) fn loss_and_grads(&self, agg: &Rc<CsrMatrix>, x: &Rc<Array2<f64>>) -> (f64, Vec<Array2<f64>>) {
        let mut tape = Tape::new();
        let xv = tape.leaf(x.as_ref().clone());
        let (enc_vars, z) = self.encoder.forward(&mut tape, agg, xv);
        let (dec_vars, out) = self.decoder.forward(&mut tape, z);
        let loss = tape.mse(out, x);
        let grads = tape.backward(loss);
        let out = enc_vars
            .iter()
            .chain(&dec_vars)
            .map(|&v| {
                grads
                    .get(v)
                    .cloned()
                    .unwrap_or_else(|| Array2::zeros(tape.value(v).raw_dim()))
            })
            .collect();
        (tape.scalar(loss), out)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainedAutoencoder {
    pub model: Autoencoder,
    /// Reconstruction loss before each epoch's update, plus the final loss.
    pub loss_trace: Vec<f64>,
}

/// Full-batch Adam on mean squared reconstruction error.
pub fn train_autoencoder(graph: &CreditGraph, config: &AutoencoderConfig, seed: u64) -> Result<TrainedAutoencoder> {
    if graph.is_empty() {
        return Err(Error::Empty("graph has no nodes"));
    }
    let mut model = Autoencoder::init(graph.features().ncols(), config, seed)?;
    let agg = Rc::new(mean_aggregator(graph));
    let x = Rc::new(graph.features().clone());
    let mut params = model.params();
    let mut adam = Adam::new(config.learning_rate, &params);
    let mut loss_trace = Vec::with_capacity(config.epochs + 1);
    for epoch in 0..config.epochs {
        let (loss, grads) = model.loss_and_grads(&agg, &x);
        if !loss.is_finite() {
            return Err(Error::Diverged { epoch: epoch + 1 });
        }
        loss_trace.push(loss);
        adam.step(&mut params, &grads);
        model.set_params(params.clone());
    }
    let (final_loss, _) = model.loss_and_grads(&agg, &x);
    if !final_loss.is_finite() {
        return Err(Error::Diverged { epoch: config.epochs });
    }
    loss_trace.push(final_loss);
    Ok(TrainedAutoencoder { model, loss_trace })
}
