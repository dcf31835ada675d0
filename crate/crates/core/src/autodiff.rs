//! Minimal reverse-mode differentiation over dense matrices.
//!
//! A [`Tape`] records every operation as it is applied; [`Tape::backward`]
//! walks the record in reverse and accumulates adjoints. Only the operations
//! needed by the GCN and the neighbourhood autoencoder are provided. Scalars
//! are `1 x 1` matrices.

use std::rc::Rc;

use ndarray::{Array2, Axis, Zip};

use crate::sparse::CsrMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    Leaf,
    MatMul(Var, Var),
    Propagate(Rc<CsrMatrix>, Var),
    Add(Var, Var),
    AddBias(Var, Var),
    Relu(Var),
    Tanh(Var),
    Sigmoid(Var),
    /// Masked mean cross-entropy; caches the row softmax.
    SoftmaxXent {
        logits: Var,
        targets: Rc<Vec<usize>>,
        mask: Rc<Vec<usize>>,
        probs: Array2<f64>,
    },
    Mse {
        pred: Var,
        target: Rc<Array2<f64>>,
    },
}

struct Node {
    value: Array2<f64>,
    op: Op,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

pub struct Gradients {
    grads: Vec<Option<Array2<f64>>>,
}

impl Gradients {
    /// Adjoint of `v`, or `None` when `v` did not influence the root.
    pub fn get(&self, v: Var) -> Option<&Array2<f64>> {
        self.grads[v.0].as_ref()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    fn push(&mut self, value: Array2<f64>, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.value(v)[[0, 0]]
    }

    pub fn leaf(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).dot(self.value(b));
        self.push(value, Op::MatMul(a, b))
    }

    /// Sparse left-multiplication `s · x`, e.g. neighbourhood propagation.
    pub fn propagate(&mut self, s: &Rc<CsrMatrix>, x: Var) -> Var {
        let value = s.matmul(self.value(x));
        self.push(value, Op::Propagate(Rc::clone(s), x))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a) + self.value(b);
        self.push(value, Op::Add(a, b))
    }

    /// Adds a `1 x d` row vector to every row.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Var {
        let value = self.value(x) + self.value(bias);
        self.push(value, Op::AddBias(x, bias))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let value = self.value(x).mapv(|v| v.max(0.0));
        self.push(value, Op::Relu(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let value = self.value(x).mapv(f64::tanh);
        self.push(value, Op::Tanh(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let value = self.value(x).mapv(sigmoid);
        self.push(value, Op::Sigmoid(x))
    }

    /// Mean cross-entropy of row-softmax(`logits`) over the rows in `mask`.
    pub fn softmax_cross_entropy(&mut self, logits: Var, targets: &Rc<Vec<usize>>, mask: &Rc<Vec<usize>>) -> Var {
        let probs = softmax_rows(self.value(logits));
        let loss = -mask
            .iter()
            .map(|&i| probs[[i, targets[i]]].max(f64::MIN_POSITIVE).ln())
            .sum::<f64>()
            / mask.len().max(1) as f64;
        self.push(
            Array2::from_elem((1, 1), loss),
            Op::SoftmaxXent {
                logits,
                targets: Rc::clone(targets),
                mask: Rc::clone(mask),
                probs,
            },
        )
    }

    /// Mean squared error over all entries.
    pub fn mse(&mut self, pred: Var, target: &Rc<Array2<f64>>) -> Var {
        let diff = self.value(pred) - target.as_ref();
        let loss = diff.mapv(|d| d * d).mean().unwrap_or(0.0);
        self.push(
            Array2::from_elem((1, 1), loss),
            Op::Mse {
                pred,
                target: Rc::clone(target),
            },
        )
    }

    /// Adjoints of every recorded value with respect to the scalar `root`.
    pub fn backward(&self, root: Var) -> Gradients {
        let mut grads: Vec<Option<Array2<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(Array2::ones((1, 1)));
        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let ga = g.dot(&self.value(*b).t());
                    let gb = self.value(*a).t().dot(&g);
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::Propagate(s, x) => accumulate(&mut grads, *x, s.t_matmul(&g)),
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g.clone());
                }
                Op::AddBias(x, bias) => {
                    let gb = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    accumulate(&mut grads, *x, g.clone());
                    accumulate(&mut grads, *bias, gb);
                }
                Op::Relu(x) => {
                    let mut gx = g.clone();
                    Zip::from(&mut gx).and(self.value(*x)).for_each(|d, &v| {
                        if v <= 0.0 {
                            *d = 0.0
                        }
                    });
                    accumulate(&mut grads, *x, gx);
                }
                Op::Tanh(x) => {
                    let mut gx = g.clone();
                    Zip::from(&mut gx).and(&node.value).for_each(|d, &y| *d *= 1.0 - y * y);
                    accumulate(&mut grads, *x, gx);
                }
                Op::Sigmoid(x) => {
                    let mut gx = g.clone();
                    Zip::from(&mut gx).and(&node.value).for_each(|d, &y| *d *= y * (1.0 - y));
                    accumulate(&mut grads, *x, gx);
                }
                Op::SoftmaxXent {
                    logits,
                    targets,
                    mask,
                    probs,
                } => {
                    let scale = g[[0, 0]] / mask.len().max(1) as f64;
                    let mut gx = Array2::zeros(probs.raw_dim());
                    for &r in mask.iter() {
                        for c in 0..probs.ncols() {
                            let indicator = if c == targets[r] { 1.0 } else { 0.0 };
                            gx[[r, c]] = scale * (probs[[r, c]] - indicator);
                        }
                    }
                    accumulate(&mut grads, *logits, gx);
                }
                Op::Mse { pred, target } => {
                    let n = target.len().max(1) as f64;
                    let gx = (self.value(*pred) - target.as_ref()) * (2.0 * g[[0, 0]] / n);
                    accumulate(&mut grads, *pred, gx);
                }
            }
            grads[i] = Some(g);
        }
        Gradients { grads }
    }
}

fn accumulate(grads: &mut [Option<Array2<f64>>], v: Var, g: Array2<f64>) {
    match &mut grads[v.0] {
        Some(existing) => *existing += &g,
        slot @ None => *slot = Some(g),
    }
}

pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

pub fn softmax_rows(x: &Array2<f64>) -> Array2<f64> {
    let mut out = x.clone();
    for mut row in out.rows_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    out
}
