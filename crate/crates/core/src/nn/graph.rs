//! Tape-based reverse-mode differentiation.
//!
//! A [`Graph`] records every operation of one forward pass in order. Parameters
//! live outside the tape in a [`ParamStore`]; [`Graph::backward`] walks the tape
//! in reverse and adds each parameter's gradient into the store.

use std::hash::{DefaultHasher, Hash, Hasher};

use crate::error::{Error, Result};
use crate::nn::activation::{self, check_dropout_rate, dropout_mask};
use crate::nn::conv::{conv2d_backward, conv2d_forward};
use crate::nn::dense::{affine, affine_backward};
use crate::nn::loss::softmax_cross_entropy;
use crate::nn::norm::{batchnorm_backward, batchnorm_forward_cached, BatchNormCache, BatchNormState};
use crate::nn::pool::{maxpool2d_backward, maxpool2d_with_argmax};
use crate::nn::{Mode, ParamId, ParamStore, Tensor};
use crate::seed::mix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

enum Op {
    Input,
    Conv2d { input: NodeId, filters: ParamId, bias: ParamId },
    MaxPool { input: NodeId, argmax: Vec<usize> },
    BatchNorm { input: NodeId, gamma: ParamId, beta: ParamId, cache: BatchNormCache },
    Affine { input: NodeId, weight: ParamId, bias: ParamId },
    LeakyRelu { input: NodeId, slope: f64 },
    Dropout { input: NodeId, mask: Option<Vec<f64>> },
    Softmax { input: NodeId },
    Reshape { input: NodeId },
    Concat { parts: Vec<NodeId> },
    SoftmaxCrossEntropy { logits: NodeId, targets: Tensor, probs: Tensor },
    MaskedMse { pred: NodeId, target: Tensor, mask: Tensor, count: usize },
    Project { input: NodeId, weights: Tensor },
    WeightedSum { terms: Vec<(NodeId, f64)> },
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Gradients of the loss w.r.t. every recorded node.
pub struct Gradients {
    nodes: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient w.r.t. an input node, or `None` if the loss does not depend on
    /// it. Interior node gradients are released during the backward sweep.
    pub fn wrt(&self, node: NodeId) -> Option<&Tensor> {
        self.nodes.get(node.0).and_then(Option::as_ref)
    }
}

/// One recorded forward pass.
pub struct Graph {
    nodes: Vec<Node>,
    mode: Mode,
    seed: u64,
    dropout_calls: u64,
}

impl Graph {
    /// `seed` drives the dropout masks of this pass; infer mode is fully deterministic.
    pub fn new(mode: Mode, seed: u64) -> Self {
        Graph { nodes: Vec::new(), mode, seed, dropout_calls: 0 }
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, node: NodeId) -> &Tensor {
        &self.nodes[node.0].value
    }

    /// Hash of every piecewise branch taken by the pass: the sign of each
    /// leaky-ReLU input and each max-pool arg-max. Two passes with equal
    /// patterns evaluate the same smooth function.
    pub fn branch_pattern(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for (i, node) in self.nodes.iter().enumerate() {
            match &node.op {
                Op::LeakyRelu { input, .. } => {
                    i.hash(&mut h);
                    for v in self.value(*input).data() {
                        v.partial_cmp(&0.0).hash(&mut h);
                    }
                }
                Op::MaxPool { argmax, .. } => {
                    i.hash(&mut h);
                    argmax.hash(&mut h);
                }
                _ => {}
            }
        }
        h.finish()
    }

    /// Scalar value of a `[1]`-shaped node.
    pub fn scalar(&self, node: NodeId) -> f64 {
        self.nodes[node.0].value.data()[0]
    }

    fn push(&mut self, value: Tensor, op: Op) -> Result<NodeId> {
        if !value.is_finite() {
            return Err(Error::NonFinite(op_name(&op)));
        }
        self.nodes.push(Node { value, op });
        Ok(NodeId(self.nodes.len() - 1))
    }

    pub fn input(&mut self, value: Tensor) -> Result<NodeId> {
        self.push(value, Op::Input)
    }

    pub fn conv2d(&mut self, params: &ParamStore, x: NodeId, filters: ParamId, bias: ParamId) -> Result<NodeId> {
        let y = conv2d_forward(self.value(x), params.value(filters), params.value(bias))?;
        self.push(y, Op::Conv2d { input: x, filters, bias })
    }

    pub fn maxpool2d(&mut self, x: NodeId, pool: (usize, usize)) -> Result<NodeId> {
        let (y, argmax) = maxpool2d_with_argmax(self.value(x), pool)?;
        self.push(y, Op::MaxPool { input: x, argmax })
    }

    pub fn batch_norm(
        &mut self,
        params: &ParamStore,
        x: NodeId,
        gamma: ParamId,
        beta: ParamId,
        state: &mut BatchNormState,
    ) -> Result<NodeId> {
        let (y, cache) =
            batchnorm_forward_cached(self.value(x), params.value(gamma), params.value(beta), state, self.mode)?;
        self.push(y, Op::BatchNorm { input: x, gamma, beta, cache })
    }

    /// `x · W + b` on `[N, D]` inputs.
    pub fn dense(&mut self, params: &ParamStore, x: NodeId, weight: ParamId, bias: ParamId) -> Result<NodeId> {
        let y = affine(self.value(x), params.value(weight), params.value(bias))?;
        self.push(y, Op::Affine { input: x, weight, bias })
    }

    pub fn leaky_relu(&mut self, x: NodeId, slope: f64) -> Result<NodeId> {
        if !(slope > 0.0 && slope < 1.0) {
            return Err(Error::invalid(format!("leaky slope {slope} outside (0, 1)")));
        }
        let y = activation::leaky_relu(self.value(x), slope);
        self.push(y, Op::LeakyRelu { input: x, slope })
    }

    pub fn dropout(&mut self, x: NodeId, rate: f64) -> Result<NodeId> {
        check_dropout_rate(rate)?;
        if self.mode == Mode::Infer || rate == 0.0 {
            let y = self.value(x).clone();
            return self.push(y, Op::Dropout { input: x, mask: None });
        }
        self.dropout_calls += 1;
        let input = self.value(x);
        let mask = dropout_mask(input.len(), rate, mix(self.seed, self.dropout_calls));
        let data = input.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
        let y = Tensor::from_parts_unchecked(input.shape().to_vec(), data);
        self.push(y, Op::Dropout { input: x, mask: Some(mask) })
    }

    pub fn softmax(&mut self, x: NodeId) -> Result<NodeId> {
        let y = activation::softmax(self.value(x))?;
        self.push(y, Op::Softmax { input: x })
    }

    /// Collapses all non-batch axes: `[N, ...] -> [N, prod(...)]`.
    pub fn flatten(&mut self, x: NodeId) -> Result<NodeId> {
        let v = self.value(x);
        let shape = [v.batch(), v.row_len()];
        let y = v.clone().reshape(&shape)?;
        self.push(y, Op::Reshape { input: x })
    }

    /// Column-wise concatenation of `[N, D_i]` parts in argument order.
    pub fn concat(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let first = parts.first().ok_or_else(|| Error::invalid("concat of zero parts"))?;
        let n = self.value(*first).batch();
        for &p in parts {
            let v = self.value(p);
            if v.rank() != 2 {
                return Err(Error::shape("concat", format!("parts must be [N, D], got {:?}", v.shape())));
            }
            if v.batch() != n {
                return Err(Error::shape("concat", format!("batch sizes {n} and {} differ", v.batch())));
            }
        }
        let width: usize = parts.iter().map(|&p| self.value(p).shape()[1]).sum();
        let mut data = Vec::with_capacity(n * width);
        for row in 0..n {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(row));
            }
        }
        let y = Tensor::from_parts_unchecked(vec![n, width], data);
        self.push(y, Op::Concat { parts: parts.to_vec() })
    }

    /// Mean softmax cross-entropy of `logits` against one-hot `targets`; a scalar node.
    pub fn softmax_cross_entropy(&mut self, logits: NodeId, targets: Tensor) -> Result<NodeId> {
        let (loss, probs) = softmax_cross_entropy(self.value(logits), &targets)?;
        self.push(Tensor::scalar(loss), Op::SoftmaxCrossEntropy { logits, targets, probs })
    }

    /// Mean squared error over unmasked entries; a scalar node.
    pub fn masked_mse(&mut self, pred: NodeId, target: Tensor, mask: Tensor) -> Result<NodeId> {
        let loss = crate::nn::loss::masked_mse(self.value(pred), &target, &mask)?;
        let count = mask.data().iter().filter(|&&m| m != 0.0).count();
        self.push(Tensor::scalar(loss), Op::MaskedMse { pred, target, mask, count })
    }

    /// `Σ x ⊙ weights`, reducing any node to a scalar.
    pub fn project(&mut self, x: NodeId, weights: Tensor) -> Result<NodeId> {
        let v = self.value(x);
        if v.len() != weights.len() {
            return Err(Error::shape("project", format!("{} values vs {} weights", v.len(), weights.len())));
        }
        let s = v.data().iter().zip(weights.data()).map(|(a, b)| a * b).sum();
        self.push(Tensor::scalar(s), Op::Project { input: x, weights })
    }

    /// `Σ w_i · loss_i` over scalar nodes.
    pub fn weighted_sum(&mut self, terms: &[(NodeId, f64)]) -> Result<NodeId> {
        let mut total = 0.0;
        for &(node, w) in terms {
            let v = self.value(node);
            if v.len() != 1 {
                return Err(Error::shape("weighted_sum", format!("term is {:?}, not a scalar", v.shape())));
            }
            total += w * v.data()[0];
        }
        self.push(Tensor::scalar(total), Op::WeightedSum { terms: terms.to_vec() })
    }

    /// Propagates `d loss / d ·` through the tape, adding parameter gradients
    /// into `params`. Calling it twice accumulates twice.
    pub fn backward(&self, loss: NodeId, params: &mut ParamStore) -> Result<Gradients> {
        if self.nodes.is_empty() {
            return Err(Error::NotRecorded);
        }
        if loss.0 >= self.nodes.len() {
            return Err(Error::invalid("loss node does not belong to this graph"));
        }
        if self.value(loss).len() != 1 {
            return Err(Error::shape("backward", format!("loss must be a scalar, got {:?}", self.value(loss).shape())));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::filled(self.value(loss).shape(), 1.0));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if matches!(node.op, Op::Input) {
                // leaf gradients stay visible to the caller
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            match &node.op {
                Op::Input => unreachable!(),
                Op::Conv2d { input, filters, bias } => {
                    let cg = conv2d_backward(self.value(*input), params.value(*filters), params.value(*bias), &g)?;
                    params.accumulate_grad(*filters, &cg.filters);
                    params.accumulate_grad(*bias, &cg.bias);
                    accumulate(&mut grads, *input, cg.input);
                }
                Op::MaxPool { input, argmax } => {
                    let dx = maxpool2d_backward(self.value(*input).shape(), argmax, &g);
                    accumulate(&mut grads, *input, dx);
                }
                Op::BatchNorm { input, gamma, beta, cache } => {
                    let bg = batchnorm_backward(self.value(*input).shape(), params.value(*gamma), cache, &g);
                    params.accumulate_grad(*gamma, &bg.gamma);
                    params.accumulate_grad(*beta, &bg.beta);
                    accumulate(&mut grads, *input, bg.input);
                }
                Op::Affine { input, weight, bias } => {
                    let dg = affine_backward(self.value(*input), params.value(*weight), &g);
                    params.accumulate_grad(*weight, &dg.weight);
                    params.accumulate_grad(*bias, &dg.bias);
                    accumulate(&mut grads, *input, dg.input);
                }
                Op::LeakyRelu { input, slope } => {
                    let dx = activation::leaky_relu_backward(self.value(*input), *slope, &g);
                    accumulate(&mut grads, *input, dx);
                }
                Op::Dropout { input, mask } => {
                    let dx = match mask {
                        None => g,
                        Some(mask) => {
                            let data = g.data().iter().zip(mask).map(|(a, m)| a * m).collect();
                            Tensor::from_parts_unchecked(g.shape().to_vec(), data)
                        }
                    };
                    accumulate(&mut grads, *input, dx);
                }
                Op::Softmax { input } => {
                    let dx = activation::softmax_backward(&node.value, &g);
                    accumulate(&mut grads, *input, dx);
                }
                Op::Reshape { input } => {
                    let dx = g.reshape(self.value(*input).shape())?;
                    accumulate(&mut grads, *input, dx);
                }
                Op::Concat { parts } => {
                    let n = node.value.batch();
                    let width = node.value.shape()[1];
                    let mut offset = 0;
                    for &p in parts {
                        let w = self.value(p).shape()[1];
                        let mut data = Vec::with_capacity(n * w);
                        for row in 0..n {
                            data.extend_from_slice(&g.data()[row * width + offset..row * width + offset + w]);
                        }
                        accumulate(&mut grads, p, Tensor::from_parts_unchecked(vec![n, w], data));
                        offset += w;
                    }
                }
                Op::SoftmaxCrossEntropy { logits, targets, probs } => {
                    let scale = g.data()[0] / probs.batch() as f64;
                    let data = probs.data().iter().zip(targets.data()).map(|(p, y)| (p - y) * scale).collect();
                    accumulate(&mut grads, *logits, Tensor::from_parts_unchecked(probs.shape().to_vec(), data));
                }
                Op::MaskedMse { pred, target, mask, count } => {
                    let scale = 2.0 * g.data()[0] / *count as f64;
                    let p = self.value(*pred);
                    let data = p
                        .data()
                        .iter()
                        .zip(target.data())
                        .zip(mask.data())
                        .map(|((p, t), &m)| if m != 0.0 { scale * (p - t) } else { 0.0 })
                        .collect();
                    accumulate(&mut grads, *pred, Tensor::from_parts_unchecked(p.shape().to_vec(), data));
                }
                Op::Project { input, weights } => {
                    let s = g.data()[0];
                    let dx = Tensor::from_parts_unchecked(
                        self.value(*input).shape().to_vec(),
                        weights.data().iter().map(|w| w * s).collect(),
                    );
                    accumulate(&mut grads, *input, dx);
                }
                Op::WeightedSum { terms } => {
                    for &(t, w) in terms {
                        accumulate(&mut grads, t, Tensor::scalar(w * g.data()[0]));
                    }
                }
            }
        }
        Ok(Gradients { nodes: grads })
    }
}

fn accumulate(grads: &mut [Option<Tensor>], node: NodeId, g: Tensor) {
    match &mut grads[node.0] {
        Some(existing) => {
            for (a, b) in existing.data_mut().iter_mut().zip(g.data()) {
                *a += b;
            }
        }
        slot @ None => *slot = Some(g),
    }
}

fn op_name(op: &Op) -> &'static str {
    match op {
        Op::Input => "input",
        Op::Conv2d { .. } => "conv2d",
        Op::MaxPool { .. } => "maxpool2d",
        Op::BatchNorm { .. } => "batchnorm",
        Op::Affine { .. } => "dense",
        Op::LeakyRelu { .. } => "leaky_relu",
        Op::Dropout { .. } => "dropout",
        Op::Softmax { .. } => "softmax",
        Op::Reshape { .. } => "flatten",
        Op::Concat { .. } => "concat",
        Op::SoftmaxCrossEntropy { .. } => "softmax_cross_entropy",
        Op::MaskedMse { .. } => "masked_mse",
        Op::Project { .. } => "project",
        Op::WeightedSum { .. } => "weighted_sum",
    }
}
