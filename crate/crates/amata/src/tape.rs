//! Reverse-mode differentiation over a recorded operation tape.
//!
//! A [`Tape`] records primitive operations in topological order during the
//! forward pass and replays them once in reverse to accumulate adjoints.
//! Leaves (parameters and/or inputs) are designated before the forward pass;
//! only subgraphs reaching a designated leaf are differentiated on the way
//! back. A tape is single-use: one forward/backward pair, then re-record.

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::tensor::{col_sum, matmul_nn, matmul_nt, matmul_tn, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

enum OpKind<T> {
    /// Differentiation target or constant; no inputs.
    Leaf,
    /// out = x * w + b (bias broadcast over rows).
    Affine { x: NodeId, w: NodeId, b: NodeId },
    /// Elementwise max(0, x); the subgradient at exactly 0 is 0.
    Relu { x: NodeId },
    /// Scalar sum of all elements.
    Sum { x: NodeId },
    /// Mean over rows of -log softmax(logits)[label]; caches the softmax.
    SoftmaxCrossEntropy {
        logits: NodeId,
        labels: Vec<usize>,
        probs: Tensor<T>,
    },
}

struct Node<T> {
    op: OpKind<T>,
    value: Tensor<T>,
    requires_grad: bool,
}

pub struct Tape<T = f64> {
    nodes: Vec<Node<T>>,
    spent: bool,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            spent: false,
        }
    }

    fn push(&mut self, op: OpKind<T>, value: Tensor<T>, requires_grad: bool) -> NodeId {
        self.nodes.push(Node {
            op,
            value,
            requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn requires(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    /// Records a designated leaf: `backward` will produce its gradient.
    pub fn leaf(&mut self, value: Tensor<T>) -> NodeId {
        self.push(OpKind::Leaf, value, true)
    }

    /// Records a constant: used in the forward pass, never differentiated.
    pub fn constant(&mut self, value: Tensor<T>) -> NodeId {
        self.push(OpKind::Leaf, value, false)
    }

    pub fn value(&self, id: NodeId) -> &Tensor<T> {
        &self.nodes[id.0].value
    }

    /// out[i,j] = sum_k x[i,k] w[k,j] + b[j].
    pub fn affine(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId> {
        let out = {
            let (xv, wv, bv) = (self.value(x), self.value(w), self.value(b));
            if bv.shape().len() != 1 || bv.shape()[0] != wv.shape().get(1).copied().unwrap_or(0) {
                return Err(Error::ShapeMismatch {
                    op: "affine bias",
                    lhs: wv.shape().to_vec(),
                    rhs: bv.shape().to_vec(),
                });
            }
            let mut out = matmul_nn(xv, wv)?;
            let cols = out.cols();
            let bias = bv.data();
            for row in 0..out.rows() {
                let start = row * cols;
                for (o, &bj) in out.data_mut()[start..start + cols].iter_mut().zip(bias) {
                    *o += bj;
                }
            }
            out
        };
        let req = self.requires(x) || self.requires(w) || self.requires(b);
        Ok(self.push(OpKind::Affine { x, w, b }, out, req))
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let out = self.value(x).map(|v| if v > T::zero() { v } else { T::zero() });
        let req = self.requires(x);
        self.push(OpKind::Relu { x }, out, req)
    }

    /// Scalar sum of all elements of `x`.
    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let mut acc = T::zero();
        for &v in self.value(x).data() {
            acc += v;
        }
        let req = self.requires(x);
        self.push(OpKind::Sum { x }, Tensor::scalar(acc), req)
    }

    /// Mean cross-entropy of row-wise softmax against integer labels.
    ///
    /// Stabilized by per-row max subtraction; the scalar result equals
    /// mean_i (logsumexp(logits_i) - logits_i[label_i]).
    pub fn softmax_cross_entropy(&mut self, logits: NodeId, labels: &[usize]) -> Result<NodeId> {
        let lv = self.value(logits);
        if lv.shape().len() != 2 {
            return Err(Error::contract(format!(
                "softmax_cross_entropy expects 2-D logits, got {:?}",
                lv.shape()
            )));
        }
        let (b, c) = (lv.rows(), lv.cols());
        if labels.len() != b {
            return Err(Error::ShapeMismatch {
                op: "softmax_cross_entropy labels",
                lhs: lv.shape().to_vec(),
                rhs: vec![labels.len()],
            });
        }
        let mut probs = Tensor::zeros(vec![b, c]);
        let mut total = T::zero();
        for i in 0..b {
            let label = labels[i];
            if label >= c {
                return Err(Error::IndexOutOfRange {
                    what: "class label",
                    index: label,
                    bound: c,
                });
            }
            let row = lv.row(i);
            let mut max = row[0];
            for &v in &row[1..] {
                if v > max {
                    max = v;
                }
            }
            let mut denom = T::zero();
            for &v in row {
                denom += (v - max).exp();
            }
            let lse = max + denom.ln();
            total += lse - row[label];
            let start = i * c;
            for (p, &v) in probs.data_mut()[start..start + c].iter_mut().zip(row) {
                *p = (v - max).exp() / denom;
            }
        }
        let mean = total / T::of_usize(b);
        let req = self.requires(logits);
        Ok(self.push(
            OpKind::SoftmaxCrossEntropy {
                logits,
                labels: labels.to_vec(),
                probs,
            },
            Tensor::scalar(mean),
            req,
        ))
    }

    /// Runs one reverse pass from a scalar `loss` and returns the gradient of
    /// each requested leaf, in order. Leaves not reached by the loss get zero
    /// gradients. Consumes the tape.
    pub fn backward(&mut self, loss: NodeId, leaves: &[NodeId]) -> Result<Vec<Tensor<T>>> {
        if self.spent {
            return Err(Error::contract("tape already consumed by backward"));
        }
        if !self.nodes[loss.0].value.is_scalar() {
            return Err(Error::contract(format!(
                "backward requires a scalar loss, got shape {:?}",
                self.nodes[loss.0].value.shape()
            )));
        }
        for leaf in leaves {
            if !matches!(self.nodes[leaf.0].op, OpKind::Leaf) || !self.nodes[leaf.0].requires_grad {
                return Err(Error::contract(
                    "gradients may only be requested for designated leaves",
                ));
            }
        }
        self.spent = true;

        let mut adjoints: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        adjoints[loss.0] = Some(Tensor::scalar(T::one()));

        for id in (0..=loss.0).rev() {
            let adj = match adjoints[id].take() {
                Some(a) => a,
                None => continue,
            };
            if !self.nodes[id].requires_grad {
                continue;
            }
            match &self.nodes[id].op {
                OpKind::Leaf => {
                    // Terminal: stash back for collection below.
                    adjoints[id] = Some(adj);
                }
                OpKind::Affine { x, w, b } => {
                    let (x, w, b) = (*x, *w, *b);
                    if self.requires(x) {
                        let dx = matmul_nt(&adj, &self.nodes[w.0].value)?;
                        accumulate(&mut adjoints, x, dx)?;
                    }
                    if self.requires(w) {
                        let dw = matmul_tn(&self.nodes[x.0].value, &adj)?;
                        accumulate(&mut adjoints, w, dw)?;
                    }
                    if self.requires(b) {
                        accumulate(&mut adjoints, b, col_sum(&adj))?;
                    }
                }
                OpKind::Relu { x } => {
                    let x = *x;
                    let xv = &self.nodes[x.0].value;
                    let mut dx = adj;
                    for (d, &v) in dx.data_mut().iter_mut().zip(xv.data()) {
                        if v <= T::zero() {
                            *d = T::zero();
                        }
                    }
                    accumulate(&mut adjoints, x, dx)?;
                }
                OpKind::Sum { x } => {
                    let x = *x;
                    let g = adj.scalar_value()?;
                    let dx = Tensor::filled(self.nodes[x.0].value.shape().to_vec(), g);
                    accumulate(&mut adjoints, x, dx)?;
                }
                OpKind::SoftmaxCrossEntropy {
                    logits,
                    labels,
                    probs,
                } => {
                    let logits = *logits;
                    let g = adj.scalar_value()?;
                    let scale = g / T::of_usize(labels.len());
                    let c = probs.cols();
                    let mut dl = probs.clone();
                    for (i, &label) in labels.iter().enumerate() {
                        let row = &mut dl.data_mut()[i * c..(i + 1) * c];
                        row[label] -= T::one();
                        for v in row.iter_mut() {
                            *v *= scale;
                        }
                    }
                    accumulate(&mut adjoints, logits, dl)?;
                }
            }
        }

        let mut grads = Vec::with_capacity(leaves.len());
        for leaf in leaves {
            let g = adjoints[leaf.0]
                .take()
                .unwrap_or_else(|| Tensor::zeros(self.nodes[leaf.0].value.shape().to_vec()));
            grads.push(g);
        }
        Ok(grads)
    }
}

fn accumulate<T: Real>(
    adjoints: &mut [Option<Tensor<T>>],
    id: NodeId,
    delta: Tensor<T>,
) -> Result<()> {
    match &mut adjoints[id.0] {
        Some(existing) => {
            existing.same_shape(&delta, "adjoint accumulation")?;
            for (e, &d) in existing.data_mut().iter_mut().zip(delta.data()) {
                *e += d;
            }
        }
        slot @ None => *slot = Some(delta),
    }
    Ok(())
}
