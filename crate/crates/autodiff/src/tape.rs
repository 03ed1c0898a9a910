//! Recording tape and the reverse sweep.
//!
//! Every operation appends a node holding its output value and the rule to
//! push gradients back to its inputs. Nodes only refer to earlier nodes, so
//! the graph is acyclic by construction and a single reverse pass over the
//! node list visits every node after all of its consumers.

use crate::error::{AutodiffError, Result};
use crate::params::{ParamId, ParamStore};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(pub(crate) usize);

pub(crate) enum Op<T> {
    /// Input that never receives a gradient.
    Constant,
    /// Input whose gradient is reported by [`Gradients::wrt`].
    Variable,
    Param(ParamId),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Scale(Var, T),
    Shift(Var),
    Abs(Var),
    Max2(Var, Var),
    Min2(Var, Var),
    Sum(Var),
    Mean(Var),
    SumLast(Var),
    L2NormLast(Var),
    Linear { x: Var, w: Var, b: Option<Var> },
    MaxOverSet { x: Var, argmax: Vec<u32> },
    RepeatOverSet { x: Var, set: usize },
    ConcatLast(Vec<Var>),
    SwapAxes { x: Var, axis: usize },
    Cat0(Vec<Var>),
    Narrow0 { x: Var, start: usize },
    Reshape(Var),
    BatchNorm { x: Var, gamma: Var, beta: Var, xhat: Vec<T>, inv_std: Vec<T>, train: bool },
    Prelu { x: Var, alpha: Var },
    SoftmaxLast(Var),
    Bmm(Var, Var),
}

impl<T> Op<T> {
    fn parents(&self) -> Vec<Var> {
        use Op::*;
        match self {
            Constant | Variable | Param(_) => vec![],
            Add(a, b) | Sub(a, b) | Mul(a, b) | Div(a, b) | Max2(a, b) | Min2(a, b) | Bmm(a, b) => vec![*a, *b],
            Scale(x, _) | Shift(x) | Abs(x) | Sum(x) | Mean(x) | SumLast(x) | L2NormLast(x) | Reshape(x)
            | SoftmaxLast(x) => vec![*x],
            Linear { x, w, b } => {
                let mut v = vec![*x, *w];
                v.extend(b);
                v
            }
            MaxOverSet { x, .. } | RepeatOverSet { x, .. } | SwapAxes { x, .. } | Narrow0 { x, .. } => vec![*x],
            ConcatLast(parts) | Cat0(parts) => parts.clone(),
            BatchNorm { x, gamma, beta, .. } => vec![*x, *gamma, *beta],
            Prelu { x, alpha } => vec![*x, *alpha],
        }
    }
}

pub(crate) struct Node<T> {
    pub value: Tensor<T>,
    pub op: Op<T>,
    pub needs_grad: bool,
}

/// A single forward pass recorded for differentiation.
pub struct Tape<T> {
    pub(crate) nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub(crate) fn push(&mut self, value: Tensor<T>, op: Op<T>) -> Var {
        let needs_grad = match op {
            Op::Constant => false,
            Op::Variable | Op::Param(_) => true,
            ref other => other.parents().iter().any(|p| self.nodes[p.0].needs_grad),
        };
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Constant)
    }

    /// An input whose gradient is wanted.
    pub fn variable(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Variable)
    }

    /// Places the current value of a stored parameter on the tape. Frozen
    /// parameters enter as constants.
    pub fn param(&mut self, store: &ParamStore<T>, id: ParamId) -> Var {
        let p = store.get(id);
        if p.trainable {
            self.push(p.value.clone(), Op::Param(id))
        } else {
            self.push(p.value.clone(), Op::Constant)
        }
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Reverse sweep from a one-element `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        if self.value(loss).numel() != 1 {
            return Err(AutodiffError::Shape(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![T::one()]);
        for k in (0..=loss.0).rev() {
            let node = &self.nodes[k];
            if !node.needs_grad {
                continue;
            }
            if matches!(node.op, Op::Variable | Op::Param(_)) {
                continue;
            }
            let Some(g) = grads[k].take() else { continue };
            let mut sink = GradSink { nodes: &self.nodes, grads: &mut grads };
            crate::ops::backward_node(self, k, &g, &mut sink);
        }

        let mut params: Vec<Option<Tensor<T>>> = Vec::new();
        let mut vars = Vec::new();
        for (k, node) in self.nodes.iter().enumerate() {
            let Some(g) = grads[k].take() else { continue };
            let g = Tensor::new(node.value.shape().to_vec(), g).expect("gradient matches value shape");
            match node.op {
                Op::Param(id) => {
                    if params.len() <= id.0 {
                        params.resize_with(id.0 + 1, || None);
                    }
                    match &mut params[id.0] {
                        Some(acc) => {
                            for (a, b) in acc.data_mut().iter_mut().zip(g.data()) {
                                *a = *a + *b;
                            }
                        }
                        slot @ None => *slot = Some(g),
                    }
                }
                Op::Variable => vars.push((Var(k), g)),
                _ => {}
            }
        }
        Ok(Gradients { params, vars })
    }
}

/// Accumulates gradient contributions into parent nodes.
pub(crate) struct GradSink<'a, T> {
    nodes: &'a [Node<T>],
    grads: &'a mut Vec<Option<Vec<T>>>,
}

impl<T: Scalar> GradSink<'_, T> {
    pub fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Zero-initialised gradient buffer of `v`, or `None` if `v` needs no gradient.
    pub fn buf(&mut self, v: Var) -> Option<&mut [T]> {
        if !self.nodes[v.0].needs_grad {
            return None;
        }
        let numel = self.nodes[v.0].value.numel();
        Some(self.grads[v.0].get_or_insert_with(|| vec![T::zero(); numel]))
    }

    pub fn add(&mut self, v: Var, contribution: impl IntoIterator<Item = T>) {
        if !self.nodes[v.0].needs_grad {
            return;
        }
        match &mut self.grads[v.0] {
            Some(buf) => {
                for (b, c) in buf.iter_mut().zip(contribution) {
                    *b = *b + c;
                }
            }
            slot @ None => {
                let numel = self.nodes[v.0].value.numel();
                let mut fresh: Vec<T> = contribution.into_iter().take(numel).collect();
                fresh.resize(numel, T::zero());
                *slot = Some(fresh);
            }
        }
    }
}

/// Gradients produced by [`Tape::backward`].
pub struct Gradients<T> {
    params: Vec<Option<Tensor<T>>>,
    vars: Vec<(Var, Tensor<T>)>,
}

impl<T: Scalar> Gradients<T> {
    /// Summed gradient of a parameter over all its uses, if it was reached.
    pub fn param(&self, id: ParamId) -> Option<&Tensor<T>> {
        self.params.get(id.0).and_then(|g| g.as_ref())
    }

    /// Gradient of a [`Tape::variable`] input, if it was reached.
    pub fn wrt(&self, v: Var) -> Option<&Tensor<T>> {
        self.vars.iter().find(|(k, _)| *k == v).map(|(_, g)| g)
    }

    pub fn params(&self) -> impl Iterator<Item = (ParamId, &Tensor<T>)> {
        self.params.iter().enumerate().filter_map(|(k, g)| g.as_ref().map(|g| (ParamId(k), g)))
    }

    pub fn all_finite(&self) -> bool {
        self.params().all(|(_, g)| g.all_finite()) && self.vars.iter().all(|(_, g)| g.all_finite())
    }

    /// Global L2 norm over all parameter gradients.
    pub fn param_norm(&self) -> f64 {
        self.params()
            .flat_map(|(_, g)| g.data().iter().map(|v| v.to_f64_lossy().powi(2)))
            .sum::<f64>()
            .sqrt()
    }

    /// Multiplies every parameter gradient by `factor`.
    pub fn scale_params(&mut self, factor: T) {
        for g in self.params.iter_mut().flatten() {
            for v in g.data_mut() {
                *v = *v * factor;
            }
        }
    }
}
