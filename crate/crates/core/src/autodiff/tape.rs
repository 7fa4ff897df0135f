//! Define-by-run computation tape.
//!
//! Every operation appends one node to the tape. Node ids are assigned in
//! creation order, so the node list is already topologically sorted and a
//! backward pass is a single reverse sweep.

use std::cell::RefCell;
use std::fmt;
use std::rc::Rc;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::kernels;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum BinaryKind {
    Add,
    Sub,
    Mul,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum UnaryKind {
    Tanh,
    Sigmoid,
    Relu,
}

/// Backward rule attached to a node. Nodes that do not require gradients
/// are stored as `Leaf` so no saved state is kept for them.
pub(crate) enum Op<T> {
    Leaf,
    Binary {
        kind: BinaryKind,
        a: usize,
        b: usize,
        /// The operand holds a single element broadcast over the other.
        a_scalar: bool,
        b_scalar: bool,
    },
    Scale {
        a: usize,
        c: T,
    },
    Unary {
        kind: UnaryKind,
        a: usize,
    },
    MatMul {
        a: usize,
        b: usize,
        batch: usize,
        m: usize,
        k: usize,
        n: usize,
        /// `b` is shared by every batch entry (flattened leading dims).
        shared_rhs: bool,
    },
    Transpose {
        a: usize,
        batch: usize,
        rows: usize,
        cols: usize,
    },
    Reshape {
        a: usize,
    },
    Broadcast {
        a: usize,
        reps: usize,
    },
    Sum {
        a: usize,
    },
    Mean {
        a: usize,
    },
    Concat {
        inputs: Vec<usize>,
        outer: usize,
        /// Per input: axis length times inner size.
        chunks: Vec<usize>,
    },
    Slice {
        a: usize,
        outer: usize,
        dim: usize,
        inner: usize,
        start: usize,
        len: usize,
    },
    Softmax {
        a: usize,
        outer: usize,
        dim: usize,
        inner: usize,
    },
    CausalMask {
        a: usize,
        batch: usize,
        rows: usize,
        cols: usize,
    },
    LayerNorm {
        a: usize,
        rows: usize,
        d: usize,
        inv_std: Vec<T>,
    },
    LstmRecurrence {
        xp: usize,
        w_hh: usize,
        dims: kernels::LstmDims,
        gates: Vec<T>,
        cells: Vec<T>,
    },
    Attention {
        q: usize,
        k: usize,
        v: usize,
        dims: kernels::AttnDims,
        lse: Vec<T>,
    },
}

pub(crate) struct Node<T> {
    pub(crate) shape: Vec<usize>,
    pub(crate) value: Vec<T>,
    pub(crate) requires_grad: bool,
    pub(crate) op: Op<T>,
    pub(crate) grad: Option<Vec<T>>,
}

pub(crate) struct TapeInner<T> {
    pub(crate) nodes: Vec<Node<T>>,
}

/// Recording context for one forward/backward pass.
///
/// Cloning a `Tape` yields another handle to the same recording.
pub struct Tape<T> {
    pub(crate) inner: Rc<RefCell<TapeInner<T>>>,
}

impl<T> Clone for Tape<T> {
    fn clone(&self) -> Self {
        Self {
            inner: Rc::clone(&self.inner),
        }
    }
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T> fmt::Debug for Tape<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tape")
            .field("nodes", &self.inner.borrow().nodes.len())
            .finish()
    }
}

/// Handle to one node of a [`Tape`].
///
/// Data, shape and gradient live on the tape; the handle is cheap to clone.
pub struct Tensor<T> {
    pub(crate) tape: Tape<T>,
    pub(crate) id: usize,
}

impl<T> Clone for Tensor<T> {
    fn clone(&self) -> Self {
        Self {
            tape: self.tape.clone(),
            id: self.id,
        }
    }
}

impl<T: Scalar> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let inner = self.tape.inner.borrow();
        let node = &inner.nodes[self.id];
        f.debug_struct("Tensor")
            .field("id", &self.id)
            .field("shape", &node.shape)
            .field("requires_grad", &node.requires_grad)
            .finish()
    }
}

pub(crate) fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self {
            inner: Rc::new(RefCell::new(TapeInner { nodes: Vec::new() })),
        }
    }

    /// Number of recorded nodes.
    pub fn len(&self) -> usize {
        self.inner.borrow().nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn same_as(&self, other: &Tape<T>) -> bool {
        Rc::ptr_eq(&self.inner, &other.inner)
    }

    /// Creates a leaf tensor.
    pub fn leaf(&self, shape: &[usize], data: Vec<T>, requires_grad: bool) -> Result<Tensor<T>> {
        if shape.is_empty() || shape.contains(&0) {
            return Err(Error::shape("leaf", format!("shape {shape:?} must have positive dims")));
        }
        if numel(shape) != data.len() {
            return Err(Error::shape(
                "leaf",
                format!("shape {shape:?} holds {} values, got {}", numel(shape), data.len()),
            ));
        }
        Ok(self.push(shape.to_vec(), data, Op::Leaf, requires_grad))
    }

    /// Leaf tensor that never receives a gradient.
    pub fn constant(&self, shape: &[usize], data: Vec<T>) -> Result<Tensor<T>> {
        self.leaf(shape, data, false)
    }

    pub fn zeros(&self, shape: &[usize]) -> Result<Tensor<T>> {
        self.constant(shape, vec![T::zero(); numel(shape)])
    }

    pub fn scalar(&self, value: T) -> Tensor<T> {
        self.push(vec![1], vec![value], Op::Leaf, false)
    }

    pub(crate) fn push(
        &self,
        shape: Vec<usize>,
        value: Vec<T>,
        op: Op<T>,
        requires_grad: bool,
    ) -> Tensor<T> {
        debug_assert_eq!(numel(&shape), value.len());
        let op = if requires_grad { op } else { Op::Leaf };
        let mut inner = self.inner.borrow_mut();
        let id = inner.nodes.len();
        inner.nodes.push(Node {
            shape,
            value,
            requires_grad,
            op,
            grad: None,
        });
        Tensor {
            tape: self.clone(),
            id,
        }
    }

    fn backward_from(&self, root: usize) -> Result<()> {
        let mut inner = self.inner.borrow_mut();
        let nodes = &mut inner.nodes;
        if nodes[root].value.len() != 1 {
            return Err(Error::contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                nodes[root].shape
            )));
        }
        if !nodes[root].requires_grad {
            return Ok(());
        }
        let mut grads: Vec<Option<Vec<T>>> = Vec::with_capacity(root + 1);
        grads.resize_with(root + 1, || None);
        grads[root] = Some(vec![T::one()]);

        for id in (0..=root).rev() {
            let Some(g) = grads[id].take() else { continue };
            if matches!(nodes[id].op, Op::Leaf) {
                if nodes[id].requires_grad {
                    let slot = &mut nodes[id].grad;
                    match slot {
                        Some(acc) => kernels::add_assign(acc, &g),
                        None => *slot = Some(g),
                    }
                }
                continue;
            }
            propagate(nodes, id, &g, &mut grads);
        }
        Ok(())
    }
}

fn accumulate<T: Scalar>(grads: &mut [Option<Vec<T>>], nodes: &[Node<T>], id: usize, g: Vec<T>) {
    if !nodes[id].requires_grad {
        return;
    }
    match &mut grads[id] {
        Some(acc) => kernels::add_assign(acc, &g),
        slot @ None => *slot = Some(g),
    }
}

fn propagate<T: Scalar>(nodes: &[Node<T>], id: usize, g: &[T], grads: &mut [Option<Vec<T>>]) {
    let node = &nodes[id];
    let wants = |i: usize| nodes[i].requires_grad;
    match &node.op {
        Op::Leaf => {}
        Op::Binary {
            kind,
            a,
            b,
            a_scalar,
            b_scalar,
        } => {
            let (a, b) = (*a, *b);
            let av = &nodes[a].value;
            let bv = &nodes[b].value;
            let at = |i: usize, v: &[T], s: bool| if s { v[0] } else { v[i] };
            if wants(a) {
                let ga: Vec<T> = match kind {
                    BinaryKind::Add | BinaryKind::Sub => g.to_vec(),
                    BinaryKind::Mul => g.iter().enumerate().map(|(i, &gi)| gi * at(i, bv, *b_scalar)).collect(),
                };
                let ga = if *a_scalar { vec![ga.iter().copied().sum()] } else { ga };
                accumulate(grads, nodes, a, ga);
            }
            if wants(b) {
                let gb: Vec<T> = match kind {
                    BinaryKind::Add => g.to_vec(),
                    BinaryKind::Sub => g.iter().map(|&x| -x).collect(),
                    BinaryKind::Mul => g.iter().enumerate().map(|(i, &gi)| gi * at(i, av, *a_scalar)).collect(),
                };
                let gb = if *b_scalar { vec![gb.iter().copied().sum()] } else { gb };
                accumulate(grads, nodes, b, gb);
            }
        }
        Op::Scale { a, c } => {
            accumulate(grads, nodes, *a, g.iter().map(|&x| x * *c).collect());
        }
        Op::Unary { kind, a } => {
            let y = &node.value;
            let ga: Vec<T> = match kind {
                UnaryKind::Tanh => g.iter().zip(y).map(|(&gi, &yi)| gi * (T::one() - yi * yi)).collect(),
                UnaryKind::Sigmoid => g.iter().zip(y).map(|(&gi, &yi)| gi * yi * (T::one() - yi)).collect(),
                UnaryKind::Relu => g
                    .iter()
                    .zip(y)
                    .map(|(&gi, &yi)| if yi > T::zero() { gi } else { T::zero() })
                    .collect(),
            };
            accumulate(grads, nodes, *a, ga);
        }
        Op::MatMul {
            a,
            b,
            batch,
            m,
            k,
            n,
            shared_rhs,
        } => {
            let (a, b) = (*a, *b);
            let (batch, m, k, n) = (*batch, *m, *k, *n);
            if wants(a) {
                let mut ga = vec![T::zero(); batch * m * k];
                for bi in 0..batch {
                    let bo = if *shared_rhs { 0 } else { bi * k * n };
                    kernels::matmul_nt(
                        &g[bi * m * n..(bi + 1) * m * n],
                        &nodes[b].value[bo..bo + k * n],
                        &mut ga[bi * m * k..(bi + 1) * m * k],
                        m,
                        n,
                        k,
                    );
                }
                accumulate(grads, nodes, a, ga);
            }
            if wants(b) {
                let len = if *shared_rhs { k * n } else { batch * k * n };
                let mut gb = vec![T::zero(); len];
                for bi in 0..batch {
                    let bo = if *shared_rhs { 0 } else { bi * k * n };
                    kernels::matmul_tn(
                        &nodes[a].value[bi * m * k..(bi + 1) * m * k],
                        &g[bi * m * n..(bi + 1) * m * n],
                        &mut gb[bo..bo + k * n],
                        m,
                        k,
                        n,
                    );
                }
                accumulate(grads, nodes, b, gb);
            }
        }
        Op::Transpose { a, batch, rows, cols } => {
            // forward mapped [rows, cols] -> [cols, rows]; undo it.
            let ga = kernels::transpose(g, *batch, *cols, *rows);
            accumulate(grads, nodes, *a, ga);
        }
        Op::Reshape { a } => accumulate(grads, nodes, *a, g.to_vec()),
        Op::Broadcast { a, reps } => {
            let len = nodes[*a].value.len();
            let mut ga = vec![T::zero(); len];
            for r in 0..*reps {
                kernels::add_assign(&mut ga, &g[r * len..(r + 1) * len]);
            }
            accumulate(grads, nodes, *a, ga);
        }
        Op::Sum { a } => {
            let len = nodes[*a].value.len();
            accumulate(grads, nodes, *a, vec![g[0]; len]);
        }
        Op::Mean { a } => {
            let len = nodes[*a].value.len();
            let s = g[0] / T::from_usize(len).unwrap();
            accumulate(grads, nodes, *a, vec![s; len]);
        }
        Op::Concat { inputs, outer, chunks } => {
            let total: usize = chunks.iter().sum();
            let mut offset = 0;
            for (&inp, &chunk) in inputs.iter().zip(chunks) {
                if wants(inp) {
                    let mut gi = Vec::with_capacity(outer * chunk);
                    for o in 0..*outer {
                        let base = o * total + offset;
                        gi.extend_from_slice(&g[base..base + chunk]);
                    }
                    accumulate(grads, nodes, inp, gi);
                }
                offset += chunk;
            }
        }
        Op::Slice {
            a,
            outer,
            dim,
            inner,
            start,
            len,
        } => {
            if !wants(*a) {
                return;
            }
            let ga = grads[*a].get_or_insert_with(|| vec![T::zero(); outer * dim * inner]);
            let span = len * inner;
            for o in 0..*outer {
                let dst = o * dim * inner + start * inner;
                kernels::add_assign(&mut ga[dst..dst + span], &g[o * span..(o + 1) * span]);
            }
        }
        Op::Softmax { a, outer, dim, inner } => {
            let y = &node.value;
            let mut ga = vec![T::zero(); y.len()];
            for o in 0..*outer {
                for i in 0..*inner {
                    let idx = |j: usize| o * dim * inner + j * inner + i;
                    let dot: T = (0..*dim).map(|j| g[idx(j)] * y[idx(j)]).sum();
                    for j in 0..*dim {
                        ga[idx(j)] = y[idx(j)] * (g[idx(j)] - dot);
                    }
                }
            }
            accumulate(grads, nodes, *a, ga);
        }
        Op::CausalMask { a, batch, rows, cols } => {
            let mut ga = g.to_vec();
            for bi in 0..*batch {
                for r in 0..*rows {
                    for c in (r + 1)..*cols {
                        ga[bi * rows * cols + r * cols + c] = T::zero();
                    }
                }
            }
            accumulate(grads, nodes, *a, ga);
        }
        Op::LayerNorm { a, rows, d, inv_std } => {
            let xhat = &node.value;
            let df = T::from_usize(*d).unwrap();
            let mut ga = vec![T::zero(); xhat.len()];
            for r in 0..*rows {
                let gr = &g[r * d..(r + 1) * d];
                let xr = &xhat[r * d..(r + 1) * d];
                let sg: T = gr.iter().copied().sum();
                let sgx: T = gr.iter().zip(xr).map(|(&a, &b)| a * b).sum();
                for j in 0..*d {
                    ga[r * d + j] = inv_std[r] / df * (df * gr[j] - sg - xr[j] * sgx);
                }
            }
            accumulate(grads, nodes, *a, ga);
        }
        Op::LstmRecurrence {
            xp,
            w_hh,
            dims,
            gates,
            cells,
        } => {
            let (gxp, gw) = kernels::lstm_backward(g, &nodes[*w_hh].value, &node.value, gates, cells, *dims);
            accumulate(grads, nodes, *xp, gxp);
            accumulate(grads, nodes, *w_hh, gw);
        }
        Op::Attention { q, k, v, dims, lse } => {
            let (gq, gk, gv) = kernels::attention_backward(
                &nodes[*q].value,
                &nodes[*k].value,
                &nodes[*v].value,
                &node.value,
                lse,
                g,
                dims,
            );
            accumulate(grads, nodes, *q, gq);
            accumulate(grads, nodes, *k, gk);
            accumulate(grads, nodes, *v, gv);
        }
    }
}

impl<T: Scalar> Tensor<T> {
    pub fn tape(&self) -> &Tape<T> {
        &self.tape
    }

    /// Position of this tensor's node on its tape.
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.inner.borrow().nodes[self.id].shape.clone()
    }

    pub fn numel(&self) -> usize {
        self.tape.inner.borrow().nodes[self.id].value.len()
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.inner.borrow().nodes[self.id].requires_grad
    }

    pub fn to_vec(&self) -> Vec<T> {
        self.tape.inner.borrow().nodes[self.id].value.clone()
    }

    pub fn with_data<R>(&self, f: impl FnOnce(&[T]) -> R) -> R {
        f(&self.tape.inner.borrow().nodes[self.id].value)
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> Result<T> {
        self.with_data(|d| {
            if d.len() == 1 {
                Ok(d[0])
            } else {
                Err(Error::contract(format!("item() on tensor with {} elements", d.len())))
            }
        })
    }

    /// Accumulated gradient. Only leaves retain gradients after `backward`.
    pub fn grad(&self) -> Option<Vec<T>> {
        self.tape.inner.borrow().nodes[self.id].grad.clone()
    }

    pub fn zero_grad(&self) {
        self.tape.inner.borrow_mut().nodes[self.id].grad = None;
    }

    /// Reverse sweep from this scalar. Gradients add onto any already
    /// stored on leaves; callers zero them between steps.
    pub fn backward(&self) -> Result<()> {
        self.tape.backward_from(self.id)
    }

    pub fn all_finite(&self) -> bool {
        self.with_data(|d| d.iter().all(|x| x.is_finite()))
    }
}
