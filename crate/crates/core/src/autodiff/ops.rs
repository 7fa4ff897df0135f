//! Differentiable operations on [`Tensor`].
//!
//! Binary elementwise ops need identical shapes; the only implicit
//! broadcast is a single-element tensor against any tensor. Everything else
//! is spelled out with [`Tensor::expand`].

use std::ops::Range;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::kernels::{self, AttnDims};
use super::tape::{numel, BinaryKind, Op, Tensor, UnaryKind};

/// Elementwise operation selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementwiseKind {
    Add,
    Mul,
    Sub,
    Tanh,
    Sigmoid,
    Relu,
}

/// Dispatches an elementwise op; binary kinds require `b`.
pub fn elementwise<T: Scalar>(kind: ElementwiseKind, a: &Tensor<T>, b: Option<&Tensor<T>>) -> Result<Tensor<T>> {
    let need = || b.ok_or_else(|| Error::contract(format!("{kind:?} needs two operands")));
    match kind {
        ElementwiseKind::Add => a.add(need()?),
        ElementwiseKind::Mul => a.mul(need()?),
        ElementwiseKind::Sub => a.sub(need()?),
        ElementwiseKind::Tanh => Ok(a.tanh()),
        ElementwiseKind::Sigmoid => Ok(a.sigmoid()),
        ElementwiseKind::Relu => Ok(a.relu()),
    }
}

/// Splits `shape` around `axis` into (outer, dim, inner).
fn axis_split(op: &'static str, shape: &[usize], axis: usize) -> Result<(usize, usize, usize)> {
    if axis >= shape.len() {
        return Err(Error::shape(op, format!("axis {axis} out of range for shape {shape:?}")));
    }
    Ok((numel(&shape[..axis]), shape[axis], numel(&shape[axis + 1..])))
}

fn same_tape<T: Scalar>(op: &'static str, a: &Tensor<T>, b: &Tensor<T>) -> Result<()> {
    if a.tape.same_as(&b.tape) {
        Ok(())
    } else {
        Err(Error::contract(format!("{op}: operands live on different tapes")))
    }
}

/// Concatenates along `axis`; all other axes must agree.
pub fn concat<T: Scalar>(parts: &[Tensor<T>], axis: usize) -> Result<Tensor<T>> {
    let first = parts
        .first()
        .ok_or_else(|| Error::shape("concat", "no inputs"))?;
    let tape = first.tape.clone();
    let inner = tape.inner.borrow();
    let base = &inner.nodes[first.id].shape;
    let (outer, _, _) = axis_split("concat", base, axis)?;
    let mut chunks = Vec::with_capacity(parts.len());
    let mut axis_len = 0;
    let mut rg = false;
    for p in parts {
        same_tape("concat", first, p)?;
        let node = &inner.nodes[p.id];
        let s = &node.shape;
        if s.len() != base.len() || s.iter().zip(base).enumerate().any(|(i, (x, y))| i != axis && x != y) {
            return Err(Error::Dimension {
                op: "concat",
                lhs: base.clone(),
                rhs: s.clone(),
            });
        }
        axis_len += s[axis];
        chunks.push(s[axis] * numel(&s[axis + 1..]));
        rg |= node.requires_grad;
    }
    let total: usize = chunks.iter().sum();
    let mut value = Vec::with_capacity(outer * total);
    for o in 0..outer {
        for (p, &chunk) in parts.iter().zip(&chunks) {
            value.extend_from_slice(&inner.nodes[p.id].value[o * chunk..(o + 1) * chunk]);
        }
    }
    let mut shape = base.clone();
    shape[axis] = axis_len;
    drop(inner);
    let inputs = parts.iter().map(|p| p.id).collect();
    Ok(tape.push(shape, value, Op::Concat { inputs, outer, chunks }, rg))
}

/// Fused scaled dot-product attention: `softmax(q·kᵀ/√d_k [+ causal mask])·v`.
///
/// Shapes `q: [B,Tq,dk]`, `k: [B,Tk,dk]`, `v: [B,Tk,dv]`. Weights are never
/// stored; backward recomputes them per row.
pub fn attention<T: Scalar>(q: &Tensor<T>, k: &Tensor<T>, v: &Tensor<T>, causal: bool) -> Result<Tensor<T>> {
    same_tape("attention", q, k)?;
    same_tape("attention", q, v)?;
    let tape = q.tape.clone();
    let inner = tape.inner.borrow();
    let (qs, ks, vs) = (
        &inner.nodes[q.id].shape,
        &inner.nodes[k.id].shape,
        &inner.nodes[v.id].shape,
    );
    if qs.len() != 3 || ks.len() != 3 || vs.len() != 3 {
        return Err(Error::shape("attention", "q, k, v must be rank 3"));
    }
    if qs[0] != ks[0] || qs[2] != ks[2] {
        return Err(Error::Dimension {
            op: "attention",
            lhs: qs.clone(),
            rhs: ks.clone(),
        });
    }
    if ks[0] != vs[0] || ks[1] != vs[1] {
        return Err(Error::Dimension {
            op: "attention",
            lhs: ks.clone(),
            rhs: vs.clone(),
        });
    }
    let dims = AttnDims {
        batch: qs[0],
        tq: qs[1],
        tk: ks[1],
        dk: qs[2],
        dv: vs[2],
        causal,
        scale: 1.0 / (qs[2] as f64).sqrt(),
    };
    let (out, lse) = kernels::attention_forward(
        &inner.nodes[q.id].value,
        &inner.nodes[k.id].value,
        &inner.nodes[v.id].value,
        &dims,
    );
    let rg = inner.nodes[q.id].requires_grad || inner.nodes[k.id].requires_grad || inner.nodes[v.id].requires_grad;
    drop(inner);
    Ok(tape.push(
        vec![dims.batch, dims.tq, dims.dv],
        out,
        Op::Attention {
            q: q.id,
            k: k.id,
            v: v.id,
            dims,
            lse,
        },
        rg,
    ))
}

/// Mean squared error over every element.
pub fn mse<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<Tensor<T>> {
    let d = pred.sub(target)?;
    d.mul(&d)?.mean()
}

impl<T: Scalar> Tensor<T> {
    fn binary(&self, other: &Tensor<T>, kind: BinaryKind, name: &'static str) -> Result<Tensor<T>> {
        same_tape(name, self, other)?;
        let inner = self.tape.inner.borrow();
        let a = &inner.nodes[self.id];
        let b = &inner.nodes[other.id];
        let (la, lb) = (a.value.len(), b.value.len());
        let (a_scalar, b_scalar, shape) = if a.shape == b.shape {
            (false, false, a.shape.clone())
        } else if lb == 1 {
            (false, true, a.shape.clone())
        } else if la == 1 {
            (true, false, b.shape.clone())
        } else {
            return Err(Error::Dimension {
                op: name,
                lhs: a.shape.clone(),
                rhs: b.shape.clone(),
            });
        };
        let n = la.max(lb);
        let av = |i: usize| if a_scalar { a.value[0] } else { a.value[i] };
        let bv = |i: usize| if b_scalar { b.value[0] } else { b.value[i] };
        let value: Vec<T> = match kind {
            BinaryKind::Add => (0..n).map(|i| av(i) + bv(i)).collect(),
            BinaryKind::Sub => (0..n).map(|i| av(i) - bv(i)).collect(),
            BinaryKind::Mul => (0..n).map(|i| av(i) * bv(i)).collect(),
        };
        let rg = a.requires_grad || b.requires_grad;
        drop(inner);
        Ok(self.tape.push(
            shape,
            value,
            Op::Binary {
                kind,
                a: self.id,
                b: other.id,
                a_scalar,
                b_scalar,
            },
            rg,
        ))
    }

    pub fn add(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        self.binary(other, BinaryKind::Add, "add")
    }

    pub fn sub(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        self.binary(other, BinaryKind::Sub, "sub")
    }

    pub fn mul(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        self.binary(other, BinaryKind::Mul, "mul")
    }

    /// Multiplication by a constant.
    pub fn scale(&self, c: T) -> Tensor<T> {
        let inner = self.tape.inner.borrow();
        let node = &inner.nodes[self.id];
        let value = node.value.iter().map(|&x| x * c).collect();
        let (shape, rg) = (node.shape.clone(), node.requires_grad);
        drop(inner);
        self.tape.push(shape, value, Op::Scale { a: self.id, c }, rg)
    }

    fn unary(&self, kind: UnaryKind) -> Tensor<T> {
        let inner = self.tape.inner.borrow();
        let node = &inner.nodes[self.id];
        let f = |x: T| match kind {
            UnaryKind::Tanh => x.tanh(),
            UnaryKind::Sigmoid => sigmoid(x),
            UnaryKind::Relu => x.max(T::zero()),
        };
        let value = node.value.iter().map(|&x| f(x)).collect();
        let (shape, rg) = (node.shape.clone(), node.requires_grad);
        drop(inner);
        self.tape.push(shape, value, Op::Unary { kind, a: self.id }, rg)
    }

    pub fn tanh(&self) -> Tensor<T> {
        self.unary(UnaryKind::Tanh)
    }

    pub fn sigmoid(&self) -> Tensor<T> {
        self.unary(UnaryKind::Sigmoid)
    }

    pub fn relu(&self) -> Tensor<T> {
        self.unary(UnaryKind::Relu)
    }

    /// Matrix product.
    ///
    /// `[.., K] · [K, N] -> [.., N]` (leading dims flattened into rows), or
    /// batched `[B, M, K] · [B, K, N] -> [B, M, N]`.
    pub fn matmul(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        same_tape("matmul", self, other)?;
        let inner = self.tape.inner.borrow();
        let a = &inner.nodes[self.id];
        let b = &inner.nodes[other.id];
        let mismatch = || Error::Dimension {
            op: "matmul",
            lhs: a.shape.clone(),
            rhs: b.shape.clone(),
        };
        let ka = *a.shape.last().unwrap();
        let (batch, m, k, n, shared_rhs, shape) = match b.shape.len() {
            2 => {
                if a.shape.len() < 2 || ka != b.shape[0] {
                    return Err(mismatch());
                }
                let mut shape = a.shape.clone();
                *shape.last_mut().unwrap() = b.shape[1];
                (1, a.value.len() / ka, ka, b.shape[1], true, shape)
            }
            3 => {
                if a.shape.len() != 3 || a.shape[0] != b.shape[0] || ka != b.shape[1] {
                    return Err(mismatch());
                }
                let shape = vec![a.shape[0], a.shape[1], b.shape[2]];
                (a.shape[0], a.shape[1], ka, b.shape[2], false, shape)
            }
            _ => return Err(mismatch()),
        };
        let mut value = vec![T::zero(); batch * m * n];
        for bi in 0..batch {
            let bo = if shared_rhs { 0 } else { bi * k * n };
            kernels::matmul(
                &a.value[bi * m * k..(bi + 1) * m * k],
                &b.value[bo..bo + k * n],
                &mut value[bi * m * n..(bi + 1) * m * n],
                m,
                k,
                n,
            );
        }
        let rg = a.requires_grad || b.requires_grad;
        drop(inner);
        Ok(self.tape.push(
            shape,
            value,
            Op::MatMul {
                a: self.id,
                b: other.id,
                batch,
                m,
                k,
                n,
                shared_rhs,
            },
            rg,
        ))
    }

    /// Swaps the last two axes.
    pub fn transpose(&self) -> Result<Tensor<T>> {
        let inner = self.tape.inner.borrow();
        let node = &inner.nodes[self.id];
        let r = node.shape.len();
        if r < 2 {
            return Err(Error::shape("transpose", format!("rank {r} < 2")));
        }
        let (rows, cols) = (node.shape[r - 2], node.shape[r - 1]);
        let batch = node.value.len() / (rows * cols);
        let value = kernels::transpose(&node.value, batch, rows, cols);
        let mut shape = node.shape.clone();
        shape.swap(r - 2, r - 1);
        let rg = node.requires_grad;
        drop(inner);
        Ok(self.tape.push(
            shape,
            value,
            Op::Transpose {
                a: self.id,
                batch,
                rows,
                cols,
            },
            rg,
        ))
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor<T>> {
        let inner = self.tape.inner.borrow();
        let node = &inner.nodes[self.id];
        if shape.is_empty() || shape.contains(&0) || numel(shape) != node.value.len() {
            return Err(Error::Dimension {
                op: "reshape",
                lhs: node.shape.clone(),
                rhs: shape.to_vec(),
            });
        }
        let value = node.value.clone();
        let rg = node.requires_grad;
        drop(inner);
        Ok(self.tape.push(shape.to_vec(), value, Op::Reshape { a: self.id }, rg))
    }

    /// Tiles the tensor over new leading axes: `[s..] -> [lead.., s..]`.
    pub fn expand(&self, lead: &[usize]) -> Result<Tensor<T>> {
        if lead.contains(&0) {
            return Err(Error::shape("expand", format!("leading dims {lead:?} must be positive")));
        }
        let reps = numel(lead);
        let inner = self.tape.inner.borrow();
        let node = &inner.nodes[self.id];
        let mut value = Vec::with_capacity(reps * node.value.len());
        for _ in 0..reps {
            value.extend_from_slice(&node.value);
        }
        let mut shape = lead.to_vec();
        shape.extend_from_slice(&node.shape);
        let rg = node.requires_grad;
        drop(inner);
        Ok(self.tape.push(shape, value, Op::Broadcast { a: self.id, reps }, rg))
    }

    pub fn sum(&self) -> Result<Tensor<T>> {
        let (value, rg) = self.with_node(|n| (n.value.iter().copied().sum::<T>(), n.requires_grad));
        Ok(self.tape.push(vec![1], vec![value], Op::Sum { a: self.id }, rg))
    }

    pub fn mean(&self) -> Result<Tensor<T>> {
        let (value, rg) = self.with_node(|n| {
            let s: T = n.value.iter().copied().sum();
            (s / T::from_usize(n.value.len()).unwrap(), n.requires_grad)
        });
        Ok(self.tape.push(vec![1], vec![value], Op::Mean { a: self.id }, rg))
    }

    fn with_node<R>(&self, f: impl FnOnce(&super::tape::Node<T>) -> R) -> R {
        f(&self.tape.inner.borrow().nodes[self.id])
    }

    /// Sub-range `range` of `axis`.
    pub fn slice(&self, axis: usize, range: Range<usize>) -> Result<Tensor<T>> {
        let inner = self.tape.inner.borrow();
        let node = &inner.nodes[self.id];
        let (outer, dim, inn) = axis_split("slice", &node.shape, axis)?;
        if range.start >= range.end || range.end > dim {
            return Err(Error::shape(
                "slice",
                format!("range {range:?} invalid for axis {axis} of length {dim}"),
            ));
        }
        let len = range.end - range.start;
        let span = len * inn;
        let mut value = Vec::with_capacity(outer * span);
        for o in 0..outer {
            let src = o * dim * inn + range.start * inn;
            value.extend_from_slice(&node.value[src..src + span]);
        }
        let mut shape = node.shape.clone();
        shape[axis] = len;
        let rg = node.requires_grad;
        drop(inner);
        Ok(self.tape.push(
            shape,
            value,
            Op::Slice {
                a: self.id,
                outer,
                dim,
                inner: inn,
                start: range.start,
                len,
            },
            rg,
        ))
    }

    pub fn softmax(&self, axis: usize) -> Result<Tensor<T>> {
        let inner = self.tape.inner.borrow();
        let node = &inner.nodes[self.id];
        let (outer, dim, inn) = axis_split("softmax", &node.shape, axis)?;
        let x = &node.value;
        let mut value = vec![T::zero(); x.len()];
        for o in 0..outer {
            for i in 0..inn {
                let idx = |j: usize| o * dim * inn + j * inn + i;
                let mx = (0..dim).map(|j| x[idx(j)]).fold(T::neg_infinity(), T::max);
                let mut s = T::zero();
                for j in 0..dim {
                    let e = (x[idx(j)] - mx).exp();
                    value[idx(j)] = e;
                    s = s + e;
                }
                for j in 0..dim {
                    value[idx(j)] = value[idx(j)] / s;
                }
            }
        }
        let (shape, rg) = (node.shape.clone(), node.requires_grad);
        drop(inner);
        Ok(self.tape.push(
            shape,
            value,
            Op::Softmax {
                a: self.id,
                outer,
                dim,
                inner: inn,
            },
            rg,
        ))
    }

    /// Sets entries above the diagonal of the last two axes to `-inf`.
    pub fn causal_mask(&self) -> Result<Tensor<T>> {
        let inner = self.tape.inner.borrow();
        let node = &inner.nodes[self.id];
        let r = node.shape.len();
        if r < 2 {
            return Err(Error::shape("causal_mask", format!("rank {r} < 2")));
        }
        let (rows, cols) = (node.shape[r - 2], node.shape[r - 1]);
        let batch = node.value.len() / (rows * cols);
        let mut value = node.value.clone();
        for b in 0..batch {
            for i in 0..rows {
                for j in (i + 1)..cols {
                    value[b * rows * cols + i * cols + j] = T::neg_infinity();
                }
            }
        }
        let (shape, rg) = (node.shape.clone(), node.requires_grad);
        drop(inner);
        Ok(self.tape.push(
            shape,
            value,
            Op::CausalMask {
                a: self.id,
                batch,
                rows,
                cols,
            },
            rg,
        ))
    }

    /// Normalises each row of the last axis to zero mean and unit variance
    /// (population variance plus `eps`). No affine scale/shift.
    pub fn layer_norm(&self, eps: T) -> Result<Tensor<T>> {
        let inner = self.tape.inner.borrow();
        let node = &inner.nodes[self.id];
        let d = *node.shape.last().unwrap();
        let rows = node.value.len() / d;
        let df = T::from_usize(d).unwrap();
        let mut value = vec![T::zero(); node.value.len()];
        let mut inv_std = Vec::with_capacity(rows);
        for r in 0..rows {
            let x = &node.value[r * d..(r + 1) * d];
            let mu = x.iter().copied().sum::<T>() / df;
            let var = x.iter().map(|&v| (v - mu) * (v - mu)).sum::<T>() / df;
            let is = T::one() / (var + eps).sqrt();
            for (o, &v) in value[r * d..(r + 1) * d].iter_mut().zip(x) {
                *o = (v - mu) * is;
            }
            inv_std.push(is);
        }
        let (shape, rg) = (node.shape.clone(), node.requires_grad);
        drop(inner);
        Ok(self.tape.push(
            shape,
            value,
            Op::LayerNorm {
                a: self.id,
                rows,
                d,
                inv_std,
            },
            rg,
        ))
    }

    /// LSTM recurrence from zero state over pre-projected gate inputs
    /// `self: [B, T, 4H]` with recurrent weights `w_hh: [H, 4H]`. Returns the
    /// hidden sequence `[B, T, H]` and the final cell state `[B, H]`.
    pub fn lstm_recurrence(&self, w_hh: &Tensor<T>) -> Result<(Tensor<T>, Vec<T>)> {
        same_tape("lstm_recurrence", self, w_hh)?;
        let inner = self.tape.inner.borrow();
        let xp = &inner.nodes[self.id];
        let w = &inner.nodes[w_hh.id];
        let ok = xp.shape.len() == 3 && w.shape.len() == 2 && w.shape[1] == 4 * w.shape[0] && xp.shape[2] == w.shape[1];
        if !ok {
            return Err(Error::Dimension {
                op: "lstm_recurrence",
                lhs: xp.shape.clone(),
                rhs: w.shape.clone(),
            });
        }
        let dims = kernels::LstmDims {
            batch: xp.shape[0],
            steps: xp.shape[1],
            hidden: w.shape[0],
        };
        let (hs, gates, cells) = kernels::lstm_forward(&xp.value, &w.value, dims);
        let (b, t, h) = (dims.batch, dims.steps, dims.hidden);
        let mut c_last = Vec::with_capacity(b * h);
        if t > 0 {
            for bi in 0..b {
                let at = (bi * t + t - 1) * h;
                c_last.extend_from_slice(&cells[at..at + h]);
            }
        }
        let rg = xp.requires_grad || w.requires_grad;
        drop(inner);
        let out = self.tape.push(
            vec![b, t, h],
            hs,
            Op::LstmRecurrence {
                xp: self.id,
                w_hh: w_hh.id,
                dims,
                gates,
                cells,
            },
            rg,
        );
        Ok((out, c_last))
    }

    /// Same values, cut from the graph: no gradient reaches the ancestors.
    pub fn detach(&self) -> Tensor<T> {
        let (shape, value) = self.with_node(|n| (n.shape.clone(), n.value.clone()));
        self.tape.push(shape, value, Op::Leaf, false)
    }
}

#[inline]
pub(crate) fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}
