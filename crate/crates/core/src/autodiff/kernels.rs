//! Dense loops behind the tensor ops. Row-major throughout.

use crate::scalar::Scalar;

pub(crate) fn add_assign<T: Scalar>(acc: &mut [T], x: &[T]) {
    for (a, &b) in acc.iter_mut().zip(x) {
        *a = *a + b;
    }
}

/// `out[m,n] += a[m,k] · b[k,n]`
pub(crate) fn matmul<T: Scalar>(a: &[T], b: &[T], out: &mut [T], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == T::zero() {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o = *o + aip * bv;
            }
        }
    }
}

/// `out[m,k] += g[m,n] · b[k,n]ᵀ`
pub(crate) fn matmul_nt<T: Scalar>(g: &[T], b: &[T], out: &mut [T], m: usize, n: usize, k: usize) {
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let brow = &b[p * n..(p + 1) * n];
            let mut s = T::zero();
            for (&x, &y) in grow.iter().zip(brow) {
                s = s + x * y;
            }
            out[i * k + p] = out[i * k + p] + s;
        }
    }
}

/// `out[k,n] += a[m,k]ᵀ · g[m,n]`
pub(crate) fn matmul_tn<T: Scalar>(a: &[T], g: &[T], out: &mut [T], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == T::zero() {
                continue;
            }
            let orow = &mut out[p * n..(p + 1) * n];
            for (o, &gv) in orow.iter_mut().zip(grow) {
                *o = *o + aip * gv;
            }
        }
    }
}

/// Swaps the last two axes of `batch` stacked `[rows, cols]` blocks.
pub(crate) fn transpose<T: Scalar>(x: &[T], batch: usize, rows: usize, cols: usize) -> Vec<T> {
    let mut out = vec![T::zero(); x.len()];
    for b in 0..batch {
        let off = b * rows * cols;
        for r in 0..rows {
            for c in 0..cols {
                out[off + c * rows + r] = x[off + r * cols + c];
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct AttnDims {
    pub batch: usize,
    pub tq: usize,
    pub tk: usize,
    pub dk: usize,
    pub dv: usize,
    pub causal: bool,
    pub scale: f64,
}

impl AttnDims {
    #[inline]
    fn visible(&self, i: usize) -> usize {
        if self.causal {
            (i + 1).min(self.tk)
        } else {
            self.tk
        }
    }
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut s = T::zero();
    for (&x, &y) in a.iter().zip(b) {
        s = s + x * y;
    }
    s
}

/// Scaled dot-product attention without materialising the weight matrix.
/// Returns the output `[batch, tq, dv]` and per-row log-sum-exp.
pub(crate) fn attention_forward<T: Scalar>(q: &[T], k: &[T], v: &[T], d: &AttnDims) -> (Vec<T>, Vec<T>) {
    let scale = T::lit(d.scale);
    let mut out = vec![T::zero(); d.batch * d.tq * d.dv];
    let mut lse = vec![T::zero(); d.batch * d.tq];
    let mut scores = vec![T::zero(); d.tk];
    for b in 0..d.batch {
        let qb = &q[b * d.tq * d.dk..];
        let kb = &k[b * d.tk * d.dk..];
        let vb = &v[b * d.tk * d.dv..];
        for i in 0..d.tq {
            let lim = d.visible(i);
            let qi = &qb[i * d.dk..(i + 1) * d.dk];
            let mut mx = T::neg_infinity();
            for j in 0..lim {
                let s = scale * dot(qi, &kb[j * d.dk..(j + 1) * d.dk]);
                scores[j] = s;
                if s > mx {
                    mx = s;
                }
            }
            let mut sum = T::zero();
            for s in scores.iter_mut().take(lim) {
                *s = (*s - mx).exp();
                sum = sum + *s;
            }
            let orow = &mut out[(b * d.tq + i) * d.dv..(b * d.tq + i + 1) * d.dv];
            for j in 0..lim {
                let p = scores[j] / sum;
                let vrow = &vb[j * d.dv..(j + 1) * d.dv];
                for (o, &vv) in orow.iter_mut().zip(vrow) {
                    *o = *o + p * vv;
                }
            }
            lse[b * d.tq + i] = mx + sum.ln();
        }
    }
    (out, lse)
}

/// Gradients of [`attention_forward`] by recomputing row weights from the
/// stored log-sum-exp.
pub(crate) fn attention_backward<T: Scalar>(
    q: &[T],
    k: &[T],
    v: &[T],
    out: &[T],
    lse: &[T],
    g: &[T],
    d: &AttnDims,
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let scale = T::lit(d.scale);
    let mut gq = vec![T::zero(); q.len()];
    let mut gk = vec![T::zero(); k.len()];
    let mut gv = vec![T::zero(); v.len()];
    let mut probs = vec![T::zero(); d.tk];
    for b in 0..d.batch {
        let (qo, ko, vo) = (b * d.tq * d.dk, b * d.tk * d.dk, b * d.tk * d.dv);
        for i in 0..d.tq {
            let lim = d.visible(i);
            let row = b * d.tq + i;
            let qi = &q[qo + i * d.dk..qo + (i + 1) * d.dk];
            let gi = &g[row * d.dv..(row + 1) * d.dv];
            let delta = dot(gi, &out[row * d.dv..(row + 1) * d.dv]);
            for (j, p) in probs.iter_mut().enumerate().take(lim) {
                let s = scale * dot(qi, &k[ko + j * d.dk..ko + (j + 1) * d.dk]);
                *p = (s - lse[row]).exp();
            }
            for (j, &p) in probs.iter().enumerate().take(lim) {
                let vj = &v[vo + j * d.dv..vo + (j + 1) * d.dv];
                let ds = p * (dot(gi, vj) - delta) * scale;
                let gvj = &mut gv[vo + j * d.dv..vo + (j + 1) * d.dv];
                for (o, &x) in gvj.iter_mut().zip(gi) {
                    *o = *o + p * x;
                }
                if ds != T::zero() {
                    let kj = &k[ko + j * d.dk..ko + (j + 1) * d.dk];
                    let gqi = &mut gq[qo + i * d.dk..qo + (i + 1) * d.dk];
                    for (o, &x) in gqi.iter_mut().zip(kj) {
                        *o = *o + ds * x;
                    }
                    let gkj = &mut gk[ko + j * d.dk..ko + (j + 1) * d.dk];
                    for (o, &x) in gkj.iter_mut().zip(qi) {
                        *o = *o + ds * x;
                    }
                }
            }
        }
    }
    (gq, gk, gv)
}

/// Sizes of an LSTM recurrence over `[batch, steps, 4·hidden]` inputs.
#[derive(Debug, Clone, Copy)]
pub(crate) struct LstmDims {
    pub batch: usize,
    pub steps: usize,
    pub hidden: usize,
}

/// Runs the recurrence from zero state on pre-projected inputs
/// `xp = x·W_ih + b`. Gate blocks are input, forget, candidate, output.
/// Returns the hidden sequence, the activated gates and the cell sequence.
pub(crate) fn lstm_forward<T: Scalar>(xp: &[T], w_hh: &[T], d: LstmDims) -> (Vec<T>, Vec<T>, Vec<T>) {
    let (b, t, h) = (d.batch, d.steps, d.hidden);
    let h4 = 4 * h;
    let mut hs = vec![T::zero(); b * t * h];
    let mut gates = vec![T::zero(); b * t * h4];
    let mut cells = vec![T::zero(); b * t * h];
    for bi in 0..b {
        for ti in 0..t {
            let row = (bi * t + ti) * h4;
            let z = &mut gates[row..row + h4];
            z.copy_from_slice(&xp[row..row + h4]);
            if ti > 0 {
                let prev = (bi * t + ti - 1) * h;
                matmul(&hs[prev..prev + h], w_hh, z, 1, h, h4);
            }
            for j in 0..h {
                z[j] = super::ops::sigmoid(z[j]);
                z[h + j] = super::ops::sigmoid(z[h + j]);
                z[2 * h + j] = z[2 * h + j].tanh();
                z[3 * h + j] = super::ops::sigmoid(z[3 * h + j]);
            }
            let at = (bi * t + ti) * h;
            for j in 0..h {
                let c_prev = if ti > 0 { cells[at - h + j] } else { T::zero() };
                let c = z[h + j] * c_prev + z[j] * z[2 * h + j];
                cells[at + j] = c;
                hs[at + j] = z[3 * h + j] * c.tanh();
            }
        }
    }
    (hs, gates, cells)
}

/// Backpropagation through time. `gh` is the gradient of the hidden
/// sequence; returns gradients of `xp` and `w_hh`.
pub(crate) fn lstm_backward<T: Scalar>(
    gh: &[T],
    w_hh: &[T],
    hs: &[T],
    gates: &[T],
    cells: &[T],
    d: LstmDims,
) -> (Vec<T>, Vec<T>) {
    let (b, t, h) = (d.batch, d.steps, d.hidden);
    let h4 = 4 * h;
    let one = T::one();
    let mut gxp = vec![T::zero(); b * t * h4];
    let mut gw = vec![T::zero(); h * h4];
    let mut dh_next = vec![T::zero(); h];
    let mut dc_next = vec![T::zero(); h];
    for bi in 0..b {
        dh_next.iter_mut().for_each(|v| *v = T::zero());
        dc_next.iter_mut().for_each(|v| *v = T::zero());
        for ti in (0..t).rev() {
            let at = (bi * t + ti) * h;
            let row = (bi * t + ti) * h4;
            let z = &gates[row..row + h4];
            let dz = &mut gxp[row..row + h4];
            for j in 0..h {
                let (i, f, g, o) = (z[j], z[h + j], z[2 * h + j], z[3 * h + j]);
                let tc = cells[at + j].tanh();
                let c_prev = if ti > 0 { cells[at - h + j] } else { T::zero() };
                let dh = gh[at + j] + dh_next[j];
                let dc = dh * o * (one - tc * tc) + dc_next[j];
                dz[j] = dc * g * i * (one - i);
                dz[h + j] = dc * c_prev * f * (one - f);
                dz[2 * h + j] = dc * i * (one - g * g);
                dz[3 * h + j] = dh * tc * o * (one - o);
                dc_next[j] = dc * f;
            }
            if ti > 0 {
                let prev = (bi * t + ti - 1) * h;
                dh_next.iter_mut().for_each(|v| *v = T::zero());
                matmul_nt(dz, w_hh, &mut dh_next, 1, h4, h);
                matmul_tn(&hs[prev..prev + h], dz, &mut gw, 1, h, h4);
            }
        }
    }
    (gxp, gw)
}
