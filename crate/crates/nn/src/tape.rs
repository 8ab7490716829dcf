//! Tape-based reverse-mode automatic differentiation.
//!
//! A [`Tape`] records every operation of one forward pass. Values are
//! materialized eagerly; [`Tape::backward`] replays the tape in reverse and
//! returns gradients for the parameters that were read through
//! [`Tape::param`].

use crate::error::{NnError, Result};
use crate::params::{ParamGrads, ParamId, ParamStore};
use crate::scalar::Scalar;
use crate::tensor::{axpy, dot, par_rows, SparseRows, Tensor2};
use rand::Rng;
use rayon::prelude::*;
use std::collections::HashMap;
use std::sync::Arc;

/// Layer-normalization epsilon.
pub const LN_EPS: f64 = 1e-5;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

enum Op<T> {
    Constant,
    Param(ParamId),
    MatMul(Var, Var),
    Linear {
        x: Var,
        w: Var,
        b: Option<Var>,
    },
    SparseLinear {
        x: Arc<SparseRows<T>>,
        w: Var,
        b: Option<Var>,
    },
    Add(Var, Var),
    AddRow(Var, Var),
    Scale(Var, T),
    Relu(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Vec<T>,
        rstd: Vec<T>,
    },
    Dropout {
        x: Var,
        mask: Vec<T>,
    },
    Gather {
        table: Var,
        ids: Vec<Option<usize>>,
    },
    SegmentMean {
        x: Var,
        offsets: Vec<usize>,
    },
    Assemble {
        parts: Vec<(Var, usize)>,
        blocks: usize,
    },
    SoftmaxRows(Var),
    Attention {
        q: Var,
        k: Var,
        v: Var,
        seq_len: usize,
        heads: usize,
        probs: Vec<T>,
    },
    Readout {
        h: Var,
        wa: Var,
        seq_len: usize,
        alpha: Vec<T>,
    },
    CrossEntropy {
        logits: Var,
        targets: Vec<usize>,
        probs: Vec<T>,
    },
    Sum(Var),
}

struct Node<T> {
    value: Tensor2<T>,
    op: Op<T>,
    needs_grad: bool,
}

/// Recorded forward computation.
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    param_vars: HashMap<ParamId, Var>,
    fault: Option<&'static str>,
    kink_trace: Option<Vec<bool>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            param_vars: HashMap::new(),
            fault: None,
            kink_trace: None,
        }
    }

    /// A tape that records the sign pattern of every ReLU input, so finite
    /// difference checks can discard perturbations that cross a kink.
    pub fn with_kink_trace() -> Self {
        Self {
            kink_trace: Some(Vec::new()),
            ..Self::new()
        }
    }

    pub fn kink_trace(&self) -> Option<&[bool]> {
        self.kink_trace.as_deref()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor2<T>, op: Op<T>, needs_grad: bool, name: &'static str) -> Var {
        if self.fault.is_none() && !value.is_finite() {
            self.fault = Some(name);
        }
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Fails if any recorded value was NaN or infinite.
    pub fn check(&self) -> Result<()> {
        match self.fault {
            Some(op) => Err(NnError::NonFinite { op }),
            None => Ok(()),
        }
    }

    pub fn value(&self, v: Var) -> &Tensor2<T> {
        &self.nodes[v.0].value
    }

    pub fn constant(&mut self, t: Tensor2<T>) -> Var {
        self.push(t, Op::Constant, false, "constant")
    }

    /// Reads a parameter; repeated reads of the same id share one tape node.
    pub fn param(&mut self, store: &ParamStore<T>, id: ParamId) -> Var {
        if let Some(v) = self.param_vars.get(&id) {
            return *v;
        }
        let v = self.push(store.get(id).clone(), Op::Param(id), true, "param");
        self.param_vars.insert(id, v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).matmul(self.value(b));
        let ng = self.ng(a) || self.ng(b);
        self.push(out, Op::MatMul(a, b), ng, "matmul")
    }

    /// `x · w + b` with `b` broadcast over rows.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Var {
        let mut out = self.value(x).matmul(self.value(w));
        if let Some(b) = b {
            add_row_in_place(&mut out, self.value(b));
        }
        let ng = self.ng(x) || self.ng(w) || b.is_some_and(|b| self.ng(b));
        self.push(out, Op::Linear { x, w, b }, ng, "linear")
    }

    /// `x · w + b` for a constant sparse input.
    pub fn sparse_linear(&mut self, x: Arc<SparseRows<T>>, w: Var, b: Option<Var>) -> Var {
        let mut out = x.matmul(self.value(w));
        if let Some(b) = b {
            add_row_in_place(&mut out, self.value(b));
        }
        let ng = self.ng(w) || b.is_some_and(|b| self.ng(b));
        self.push(out, Op::SparseLinear { x, w, b }, ng, "sparse_linear")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(
            va.shape(),
            vb.shape(),
            "add shape mismatch: {:?} + {:?}",
            va.shape(),
            vb.shape()
        );
        let mut out = va.clone();
        out.add_assign(vb);
        let ng = self.ng(a) || self.ng(b);
        self.push(out, Op::Add(a, b), ng, "add")
    }

    /// Adds a `1×cols` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let mut out = self.value(a).clone();
        add_row_in_place(&mut out, self.value(row));
        let ng = self.ng(a) || self.ng(row);
        self.push(out, Op::AddRow(a, row), ng, "add_row")
    }

    pub fn scale(&mut self, a: Var, s: T) -> Var {
        let mut out = self.value(a).clone();
        out.scale(s);
        let ng = self.ng(a);
        self.push(out, Op::Scale(a, s), ng, "scale")
    }

    pub fn relu(&mut self, a: Var) -> Var {
        if let Some(trace) = &mut self.kink_trace {
            let x = &self.nodes[a.0].value;
            trace.extend(x.data().iter().map(|v| *v > T::zero()));
        }
        let x = self.value(a);
        let out = Tensor2::from_vec(
            x.rows(),
            x.cols(),
            x.data().iter().map(|v| v.max(T::zero())).collect(),
        );
        let ng = self.ng(a);
        self.push(out, Op::Relu(a), ng, "relu")
    }

    /// Row-wise layer normalization followed by the affine map.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Var {
        let xv = self.value(x);
        let (rows, cols) = xv.shape();
        let (g, b) = (self.value(gain), self.value(bias));
        assert_eq!(
            g.shape(),
            (1, cols),
            "layer_norm gain shape {:?}",
            g.shape()
        );
        assert_eq!(
            b.shape(),
            (1, cols),
            "layer_norm bias shape {:?}",
            b.shape()
        );
        let eps = T::of(LN_EPS);
        let n = T::of(cols as f64);
        let mut xhat = vec![T::zero(); rows * cols];
        let mut rstd = vec![T::zero(); rows];
        for r in 0..rows {
            let row = xv.row(r);
            let mean = row.iter().copied().sum::<T>() / n;
            let var = row.iter().map(|v| (*v - mean) * (*v - mean)).sum::<T>() / n;
            let rs = T::one() / (var + eps).sqrt();
            rstd[r] = rs;
            for c in 0..cols {
                xhat[r * cols + c] = (row[c] - mean) * rs;
            }
        }
        let mut out = Tensor2::zeros(rows, cols);
        for r in 0..rows {
            let orow = out.row_mut(r);
            for c in 0..cols {
                orow[c] = xhat[r * cols + c] * g.data()[c] + b.data()[c];
            }
        }
        let ng = self.ng(x) || self.ng(gain) || self.ng(bias);
        self.push(
            out,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            },
            ng,
            "layer_norm",
        )
    }

    /// Inverted dropout; the identity when not training or `rate == 0`.
    pub fn dropout<R: Rng>(&mut self, x: Var, rate: f64, training: bool, rng: &mut R) -> Var {
        if !training || rate <= 0.0 {
            return x;
        }
        assert!(rate < 1.0, "dropout rate must be < 1, got {rate}");
        let keep = T::of(1.0 / (1.0 - rate));
        let xv = self.value(x);
        let mask: Vec<T> = (0..xv.data().len())
            .map(|_| {
                if rng.random::<f64>() < rate {
                    T::zero()
                } else {
                    keep
                }
            })
            .collect();
        let out = Tensor2::from_vec(
            xv.rows(),
            xv.cols(),
            xv.data().iter().zip(&mask).map(|(a, m)| *a * *m).collect(),
        );
        let ng = self.ng(x);
        self.push(out, Op::Dropout { x, mask }, ng, "dropout")
    }

    /// Output row `r` is `table[ids[r]]`, or zeros for `None`.
    pub fn gather(&mut self, table: Var, ids: Vec<Option<usize>>) -> Var {
        let t = self.value(table);
        let cols = t.cols();
        let mut out = Tensor2::zeros(ids.len(), cols);
        for (r, id) in ids.iter().enumerate() {
            if let Some(id) = id {
                assert!(*id < t.rows(), "gather index {id} out of {} rows", t.rows());
                out.row_mut(r).copy_from_slice(t.row(*id));
            }
        }
        let ng = self.ng(table);
        self.push(out, Op::Gather { table, ids }, ng, "gather")
    }

    pub fn gather_rows(&mut self, x: Var, rows: &[usize]) -> Var {
        self.gather(x, rows.iter().map(|r| Some(*r)).collect())
    }

    /// Mean of consecutive row segments `offsets[s]..offsets[s+1]`.
    pub fn segment_mean(&mut self, x: Var, offsets: Vec<usize>) -> Var {
        let xv = self.value(x);
        assert!(!offsets.is_empty(), "segment_mean needs offsets");
        assert_eq!(
            *offsets.last().unwrap(),
            xv.rows(),
            "segment offsets must end at the row count"
        );
        let segs = offsets.len() - 1;
        let mut out = Tensor2::zeros(segs, xv.cols());
        for s in 0..segs {
            let (a, b) = (offsets[s], offsets[s + 1]);
            if b > a {
                let inv = T::one() / T::of((b - a) as f64);
                let orow = out.row_mut(s);
                for r in a..b {
                    axpy(orow, inv, xv.row(r));
                }
            }
        }
        let ng = self.ng(x);
        self.push(out, Op::SegmentMean { x, offsets }, ng, "segment_mean")
    }

    /// Interleaves row blocks: output block `b` is the concatenation of rows
    /// `b*count_p .. (b+1)*count_p` of each part `p`, in part order.
    pub fn assemble(&mut self, parts: Vec<(Var, usize)>, blocks: usize) -> Var {
        let cols = self.value(parts[0].0).cols();
        let per_block: usize = parts.iter().map(|p| p.1).sum();
        for (v, count) in &parts {
            let t = self.value(*v);
            assert_eq!(
                t.shape(),
                (blocks * count, cols),
                "assemble part shape {:?} != ({}, {})",
                t.shape(),
                blocks * count,
                cols
            );
        }
        let mut out = Tensor2::zeros(blocks * per_block, cols);
        let mut dst = 0;
        for b in 0..blocks {
            for (v, count) in &parts {
                let t = self.value(*v);
                for j in 0..*count {
                    out.row_mut(dst).copy_from_slice(t.row(b * count + j));
                    dst += 1;
                }
            }
        }
        let ng = parts.iter().any(|(v, _)| self.ng(*v));
        self.push(out, Op::Assemble { parts, blocks }, ng, "assemble")
    }

    pub fn softmax_rows(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let mut out = xv.clone();
        for r in 0..out.rows() {
            softmax_in_place(out.row_mut(r));
        }
        let ng = self.ng(x);
        self.push(out, Op::SoftmaxRows(x), ng, "softmax_rows")
    }

    /// Block-diagonal multi-head scaled dot-product attention.
    ///
    /// Rows are grouped into consecutive sequences of `seq_len`; each head
    /// uses columns `h*dk..(h+1)*dk` with `dk = cols / heads` and scale
    /// `1/sqrt(dk)`. Keys whose `key_mask` entry is `false` are excluded.
    pub fn attention(
        &mut self,
        q: Var,
        k: Var,
        v: Var,
        seq_len: usize,
        heads: usize,
        key_mask: Option<Arc<Vec<bool>>>,
    ) -> Var {
        let (qv, kv, vv) = (self.value(q), self.value(k), self.value(v));
        let (rows, d) = qv.shape();
        assert_eq!(kv.shape(), (rows, d), "attention key shape");
        assert_eq!(vv.shape(), (rows, d), "attention value shape");
        assert!(
            seq_len > 0 && rows % seq_len == 0,
            "rows {rows} not a multiple of seq_len {seq_len}"
        );
        assert!(
            heads > 0 && d % heads == 0,
            "width {d} not divisible by {heads} heads"
        );
        if let Some(m) = &key_mask {
            assert_eq!(m.len(), rows, "key mask length");
        }
        let dk = d / heads;
        let scale = T::one() / T::of(dk as f64).sqrt();
        let s = seq_len;
        let blocks = rows / s;
        let mut out = Tensor2::zeros(rows, d);
        let mut probs = vec![T::zero(); blocks * heads * s * s];
        let (qd, kd, vd) = (qv.data(), kv.data(), vv.data());
        let mask = key_mask.as_deref();
        let body = |(b, (ochunk, pchunk)): (usize, (&mut [T], &mut [T]))| {
            let base = b * s;
            for h in 0..heads {
                let c0 = h * dk;
                for i in 0..s {
                    let qi = &qd[(base + i) * d + c0..(base + i) * d + c0 + dk];
                    let prow = &mut pchunk[(h * s + i) * s..(h * s + i + 1) * s];
                    for j in 0..s {
                        let live = mask.is_none_or(|m| m[base + j]);
                        prow[j] = if live {
                            scale * dot(qi, &kd[(base + j) * d + c0..(base + j) * d + c0 + dk])
                        } else {
                            T::neg_infinity()
                        };
                    }
                    softmax_in_place(prow);
                    let orow = &mut ochunk[i * d + c0..i * d + c0 + dk];
                    for j in 0..s {
                        if prow[j] != T::zero() {
                            axpy(
                                orow,
                                prow[j],
                                &vd[(base + j) * d + c0..(base + j) * d + c0 + dk],
                            );
                        }
                    }
                }
            }
        };
        if rows * s * d >= 1 << 15 {
            out.data_mut()
                .par_chunks_mut(s * d)
                .zip(probs.par_chunks_mut(heads * s * s))
                .enumerate()
                .for_each(body);
        } else {
            out.data_mut()
                .chunks_mut(s * d)
                .zip(probs.chunks_mut(heads * s * s))
                .enumerate()
                .for_each(body);
        }
        let ng = self.ng(q) || self.ng(k) || self.ng(v);
        self.push(
            out,
            Op::Attention {
                q,
                k,
                v,
                seq_len,
                heads,
                probs,
            },
            ng,
            "attention",
        )
    }

    /// Attention probabilities of an [`Tape::attention`] node, laid out as
    /// `[block][head][query][key]`.
    pub fn attention_probs(&self, v: Var) -> &[T] {
        match &self.nodes[v.0].op {
            Op::Attention { probs, .. } => probs,
            _ => panic!("attention_probs on a non-attention node"),
        }
    }

    /// Attention readout over sequences of `seq_len` rows.
    ///
    /// For each sequence `H` (rows `H_1..H_K`) and `wa = [w_first ‖ w_tok]`
    /// the logits are `[H_1 ‖ H_k]·waᵀ`, `α = softmax(logits)` and the output
    /// row is `Σ_k α_k H_k`.
    pub fn readout(&mut self, h: Var, wa: Var, seq_len: usize) -> Var {
        let hv = self.value(h);
        let (rows, d) = hv.shape();
        let w = self.value(wa);
        assert_eq!(
            w.shape(),
            (1, 2 * d),
            "readout weight shape {:?}",
            w.shape()
        );
        assert!(
            seq_len > 0 && rows % seq_len == 0,
            "rows {rows} not a multiple of seq_len {seq_len}"
        );
        let blocks = rows / seq_len;
        let (w1, w2) = w.data().split_at(d);
        let mut alpha = vec![T::zero(); blocks * seq_len];
        let mut out = Tensor2::zeros(blocks, d);
        for b in 0..blocks {
            let first = hv.row(b * seq_len);
            let base = dot(first, w1);
            let a = &mut alpha[b * seq_len..(b + 1) * seq_len];
            for k in 0..seq_len {
                a[k] = base + dot(hv.row(b * seq_len + k), w2);
            }
            softmax_in_place(a);
            let orow = out.row_mut(b);
            for k in 0..seq_len {
                axpy(orow, a[k], hv.row(b * seq_len + k));
            }
        }
        let ng = self.ng(h) || self.ng(wa);
        self.push(
            out,
            Op::Readout {
                h,
                wa,
                seq_len,
                alpha,
            },
            ng,
            "readout",
        )
    }

    /// Readout weights `α` of a [`Tape::readout`] node, one row per sequence.
    pub fn readout_alpha(&self, v: Var) -> &[T] {
        match &self.nodes[v.0].op {
            Op::Readout { alpha, .. } => alpha,
            _ => panic!("readout_alpha on a non-readout node"),
        }
    }

    /// Mean negative log-softmax of the target entries (`1×1` output).
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Var {
        let lv = self.value(logits);
        let (n, c) = lv.shape();
        assert_eq!(targets.len(), n, "one target per row");
        let mut probs = lv.data().to_vec();
        let mut total = 0.0f64;
        for r in 0..n {
            let t = targets[r];
            assert!(t < c, "target {t} out of range for {c} classes");
            let row = lv.row(r);
            let mx = row.iter().copied().fold(T::neg_infinity(), T::max);
            let lse = mx + row.iter().map(|v| (*v - mx).exp()).sum::<T>().ln();
            total += (lse - row[t]).as_f64();
            softmax_in_place(&mut probs[r * c..(r + 1) * c]);
        }
        let loss = if n == 0 { 0.0 } else { total / n as f64 };
        let ng = self.ng(logits);
        self.push(
            Tensor2::scalar(T::of(loss)),
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
            },
            ng,
            "cross_entropy",
        )
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).sum();
        let ng = self.ng(x);
        self.push(Tensor2::scalar(s), Op::Sum(x), ng, "sum")
    }

    /// Gradients of the `1×1` value `root` with respect to every parameter
    /// read on this tape.
    pub fn backward(&self, root: Var) -> ParamGrads<T> {
        assert_eq!(
            self.value(root).shape(),
            (1, 1),
            "backward root must be 1x1"
        );
        let n = self.nodes.len();
        let mut grads: Vec<Option<Tensor2<T>>> = (0..n).map(|_| None).collect();
        grads[root.0] = Some(Tensor2::scalar(T::one()));
        let mut out = ParamGrads { grads: Vec::new() };
        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            self.backward_node(node, g, &mut grads, &mut out);
        }
        out
    }

    fn backward_node(
        &self,
        node: &Node<T>,
        g: Tensor2<T>,
        grads: &mut [Option<Tensor2<T>>],
        out: &mut ParamGrads<T>,
    ) {
        let mut acc = |v: Var, t: Tensor2<T>| {
            if !self.ng(v) {
                return;
            }
            match &mut grads[v.0] {
                Some(a) => a.add_assign(&t),
                slot @ None => *slot = Some(t),
            }
        };
        match &node.op {
            Op::Constant => {}
            Op::Param(id) => out.accumulate(*id, g),
            Op::MatMul(a, b) => {
                if self.ng(*a) {
                    acc(*a, g.matmul_bt(self.value(*b)));
                }
                if self.ng(*b) {
                    acc(*b, self.value(*a).matmul_at(&g));
                }
            }
            Op::Linear { x, w, b } => {
                if self.ng(*x) {
                    acc(*x, g.matmul_bt(self.value(*w)));
                }
                if self.ng(*w) {
                    acc(*w, self.value(*x).matmul_at(&g));
                }
                if let Some(b) = b {
                    acc(*b, g.col_sums());
                }
            }
            Op::SparseLinear { x, w, b } => {
                if self.ng(*w) {
                    acc(*w, x.matmul_at(&g));
                }
                if let Some(b) = b {
                    acc(*b, g.col_sums());
                }
            }
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g);
            }
            Op::AddRow(a, row) => {
                acc(*row, g.col_sums());
                acc(*a, g);
            }
            Op::Scale(a, s) => {
                let mut t = g;
                t.scale(*s);
                acc(*a, t);
            }
            Op::Relu(a) => {
                let x = self.value(*a);
                let t = Tensor2::from_vec(
                    g.rows(),
                    g.cols(),
                    g.data()
                        .iter()
                        .zip(x.data())
                        .map(|(gv, xv)| if *xv > T::zero() { *gv } else { T::zero() })
                        .collect(),
                );
                acc(*a, t);
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            } => {
                let (rows, cols) = g.shape();
                let gv = self.value(*gain).data();
                if self.ng(*gain) || self.ng(*bias) {
                    let mut gg = Tensor2::zeros(1, cols);
                    let mut gb = Tensor2::zeros(1, cols);
                    for r in 0..rows {
                        let grow = g.row(r);
                        for c in 0..cols {
                            gg.data_mut()[c] += grow[c] * xhat[r * cols + c];
                            gb.data_mut()[c] += grow[c];
                        }
                    }
                    acc(*gain, gg);
                    acc(*bias, gb);
                }
                if self.ng(*x) {
                    let n = T::of(cols as f64);
                    let mut gx = Tensor2::zeros(rows, cols);
                    par_rows(gx.data_mut(), cols, 4 * cols, |r, orow| {
                        let grow = g.row(r);
                        let xh = &xhat[r * cols..(r + 1) * cols];
                        let mut m1 = T::zero();
                        let mut m2 = T::zero();
                        for c in 0..cols {
                            let d = grow[c] * gv[c];
                            m1 += d;
                            m2 += d * xh[c];
                        }
                        m1 /= n;
                        m2 /= n;
                        for c in 0..cols {
                            orow[c] = rstd[r] * (grow[c] * gv[c] - m1 - xh[c] * m2);
                        }
                    });
                    acc(*x, gx);
                }
            }
            Op::Dropout { x, mask } => {
                let t = Tensor2::from_vec(
                    g.rows(),
                    g.cols(),
                    g.data().iter().zip(mask).map(|(a, m)| *a * *m).collect(),
                );
                acc(*x, t);
            }
            Op::Gather { table, ids } => {
                let tv = self.value(*table);
                let mut t = Tensor2::zeros(tv.rows(), tv.cols());
                for (r, id) in ids.iter().enumerate() {
                    if let Some(id) = id {
                        axpy(t.row_mut(*id), T::one(), g.row(r));
                    }
                }
                acc(*table, t);
            }
            Op::SegmentMean { x, offsets } => {
                let xv = self.value(*x);
                let mut t = Tensor2::zeros(xv.rows(), xv.cols());
                for s in 0..offsets.len() - 1 {
                    let (a, b) = (offsets[s], offsets[s + 1]);
                    if b > a {
                        let inv = T::one() / T::of((b - a) as f64);
                        for r in a..b {
                            axpy(t.row_mut(r), inv, g.row(s));
                        }
                    }
                }
                acc(*x, t);
            }
            Op::Assemble { parts, blocks } => {
                let per_block: usize = parts.iter().map(|p| p.1).sum();
                let mut offset = 0;
                for (v, count) in parts {
                    if self.ng(*v) {
                        let mut t = Tensor2::zeros(blocks * count, g.cols());
                        for b in 0..*blocks {
                            for j in 0..*count {
                                t.row_mut(b * count + j)
                                    .copy_from_slice(g.row(b * per_block + offset + j));
                            }
                        }
                        acc(*v, t);
                    }
                    offset += count;
                }
            }
            Op::SoftmaxRows(x) => {
                let p = &node.value;
                let mut t = Tensor2::zeros(g.rows(), g.cols());
                for r in 0..g.rows() {
                    let (pr, gr) = (p.row(r), g.row(r));
                    let m = dot(pr, gr);
                    for (o, (pv, gv)) in t.row_mut(r).iter_mut().zip(pr.iter().zip(gr)) {
                        *o = *pv * (*gv - m);
                    }
                }
                acc(*x, t);
            }
            Op::Attention {
                q,
                k,
                v,
                seq_len,
                heads,
                probs,
            } => {
                let (gq, gk, gv) = self.attention_backward(*q, *k, *v, *seq_len, *heads, probs, &g);
                acc(*q, gq);
                acc(*k, gk);
                acc(*v, gv);
            }
            Op::Readout {
                h,
                wa,
                seq_len,
                alpha,
            } => {
                let hv = self.value(*h);
                let (rows, d) = hv.shape();
                let s = *seq_len;
                let blocks = rows / s;
                let w = self.value(*wa).data();
                let (w1, w2) = w.split_at(d);
                let mut gh = Tensor2::zeros(rows, d);
                let mut partial = vec![T::zero(); blocks * 2 * d];
                let body = |(b, (hchunk, wchunk)): (usize, (&mut [T], &mut [T]))| {
                    let gb = g.row(b);
                    let a = &alpha[b * s..(b + 1) * s];
                    let da: Vec<T> = (0..s).map(|k| dot(gb, hv.row(b * s + k))).collect();
                    let m = a.iter().zip(&da).map(|(x, y)| *x * *y).sum::<T>();
                    let mut ds_total = T::zero();
                    let (pw1, pw2) = wchunk.split_at_mut(d);
                    for k in 0..s {
                        let ds = a[k] * (da[k] - m);
                        ds_total += ds;
                        let hrow = &mut hchunk[k * d..(k + 1) * d];
                        axpy(hrow, a[k], gb);
                        axpy(hrow, ds, w2);
                        axpy(pw2, ds, hv.row(b * s + k));
                    }
                    axpy(&mut hchunk[..d], ds_total, w1);
                    axpy(pw1, ds_total, hv.row(b * s));
                };
                if rows * d >= 1 << 14 {
                    gh.data_mut()
                        .par_chunks_mut(s * d)
                        .zip(partial.par_chunks_mut(2 * d))
                        .enumerate()
                        .for_each(body);
                } else {
                    gh.data_mut()
                        .chunks_mut(s * d)
                        .zip(partial.chunks_mut(2 * d))
                        .enumerate()
                        .for_each(body);
                }
                let mut gw = Tensor2::zeros(1, 2 * d);
                for chunk in partial.chunks(2 * d) {
                    axpy(gw.data_mut(), T::one(), chunk);
                }
                acc(*h, gh);
                acc(*wa, gw);
            }
            Op::CrossEntropy {
                logits,
                targets,
                probs,
            } => {
                let n = targets.len();
                if n > 0 {
                    let c = probs.len() / n;
                    let s = g.item() / T::of(n as f64);
                    let mut t = Tensor2::from_vec(n, c, probs.clone());
                    for (r, tgt) in targets.iter().enumerate() {
                        t.row_mut(r)[*tgt] -= T::one();
                    }
                    t.scale(s);
                    acc(*logits, t);
                }
            }
            Op::Sum(x) => {
                let xv = self.value(*x);
                acc(*x, Tensor2::filled(xv.rows(), xv.cols(), g.item()));
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn attention_backward(
        &self,
        q: Var,
        k: Var,
        v: Var,
        s: usize,
        heads: usize,
        probs: &[T],
        g: &Tensor2<T>,
    ) -> (Tensor2<T>, Tensor2<T>, Tensor2<T>) {
        let (qv, kv, vv) = (self.value(q), self.value(k), self.value(v));
        let (rows, d) = qv.shape();
        let dk = d / heads;
        let scale = T::one() / T::of(dk as f64).sqrt();
        let mut gq = Tensor2::zeros(rows, d);
        let mut gk = Tensor2::zeros(rows, d);
        let mut gv = Tensor2::zeros(rows, d);
        let (qd, kd, vd, gd) = (qv.data(), kv.data(), vv.data(), g.data());
        let body = |(b, ((cq, ck), cv)): (usize, ((&mut [T], &mut [T]), &mut [T]))| {
            let base = b * s;
            let pb = &probs[b * heads * s * s..(b + 1) * heads * s * s];
            let mut dp = vec![T::zero(); s];
            for h in 0..heads {
                let c0 = h * dk;
                for i in 0..s {
                    let prow = &pb[(h * s + i) * s..(h * s + i + 1) * s];
                    let gi = &gd[(base + i) * d + c0..(base + i) * d + c0 + dk];
                    let mut m = T::zero();
                    for j in 0..s {
                        if prow[j] != T::zero() {
                            dp[j] = dot(gi, &vd[(base + j) * d + c0..(base + j) * d + c0 + dk]);
                            axpy(&mut cv[j * d + c0..j * d + c0 + dk], prow[j], gi);
                            m += prow[j] * dp[j];
                        } else {
                            dp[j] = T::zero();
                        }
                    }
                    let qi = &qd[(base + i) * d + c0..(base + i) * d + c0 + dk];
                    for j in 0..s {
                        if prow[j] == T::zero() {
                            continue;
                        }
                        let ds = prow[j] * (dp[j] - m) * scale;
                        axpy(
                            &mut cq[i * d + c0..i * d + c0 + dk],
                            ds,
                            &kd[(base + j) * d + c0..(base + j) * d + c0 + dk],
                        );
                        axpy(&mut ck[j * d + c0..j * d + c0 + dk], ds, qi);
                    }
                }
            }
        };
        if rows * s * d >= 1 << 15 {
            gq.data_mut()
                .par_chunks_mut(s * d)
                .zip(gk.data_mut().par_chunks_mut(s * d))
                .zip(gv.data_mut().par_chunks_mut(s * d))
                .enumerate()
                .for_each(body);
        } else {
            gq.data_mut()
                .chunks_mut(s * d)
                .zip(gk.data_mut().chunks_mut(s * d))
                .zip(gv.data_mut().chunks_mut(s * d))
                .enumerate()
                .for_each(body);
        }
        (gq, gk, gv)
    }
}

fn add_row_in_place<T: Scalar>(out: &mut Tensor2<T>, row: &Tensor2<T>) {
    assert_eq!(
        row.shape(),
        (1, out.cols()),
        "bias row shape {:?} does not match width {}",
        row.shape(),
        out.cols()
    );
    let cols = out.cols();
    if cols == 0 {
        return;
    }
    for r in out.data_mut().chunks_mut(cols) {
        axpy(r, T::one(), row.data());
    }
}

/// Numerically stable in-place softmax; `-inf` entries get probability 0 and
/// an all-`-inf` row becomes all zeros.
pub fn softmax_in_place<T: Scalar>(row: &mut [T]) {
    let mx = row.iter().copied().fold(T::neg_infinity(), T::max);
    if mx == T::neg_infinity() {
        row.iter_mut().for_each(|v| *v = T::zero());
        return;
    }
    let mut total = T::zero();
    for v in row.iter_mut() {
        *v = (*v - mx).exp();
        total += *v;
    }
    for v in row.iter_mut() {
        *v /= total;
    }
}
