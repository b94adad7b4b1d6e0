//! Define-by-run reverse-mode tape.
//!
//! Every op appends one node whose inputs already exist, so node order is a
//! topological order and backward is a single reverse sweep. Parameter
//! leaves borrow their tensors; frozen parameters enter as constants and so
//! can never receive a gradient.

use std::borrow::Cow;
use std::collections::HashMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::kernels::{self, Segment};
use super::{ops, Param, ParamId, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Affine(Var, f32),
    Relu(Var),
    SoftmaxRows(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f32>,
        rstd: Vec<f32>,
    },
    Attention {
        q: Var,
        k: Var,
        v: Var,
        heads: usize,
        segments: Vec<Segment>,
        probs: Vec<f32>,
    },
    Embedding {
        table: Var,
        ids: Vec<u32>,
    },
    Dropout {
        x: Var,
        mask: Vec<f32>,
    },
    CrossEntropy {
        logits: Var,
        targets: Vec<u32>,
        ignore_id: u32,
        probs: Vec<f32>,
        count: usize,
    },
    Cosine {
        u: Var,
        v: Var,
        dot: f32,
        nu: f32,
        nv: f32,
    },
    SliceRows {
        x: Var,
        start: usize,
    },
    Reshape(Var),
    Sum(Var),
    Mean(Vec<Var>),
}

struct Node<'p> {
    value: Cow<'p, Tensor>,
    op: Op,
    requires_grad: bool,
    param: Option<ParamId>,
}

/// Recorded computation. Confined to one thread; rebuilt for every forward
/// pass.
pub struct Tape<'p> {
    nodes: Vec<Node<'p>>,
    dropout_rng: Option<ChaCha8Rng>,
}

impl Default for Tape<'_> {
    fn default() -> Self {
        Self::new()
    }
}

impl<'p> Tape<'p> {
    /// A tape with dropout disabled.
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            dropout_rng: None,
        }
    }

    /// A tape that applies dropout, drawing masks from `rng`.
    pub fn with_dropout(rng: ChaCha8Rng) -> Self {
        Self {
            nodes: Vec::new(),
            dropout_rng: Some(rng),
        }
    }

    /// Returns the dropout RNG so the caller can continue its stream.
    pub fn into_rng(self) -> Option<ChaCha8Rng> {
        self.dropout_rng
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value: Cow::Owned(value),
            op,
            requires_grad,
            param: None,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.nodes.push(Node {
            value: Cow::Owned(t),
            op: Op::Leaf,
            requires_grad: false,
            param: None,
        });
        Var(self.nodes.len() - 1)
    }

    /// Binds a parameter as a leaf. Frozen parameters are recorded without
    /// gradient tracking.
    pub fn param(&mut self, p: &'p Param) -> Var {
        self.nodes.push(Node {
            value: Cow::Borrowed(&p.value),
            op: Op::Leaf,
            requires_grad: !p.frozen,
            param: (!p.frozen).then_some(p.id()),
        });
        Var(self.nodes.len() - 1)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = ops::matmul(self.value(a), self.value(b))?;
        Ok(self.push(out, Op::MatMul(a, b), &[a, b]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = ops::add(self.value(a), self.value(b))?;
        Ok(self.push(out, Op::Add(a, b), &[a, b]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = ops::mul(self.value(a), self.value(b))?;
        Ok(self.push(out, Op::Mul(a, b), &[a, b]))
    }

    pub fn add_row(&mut self, x: Var, bias: Var) -> Result<Var> {
        let out = ops::add_row(self.value(x), self.value(bias))?;
        Ok(self.push(out, Op::AddRow(x, bias), &[x, bias]))
    }

    /// `scale * x + shift`, elementwise.
    pub fn affine(&mut self, x: Var, scale: f32, shift: f32) -> Var {
        let t = self.value(x);
        let data = t.data().iter().map(|v| scale * v + shift).collect();
        let out = Tensor::new(t.shape().to_vec(), data).expect("same shape");
        self.push(out, Op::Affine(x, scale), &[x])
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = ops::relu(self.value(x));
        self.push(out, Op::Relu(x), &[x])
    }

    pub fn softmax_rows(&mut self, x: Var) -> Result<Var> {
        let out = ops::softmax_rows(self.value(x))?;
        Ok(self.push(out, Op::SoftmaxRows(x), &[x]))
    }

    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f32) -> Result<Var> {
        let r = ops::layer_norm_full(self.value(x), self.value(gamma), self.value(beta), eps)?;
        let op = Op::LayerNorm {
            x,
            gamma,
            beta,
            xhat: r.xhat,
            rstd: r.rstd,
        };
        Ok(self.push(r.out, op, &[x, gamma, beta]))
    }

    pub fn attention(&mut self, q: Var, k: Var, v: Var, heads: usize, segments: &[Segment]) -> Result<Var> {
        let (out, probs) = ops::attention_full(self.value(q), self.value(k), self.value(v), heads, segments)?;
        let op = Op::Attention {
            q,
            k,
            v,
            heads,
            segments: segments.to_vec(),
            probs,
        };
        Ok(self.push(out, op, &[q, k, v]))
    }

    pub fn embedding(&mut self, table: Var, ids: &[u32]) -> Result<Var> {
        let out = ops::embedding(self.value(table), ids)?;
        let op = Op::Embedding {
            table,
            ids: ids.to_vec(),
        };
        Ok(self.push(out, op, &[table]))
    }

    /// Inverted dropout; identity when the tape has no dropout RNG or `p == 0`.
    pub fn dropout(&mut self, x: Var, p: f32) -> Var {
        let Some(rng) = self.dropout_rng.as_mut() else {
            return x;
        };
        if p <= 0.0 {
            return x;
        }
        let keep = 1.0 / (1.0 - p);
        let t = &self.nodes[x.0].value;
        let mask: Vec<f32> = (0..t.len())
            .map(|_| if rng.gen::<f32>() < p { 0.0 } else { keep })
            .collect();
        let data = t.data().iter().zip(&mask).map(|(a, m)| a * m).collect();
        let out = Tensor::new(t.shape().to_vec(), data).expect("same shape");
        self.push(out, Op::Dropout { x, mask }, &[x])
    }

    /// Mean token cross-entropy over non-ignored positions; a scalar.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[u32], ignore_id: u32) -> Result<Var> {
        let t = self.value(logits);
        let (rows, v) = t.dims2()?;
        let count = ops::check_targets(rows, v, targets, ignore_id)?;
        let mut probs = t.data().to_vec();
        let mut total = 0.0f64;
        for (row, &tgt) in probs.chunks_exact_mut(v).zip(targets) {
            if tgt != ignore_id {
                total += (kernels::log_sum_exp(row) - row[tgt as usize]) as f64;
            }
            kernels::softmax_in_place(row);
        }
        let loss = Tensor::scalar((total / count as f64) as f32);
        let op = Op::CrossEntropy {
            logits,
            targets: targets.to_vec(),
            ignore_id,
            probs,
            count,
        };
        Ok(self.push(loss, op, &[logits]))
    }

    /// Cosine similarity of two tensors flattened; a scalar.
    pub fn cosine_similarity(&mut self, u: Var, v: Var) -> Result<Var> {
        let (tu, tv) = (self.value(u), self.value(v));
        let sim = ops::cosine_similarity(tu, tv)?;
        let nu = kernels::norm(tu.data());
        let nv = kernels::norm(tv.data());
        let dot = kernels::dot(tu.data(), tv.data());
        Ok(self.push(Tensor::scalar(sim), Op::Cosine { u, v, dot, nu, nv }, &[u, v]))
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let out = ops::slice_rows(self.value(x), start, len)?;
        Ok(self.push(out, Op::SliceRows { x, start }, &[x]))
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        let out = self.value(x).clone().reshape(shape)?;
        Ok(self.push(out, Op::Reshape(x), &[x]))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum::<f32>();
        self.push(Tensor::scalar(s), Op::Sum(x), &[x])
    }

    /// Average of scalar nodes.
    pub fn mean(&mut self, xs: &[Var]) -> Result<Var> {
        if xs.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let mut s = 0.0f32;
        for &x in xs {
            let t = self.value(x);
            if !t.is_scalar() {
                return Err(Error::Shape(format!("mean over non-scalar {:?}", t.shape())));
            }
            s += t.data()[0];
        }
        let out = Tensor::scalar(s / xs.len() as f32);
        Ok(self.push(out, Op::Mean(xs.to_vec()), xs))
    }

    /// Reverse sweep from a scalar `loss`. Returns gradients for every
    /// trainable parameter leaf that the loss depends on.
    pub fn backward(&self, loss: Var) -> Result<GradMap> {
        let lt = self.value(loss);
        if !lt.is_scalar() {
            return Err(Error::Shape(format!(
                "backward needs a scalar loss, got shape {:?}",
                lt.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f32>>> = Vec::new();
        grads.resize_with(loss.0 + 1, || None);
        let mut out = GradMap::default();
        if !self.nodes[loss.0].requires_grad {
            return Ok(out);
        }
        grads[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            self.backprop_node(node, &g, &mut grads)?;
            if let Some(id) = node.param {
                out.add(id, g);
            }
        }
        Ok(out)
    }

    fn backprop_node(&self, node: &Node<'p>, g: &[f32], grads: &mut [Option<Vec<f32>>]) -> Result<()> {
        let nodes = &self.nodes;
        let needs = |v: Var| nodes[v.0].requires_grad;
        let val = |v: Var| -> &Tensor { &nodes[v.0].value };
        // Borrow-splitting helper: hands the caller the gradient buffer of `v`.
        fn slot<'a>(grads: &'a mut [Option<Vec<f32>>], v: Var, len: usize) -> &'a mut [f32] {
            grads[v.0].get_or_insert_with(|| vec![0.0; len])
        }

        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = val(*a).dims2()?;
                let (_, n) = val(*b).dims2()?;
                if needs(*a) {
                    let ga = slot(grads, *a, m * k);
                    kernels::gemm(m, n, k, g, false, val(*b).data(), true, ga, true);
                }
                if needs(*b) {
                    let gb = slot(grads, *b, k * n);
                    kernels::gemm(k, m, n, val(*a).data(), true, g, false, gb, true);
                }
            }
            Op::Add(a, b) => {
                for v in [*a, *b] {
                    if needs(v) {
                        for (x, y) in slot(grads, v, g.len()).iter_mut().zip(g) {
                            *x += y;
                        }
                    }
                }
            }
            Op::Mul(a, b) => {
                if needs(*a) {
                    let other = val(*b).data();
                    for ((x, y), o) in slot(grads, *a, g.len()).iter_mut().zip(g).zip(other) {
                        *x += y * o;
                    }
                }
                if needs(*b) {
                    let other = val(*a).data();
                    for ((x, y), o) in slot(grads, *b, g.len()).iter_mut().zip(g).zip(other) {
                        *x += y * o;
                    }
                }
            }
            Op::AddRow(x, bias) => {
                if needs(*x) {
                    for (a, b) in slot(grads, *x, g.len()).iter_mut().zip(g) {
                        *a += b;
                    }
                }
                if needs(*bias) {
                    let n = val(*bias).len();
                    let gb = slot(grads, *bias, n);
                    for row in g.chunks_exact(n) {
                        for (a, b) in gb.iter_mut().zip(row) {
                            *a += b;
                        }
                    }
                }
            }
            Op::Affine(x, scale) => {
                for (a, b) in slot(grads, *x, g.len()).iter_mut().zip(g) {
                    *a += scale * b;
                }
            }
            Op::Relu(x) => {
                let xv = val(*x).data();
                for ((a, b), &xi) in slot(grads, *x, g.len()).iter_mut().zip(g).zip(xv) {
                    if xi > 0.0 {
                        *a += b;
                    }
                }
            }
            Op::SoftmaxRows(x) => {
                let (_, n) = node.value.dims2()?;
                let p = node.value.data();
                let gx = slot(grads, *x, g.len());
                for ((pr, gr), dx) in p.chunks_exact(n).zip(g.chunks_exact(n)).zip(gx.chunks_exact_mut(n)) {
                    kernels::softmax_backward_row(pr, gr, dx);
                }
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                rstd,
            } => {
                let d = val(*gamma).len();
                let gamma_v = val(*gamma).data();
                let mut dgamma = needs(*gamma).then(|| vec![0.0f32; d]);
                let mut dbeta = needs(*beta).then(|| vec![0.0f32; d]);
                let dx = if needs(*x) {
                    Some(slot(grads, *x, g.len()))
                } else {
                    None
                };
                kernels::layer_norm_backward(
                    g,
                    xhat,
                    rstd,
                    gamma_v,
                    d,
                    dx,
                    dgamma.as_deref_mut(),
                    dbeta.as_deref_mut(),
                );
                if let Some(dg) = dgamma {
                    add_into(slot(grads, *gamma, d), &dg);
                }
                if let Some(db) = dbeta {
                    add_into(slot(grads, *beta, d), &db);
                }
            }
            Op::Attention {
                q,
                k,
                v,
                heads,
                segments,
                probs,
            } => {
                let (_, d) = val(*q).dims2()?;
                let mut dq = needs(*q).then(|| vec![0.0f32; val(*q).len()]);
                let mut dk = needs(*k).then(|| vec![0.0f32; val(*k).len()]);
                let mut dv = needs(*v).then(|| vec![0.0f32; val(*v).len()]);
                kernels::attention_backward(
                    val(*q).data(),
                    val(*k).data(),
                    val(*v).data(),
                    probs,
                    g,
                    d,
                    *heads,
                    segments,
                    dq.as_deref_mut(),
                    dk.as_deref_mut(),
                    dv.as_deref_mut(),
                );
                for (var, buf) in [(*q, dq), (*k, dk), (*v, dv)] {
                    if let Some(buf) = buf {
                        add_into(slot(grads, var, buf.len()), &buf);
                    }
                }
            }
            Op::Embedding { table, ids } => {
                let t = val(*table);
                let (_, d) = t.dims2()?;
                let gt = slot(grads, *table, t.len());
                for (row, &id) in g.chunks_exact(d).zip(ids) {
                    let id = id as usize;
                    add_into(&mut gt[id * d..(id + 1) * d], row);
                }
            }
            Op::Dropout { x, mask } => {
                for ((a, b), m) in slot(grads, *x, g.len()).iter_mut().zip(g).zip(mask) {
                    *a += b * m;
                }
            }
            Op::CrossEntropy {
                logits,
                targets,
                ignore_id,
                probs,
                count,
            } => {
                let v = val(*logits).dims2()?.1;
                let scale = g[0] / *count as f32;
                let gl = slot(grads, *logits, probs.len());
                for (r, &tgt) in targets.iter().enumerate() {
                    if tgt == *ignore_id {
                        continue;
                    }
                    let pr = &probs[r * v..(r + 1) * v];
                    let gr = &mut gl[r * v..(r + 1) * v];
                    for (a, p) in gr.iter_mut().zip(pr) {
                        *a += scale * p;
                    }
                    gr[tgt as usize] -= scale;
                }
            }
            Op::Cosine { u, v, dot, nu, nv } => {
                // d cos / du = v/(|u||v|) - cos * u/|u|^2
                let cos = dot / (nu * nv);
                for (this, other, n_this, n_other) in [(*u, *v, *nu, *nv), (*v, *u, *nv, *nu)] {
                    if !needs(this) {
                        continue;
                    }
                    let tv = val(this).data();
                    let ov = val(other).data();
                    let a = g[0] / (n_this * n_other);
                    let b = g[0] * cos / (n_this * n_this);
                    for ((s, &t), &o) in slot(grads, this, tv.len()).iter_mut().zip(tv).zip(ov) {
                        *s += a * o - b * t;
                    }
                }
            }
            Op::SliceRows { x, start } => {
                let (_, n) = val(*x).dims2()?;
                let total = val(*x).len();
                let gx = slot(grads, *x, total);
                add_into(&mut gx[start * n..start * n + g.len()], g);
            }
            Op::Reshape(x) => add_into(slot(grads, *x, g.len()), g),
            Op::Sum(x) => {
                let n = val(*x).len();
                for a in slot(grads, *x, n).iter_mut() {
                    *a += g[0];
                }
            }
            Op::Mean(xs) => {
                let share = g[0] / xs.len() as f32;
                for &x in xs {
                    if needs(x) {
                        slot(grads, x, 1)[0] += share;
                    }
                }
            }
        }
        Ok(())
    }
}

fn add_into(dst: &mut [f32], src: &[f32]) {
    for (a, b) in dst.iter_mut().zip(src) {
        *a += b;
    }
}

/// Gradients keyed by parameter identity.
#[derive(Debug, Default)]
pub struct GradMap {
    grads: HashMap<ParamId, Vec<f32>>,
}

impl GradMap {
    fn add(&mut self, id: ParamId, g: Vec<f32>) {
        match self.grads.get_mut(&id) {
            Some(existing) => add_into(existing, &g),
            None => {
                self.grads.insert(id, g);
            }
        }
    }

    pub fn get(&self, id: ParamId) -> Option<&[f32]> {
        self.grads.get(&id).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    /// Adds each gradient into the matching parameter's `grad` buffer.
    /// Frozen parameters are never touched.
    pub fn accumulate_into<'a>(&self, params: impl IntoIterator<Item = &'a mut Param>) {
        for p in params {
            if p.frozen {
                continue;
            }
            if let Some(g) = self.grads.get(&p.id()) {
                match p.value.grad.as_mut() {
                    Some(buf) => add_into(buf, g),
                    None => p.value.grad = Some(g.clone()),
                }
            }
        }
    }
}
