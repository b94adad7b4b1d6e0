//! Slice-level forward and backward math shared by the eager and taped paths.

/// `c = op(a) · op(b)` (or `c += ...` when `accumulate`), where `op(a)` is
/// `m × k` and `op(b)` is `k × n`. A transposed operand is stored in its
/// untransposed layout, e.g. `a` as `k × m` when `trans_a`.
#[allow(clippy::too_many_arguments)]
pub fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f32],
    trans_a: bool,
    b: &[f32],
    trans_b: bool,
    c: &mut [f32],
    accumulate: bool,
) {
    assert_eq!(a.len(), m * k);
    assert_eq!(b.len(), k * n);
    assert_eq!(c.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        if !accumulate {
            c.fill(0.0);
        }
        return;
    }
    let (rsa, csa) = if trans_a { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if trans_b { (1, k as isize) } else { (n as isize, 1) };
    let beta = if accumulate { 1.0 } else { 0.0 };
    // SAFETY: the asserts above bound every index the strides can reach.
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

pub fn softmax_in_place(row: &mut [f32]) {
    let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let mut sum = 0.0f32;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    let inv = 1.0 / sum;
    for v in row.iter_mut() {
        *v *= inv;
    }
}

/// Given softmax output `p` and upstream `dy`, writes `dx` for one row.
pub fn softmax_backward_row(p: &[f32], dy: &[f32], dx: &mut [f32]) {
    let dot: f32 = p.iter().zip(dy).map(|(a, b)| a * b).sum();
    for ((dx, &p), &dy) in dx.iter_mut().zip(p).zip(dy) {
        *dx += p * (dy - dot);
    }
}

/// Numerically stable `log Σ exp(row)`.
pub fn log_sum_exp(row: &[f32]) -> f32 {
    let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let sum: f32 = row.iter().map(|v| (v - max).exp()).sum();
    max + sum.ln()
}

/// Row-wise layer norm. Returns the normalized rows (before the affine map)
/// and each row's reciprocal standard deviation for the backward pass.
pub fn layer_norm(
    x: &[f32],
    cols: usize,
    gamma: &[f32],
    beta: &[f32],
    eps: f32,
    out: &mut [f32],
) -> (Vec<f32>, Vec<f32>) {
    let rows = x.len() / cols;
    let mut xhat = vec![0.0; x.len()];
    let mut rstd = vec![0.0; rows];
    for r in 0..rows {
        let row = &x[r * cols..(r + 1) * cols];
        let mean = row.iter().sum::<f32>() / cols as f32;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f32>() / cols as f32;
        let rs = 1.0 / (var + eps).sqrt();
        rstd[r] = rs;
        let xh = &mut xhat[r * cols..(r + 1) * cols];
        let o = &mut out[r * cols..(r + 1) * cols];
        for c in 0..cols {
            xh[c] = (row[c] - mean) * rs;
            o[c] = xh[c] * gamma[c] + beta[c];
        }
    }
    (xhat, rstd)
}

/// Accumulates layer-norm gradients for input, gamma and beta.
#[allow(clippy::too_many_arguments)]
pub fn layer_norm_backward(
    dy: &[f32],
    xhat: &[f32],
    rstd: &[f32],
    gamma: &[f32],
    cols: usize,
    dx: Option<&mut [f32]>,
    dgamma: Option<&mut [f32]>,
    dbeta: Option<&mut [f32]>,
) {
    let rows = rstd.len();
    if let Some(dg) = dgamma {
        for r in 0..rows {
            for c in 0..cols {
                dg[c] += dy[r * cols + c] * xhat[r * cols + c];
            }
        }
    }
    if let Some(db) = dbeta {
        for r in 0..rows {
            for c in 0..cols {
                db[c] += dy[r * cols + c];
            }
        }
    }
    if let Some(dx) = dx {
        let n = cols as f32;
        let mut g = vec![0.0f32; cols];
        for r in 0..rows {
            let dyr = &dy[r * cols..(r + 1) * cols];
            let xh = &xhat[r * cols..(r + 1) * cols];
            for c in 0..cols {
                g[c] = dyr[c] * gamma[c];
            }
            let mean_g = g.iter().sum::<f32>() / n;
            let mean_gx = g.iter().zip(xh).map(|(a, b)| a * b).sum::<f32>() / n;
            let dxr = &mut dx[r * cols..(r + 1) * cols];
            for c in 0..cols {
                dxr[c] += rstd[r] * (g[c] - mean_g - xh[c] * mean_gx);
            }
        }
    }
}

/// One attention block over packed rows: queries `q_len` rows starting at
/// `q_start`, keys/values `k_len` rows starting at `k_start`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Segment {
    pub q_start: usize,
    pub q_len: usize,
    pub k_start: usize,
    pub k_len: usize,
    pub causal: bool,
}

impl Segment {
    /// Number of keys visible to query row `i`.
    #[inline]
    pub fn visible(&self, i: usize) -> usize {
        if self.causal {
            (i + 1).min(self.k_len)
        } else {
            self.k_len
        }
    }
}

/// Multi-head scaled dot-product attention over packed segments. Returns
/// the attention probabilities, laid out per segment then per head as
/// `q_len × k_len` blocks (invisible keys hold 0).
pub fn attention(
    q: &[f32],
    k: &[f32],
    v: &[f32],
    d: usize,
    heads: usize,
    segments: &[Segment],
    out: &mut [f32],
) -> Vec<f32> {
    let dh = d / heads;
    let scale = 1.0 / (dh as f32).sqrt();
    let total: usize = segments.iter().map(|s| s.q_len * s.k_len * heads).sum();
    let mut probs = vec![0.0f32; total];
    let mut off = 0;
    for seg in segments {
        for h in 0..heads {
            let c0 = h * dh;
            for i in 0..seg.q_len {
                let qi = &q[(seg.q_start + i) * d + c0..(seg.q_start + i) * d + c0 + dh];
                let vis = seg.visible(i);
                let p = &mut probs[off + i * seg.k_len..off + i * seg.k_len + vis];
                for (j, pj) in p.iter_mut().enumerate() {
                    let kj = &k[(seg.k_start + j) * d + c0..(seg.k_start + j) * d + c0 + dh];
                    *pj = qi.iter().zip(kj).map(|(a, b)| a * b).sum::<f32>() * scale;
                }
                softmax_in_place(p);
                let o = &mut out[(seg.q_start + i) * d + c0..(seg.q_start + i) * d + c0 + dh];
                o.fill(0.0);
                for (j, &pj) in p.iter().enumerate() {
                    let vj = &v[(seg.k_start + j) * d + c0..(seg.k_start + j) * d + c0 + dh];
                    for (o, &vv) in o.iter_mut().zip(vj) {
                        *o += pj * vv;
                    }
                }
            }
            off += seg.q_len * seg.k_len;
        }
    }
    probs
}

/// Backward of [`attention`]; accumulates into whichever of `dq`, `dk`,
/// `dv` are requested.
#[allow(clippy::too_many_arguments)]
pub fn attention_backward(
    q: &[f32],
    k: &[f32],
    v: &[f32],
    probs: &[f32],
    dout: &[f32],
    d: usize,
    heads: usize,
    segments: &[Segment],
    mut dq: Option<&mut [f32]>,
    mut dk: Option<&mut [f32]>,
    mut dv: Option<&mut [f32]>,
) {
    let dh = d / heads;
    let scale = 1.0 / (dh as f32).sqrt();
    let mut dp = Vec::new();
    let mut ds = Vec::new();
    let mut off = 0;
    for seg in segments {
        for h in 0..heads {
            let c0 = h * dh;
            for i in 0..seg.q_len {
                let vis = seg.visible(i);
                let p = &probs[off + i * seg.k_len..off + i * seg.k_len + vis];
                let doi = &dout[(seg.q_start + i) * d + c0..(seg.q_start + i) * d + c0 + dh];
                if let Some(dv) = dv.as_deref_mut() {
                    for (j, &pj) in p.iter().enumerate() {
                        let row = (seg.k_start + j) * d + c0;
                        for (dvv, &g) in dv[row..row + dh].iter_mut().zip(doi) {
                            *dvv += pj * g;
                        }
                    }
                }
                if dq.is_none() && dk.is_none() {
                    continue;
                }
                dp.clear();
                dp.extend((0..vis).map(|j| {
                    let vj = &v[(seg.k_start + j) * d + c0..(seg.k_start + j) * d + c0 + dh];
                    doi.iter().zip(vj).map(|(a, b)| a * b).sum::<f32>()
                }));
                ds.clear();
                ds.resize(vis, 0.0);
                softmax_backward_row(p, &dp, &mut ds);
                let qrow = (seg.q_start + i) * d + c0;
                for (j, &g) in ds.iter().enumerate() {
                    let g = g * scale;
                    let krow = (seg.k_start + j) * d + c0;
                    if let Some(dq) = dq.as_deref_mut() {
                        for (dqv, &kv) in dq[qrow..qrow + dh].iter_mut().zip(&k[krow..krow + dh]) {
                            *dqv += g * kv;
                        }
                    }
                    if let Some(dk) = dk.as_deref_mut() {
                        for (dkv, &qv) in dk[krow..krow + dh].iter_mut().zip(&q[qrow..qrow + dh]) {
                            *dkv += g * qv;
                        }
                    }
                }
            }
            off += seg.q_len * seg.k_len;
        }
    }
}

/// Fixed sinusoidal positional encodings, `max_len × d`.
pub fn sinusoidal_positions(max_len: usize, d: usize) -> Vec<f32> {
    let mut pe = vec![0.0f32; max_len * d];
    for pos in 0..max_len {
        for i in 0..d / 2 {
            let freq = (-(2.0 * i as f64) * (10000f64).ln() / d as f64).exp();
            let angle = pos as f64 * freq;
            pe[pos * d + 2 * i] = angle.sin() as f32;
            pe[pos * d + 2 * i + 1] = angle.cos() as f32;
        }
        if d % 2 == 1 {
            let freq = (-((d - 1) as f64) * (10000f64).ln() / d as f64).exp();
            pe[pos * d + d - 1] = (pos as f64 * freq).sin() as f32;
        }
    }
    pe
}

pub fn dot(a: &[f32], b: &[f32]) -> f32 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f32]) -> f32 {
    dot(a, a).sqrt()
}
