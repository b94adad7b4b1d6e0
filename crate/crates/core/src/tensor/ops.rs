//! Shape-checked forward operations on plain tensors.
//!
//! These are the eager forms; [`super::Tape`] records the same computations
//! together with what their backward passes need.

use super::kernels::{self, Segment};
use super::Tensor;
use crate::error::{Error, Result};

pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (m, k) = a.dims2()?;
    let (k2, n) = b.dims2()?;
    if a.shape().len() != 2 || b.shape().len() != 2 || k != k2 {
        return Err(Error::Dimension {
            op: "matmul",
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    let mut out = vec![0.0; m * n];
    kernels::gemm(m, k, n, a.data(), false, b.data(), false, &mut out, false);
    Tensor::new(vec![m, n], out)
}

pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.shape() != b.shape() {
        return Err(Error::Dimension {
            op: "add",
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    let data = a.data().iter().zip(b.data()).map(|(x, y)| x + y).collect();
    Tensor::new(a.shape().to_vec(), data)
}

pub fn mul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.shape() != b.shape() {
        return Err(Error::Dimension {
            op: "mul",
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    let data = a.data().iter().zip(b.data()).map(|(x, y)| x * y).collect();
    Tensor::new(a.shape().to_vec(), data)
}

/// Adds a length-`n` bias to every row of an `m × n` matrix.
pub fn add_row(x: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (_, n) = x.dims2()?;
    if bias.len() != n {
        return Err(Error::Dimension {
            op: "add_row",
            lhs: x.shape().to_vec(),
            rhs: bias.shape().to_vec(),
        });
    }
    let mut data = x.data().to_vec();
    for row in data.chunks_exact_mut(n) {
        for (v, b) in row.iter_mut().zip(bias.data()) {
            *v += b;
        }
    }
    Tensor::new(x.shape().to_vec(), data)
}

pub fn relu(x: &Tensor) -> Tensor {
    let data = x.data().iter().map(|v| v.max(0.0)).collect();
    Tensor::new(x.shape().to_vec(), data).expect("same shape")
}

pub fn scale(x: &Tensor, s: f32) -> Tensor {
    let data = x.data().iter().map(|v| v * s).collect();
    Tensor::new(x.shape().to_vec(), data).expect("same shape")
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(t: &Tensor) -> Result<Tensor> {
    let (_, n) = t.dims2()?;
    let mut data = t.data().to_vec();
    for row in data.chunks_exact_mut(n) {
        kernels::softmax_in_place(row);
    }
    Tensor::new(t.shape().to_vec(), data)
}

pub(crate) struct LayerNormOut {
    pub out: Tensor,
    pub xhat: Vec<f32>,
    pub rstd: Vec<f32>,
}

pub(crate) fn layer_norm_full(x: &Tensor, gamma: &Tensor, beta: &Tensor, eps: f32) -> Result<LayerNormOut> {
    let (_, d) = x.dims2()?;
    if gamma.len() != d || beta.len() != d {
        return Err(Error::Dimension {
            op: "layer_norm",
            lhs: x.shape().to_vec(),
            rhs: gamma.shape().to_vec(),
        });
    }
    if eps.is_nan() || eps <= 0.0 {
        return Err(Error::Shape(format!("layer_norm eps must be > 0, got {eps}")));
    }
    let mut out = vec![0.0; x.len()];
    let (xhat, rstd) = kernels::layer_norm(x.data(), d, gamma.data(), beta.data(), eps, &mut out);
    Ok(LayerNormOut {
        out: Tensor::new(x.shape().to_vec(), out)?,
        xhat,
        rstd,
    })
}

pub fn layer_norm(x: &Tensor, gamma: &Tensor, beta: &Tensor, eps: f32) -> Result<Tensor> {
    layer_norm_full(x, gamma, beta, eps).map(|r| r.out)
}

pub(crate) fn check_segments(nq: usize, nk: usize, d: usize, heads: usize, segments: &[Segment]) -> Result<()> {
    if heads == 0 || d % heads != 0 {
        return Err(Error::Shape(format!("{d} columns do not split into {heads} heads")));
    }
    for s in segments {
        if s.q_start + s.q_len > nq || s.k_start + s.k_len > nk || s.k_len == 0 {
            return Err(Error::Shape(format!(
                "attention segment {s:?} out of range for {nq} query / {nk} key rows"
            )));
        }
    }
    Ok(())
}

pub(crate) fn attention_full(
    q: &Tensor,
    k: &Tensor,
    v: &Tensor,
    heads: usize,
    segments: &[Segment],
) -> Result<(Tensor, Vec<f32>)> {
    let (nq, d) = q.dims2()?;
    let (nk, dk) = k.dims2()?;
    if dk != d || v.shape() != k.shape() {
        return Err(Error::Dimension {
            op: "attention",
            lhs: q.shape().to_vec(),
            rhs: k.shape().to_vec(),
        });
    }
    check_segments(nq, nk, d, heads, segments)?;
    let mut out = vec![0.0; nq * d];
    let probs = kernels::attention(q.data(), k.data(), v.data(), d, heads, segments, &mut out);
    Ok((Tensor::new(vec![nq, d], out)?, probs))
}

/// Multi-head attention over packed segments; rows outside every segment
/// come out as zeros.
pub fn attention(q: &Tensor, k: &Tensor, v: &Tensor, heads: usize, segments: &[Segment]) -> Result<Tensor> {
    attention_full(q, k, v, heads, segments).map(|r| r.0)
}

/// Gathers rows of a `V × d` table.
pub fn embedding(table: &Tensor, ids: &[u32]) -> Result<Tensor> {
    let (vocab, d) = table.dims2()?;
    if ids.is_empty() {
        return Err(Error::Shape("embedding of an empty id list".into()));
    }
    let mut out = Vec::with_capacity(ids.len() * d);
    for &id in ids {
        let id = id as usize;
        if id >= vocab {
            return Err(Error::Vocab(format!("token id {id} outside table of {vocab}")));
        }
        out.extend_from_slice(table.row(id));
    }
    Tensor::new(vec![ids.len(), d], out)
}

pub fn slice_rows(x: &Tensor, start: usize, len: usize) -> Result<Tensor> {
    let (m, n) = x.dims2()?;
    if len == 0 || start + len > m {
        return Err(Error::Shape(format!("rows {start}..{} of {m}", start + len)));
    }
    Tensor::new(vec![len, n], x.data()[start * n..(start + len) * n].to_vec())
}

/// `dot(u, v) / (‖u‖·‖v‖)` over the flattened tensors.
pub fn cosine_similarity(u: &Tensor, v: &Tensor) -> Result<f32> {
    if u.len() != v.len() {
        return Err(Error::Dimension {
            op: "cosine_similarity",
            lhs: u.shape().to_vec(),
            rhs: v.shape().to_vec(),
        });
    }
    let (nu, nv) = (kernels::norm(u.data()), kernels::norm(v.data()));
    for norm in [nu, nv] {
        if norm.is_nan() || norm < 1e-12 {
            return Err(Error::DegenerateVector { norm });
        }
    }
    Ok(kernels::dot(u.data(), v.data()) / (nu * nv))
}

/// Mean of `-log softmax(logits)[t, targets[t]]` over positions whose target
/// is not `ignore_id`.
pub fn cross_entropy(logits: &Tensor, targets: &[u32], ignore_id: u32) -> Result<f32> {
    let (t, v) = logits.dims2()?;
    check_targets(t, v, targets, ignore_id)?;
    let mut total = 0.0f64;
    let mut count = 0usize;
    for (row, &tgt) in logits.data().chunks_exact(v).zip(targets) {
        if tgt == ignore_id {
            continue;
        }
        total += (kernels::log_sum_exp(row) - row[tgt as usize]) as f64;
        count += 1;
    }
    Ok((total / count as f64) as f32)
}

pub(crate) fn check_targets(t: usize, v: usize, targets: &[u32], ignore_id: u32) -> Result<usize> {
    if targets.len() != t {
        return Err(Error::Shape(format!("{} targets for {t} logit rows", targets.len())));
    }
    let mut count = 0;
    for &tgt in targets {
        if tgt == ignore_id {
            continue;
        }
        if tgt as usize >= v {
            return Err(Error::Vocab(format!("target {tgt} outside {v} classes")));
        }
        count += 1;
    }
    if count == 0 {
        return Err(Error::EmptyBatch);
    }
    Ok(count)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f32]]) -> Tensor {
        Tensor::from_rows(rows).unwrap()
    }

    #[test]
    fn matmul_examples() {
        let id = m(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let x = m(&[&[1.0, 2.0], &[3.0, 4.0]]);
        assert_eq!(matmul(&id, &x).unwrap().data(), x.data());
        let z = Tensor::zeros(&[2, 2]);
        assert!(matmul(&z, &x).unwrap().data().iter().all(|&v| v == 0.0));
        let y = m(&[&[5.0, 6.0], &[7.0, 8.0]]);
        assert_eq!(matmul(&x, &y).unwrap().data(), &[19.0, 22.0, 43.0, 50.0]);
    }

    #[test]
    fn matmul_mismatch_names_both_shapes() {
        let a = Tensor::zeros(&[2, 3]);
        let b = Tensor::zeros(&[2, 3]);
        let msg = matmul(&a, &b).unwrap_err().to_string();
        assert!(msg.contains("[2, 3]") && msg.contains("matmul"), "{msg}");
    }

    #[test]
    fn softmax_examples() {
        let s = softmax_rows(&m(&[&[0.0, 0.0, 0.0]])).unwrap();
        for v in s.data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-6);
        }
        let s = softmax_rows(&m(&[&[1000.0, 0.0]])).unwrap();
        assert!((s.data()[0] - 1.0).abs() < 1e-6 && s.data()[1].abs() < 1e-6);
        let s = softmax_rows(&m(&[&[1.0, 2.0]])).unwrap();
        assert!((s.data()[0] - 0.26894).abs() < 1e-4);
        assert!((s.data()[1] - 0.73106).abs() < 1e-4);
    }

    #[test]
    fn layer_norm_examples() {
        let ones = Tensor::full(&[2], 1.0);
        let zeros = Tensor::zeros(&[2]);
        let c = layer_norm(&m(&[&[5.0, 5.0]]), &ones, &zeros, 1e-5).unwrap();
        assert!(c.data().iter().all(|&v| v == 0.0));
        let beta = Tensor::new(vec![2], vec![0.5, -2.0]).unwrap();
        let g0 = layer_norm(&m(&[&[1.0, 7.0]]), &zeros, &beta, 1e-5).unwrap();
        assert_eq!(g0.data(), beta.data());
        let r = layer_norm(&m(&[&[1.0, 3.0]]), &ones, &zeros, 1e-9).unwrap();
        assert!((r.data()[0] + 1.0).abs() < 1e-3 && (r.data()[1] - 1.0).abs() < 1e-3);
        assert!(layer_norm(&m(&[&[1.0, 3.0]]), &ones, &zeros, 0.0).is_err());
    }

    #[test]
    fn cosine_examples() {
        let u = Tensor::new(vec![2], vec![1.0, 0.0]).unwrap();
        let v = Tensor::new(vec![2], vec![0.0, 1.0]).unwrap();
        let w = Tensor::new(vec![2], vec![1.0, 1.0]).unwrap();
        assert!((cosine_similarity(&w, &w).unwrap() - 1.0).abs() < 1e-6);
        assert_eq!(cosine_similarity(&u, &v).unwrap(), 0.0);
        assert!((cosine_similarity(&u, &w).unwrap() - 0.70711).abs() < 1e-4);
        let z = Tensor::zeros(&[2]);
        assert!(matches!(cosine_similarity(&z, &u), Err(Error::DegenerateVector { .. })));
    }

    #[test]
    fn cross_entropy_examples() {
        let sat = m(&[&[1000.0, 0.0, 0.0]]);
        assert!(cross_entropy(&sat, &[0], 99).unwrap() < 1e-6);
        let uni = Tensor::zeros(&[3, 4]);
        assert!((cross_entropy(&uni, &[0, 1, 3], 99).unwrap() - 1.38629).abs() < 1e-4);
        let two = m(&[&[2.0, 0.0]]);
        assert!((cross_entropy(&two, &[0], 99).unwrap() - 0.12693).abs() < 1e-4);
        assert!(matches!(cross_entropy(&two, &[99], 99), Err(Error::EmptyBatch)));
    }
}
