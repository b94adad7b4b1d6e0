//! Inference entry points: encoding, teacher-forced logits and greedy
//! decoding with per-layer key/value caches.

use super::batch::{DecoderBatch, EncoderBatch, Frame, MemoryLayout};
use super::config::LN_EPS;
use super::model::{AttentionParams, DecoderParams, EncoderParams, LayerNormParams};
use super::vocab::{TokenId, TokenSequence, Vocab, EOS};
use super::EncodedMatrix;
use crate::error::{Error, Result};
use crate::tensor::kernels::{self, Segment};
use crate::tensor::{ops, Backend, Eager, Tensor};

/// Encodes one word: SOS + content + EOS, padded to `max_len`, PAD rows
/// zeroed.
pub fn encode(enc: &EncoderParams, x: &TokenSequence) -> Result<EncodedMatrix> {
    Ok(encode_batch(enc, &[x], Frame::Own)?.remove(0))
}

pub fn encode_batch(enc: &EncoderParams, xs: &[&TokenSequence], frame: Frame) -> Result<Vec<EncodedMatrix>> {
    if xs.is_empty() {
        return Ok(Vec::new());
    }
    let batch = EncoderBatch::new(xs, enc.config.max_len, frame)?;
    let mut eager = Eager;
    let out = enc.forward(&mut eager, &batch)?;
    batch.to_matrices(eager.value(&out).data(), enc.config.d_model)
}

/// Logits `[target.len() + 1, V]`; row `i` conditions on the language token
/// and `target[..i]`.
pub fn teacher_forcing_logits(dec: &DecoderParams, ctx: &EncodedMatrix, target: &TokenSequence) -> Result<Tensor> {
    let batch = DecoderBatch::teacher_forcing(&[target], dec.config.max_len)?;
    let (mem, layout) = MemoryLayout::pack(&[ctx])?;
    let mut eager = Eager;
    let mem = Tensor::new(vec![layout.rows(), dec.config.d_model], mem)?;
    let mem = eager.constant(mem);
    let logits = dec.forward(&mut eager, &batch, &mem, &layout)?;
    Ok(logits.into_owned())
}

/// Argmax over EOS and content tokens, lowest id on ties.
pub fn constrained_argmax(logits: &[f32], vocab: &Vocab) -> TokenId {
    let mut best = EOS;
    let mut best_v = logits[EOS as usize];
    for id in vocab.first_content()..vocab.len() as TokenId {
        let v = logits[id as usize];
        if v > best_v {
            best = id;
            best_v = v;
        }
    }
    best
}

/// Greedy decoding seeded with `lang` in place of SOS. Stops at EOS or after
/// `max_len` content tokens (capped by the model frame).
pub fn decode_greedy(
    dec: &DecoderParams,
    vocab: &Vocab,
    ctx: &EncodedMatrix,
    lang: TokenId,
    max_len: usize,
) -> Result<TokenSequence> {
    Ok(decode_greedy_batch(dec, vocab, &[ctx], &[lang], max_len)?.remove(0))
}

struct Cache {
    self_k: Vec<f32>,
    self_v: Vec<f32>,
    cross_k: Vec<f32>,
    cross_v: Vec<f32>,
}

struct Seq {
    lang: TokenId,
    out: Vec<TokenId>,
    done: bool,
    caches: Vec<Cache>,
    mem_rows: usize,
}

fn ln(x: &Tensor, p: &LayerNormParams) -> Result<Tensor> {
    ops::layer_norm(x, &p.gamma.value, &p.beta.value, LN_EPS)
}

fn linear(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    ops::add_row(&ops::matmul(x, w)?, b)
}

/// Single-row attention of `q` over `n` cached rows.
fn attend(q: &[f32], k: &[f32], v: &[f32], n: usize, d: usize, heads: usize, out: &mut [f32]) {
    let seg = [Segment {
        q_start: 0,
        q_len: 1,
        k_start: 0,
        k_len: n,
        causal: false,
    }];
    kernels::attention(q, &k[..n * d], &v[..n * d], d, heads, &seg, out);
}

fn project_rows(rows: &[f32], d: usize, w: &Tensor, b: &Tensor) -> Result<Vec<f32>> {
    let x = Tensor::new(vec![rows.len() / d, d], rows.to_vec())?;
    Ok(linear(&x, w, b)?.into_data())
}

fn attention_step(
    p: &AttentionParams,
    h: &Tensor,
    active: &[usize],
    seqs: &mut [Seq],
    layer: usize,
    d: usize,
    heads: usize,
    cross: bool,
) -> Result<Tensor> {
    let q = linear(h, &p.wq.value, &p.bq.value)?;
    if !cross {
        let k = linear(h, &p.wk.value, &p.bk.value)?;
        let v = linear(h, &p.wv.value, &p.bv.value)?;
        for (r, &s) in active.iter().enumerate() {
            let c = &mut seqs[s].caches[layer];
            c.self_k.extend_from_slice(k.row(r));
            c.self_v.extend_from_slice(v.row(r));
        }
    }
    let mut a = vec![0.0; active.len() * d];
    for (r, &s) in active.iter().enumerate() {
        let seq = &seqs[s];
        let c = &seq.caches[layer];
        let (k, v, n) = if cross {
            (&c.cross_k, &c.cross_v, seq.mem_rows)
        } else {
            (&c.self_k, &c.self_v, c.self_k.len() / d)
        };
        attend(q.row(r), k, v, n, d, heads, &mut a[r * d..(r + 1) * d]);
    }
    let a = Tensor::new(vec![active.len(), d], a)?;
    linear(&a, &p.wo.value, &p.bo.value)
}

/// Batched greedy decoding; sequences finish independently.
pub fn decode_greedy_batch(
    dec: &DecoderParams,
    vocab: &Vocab,
    ctxs: &[&EncodedMatrix],
    langs: &[TokenId],
    max_len: usize,
) -> Result<Vec<TokenSequence>> {
    if ctxs.len() != langs.len() {
        return Err(Error::Input(format!(
            "{} contexts for {} language tokens",
            ctxs.len(),
            langs.len()
        )));
    }
    let c = &dec.config;
    if vocab.len() != c.vocab_size {
        return Err(Error::Vocab(format!(
            "vocabulary of {} tokens for a model of {}",
            vocab.len(),
            c.vocab_size
        )));
    }
    for &l in langs {
        if !vocab.is_lang(l) {
            return Err(Error::Vocab(format!("token {l} is not a registered language")));
        }
    }
    let d = c.d_model;
    let max_content = max_len.min(c.max_len - 2);

    let mut seqs = Vec::with_capacity(ctxs.len());
    for (ctx, &lang) in ctxs.iter().zip(langs) {
        if ctx.d_model() != d {
            return Err(Error::Shape(format!(
                "context width {} for a model of width {d}",
                ctx.d_model()
            )));
        }
        let mem = ctx.valid_rows();
        let mut caches = Vec::with_capacity(dec.layers.len());
        for layer in &dec.layers {
            let p = &layer.cross_attn;
            caches.push(Cache {
                self_k: Vec::new(),
                self_v: Vec::new(),
                cross_k: project_rows(mem, d, &p.wk.value, &p.bk.value)?,
                cross_v: project_rows(mem, d, &p.wv.value, &p.bv.value)?,
            });
        }
        seqs.push(Seq {
            lang,
            out: Vec::new(),
            done: false,
            caches,
            mem_rows: ctx.valid_len(),
        });
    }

    let scale = (d as f32).sqrt();
    for step in 0..=max_content {
        let active: Vec<usize> = (0..seqs.len()).filter(|&i| !seqs[i].done).collect();
        if active.is_empty() {
            break;
        }
        let mut x = Vec::with_capacity(active.len() * d);
        let pe = &dec.positions()[step * d..(step + 1) * d];
        for &s in &active {
            let tok = seqs[s].out.last().copied().unwrap_or(seqs[s].lang);
            let e = dec.embed.value.row(tok as usize);
            x.extend(e.iter().zip(pe).map(|(e, p)| e * scale + p));
        }
        let mut x = Tensor::new(vec![active.len(), d], x)?;
        for (li, layer) in dec.layers.iter().enumerate() {
            let h = ln(&x, &layer.ln_self)?;
            let a = attention_step(&layer.self_attn, &h, &active, &mut seqs, li, d, c.n_heads, false)?;
            x = ops::add(&x, &a)?;
            let h = ln(&x, &layer.ln_cross)?;
            let a = attention_step(&layer.cross_attn, &h, &active, &mut seqs, li, d, c.n_heads, true)?;
            x = ops::add(&x, &a)?;
            let h = ln(&x, &layer.ln_ff)?;
            let f = ops::relu(&linear(&h, &layer.ff.w1.value, &layer.ff.b1.value)?);
            let f = linear(&f, &layer.ff.w2.value, &layer.ff.b2.value)?;
            x = ops::add(&x, &f)?;
        }
        let h = ln(&x, &dec.ln_out)?;
        let logits = linear(&h, &dec.out_w.value, &dec.out_b.value)?;
        for (r, &s) in active.iter().enumerate() {
            let next = constrained_argmax(logits.row(r), vocab);
            let seq = &mut seqs[s];
            if next == EOS {
                seq.done = true;
            } else {
                seq.out.push(next);
                if seq.out.len() >= max_content {
                    seq.done = true;
                }
            }
        }
    }
    seqs.into_iter()
        .map(|s| TokenSequence::new(s.out, s.lang, vocab))
        .collect()
}
