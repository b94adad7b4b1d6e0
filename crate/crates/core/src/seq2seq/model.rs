//! Pre-LN encoder–decoder transformer parameters and the backend-generic
//! forward pass over packed batches.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::batch::{DecoderBatch, EncoderBatch, MemoryLayout};
use super::config::{ModelConfig, LN_EPS};
use crate::error::{Error, Result};
use crate::tensor::kernels::{self, Segment};
use crate::tensor::{Backend, Param, Tensor};

#[derive(Clone, Debug)]
pub struct LayerNormParams {
    pub gamma: Param,
    pub beta: Param,
}

#[derive(Clone, Debug)]
pub struct AttentionParams {
    pub wq: Param,
    pub bq: Param,
    pub wk: Param,
    pub bk: Param,
    pub wv: Param,
    pub bv: Param,
    pub wo: Param,
    pub bo: Param,
}

#[derive(Clone, Debug)]
pub struct FeedForwardParams {
    pub w1: Param,
    pub b1: Param,
    pub w2: Param,
    pub b2: Param,
}

#[derive(Clone, Debug)]
pub struct EncoderLayer {
    pub ln_attn: LayerNormParams,
    pub attn: AttentionParams,
    pub ln_ff: LayerNormParams,
    pub ff: FeedForwardParams,
}

#[derive(Clone, Debug)]
pub struct DecoderLayer {
    pub ln_self: LayerNormParams,
    pub self_attn: AttentionParams,
    pub ln_cross: LayerNormParams,
    pub cross_attn: AttentionParams,
    pub ln_ff: LayerNormParams,
    pub ff: FeedForwardParams,
}

/// Encoder weights (an encoder θ).
#[derive(Clone, Debug)]
pub struct EncoderParams {
    pub config: ModelConfig,
    pub embed: Param,
    pub layers: Vec<EncoderLayer>,
    pub ln_out: LayerNormParams,
    positions: Vec<f32>,
}

/// Decoder weights (a decoder φ), including the output projection.
#[derive(Clone, Debug)]
pub struct DecoderParams {
    pub config: ModelConfig,
    pub embed: Param,
    pub layers: Vec<DecoderLayer>,
    pub ln_out: LayerNormParams,
    pub out_w: Param,
    pub out_b: Param,
    positions: Vec<f32>,
}

struct Init {
    rng: ChaCha8Rng,
}

impl Init {
    fn normal(&mut self, name: String, shape: &[usize], std: f32) -> Param {
        let dist = Normal::new(0.0f32, std).expect("positive std");
        let n = shape.iter().product();
        let data = (0..n).map(|_| dist.sample(&mut self.rng)).collect();
        Param::new(name, Tensor::new(shape.to_vec(), data).expect("shape"))
    }

    fn xavier(&mut self, name: String, fan_in: usize, fan_out: usize) -> Param {
        let std = (2.0 / (fan_in + fan_out) as f32).sqrt();
        self.normal(name, &[fan_in, fan_out], std)
    }

    fn zeros(name: String, n: usize) -> Param {
        Param::new(name, Tensor::zeros(&[n]))
    }

    fn ln(name: &str, d: usize) -> LayerNormParams {
        LayerNormParams {
            gamma: Param::new(format!("{name}.gamma"), Tensor::full(&[d], 1.0)),
            beta: Self::zeros(format!("{name}.beta"), d),
        }
    }

    fn attn(&mut self, name: &str, d: usize) -> AttentionParams {
        AttentionParams {
            wq: self.xavier(format!("{name}.wq"), d, d),
            bq: Self::zeros(format!("{name}.bq"), d),
            wk: self.xavier(format!("{name}.wk"), d, d),
            bk: Self::zeros(format!("{name}.bk"), d),
            wv: self.xavier(format!("{name}.wv"), d, d),
            bv: Self::zeros(format!("{name}.bv"), d),
            wo: self.xavier(format!("{name}.wo"), d, d),
            bo: Self::zeros(format!("{name}.bo"), d),
        }
    }

    fn ff(&mut self, name: &str, d: usize, f: usize) -> FeedForwardParams {
        FeedForwardParams {
            w1: self.xavier(format!("{name}.w1"), d, f),
            b1: Self::zeros(format!("{name}.b1"), f),
            w2: self.xavier(format!("{name}.w2"), f, d),
            b2: Self::zeros(format!("{name}.b2"), d),
        }
    }
}

/// Deterministic initialization: embeddings ~ N(0, 1/d_model), projections
/// Xavier-normal, biases zero, layer-norm gains one.
pub fn init_model(config: &ModelConfig, seed: u64) -> Result<(EncoderParams, DecoderParams)> {
    config.validate()?;
    let mut init = Init {
        rng: ChaCha8Rng::seed_from_u64(seed),
    };
    let (d, f, v) = (config.d_model, config.d_ff, config.vocab_size);
    let emb_std = 1.0 / (d as f32).sqrt();
    let positions = kernels::sinusoidal_positions(config.max_len, d);

    let enc_embed = init.normal("encoder.embed".into(), &[v, d], emb_std);
    let enc_layers = (0..config.n_layers)
        .map(|i| {
            let p = format!("encoder.layers.{i}");
            EncoderLayer {
                ln_attn: Init::ln(&format!("{p}.ln_attn"), d),
                attn: init.attn(&format!("{p}.attn"), d),
                ln_ff: Init::ln(&format!("{p}.ln_ff"), d),
                ff: init.ff(&format!("{p}.ff"), d, f),
            }
        })
        .collect();
    let encoder = EncoderParams {
        config: config.clone(),
        embed: enc_embed,
        layers: enc_layers,
        ln_out: Init::ln("encoder.ln_out", d),
        positions: positions.clone(),
    };

    let dec_embed = init.normal("decoder.embed".into(), &[v, d], emb_std);
    let dec_layers = (0..config.n_layers)
        .map(|i| {
            let p = format!("decoder.layers.{i}");
            DecoderLayer {
                ln_self: Init::ln(&format!("{p}.ln_self"), d),
                self_attn: init.attn(&format!("{p}.self_attn"), d),
                ln_cross: Init::ln(&format!("{p}.ln_cross"), d),
                cross_attn: init.attn(&format!("{p}.cross_attn"), d),
                ln_ff: Init::ln(&format!("{p}.ln_ff"), d),
                ff: init.ff(&format!("{p}.ff"), d, f),
            }
        })
        .collect();
    let out_w = init.xavier("decoder.out_w".into(), d, v);
    let decoder = DecoderParams {
        config: config.clone(),
        embed: dec_embed,
        layers: dec_layers,
        ln_out: Init::ln("decoder.ln_out", d),
        out_w,
        out_b: Init::zeros("decoder.out_b".into(), v),
        positions,
    };
    Ok((encoder, decoder))
}

impl LayerNormParams {
    fn params(&self) -> [&Param; 2] {
        [&self.gamma, &self.beta]
    }

    fn params_mut(&mut self) -> [&mut Param; 2] {
        [&mut self.gamma, &mut self.beta]
    }

    fn apply<'p, B: Backend<'p>>(&'p self, b: &mut B, x: &B::Value) -> Result<B::Value> {
        let g = b.param(&self.gamma);
        let beta = b.param(&self.beta);
        b.layer_norm(x, &g, &beta, LN_EPS)
    }
}

impl AttentionParams {
    fn params(&self) -> [&Param; 8] {
        [
            &self.wq, &self.bq, &self.wk, &self.bk, &self.wv, &self.bv, &self.wo, &self.bo,
        ]
    }

    fn params_mut(&mut self) -> [&mut Param; 8] {
        [
            &mut self.wq,
            &mut self.bq,
            &mut self.wk,
            &mut self.bk,
            &mut self.wv,
            &mut self.bv,
            &mut self.wo,
            &mut self.bo,
        ]
    }

    /// Attention of `queries` over `keys` (the same value for self-attention).
    fn apply<'p, B: Backend<'p>>(
        &'p self,
        b: &mut B,
        queries: &B::Value,
        keys: &B::Value,
        heads: usize,
        segments: &[Segment],
    ) -> Result<B::Value> {
        let (wq, bq) = (b.param(&self.wq), b.param(&self.bq));
        let (wk, bk) = (b.param(&self.wk), b.param(&self.bk));
        let (wv, bv) = (b.param(&self.wv), b.param(&self.bv));
        let (wo, bo) = (b.param(&self.wo), b.param(&self.bo));
        let q = b.linear(queries, &wq, &bq)?;
        let k = b.linear(keys, &wk, &bk)?;
        let v = b.linear(keys, &wv, &bv)?;
        let a = b.attention(&q, &k, &v, heads, segments)?;
        b.linear(&a, &wo, &bo)
    }
}

impl FeedForwardParams {
    fn params(&self) -> [&Param; 4] {
        [&self.w1, &self.b1, &self.w2, &self.b2]
    }

    fn params_mut(&mut self) -> [&mut Param; 4] {
        [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }

    fn apply<'p, B: Backend<'p>>(&'p self, b: &mut B, x: &B::Value) -> Result<B::Value> {
        let (w1, b1) = (b.param(&self.w1), b.param(&self.b1));
        let (w2, b2) = (b.param(&self.w2), b.param(&self.b2));
        let h = b.linear(x, &w1, &b1)?;
        let h = b.relu(&h);
        b.linear(&h, &w2, &b2)
    }
}

/// Scaled token embeddings plus fixed positional encodings.
fn embed_tokens<'p, B: Backend<'p>>(
    b: &mut B,
    table: &'p Param,
    positions_table: &[f32],
    tokens: &[u32],
    positions: &[usize],
    d: usize,
) -> Result<B::Value> {
    let t = b.param(table);
    let e = b.embedding(&t, tokens)?;
    let e = b.scale(&e, (d as f32).sqrt());
    let mut pe = Vec::with_capacity(positions.len() * d);
    for &p in positions {
        pe.extend_from_slice(&positions_table[p * d..(p + 1) * d]);
    }
    let pe = b.constant(Tensor::new(vec![positions.len(), d], pe)?);
    b.add(&e, &pe)
}

/// `x + dropout(f(x))`.
fn residual<'p, B: Backend<'p>>(b: &mut B, x: &B::Value, fx: &B::Value, p: f32) -> Result<B::Value> {
    let fx = b.dropout(fx, p);
    b.add(x, &fx)
}

impl EncoderParams {
    pub fn params(&self) -> Vec<&Param> {
        let mut out = vec![&self.embed];
        for l in &self.layers {
            out.extend(l.ln_attn.params());
            out.extend(l.attn.params());
            out.extend(l.ln_ff.params());
            out.extend(l.ff.params());
        }
        out.extend(self.ln_out.params());
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut out = vec![&mut self.embed];
        for l in &mut self.layers {
            out.extend(l.ln_attn.params_mut());
            out.extend(l.attn.params_mut());
            out.extend(l.ln_ff.params_mut());
            out.extend(l.ff.params_mut());
        }
        out.extend(self.ln_out.params_mut());
        out
    }

    pub fn set_frozen(&mut self, frozen: bool) {
        for p in self.params_mut() {
            p.frozen = frozen;
        }
    }

    pub fn is_frozen(&self) -> bool {
        self.params().iter().all(|p| p.frozen)
    }

    /// Packed encoder output, one row per query row of `batch`.
    pub fn forward<'p, B: Backend<'p>>(&'p self, b: &mut B, batch: &EncoderBatch) -> Result<B::Value> {
        let c = &self.config;
        if batch.tokens.iter().any(|&t| t as usize >= c.vocab_size) {
            return Err(Error::Vocab("token id outside the model vocabulary".into()));
        }
        let mut x = embed_tokens(
            b,
            &self.embed,
            &self.positions,
            &batch.tokens,
            &batch.positions,
            c.d_model,
        )?;
        x = b.dropout(&x, c.dropout);
        for layer in &self.layers {
            let h = layer.ln_attn.apply(b, &x)?;
            let a = layer.attn.apply(b, &h, &h, c.n_heads, &batch.segments)?;
            x = residual(b, &x, &a, c.dropout)?;
            let h = layer.ln_ff.apply(b, &x)?;
            let f = layer.ff.apply(b, &h)?;
            x = residual(b, &x, &f, c.dropout)?;
        }
        self.ln_out.apply(b, &x)
    }
}

impl DecoderParams {
    pub fn params(&self) -> Vec<&Param> {
        let mut out = vec![&self.embed];
        for l in &self.layers {
            out.extend(l.ln_self.params());
            out.extend(l.self_attn.params());
            out.extend(l.ln_cross.params());
            out.extend(l.cross_attn.params());
            out.extend(l.ln_ff.params());
            out.extend(l.ff.params());
        }
        out.extend(self.ln_out.params());
        out.push(&self.out_w);
        out.push(&self.out_b);
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut out = vec![&mut self.embed];
        for l in &mut self.layers {
            out.extend(l.ln_self.params_mut());
            out.extend(l.self_attn.params_mut());
            out.extend(l.ln_cross.params_mut());
            out.extend(l.cross_attn.params_mut());
            out.extend(l.ln_ff.params_mut());
            out.extend(l.ff.params_mut());
        }
        out.extend(self.ln_out.params_mut());
        out.push(&mut self.out_w);
        out.push(&mut self.out_b);
        out
    }

    pub fn set_frozen(&mut self, frozen: bool) {
        for p in self.params_mut() {
            p.frozen = frozen;
        }
    }

    pub fn is_frozen(&self) -> bool {
        self.params().iter().all(|p| p.frozen)
    }

    pub(crate) fn positions(&self) -> &[f32] {
        &self.positions
    }

    /// Logits for every row of a teacher-forced decoder batch, attending to
    /// packed encoder `memory` laid out by `layout`.
    pub fn forward<'p, B: Backend<'p>>(
        &'p self,
        b: &mut B,
        batch: &DecoderBatch,
        memory: &B::Value,
        layout: &MemoryLayout,
    ) -> Result<B::Value> {
        let c = &self.config;
        if batch.tokens.iter().any(|&t| t as usize >= c.vocab_size) {
            return Err(Error::Vocab("token id outside the model vocabulary".into()));
        }
        let cross = layout.cross_segments(batch)?;
        let mut x = embed_tokens(
            b,
            &self.embed,
            &self.positions,
            &batch.tokens,
            &batch.positions,
            c.d_model,
        )?;
        x = b.dropout(&x, c.dropout);
        for layer in &self.layers {
            let h = layer.ln_self.apply(b, &x)?;
            let a = layer.self_attn.apply(b, &h, &h, c.n_heads, &batch.segments)?;
            x = residual(b, &x, &a, c.dropout)?;
            let h = layer.ln_cross.apply(b, &x)?;
            let a = layer.cross_attn.apply(b, &h, memory, c.n_heads, &cross)?;
            x = residual(b, &x, &a, c.dropout)?;
            let h = layer.ln_ff.apply(b, &x)?;
            let f = layer.ff.apply(b, &h)?;
            x = residual(b, &x, &f, c.dropout)?;
        }
        let h = self.ln_out.apply(b, &x)?;
        let (w, bias) = (b.param(&self.out_w), b.param(&self.out_b));
        b.linear(&h, &w, &bias)
    }
}

/// Encoder and decoder built from the same config.
pub fn check_pair(enc: &EncoderParams, dec: &DecoderParams) -> Result<()> {
    if enc.config != dec.config {
        return Err(Error::Assembly(format!(
            "encoder config {:?} differs from decoder config {:?}",
            enc.config, dec.config
        )));
    }
    Ok(())
}
