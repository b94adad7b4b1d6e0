use std::cell::Cell;

use crate::error::{Error, Result};
use crate::seq2seq::{
    decode_greedy_batch, encode_batch, DecoderParams, EncodedMatrix, EncoderParams, Frame, TokenId, TokenSequence,
    Vocab,
};

/// Counts encoder and decoder passes, one per word per model call.
#[derive(Debug, Default)]
pub struct PassCounter {
    encoder: Cell<u64>,
    decoder: Cell<u64>,
}

impl PassCounter {
    pub fn encoder(&self) -> u64 {
        self.encoder.get()
    }

    pub fn decoder(&self) -> u64 {
        self.decoder.get()
    }

    pub fn total(&self) -> u64 {
        self.encoder() + self.decoder()
    }

    pub fn reset(&self) {
        self.encoder.set(0);
        self.decoder.set(0);
    }

    pub(crate) fn add_encoder(&self, n: usize) {
        self.encoder.set(self.encoder.get() + n as u64);
    }

    pub(crate) fn add_decoder(&self, n: usize) {
        self.decoder.set(self.decoder.get() + n as u64);
    }
}

/// One encoder–decoder model of a pipeline.
#[derive(Clone, Copy, Debug)]
pub struct Stage<'a> {
    pub enc: &'a EncoderParams,
    pub dec: &'a DecoderParams,
}

/// Two chained stages: the first writes the pivot language, the second the
/// requested target language.
#[derive(Clone, Debug)]
pub struct PipelineSpec<'a> {
    pub stages: Vec<Stage<'a>>,
    pub pivot: TokenId,
}

impl<'a> PipelineSpec<'a> {
    pub fn new(first: Stage<'a>, second: Stage<'a>, pivot: TokenId) -> Self {
        Self {
            stages: vec![first, second],
            pivot,
        }
    }

    /// Both stages run the same multilingual model.
    pub fn shared(enc: &'a EncoderParams, dec: &'a DecoderParams, pivot: TokenId) -> Self {
        let s = Stage { enc, dec };
        Self::new(s, s, pivot)
    }

    fn check(&self) -> Result<()> {
        if self.stages.len() != 2 {
            return Err(Error::Pipeline(format!(
                "{} stages; exactly two are supported",
                self.stages.len()
            )));
        }
        Ok(())
    }
}

/// Intermediate values of one pipeline run.
#[derive(Clone, Debug, PartialEq)]
pub struct Trace {
    pub v1: EncodedMatrix,
    pub x_t: TokenSequence,
    pub v2: EncodedMatrix,
    /// Passes completed before `v2` was available.
    pub passes_before_v2: u64,
}

/// Runs `x_s` through both stages. An empty intermediate word is an error.
pub fn run_pipeline(
    p: &PipelineSpec,
    vocab: &Vocab,
    x_s: &TokenSequence,
    tgt_lang: TokenId,
    counter: &PassCounter,
) -> Result<(TokenSequence, Trace)> {
    p.check()?;
    let before = counter.total();
    let (s1, s2) = (p.stages[0], p.stages[1]);
    let v1 = encode_batch(s1.enc, &[x_s], Frame::Own)?.remove(0);
    counter.add_encoder(1);
    let x_t = decode_greedy_batch(s1.dec, vocab, &[&v1], &[p.pivot], usize::MAX)?.remove(0);
    counter.add_decoder(1);
    if x_t.is_empty() {
        return Err(Error::Pipeline("first stage produced an empty pivot word".into()));
    }
    let v2 = encode_batch(s2.enc, &[&x_t], Frame::Own)?.remove(0);
    counter.add_encoder(1);
    let passes_before_v2 = counter.total() - before;
    let y = decode_greedy_batch(s2.dec, vocab, &[&v2], &[tgt_lang], usize::MAX)?.remove(0);
    counter.add_decoder(1);
    Ok((
        y,
        Trace {
            v1,
            x_t,
            v2,
            passes_before_v2,
        },
    ))
}

/// Batched first stage: pivot renderings of `xs`.
pub fn to_pivot_batch(
    p: &PipelineSpec,
    vocab: &Vocab,
    xs: &[&TokenSequence],
    counter: &PassCounter,
) -> Result<Vec<TokenSequence>> {
    p.check()?;
    let s = p.stages[0];
    let v1 = encode_batch(s.enc, xs, Frame::Own)?;
    counter.add_encoder(xs.len());
    let refs: Vec<&EncodedMatrix> = v1.iter().collect();
    let out = decode_greedy_batch(s.dec, vocab, &refs, &vec![p.pivot; xs.len()], usize::MAX)?;
    counter.add_decoder(xs.len());
    Ok(out)
}

/// Batched second stage from pivot words. Empty pivots yield empty outputs.
pub fn from_pivot_batch(
    p: &PipelineSpec,
    vocab: &Vocab,
    pivots: &[&TokenSequence],
    tgt_langs: &[TokenId],
    counter: &PassCounter,
) -> Result<Vec<TokenSequence>> {
    p.check()?;
    let s = p.stages[1];
    let mut out: Vec<Option<TokenSequence>> = vec![None; pivots.len()];
    let live: Vec<usize> = (0..pivots.len()).filter(|&i| !pivots[i].is_empty()).collect();
    if !live.is_empty() {
        let xs: Vec<&TokenSequence> = live.iter().map(|&i| pivots[i]).collect();
        let v2 = encode_batch(s.enc, &xs, Frame::Own)?;
        counter.add_encoder(xs.len());
        let refs: Vec<&EncodedMatrix> = v2.iter().collect();
        let langs: Vec<TokenId> = live.iter().map(|&i| tgt_langs[i]).collect();
        let ys = decode_greedy_batch(s.dec, vocab, &refs, &langs, usize::MAX)?;
        counter.add_decoder(xs.len());
        for (i, y) in live.into_iter().zip(ys) {
            out[i] = Some(y);
        }
    }
    out.into_iter()
        .zip(tgt_langs)
        .map(|(y, &l)| match y {
            Some(y) => Ok(y),
            None => TokenSequence::new(Vec::new(), l, vocab),
        })
        .collect()
}

/// Batched full pipeline; returns `(outputs, pivots)`.
pub fn run_pipeline_batch(
    p: &PipelineSpec,
    vocab: &Vocab,
    xs: &[&TokenSequence],
    tgt_langs: &[TokenId],
    counter: &PassCounter,
) -> Result<(Vec<TokenSequence>, Vec<TokenSequence>)> {
    if xs.len() != tgt_langs.len() {
        return Err(Error::Input(format!(
            "{} inputs for {} target languages",
            xs.len(),
            tgt_langs.len()
        )));
    }
    let pivots = to_pivot_batch(p, vocab, xs, counter)?;
    let refs: Vec<&TokenSequence> = pivots.iter().collect();
    let ys = from_pivot_batch(p, vocab, &refs, tgt_langs, counter)?;
    Ok((ys, pivots))
}

/// Pairs each source word with the pipeline's first-stage pivot for it.
/// Words whose pivot comes out empty are dropped and counted.
pub fn pivot_pairs(
    p: &PipelineSpec,
    vocab: &Vocab,
    xs: &[TokenSequence],
) -> Result<(Vec<(TokenSequence, TokenSequence)>, usize)> {
    let counter = PassCounter::default();
    let mut out = Vec::with_capacity(xs.len());
    let mut dropped = 0;
    for chunk in xs.chunks(super::INFER_BATCH) {
        let refs: Vec<&TokenSequence> = chunk.iter().collect();
        for (x, t) in chunk.iter().zip(to_pivot_batch(p, vocab, &refs, &counter)?) {
            if t.is_empty() {
                dropped += 1;
            } else {
                out.push((x.clone(), t));
            }
        }
    }
    Ok((out, dropped))
}
