use super::train::{run_epochs, TrainHyper, TrainLog};
use crate::error::Result;
use crate::seq2seq::{
    decode_greedy_batch, encode_batch, DecoderBatch, DecoderParams, EncodedMatrix, EncoderBatch, EncoderParams, Frame,
    TokenId, TokenSequence, Vocab, PAD,
};
use crate::tensor::Tape;

/// Words per eager inference batch.
pub const INFER_BATCH: usize = 256;

/// A held-out single-hop example: source, target language and the accepted
/// outputs (sorted).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HeldOut {
    pub x: TokenSequence,
    pub tgt_lang: TokenId,
    pub accept: Vec<Vec<TokenId>>,
}

impl HeldOut {
    pub fn accepts(&self, y: &TokenSequence) -> bool {
        y.lang == self.tgt_lang && self.accept.binary_search(&y.ids).is_ok()
    }
}

/// Greedy outputs of one encoder–decoder for `(x, lang)` requests.
pub fn greedy_outputs(
    enc: &EncoderParams,
    dec: &DecoderParams,
    vocab: &Vocab,
    xs: &[&TokenSequence],
    langs: &[TokenId],
    frame: Frame,
) -> Result<Vec<TokenSequence>> {
    let mut out = Vec::with_capacity(xs.len());
    for (xc, lc) in xs.chunks(INFER_BATCH).zip(langs.chunks(INFER_BATCH)) {
        let v = encode_batch(enc, xc, frame)?;
        let refs: Vec<&EncodedMatrix> = v.iter().collect();
        out.extend(decode_greedy_batch(dec, vocab, &refs, lc, usize::MAX)?);
    }
    Ok(out)
}

/// Fraction of held-out examples whose greedy output is accepted.
pub fn single_hop_accuracy(enc: &EncoderParams, dec: &DecoderParams, vocab: &Vocab, items: &[HeldOut]) -> Result<f64> {
    if items.is_empty() {
        return Ok(0.0);
    }
    let xs: Vec<&TokenSequence> = items.iter().map(|h| &h.x).collect();
    let langs: Vec<TokenId> = items.iter().map(|h| h.tgt_lang).collect();
    let ys = greedy_outputs(enc, dec, vocab, &xs, &langs, Frame::Own)?;
    let hits = items.iter().zip(&ys).filter(|(h, y)| h.accepts(y)).count();
    Ok(hits as f64 / items.len() as f64)
}

/// Mean teacher-forced cross-entropy of `pairs` under `model`, no dropout.
pub fn teacher_loss(enc: &EncoderParams, dec: &DecoderParams, pairs: &[(TokenSequence, TokenSequence)]) -> Result<f32> {
    let mut tape = Tape::new();
    let loss = pair_loss(&mut tape, enc, dec, pairs.iter().map(|(x, y)| (x, y)))?;
    Ok(tape.value(loss).data()[0])
}

fn pair_loss<'p, 'a>(
    tape: &mut Tape<'p>,
    enc: &'p EncoderParams,
    dec: &'p DecoderParams,
    pairs: impl Iterator<Item = (&'a TokenSequence, &'a TokenSequence)>,
) -> Result<crate::tensor::Var> {
    let (xs, ys): (Vec<_>, Vec<_>) = pairs.unzip();
    let eb = EncoderBatch::new(&xs, enc.config.max_len, Frame::Own)?;
    let db = DecoderBatch::teacher_forcing(&ys, dec.config.max_len)?;
    let mem = enc.forward(tape, &eb)?;
    let logits = dec.forward(tape, &db, &mem, &eb.memory_layout())?;
    tape.cross_entropy(logits, &db.targets, PAD)
}

/// Teacher-forced cross-entropy training of one multilingual model on
/// bidirectional pairs. Early stopping follows `dev` single-hop accuracy.
pub fn train_teacher(
    model: &mut (EncoderParams, DecoderParams),
    pairs: &[(TokenSequence, TokenSequence)],
    dev: &[HeldOut],
    vocab: &Vocab,
    hyper: &TrainHyper,
) -> Result<TrainLog> {
    run_epochs(
        model,
        hyper,
        pairs.len(),
        |m, _, idx, r| {
            let mut tape = r.map_or_else(Tape::new, Tape::with_dropout);
            let loss = pair_loss(&mut tape, &m.0, &m.1, idx.iter().map(|&i| (&pairs[i].0, &pairs[i].1)))?;
            let l = tape.value(loss).data()[0];
            Ok(Some((l, tape.backward(loss)?)))
        },
        |m| single_hop_accuracy(&m.0, &m.1, vocab, dev),
    )
}
