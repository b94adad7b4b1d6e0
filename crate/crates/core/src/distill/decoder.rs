use rand::Rng;

use super::encoder::{student_encodings, teacher_encodings};
use super::teacher::INFER_BATCH;
use super::train::{run_epochs, TrainHyper, TrainLog};
use crate::error::{Error, Result};
use crate::rng;
use crate::seq2seq::{
    decode_greedy_batch, DecoderBatch, DecoderParams, EncodedMatrix, EncoderParams, MemoryLayout, TokenId,
    TokenSequence, Vocab, PAD,
};
use crate::tensor::{Tape, Tensor};

/// Which target scripts the finetuned decoder is trained to produce.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Chain {
    /// Every script other than the source's.
    Cross,
    /// The source's own script (round trip through the pivot).
    Mirror,
}

impl Chain {
    pub fn targets(self, src: TokenId, scripts: &[TokenId]) -> Vec<TokenId> {
        match self {
            Chain::Cross => scripts.iter().copied().filter(|&l| l != src).collect(),
            Chain::Mirror => vec![src],
        }
    }
}

/// Training data handed to a decoder-finetuning algorithm.
#[derive(Clone, Debug)]
pub enum DecoderData {
    /// `(x_s, x_t)` source and pivot words.
    Pairs(Vec<(TokenSequence, TokenSequence)>),
    /// Source words only.
    Inputs(Vec<TokenSequence>),
}

/// Teacher pipeline outputs `y_t = g_φt(f_θt(x_t))` for each requested
/// target language of each pivot word. Empty outputs are `None`.
pub fn teacher_outputs(
    teacher_enc: &EncoderParams,
    teacher_dec: &DecoderParams,
    vocab: &Vocab,
    pivots: &[&TokenSequence],
    langs: &[Vec<TokenId>],
) -> Result<Vec<Vec<Option<TokenSequence>>>> {
    let v2 = teacher_encodings(teacher_enc, pivots)?;
    let mut flat_ctx = Vec::new();
    let mut flat_lang = Vec::new();
    for (i, ls) in langs.iter().enumerate() {
        for &l in ls {
            flat_ctx.push(&v2[i]);
            flat_lang.push(l);
        }
    }
    let mut ys = Vec::with_capacity(flat_ctx.len());
    for (c, l) in flat_ctx.chunks(INFER_BATCH).zip(flat_lang.chunks(INFER_BATCH)) {
        ys.extend(decode_greedy_batch(teacher_dec, vocab, c, l, usize::MAX)?);
    }
    let mut ys = ys.into_iter();
    Ok(langs
        .iter()
        .map(|ls| ls.iter().map(|_| ys.next().filter(|y| !y.is_empty())).collect())
        .collect())
}

/// Teacher-forced cross-entropy of `dec` on `(memory, target)` items.
pub fn decoder_loss<'p>(
    tape: &mut Tape<'p>,
    dec: &'p DecoderParams,
    memories: &[&EncodedMatrix],
    targets: &[&TokenSequence],
) -> Result<crate::tensor::Var> {
    let db = DecoderBatch::teacher_forcing(targets, dec.config.max_len)?;
    let (mem, layout) = MemoryLayout::pack(memories)?;
    let mem = tape.constant(Tensor::new(vec![layout.rows(), dec.config.d_model], mem)?);
    let logits = dec.forward(tape, &db, &mem, &layout)?;
    tape.cross_entropy(logits, &db.targets, PAD)
}

/// Shared loop: item `i` has memory `memories[i]` and one or more candidate
/// targets, of which one is drawn per epoch.
fn train_decoder(
    dec: &mut DecoderParams,
    memories: &[EncodedMatrix],
    candidates: &[Vec<TokenSequence>],
    mut dev: impl FnMut(&DecoderParams) -> Result<f64>,
    hyper: &TrainHyper,
) -> Result<TrainLog> {
    let live: Vec<usize> = (0..candidates.len()).filter(|&i| !candidates[i].is_empty()).collect();
    let pick_seed = rng::derive(hyper.seed, 3);
    run_epochs(
        dec,
        hyper,
        live.len(),
        |m, epoch, idx, r| {
            let mut mems = Vec::with_capacity(idx.len());
            let mut tgts = Vec::with_capacity(idx.len());
            for &j in idx {
                let i = live[j];
                let c = &candidates[i];
                let k = if c.len() == 1 {
                    0
                } else {
                    rng::stream(rng::derive(pick_seed, epoch as u64), i as u64).gen_range(0..c.len())
                };
                mems.push(&memories[i]);
                tgts.push(&c[k]);
            }
            let mut tape = r.map_or_else(Tape::new, Tape::with_dropout);
            let loss = decoder_loss(&mut tape, m, &mems, &tgts)?;
            let l = tape.value(loss).data()[0];
            Ok(Some((l, tape.backward(loss)?)))
        },
        |m| dev(m),
    )
}

/// Fraction of `(memory, expected)` items the decoder reproduces greedily.
pub fn agreement(
    dec: &DecoderParams,
    vocab: &Vocab,
    memories: &[&EncodedMatrix],
    expected: &[&TokenSequence],
) -> Result<f64> {
    if memories.is_empty() {
        return Ok(0.0);
    }
    let langs: Vec<TokenId> = expected.iter().map(|y| y.lang).collect();
    let mut hits = 0;
    for ((m, l), e) in memories
        .chunks(INFER_BATCH)
        .zip(langs.chunks(INFER_BATCH))
        .zip(expected.chunks(INFER_BATCH))
    {
        let ys = decode_greedy_batch(dec, vocab, m, l, usize::MAX)?;
        hits += ys.iter().zip(e).filter(|(y, e)| y == *e).count();
    }
    Ok(hits as f64 / memories.len() as f64)
}

fn require_frozen(frozen: bool, what: &str) -> Result<()> {
    if !frozen {
        return Err(Error::Contract(format!("{what} must be frozen")));
    }
    Ok(())
}

/// Fixed training material for the general decoder finetune.
struct GeneralSet {
    memories: Vec<EncodedMatrix>,
    targets: Vec<Vec<TokenSequence>>,
    skipped: usize,
}

fn general_set(
    teacher_enc: &EncoderParams,
    teacher_dec: &DecoderParams,
    student_enc: &EncoderParams,
    vocab: &Vocab,
    pairs: &[(TokenSequence, TokenSequence)],
    chain: Chain,
    scripts: &[TokenId],
) -> Result<GeneralSet> {
    let pivots: Vec<&TokenSequence> = pairs.iter().map(|p| &p.1).collect();
    let langs: Vec<Vec<TokenId>> = pairs.iter().map(|p| chain.targets(p.0.lang, scripts)).collect();
    let ys = teacher_outputs(teacher_enc, teacher_dec, vocab, &pivots, &langs)?;
    let skipped = ys.iter().flatten().filter(|y| y.is_none()).count();
    let targets = ys.into_iter().map(|v| v.into_iter().flatten().collect()).collect();
    let sources: Vec<&TokenSequence> = pairs.iter().map(|p| &p.0).collect();
    Ok(GeneralSet {
        memories: student_encodings(student_enc, &sources)?,
        targets,
        skipped,
    })
}

/// Finetunes `student_dec` (a copy of the teacher decoder) on the frozen
/// student encoder's encodings of `x_s`, against the teacher pipeline's
/// greedy output for the target scripts selected by `chain`. Early stopping
/// follows agreement with the teacher pipeline on `dev`.
#[allow(clippy::too_many_arguments)]
pub fn finetune_decoder_general(
    teacher_enc: &EncoderParams,
    teacher_dec: &DecoderParams,
    student_enc: &EncoderParams,
    student_dec: &mut DecoderParams,
    vocab: &Vocab,
    data: &DecoderData,
    dev: &[(TokenSequence, TokenSequence)],
    scripts: &[TokenId],
    chain: Chain,
    hyper: &TrainHyper,
) -> Result<TrainLog> {
    require_frozen(teacher_enc.is_frozen(), "teacher encoder")?;
    require_frozen(teacher_dec.is_frozen(), "teacher decoder")?;
    require_frozen(student_enc.is_frozen(), "student encoder")?;
    let DecoderData::Pairs(pairs) = data else {
        return Err(Error::Input("general finetuning needs (x_s, x_t) pairs".into()));
    };
    let train = general_set(teacher_enc, teacher_dec, student_enc, vocab, pairs, chain, scripts)?;
    let dev = general_set(teacher_enc, teacher_dec, student_enc, vocab, dev, chain, scripts)?;
    let (dev_mem, dev_tgt): (Vec<&EncodedMatrix>, Vec<&TokenSequence>) = dev
        .memories
        .iter()
        .zip(&dev.targets)
        .flat_map(|(m, ts)| ts.iter().map(move |t| (m, t)))
        .unzip();
    let mut log = train_decoder(
        student_dec,
        &train.memories,
        &train.targets,
        |d| agreement(d, vocab, &dev_mem, &dev_tgt),
        hyper,
    )?;
    log.skipped = train.skipped;
    Ok(log)
}

/// Finetunes `student_dec` to reconstruct each source word from the frozen
/// student encoder's encoding of it, decoding with the word's own language
/// token. Takes source words only. Early stopping follows exact
/// reconstruction of `dev`.
pub fn finetune_decoder_reconstruction(
    student_enc: &EncoderParams,
    student_dec: &mut DecoderParams,
    vocab: &Vocab,
    data: &DecoderData,
    dev: &[TokenSequence],
    hyper: &TrainHyper,
) -> Result<TrainLog> {
    require_frozen(student_enc.is_frozen(), "student encoder")?;
    let DecoderData::Inputs(inputs) = data else {
        return Err(Error::Input(
            "reconstruction finetuning takes source words only, not pairs".into(),
        ));
    };
    let memories = student_encodings(student_enc, &inputs.iter().collect::<Vec<_>>())?;
    let targets: Vec<Vec<TokenSequence>> = inputs.iter().map(|x| vec![x.clone()]).collect();
    let dev_mem = student_encodings(student_enc, &dev.iter().collect::<Vec<_>>())?;
    let dev_mem: Vec<&EncodedMatrix> = dev_mem.iter().collect();
    let dev_tgt: Vec<&TokenSequence> = dev.iter().collect();
    train_decoder(
        student_dec,
        &memories,
        &targets,
        |d| agreement(d, vocab, &dev_mem, &dev_tgt),
        hyper,
    )
}
