use super::pipeline::PassCounter;
use crate::error::{Error, Result};
use crate::seq2seq::{
    check_pair, decode_greedy_batch, encode_batch, DecoderParams, EncodedMatrix, EncoderParams, Frame, TokenId,
    TokenSequence, Vocab,
};

/// The condensed single-stage model: one encoder pass over the source word,
/// one decoder pass into the target script.
#[derive(Clone, Debug)]
pub struct Student {
    pub enc: EncoderParams,
    pub dec: DecoderParams,
}

pub fn assemble_student(enc: EncoderParams, dec: DecoderParams) -> Result<Student> {
    check_pair(&enc, &dec)?;
    Ok(Student { enc, dec })
}

/// Student encodings cover the whole frame, so they line up with teacher
/// encodings of the (longer) pivot word.
pub fn student_encode(enc: &EncoderParams, xs: &[&TokenSequence]) -> Result<Vec<EncodedMatrix>> {
    encode_batch(enc, xs, Frame::Full)
}

impl Student {
    pub fn translate(
        &self,
        vocab: &Vocab,
        x: &TokenSequence,
        tgt_lang: TokenId,
        counter: &PassCounter,
    ) -> Result<TokenSequence> {
        Ok(self.translate_batch(vocab, &[x], &[tgt_lang], counter)?.remove(0))
    }

    pub fn translate_batch(
        &self,
        vocab: &Vocab,
        xs: &[&TokenSequence],
        tgt_langs: &[TokenId],
        counter: &PassCounter,
    ) -> Result<Vec<TokenSequence>> {
        if xs.len() != tgt_langs.len() {
            return Err(Error::Input(format!(
                "{} inputs for {} target languages",
                xs.len(),
                tgt_langs.len()
            )));
        }
        let v = student_encode(&self.enc, xs)?;
        counter.add_encoder(xs.len());
        let refs: Vec<&EncodedMatrix> = v.iter().collect();
        let ys = decode_greedy_batch(&self.dec, vocab, &refs, tgt_langs, usize::MAX)?;
        counter.add_decoder(xs.len());
        Ok(ys)
    }
}
