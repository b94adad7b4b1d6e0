use super::student::student_encode;
use super::teacher::INFER_BATCH;
use super::train::{run_epochs, TrainHyper, TrainLog};
use crate::error::{Error, Result};
use crate::seq2seq::{encode_batch, EncodedMatrix, EncoderBatch, EncoderParams, Frame, TokenSequence};
use crate::tensor::{kernels, ops, Tape, Var};

/// Norm below which an encoding is treated as degenerate.
const DEGENERATE: f32 = 1e-12;

/// Teacher encodings `v_2` of pivot words, batched.
pub fn teacher_encodings(enc: &EncoderParams, pivots: &[&TokenSequence]) -> Result<Vec<EncodedMatrix>> {
    let mut out = Vec::with_capacity(pivots.len());
    for c in pivots.chunks(INFER_BATCH) {
        out.extend(encode_batch(enc, c, Frame::Own)?);
    }
    Ok(out)
}

/// Student encodings `v'_2` of source words, batched.
pub fn student_encodings(enc: &EncoderParams, xs: &[&TokenSequence]) -> Result<Vec<EncodedMatrix>> {
    let mut out = Vec::with_capacity(xs.len());
    for c in xs.chunks(INFER_BATCH) {
        out.extend(student_encode(enc, c)?);
    }
    Ok(out)
}

/// Cosine between the teacher matrix and the student matrix re-masked to the
/// teacher's valid rows. `None` when either side is degenerate.
pub fn aligned_similarity(teacher: &EncodedMatrix, student: &EncodedMatrix) -> Result<Option<f64>> {
    let s = student.with_mask(teacher.mask())?;
    let (u, v) = (teacher.flatten_masked(), s.flatten_masked());
    if kernels::norm(u.data()) < DEGENERATE || kernels::norm(v.data()) < DEGENERATE {
        return Ok(None);
    }
    Ok(Some(ops::cosine_similarity(&u, &v)? as f64))
}

/// Mean over words of `1 − cos`, recorded on `tape`. `packed` is the
/// student encoder output for `batch` (full frame). Returns the loss (if any
/// word survived) and the number of degenerate words skipped.
pub fn alignment_loss(
    tape: &mut Tape<'_>,
    packed: Var,
    batch: &EncoderBatch,
    targets: &[&EncodedMatrix],
) -> Result<(Option<Var>, usize)> {
    if targets.len() != batch.segments.len() {
        return Err(Error::Shape(format!(
            "{} targets for {} encoded words",
            targets.len(),
            batch.segments.len()
        )));
    }
    let mut terms = Vec::with_capacity(targets.len());
    let mut skipped = 0;
    for (seg, t) in batch.segments.iter().zip(targets) {
        let n = t.valid_len();
        if n > seg.q_len {
            return Err(Error::Shape(format!(
                "teacher encoding has {n} rows, student frame {}",
                seg.q_len
            )));
        }
        let rows = tape.slice_rows(packed, seg.q_start, n)?;
        let tv = kernels::norm(t.valid_rows());
        if tv < DEGENERATE || kernels::norm(tape.value(rows).data()) < DEGENERATE {
            skipped += 1;
            continue;
        }
        let d = t.d_model();
        let target = tape.constant(crate::tensor::Tensor::new(vec![n, d], t.valid_rows().to_vec())?);
        let cos = tape.cosine_similarity(rows, target)?;
        terms.push(tape.affine(cos, -1.0, 1.0));
    }
    if terms.is_empty() {
        return Ok((None, skipped));
    }
    Ok((Some(tape.mean(&terms)?), skipped))
}

/// Mean aligned similarity over pairs, skipping degenerate words.
pub fn mean_similarity(
    teacher: &[EncodedMatrix],
    student_enc: &EncoderParams,
    sources: &[&TokenSequence],
) -> Result<f64> {
    let s = student_encodings(student_enc, sources)?;
    let sims: Vec<f64> = teacher
        .iter()
        .zip(&s)
        .map(|(t, s)| aligned_similarity(t, s))
        .filter_map(|r| r.transpose())
        .collect::<Result<_>>()?;
    if sims.is_empty() {
        return Ok(0.0);
    }
    Ok(sims.iter().sum::<f64>() / sims.len() as f64)
}

/// Aligns the student encoder's full-frame output on `x_s` with the frozen
/// teacher's encoding of `x_t`, for `(x_s, x_t)` pairs. Only the student is
/// updated; early stopping follows mean `dev` similarity.
pub fn distill_student_encoder(
    teacher_enc: &EncoderParams,
    student_enc: &mut EncoderParams,
    pairs: &[(TokenSequence, TokenSequence)],
    dev: &[(TokenSequence, TokenSequence)],
    hyper: &TrainHyper,
) -> Result<TrainLog> {
    if !teacher_enc.is_frozen() {
        return Err(Error::Contract(
            "teacher encoder must be frozen before distillation".into(),
        ));
    }
    if student_enc.config != teacher_enc.config {
        return Err(Error::Contract("student and teacher encoders differ in shape".into()));
    }
    let targets = teacher_encodings(teacher_enc, &pairs.iter().map(|p| &p.1).collect::<Vec<_>>())?;
    let dev_targets = teacher_encodings(teacher_enc, &dev.iter().map(|p| &p.1).collect::<Vec<_>>())?;
    let dev_src: Vec<&TokenSequence> = dev.iter().map(|p| &p.0).collect();
    let max_len = student_enc.config.max_len;
    let mut skipped = 0;
    let mut log = run_epochs(
        student_enc,
        hyper,
        pairs.len(),
        |m, _, idx, r| {
            let xs: Vec<&TokenSequence> = idx.iter().map(|&i| &pairs[i].0).collect();
            let ts: Vec<&EncodedMatrix> = idx.iter().map(|&i| &targets[i]).collect();
            let batch = EncoderBatch::new(&xs, max_len, Frame::Full)?;
            let mut tape = r.map_or_else(Tape::new, Tape::with_dropout);
            let packed = m.forward(&mut tape, &batch)?;
            let (loss, skip) = alignment_loss(&mut tape, packed, &batch, &ts)?;
            skipped += skip;
            let Some(loss) = loss else { return Ok(None) };
            let l = tape.value(loss).data()[0];
            Ok(Some((l, tape.backward(loss)?)))
        },
        |m| {
            if dev.is_empty() {
                return Ok(0.0);
            }
            mean_similarity(&dev_targets, m, &dev_src)
        },
    )?;
    log.skipped = skipped;
    Ok(log)
}
