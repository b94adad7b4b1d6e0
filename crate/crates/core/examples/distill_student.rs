//! Condense the pipeline into one student: align a copy of the encoder with
//! the teacher's pivot encodings, then finetune a copy of the decoder on the
//! pipeline's outputs. Ends with the held-out comparison and the words only
//! the student gets right.
//!
//! cargo run --release --example distill_student

mod shared;

use pipeline_distill::distill::{
    assemble_student, distill_student_encoder, finetune_decoder_general, pivot_pairs, Chain, DecoderData,
};
use pipeline_distill::eval::{build_report, encoder_similarity_report, predict, SimilarityInput, Split};

fn main() -> pipeline_distill::Result<()> {
    let corpus = shared::small_corpus(3)?;
    let v = &corpus.vocab;
    let (tenc, tdec) = shared::small_teacher(&corpus, 30)?;
    let p = shared::pipeline(&corpus, &tenc, &tdec)?;

    // x_t is whatever pivot the teacher itself produces
    let (pairs, _) = pivot_pairs(&p, v, &shared::words(&corpus, false)?)?;
    let (test_pairs, _) = pivot_pairs(&p, v, &shared::words(&corpus, true)?)?;
    let (dev, train) = pairs.split_at(100);

    let mut senc = tenc.clone();
    senc.set_frozen(false);
    let log = distill_student_encoder(&tenc, &mut senc, train, dev, &shared::hyper(20, 3))?;
    println!("encoder alignment: dev similarity {:.4}", log.best_score);
    senc.set_frozen(true);

    let mut sdec = tdec.clone();
    sdec.set_frozen(false);
    let log = finetune_decoder_general(
        &tenc,
        &tdec,
        &senc,
        &mut sdec,
        v,
        &DecoderData::Pairs(train.to_vec()),
        dev,
        &shared::scripts(&corpus)?,
        Chain::Cross,
        &shared::hyper(15, 4),
    )?;
    println!("decoder finetune: dev agreement {:.4}", log.best_score);
    let student = assemble_student(senc.clone(), sdec)?;

    let inputs: Vec<SimilarityInput> = [(Split::Train, dev), (Split::Test, &test_pairs[..])]
        .into_iter()
        .map(|(split, pairs)| SimilarityInput {
            src_lang: "all".into(),
            split,
            pairs: pairs.to_vec(),
        })
        .collect();
    let (similarity, _) = encoder_similarity_report(&tenc, &senc, v, &inputs)?;

    let examples = corpus.chained(true)?;
    let (teacher_out, student_out) = predict(&p, &student, v, &examples)?;
    let (report, _) = build_report(&examples, &teacher_out, &student_out, Some(similarity), None)?;
    let o = &report.overall;
    println!(
        "{} chained test pairs: pipeline {:.3}, student {:.3}, agreement {:.3}",
        o.count, o.teacher_accuracy, o.student_accuracy, o.agreement
    );
    for w in report.wins.student_only.iter().take(5) {
        println!(
            "student only: {} -> {} (pipeline said {})",
            w.source, w.student, w.teacher
        );
    }
    Ok(())
}
