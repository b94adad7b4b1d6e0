//! The reconstruction variant: the finetuned decoder maps a student encoding
//! back to the word it came from, no teacher outputs involved.
//!
//! cargo run --release --example reconstruction

mod shared;

use pipeline_distill::distill::{assemble_student, finetune_decoder_reconstruction, DecoderData, PassCounter};

fn main() -> pipeline_distill::Result<()> {
    let corpus = shared::small_corpus(5)?;
    let v = &corpus.vocab;
    let (tenc, tdec) = shared::small_teacher(&corpus, 15)?;

    let words = shared::words(&corpus, false)?;
    let test = shared::words(&corpus, true)?;
    let mut dec = tdec.clone();
    dec.set_frozen(false);
    let log = finetune_decoder_reconstruction(
        &tenc,
        &mut dec,
        v,
        &DecoderData::Inputs(words),
        &test,
        &shared::hyper(6, 7),
    )?;
    println!(
        "held-out exact reconstruction {:.3} after epoch {}",
        log.best_score, log.best_epoch
    );

    let student = assemble_student(tenc, dec)?;
    let counter = PassCounter::default();
    for x in test.iter().take(5) {
        let y = student.translate(v, x, x.lang, &counter)?;
        println!("{} -> {}", v.decode_word(x), v.decode_word(&y));
    }
    Ok(())
}
