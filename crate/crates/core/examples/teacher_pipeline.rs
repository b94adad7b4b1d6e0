//! Train a small teacher and run words through the two-pass pivot pipeline.
//!
//! cargo run --release --example teacher_pipeline

mod shared;

use pipeline_distill::distill::{run_pipeline, PassCounter};

fn main() -> pipeline_distill::Result<()> {
    let corpus = shared::small_corpus(3)?;
    let v = &corpus.vocab;
    let (enc, dec) = shared::small_teacher(&corpus, 15)?;
    let p = shared::pipeline(&corpus, &enc, &dec)?;
    let scripts = shared::scripts(&corpus)?;

    let counter = PassCounter::default();
    for x in shared::words(&corpus, true)?.iter().take(8) {
        let tgt = *scripts.iter().find(|&&l| l != x.lang).unwrap();
        let (y, trace) = run_pipeline(&p, v, x, tgt, &counter)?;
        println!(
            "{} -> {} -> {}  ({} passes before the second encoding)",
            v.decode_word(x),
            v.decode_word(&trace.x_t),
            v.decode_word(&y),
            trace.passes_before_v2
        );
    }
    println!(
        "{} encoder and {} decoder passes for 8 words",
        counter.encoder(),
        counter.decoder()
    );
    Ok(())
}
