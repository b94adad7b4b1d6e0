//! Time single-word inference: four passes through the pipeline against two
//! through a student built from the same parts.
//!
//! cargo run --release --example latency

mod shared;

use pipeline_distill::distill::assemble_student;
use pipeline_distill::eval::latency_bench;

fn main() -> pipeline_distill::Result<()> {
    let corpus = shared::small_corpus(3)?;
    let (enc, dec) = shared::small_teacher(&corpus, 4)?;
    let p = shared::pipeline(&corpus, &enc, &dec)?;
    let student = assemble_student(enc.clone(), dec.clone())?;
    let scripts = shared::scripts(&corpus)?;
    let requests: Vec<_> = shared::words(&corpus, true)?
        .into_iter()
        .take(200)
        .map(|x| {
            let tgt = *scripts.iter().find(|&&l| l != x.lang).unwrap();
            (x, tgt)
        })
        .collect();
    let t = latency_bench(&p, &student, &corpus.vocab, &requests, 10)?;
    println!("length  words  pipeline_us  student_us");
    for b in &t.buckets {
        println!(
            "{:>6} {:>6} {:>12.1} {:>11.1}",
            b.length, b.words, b.pipeline_us, b.student_us
        );
    }
    println!(
        "weighted: pipeline {:.1} us, student {:.1} us, speedup {:.2}x; passes per word {:.2} vs {:.2}",
        t.pipeline_us, t.student_us, t.speedup, t.pipeline_passes_per_word, t.student_passes_per_word
    );
    Ok(())
}
