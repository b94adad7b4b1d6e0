//! Edit counts, character error rate and scoring against several references.
//!
//! cargo run --release --example edit_distance

use pipeline_distill::eval::{cer, edit_counts, min_cer};

fn chars(s: &str) -> Vec<char> {
    s.chars().collect()
}

fn main() -> pipeline_distill::Result<()> {
    for (r, h) in [("no", "know"), ("abc", "abd"), ("kitten", "sitting"), ("same", "same")] {
        let e = edit_counts(&chars(r), &chars(h));
        println!(
            "{r:>7} vs {h:<8} S={} D={} I={} C={}  CER {:.3}",
            e.s,
            e.d,
            e.i,
            e.c,
            cer(&chars(r), &chars(h))?
        );
    }
    let refs = vec!["colour".to_string(), "color".to_string()];
    println!("closest-reference CER of 'colr': {:.3}", min_cer(&refs, "colr")?);
    println!("two empty strings: {}", cer::<char>(&[], &[]).unwrap_err());
    Ok(())
}
