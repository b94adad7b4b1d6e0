//! Generate a small pivot-chained corpus and look at what it contains.
//!
//! cargo run --release --example corpus

use pipeline_distill::taskgen::{build_corpus, DatasetFormat, TableConfig, TaskConfig};

fn main() -> pipeline_distill::Result<()> {
    let config = TaskConfig {
        tables: TableConfig {
            n_scripts: 3,
            ambiguity_rate: 0.3,
            ..TableConfig::default()
        },
        words_per_script: 500,
        ..TaskConfig::default()
    };
    let corpus = build_corpus(&config, 42)?;
    println!("scripts: {:?}", corpus.script_names().collect::<Vec<_>>());
    println!("vocabulary: {} tokens", corpus.vocab.len());

    for format in [
        DatasetFormat::UniToPivot,
        DatasetFormat::UniFromPivot,
        DatasetFormat::Bi,
    ] {
        let pairs = corpus.train_pairs(format)?;
        println!("{format:?}: {} train pairs, first {:?}", pairs.len(), pairs[0]);
    }

    // a chained example lists every target rendering the ground truth allows
    for ex in corpus
        .chained(true)?
        .iter()
        .filter(|e| e.allowed_targets.len() > 1)
        .take(5)
    {
        println!(
            "{}:{} -> {} -> {}:{} (allowed {:?})",
            ex.src_lang, ex.source, ex.pivot, ex.tgt_lang, ex.target, ex.allowed_targets
        );
    }
    Ok(())
}
