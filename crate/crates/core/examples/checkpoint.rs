//! Save a freshly initialised model, load it back, and watch a flipped byte
//! get caught by the digest.
//!
//! cargo run --release --example checkpoint

use pipeline_distill::cli::{load_checkpoint, save_checkpoint, CheckpointHeader, Role};
use pipeline_distill::seq2seq::{init_model, ModelConfig};
use pipeline_distill::taskgen::{build_corpus, TaskConfig};

fn main() -> pipeline_distill::Result<()> {
    let corpus = build_corpus(
        &TaskConfig {
            words_per_script: 50,
            ..TaskConfig::default()
        },
        1,
    )?;
    let config = ModelConfig::desk_scale(corpus.vocab.len());
    let (enc, dec) = init_model(&config, 9)?;
    let mut params = enc.params();
    params.extend(dec.params());

    let dir = std::env::temp_dir().join("pipeline-distill-checkpoint-example");
    std::fs::create_dir_all(&dir).map_err(|e| pipeline_distill::Error::io(&dir, e))?;
    let path = dir.join("teacher.ckpt");
    let header = CheckpointHeader {
        config,
        vocab: corpus.vocab.clone().into(),
        role: Role::Teacher,
        seed: 9,
        parent: None,
    };
    let digest = save_checkpoint(&path, &header, &params)?;
    println!("saved {} tensors, digest {digest}", params.len());

    let ck = load_checkpoint(&path, &[Role::Teacher])?;
    let same = ck
        .encoder()?
        .params()
        .iter()
        .zip(enc.params())
        .all(|(a, b)| a.value == b.value);
    println!(
        "reloaded: digest matches {}, encoder identical {same}",
        ck.digest == digest
    );

    match load_checkpoint(&path, &[Role::StudentFull]) {
        Err(e) => println!("wrong role: {e}"),
        Ok(_) => println!("wrong role accepted?"),
    }

    let mut bytes = std::fs::read(&path).map_err(|e| pipeline_distill::Error::io(&path, e))?;
    let mid = bytes.len() / 2;
    bytes[mid] ^= 1;
    std::fs::write(&path, &bytes).map_err(|e| pipeline_distill::Error::io(&path, e))?;
    match load_checkpoint(&path, &[Role::Teacher]) {
        Err(e) => println!("corrupted: {e}"),
        Ok(_) => println!("corruption went unnoticed?"),
    }
    std::fs::remove_dir_all(&dir).map_err(|e| pipeline_distill::Error::io(&dir, e))?;
    Ok(())
}
