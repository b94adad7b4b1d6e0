//! Small corpus and teacher shared by the training examples.
#![allow(dead_code)]

use pipeline_distill::cli::single_hop_items;
use pipeline_distill::distill::{single_hop_accuracy, train_teacher, PipelineSpec, TrainHyper};
use pipeline_distill::seq2seq::{init_model, DecoderParams, EncoderParams, ModelConfig, TokenId, TokenSequence};
use pipeline_distill::taskgen::{build_corpus, Corpus, DatasetFormat, TableConfig, TaskConfig, PIVOT};
use pipeline_distill::Result;

pub fn small_corpus(seed: u64) -> Result<Corpus> {
    let config = TaskConfig {
        tables: TableConfig {
            n_scripts: 2,
            alphabet_size: 10,
            ambiguity_rate: 0.3,
            ..TableConfig::default()
        },
        words_per_script: 600,
        len_max: 7,
        ..TaskConfig::default()
    };
    build_corpus(&config, seed)
}

pub fn hyper(epochs: usize, seed: u64) -> TrainHyper {
    TrainHyper {
        epochs,
        batch_size: 32,
        lr: 3e-3,
        warmup_steps: 50,
        patience: epochs,
        dropout: false,
        seed,
        ..TrainHyper::default()
    }
}

/// Trains a frozen teacher on both directions and reports its held-out
/// single-hop exact match.
pub fn small_teacher(corpus: &Corpus, epochs: usize) -> Result<(EncoderParams, DecoderParams)> {
    let v = &corpus.vocab;
    let pairs: Vec<_> = corpus
        .train_pairs(DatasetFormat::Bi)?
        .iter()
        .map(|p| p.encode(v))
        .collect::<Result<_>>()?;
    let test = single_hop_items(corpus, &corpus.test_pairs(DatasetFormat::Bi)?)?;
    let config = ModelConfig {
        d_model: 32,
        n_heads: 2,
        n_layers: 1,
        d_ff: 64,
        ..ModelConfig::desk_scale(v.len())
    };
    let mut model = init_model(&config, 1)?;
    train_teacher(&mut model, &pairs, &test[..200], v, &hyper(epochs, 2))?;
    println!(
        "teacher: held-out single-hop exact match {:.3}",
        single_hop_accuracy(&model.0, &model.1, v, &test)?
    );
    model.0.set_frozen(true);
    model.1.set_frozen(true);
    Ok(model)
}

pub fn pipeline<'a>(corpus: &Corpus, enc: &'a EncoderParams, dec: &'a DecoderParams) -> Result<PipelineSpec<'a>> {
    Ok(PipelineSpec::shared(enc, dec, corpus.vocab.lang(PIVOT)?))
}

pub fn words(corpus: &Corpus, test: bool) -> Result<Vec<TokenSequence>> {
    let v = &corpus.vocab;
    let mut out = Vec::new();
    for s in corpus.script_names() {
        let l = v.lang(s)?;
        for w in corpus.words(s, test)? {
            out.push(v.encode_word(w, l)?);
        }
    }
    Ok(out)
}

pub fn scripts(corpus: &Corpus) -> Result<Vec<TokenId>> {
    corpus.script_names().map(|s| corpus.vocab.lang(s)).collect()
}
