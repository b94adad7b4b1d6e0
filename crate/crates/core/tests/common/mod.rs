#![allow(dead_code)]

use pipeline_distill::distill::{pivot_pairs, train_teacher, HeldOut, PipelineSpec, TrainHyper};
use pipeline_distill::seq2seq::{init_model, DecoderParams, EncoderParams, ModelConfig, TokenSequence};
use pipeline_distill::taskgen::{build_corpus, Corpus, DatasetFormat, TableConfig, TaskConfig, PIVOT};

pub fn tiny_task(ambiguity_rate: f64) -> TaskConfig {
    TaskConfig {
        tables: TableConfig {
            n_scripts: 2,
            alphabet_size: 8,
            ambiguity_rate,
            digraph_rate: 0.3,
        },
        words_per_script: 200,
        len_min: 3,
        len_max: 6,
        ..TaskConfig::default()
    }
}

pub fn tiny_model(vocab_size: usize) -> ModelConfig {
    ModelConfig {
        d_model: 16,
        n_heads: 2,
        n_layers: 1,
        d_ff: 32,
        ..ModelConfig::desk_scale(vocab_size)
    }
}

pub fn hyper(epochs: usize, seed: u64) -> TrainHyper {
    TrainHyper {
        epochs,
        batch_size: 32,
        lr: 3e-3,
        warmup_steps: 20,
        patience: epochs,
        seed,
        ..TrainHyper::default()
    }
}

pub struct Fixture {
    pub corpus: Corpus,
    pub teacher: (EncoderParams, DecoderParams),
}

/// A corpus with a briefly trained teacher, frozen.
pub fn fixture(ambiguity_rate: f64, epochs: usize) -> Fixture {
    let corpus = build_corpus(&tiny_task(ambiguity_rate), 5).unwrap();
    let v = &corpus.vocab;
    let pairs: Vec<_> = corpus
        .train_pairs(DatasetFormat::Bi)
        .unwrap()
        .iter()
        .map(|p| p.encode(v).unwrap())
        .collect();
    let mut teacher = init_model(&tiny_model(v.len()), 1).unwrap();
    let dev: Vec<HeldOut> = pairs
        .iter()
        .take(40)
        .map(|(x, y)| HeldOut {
            x: x.clone(),
            tgt_lang: y.lang,
            accept: vec![y.ids.clone()],
        })
        .collect();
    train_teacher(&mut teacher, &pairs, &dev, v, &hyper(epochs, 2)).unwrap();
    teacher.0.set_frozen(true);
    teacher.1.set_frozen(true);
    Fixture { corpus, teacher }
}

impl Fixture {
    pub fn words(&self, test: bool) -> Vec<TokenSequence> {
        let v = &self.corpus.vocab;
        self.corpus
            .script_names()
            .flat_map(|s| {
                let l = v.lang(s).unwrap();
                self.corpus
                    .words(s, test)
                    .unwrap()
                    .iter()
                    .map(move |w| v.encode_word(w, l).unwrap())
            })
            .collect()
    }

    pub fn pipeline(&self) -> PipelineSpec<'_> {
        let v = &self.corpus.vocab;
        PipelineSpec::shared(&self.teacher.0, &self.teacher.1, v.lang(PIVOT).unwrap())
    }

    /// `(x_s, x_t)` with the teacher's pivot as `x_t`.
    pub fn relabeled(&self, test: bool) -> Vec<(TokenSequence, TokenSequence)> {
        pivot_pairs(&self.pipeline(), &self.corpus.vocab, &self.words(test))
            .unwrap()
            .0
    }

    pub fn scripts(&self) -> Vec<u32> {
        let v = &self.corpus.vocab;
        self.corpus.script_names().map(|s| v.lang(s).unwrap()).collect()
    }
}

pub fn bits(params: &[&pipeline_distill::tensor::Param]) -> Vec<Vec<u32>> {
    params
        .iter()
        .map(|p| p.value.data().iter().map(|x| x.to_bits()).collect())
        .collect()
}
