use serde::{Deserialize, Serialize};

use super::dataset::{
    build_vocab, chained_ground_truth, make_dataset, ChainedExample, DatasetFormat, ScriptWords, TransliterationPair,
};
use super::tables::{build_tables, PivotTable, ScriptSpec, TableConfig};
use super::words::{sample_words_fitting, split_words};
use crate::error::{Error, Result};
use crate::rng;
use crate::seq2seq::Vocab;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TaskConfig {
    pub tables: TableConfig,
    pub words_per_script: usize,
    pub len_min: usize,
    pub len_max: usize,
    pub test_fraction: f64,
    /// Model frame; pivot renderings must fit `max_len - 2` content tokens.
    pub max_len: usize,
}

impl Default for TaskConfig {
    fn default() -> Self {
        Self {
            tables: TableConfig::default(),
            words_per_script: 8000,
            len_min: 3,
            len_max: 10,
            test_fraction: 0.1,
            max_len: 16,
        }
    }
}

/// Tables, vocabulary and the per-script train/test word split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub seed: u64,
    pub config: TaskConfig,
    pub scripts: Vec<ScriptSpec>,
    pub tables: PivotTable,
    pub vocab: Vocab,
    pub train: Vec<ScriptWords>,
    pub test: Vec<ScriptWords>,
}

const TABLES: u64 = 0;
const WORDS: u64 = 100;
const SPLIT: u64 = 200;
const RENDER_TRAIN: u64 = 300;
const RENDER_TEST: u64 = 301;

pub fn build_corpus(config: &TaskConfig, seed: u64) -> Result<Corpus> {
    if config.len_max + 2 > config.max_len {
        return Err(Error::Input(format!(
            "words of length {} do not fit L_max {}",
            config.len_max, config.max_len
        )));
    }
    let (scripts, tables) = build_tables(rng::derive(seed, TABLES), &config.tables)?;
    let vocab = build_vocab(&scripts)?;
    let mut train = Vec::with_capacity(scripts.len());
    let mut test = Vec::with_capacity(scripts.len());
    for (i, s) in scripts.iter().enumerate() {
        let words = sample_words_fitting(
            config.words_per_script,
            config.len_min,
            config.len_max,
            s,
            &tables,
            config.max_len - 2,
            rng::derive(seed, WORDS + i as u64),
        )?;
        let (tr, te) = split_words(&words, config.test_fraction, rng::derive(seed, SPLIT + i as u64))?;
        train.push(ScriptWords {
            script: s.name.clone(),
            words: tr,
        });
        test.push(ScriptWords {
            script: s.name.clone(),
            words: te,
        });
    }
    Ok(Corpus {
        seed,
        config: *config,
        scripts,
        tables,
        vocab,
        train,
        test,
    })
}

impl Corpus {
    pub fn train_pairs(&self, format: DatasetFormat) -> Result<Vec<TransliterationPair>> {
        make_dataset(format, &self.tables, &self.train, rng::derive(self.seed, RENDER_TRAIN))
    }

    pub fn test_pairs(&self, format: DatasetFormat) -> Result<Vec<TransliterationPair>> {
        make_dataset(format, &self.tables, &self.test, rng::derive(self.seed, RENDER_TEST))
    }

    pub fn script_names(&self) -> impl Iterator<Item = &str> {
        self.scripts.iter().map(|s| s.name.as_str())
    }

    pub fn words(&self, script: &str, test: bool) -> Result<&[String]> {
        let set = if test { &self.test } else { &self.train };
        set.iter()
            .find(|w| w.script == script)
            .map(|w| w.words.as_slice())
            .ok_or_else(|| Error::Input(format!("unknown script `{script}`")))
    }

    /// Every word of the split paired with every other script as target.
    pub fn chained(&self, test: bool) -> Result<Vec<ChainedExample>> {
        let set = if test { &self.test } else { &self.train };
        let mut out = Vec::new();
        for sw in set {
            for w in &sw.words {
                for tgt in self.script_names().filter(|&t| t != sw.script) {
                    out.push(chained_ground_truth(w, &sw.script, tgt, &self.tables)?);
                }
            }
        }
        Ok(out)
    }

    /// Every word of the split with its own script as target.
    pub fn mirrored(&self, test: bool) -> Result<Vec<ChainedExample>> {
        let set = if test { &self.test } else { &self.train };
        set.iter()
            .flat_map(|sw| {
                sw.words
                    .iter()
                    .map(move |w| chained_ground_truth(w, &sw.script, &sw.script, &self.tables))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> TaskConfig {
        TaskConfig {
            words_per_script: 300,
            ..TaskConfig::default()
        }
    }

    #[test]
    fn corpus_is_deterministic() {
        let a = build_corpus(&small(), 42).unwrap();
        let b = build_corpus(&small(), 42).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.train, build_corpus(&small(), 43).unwrap().train);
    }

    #[test]
    fn splits_are_disjoint_and_pivots_fit() {
        let c = build_corpus(&small(), 1).unwrap();
        for (tr, te) in c.train.iter().zip(&c.test) {
            assert_eq!(tr.words.len() + te.words.len(), 300);
            assert_eq!(te.words.len(), 30);
            assert!(te.words.iter().all(|w| !tr.words.contains(w)));
        }
        for p in c.train_pairs(DatasetFormat::Bi).unwrap() {
            assert!(p.tgt.chars().count() <= 14 && p.src.chars().count() <= 14);
        }
    }

    #[test]
    fn oversized_words_rejected() {
        let cfg = TaskConfig { len_max: 15, ..small() };
        assert!(matches!(build_corpus(&cfg, 0), Err(Error::Input(_))));
    }
}
