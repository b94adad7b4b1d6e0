use std::collections::BTreeSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tables::{PivotTable, ScriptSpec, PIVOT};
use crate::error::{Error, Result};
use crate::rng;
use crate::seq2seq::{TokenSequence, Vocab};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    ToPivot,
    FromPivot,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DatasetFormat {
    UniToPivot,
    UniFromPivot,
    Bi,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TransliterationPair {
    pub src_lang: String,
    pub src: String,
    pub tgt_lang: String,
    pub tgt: String,
    pub direction: Direction,
}

impl TransliterationPair {
    pub fn encode(&self, vocab: &Vocab) -> Result<(TokenSequence, TokenSequence)> {
        let x = vocab.encode_word(&self.src, vocab.lang(&self.src_lang)?)?;
        let y = vocab.encode_word(&self.tgt, vocab.lang(&self.tgt_lang)?)?;
        Ok((x, y))
    }
}

/// Words of one script.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptWords {
    pub script: String,
    pub words: Vec<String>,
}

/// Source word, its canonical pivot and target, and every phonetically
/// valid target rendering.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainedExample {
    pub src_lang: String,
    pub source: String,
    pub pivot: String,
    pub tgt_lang: String,
    pub target: String,
    pub allowed_targets: BTreeSet<String>,
}

/// Vocabulary over all scripts plus the pivot, languages in script order.
pub fn build_vocab(scripts: &[ScriptSpec]) -> Result<Vocab> {
    let mut langs: Vec<&str> = scripts.iter().map(|s| s.name.as_str()).collect();
    langs.push(PIVOT);
    let content: Vec<String> = scripts
        .iter()
        .flat_map(|s| s.alphabet.iter())
        .copied()
        .chain('a'..='z')
        .map(String::from)
        .collect();
    Vocab::new(&langs, &content)
}

/// One pivot rendering per word, each character's variant drawn uniformly.
/// Script `i` draws from stream `i` of `seed`, so renderings do not depend
/// on the dataset format.
pub fn render_words(tables: &PivotTable, words: &[ScriptWords], seed: u64) -> Result<Vec<Vec<String>>> {
    words
        .iter()
        .enumerate()
        .map(|(i, sw)| {
            let mut r = rng::stream(seed, i as u64);
            sw.words
                .iter()
                .map(|w| {
                    w.chars()
                        .map(|c| {
                            let vs = tables.variants(&sw.script, c)?;
                            Ok(vs[r.gen_range(0..vs.len())].as_str())
                        })
                        .collect::<Result<String>>()
                })
                .collect()
        })
        .collect()
}

pub fn make_dataset(
    format: DatasetFormat,
    tables: &PivotTable,
    words: &[ScriptWords],
    seed: u64,
) -> Result<Vec<TransliterationPair>> {
    let pivots = render_words(tables, words, seed)?;
    let pairs = |dir: Direction| {
        words
            .iter()
            .zip(&pivots)
            .flat_map(move |(sw, ps)| {
                sw.words.iter().zip(ps).map(move |(w, p)| match dir {
                    Direction::ToPivot => TransliterationPair {
                        src_lang: sw.script.clone(),
                        src: w.clone(),
                        tgt_lang: PIVOT.into(),
                        tgt: p.clone(),
                        direction: dir,
                    },
                    Direction::FromPivot => TransliterationPair {
                        src_lang: PIVOT.into(),
                        src: p.clone(),
                        tgt_lang: sw.script.clone(),
                        tgt: w.clone(),
                        direction: dir,
                    },
                })
            })
            .collect::<Vec<_>>()
    };
    Ok(match format {
        DatasetFormat::UniToPivot => pairs(Direction::ToPivot),
        DatasetFormat::UniFromPivot => pairs(Direction::FromPivot),
        DatasetFormat::Bi => {
            let mut all = pairs(Direction::ToPivot);
            all.extend(pairs(Direction::FromPivot));
            all
        }
    })
}

pub fn chained_ground_truth(word: &str, src: &str, tgt: &str, tables: &PivotTable) -> Result<ChainedExample> {
    if word.is_empty() {
        return Err(Error::Input("empty source word".into()));
    }
    let pivot = tables.canonical_pivot(word, src)?;
    let target = tables.from_pivot(&pivot, tgt)?;
    let allowed_targets = tables
        .pivot_variants(word, src)?
        .iter()
        .map(|p| tables.from_pivot(p, tgt))
        .collect::<Result<_>>()?;
    Ok(ChainedExample {
        src_lang: src.into(),
        source: word.into(),
        pivot,
        tgt_lang: tgt.into(),
        target,
        allowed_targets,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taskgen::{build_tables, sample_words, TableConfig};
    use proptest::prelude::*;

    fn setup(a: f64) -> (Vec<ScriptSpec>, PivotTable, Vec<ScriptWords>) {
        let cfg = TableConfig {
            ambiguity_rate: a,
            ..TableConfig::default()
        };
        let (scripts, t) = build_tables(11, &cfg).unwrap();
        let words = scripts
            .iter()
            .enumerate()
            .map(|(i, s)| ScriptWords {
                script: s.name.clone(),
                words: sample_words(50, 3, 8, s, i as u64).unwrap(),
            })
            .collect();
        (scripts, t, words)
    }

    #[test]
    fn bi_is_concatenation_of_uni_sets() {
        let (_, t, w) = setup(0.3);
        let to = make_dataset(DatasetFormat::UniToPivot, &t, &w, 3).unwrap();
        let from = make_dataset(DatasetFormat::UniFromPivot, &t, &w, 3).unwrap();
        let bi = make_dataset(DatasetFormat::Bi, &t, &w, 3).unwrap();
        assert_eq!(bi.len(), to.len() + from.len());
        assert_eq!(bi, [to, from].concat());
    }

    #[test]
    fn unambiguous_rendering_is_canonical() {
        let (_, t, w) = setup(0.0);
        for seed in [1, 2] {
            for p in make_dataset(DatasetFormat::UniToPivot, &t, &w, seed).unwrap() {
                assert_eq!(p.tgt, t.canonical_pivot(&p.src, &p.src_lang).unwrap());
            }
        }
    }

    #[test]
    fn renderings_invert_to_source() {
        let (_, t, w) = setup(0.5);
        for p in make_dataset(DatasetFormat::Bi, &t, &w, 4).unwrap() {
            let (word, pivot, script) = match p.direction {
                Direction::ToPivot => (&p.src, &p.tgt, &p.src_lang),
                Direction::FromPivot => (&p.tgt, &p.src, &p.tgt_lang),
            };
            assert_eq!(&t.from_pivot(pivot, script).unwrap(), word);
        }
    }

    #[test]
    fn pairs_encode_with_language_tags() {
        let (scripts, t, w) = setup(0.3);
        let vocab = build_vocab(&scripts).unwrap();
        let p = &make_dataset(DatasetFormat::UniToPivot, &t, &w, 1).unwrap()[0];
        let (x, y) = p.encode(&vocab).unwrap();
        assert_eq!(x.lang, vocab.lang(&p.src_lang).unwrap());
        assert_eq!(y.lang, vocab.lang(PIVOT).unwrap());
        assert_eq!(vocab.decode_word(&y), p.tgt);
    }

    #[test]
    fn no_ambiguity_single_target() {
        let (s, t, w) = setup(0.0);
        let ex = chained_ground_truth(&w[0].words[0], &s[0].name, &s[1].name, &t).unwrap();
        assert_eq!(ex.allowed_targets.len(), 1);
        assert!(ex.allowed_targets.contains(&ex.target));
    }

    #[test]
    fn mirror_chain_contains_source() {
        let (s, t, w) = setup(0.6);
        for word in &w[0].words {
            let ex = chained_ground_truth(word, &s[0].name, &s[0].name, &t).unwrap();
            assert!(ex.allowed_targets.contains(word));
        }
    }

    #[test]
    fn alphabet_error_for_foreign_word() {
        let (s, t, _) = setup(0.3);
        let foreign: String = s[1].alphabet[..3].iter().collect();
        assert!(matches!(
            chained_ground_truth(&foreign, &s[0].name, &s[2].name, &t),
            Err(Error::Alphabet { .. })
        ));
    }

    /// Recursive enumeration over variant choices, independent of the
    /// table's own product code.
    fn brute_force(word: &[char], script: &str, t: &PivotTable, prefix: String, out: &mut Vec<String>) {
        match word.split_first() {
            None => out.push(prefix),
            Some((c, rest)) => {
                for v in &t.maps[script].forward[c] {
                    brute_force(rest, script, t, format!("{prefix}{v}"), out);
                }
            }
        }
    }

    proptest! {
        #[test]
        fn variant_count_is_product(idx in 0usize..50, s_i in 0usize..4, seed in 0u64..4) {
            let (s, t, w) = setup(0.3 + seed as f64 * 0.2);
            let word = &w[s_i].words[idx];
            let name = &s[s_i].name;
            let vs = t.pivot_variants(word, name).unwrap();
            let product: usize = word.chars().map(|c| t.maps[name].forward[&c].len()).product();
            prop_assert_eq!(vs.len(), product);
            let mut bf = Vec::new();
            let chars: Vec<char> = word.chars().collect();
            brute_force(&chars, name, &t, String::new(), &mut bf);
            let a: BTreeSet<_> = vs.into_iter().collect();
            let b: BTreeSet<_> = bf.into_iter().collect();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn chained_oracle_is_sound(idx in 0usize..50, a in 0usize..4, b in 0usize..4) {
            let (s, t, w) = setup(0.5);
            let word = &w[a].words[idx];
            let ex = chained_ground_truth(word, &s[a].name, &s[b].name, &t).unwrap();
            prop_assert!(ex.allowed_targets.contains(&ex.target));
            // Forward then inverse table per character lands in the set.
            for p in t.pivot_variants(word, &s[a].name).unwrap() {
                let back = t.from_pivot(&p, &s[b].name).unwrap();
                prop_assert!(ex.allowed_targets.contains(&back));
            }
        }
    }
}
