use serde::{Deserialize, Serialize};

use crate::distill::{aligned_similarity, student_encodings, teacher_encodings};
use crate::error::{Error, Result};
use crate::seq2seq::{EncoderParams, TokenSequence, Vocab};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// Source words of one language and split, each with the pivot word the
/// teacher encodes.
#[derive(Clone, Debug)]
pub struct SimilarityInput {
    pub src_lang: String,
    pub split: Split,
    pub pairs: Vec<(TokenSequence, TokenSequence)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimilarityCell {
    pub src_lang: String,
    pub split: Split,
    pub mean: f64,
    pub count: usize,
    pub skipped: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimilarityRecord {
    pub src_lang: String,
    pub split: Split,
    pub source: String,
    pub pivot: String,
    pub similarity: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimilarityReport {
    pub cells: Vec<SimilarityCell>,
    pub train_mean: Option<f64>,
    pub test_mean: Option<f64>,
    pub overall_mean: f64,
    /// `train_mean − test_mean` when both splits are present.
    pub gap: Option<f64>,
    pub skipped: usize,
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Per-word cosine between teacher encodings of the pivot and student
/// encodings of the source, averaged per cell. Degenerate words are skipped
/// and counted.
pub fn encoder_similarity_report(
    teacher: &EncoderParams,
    student: &EncoderParams,
    vocab: &Vocab,
    inputs: &[SimilarityInput],
) -> Result<(SimilarityReport, Vec<SimilarityRecord>)> {
    let mut cells = Vec::with_capacity(inputs.len());
    let mut records = Vec::new();
    let (mut train, mut test) = (Vec::new(), Vec::new());
    let mut skipped_total = 0;
    for input in inputs {
        let pivots: Vec<&TokenSequence> = input.pairs.iter().map(|p| &p.1).collect();
        let sources: Vec<&TokenSequence> = input.pairs.iter().map(|p| &p.0).collect();
        let tv = teacher_encodings(teacher, &pivots)?;
        let sv = student_encodings(student, &sources)?;
        let mut values = Vec::with_capacity(tv.len());
        let mut skipped = 0;
        for ((t, s), (x_s, x_t)) in tv.iter().zip(&sv).zip(&input.pairs) {
            match aligned_similarity(t, s)? {
                Some(v) => {
                    values.push(v);
                    records.push(SimilarityRecord {
                        src_lang: input.src_lang.clone(),
                        split: input.split,
                        source: vocab.decode_word(x_s),
                        pivot: vocab.decode_word(x_t),
                        similarity: v,
                    });
                }
                None => skipped += 1,
            }
        }
        skipped_total += skipped;
        let m = mean(&values).unwrap_or(f64::NAN);
        match input.split {
            Split::Train => train.extend_from_slice(&values),
            Split::Test => test.extend_from_slice(&values),
        }
        cells.push(SimilarityCell {
            src_lang: input.src_lang.clone(),
            split: input.split,
            mean: m,
            count: values.len(),
            skipped,
        });
    }
    let all: Vec<f64> = train.iter().chain(&test).copied().collect();
    let overall_mean =
        mean(&all).ok_or_else(|| Error::UndefinedMetric("no non-degenerate encodings to compare".into()))?;
    let (train_mean, test_mean) = (mean(&train), mean(&test));
    Ok((
        SimilarityReport {
            cells,
            train_mean,
            test_mean,
            overall_mean,
            gap: train_mean.zip(test_mean).map(|(a, b)| a - b),
            skipped: skipped_total,
        },
        records,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seq2seq::{init_model, ModelConfig};

    #[test]
    fn identical_encoders_on_identical_words_score_one() {
        let vocab = Vocab::new(&["a", "b"], &["x", "y", "z"]).unwrap();
        let cfg = ModelConfig {
            dropout: 0.0,
            ..ModelConfig::desk_scale(vocab.len())
        };
        let (enc, _) = init_model(&cfg, 3).unwrap();
        let a = vocab.lang("a").unwrap();
        let words: Vec<TokenSequence> = ["x", "xyz", "zzyx"]
            .iter()
            .map(|w| vocab.encode_word(w, a).unwrap())
            .collect();
        let inputs: Vec<SimilarityInput> = [Split::Train, Split::Test]
            .into_iter()
            .map(|split| SimilarityInput {
                src_lang: "a".into(),
                split,
                pairs: words.iter().map(|w| (w.clone(), w.clone())).collect(),
            })
            .collect();
        let (r, recs) = encoder_similarity_report(&enc, &enc, &vocab, &inputs).unwrap();
        for c in &r.cells {
            assert!((c.mean - 1.0).abs() < 1e-5, "{c:?}");
            assert_eq!(c.count, 3);
        }
        assert!(r.gap.unwrap().abs() < 1e-6);
        assert_eq!(recs.len(), 6);
        for c in &r.cells {
            let vals: Vec<f64> = recs
                .iter()
                .filter(|x| x.split == c.split)
                .map(|x| x.similarity)
                .collect();
            assert!((mean(&vals).unwrap() - c.mean).abs() < 1e-9);
        }
    }
}
