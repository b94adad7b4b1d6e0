use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::edit::min_cer;
use super::latency::LatencyTable;
use super::metrics::{emergent_partition, student_wins, StudentWin, WinSummary};
use super::similarity::{SimilarityRecord, SimilarityReport};
use crate::distill::{run_pipeline_batch, PassCounter, PipelineSpec, Student, INFER_BATCH};
use crate::error::{Error, Result};
use crate::seq2seq::{TokenId, TokenSequence, Vocab};
use crate::taskgen::ChainedExample;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairReport {
    pub src_lang: String,
    pub tgt_lang: String,
    pub count: usize,
    pub teacher_accuracy: f64,
    pub student_accuracy: f64,
    pub teacher_cer: f64,
    pub student_cer: f64,
    /// Fraction of words where student and pipeline outputs are identical.
    pub agreement: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Overall {
    pub count: usize,
    pub teacher_accuracy: f64,
    pub student_accuracy: f64,
    pub teacher_cer: f64,
    pub student_cer: f64,
    pub agreement: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WinsReport {
    pub summary: WinSummary,
    pub student_only: Vec<StudentWin>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub pairs: Vec<PairReport>,
    pub overall: Overall,
    pub similarity: Option<SimilarityReport>,
    pub latency: Option<LatencyTable>,
    pub wins: WinsReport,
}

/// One held-out chained example as scored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WordRecord {
    pub src_lang: String,
    pub tgt_lang: String,
    pub source: String,
    pub target: String,
    pub teacher: String,
    pub student: String,
    pub teacher_correct: bool,
    pub student_correct: bool,
    /// CER against the closest allowed rendering.
    pub teacher_cer: f64,
    pub student_cer: f64,
}

/// Pipeline and student outputs for every example, as strings.
pub fn predict(
    pipeline: &PipelineSpec,
    student: &Student,
    vocab: &Vocab,
    examples: &[ChainedExample],
) -> Result<(Vec<String>, Vec<String>)> {
    let xs: Vec<TokenSequence> = examples
        .iter()
        .map(|e| vocab.encode_word(&e.source, vocab.lang(&e.src_lang)?))
        .collect::<Result<_>>()?;
    let langs: Vec<TokenId> = examples
        .iter()
        .map(|e| vocab.lang(&e.tgt_lang))
        .collect::<Result<_>>()?;
    let refs: Vec<&TokenSequence> = xs.iter().collect();
    let counter = PassCounter::default();
    let (mut teacher, mut student_out) = (Vec::with_capacity(xs.len()), Vec::with_capacity(xs.len()));
    for (xc, lc) in refs.chunks(INFER_BATCH).zip(langs.chunks(INFER_BATCH)) {
        let (ys, _) = run_pipeline_batch(pipeline, vocab, xc, lc, &counter)?;
        teacher.extend(ys.iter().map(|y| vocab.decode_word(y)));
        let ys = student.translate_batch(vocab, xc, lc, &counter)?;
        student_out.extend(ys.iter().map(|y| vocab.decode_word(y)));
    }
    Ok((teacher, student_out))
}

fn score_words(examples: &[ChainedExample], teacher: &[String], student: &[String]) -> Result<Vec<WordRecord>> {
    if teacher.len() != examples.len() || student.len() != examples.len() {
        return Err(Error::Input(format!(
            "{} teacher and {} student predictions for {} examples",
            teacher.len(),
            student.len(),
            examples.len()
        )));
    }
    examples
        .iter()
        .zip(teacher.iter().zip(student))
        .map(|(e, (t, s))| {
            Ok(WordRecord {
                src_lang: e.src_lang.clone(),
                tgt_lang: e.tgt_lang.clone(),
                source: e.source.clone(),
                target: e.target.clone(),
                teacher: t.clone(),
                student: s.clone(),
                teacher_correct: e.allowed_targets.contains(t),
                student_correct: e.allowed_targets.contains(s),
                teacher_cer: min_cer(&e.allowed_targets, t)?,
                student_cer: min_cer(&e.allowed_targets, s)?,
            })
        })
        .collect()
}

fn frac(n: usize, d: usize) -> f64 {
    n as f64 / d as f64
}

fn aggregate(records: &[&WordRecord]) -> Overall {
    let n = records.len();
    let mean = |f: fn(&WordRecord) -> f64| records.iter().map(|r| f(r)).sum::<f64>() / n as f64;
    Overall {
        count: n,
        teacher_accuracy: frac(records.iter().filter(|r| r.teacher_correct).count(), n),
        student_accuracy: frac(records.iter().filter(|r| r.student_correct).count(), n),
        teacher_cer: mean(|r| r.teacher_cer),
        student_cer: mean(|r| r.student_cer),
        agreement: frac(records.iter().filter(|r| r.teacher == r.student).count(), n),
    }
}

/// Scores both prediction lists and assembles the report. Every cell is a
/// mean over the returned per-word records.
pub fn build_report(
    examples: &[ChainedExample],
    teacher: &[String],
    student: &[String],
    similarity: Option<SimilarityReport>,
    latency: Option<LatencyTable>,
) -> Result<(EvalReport, Vec<WordRecord>)> {
    if examples.is_empty() {
        return Err(Error::UndefinedMetric("report over no examples".into()));
    }
    let records = score_words(examples, teacher, student)?;
    let mut by_pair: BTreeMap<(&str, &str), Vec<&WordRecord>> = BTreeMap::new();
    for r in &records {
        by_pair.entry((&r.src_lang, &r.tgt_lang)).or_default().push(r);
    }
    let pairs = by_pair
        .into_iter()
        .map(|((s, t), rs)| {
            let o = aggregate(&rs);
            PairReport {
                src_lang: s.into(),
                tgt_lang: t.into(),
                count: o.count,
                teacher_accuracy: o.teacher_accuracy,
                student_accuracy: o.student_accuracy,
                teacher_cer: o.teacher_cer,
                student_cer: o.student_cer,
                agreement: o.agreement,
            }
        })
        .collect();
    let overall = aggregate(&records.iter().collect::<Vec<_>>());
    let partition = emergent_partition(teacher, student, examples)?;
    let wins = WinsReport {
        summary: partition.summary(),
        student_only: student_wins(&partition, teacher, student, examples),
    };
    Ok((
        EvalReport {
            pairs,
            overall,
            similarity,
            latency,
            wins,
        },
        records,
    ))
}

/// Per-word records as tab-separated lines with a header.
pub fn word_records_tsv(records: &[WordRecord]) -> String {
    let mut s = String::from(
        "src_lang\ttgt_lang\tsource\ttarget\tteacher\tstudent\tteacher_correct\tstudent_correct\tteacher_cer\tstudent_cer\n",
    );
    for r in records {
        let _ = writeln!(
            s,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{:e}\t{:e}",
            r.src_lang,
            r.tgt_lang,
            r.source,
            r.target,
            r.teacher,
            r.student,
            u8::from(r.teacher_correct),
            u8::from(r.student_correct),
            r.teacher_cer,
            r.student_cer
        );
    }
    s
}

pub fn similarity_records_tsv(records: &[SimilarityRecord]) -> String {
    let mut s = String::from("src_lang\tsplit\tsource\tpivot\tsimilarity\n");
    for r in records {
        let split = match r.split {
            super::Split::Train => "train",
            super::Split::Test => "test",
        };
        let _ = writeln!(
            s,
            "{}\t{split}\t{}\t{}\t{:e}",
            r.src_lang, r.source, r.pivot, r.similarity
        );
    }
    s
}

/// Parses [`word_records_tsv`] output back into records.
pub fn parse_word_records(text: &str) -> Result<Vec<WordRecord>> {
    let bad = |line: usize, why: &str| Error::Input(format!("word record line {line}: {why}"));
    text.lines()
        .enumerate()
        .skip(1)
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| {
            let f: Vec<&str> = l.split('\t').collect();
            if f.len() != 10 {
                return Err(bad(i + 1, "expected 10 fields"));
            }
            let flag = |v: &str| match v {
                "0" => Ok(false),
                "1" => Ok(true),
                _ => Err(bad(i + 1, "flag is not 0 or 1")),
            };
            let num = |v: &str| v.parse::<f64>().map_err(|_| bad(i + 1, "bad number"));
            Ok(WordRecord {
                src_lang: f[0].into(),
                tgt_lang: f[1].into(),
                source: f[2].into(),
                target: f[3].into(),
                teacher: f[4].into(),
                student: f[5].into(),
                teacher_correct: flag(f[6])?,
                student_correct: flag(f[7])?,
                teacher_cer: num(f[8])?,
                student_cer: num(f[9])?,
            })
        })
        .collect()
}
