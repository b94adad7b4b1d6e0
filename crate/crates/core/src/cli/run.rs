//! The six workflow phases, handing off through files under the work dir.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointHeader, Role};
use super::config::{RunConfig, Variant};
use crate::distill::{
    assemble_student, distill_student_encoder, finetune_decoder_general, finetune_decoder_reconstruction, pivot_pairs,
    single_hop_accuracy, train_teacher, Chain, DecoderData, HeldOut, PipelineSpec, Student, TrainLog,
};
use crate::error::{Error, Result};
use crate::eval::{
    build_report, encoder_similarity_report, latency_bench, predict, similarity_records_tsv, word_records_tsv,
    EvalReport, LatencyTable, SimilarityInput, Split,
};
use crate::rng;
use crate::seq2seq::{init_model, DecoderParams, EncoderParams, TokenId, TokenSequence, Vocab};
use crate::taskgen::{
    build_corpus, write_allowed, write_atomic, write_pairs, ChainedExample, Corpus, DatasetFormat, Direction,
    TransliterationPair, PIVOT,
};
use crate::tensor::Param;

const TEACHER_INIT: u64 = 10;
const TEACHER_TRAIN: u64 = 11;
const ENCODER_TRAIN: u64 = 12;
const DECODER_TRAIN: u64 = 13;
const BENCH_SAMPLE: u64 = 14;

/// One in this many training items is held back for early stopping.
pub const DEV_EVERY: usize = 20;

pub const CORPUS_FILE: &str = "corpus.json";

/// Paths the run reads and writes, resolved against the work dir.
#[derive(Clone, Debug)]
pub struct Layout {
    pub data_dir: PathBuf,
    pub teacher: PathBuf,
    pub student_encoder: PathBuf,
    pub student: PathBuf,
    pub report_dir: PathBuf,
    pub bench: PathBuf,
}

impl Layout {
    pub fn new(cfg: &RunConfig) -> Self {
        let p = &cfg.paths;
        Self {
            data_dir: p.resolve(&p.data_dir),
            teacher: p.resolve(&p.teacher),
            student_encoder: p.resolve(&p.student_encoder),
            student: p.resolve(&p.student),
            report_dir: p.resolve(&p.report),
            bench: p.resolve(&p.bench),
        }
    }
}

fn say(msg: impl AsRef<str>) {
    println!("{}", msg.as_ref());
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::format(path, e.to_string()))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => std::fs::create_dir_all(d).map_err(|e| Error::io(d, e)),
        _ => Ok(()),
    }
}

/// Generates the corpus and writes it with its datasets to the data dir.
pub fn gen_data(cfg: &RunConfig, layout: &Layout) -> Result<Corpus> {
    let corpus = build_corpus(&cfg.task, cfg.seed()?)?;
    let dir = &layout.data_dir;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_json(&dir.join(CORPUS_FILE), &corpus)?;
    for (name, format) in [
        ("bi", DatasetFormat::Bi),
        ("to-pivot", DatasetFormat::UniToPivot),
        ("from-pivot", DatasetFormat::UniFromPivot),
    ] {
        write_pairs(&dir.join(format!("train.{name}.tsv")), &corpus.train_pairs(format)?)?;
        write_pairs(&dir.join(format!("test.{name}.tsv")), &corpus.test_pairs(format)?)?;
    }
    write_allowed(&dir.join("test.chained.tsv"), &corpus.chained(true)?)?;
    say(format!(
        "corpus: {} scripts, {} train and {} test words per script, vocab {}",
        corpus.scripts.len(),
        corpus.train[0].words.len(),
        corpus.test[0].words.len(),
        corpus.vocab.len()
    ));
    Ok(corpus)
}

pub fn load_corpus(layout: &Layout) -> Result<Corpus> {
    let path = layout.data_dir.join(CORPUS_FILE);
    if !path.exists() {
        return Err(Error::MissingInput(format!("{} (run gen-data first)", path.display())));
    }
    read_json(&path)
}

fn require(path: &Path, what: &str) -> Result<()> {
    if !path.exists() {
        return Err(Error::MissingInput(format!("{what} checkpoint {}", path.display())));
    }
    Ok(())
}

fn load_role(path: &Path, what: &str, roles: &[Role], vocab: &Vocab) -> Result<Checkpoint> {
    require(path, what)?;
    let ck = load_checkpoint(path, roles)?;
    if ck.vocab()? != *vocab {
        return Err(Error::Vocab(format!(
            "{} was trained on a different vocabulary",
            path.display()
        )));
    }
    Ok(ck)
}

fn save(path: &Path, header: CheckpointHeader, params: &[&Param]) -> Result<String> {
    ensure_parent(path)?;
    let digest = save_checkpoint(path, &header, params)?;
    say(format!("wrote {} ({}) digest {digest}", path.display(), header.role));
    Ok(digest)
}

fn split_dev<T: Clone>(items: &[T]) -> (Vec<T>, Vec<T>) {
    let (mut train, mut dev) = (Vec::new(), Vec::new());
    for (i, x) in items.iter().enumerate() {
        if i % DEV_EVERY == DEV_EVERY - 1 {
            dev.push(x.clone());
        } else {
            train.push(x.clone());
        }
    }
    (train, dev)
}

/// Single-hop items scored by exact match. A word has several valid pivot
/// renderings, so to-pivot items accept any of them; from-pivot items
/// accept only the one script word.
pub fn single_hop_items(corpus: &Corpus, pairs: &[TransliterationPair]) -> Result<Vec<HeldOut>> {
    let v = &corpus.vocab;
    pairs
        .iter()
        .map(|p| {
            let (x, y) = p.encode(v)?;
            let mut accept = match p.direction {
                Direction::ToPivot => corpus
                    .tables
                    .pivot_variants(&p.src, &p.src_lang)?
                    .iter()
                    .map(|s| Ok(v.encode_word(s, y.lang)?.ids))
                    .collect::<Result<Vec<_>>>()?,
                Direction::FromPivot => vec![y.ids.clone()],
            };
            accept.sort();
            accept.dedup();
            Ok(HeldOut {
                x,
                tgt_lang: y.lang,
                accept,
            })
        })
        .collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TeacherSummary {
    pub digest: String,
    pub log: TrainLog,
    /// Held-out single-hop exact match on the test split.
    pub test_accuracy: f64,
}

pub fn train_teacher_phase(cfg: &RunConfig, layout: &Layout, corpus: &Corpus) -> Result<TeacherSummary> {
    let seed = cfg.seed()?;
    let v = &corpus.vocab;
    let all = corpus.train_pairs(DatasetFormat::Bi)?;
    let (train, dev) = split_dev(&all);
    let pairs: Vec<_> = train.iter().map(|p| p.encode(v)).collect::<Result<_>>()?;
    let dev = single_hop_items(corpus, &dev)?;
    let config = cfg.model.with_vocab(v.len());
    let init_seed = rng::derive(seed, TEACHER_INIT);
    let mut model = init_model(&config, init_seed)?;
    let hyper = crate::distill::TrainHyper {
        seed: rng::derive(seed, TEACHER_TRAIN),
        ..cfg.teacher
    };
    say(format!("teacher: {} pairs, {} dev items", pairs.len(), dev.len()));
    let log = train_teacher(&mut model, &pairs, &dev, v, &hyper)?;
    let test = single_hop_items(corpus, &corpus.test_pairs(DatasetFormat::Bi)?)?;
    let test_accuracy = single_hop_accuracy(&model.0, &model.1, v, &test)?;
    say(format!(
        "teacher: best epoch {} dev {:.4}, test single-hop exact match {test_accuracy:.4}",
        log.best_epoch, log.best_score
    ));
    let mut params = model.0.params();
    params.extend(model.1.params());
    let header = CheckpointHeader {
        config,
        vocab: v.clone().into(),
        role: Role::Teacher,
        seed: init_seed,
        parent: None,
    };
    let digest = save(&layout.teacher, header, &params)?;
    Ok(TeacherSummary {
        digest,
        log,
        test_accuracy,
    })
}

/// Frozen teacher encoder and decoder with the checkpoint digest.
pub fn load_teacher(path: &Path, vocab: &Vocab) -> Result<(EncoderParams, DecoderParams, String)> {
    let ck = load_role(path, "teacher", &[Role::Teacher], vocab)?;
    let (mut enc, mut dec) = (ck.encoder()?, ck.decoder()?);
    enc.set_frozen(true);
    dec.set_frozen(true);
    Ok((enc, dec, ck.digest))
}

fn encoded_words(corpus: &Corpus, test: bool) -> Result<Vec<TokenSequence>> {
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

/// `(x_s, x_t)` pairs for a split, with the teacher's own pivot as `x_t`.
pub fn relabeled_pairs(
    corpus: &Corpus,
    enc: &EncoderParams,
    dec: &DecoderParams,
    test: bool,
) -> Result<Vec<(TokenSequence, TokenSequence)>> {
    let v = &corpus.vocab;
    let p = PipelineSpec::shared(enc, dec, v.lang(PIVOT)?);
    let (pairs, dropped) = pivot_pairs(&p, v, &encoded_words(corpus, test)?)?;
    if dropped > 0 {
        say(format!("{dropped} words with an empty teacher pivot left out"));
    }
    Ok(pairs)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EncoderSummary {
    pub digest: String,
    pub log: TrainLog,
}

pub fn distill_encoder_phase(cfg: &RunConfig, layout: &Layout, corpus: &Corpus) -> Result<EncoderSummary> {
    let seed = cfg.seed()?;
    let v = &corpus.vocab;
    let (tenc, tdec, parent) = load_teacher(&layout.teacher, v)?;
    let (train, dev) = split_dev(&relabeled_pairs(corpus, &tenc, &tdec, false)?);
    let mut senc = tenc.clone();
    senc.set_frozen(false);
    let hyper = crate::distill::TrainHyper {
        seed: rng::derive(seed, ENCODER_TRAIN),
        ..cfg.encoder
    };
    say(format!("encoder alignment: {} pairs, {} dev", train.len(), dev.len()));
    let log = distill_student_encoder(&tenc, &mut senc, &train, &dev, &hyper)?;
    say(format!(
        "encoder alignment: best epoch {} dev similarity {:.4}",
        log.best_epoch, log.best_score
    ));
    let header = CheckpointHeader {
        config: senc.config.clone(),
        vocab: v.clone().into(),
        role: Role::StudentEncoder,
        seed: hyper.seed,
        parent: Some(parent),
    };
    let digest = save(&layout.student_encoder, header, &senc.params())?;
    Ok(EncoderSummary { digest, log })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DecoderSummary {
    pub digest: String,
    pub variant: Variant,
    pub log: TrainLog,
}

pub fn finetune_decoder_phase(cfg: &RunConfig, layout: &Layout, corpus: &Corpus) -> Result<DecoderSummary> {
    let seed = cfg.seed()?;
    let v = &corpus.vocab;
    let (tenc, tdec, _) = load_teacher(&layout.teacher, v)?;
    let ck = load_role(&layout.student_encoder, "student encoder", &[Role::StudentEncoder], v)?;
    let mut senc = ck.encoder()?;
    senc.set_frozen(true);
    let mut sdec = tdec.clone();
    sdec.set_frozen(false);
    let hyper = crate::distill::TrainHyper {
        seed: rng::derive(seed, DECODER_TRAIN),
        ..cfg.decoder
    };
    let log = match cfg.variant {
        Variant::General => {
            let (train, dev) = split_dev(&relabeled_pairs(corpus, &tenc, &tdec, false)?);
            let scripts: Vec<TokenId> = corpus.script_names().map(|s| v.lang(s)).collect::<Result<_>>()?;
            say(format!(
                "decoder finetune (general): {} words, {} dev",
                train.len(),
                dev.len()
            ));
            finetune_decoder_general(
                &tenc,
                &tdec,
                &senc,
                &mut sdec,
                v,
                &DecoderData::Pairs(train),
                &dev,
                &scripts,
                Chain::Cross,
                &hyper,
            )?
        }
        Variant::Reconstruction => {
            let (train, dev) = split_dev(&encoded_words(corpus, false)?);
            say(format!(
                "decoder finetune (reconstruction): {} words, {} dev",
                train.len(),
                dev.len()
            ));
            finetune_decoder_reconstruction(&senc, &mut sdec, v, &DecoderData::Inputs(train), &dev, &hyper)?
        }
    };
    say(format!(
        "decoder finetune: best epoch {} dev agreement {:.4}",
        log.best_epoch, log.best_score
    ));
    let student = assemble_student(senc, sdec)?;
    let mut params = student.enc.params();
    params.extend(student.dec.params());
    let header = CheckpointHeader {
        config: student.enc.config.clone(),
        vocab: v.clone().into(),
        role: Role::StudentFull,
        seed: hyper.seed,
        parent: Some(ck.digest.clone()),
    };
    let digest = save(&layout.student, header, &params)?;
    Ok(DecoderSummary {
        digest,
        variant: cfg.variant,
        log,
    })
}

pub fn load_student(path: &Path, vocab: &Vocab) -> Result<(Student, String)> {
    let ck = load_role(path, "student", &[Role::StudentFull], vocab)?;
    Ok((assemble_student(ck.encoder()?, ck.decoder()?)?, ck.digest))
}

/// Held-out examples the student is scored on: cross-script chains for the
/// general variant, round trips for reconstruction.
pub fn eval_examples(corpus: &Corpus, variant: Variant) -> Result<Vec<ChainedExample>> {
    match variant {
        Variant::General => corpus.chained(true),
        Variant::Reconstruction => corpus.mirrored(true),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub teacher_digest: String,
    pub student_digest: String,
    pub dataset_seed: u64,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    #[serde(flatten)]
    pub report: EvalReport,
    pub provenance: Provenance,
}

fn provenance(teacher: String, student: String, seed: u64) -> Provenance {
    Provenance {
        teacher_digest: teacher,
        student_digest: student,
        dataset_seed: seed,
        timestamp: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
    }
}

pub fn eval_phase(cfg: &RunConfig, layout: &Layout, corpus: &Corpus) -> Result<MetricsReport> {
    let v = &corpus.vocab;
    require(&layout.student, "student")?;
    let (student, student_digest) = load_student(&layout.student, v)?;
    let (tenc, tdec, teacher_digest) = load_teacher(&layout.teacher, v)?;
    let pipeline = PipelineSpec::shared(&tenc, &tdec, v.lang(PIVOT)?);
    let examples = eval_examples(corpus, cfg.variant)?;
    let (teacher_out, student_out) = predict(&pipeline, &student, v, &examples)?;

    let mut inputs = Vec::new();
    for (split, test) in [(Split::Train, false), (Split::Test, true)] {
        let pairs = relabeled_pairs(corpus, &tenc, &tdec, test)?;
        for s in corpus.script_names() {
            let l = v.lang(s)?;
            inputs.push(SimilarityInput {
                src_lang: s.to_string(),
                split,
                pairs: pairs.iter().filter(|p| p.0.lang == l).cloned().collect(),
            });
        }
    }
    let (similarity, sim_records) = encoder_similarity_report(&tenc, &student.enc, v, &inputs)?;
    let (report, records) = build_report(&examples, &teacher_out, &student_out, Some(similarity), None)?;
    let metrics = MetricsReport {
        report,
        provenance: provenance(teacher_digest, student_digest, corpus.seed),
    };
    let dir = &layout.report_dir;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_json(&dir.join("metrics.json"), &metrics)?;
    write_atomic(&dir.join("words.tsv"), word_records_tsv(&records).as_bytes())?;
    write_atomic(
        &dir.join("similarity.tsv"),
        similarity_records_tsv(&sim_records).as_bytes(),
    )?;
    let o = &metrics.report.overall;
    say(format!(
        "eval: {} examples, phonetic accuracy teacher {:.4} student {:.4}, CER teacher {:.4} student {:.4}, agreement {:.4}",
        o.count, o.teacher_accuracy, o.student_accuracy, o.teacher_cer, o.student_cer, o.agreement
    ));
    if let Some(s) = &metrics.report.similarity {
        say(format!(
            "eval: encoder similarity train {:.4} test {:.4}",
            s.train_mean.unwrap_or(f64::NAN),
            s.test_mean.unwrap_or(f64::NAN)
        ));
    }
    let w = metrics.report.wins.summary;
    say(format!(
        "eval: both correct {}, teacher only {}, student only {}, both wrong {}",
        w.both_correct, w.teacher_only, w.student_only, w.both_wrong
    ));
    say(format!("wrote {}", dir.display()));
    Ok(metrics)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub latency: LatencyTable,
    pub provenance: Provenance,
}

/// Draws `n` requests from the held-out examples, without replacement.
pub fn bench_requests(corpus: &Corpus, variant: Variant, n: usize, seed: u64) -> Result<Vec<(TokenSequence, TokenId)>> {
    let v = &corpus.vocab;
    let mut examples = eval_examples(corpus, variant)?;
    if examples.len() < n {
        return Err(Error::Input(format!(
            "{n} bench words requested, {} available",
            examples.len()
        )));
    }
    let mut r = rng::stream(rng::derive(seed, BENCH_SAMPLE), 0);
    examples.shuffle(&mut r);
    examples
        .iter()
        .take(n)
        .map(|e| Ok((v.encode_word(&e.source, v.lang(&e.src_lang)?)?, v.lang(&e.tgt_lang)?)))
        .collect()
}

pub fn bench_phase(cfg: &RunConfig, layout: &Layout, corpus: &Corpus) -> Result<BenchReport> {
    let v = &corpus.vocab;
    require(&layout.student, "student")?;
    let (student, student_digest) = load_student(&layout.student, v)?;
    let (tenc, tdec, teacher_digest) = load_teacher(&layout.teacher, v)?;
    let pipeline = PipelineSpec::shared(&tenc, &tdec, v.lang(PIVOT)?);
    let requests = bench_requests(corpus, cfg.variant, cfg.bench.words, cfg.seed()?)?;
    let latency = latency_bench(&pipeline, &student, v, &requests, cfg.bench.repetitions)?;
    say("length  words  pipeline_us  student_us");
    for b in &latency.buckets {
        say(format!(
            "{:6}  {:5}  {:11.1}  {:10.1}",
            b.length, b.words, b.pipeline_us, b.student_us
        ));
    }
    say(format!(
        "bench: weighted pipeline {:.1} us, student {:.1} us, speedup {:.3}; passes per word {} vs {}",
        latency.pipeline_us,
        latency.student_us,
        latency.speedup,
        latency.pipeline_passes_per_word,
        latency.student_passes_per_word
    ));
    let report = BenchReport {
        latency,
        provenance: provenance(teacher_digest, student_digest, corpus.seed),
    };
    ensure_parent(&layout.bench)?;
    write_json(&layout.bench, &report)?;
    Ok(report)
}
