//! End-to-end acceptance run: one line per criterion, nonzero exit if any
//! fails.

use std::collections::BTreeSet;
use std::path::Path;
use std::time::Instant;

use pipeline_distill::cli::{
    bench_phase, bench_requests, dispatch, distill_encoder_phase, eval_phase, finetune_decoder_phase, gen_data,
    load_corpus, load_student, load_teacher, relabeled_pairs, train_teacher_phase, Layout, MetricsReport, RunConfig,
    CORPUS_FILE,
};
use pipeline_distill::distill::{
    distill_student_encoder, finetune_decoder_general, finetune_decoder_reconstruction, run_pipeline, Chain,
    DecoderData, PassCounter, PipelineSpec, TrainHyper,
};
use pipeline_distill::eval::{cer, edit_counts, emergent_partition, parse_word_records, WordRecord};
use pipeline_distill::seq2seq::TokenSequence;
use pipeline_distill::taskgen::{ChainedExample, Corpus, PIVOT};
use pipeline_distill::tensor::{gradcheck, Param};
use pipeline_distill::{Error, Result};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn bits(params: &[&Param]) -> Vec<Vec<u32>> {
    params
        .iter()
        .map(|p| p.value.data().iter().map(|x| x.to_bits()).collect())
        .collect()
}

// ---------------------------------------------------------------- 1

fn gradient_suite() -> Result<Verdict> {
    let t = Instant::now();
    let mut worst = ("", 0.0f64);
    let mut failed = Vec::new();
    let mut ops = 0;
    for seed in 0..5 {
        for c in gradcheck::check_all_ops(seed)? {
            ops += 1;
            if c.max_error > worst.1 {
                worst = (c.op, c.max_error);
            }
            if !c.passed() {
                failed.push(format!("{} (seed {seed}, {:.2e})", c.op, c.max_error));
            }
        }
    }
    let secs = t.elapsed().as_secs_f64();
    Ok(verdict(
        failed.is_empty() && secs < 60.0,
        format!(
            "{ops} op checks, worst relative error {:.2e} ({}), {secs:.2} s{}",
            worst.1,
            worst.0,
            if failed.is_empty() {
                String::new()
            } else {
                format!("; failed: {}", failed.join(", "))
            }
        ),
    ))
}

// ---------------------------------------------------------------- 2

/// Fewest errors over every alignment path, by exhaustive recursion.
fn brute_min(r: &[u8], h: &[u8]) -> usize {
    match (r.split_first(), h.split_first()) {
        (None, None) => 0,
        (Some(_), None) => r.len(),
        (None, Some(_)) => h.len(),
        (Some((a, rr)), Some((b, hh))) => {
            let diag = usize::from(a != b) + brute_min(rr, hh);
            let del = 1 + brute_min(rr, h);
            let ins = 1 + brute_min(r, hh);
            diag.min(del).min(ins)
        }
    }
}

/// Restricted-growth strings of length `n` over at most `k` symbols: one
/// representative per relabeling of the alphabet.
fn canonical_strings(n: usize, k: u8, prefix: &mut Vec<u8>, out: &mut Vec<Vec<u8>>) {
    if prefix.len() == n {
        out.push(prefix.clone());
        return;
    }
    let next = prefix.iter().max().map_or(0, |m| m + 1).min(k - 1);
    for s in 0..=next {
        prefix.push(s);
        canonical_strings(n, k, prefix, out);
        prefix.pop();
    }
}

fn cer_oracle() -> Result<Verdict> {
    let t = Instant::now();
    let mut pairs = 0u64;
    let mut bad: Option<String> = None;
    'outer: for n in 0..=12 {
        let mut strings = Vec::new();
        canonical_strings(n, 5, &mut Vec::new(), &mut strings);
        for a in n.saturating_sub(6)..=n.min(6) {
            for s in &strings {
                let (r, h) = s.split_at(a);
                let e = edit_counts(r, h);
                pairs += 1;
                let ok = e.errors() == brute_min(r, h) && e.s + e.d + e.c == r.len() && e.s + e.i + e.c == h.len();
                if !ok {
                    bad = Some(format!("{r:?} vs {h:?}: {e:?}"));
                    break 'outer;
                }
            }
        }
    }
    let c: Vec<char> = "no".chars().collect();
    let k: Vec<char> = "know".chars().collect();
    let no_know = cer(&c, &k)?;
    let e = edit_counts(&c, &k);
    let pass = bad.is_none() && no_know == 0.5 && e.errors() == 2 && e.c == 2;
    Ok(verdict(
        pass,
        format!(
            "{pairs} pairs of lengths <= 6 over 5 symbols (all, up to relabeling) match enumeration; cer(no, know) = {no_know}{}; {:.1} s",
            bad.map(|b| format!("; mismatch {b}")).unwrap_or_default(),
            t.elapsed().as_secs_f64()
        ),
    ))
}

// ---------------------------------------------------------------- 3 to 7, 9

struct MainRun {
    cfg: RunConfig,
    layout: Layout,
    teacher_accuracy: f64,
    metrics: MetricsReport,
}

fn main_run(dir: &Path, seed: u64) -> Result<MainRun> {
    let mut cfg = RunConfig {
        seed: Some(seed),
        ..RunConfig::default()
    };
    cfg.paths.work_dir = dir.to_path_buf();
    let layout = Layout::new(&cfg);
    let t = Instant::now();
    let corpus = gen_data(&cfg, &layout)?;
    let teacher = train_teacher_phase(&cfg, &layout, &corpus)?;
    println!("  [teacher trained in {:.0} s]", t.elapsed().as_secs_f64());
    let t = Instant::now();
    distill_encoder_phase(&cfg, &layout, &corpus)?;
    println!("  [encoder aligned in {:.0} s]", t.elapsed().as_secs_f64());
    let t = Instant::now();
    finetune_decoder_phase(&cfg, &layout, &corpus)?;
    println!("  [decoder finetuned in {:.0} s]", t.elapsed().as_secs_f64());
    let metrics = eval_phase(&cfg, &layout, &corpus)?;
    Ok(MainRun {
        cfg,
        layout,
        teacher_accuracy: teacher.test_accuracy,
        metrics,
    })
}

fn teacher_gate(run: &MainRun) -> Verdict {
    let a = run.teacher_accuracy;
    verdict(
        a >= 0.95,
        format!("held-out single-hop exact match {a:.4} (need >= 0.95)"),
    )
}

fn encoder_distillation(run: &MainRun) -> Verdict {
    let Some(s) = &run.metrics.report.similarity else {
        return verdict(false, "no similarity report");
    };
    let (train, test) = (s.train_mean.unwrap_or(f64::NAN), s.test_mean.unwrap_or(f64::NAN));
    let gap = train - test;
    let cells: Vec<String> = s
        .cells
        .iter()
        .map(|c| format!("{}/{:?} {:.4}", c.src_lang, c.split, c.mean))
        .collect();
    verdict(
        test >= 0.95 && gap.abs() <= 0.03,
        format!(
            "held-out similarity {test:.4} (need >= 0.95), train {train:.4}, gap {gap:+.4} (need |gap| <= 0.03); {}",
            cells.join(", ")
        ),
    )
}

/// Student outputs holding a character from the pivot inventory or from
/// outside the target script.
fn off_script_outputs(corpus: &Corpus, records: &[WordRecord]) -> usize {
    let pivot: BTreeSet<char> = corpus.tables.inventory.iter().flat_map(|s| s.chars()).collect();
    records
        .iter()
        .filter(|r| {
            let script = corpus.scripts.iter().find(|s| s.name == r.tgt_lang);
            r.student
                .chars()
                .any(|c| pivot.contains(&c) || !script.is_some_and(|s| s.contains(c)))
        })
        .count()
}

fn end_to_end(run: &MainRun) -> Result<Verdict> {
    let o = &run.metrics.report.overall;
    let drop = o.teacher_accuracy - o.student_accuracy;
    let path = run.layout.report_dir.join("words.tsv");
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let leaks = off_script_outputs(&load_corpus(&run.layout)?, &parse_word_records(&text)?);
    Ok(verdict(
        drop <= 0.03 && o.agreement >= 0.9 && leaks == 0,
        format!(
            "{} held-out chained pairs: phonetic accuracy pipeline {:.4}, student {:.4} (drop {:.4}, need <= 0.03); agreement {:.4} (need >= 0.9); CER pipeline {:.4} student {:.4}; student outputs with pivot or foreign characters: {leaks}",
            o.count, o.teacher_accuracy, o.student_accuracy, drop, o.agreement, o.teacher_cer, o.student_cer
        ),
    ))
}

fn latency(run: &MainRun) -> Result<Verdict> {
    let corpus = load_corpus(&run.layout)?;
    let report = bench_phase(&run.cfg, &run.layout, &corpus)?;
    let l = &report.latency;

    // exact per-word pass counts through the strict single-word runner
    let v = &corpus.vocab;
    let (tenc, tdec, _) = load_teacher(&run.layout.teacher, v)?;
    let (student, _) = load_student(&run.layout.student, v)?;
    let p = PipelineSpec::shared(&tenc, &tdec, v.lang(PIVOT)?);
    let requests = bench_requests(&corpus, run.cfg.variant, run.cfg.bench.words, run.cfg.seed.unwrap())?;
    let (mut four, mut two) = (0, 0);
    for (x, l) in &requests {
        let c = PassCounter::default();
        if run_pipeline(&p, v, x, *l, &c).is_ok() && c.total() == 4 {
            four += 1;
        }
        let c = PassCounter::default();
        student.translate(v, x, *l, &c)?;
        if c.total() == 2 {
            two += 1;
        }
    }
    let n = requests.len();
    let words: usize = l.buckets.iter().map(|b| b.words).sum();
    Ok(verdict(
        l.speedup >= 1.5 && words >= 500 && l.repetitions >= 10 && four == n && two == n,
        format!(
            "{words} words x {} repetitions: weighted pipeline {:.1} us, student {:.1} us, ratio {:.3} (need >= 1.5); {four}/{n} words took 4 passes in the pipeline, {two}/{n} took 2 in the student",
            l.repetitions, l.pipeline_us, l.student_us, l.speedup
        ),
    ))
}

fn freeze_invariance(run: &MainRun) -> Result<Verdict> {
    let corpus = load_corpus(&run.layout)?;
    let v = &corpus.vocab;
    let (tenc, tdec, _) = load_teacher(&run.layout.teacher, v)?;
    let (student, _) = load_student(&run.layout.student, v)?;
    let mut senc = student.enc.clone();
    senc.set_frozen(true);
    let pairs: Vec<(TokenSequence, TokenSequence)> = relabeled_pairs(&corpus, &tenc, &tdec, false)?
        .into_iter()
        .step_by(10)
        .collect();
    let (train, dev) = pairs.split_at(pairs.len() - 200);
    let scripts: Vec<u32> = corpus.script_names().map(|s| v.lang(s)).collect::<Result<_>>()?;
    let h = TrainHyper {
        epochs: 1,
        seed: 99,
        ..TrainHyper::default()
    };
    let teacher_bits = (bits(&tenc.params()), bits(&tdec.params()));
    let student_enc_bits = bits(&senc.params());
    let mut notes = Vec::new();

    let mut e = tenc.clone();
    e.set_frozen(false);
    distill_student_encoder(&tenc, &mut e, train, dev, &h)?;
    let ok1 = (bits(&tenc.params()), bits(&tdec.params())) == teacher_bits && bits(&e.params()) != teacher_bits.0;
    notes.push(format!("alignment {}", if ok1 { "ok" } else { "CHANGED" }));

    let mut d = tdec.clone();
    d.set_frozen(false);
    finetune_decoder_general(
        &tenc,
        &tdec,
        &senc,
        &mut d,
        v,
        &DecoderData::Pairs(train.to_vec()),
        dev,
        &scripts,
        Chain::Cross,
        &h,
    )?;
    let ok2 = (bits(&tenc.params()), bits(&tdec.params())) == teacher_bits && bits(&senc.params()) == student_enc_bits;
    notes.push(format!("general finetune {}", if ok2 { "ok" } else { "CHANGED" }));

    let inputs: Vec<TokenSequence> = train.iter().map(|p| p.0.clone()).collect();
    let dev_in: Vec<TokenSequence> = dev.iter().map(|p| p.0.clone()).collect();
    let mut d = tdec.clone();
    d.set_frozen(false);
    let log = finetune_decoder_reconstruction(&senc, &mut d, v, &DecoderData::Inputs(inputs), &dev_in, &h)?;
    let ok3 = bits(&senc.params()) == student_enc_bits;
    notes.push(format!(
        "reconstruction finetune {} (held-out exact reconstruction after one epoch {:.3})",
        if ok3 { "ok" } else { "CHANGED" },
        log.best_score
    ));
    Ok(verdict(ok1 && ok2 && ok3, notes.join("; ")))
}

fn emergent_wins(run: &MainRun) -> Result<Verdict> {
    let w = &run.metrics.report.wins;
    let s = w.summary;
    let total = s.both_correct + s.teacher_only + s.student_only + s.both_wrong;
    let count = run.metrics.report.overall.count;
    let listed = w.student_only.len() == s.student_only;

    // constructed case: the pipeline is handed a wrong variant
    let allowed: BTreeSet<String> = ["lig", "leeg"].iter().map(|x| x.to_string()).collect();
    let ex = ChainedExample {
        src_lang: "a".into(),
        source: "w".into(),
        pivot: "p".into(),
        tgt_lang: "b".into(),
        target: "lig".into(),
        allowed_targets: allowed,
    };
    let fixture = emergent_partition(&["lag"], &["leeg"], std::slice::from_ref(&ex))?;
    let fixture_ok = fixture.student_only == vec![0] && fixture.is_partition_of(1);
    let sample: Vec<String> = w
        .student_only
        .iter()
        .take(3)
        .map(|x| format!("{}:{} -> {} (pipeline {})", x.src_lang, x.source, x.student, x.teacher))
        .collect();
    Ok(verdict(
        total == count && listed && fixture_ok,
        format!(
            "partition {}/{}/{}/{} (both/teacher-only/student-only/neither) covers {total} of {count}; {} student-only examples emitted{}; fixture lands in student-only: {fixture_ok}",
            s.both_correct,
            s.teacher_only,
            s.student_only,
            s.both_wrong,
            w.student_only.len(),
            if sample.is_empty() { String::new() } else { format!(" e.g. {}", sample.join(", ")) }
        ),
    ))
}

// ---------------------------------------------------------------- 8

const SMALL_CONFIG: &str = r#"{
  "task": {"words_per_script": 600, "len_max": 7, "tables": {"n_scripts": 3, "alphabet_size": 10}},
  "model": {"d_model": 32, "n_heads": 2, "n_layers": 1, "d_ff": 64},
  "teacher": {"epochs": 12, "batch_size": 32, "lr": 0.003, "warmup_steps": 50, "patience": 12},
  "encoder": {"epochs": 6, "batch_size": 32, "lr": 0.003, "dropout": false, "patience": 6},
  "decoder": {"epochs": 4, "batch_size": 32, "lr": 0.003, "dropout": false, "patience": 4}
}"#;

fn scripted_run(dir: &Path) -> Result<(Vec<Vec<u8>>, serde_json::Value)> {
    let cfg = dir.join("config.json");
    std::fs::write(&cfg, SMALL_CONFIG).map_err(|e| Error::io(&cfg, e))?;
    let common = [
        "acceptance",
        "--seed",
        "11",
        "--config",
        cfg.to_str().unwrap(),
        "--work-dir",
        dir.to_str().unwrap(),
    ];
    for cmd in [
        "gen-data",
        "train-teacher",
        "distill-encoder",
        "finetune-decoder",
        "eval",
    ] {
        let code = dispatch(common.iter().copied().chain([cmd]));
        if code != 0 {
            return Err(Error::Pipeline(format!("`{cmd}` exited with {code}")));
        }
    }
    let read = |p: &Path| std::fs::read(p).map_err(|e| Error::io(p, e));
    let files = vec![
        read(&dir.join("data").join(CORPUS_FILE))?,
        read(&dir.join("data").join("train.bi.tsv"))?,
        read(&dir.join("teacher.ckpt"))?,
        read(&dir.join("student-encoder.ckpt"))?,
        read(&dir.join("student.ckpt"))?,
        read(&dir.join("report").join("words.tsv"))?,
    ];
    let mut metrics: serde_json::Value = serde_json::from_slice(&read(&dir.join("report").join("metrics.json"))?)
        .map_err(|e| Error::Pipeline(e.to_string()))?;
    metrics["provenance"]["timestamp"] = serde_json::Value::Null;
    Ok((files, metrics))
}

fn determinism() -> Result<Verdict> {
    let t = Instant::now();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (fa, ma) = scripted_run(a.path())?;
    let (fb, mb) = scripted_run(b.path())?;
    let same_files = fa == fb;
    let same_metrics = ma == mb;
    let digest = |bytes: &[u8]| pipeline_distill::cli::hex(&bytes[bytes.len() - 32..])[..12].to_string();
    Ok(verdict(
        same_files && same_metrics,
        format!(
            "two scripted runs at reduced scale: datasets, checkpoints (teacher {}, student {}) and word records identical: {same_files}; metrics identical: {same_metrics}; {:.0} s",
            digest(&fa[2]),
            digest(&fa[4]),
            t.elapsed().as_secs_f64()
        ),
    ))
}

fn report(n: usize, name: &str, v: Result<Verdict>) -> bool {
    let v = v.unwrap_or_else(|e| verdict(false, format!("error: {e}")));
    println!(
        "criterion {n} [{}] {name}: {}",
        if v.pass { "PASS" } else { "FAIL" },
        v.detail
    );
    v.pass
}

fn main() {
    let start = Instant::now();
    let mut lines = Vec::new();
    lines.push(report(1, "gradient suite", gradient_suite()));
    lines.push(report(2, "CER oracle", cer_oracle()));

    let dir = tempfile::tempdir().unwrap();
    match main_run(dir.path(), 7) {
        Ok(run) => {
            lines.push(report(3, "teacher quality gate", Ok(teacher_gate(&run))));
            lines.push(report(4, "encoder distillation", Ok(encoder_distillation(&run))));
            lines.push(report(5, "end-to-end fidelity", end_to_end(&run)));
            lines.push(report(6, "latency", latency(&run)));
            lines.push(report(7, "freeze invariance", freeze_invariance(&run)));
            lines.push(report(8, "determinism", determinism()));
            lines.push(report(9, "emergent-win machinery", emergent_wins(&run)));
        }
        Err(e) => {
            for (n, name) in [
                (3, "teacher quality gate"),
                (4, "encoder distillation"),
                (5, "end-to-end fidelity"),
                (6, "latency"),
                (7, "freeze invariance"),
            ] {
                lines.push(report(n, name, Err(Error::Pipeline(format!("main run failed: {e}")))));
            }
            lines.push(report(8, "determinism", determinism()));
            lines.push(report(9, "emergent-win machinery", Err(e)));
        }
    }
    let passed = lines.iter().filter(|&&p| p).count();
    println!(
        "acceptance: {passed}/{} criteria passed in {:.0} s",
        lines.len(),
        start.elapsed().as_secs_f64()
    );
    if passed != lines.len() {
        std::process::exit(1);
    }
}
