use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::distill::{run_pipeline_batch, PassCounter, PipelineSpec, Student};
use crate::error::{Error, Result};
use crate::seq2seq::{TokenId, TokenSequence, Vocab};

pub const MIN_REPETITIONS: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatencyBucket {
    /// Source word length in characters.
    pub length: usize,
    pub words: usize,
    /// Median per-word wall time over repetitions, microseconds.
    pub pipeline_us: f64,
    pub student_us: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatencyTable {
    pub buckets: Vec<LatencyBucket>,
    pub repetitions: usize,
    pub timer_resolution_ns: u128,
    /// Word-count-weighted averages of the bucket medians.
    pub pipeline_us: f64,
    pub student_us: f64,
    /// `pipeline_us / student_us`.
    pub speedup: f64,
    pub pipeline_passes_per_word: f64,
    pub student_passes_per_word: f64,
}

/// Smallest nonzero step the monotonic clock reports.
pub fn timer_resolution() -> Duration {
    let mut best = Duration::MAX;
    for _ in 0..32 {
        let t0 = Instant::now();
        let mut t1 = Instant::now();
        while t1 == t0 {
            t1 = Instant::now();
        }
        best = best.min(t1 - t0);
    }
    best
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Times single-word inference through the two-stage pipeline and through
/// the student, bucketed by source length. One untimed pass warms up both
/// and counts passes; timed sections run serially on the calling thread.
pub fn latency_bench(
    pipeline: &PipelineSpec,
    student: &Student,
    vocab: &Vocab,
    requests: &[(TokenSequence, TokenId)],
    repetitions: usize,
) -> Result<LatencyTable> {
    if repetitions < MIN_REPETITIONS {
        return Err(Error::Input(format!(
            "{repetitions} repetitions; at least {MIN_REPETITIONS} are required"
        )));
    }
    if requests.is_empty() {
        return Err(Error::Input("no words to time".into()));
    }
    let mut groups: BTreeMap<usize, Vec<&(TokenSequence, TokenId)>> = BTreeMap::new();
    for r in requests {
        groups.entry(r.0.len()).or_default().push(r);
    }

    let run_pipeline = |r: &(TokenSequence, TokenId), c: &PassCounter| -> Result<()> {
        run_pipeline_batch(pipeline, vocab, &[&r.0], &[r.1], c).map(|_| ())
    };
    let run_student = |r: &(TokenSequence, TokenId), c: &PassCounter| -> Result<()> {
        student.translate(vocab, &r.0, r.1, c).map(|_| ())
    };

    let (pc, sc) = (PassCounter::default(), PassCounter::default());
    for r in requests {
        run_pipeline(r, &pc)?;
        run_student(r, &sc)?;
    }
    let n = requests.len() as f64;
    let (pipeline_passes_per_word, student_passes_per_word) = (pc.total() as f64 / n, sc.total() as f64 / n);

    let resolution = timer_resolution();
    let quiet = PassCounter::default();
    let mut samples: BTreeMap<usize, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for _ in 0..repetitions {
        for (&len, words) in &groups {
            let t = Instant::now();
            for r in words {
                run_pipeline(r, &quiet)?;
            }
            let p = t.elapsed();
            let t = Instant::now();
            for r in words {
                run_student(r, &quiet)?;
            }
            let s = t.elapsed();
            for d in [p, s] {
                if d < resolution {
                    return Err(Error::Resolution {
                        resolution_ns: resolution.as_nanos(),
                        measured_ns: d.as_nanos(),
                    });
                }
            }
            let k = words.len() as f64;
            let e = samples.entry(len).or_default();
            e.0.push(p.as_secs_f64() * 1e6 / k);
            e.1.push(s.as_secs_f64() * 1e6 / k);
        }
    }

    let mut buckets = Vec::with_capacity(groups.len());
    for (len, (mut p, mut s)) in samples {
        buckets.push(LatencyBucket {
            length: len,
            words: groups[&len].len(),
            pipeline_us: median(&mut p),
            student_us: median(&mut s),
        });
    }
    let weighted = |f: fn(&LatencyBucket) -> f64| buckets.iter().map(|b| f(b) * b.words as f64).sum::<f64>() / n;
    let (pipeline_us, student_us) = (weighted(|b| b.pipeline_us), weighted(|b| b.student_us));
    Ok(LatencyTable {
        repetitions,
        timer_resolution_ns: resolution.as_nanos(),
        pipeline_us,
        student_us,
        speedup: pipeline_us / student_us,
        pipeline_passes_per_word,
        student_passes_per_word,
        buckets,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distill::assemble_student;
    use crate::seq2seq::{init_model, ModelConfig};

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn resolution_is_positive() {
        assert!(timer_resolution() > Duration::ZERO);
    }

    #[test]
    fn bench_reports_buckets_and_passes() {
        let vocab = Vocab::new(&["a", "p"], &["x", "y"]).unwrap();
        let cfg = ModelConfig {
            d_model: 16,
            n_heads: 2,
            n_layers: 1,
            d_ff: 16,
            ..ModelConfig::desk_scale(vocab.len())
        };
        let (enc, dec) = init_model(&cfg, 0).unwrap();
        let (a, p) = (vocab.lang("a").unwrap(), vocab.lang("p").unwrap());
        let pipe = PipelineSpec::shared(&enc, &dec, p);
        let student = assemble_student(enc.clone(), dec.clone()).unwrap();
        let reqs: Vec<_> = ["x", "xy", "yx", "xyy"]
            .iter()
            .map(|w| (vocab.encode_word(w, a).unwrap(), a))
            .collect();
        assert!(matches!(
            latency_bench(&pipe, &student, &vocab, &reqs, 3),
            Err(Error::Input(_))
        ));
        let t = latency_bench(&pipe, &student, &vocab, &reqs, 10).unwrap();
        assert_eq!(t.buckets.iter().map(|b| b.length).collect::<Vec<_>>(), vec![1, 2, 3]);
        assert_eq!(t.buckets.iter().map(|b| b.words).sum::<usize>(), 4);
        assert_eq!(t.student_passes_per_word, 2.0);
        assert!(t.pipeline_passes_per_word >= 2.0 && t.pipeline_passes_per_word <= 4.0);
    }
}
