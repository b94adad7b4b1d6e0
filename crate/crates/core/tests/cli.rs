//! The real binary, end to end at small scale.

use std::path::Path;
use std::process::Command;

const CONFIG: &str = r#"{
  "task": {"words_per_script": 300, "len_max": 6, "tables": {"n_scripts": 2, "alphabet_size": 8}},
  "model": {"d_model": 16, "n_heads": 2, "n_layers": 1, "d_ff": 32},
  "teacher": {"epochs": 6, "batch_size": 32, "lr": 0.003, "warmup_steps": 20, "patience": 6},
  "encoder": {"epochs": 2, "batch_size": 32, "lr": 0.003, "dropout": false},
  "decoder": {"epochs": 2, "batch_size": 32, "lr": 0.003, "dropout": false},
  "bench": {"words": 40, "repetitions": 10}
}"#;

fn run(dir: &Path, args: &[&str]) -> i32 {
    let out = Command::new(env!("CARGO_BIN_EXE_pipeline-distill"))
        .args(["--config", dir.join("c.json").to_str().unwrap()])
        .args(["--work-dir", dir.to_str().unwrap()])
        .args(args)
        .output()
        .unwrap();
    out.status.code().unwrap()
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.json"), CONFIG).unwrap();
    assert_eq!(run(dir.path(), &["gen-data"]), 2);
    assert_eq!(run(dir.path(), &["--seed", "1", "frobnicate"]), 2);
    assert_eq!(run(dir.path(), &["--seed", "1", "eval", "--variant", "sideways"]), 2);
}

#[test]
fn subcommands_run_in_order_and_write_their_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("c.json"), CONFIG).unwrap();
    let seed = ["--seed", "5"];

    // nothing to evaluate yet
    assert_eq!(run(d, &[&seed[..], &["train-teacher"]].concat()), 1);

    for cmd in ["gen-data", "train-teacher", "distill-encoder", "finetune-decoder", "eval", "bench"] {
        assert_eq!(run(d, &[&seed[..], &[cmd]].concat()), 0, "{cmd}");
    }
    for f in [
        "data/corpus.json",
        "data/test.chained.tsv",
        "teacher.ckpt",
        "student-encoder.ckpt",
        "student.ckpt",
        "report/words.tsv",
        "report/similarity.tsv",
        "bench.json",
    ] {
        assert!(d.join(f).is_file(), "{f} missing");
    }
    let metrics: serde_json::Value =
        serde_json::from_slice(&std::fs::read(d.join("report/metrics.json")).unwrap()).unwrap();
    for key in ["pairs", "overall", "similarity", "wins", "provenance"] {
        assert!(metrics.get(key).is_some(), "metrics.json lacks {key}");
    }
    let bench: serde_json::Value = serde_json::from_slice(&std::fs::read(d.join("bench.json")).unwrap()).unwrap();
    assert_eq!(bench["latency"]["student_passes_per_word"], 2.0);

    // the student checkpoint is not a teacher
    assert_eq!(
        run(d, &[&seed[..], &["distill-encoder", "--teacher", d.join("student.ckpt").to_str().unwrap()]].concat()),
        1
    );
    // a corpus made under another seed is refused
    assert_eq!(run(d, &["--seed", "6", "eval"]), 1);

    // regenerating the data gives the same bytes
    let before = std::fs::read(d.join("data/corpus.json")).unwrap();
    assert_eq!(run(d, &[&seed[..], &["gen-data"]].concat()), 0);
    assert_eq!(std::fs::read(d.join("data/corpus.json")).unwrap(), before);
}
