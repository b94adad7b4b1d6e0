//! Every subcommand in order, at a scale that finishes in about a minute.
//! The same sequence from a shell:
//!
//! ```text
//! pipeline-distill --seed 7 --config small.json --work-dir run gen-data
//! pipeline-distill --seed 7 --config small.json --work-dir run train-teacher
//! ...
//! ```
//!
//! cargo run --release --example scripted_run

use pipeline_distill::cli::dispatch;

const CONFIG: &str = r#"{
  "task": {"words_per_script": 600, "len_max": 7, "tables": {"n_scripts": 3, "alphabet_size": 10}},
  "model": {"d_model": 32, "n_heads": 2, "n_layers": 1, "d_ff": 64},
  "teacher": {"epochs": 12, "batch_size": 32, "lr": 0.003, "warmup_steps": 50, "patience": 12},
  "encoder": {"epochs": 6, "batch_size": 32, "lr": 0.003, "dropout": false, "patience": 6},
  "decoder": {"epochs": 4, "batch_size": 32, "lr": 0.003, "dropout": false, "patience": 4},
  "bench": {"words": 200, "repetitions": 10}
}"#;

fn main() {
    let dir = std::env::temp_dir().join("pipeline-distill-scripted-run");
    std::fs::create_dir_all(&dir).expect("temp dir");
    let config = dir.join("small.json");
    std::fs::write(&config, CONFIG).expect("write config");
    let common = [
        "pipeline-distill",
        "--seed",
        "7",
        "--config",
        config.to_str().unwrap(),
        "--work-dir",
        dir.to_str().unwrap(),
    ];
    for cmd in [
        "gen-data",
        "train-teacher",
        "distill-encoder",
        "finetune-decoder",
        "eval",
        "bench",
    ] {
        println!("== {cmd}");
        let code = dispatch(common.iter().copied().chain([cmd]));
        if code != 0 {
            std::process::exit(code);
        }
    }
    println!("outputs in {}", dir.display());
}
