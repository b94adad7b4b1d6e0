use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use super::config::{RunConfig, Variant};
use super::run::{
    bench_phase, distill_encoder_phase, eval_phase, finetune_decoder_phase, gen_data, load_corpus, train_teacher_phase,
    Layout,
};
use crate::error::{Error, Result};

#[derive(Debug, Parser)]
#[command(
    name = "pipeline-distill",
    version,
    about = "Condense a two-stage pivot transliteration pipeline into one student model"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed for every random choice in the run.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory that relative config paths resolve against.
    #[arg(long, global = true)]
    work_dir: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate the synthetic corpus and its datasets.
    GenData {
        #[arg(long)]
        words_per_script: Option<usize>,
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the multilingual teacher on bidirectional pairs.
    TrainTeacher {
        #[arg(long)]
        epochs: Option<usize>,
        /// Output checkpoint.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Align a student encoder with the frozen teacher encoder.
    DistillEncoder {
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        teacher: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Finetune a copy of the teacher decoder on student encodings.
    FinetuneDecoder {
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long, value_enum)]
        variant: Option<Variant>,
        #[arg(long)]
        teacher: Option<PathBuf>,
        #[arg(long)]
        student_encoder: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score pipeline and student on held-out words.
    Eval {
        #[arg(long, value_enum)]
        variant: Option<Variant>,
        #[arg(long)]
        teacher: Option<PathBuf>,
        #[arg(long)]
        student: Option<PathBuf>,
        /// Report directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Time single-word inference through pipeline and student.
    Bench {
        #[arg(long, value_enum)]
        variant: Option<Variant>,
        #[arg(long)]
        teacher: Option<PathBuf>,
        #[arg(long)]
        student: Option<PathBuf>,
        #[arg(long)]
        words: Option<usize>,
        #[arg(long)]
        repetitions: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Flag paths are taken relative to the current directory.
fn from_cwd(p: PathBuf) -> Result<PathBuf> {
    if p.is_absolute() {
        return Ok(p);
    }
    let cwd = std::env::current_dir().map_err(|e| Error::io(".", e))?;
    Ok(cwd.join(p))
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn set_path(slot: &mut PathBuf, value: Option<PathBuf>) -> Result<()> {
    if let Some(v) = value {
        *slot = from_cwd(v)?;
    }
    Ok(())
}

fn resolve(cli: Cli) -> Result<(RunConfig, Command)> {
    let mut cfg = match &cli.common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if cli.common.seed.is_some() {
        cfg.seed = cli.common.seed;
    }
    set_path(&mut cfg.paths.work_dir, cli.common.work_dir.clone())?;
    let p = &mut cfg.paths;
    match &cli.command {
        Command::GenData { words_per_script, out } => {
            set(&mut cfg.task.words_per_script, *words_per_script);
            set_path(&mut p.data_dir, out.clone())?;
        }
        Command::TrainTeacher { epochs, out } => {
            set(&mut cfg.teacher.epochs, *epochs);
            set_path(&mut p.teacher, out.clone())?;
        }
        Command::DistillEncoder { epochs, teacher, out } => {
            set(&mut cfg.encoder.epochs, *epochs);
            set_path(&mut p.teacher, teacher.clone())?;
            set_path(&mut p.student_encoder, out.clone())?;
        }
        Command::FinetuneDecoder {
            epochs,
            variant,
            teacher,
            student_encoder,
            out,
        } => {
            set(&mut cfg.decoder.epochs, *epochs);
            set(&mut cfg.variant, *variant);
            set_path(&mut p.teacher, teacher.clone())?;
            set_path(&mut p.student_encoder, student_encoder.clone())?;
            set_path(&mut p.student, out.clone())?;
        }
        Command::Eval {
            variant,
            teacher,
            student,
            out,
        } => {
            set(&mut cfg.variant, *variant);
            set_path(&mut p.teacher, teacher.clone())?;
            set_path(&mut p.student, student.clone())?;
            set_path(&mut p.report, out.clone())?;
        }
        Command::Bench {
            variant,
            teacher,
            student,
            words,
            repetitions,
            out,
        } => {
            set(&mut cfg.variant, *variant);
            set_path(&mut p.teacher, teacher.clone())?;
            set_path(&mut p.student, student.clone())?;
            set_path(&mut p.bench, out.clone())?;
            set(&mut cfg.bench.words, *words);
            set(&mut cfg.bench.repetitions, *repetitions);
        }
    }
    Ok((cfg, cli.command))
}

fn execute(cfg: &RunConfig, command: &Command) -> Result<()> {
    let layout = Layout::new(cfg);
    if let Command::GenData { .. } = command {
        gen_data(cfg, &layout)?;
        return Ok(());
    }
    let corpus = load_corpus(&layout)?;
    if corpus.seed != cfg.seed()? {
        return Err(Error::Config(format!(
            "corpus in {} was generated with a different seed",
            layout.data_dir.display()
        )));
    }
    match command {
        Command::GenData { .. } => unreachable!(),
        Command::TrainTeacher { .. } => drop(train_teacher_phase(cfg, &layout, &corpus)?),
        Command::DistillEncoder { .. } => drop(distill_encoder_phase(cfg, &layout, &corpus)?),
        Command::FinetuneDecoder { .. } => drop(finetune_decoder_phase(cfg, &layout, &corpus)?),
        Command::Eval { .. } => drop(eval_phase(cfg, &layout, &corpus)?),
        Command::Bench { .. } => drop(bench_phase(cfg, &layout, &corpus)?),
    }
    Ok(())
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// process exit code: 0 on success, 1 on a runtime failure, 2 on a usage
/// error.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let (cfg, command) = match resolve(cli) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    if let Err(e) = cfg.seed() {
        eprintln!("error: {e}");
        return 2;
    }
    println!("resolved config:\n{}", cfg.to_json());
    match execute(&cfg, &command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn usage_errors_exit_two() {
        assert_eq!(dispatch(["pipeline-distill", "frobnicate"]), 2);
        assert_eq!(dispatch(["pipeline-distill", "eval", "--bogus"]), 2);
        assert_eq!(dispatch(["pipeline-distill", "gen-data"]), 2);
        assert_eq!(dispatch(["pipeline-distill", "--help"]), 0);
    }

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"seed": 1, "teacher": {"epochs": 3}}"#).unwrap();
        let cli = Cli::try_parse_from([
            "x",
            "train-teacher",
            "--config",
            path.to_str().unwrap(),
            "--seed",
            "4",
            "--epochs",
            "7",
        ])
        .unwrap();
        let (cfg, _) = resolve(cli).unwrap();
        assert_eq!(cfg.seed, Some(4));
        assert_eq!(cfg.teacher.epochs, 7);
    }

    #[test]
    fn eval_without_student_is_missing_input() {
        let dir = tempfile::tempdir().unwrap();
        let w = dir.path().to_str().unwrap();
        let base = ["x", "--seed", "3", "--work-dir", w];
        let gen: Vec<&str> = base
            .iter()
            .copied()
            .chain(["gen-data", "--words-per-script", "120"])
            .collect();
        assert_eq!(dispatch(gen.clone()), 0);
        let (cfg, _) = resolve(Cli::try_parse_from(gen).unwrap()).unwrap();
        let layout = Layout::new(&cfg);
        let corpus = load_corpus(&layout).unwrap();
        assert!(matches!(
            eval_phase(&cfg, &layout, &corpus),
            Err(Error::MissingInput(_))
        ));
        assert_eq!(dispatch(base.iter().copied().chain(["eval"])), 1);
        let other_seed = ["x", "--seed", "4", "--work-dir", w, "train-teacher"];
        assert_eq!(dispatch(other_seed), 1);
    }
}
