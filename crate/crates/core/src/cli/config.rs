use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::distill::TrainHyper;
use crate::error::{Error, Result};
use crate::seq2seq::ModelConfig;
use crate::taskgen::TaskConfig;

/// Model shape without the vocabulary size, which comes from the corpus.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelShape {
    pub d_model: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    pub d_ff: usize,
    pub max_len: usize,
    pub dropout: f32,
}

impl Default for ModelShape {
    fn default() -> Self {
        let c = ModelConfig::desk_scale(0);
        Self {
            d_model: c.d_model,
            n_heads: c.n_heads,
            n_layers: c.n_layers,
            d_ff: c.d_ff,
            max_len: c.max_len,
            dropout: c.dropout,
        }
    }
}

impl ModelShape {
    pub fn with_vocab(&self, vocab_size: usize) -> ModelConfig {
        ModelConfig {
            d_model: self.d_model,
            n_heads: self.n_heads,
            n_layers: self.n_layers,
            d_ff: self.d_ff,
            max_len: self.max_len,
            vocab_size,
            dropout: self.dropout,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Decoder learns the teacher pipeline's cross-script outputs.
    General,
    /// Decoder learns to reconstruct the source word.
    Reconstruction,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    pub words: usize,
    pub repetitions: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            words: 500,
            repetitions: 10,
        }
    }
}

/// Where each command reads and writes. Relative paths resolve against
/// `work_dir`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Paths {
    pub work_dir: PathBuf,
    pub data_dir: PathBuf,
    pub teacher: PathBuf,
    pub student_encoder: PathBuf,
    pub student: PathBuf,
    pub report: PathBuf,
    pub bench: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            work_dir: "run".into(),
            data_dir: "data".into(),
            teacher: "teacher.ckpt".into(),
            student_encoder: "student-encoder.ckpt".into(),
            student: "student.ckpt".into(),
            report: "report".into(),
            bench: "bench.json".into(),
        }
    }
}

impl Paths {
    pub fn resolve(&self, p: &Path) -> PathBuf {
        self.work_dir.join(p)
    }
}

fn hyper(epochs: usize, dropout: bool) -> TrainHyper {
    TrainHyper {
        epochs,
        dropout,
        patience: epochs,
        ..TrainHyper::default()
    }
}

/// Everything a scripted run needs. The seed has no default.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub task: TaskConfig,
    pub model: ModelShape,
    pub teacher: TrainHyper,
    pub encoder: TrainHyper,
    pub decoder: TrainHyper,
    pub variant: Variant,
    pub bench: BenchConfig,
    pub paths: Paths,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: None,
            task: TaskConfig::default(),
            model: ModelShape::default(),
            teacher: hyper(16, true),
            encoder: TrainHyper {
                decay: true,
                ..hyper(30, false)
            },
            decoder: TrainHyper {
                decay: true,
                ..hyper(15, false)
            },
            variant: Variant::General,
            bench: BenchConfig::default(),
            paths: Paths::default(),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str, origin: &Path) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::format(origin, e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, path)
    }

    pub fn seed(&self) -> Result<u64> {
        self.seed
            .ok_or_else(|| Error::Config("no seed given; set `seed` in the config or pass --seed".into()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}
