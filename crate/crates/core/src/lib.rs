//! Condensing a chained two-stage encoder–decoder pipeline into one model.
//!
//! A teacher seq2seq transformer trained on both directions of a pivot
//! transliteration task is run twice (source → pivot → target). The student
//! replaces the first stage: its encoder is aligned to the teacher's encoding
//! of the pivot word, then a copy of the teacher decoder is finetuned on the
//! student's encodings.
//!
//! Modules, bottom up:
//! - [`tensor`]: tensors, reverse-mode tape, Adam
//! - [`seq2seq`]: vocabulary and the encoder–decoder transformer
//! - [`taskgen`]: the synthetic pivot-chained task and its datasets
//! - [`distill`]: teacher training, pipeline runner, the two distillation phases
//! - [`eval`]: CER, phonetic accuracy, similarity, latency, win partition
//! - [`cli`]: run configuration, checkpoints, reports, subcommands

pub mod cli;
pub mod distill;
pub mod error;
pub mod eval;
pub(crate) mod rng;
pub mod seq2seq;
pub mod taskgen;
pub mod tensor;

pub use error::{Error, Result};
