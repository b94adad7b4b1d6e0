//! Synthetic pivot-chained transliteration task.
//!
//! Each script is a block of Unicode letters; the pivot is lowercase Latin.
//! Every script character has one or two pivot spellings, and every pivot
//! spelling belongs to exactly one character per script, so a word's chained
//! translation into any other script is computable exactly.

mod corpus;
mod dataset;
mod io;
mod tables;
mod words;

pub use corpus::{build_corpus, Corpus, TaskConfig};
pub use dataset::{
    build_vocab, chained_ground_truth, make_dataset, render_words, ChainedExample, DatasetFormat, Direction,
    ScriptWords, TransliterationPair,
};
pub(crate) use io::write_atomic;
pub use io::{read_allowed, read_pairs, write_allowed, write_pairs};
pub use tables::{build_tables, PivotTable, ScriptMap, ScriptSpec, TableConfig, PIVOT};
pub use words::{distinct_words, sample_words, sample_words_fitting, split_words};
