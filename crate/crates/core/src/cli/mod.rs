//! Run configuration, checkpoints, reports and the subcommand front end.

mod checkpoint;
mod config;
mod dispatch;
mod run;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, hex, load_checkpoint, save_checkpoint, Checkpoint, CheckpointHeader, Role,
    MAGIC, VERSION,
};
pub use config::{BenchConfig, ModelShape, Paths, RunConfig, Variant};
pub use dispatch::dispatch;
pub use run::{
    bench_phase, bench_requests, distill_encoder_phase, eval_examples, eval_phase, finetune_decoder_phase, gen_data,
    load_corpus, load_student, load_teacher, relabeled_pairs, single_hop_items, train_teacher_phase, BenchReport,
    DecoderSummary, EncoderSummary, Layout, MetricsReport, Provenance, TeacherSummary, CORPUS_FILE, DEV_EVERY,
};
