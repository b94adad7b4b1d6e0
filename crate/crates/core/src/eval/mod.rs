//! Scoring of the pipeline and the student on held-out chained pairs.

mod edit;
mod latency;
mod metrics;
mod report;
mod similarity;

pub use edit::{cer, edit_counts, min_cer, EditCounts};
pub use latency::{latency_bench, timer_resolution, LatencyBucket, LatencyTable, MIN_REPETITIONS};
pub use metrics::{
    emergent_partition, exact_accuracy, phonetic_accuracy, student_wins, StudentWin, WinPartition, WinSummary,
};
pub use report::{
    build_report, parse_word_records, predict, similarity_records_tsv, word_records_tsv, EvalReport, Overall,
    PairReport, WinsReport, WordRecord,
};
pub use similarity::{
    encoder_similarity_report, SimilarityCell, SimilarityInput, SimilarityRecord, SimilarityReport, Split,
};
