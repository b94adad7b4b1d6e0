//! Teacher training, the chained pipeline, and the two distillation phases:
//! student-encoder alignment, then decoder finetuning (general or by
//! reconstruction).

mod decoder;
mod encoder;
mod pipeline;
mod student;
mod teacher;
mod train;

pub use decoder::{
    agreement, decoder_loss, finetune_decoder_general, finetune_decoder_reconstruction, teacher_outputs, Chain,
    DecoderData,
};
pub use encoder::{
    aligned_similarity, alignment_loss, distill_student_encoder, mean_similarity, student_encodings, teacher_encodings,
};
pub use pipeline::{
    from_pivot_batch, pivot_pairs, run_pipeline, run_pipeline_batch, to_pivot_batch, PassCounter, PipelineSpec, Stage,
    Trace,
};
pub use student::{assemble_student, student_encode, Student};
pub use teacher::{greedy_outputs, single_hop_accuracy, teacher_loss, train_teacher, HeldOut, INFER_BATCH};
pub use train::{run_epochs, BatchResult, TrainHyper, TrainLog, Trainable};
