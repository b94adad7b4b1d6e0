//! Vocabulary, the encoder–decoder transformer, batching and inference.

mod batch;
mod config;
mod encoded;
mod infer;
mod model;
mod vocab;

pub use batch::{DecoderBatch, EncoderBatch, Frame, MemoryLayout};
pub use config::{ModelConfig, LN_EPS};
pub use encoded::EncodedMatrix;
pub use infer::{constrained_argmax, decode_greedy, decode_greedy_batch, encode, encode_batch, teacher_forcing_logits};
pub use model::{
    check_pair, init_model, AttentionParams, DecoderLayer, DecoderParams, EncoderLayer, EncoderParams,
    FeedForwardParams, LayerNormParams,
};
pub use vocab::{TokenId, TokenSequence, Vocab, VocabListing, EOS, PAD, SOS};
