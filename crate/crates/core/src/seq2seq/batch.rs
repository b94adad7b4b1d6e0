//! Packing variable-length words into one row matrix per batch.
//!
//! Each word occupies a contiguous block of rows; attention is confined to
//! the word's block through [`Segment`]s, so packing never mixes words.

use super::vocab::{TokenSequence, EOS, PAD, SOS};
use super::EncodedMatrix;
use crate::error::{Error, Result};
use crate::tensor::kernels::Segment;

/// How many query rows the encoder computes per word.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Frame {
    /// SOS + content + EOS only.
    Own,
    /// All `max_len` rows; rows past EOS are PAD queries attending to the
    /// word's valid positions.
    Full,
}

#[derive(Clone, Debug)]
pub struct EncoderBatch {
    pub tokens: Vec<u32>,
    pub positions: Vec<usize>,
    pub segments: Vec<Segment>,
    /// Valid (non-PAD) rows of each word.
    pub valid: Vec<usize>,
    pub max_len: usize,
}

impl EncoderBatch {
    pub fn new(words: &[&TokenSequence], max_len: usize, frame: Frame) -> Result<Self> {
        let mut b = EncoderBatch {
            tokens: Vec::new(),
            positions: Vec::new(),
            segments: Vec::with_capacity(words.len()),
            valid: Vec::with_capacity(words.len()),
            max_len,
        };
        for w in words {
            let valid = w.len() + 2;
            if valid > max_len {
                return Err(Error::Length { len: w.len(), max_len });
            }
            let rows = match frame {
                Frame::Own => valid,
                Frame::Full => max_len,
            };
            let start = b.tokens.len();
            b.tokens.push(SOS);
            b.tokens.extend_from_slice(&w.ids);
            b.tokens.push(EOS);
            b.tokens.resize(start + rows, PAD);
            b.positions.extend(0..rows);
            b.segments.push(Segment {
                q_start: start,
                q_len: rows,
                k_start: start,
                k_len: valid,
                causal: false,
            });
            b.valid.push(valid);
        }
        Ok(b)
    }

    pub fn rows(&self) -> usize {
        self.tokens.len()
    }

    /// Splits packed encoder output into per-word matrices. With
    /// [`Frame::Own`] the mask covers the word's valid rows; with
    /// [`Frame::Full`] every row is valid.
    pub fn to_matrices(&self, packed: &[f32], d_model: usize) -> Result<Vec<EncodedMatrix>> {
        if packed.len() != self.rows() * d_model {
            return Err(Error::Shape(format!(
                "{} values for {} packed rows of width {d_model}",
                packed.len(),
                self.rows()
            )));
        }
        self.segments
            .iter()
            .map(|s| {
                let rows = &packed[s.q_start * d_model..(s.q_start + s.q_len) * d_model];
                EncodedMatrix::from_prefix(rows, d_model, self.max_len)
            })
            .collect()
    }

    /// Memory layout for a decoder attending to this batch's output, over
    /// each word's valid rows.
    pub fn memory_layout(&self) -> MemoryLayout {
        MemoryLayout {
            blocks: self.segments.iter().map(|s| (s.q_start, s.k_len)).collect(),
        }
    }
}

/// Where each word's encoder rows live in a packed memory matrix.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MemoryLayout {
    /// `(first row, row count)` per word.
    pub blocks: Vec<(usize, usize)>,
}

impl MemoryLayout {
    /// Packs the valid rows of each matrix; returns the rows and their layout.
    pub fn pack(matrices: &[&EncodedMatrix]) -> Result<(Vec<f32>, Self)> {
        let mut data = Vec::new();
        let mut blocks = Vec::with_capacity(matrices.len());
        let mut row = 0;
        for m in matrices {
            let n = m.valid_len();
            if n == 0 {
                return Err(Error::Shape("encoded matrix with no valid rows".into()));
            }
            data.extend_from_slice(m.valid_rows());
            blocks.push((row, n));
            row += n;
        }
        Ok((data, MemoryLayout { blocks }))
    }

    pub fn rows(&self) -> usize {
        self.blocks.last().map_or(0, |(s, n)| s + n)
    }

    pub(crate) fn cross_segments(&self, dec: &DecoderBatch) -> Result<Vec<Segment>> {
        if self.blocks.len() != dec.segments.len() {
            return Err(Error::Shape(format!(
                "{} memory blocks for {} decoder sequences",
                self.blocks.len(),
                dec.segments.len()
            )));
        }
        Ok(dec
            .segments
            .iter()
            .zip(&self.blocks)
            .map(|(s, &(k_start, k_len))| Segment {
                q_start: s.q_start,
                q_len: s.q_len,
                k_start,
                k_len,
                causal: false,
            })
            .collect())
    }
}

/// Teacher-forced decoder inputs: each word contributes `lang, y_0..y_{n-1}`
/// as input and `y_0..y_{n-1}, EOS` as targets.
#[derive(Clone, Debug)]
pub struct DecoderBatch {
    pub tokens: Vec<u32>,
    pub positions: Vec<usize>,
    pub segments: Vec<Segment>,
    pub targets: Vec<u32>,
}

impl DecoderBatch {
    pub fn teacher_forcing(targets: &[&TokenSequence], max_len: usize) -> Result<Self> {
        let mut b = DecoderBatch {
            tokens: Vec::new(),
            positions: Vec::new(),
            segments: Vec::with_capacity(targets.len()),
            targets: Vec::new(),
        };
        for t in targets {
            let rows = t.len() + 1;
            if rows > max_len {
                return Err(Error::Length { len: t.len(), max_len });
            }
            let start = b.tokens.len();
            b.tokens.push(t.lang);
            b.tokens.extend_from_slice(&t.ids);
            b.targets.extend_from_slice(&t.ids);
            b.targets.push(EOS);
            b.positions.extend(0..rows);
            b.segments.push(Segment {
                q_start: start,
                q_len: rows,
                k_start: start,
                k_len: rows,
                causal: true,
            });
        }
        Ok(b)
    }

    pub fn rows(&self) -> usize {
        self.tokens.len()
    }
}
