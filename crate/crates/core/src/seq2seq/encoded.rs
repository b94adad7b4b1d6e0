use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Fixed `max_len × d_model` encoder output with a row validity mask.
///
/// Valid rows always form a prefix. Rows outside the mask are zero.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedMatrix {
    values: Tensor,
    mask: Vec<bool>,
}

impl EncodedMatrix {
    /// Builds a matrix from its valid prefix rows, zero-padding to `max_len`.
    pub fn from_prefix(rows: &[f32], d_model: usize, max_len: usize) -> Result<Self> {
        let valid = rows.len() / d_model;
        if rows.len() % d_model != 0 || valid == 0 || valid > max_len {
            return Err(Error::Shape(format!(
                "{} values do not form 1..={max_len} rows of width {d_model}",
                rows.len()
            )));
        }
        let mut data = vec![0.0; max_len * d_model];
        data[..rows.len()].copy_from_slice(rows);
        let mask = (0..max_len).map(|i| i < valid).collect();
        Ok(Self {
            values: Tensor::new(vec![max_len, d_model], data)?,
            mask,
        })
    }

    /// Wraps raw values and applies `mask` (zeroing masked-out rows).
    pub fn new(values: Tensor, mask: Vec<bool>) -> Result<Self> {
        let (rows, _) = values.dims2()?;
        if values.shape().len() != 2 || mask.len() != rows {
            return Err(Error::Shape(format!(
                "mask of {} rows for values {:?}",
                mask.len(),
                values.shape()
            )));
        }
        if mask.windows(2).any(|w| !w[0] && w[1]) {
            return Err(Error::Shape("validity mask must be a prefix".into()));
        }
        let mut m = Self { values, mask };
        m.apply_mask();
        Ok(m)
    }

    pub fn values(&self) -> &Tensor {
        &self.values
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn max_len(&self) -> usize {
        self.mask.len()
    }

    pub fn d_model(&self) -> usize {
        self.values.shape()[1]
    }

    pub fn valid_len(&self) -> usize {
        self.mask.iter().take_while(|&&m| m).count()
    }

    /// The valid rows, row-major.
    pub fn valid_rows(&self) -> &[f32] {
        &self.values.data()[..self.valid_len() * self.d_model()]
    }

    fn apply_mask(&mut self) {
        let d = self.d_model();
        for (i, &keep) in self.mask.iter().enumerate() {
            if !keep {
                self.values.data_mut()[i * d..(i + 1) * d].fill(0.0);
            }
        }
    }

    /// Same values under another prefix mask; rows it excludes become zero.
    pub fn with_mask(&self, mask: &[bool]) -> Result<Self> {
        Self::new(self.values.clone(), mask.to_vec())
    }

    /// Row-major flattening with masked rows zeroed; length `max_len · d_model`.
    pub fn flatten_masked(&self) -> Tensor {
        let n = self.values.len();
        Tensor::new(vec![n], self.values.data().to_vec()).expect("non-empty")
    }
}
