use std::borrow::Cow;

use super::kernels::Segment;
use super::{ops, Param, Tape, Tensor, Var};
use crate::error::Result;

pub type AttnSegment = Segment;

/// The operations model code needs, implemented eagerly and on the tape so
/// one forward definition serves both inference and training.
pub trait Backend<'p> {
    type Value: Clone;

    fn param(&mut self, p: &'p Param) -> Self::Value;
    fn constant(&mut self, t: Tensor) -> Self::Value;
    fn value<'s>(&'s self, v: &'s Self::Value) -> &'s Tensor;

    fn matmul(&mut self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value>;
    fn add(&mut self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value>;
    fn add_row(&mut self, x: &Self::Value, bias: &Self::Value) -> Result<Self::Value>;
    fn relu(&mut self, x: &Self::Value) -> Self::Value;
    fn scale(&mut self, x: &Self::Value, s: f32) -> Self::Value;
    fn layer_norm(&mut self, x: &Self::Value, gamma: &Self::Value, beta: &Self::Value, eps: f32)
        -> Result<Self::Value>;
    fn attention(
        &mut self,
        q: &Self::Value,
        k: &Self::Value,
        v: &Self::Value,
        heads: usize,
        segments: &[Segment],
    ) -> Result<Self::Value>;
    fn embedding(&mut self, table: &Self::Value, ids: &[u32]) -> Result<Self::Value>;
    fn dropout(&mut self, x: &Self::Value, p: f32) -> Self::Value;

    fn linear(&mut self, x: &Self::Value, w: &Self::Value, b: &Self::Value) -> Result<Self::Value> {
        let y = self.matmul(x, w)?;
        self.add_row(&y, b)
    }
}

/// Immediate evaluation without gradient bookkeeping. Dropout is the
/// identity.
#[derive(Debug, Default)]
pub struct Eager;

impl<'p> Backend<'p> for Eager {
    type Value = Cow<'p, Tensor>;

    fn param(&mut self, p: &'p Param) -> Self::Value {
        Cow::Borrowed(&p.value)
    }

    fn constant(&mut self, t: Tensor) -> Self::Value {
        Cow::Owned(t)
    }

    fn value<'s>(&'s self, v: &'s Self::Value) -> &'s Tensor {
        v.as_ref()
    }

    fn matmul(&mut self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value> {
        ops::matmul(a, b).map(Cow::Owned)
    }

    fn add(&mut self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value> {
        ops::add(a, b).map(Cow::Owned)
    }

    fn add_row(&mut self, x: &Self::Value, bias: &Self::Value) -> Result<Self::Value> {
        ops::add_row(x, bias).map(Cow::Owned)
    }

    fn relu(&mut self, x: &Self::Value) -> Self::Value {
        Cow::Owned(ops::relu(x))
    }

    fn scale(&mut self, x: &Self::Value, s: f32) -> Self::Value {
        Cow::Owned(ops::scale(x, s))
    }

    fn layer_norm(
        &mut self,
        x: &Self::Value,
        gamma: &Self::Value,
        beta: &Self::Value,
        eps: f32,
    ) -> Result<Self::Value> {
        ops::layer_norm(x, gamma, beta, eps).map(Cow::Owned)
    }

    fn attention(
        &mut self,
        q: &Self::Value,
        k: &Self::Value,
        v: &Self::Value,
        heads: usize,
        segments: &[Segment],
    ) -> Result<Self::Value> {
        ops::attention(q, k, v, heads, segments).map(Cow::Owned)
    }

    fn embedding(&mut self, table: &Self::Value, ids: &[u32]) -> Result<Self::Value> {
        ops::embedding(table, ids).map(Cow::Owned)
    }

    fn dropout(&mut self, x: &Self::Value, _p: f32) -> Self::Value {
        x.clone()
    }
}

impl<'p> Backend<'p> for Tape<'p> {
    type Value = Var;

    fn param(&mut self, p: &'p Param) -> Var {
        Tape::param(self, p)
    }

    fn constant(&mut self, t: Tensor) -> Var {
        Tape::constant(self, t)
    }

    fn value<'s>(&'s self, v: &'s Var) -> &'s Tensor {
        Tape::value(self, *v)
    }

    fn matmul(&mut self, a: &Var, b: &Var) -> Result<Var> {
        Tape::matmul(self, *a, *b)
    }

    fn add(&mut self, a: &Var, b: &Var) -> Result<Var> {
        Tape::add(self, *a, *b)
    }

    fn add_row(&mut self, x: &Var, bias: &Var) -> Result<Var> {
        Tape::add_row(self, *x, *bias)
    }

    fn relu(&mut self, x: &Var) -> Var {
        Tape::relu(self, *x)
    }

    fn scale(&mut self, x: &Var, s: f32) -> Var {
        Tape::affine(self, *x, s, 0.0)
    }

    fn layer_norm(&mut self, x: &Var, gamma: &Var, beta: &Var, eps: f32) -> Result<Var> {
        Tape::layer_norm(self, *x, *gamma, *beta, eps)
    }

    fn attention(&mut self, q: &Var, k: &Var, v: &Var, heads: usize, segments: &[Segment]) -> Result<Var> {
        Tape::attention(self, *q, *k, *v, heads, segments)
    }

    fn embedding(&mut self, table: &Var, ids: &[u32]) -> Result<Var> {
        Tape::embedding(self, *table, ids)
    }

    fn dropout(&mut self, x: &Var, p: f32) -> Var {
        Tape::dropout(self, *x, p)
    }
}
