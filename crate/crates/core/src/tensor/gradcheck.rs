//! Central finite-difference checks of every differentiable tape op.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::kernels::Segment;
use super::{Param, Tape, Tensor, Var};
use crate::error::Result;
use crate::rng;

pub const STEP: f32 = 1e-3;
pub const TOLERANCE: f64 = 1e-3;

/// Outcome for one op. `max_error` is the largest
/// `|analytic − numeric| / max(1, |analytic|, |numeric|)` over all inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheck {
    pub op: &'static str,
    pub max_error: f64,
    pub checked: usize,
}

impl GradCheck {
    pub fn passed(&self) -> bool {
        self.max_error <= TOLERANCE && self.checked > 0
    }
}

type Forward = dyn for<'p> Fn(&mut Tape<'p>, &[Var]) -> Result<Var>;

fn random(r: &mut ChaCha8Rng, shape: &[usize], lo: f32, hi: f32) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| r.gen_range(lo..hi)).collect();
    Tensor::new(shape.to_vec(), data).expect("shape matches")
}

/// Loss `Σ w ⊙ f(inputs)` evaluated in f64, no gradients.
fn probe(inputs: &[Param], weights: &Tensor, f: &Forward, dropout_seed: Option<u64>) -> Result<f64> {
    let mut tape = match dropout_seed {
        Some(s) => Tape::with_dropout(rng::stream(s, 0)),
        None => Tape::new(),
    };
    let vars: Vec<Var> = inputs.iter().map(|p| tape.param(p)).collect();
    let out = f(&mut tape, &vars)?;
    let v = tape.value(out);
    Ok(v.data()
        .iter()
        .zip(weights.data())
        .map(|(a, w)| *a as f64 * *w as f64)
        .sum())
}

fn check(
    op: &'static str,
    mut inputs: Vec<Param>,
    f: &Forward,
    r: &mut ChaCha8Rng,
    dropout_seed: Option<u64>,
) -> Result<GradCheck> {
    let (analytic, weights) = {
        let mut tape = match dropout_seed {
            Some(s) => Tape::with_dropout(rng::stream(s, 0)),
            None => Tape::new(),
        };
        let vars: Vec<Var> = inputs.iter().map(|p| tape.param(p)).collect();
        let out = f(&mut tape, &vars)?;
        let shape = tape.value(out).shape().to_vec();
        let weights = random(r, &shape, -1.0, 1.0);
        let w = tape.constant(weights.clone());
        let prod = tape.mul(out, w)?;
        let loss = tape.sum(prod);
        let grads = tape.backward(loss)?;
        let analytic: Vec<Vec<f32>> = inputs
            .iter()
            .map(|p| {
                grads
                    .get(p.id())
                    .map_or_else(|| vec![0.0; p.value.len()], <[f32]>::to_vec)
            })
            .collect();
        (analytic, weights)
    };
    let mut max_error = 0.0f64;
    let mut checked = 0;
    for k in 0..inputs.len() {
        for i in 0..inputs[k].value.len() {
            let orig = inputs[k].value.data()[i];
            inputs[k].value.data_mut()[i] = orig + STEP;
            let up = probe(&inputs, &weights, f, dropout_seed)?;
            inputs[k].value.data_mut()[i] = orig - STEP;
            let down = probe(&inputs, &weights, f, dropout_seed)?;
            inputs[k].value.data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * STEP as f64);
            let a = analytic[k][i] as f64;
            let err = (a - numeric).abs() / 1f64.max(a.abs()).max(numeric.abs());
            max_error = max_error.max(err);
            checked += 1;
        }
    }
    Ok(GradCheck { op, max_error, checked })
}

fn params(ts: Vec<Tensor>) -> Vec<Param> {
    ts.into_iter()
        .enumerate()
        .map(|(i, t)| Param::new(format!("in{i}"), t))
        .collect()
}

/// Values bounded away from zero so ReLU has no kink within `STEP`.
fn away_from_zero(r: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let mut t = random(r, shape, 0.1, 1.0);
    for v in t.data_mut() {
        if r.gen_bool(0.5) {
            *v = -*v;
        }
    }
    t
}

/// Runs the check for every differentiable op on random inputs with
/// dimensions at most 8.
pub fn check_all_ops(seed: u64) -> Result<Vec<GradCheck>> {
    let mut r = rng::stream(seed, 0);
    let r = &mut r;
    let mut out = Vec::new();

    let ins = params(vec![random(r, &[3, 5], -1.0, 1.0), random(r, &[5, 4], -1.0, 1.0)]);
    out.push(check("matmul", ins, &|t, v| t.matmul(v[0], v[1]), r, None)?);

    let ins = params(vec![random(r, &[4, 3], -1.0, 1.0), random(r, &[4, 3], -1.0, 1.0)]);
    out.push(check("add", ins, &|t, v| t.add(v[0], v[1]), r, None)?);

    let ins = params(vec![random(r, &[4, 3], -1.0, 1.0), random(r, &[4, 3], -1.0, 1.0)]);
    out.push(check("mul", ins, &|t, v| t.mul(v[0], v[1]), r, None)?);

    let ins = params(vec![random(r, &[5, 3], -1.0, 1.0), random(r, &[3], -1.0, 1.0)]);
    out.push(check("add_row", ins, &|t, v| t.add_row(v[0], v[1]), r, None)?);

    let ins = params(vec![random(r, &[3, 4], -1.0, 1.0)]);
    out.push(check("affine", ins, &|t, v| Ok(t.affine(v[0], -1.7, 0.3)), r, None)?);

    let ins = params(vec![away_from_zero(r, &[4, 5])]);
    out.push(check("relu", ins, &|t, v| Ok(t.relu(v[0])), r, None)?);

    let ins = params(vec![random(r, &[3, 6], -2.0, 2.0)]);
    out.push(check("softmax_rows", ins, &|t, v| t.softmax_rows(v[0]), r, None)?);

    let ins = params(vec![
        random(r, &[4, 6], -2.0, 2.0),
        random(r, &[6], 0.5, 1.5),
        random(r, &[6], -0.5, 0.5),
    ]);
    out.push(check(
        "layer_norm",
        ins,
        &|t, v| t.layer_norm(v[0], v[1], v[2], 1e-5),
        r,
        None,
    )?);

    // two packed words: a causal self block and a cross block with fewer keys
    let segs = [
        Segment {
            q_start: 0,
            q_len: 3,
            k_start: 0,
            k_len: 3,
            causal: true,
        },
        Segment {
            q_start: 3,
            q_len: 3,
            k_start: 3,
            k_len: 2,
            causal: false,
        },
    ];
    let ins = params(vec![
        random(r, &[6, 4], -1.0, 1.0),
        random(r, &[6, 4], -1.0, 1.0),
        random(r, &[6, 4], -1.0, 1.0),
    ]);
    out.push(check(
        "attention",
        ins,
        &move |t, v| t.attention(v[0], v[1], v[2], 2, &segs),
        r,
        None,
    )?);

    let ins = params(vec![random(r, &[5, 3], -1.0, 1.0)]);
    out.push(check(
        "embedding",
        ins,
        &|t, v| t.embedding(v[0], &[4, 0, 4, 2]),
        r,
        None,
    )?);

    let ins = params(vec![random(r, &[4, 4], -1.0, 1.0)]);
    let dseed = r.gen();
    out.push(check("dropout", ins, &|t, v| Ok(t.dropout(v[0], 0.3)), r, Some(dseed))?);

    let ins = params(vec![random(r, &[5, 6], -2.0, 2.0)]);
    out.push(check(
        "cross_entropy",
        ins,
        &|t, v| t.cross_entropy(v[0], &[1, 0, 5, 3, 0], 0),
        r,
        None,
    )?);

    let ins = params(vec![random(r, &[3, 4], -1.0, 1.0), random(r, &[3, 4], -1.0, 1.0)]);
    out.push(check(
        "cosine_similarity",
        ins,
        &|t, v| t.cosine_similarity(v[0], v[1]),
        r,
        None,
    )?);

    let ins = params(vec![random(r, &[6, 3], -1.0, 1.0)]);
    out.push(check("slice_rows", ins, &|t, v| t.slice_rows(v[0], 2, 3), r, None)?);

    let ins = params(vec![random(r, &[4, 6], -1.0, 1.0)]);
    out.push(check("reshape", ins, &|t, v| t.reshape(v[0], vec![3, 8]), r, None)?);

    let ins = params(vec![random(r, &[3, 5], -1.0, 1.0)]);
    out.push(check("sum", ins, &|t, v| Ok(t.sum(v[0])), r, None)?);

    let ins = params(vec![random(r, &[2, 3], -1.0, 1.0), random(r, &[3, 2], -1.0, 1.0)]);
    out.push(check(
        "mean",
        ins,
        &|t, v| {
            let a = t.sum(v[0]);
            let b = t.cosine_similarity(v[0], v[1])?;
            t.mean(&[a, b])
        },
        r,
        None,
    )?);

    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_op_matches_finite_differences() {
        for seed in 0..3 {
            for c in check_all_ops(seed).unwrap() {
                assert!(c.passed(), "seed {seed}: {c:?}");
            }
        }
    }

    #[test]
    fn a_wrong_gradient_is_caught() {
        // scaling the output after the fact makes analytic and numeric differ
        let mut r = rng::stream(1, 0);
        let ins = params(vec![random(&mut r, &[2, 2], -1.0, 1.0)]);
        let c = check("affine", ins, &|t, v| Ok(t.affine(v[0], 2.0, 0.0)), &mut r, None).unwrap();
        assert!(c.passed());
        let broken: &Forward = &|t, v| {
            let x = t.value(v[0]).clone();
            let doubled = t.constant(Tensor::new(
                x.shape().to_vec(),
                x.data().iter().map(|a| a * a).collect(),
            )?);
            t.add(v[0], doubled)
        };
        let ins = params(vec![random(&mut r, &[2, 2], 0.5, 1.0)]);
        assert!(!check("broken", ins, broken, &mut r, None).unwrap().passed());
    }
}
