use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Substitutions, deletions, insertions and matches of an optimal alignment.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditCounts {
    pub s: usize,
    pub d: usize,
    pub i: usize,
    pub c: usize,
}

impl EditCounts {
    pub fn errors(&self) -> usize {
        self.s + self.d + self.i
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Step {
    Match,
    Sub,
    Del,
    Ins,
}

/// Levenshtein alignment of `hypothesis` against `reference`. Among optimal
/// alignments the backtrace prefers match, then substitution, deletion and
/// insertion.
pub fn edit_counts<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> EditCounts {
    let (n, m) = (reference.len(), hypothesis.len());
    let w = m + 1;
    let mut cost = vec![0usize; (n + 1) * w];
    for i in 0..=n {
        cost[i * w] = i;
    }
    for j in 0..=m {
        cost[j] = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let diag = cost[(i - 1) * w + j - 1] + usize::from(reference[i - 1] != hypothesis[j - 1]);
            let del = cost[(i - 1) * w + j] + 1;
            let ins = cost[i * w + j - 1] + 1;
            cost[i * w + j] = diag.min(del).min(ins);
        }
    }

    let mut out = EditCounts::default();
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = cost[i * w + j];
        let step = if i > 0 && j > 0 && reference[i - 1] == hypothesis[j - 1] && cost[(i - 1) * w + j - 1] == here {
            Step::Match
        } else if i > 0 && j > 0 && cost[(i - 1) * w + j - 1] + 1 == here {
            Step::Sub
        } else if i > 0 && cost[(i - 1) * w + j] + 1 == here {
            Step::Del
        } else {
            Step::Ins
        };
        match step {
            Step::Match => {
                out.c += 1;
                i -= 1;
                j -= 1;
            }
            Step::Sub => {
                out.s += 1;
                i -= 1;
                j -= 1;
            }
            Step::Del => {
                out.d += 1;
                i -= 1;
            }
            Step::Ins => {
                out.i += 1;
                j -= 1;
            }
        }
    }
    out
}

/// Character error rate `(S + D + I) / (S + D + I + C)`.
pub fn cer<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> Result<f64> {
    if reference.is_empty() && hypothesis.is_empty() {
        return Err(Error::UndefinedMetric("CER of two empty sequences".into()));
    }
    let e = edit_counts(reference, hypothesis);
    Ok(e.errors() as f64 / (e.errors() + e.c) as f64)
}

/// CER of `hypothesis` against the closest of several acceptable references.
pub fn min_cer<'a, I>(references: I, hypothesis: &str) -> Result<f64>
where
    I: IntoIterator<Item = &'a String>,
{
    let h: Vec<char> = hypothesis.chars().collect();
    let mut best: Option<f64> = None;
    for r in references {
        let r: Vec<char> = r.chars().collect();
        let v = cer(&r, &h)?;
        best = Some(best.map_or(v, |b: f64| b.min(v)));
    }
    best.ok_or_else(|| Error::UndefinedMetric("no reference to score against".into()))
}
