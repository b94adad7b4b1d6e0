use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng;

use super::tables::{PivotTable, ScriptSpec};
use crate::error::{Error, Result};
use crate::rng;

/// Number of distinct words with lengths in `len_min..=len_max`.
pub fn distinct_words(k: usize, len_min: usize, len_max: usize) -> u128 {
    (len_min..=len_max)
        .map(|l| (k as u128).checked_pow(l as u32).unwrap_or(u128::MAX))
        .fold(0u128, u128::saturating_add)
}

fn check_lengths(len_min: usize, len_max: usize) -> Result<()> {
    if len_min == 0 || len_min > len_max {
        return Err(Error::Input(format!(
            "word lengths {len_min}..={len_max} are not a non-empty positive range"
        )));
    }
    Ok(())
}

fn draw(rng: &mut impl Rng, script: &ScriptSpec, len_min: usize, len_max: usize) -> String {
    let len = rng.gen_range(len_min..=len_max);
    (0..len)
        .map(|_| script.alphabet[rng.gen_range(0..script.size())])
        .collect()
}

/// `n` distinct words, length uniform in `len_min..=len_max`, characters
/// uniform over the alphabet. Order is the order of first draw.
pub fn sample_words(n: usize, len_min: usize, len_max: usize, script: &ScriptSpec, seed: u64) -> Result<Vec<String>> {
    sample_words_where(n, len_min, len_max, script, seed, |_| Ok(true))
}

/// As [`sample_words`], keeping only words whose longest pivot rendering has
/// at most `max_pivot` characters.
pub fn sample_words_fitting(
    n: usize,
    len_min: usize,
    len_max: usize,
    script: &ScriptSpec,
    tables: &PivotTable,
    max_pivot: usize,
    seed: u64,
) -> Result<Vec<String>> {
    sample_words_where(n, len_min, len_max, script, seed, |w| {
        Ok(tables.max_pivot_len(w, &script.name)? <= max_pivot)
    })
}

fn sample_words_where(
    n: usize,
    len_min: usize,
    len_max: usize,
    script: &ScriptSpec,
    seed: u64,
    mut keep: impl FnMut(&str) -> Result<bool>,
) -> Result<Vec<String>> {
    check_lengths(len_min, len_max)?;
    let available = distinct_words(script.size(), len_min, len_max);
    if n as u128 > available {
        return Err(Error::Exhausted {
            requested: n,
            available,
        });
    }
    let mut rng = rng::stream(seed, 0);
    let mut seen = HashSet::with_capacity(n);
    let mut out = Vec::with_capacity(n);
    let budget = 1000 * n + 100_000;
    let mut tries = 0;
    while out.len() < n {
        if tries == budget {
            return Err(Error::Exhausted {
                requested: n,
                available: out.len() as u128,
            });
        }
        tries += 1;
        let w = draw(&mut rng, script, len_min, len_max);
        if seen.insert(w.clone()) && keep(&w)? {
            out.push(w);
        }
    }
    Ok(out)
}

/// Seeded shuffle, then the last `test_fraction` of words become the test set.
pub fn split_words(words: &[String], test_fraction: f64, seed: u64) -> Result<(Vec<String>, Vec<String>)> {
    if !(0.0..1.0).contains(&test_fraction) {
        return Err(Error::Input(format!("test fraction {test_fraction} outside [0, 1)")));
    }
    let mut w = words.to_vec();
    w.shuffle(&mut rng::stream(seed, 0));
    let n_test = (words.len() as f64 * test_fraction).round() as usize;
    let test = w.split_off(w.len() - n_test);
    Ok((w, test))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taskgen::{build_tables, TableConfig};
    use proptest::prelude::*;

    fn script() -> ScriptSpec {
        build_tables(0, &TableConfig::default()).unwrap().0.remove(0)
    }

    #[test]
    fn zero_words() {
        assert!(sample_words(0, 3, 10, &script(), 1).unwrap().is_empty());
    }

    #[test]
    fn exhaustion_detected() {
        let s = script();
        // 16 + 256 words of length 1..=2.
        assert_eq!(distinct_words(16, 1, 2), 272);
        assert_eq!(sample_words(272, 1, 2, &s, 3).unwrap().len(), 272);
        assert!(matches!(
            sample_words(273, 1, 2, &s, 3),
            Err(Error::Exhausted {
                requested: 273,
                available: 272
            })
        ));
    }

    #[test]
    fn split_partitions_words() {
        let words = sample_words(200, 3, 6, &script(), 8).unwrap();
        let (train, test) = split_words(&words, 0.1, 2).unwrap();
        assert_eq!((train.len(), test.len()), (180, 20));
        let mut all: Vec<_> = train.iter().chain(&test).cloned().collect();
        all.sort();
        let mut orig = words.clone();
        orig.sort();
        assert_eq!(all, orig);
    }

    #[test]
    fn fitting_words_respect_pivot_bound() {
        let (scripts, t) = build_tables(1, &TableConfig::default()).unwrap();
        let w = sample_words_fitting(300, 3, 10, &scripts[0], &t, 14, 5).unwrap();
        assert!(w.iter().all(|w| t.max_pivot_len(w, &scripts[0].name).unwrap() <= 14));
    }

    proptest! {
        #[test]
        fn words_are_bounded_distinct_and_seeded(n in 0usize..300, lo in 1usize..5, extra in 0usize..5, seed: u64) {
            let s = script();
            let hi = lo + extra;
            let n = n.min(distinct_words(16, lo, hi) as usize);
            let w = sample_words(n, lo, hi, &s, seed).unwrap();
            prop_assert_eq!(w.len(), n);
            let set: HashSet<_> = w.iter().collect();
            prop_assert_eq!(set.len(), n);
            for x in &w {
                let l = x.chars().count();
                prop_assert!(l >= lo && l <= hi);
                prop_assert!(x.chars().all(|c| s.contains(c)));
            }
            prop_assert_eq!(w, sample_words(n, lo, hi, &s, seed).unwrap());
        }
    }
}
