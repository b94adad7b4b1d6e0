use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Name of the pivot language (lowercase Latin).
pub const PIVOT: &str = "lat";

/// Script names and the first code point of the block each draws from.
const BLOCKS: [(&str, u32, u32); 8] = [
    ("kat", 0x30A1, 90),
    ("hir", 0x3041, 86),
    ("cyr", 0x0430, 32),
    ("geo", 0x10D0, 43),
    ("chr", 0x13A0, 85),
    ("run", 0x16A0, 75),
    ("eth", 0x1200, 73),
    ("arm", 0x0561, 38),
];

/// Letters that always open a two-letter pivot string. Keeping them out of
/// the single-letter strings makes the inventory prefix-free.
const N_LEADS: usize = 3;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptSpec {
    pub name: String,
    pub alphabet: Vec<char>,
}

impl ScriptSpec {
    pub fn size(&self) -> usize {
        self.alphabet.len()
    }

    pub fn contains(&self, ch: char) -> bool {
        self.alphabet.contains(&ch)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptMap {
    /// Pivot variants per character, primary first.
    pub forward: BTreeMap<char, Vec<String>>,
    pub inverse: BTreeMap<String, char>,
}

/// Phonetic variant tables. All scripts share one prefix-free inventory of
/// pivot strings; each script partitions it among its characters.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PivotTable {
    pub inventory: Vec<String>,
    pub leads: Vec<char>,
    pub maps: BTreeMap<String, ScriptMap>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TableConfig {
    pub n_scripts: usize,
    pub alphabet_size: usize,
    pub ambiguity_rate: f64,
    /// Share of the inventory made of two-letter strings.
    pub digraph_rate: f64,
}

impl Default for TableConfig {
    fn default() -> Self {
        Self {
            n_scripts: 4,
            alphabet_size: 16,
            ambiguity_rate: 0.3,
            digraph_rate: 0.3,
        }
    }
}

pub fn build_tables(seed: u64, config: &TableConfig) -> Result<(Vec<ScriptSpec>, PivotTable)> {
    let &TableConfig {
        n_scripts,
        alphabet_size: k,
        ambiguity_rate,
        digraph_rate,
    } = config;
    if !(2..=BLOCKS.len()).contains(&n_scripts) {
        return Err(Error::Construction(format!(
            "need 2..={} scripts, got {n_scripts}",
            BLOCKS.len()
        )));
    }
    if k < 8 {
        return Err(Error::Construction(format!("alphabet size {k} is below 8")));
    }
    for rate in [ambiguity_rate, digraph_rate] {
        if !(0.0..=1.0).contains(&rate) {
            return Err(Error::Construction(format!("rate {rate} outside [0, 1]")));
        }
    }
    let mut scripts = Vec::with_capacity(n_scripts);
    for &(name, start, len) in &BLOCKS[..n_scripts] {
        if k > len as usize {
            return Err(Error::Construction(format!(
                "script `{name}` has {len} letters, {k} requested"
            )));
        }
        let alphabet = (start..start + k as u32)
            .map(|c| char::from_u32(c).expect("assigned code point"))
            .collect();
        scripts.push(ScriptSpec {
            name: name.to_string(),
            alphabet,
        });
    }

    let n_ambig = (ambiguity_rate * k as f64).round() as usize;
    let size = k + n_ambig;
    let max_singles = 26 - N_LEADS;
    let max_digraphs = N_LEADS * 26;
    let n_digraph = ((digraph_rate * size as f64).round() as usize).max(size.saturating_sub(max_singles));
    if n_digraph > max_digraphs {
        return Err(Error::Construction(format!(
            "{size} pivot strings needed but only {} fit the prefix-free inventory",
            max_singles + max_digraphs
        )));
    }
    let n_single = size - n_digraph;

    let mut r = rng::stream(seed, 0);
    let mut letters: Vec<char> = ('a'..='z').collect();
    letters.shuffle(&mut r);
    let leads: Vec<char> = letters[..N_LEADS].to_vec();
    let mut inventory: Vec<String> = letters[N_LEADS..N_LEADS + n_single]
        .iter()
        .map(|c| c.to_string())
        .collect();
    let mut digraphs: Vec<String> = leads
        .iter()
        .flat_map(|&l| ('a'..='z').map(move |c| format!("{l}{c}")))
        .collect();
    digraphs.shuffle(&mut r);
    inventory.extend(digraphs.into_iter().take(n_digraph));
    inventory.sort();

    let mut maps = BTreeMap::new();
    for (i, s) in scripts.iter().enumerate() {
        let mut r = rng::stream(seed, 1 + i as u64);
        let mut order = inventory.clone();
        order.shuffle(&mut r);
        let mut forward: BTreeMap<char, Vec<String>> = s
            .alphabet
            .iter()
            .zip(&order[..k])
            .map(|(&c, p)| (c, vec![p.clone()]))
            .collect();
        let mut ambiguous = s.alphabet.clone();
        ambiguous.shuffle(&mut r);
        for (c, p) in ambiguous.iter().zip(&order[k..]) {
            forward.get_mut(c).expect("alphabet char").push(p.clone());
        }
        let inverse = forward
            .iter()
            .flat_map(|(&c, ps)| ps.iter().map(move |p| (p.clone(), c)))
            .collect();
        maps.insert(s.name.clone(), ScriptMap { forward, inverse });
    }
    Ok((scripts, PivotTable { inventory, leads, maps }))
}

impl PivotTable {
    pub fn map(&self, script: &str) -> Result<&ScriptMap> {
        self.maps
            .get(script)
            .ok_or_else(|| Error::Input(format!("unknown script `{script}`")))
    }

    /// Pivot variants of one character, primary first.
    pub fn variants(&self, script: &str, ch: char) -> Result<&[String]> {
        self.map(script)?
            .forward
            .get(&ch)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::Alphabet {
                ch: ch.to_string(),
                script: script.to_string(),
            })
    }

    /// Splits a pivot word into inventory strings.
    pub fn parse_pivot<'a>(&self, pivot: &'a str) -> Result<Vec<&'a str>> {
        let mut out = Vec::new();
        let mut rest = pivot;
        while let Some(c) = rest.chars().next() {
            let n = if self.leads.contains(&c) { 2 } else { 1 };
            if rest.len() < n {
                return Err(Error::Alphabet {
                    ch: rest.to_string(),
                    script: PIVOT.into(),
                });
            }
            let (head, tail) = rest.split_at(n);
            if self.inventory.binary_search_by(|p| p.as_str().cmp(head)).is_err() {
                return Err(Error::Alphabet {
                    ch: head.to_string(),
                    script: PIVOT.into(),
                });
            }
            out.push(head);
            rest = tail;
        }
        Ok(out)
    }

    /// Maps a pivot word into `script` through the inverse table.
    pub fn from_pivot(&self, pivot: &str, script: &str) -> Result<String> {
        let map = self.map(script)?;
        self.parse_pivot(pivot)?
            .into_iter()
            .map(|p| {
                map.inverse.get(p).copied().ok_or_else(|| Error::Alphabet {
                    ch: p.to_string(),
                    script: script.to_string(),
                })
            })
            .collect()
    }

    /// Rendering that takes the primary variant of every character.
    pub fn canonical_pivot(&self, word: &str, script: &str) -> Result<String> {
        word.chars()
            .map(|c| self.variants(script, c).map(|v| v[0].as_str()))
            .collect()
    }

    /// Every pivot rendering of `word`, in lexicographic variant order.
    pub fn pivot_variants(&self, word: &str, script: &str) -> Result<Vec<String>> {
        let mut out = vec![String::new()];
        for c in word.chars() {
            let vs = self.variants(script, c)?;
            out = out
                .iter()
                .flat_map(|prefix| vs.iter().map(move |v| format!("{prefix}{v}")))
                .collect();
        }
        Ok(out)
    }

    /// Length of the longest pivot rendering of `word`.
    pub fn max_pivot_len(&self, word: &str, script: &str) -> Result<usize> {
        word.chars()
            .map(|c| {
                self.variants(script, c)
                    .map(|v| v.iter().map(String::len).max().unwrap_or(0))
            })
            .sum()
    }
}
