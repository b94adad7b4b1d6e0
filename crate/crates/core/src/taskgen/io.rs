use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::Path;

use super::dataset::{ChainedExample, Direction, TransliterationPair};
use super::tables::PIVOT;
use crate::error::{Error, Result};

/// Writes `contents` to a sibling temp file, then renames it over `path`.
pub(crate) fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = Path::new(&tmp);
    let mut f = fs::File::create(tmp).map_err(|e| Error::io(tmp, e))?;
    f.write_all(contents).map_err(|e| Error::io(tmp, e))?;
    f.sync_all().map_err(|e| Error::io(tmp, e))?;
    fs::rename(tmp, path).map_err(|e| Error::io(path, e))
}

/// One `src_lang \t src_word \t tgt_lang \t tgt_word` line per pair.
pub fn write_pairs(path: &Path, pairs: &[TransliterationPair]) -> Result<()> {
    let mut s = String::new();
    for p in pairs {
        s.push_str(&format!("{}\t{}\t{}\t{}\n", p.src_lang, p.src, p.tgt_lang, p.tgt));
    }
    write_atomic(path, s.as_bytes())
}

pub fn read_pairs(path: &Path) -> Result<Vec<TransliterationPair>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, line)| {
            let f: Vec<&str> = line.split('\t').collect();
            let [src_lang, src, tgt_lang, tgt] = f[..] else {
                return Err(Error::format(path, format!("line {}: expected 4 fields", i + 1)));
            };
            let direction = if tgt_lang == PIVOT {
                Direction::ToPivot
            } else if src_lang == PIVOT {
                Direction::FromPivot
            } else {
                return Err(Error::format(
                    path,
                    format!("line {}: neither side is the pivot", i + 1),
                ));
            };
            Ok(TransliterationPair {
                src_lang: src_lang.into(),
                src: src.into(),
                tgt_lang: tgt_lang.into(),
                tgt: tgt.into(),
                direction,
            })
        })
        .collect()
}

/// One `src_word \t v1|v2|...` line per example, variants sorted.
pub fn write_allowed(path: &Path, examples: &[ChainedExample]) -> Result<()> {
    let mut s = String::new();
    for e in examples {
        let v: Vec<&str> = e.allowed_targets.iter().map(String::as_str).collect();
        s.push_str(&format!("{}\t{}\n", e.source, v.join("|")));
    }
    write_atomic(path, s.as_bytes())
}

pub fn read_allowed(path: &Path) -> Result<Vec<(String, BTreeSet<String>)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, line)| {
            let (src, vs) = line
                .split_once('\t')
                .ok_or_else(|| Error::format(path, format!("line {}: missing tab", i + 1)))?;
            let set: BTreeSet<String> = vs.split('|').filter(|v| !v.is_empty()).map(String::from).collect();
            if set.is_empty() {
                return Err(Error::format(path, format!("line {}: no variants", i + 1)));
            }
            Ok((src.to_string(), set))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taskgen::{build_corpus, chained_ground_truth, DatasetFormat, TaskConfig};

    #[test]
    fn pairs_round_trip() {
        let c = build_corpus(
            &TaskConfig {
                words_per_script: 40,
                ..TaskConfig::default()
            },
            3,
        )
        .unwrap();
        let pairs = c.train_pairs(DatasetFormat::Bi).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("train.tsv");
        write_pairs(&p, &pairs).unwrap();
        assert_eq!(read_pairs(&p).unwrap(), pairs);
    }

    #[test]
    fn allowed_round_trip() {
        let c = build_corpus(
            &TaskConfig {
                words_per_script: 40,
                ..TaskConfig::default()
            },
            3,
        )
        .unwrap();
        let ex: Vec<_> = c.test[0]
            .words
            .iter()
            .map(|w| chained_ground_truth(w, "kat", "cyr", &c.tables).unwrap())
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("allowed.tsv");
        write_allowed(&p, &ex).unwrap();
        let back = read_allowed(&p).unwrap();
        for (e, (src, set)) in ex.iter().zip(&back) {
            assert_eq!(&e.source, src);
            assert_eq!(&e.allowed_targets, set);
        }
    }

    #[test]
    fn malformed_line_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.tsv");
        std::fs::write(&p, "kat\tx\tlat\n").unwrap();
        assert!(matches!(read_pairs(&p), Err(Error::Format { .. })));
        assert!(matches!(read_pairs(&dir.path().join("missing")), Err(Error::Io { .. })));
    }
}
