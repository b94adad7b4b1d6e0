use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::taskgen::ChainedExample;

fn check_aligned(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::Input(format!("{a} predictions for {b} examples")));
    }
    Ok(())
}

/// Fraction of predictions found in their example's allowed targets.
pub fn phonetic_accuracy<S: AsRef<str>>(predictions: &[S], examples: &[ChainedExample]) -> Result<f64> {
    check_aligned(predictions.len(), examples.len())?;
    if examples.is_empty() {
        return Err(Error::UndefinedMetric("accuracy over no examples".into()));
    }
    let hits = predictions
        .iter()
        .zip(examples)
        .filter(|(p, e)| e.allowed_targets.contains(p.as_ref()))
        .count();
    Ok(hits as f64 / examples.len() as f64)
}

/// Fraction of predictions equal to the canonical target.
pub fn exact_accuracy<S: AsRef<str>>(predictions: &[S], examples: &[ChainedExample]) -> Result<f64> {
    check_aligned(predictions.len(), examples.len())?;
    if examples.is_empty() {
        return Err(Error::UndefinedMetric("accuracy over no examples".into()));
    }
    let hits = predictions
        .iter()
        .zip(examples)
        .filter(|(p, e)| p.as_ref() == e.target)
        .count();
    Ok(hits as f64 / examples.len() as f64)
}

/// Example indices split by which model answered acceptably.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WinPartition {
    pub both_correct: Vec<usize>,
    pub teacher_only: Vec<usize>,
    pub student_only: Vec<usize>,
    pub both_wrong: Vec<usize>,
}

impl WinPartition {
    pub fn len(&self) -> usize {
        self.both_correct.len() + self.teacher_only.len() + self.student_only.len() + self.both_wrong.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// True when every index below `n` appears in exactly one set.
    pub fn is_partition_of(&self, n: usize) -> bool {
        let mut seen = vec![false; n];
        for &i in self
            .both_correct
            .iter()
            .chain(&self.teacher_only)
            .chain(&self.student_only)
            .chain(&self.both_wrong)
        {
            if i >= n || std::mem::replace(&mut seen[i], true) {
                return false;
            }
        }
        seen.into_iter().all(|s| s)
    }

    pub fn summary(&self) -> WinSummary {
        WinSummary {
            both_correct: self.both_correct.len(),
            teacher_only: self.teacher_only.len(),
            student_only: self.student_only.len(),
            both_wrong: self.both_wrong.len(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WinSummary {
    pub both_correct: usize,
    pub teacher_only: usize,
    pub student_only: usize,
    pub both_wrong: usize,
}

/// A test example the student got right and the pipeline got wrong.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StudentWin {
    pub src_lang: String,
    pub source: String,
    pub tgt_lang: String,
    pub teacher: String,
    pub student: String,
    pub target: String,
}

pub fn emergent_partition<S: AsRef<str>>(
    teacher: &[S],
    student: &[S],
    examples: &[ChainedExample],
) -> Result<WinPartition> {
    check_aligned(teacher.len(), examples.len())?;
    check_aligned(student.len(), examples.len())?;
    let mut w = WinPartition::default();
    for (i, e) in examples.iter().enumerate() {
        let t = e.allowed_targets.contains(teacher[i].as_ref());
        let s = e.allowed_targets.contains(student[i].as_ref());
        match (t, s) {
            (true, true) => w.both_correct.push(i),
            (true, false) => w.teacher_only.push(i),
            (false, true) => w.student_only.push(i),
            (false, false) => w.both_wrong.push(i),
        }
    }
    Ok(w)
}

/// The student-only set written out in full.
pub fn student_wins<S: AsRef<str>>(
    partition: &WinPartition,
    teacher: &[S],
    student: &[S],
    examples: &[ChainedExample],
) -> Vec<StudentWin> {
    partition
        .student_only
        .iter()
        .map(|&i| {
            let e = &examples[i];
            StudentWin {
                src_lang: e.src_lang.clone(),
                source: e.source.clone(),
                tgt_lang: e.tgt_lang.clone(),
                teacher: teacher[i].as_ref().to_string(),
                student: student[i].as_ref().to_string(),
                target: e.target.clone(),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ex(target: &str, others: &[&str]) -> ChainedExample {
        let mut allowed: std::collections::BTreeSet<String> = others.iter().map(|s| s.to_string()).collect();
        allowed.insert(target.into());
        ChainedExample {
            src_lang: "a".into(),
            source: "x".into(),
            pivot: "p".into(),
            tgt_lang: "b".into(),
            target: target.into(),
            allowed_targets: allowed,
        }
    }

    #[test]
    fn accuracy_counts_variants() {
        let es = vec![ex("lig", &["leeg"]), ex("ab", &[]), ex("cd", &[])];
        assert_eq!(phonetic_accuracy(&["lig", "ab", "cd"], &es).unwrap(), 1.0);
        assert!((phonetic_accuracy(&["leeg", "", "cd"], &es).unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert!((exact_accuracy(&["leeg", "", "cd"], &es).unwrap() - 1.0 / 3.0).abs() < 1e-12);
        assert!(matches!(phonetic_accuracy(&["lig"], &es), Err(Error::Input(_))));
    }

    #[test]
    fn identical_predictions_have_no_solo_wins() {
        let es = vec![ex("a", &[]), ex("b", &[]), ex("c", &[])];
        let p = ["a", "x", "c"];
        let w = emergent_partition(&p, &p, &es).unwrap();
        assert!(w.teacher_only.is_empty() && w.student_only.is_empty());
        assert!(w.is_partition_of(3));
    }

    #[test]
    fn wrong_teacher_variant_is_a_student_win() {
        let es = vec![ex("lig", &["leeg"])];
        let w = emergent_partition(&["lag"], &["leeg"], &es).unwrap();
        assert_eq!(w.student_only, vec![0]);
        let wins = student_wins(&w, &["lag"], &["leeg"], &es);
        assert_eq!(wins[0].student, "leeg");
        assert_eq!(wins[0].teacher, "lag");
        assert!(emergent_partition(&["a"], &["a", "b"], &es).is_err());
    }

    proptest! {
        #[test]
        fn partition_law(picks in proptest::collection::vec((0u8..3, 0u8..3), 0..40)) {
            let es: Vec<_> = picks.iter().map(|_| ex("a", &["b"])).collect();
            let name = |k: u8| ["a", "b", "z"][k as usize];
            let t: Vec<&str> = picks.iter().map(|p| name(p.0)).collect();
            let s: Vec<&str> = picks.iter().map(|p| name(p.1)).collect();
            let w = emergent_partition(&t, &s, &es).unwrap();
            prop_assert!(w.is_partition_of(es.len()));
            prop_assert_eq!(w.len(), es.len());
            if !es.is_empty() {
                prop_assert!(phonetic_accuracy(&s, &es).unwrap() >= exact_accuracy(&s, &es).unwrap());
            }
        }
    }
}
