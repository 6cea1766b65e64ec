//! Participant-level split protocols: leave-one-subject-out for small
//! cohorts, a seeded subject-level ratio split for large ones, and a
//! record-level split for identification tasks where every subject must
//! appear in training.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::DatasetError;
use crate::signal::LabeledSegment;

/// Anything carrying a subject identifier.
pub trait SubjectKey {
    fn subject(&self) -> &str;
}

impl SubjectKey for LabeledSegment {
    fn subject(&self) -> &str {
        &self.segment.subject_id
    }
}

impl SubjectKey for String {
    fn subject(&self) -> &str {
        self
    }
}

impl SubjectKey for &str {
    fn subject(&self) -> &str {
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitProtocol {
    Loo,
    Ratio,
    Record,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
    /// Held-out subject under the leave-one-out protocol.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_subject: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub protocol: SplitProtocol,
    pub seed: u64,
    pub folds: Vec<Fold>,
}

fn by_subject<T: SubjectKey>(records: &[T]) -> BTreeMap<&str, Vec<usize>> {
    let mut map: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        map.entry(r.subject()).or_default().push(i);
    }
    map
}

fn fold_rng(seed: u64, fold: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(fold as u64);
    rng
}

/// Counts for a `train:val:test` ratio; the smaller partitions round down
/// and the remainder goes to train.
fn partition_sizes(n: usize, ratios: [f64; 3]) -> Result<(usize, usize, usize), DatasetError> {
    if ratios.iter().any(|r| !r.is_finite() || *r < 0.0) || ratios.iter().sum::<f64>() <= 0.0 {
        return Err(DatasetError::InvalidSplit(format!(
            "ratios must be non-negative with a positive sum, got {ratios:?}"
        )));
    }
    let total: f64 = ratios.iter().sum();
    let val = (n as f64 * ratios[1] / total).floor() as usize;
    let test = (n as f64 * ratios[2] / total).floor() as usize;
    Ok((n - val - test, val, test))
}

/// One fold per subject. The held-out subject's records form the test set;
/// everything else is shuffled and split `1 - val_ratio : val_ratio` at the
/// record level, so train and validation may share subjects.
pub fn loo_folds<T: SubjectKey>(
    records: &[T],
    val_ratio: f64,
    seed: u64,
) -> Result<SplitPlan, DatasetError> {
    if !(0.0..1.0).contains(&val_ratio) {
        return Err(DatasetError::InvalidSplit(format!(
            "val_ratio must lie in [0, 1), got {val_ratio}"
        )));
    }
    let groups = by_subject(records);
    if groups.len() < 2 {
        return Err(DatasetError::TooFewSubjects {
            needed: 2,
            found: groups.len(),
        });
    }
    let folds = groups
        .iter()
        .enumerate()
        .map(|(k, (subject, test))| {
            let mut rest: Vec<usize> = groups
                .iter()
                .filter(|(s, _)| s != &subject)
                .flat_map(|(_, idx)| idx.iter().copied())
                .collect();
            rest.sort_unstable();
            rest.shuffle(&mut fold_rng(seed, k));
            let n_val = (rest.len() as f64 * val_ratio).floor() as usize;
            let val = rest.split_off(rest.len() - n_val);
            Fold {
                train: rest,
                val,
                test: test.clone(),
                test_subject: Some(subject.to_string()),
            }
        })
        .collect();
    Ok(SplitPlan {
        protocol: SplitProtocol::Loo,
        seed,
        folds,
    })
}

/// Shuffles subjects with `seed` and assigns them `train:val:test`; all of a
/// subject's records follow the subject.
pub fn ratio_split<T: SubjectKey>(
    records: &[T],
    ratios: [f64; 3],
    seed: u64,
) -> Result<SplitPlan, DatasetError> {
    let groups = by_subject(records);
    if groups.len() < 6 {
        return Err(DatasetError::TooFewSubjects {
            needed: 6,
            found: groups.len(),
        });
    }
    let mut subjects: Vec<&str> = groups.keys().copied().collect();
    subjects.shuffle(&mut fold_rng(seed, 0));
    let (n_train, n_val, _) = partition_sizes(subjects.len(), ratios)?;
    let collect = |subs: &[&str]| {
        let mut idx: Vec<usize> = subs.iter().flat_map(|s| groups[s].iter().copied()).collect();
        idx.sort_unstable();
        idx
    };
    let fold = Fold {
        train: collect(&subjects[..n_train]),
        val: collect(&subjects[n_train..n_train + n_val]),
        test: collect(&subjects[n_train + n_val..]),
        test_subject: None,
    };
    Ok(SplitPlan {
        protocol: SplitProtocol::Ratio,
        seed,
        folds: vec![fold],
    })
}

/// Record-level `train:val:test` split ignoring subjects.
pub fn record_split<T>(records: &[T], ratios: [f64; 3], seed: u64) -> Result<SplitPlan, DatasetError> {
    if records.len() < 3 {
        return Err(DatasetError::InvalidSplit(format!(
            "record split needs at least 3 records, found {}",
            records.len()
        )));
    }
    let mut idx: Vec<usize> = (0..records.len()).collect();
    idx.shuffle(&mut fold_rng(seed, 0));
    let (n_train, n_val, _) = partition_sizes(idx.len(), ratios)?;
    let mut test = idx.split_off(n_train + n_val);
    let mut val = idx.split_off(n_train);
    let mut train = idx;
    train.sort_unstable();
    val.sort_unstable();
    test.sort_unstable();
    Ok(SplitPlan {
        protocol: SplitProtocol::Record,
        seed,
        folds: vec![Fold {
            train,
            val,
            test,
            test_subject: None,
        }],
    })
}

impl SplitPlan {
    /// Checks index disjointness, bounds and, for subject-level protocols,
    /// that no subject straddles the test boundary.
    pub fn validate<T: SubjectKey>(&self, records: &[T]) -> Result<(), String> {
        for (k, f) in self.folds.iter().enumerate() {
            let mut seen = BTreeSet::new();
            for &i in f.train.iter().chain(&f.val).chain(&f.test) {
                if i >= records.len() {
                    return Err(format!("fold {k}: index {i} out of range"));
                }
                if !seen.insert(i) {
                    return Err(format!("fold {k}: index {i} appears twice"));
                }
            }
            let subjects = |idx: &[usize]| -> BTreeSet<&str> {
                idx.iter().map(|&i| records[i].subject()).collect()
            };
            let (tr, va, te) = (subjects(&f.train), subjects(&f.val), subjects(&f.test));
            match self.protocol {
                SplitProtocol::Ratio => {
                    if !tr.is_disjoint(&va) || !tr.is_disjoint(&te) || !va.is_disjoint(&te) {
                        return Err(format!("fold {k}: subject shared across partitions"));
                    }
                }
                SplitProtocol::Loo => {
                    if te.len() != 1 || !tr.is_disjoint(&te) || !va.is_disjoint(&te) {
                        return Err(format!("fold {k}: test must hold exactly one unseen subject"));
                    }
                }
                SplitProtocol::Record => {}
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn roster(subjects: usize, per: usize) -> Vec<String> {
        (0..subjects)
            .flat_map(|s| std::iter::repeat_n(format!("s{s:03}"), per))
            .collect()
    }

    #[test]
    fn loo_one_fold_per_subject() {
        let recs = roster(22, 5);
        let plan = loo_folds(&recs, 0.2, 1).unwrap();
        assert_eq!(plan.folds.len(), 22);
        plan.validate(&recs).unwrap();
        for f in &plan.folds {
            assert_eq!(f.test.len(), 5);
        }
    }

    #[test]
    fn loo_val_arithmetic() {
        // 100 remaining records after holding out one 10-record subject.
        let mut recs = roster(10, 10);
        recs.extend(roster(1, 10).into_iter().map(|s| s.replace("s000", "zzz")));
        let plan = loo_folds(&recs, 0.2, 3).unwrap();
        let f = plan.folds.iter().find(|f| f.test_subject.as_deref() == Some("zzz")).unwrap();
        assert_eq!(f.train.len(), 80);
        assert_eq!(f.val.len(), 20);
    }

    #[test]
    fn loo_needs_two_subjects() {
        assert!(matches!(
            loo_folds(&roster(1, 4), 0.2, 0),
            Err(DatasetError::TooFewSubjects { needed: 2, found: 1 })
        ));
    }

    #[test]
    fn ratio_split_counts_and_determinism() {
        let recs = roster(60, 3);
        let plan = ratio_split(&recs, [4.0, 1.0, 1.0], 9).unwrap();
        let f = &plan.folds[0];
        assert_eq!((f.train.len(), f.val.len(), f.test.len()), (120, 30, 30));
        plan.validate(&recs).unwrap();
        assert_eq!(plan, ratio_split(&recs, [4.0, 1.0, 1.0], 9).unwrap());
        assert_ne!(plan, ratio_split(&recs, [4.0, 1.0, 1.0], 10).unwrap());
        assert!(matches!(
            ratio_split(&roster(5, 3), [4.0, 1.0, 1.0], 9),
            Err(DatasetError::TooFewSubjects { needed: 6, .. })
        ));
    }

    #[test]
    fn record_split_covers_everything() {
        let recs = roster(3, 20);
        let plan = record_split(&recs, [4.0, 1.0, 1.0], 2).unwrap();
        let f = &plan.folds[0];
        assert_eq!((f.train.len(), f.val.len(), f.test.len()), (40, 10, 10));
        plan.validate(&recs).unwrap();
    }
}
