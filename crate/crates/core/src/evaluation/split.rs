//! Random k-fold and subject-grouped fold assignment.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use super::EvalError;
use crate::seed;

/// Random partition of `0..n` into `k` folds with sizes within one of each
/// other. Each fold is sorted.
pub fn kfold(n: usize, k: usize, rng_seed: u64) -> Result<Vec<Vec<usize>>, EvalError> {
    if k == 0 || n < k {
        return Err(EvalError::TooFewForFolds { n, k });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed::rng(rng_seed));
    let mut folds = vec![Vec::with_capacity(n / k + 1); k];
    for (j, i) in order.into_iter().enumerate() {
        folds[j % k].push(i);
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(folds)
}

/// Subject to group mapping for leave-one-group-out evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupAssignment {
    n_groups: usize,
    groups: BTreeMap<String, usize>,
}

impl GroupAssignment {
    pub fn new(n_groups: usize, groups: BTreeMap<String, usize>) -> Result<Self, EvalError> {
        if n_groups == 0 {
            return Err(EvalError::TooFewGroups(0));
        }
        if let Some((s, &g)) = groups.iter().find(|(_, &g)| g >= n_groups) {
            return Err(EvalError::GroupRange { subject: s.clone(), group: g, n_groups });
        }
        Ok(Self { n_groups, groups })
    }

    /// Round-robin over subjects sorted by instance count (descending, then
    /// id), which spreads heavy subjects evenly across groups.
    pub fn balanced(subject_counts: &[(String, usize)], n_groups: usize) -> Result<Self, EvalError> {
        let mut subjects = subject_counts.to_vec();
        subjects.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        subjects.dedup_by(|a, b| a.0 == b.0);
        let groups = subjects.into_iter().enumerate().map(|(i, (s, _))| (s, i % n_groups)).collect();
        Self::new(n_groups, groups)
    }

    pub fn n_groups(&self) -> usize {
        self.n_groups
    }

    pub fn group_of(&self, subject: &str) -> Option<usize> {
        self.groups.get(subject).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, usize)> {
        self.groups.iter().map(|(s, &g)| (s.as_str(), g))
    }
}

/// Fold `g` holds the rows whose subject belongs to group `g`.
pub fn group_kfold<S: AsRef<str>>(subjects: &[S], assignment: &GroupAssignment) -> Result<Vec<Vec<usize>>, EvalError> {
    let mut folds = vec![Vec::new(); assignment.n_groups()];
    for (i, s) in subjects.iter().enumerate() {
        let g = assignment.group_of(s.as_ref()).ok_or_else(|| EvalError::UnassignedSubject(s.as_ref().into()))?;
        folds[g].push(i);
    }
    let non_empty = folds.iter().filter(|f| !f.is_empty()).count();
    if non_empty < 2 {
        return Err(EvalError::TooFewGroups(non_empty));
    }
    Ok(folds)
}
