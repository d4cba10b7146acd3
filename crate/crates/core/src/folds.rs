//! K-fold assignment plans.

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

/// Fold index for every row. Indices are shuffled with the crate's
/// xoshiro256++ stream, then dealt round-robin, so fold sizes differ by at
/// most one and the plan is a pure function of `(n, k, seed)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldPlan {
    k: usize,
    seed: u64,
    assignments: Vec<usize>,
}

pub fn make_folds(n: usize, k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::config(format!("fold count must be at least 2, got {k}")));
    }
    if k > n {
        return Err(Error::config(format!("fold count {k} exceeds sample size {n}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_from_seed(seed));
    let mut assignments = vec![0; n];
    for (pos, &row) in order.iter().enumerate() {
        assignments[row] = pos % k;
    }
    Ok(FoldPlan { k, seed, assignments })
}

impl FoldPlan {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn n(&self) -> usize {
        self.assignments.len()
    }

    pub fn assignments(&self) -> &[usize] {
        &self.assignments
    }

    /// `(training rows, held-out rows)` for fold `f`, each in ascending order.
    pub fn split(&self, f: usize) -> (Vec<usize>, Vec<usize>) {
        let mut train = Vec::with_capacity(self.n());
        let mut test = Vec::with_capacity(self.n() / self.k + 1);
        for (i, &g) in self.assignments.iter().enumerate() {
            if g == f {
                test.push(i);
            } else {
                train.push(i);
            }
        }
        (train, test)
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &g in &self.assignments {
            sizes[g] += 1;
        }
        sizes
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn equal_split() {
        let p = make_folds(10, 5, 1).unwrap();
        assert_eq!(p.fold_sizes(), vec![2; 5]);
    }

    #[test]
    fn remainder_rule() {
        let p = make_folds(11, 5, 1).unwrap();
        let mut sizes = p.fold_sizes();
        sizes.sort_unstable();
        assert_eq!(sizes, vec![2, 2, 2, 2, 3]);
    }

    #[test]
    fn deterministic() {
        assert_eq!(make_folds(37, 4, 9).unwrap(), make_folds(37, 4, 9).unwrap());
        assert_ne!(make_folds(37, 4, 9).unwrap(), make_folds(37, 4, 10).unwrap());
    }

    #[test]
    fn bad_k() {
        assert!(make_folds(5, 1, 0).is_err());
        assert!(make_folds(5, 6, 0).is_err());
    }

    proptest! {
        #[test]
        fn folds_are_balanced_and_nonempty(n in 2usize..300, k in 2usize..20, seed in any::<u64>()) {
            prop_assume!(k <= n);
            let p = make_folds(n, k, seed).unwrap();
            let sizes = p.fold_sizes();
            let lo = *sizes.iter().min().unwrap();
            let hi = *sizes.iter().max().unwrap();
            prop_assert!(lo >= 1);
            prop_assert!(hi - lo <= 1);
            let (tr, te) = p.split(0);
            prop_assert_eq!(tr.len() + te.len(), n);
        }
    }
}
