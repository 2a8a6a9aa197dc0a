//! Sample containers, fold plans, and perturb-one dataset surgery.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// A single observation: covariates `z` and an optional response `y`.
///
/// For the many-means workflow a sample is a raw vector in `z` with no
/// response.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub z: Vec<f64>,
    pub y: Option<f64>,
}

impl Sample {
    pub fn supervised(y: f64, z: Vec<f64>) -> Self {
        Sample { z, y: Some(y) }
    }

    pub fn unsupervised(z: Vec<f64>) -> Self {
        Sample { z, y: None }
    }

    pub fn is_finite(&self) -> bool {
        self.z.iter().all(|v| v.is_finite()) && self.y.map_or(true, |v| v.is_finite())
    }
}

/// An ordered, immutable collection of samples with a common dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    samples: Vec<Sample>,
}

impl Dataset {
    pub fn new(samples: Vec<Sample>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::invalid("dataset must contain at least one sample"));
        }
        let dim = samples[0].z.len();
        for (i, s) in samples.iter().enumerate() {
            if s.z.len() != dim {
                return Err(Error::invalid(format!(
                    "sample {} has dimension {} but the dataset dimension is {}",
                    i,
                    s.z.len(),
                    dim
                )));
            }
            if !s.is_finite() {
                return Err(Error::invalid(format!(
                    "sample {} contains a non-finite coordinate",
                    i
                )));
            }
        }
        Ok(Dataset { samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.samples[0].z.len()
    }

    pub fn sample(&self, i: usize) -> &Sample {
        &self.samples[i]
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Sample> {
        self.samples.iter()
    }

    /// Keep only the first `keep` samples. CLI-level pre-truncation for
    /// the equal-fold requirement.
    pub fn truncated(&self, keep: usize) -> Result<Dataset> {
        if keep == 0 || keep > self.len() {
            return Err(Error::invalid("truncation length out of range"));
        }
        Dataset::new(self.samples[..keep].to_vec())
    }
}

/// K-fold assignment: folds partition `0..n` into `K` equal blocks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldPlan {
    k: usize,
    n_te: usize,
    n_tr: usize,
    fold_of: Vec<usize>,
    fold_indices: Vec<Vec<usize>>,
}

impl FoldPlan {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.fold_of.len()
    }

    pub fn n_te(&self) -> usize {
        self.n_te
    }

    pub fn n_tr(&self) -> usize {
        self.n_tr
    }

    /// The fold containing sample `i`.
    pub fn fold_of(&self, i: usize) -> usize {
        self.fold_of[i]
    }

    /// The sample indices in fold `k`, ascending.
    pub fn fold_indices(&self, k: usize) -> &[usize] {
        &self.fold_indices[k]
    }
}

/// Build a K-fold plan over `n` samples.
///
/// Folds are contiguous blocks in index order; with a `shuffle_seed` the
/// indices are permuted by a seeded shuffle first, then blocked, so
/// shuffled plans reproduce exactly for the same seed.
pub fn make_fold_plan(n: usize, k: usize, shuffle_seed: Option<u64>) -> Result<FoldPlan> {
    if k == 0 || k > n {
        return Err(Error::invalid(format!(
            "fold count K={} must satisfy 1 <= K <= n={}",
            k, n
        )));
    }
    if n % k != 0 {
        return Err(Error::invalid(format!(
            "K={} does not divide n={}: equal fold sizes require n/K to be an integer",
            k, n
        )));
    }
    let n_te = n / k;
    let order: Vec<usize> = match shuffle_seed {
        None => (0..n).collect(),
        Some(seed) => {
            let mut idx: Vec<usize> = (0..n).collect();
            let mut r = rng::stream(seed, &[0x666f_6c64]);
            idx.shuffle(&mut r);
            idx
        }
    };
    let mut fold_of = vec![0usize; n];
    let mut fold_indices = vec![Vec::with_capacity(n_te); k];
    for (pos, &i) in order.iter().enumerate() {
        let fold = pos / n_te;
        fold_of[i] = fold;
        fold_indices[fold].push(i);
    }
    for f in &mut fold_indices {
        f.sort_unstable();
    }
    Ok(FoldPlan {
        k,
        n_te,
        n_tr: n - n_te,
        fold_of,
        fold_indices,
    })
}

/// Return a copy of `d` with entry `i` replaced by `x`; `d` is unchanged.
pub fn perturb_one(d: &Dataset, i: usize, x: Sample) -> Result<Dataset> {
    if i >= d.len() {
        return Err(Error::invalid(format!(
            "perturb index {} out of range for n={}",
            i,
            d.len()
        )));
    }
    if x.z.len() != d.dim() {
        return Err(Error::invalid(format!(
            "replacement sample has dimension {} but the dataset dimension is {}",
            x.z.len(),
            d.dim()
        )));
    }
    if !x.is_finite() {
        return Err(Error::invalid("replacement sample is non-finite"));
    }
    let mut samples = d.samples.clone();
    samples[i] = x;
    Ok(Dataset { samples })
}

/// The training set for fold `fold`: every sample outside that fold, in
/// original order.
pub fn leave_out(d: &Dataset, fold: usize, plan: &FoldPlan) -> Result<Dataset> {
    if plan.n() != d.len() {
        return Err(Error::invalid("fold plan does not match the dataset size"));
    }
    if fold >= plan.k() {
        return Err(Error::invalid(format!(
            "fold id {} out of range for K={}",
            fold,
            plan.k()
        )));
    }
    if plan.n_tr() == 0 {
        return Err(Error::invalid(
            "leave_out would produce an empty training set (K=1)",
        ));
    }
    let samples: Vec<Sample> = d
        .samples
        .iter()
        .enumerate()
        .filter(|(i, _)| plan.fold_of(*i) != fold)
        .map(|(_, s)| s.clone())
        .collect();
    Dataset::new(samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toy(n: usize) -> Dataset {
        Dataset::new(
            (0..n)
                .map(|i| Sample::supervised(i as f64, vec![1.0]))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn contiguous_blocks() {
        let plan = make_fold_plan(6, 3, None).unwrap();
        assert_eq!(plan.fold_indices(0), &[0, 1]);
        assert_eq!(plan.fold_indices(1), &[2, 3]);
        assert_eq!(plan.fold_indices(2), &[4, 5]);
        assert_eq!(plan.n_te(), 2);
        assert_eq!(plan.n_tr(), 4);
    }

    #[test]
    fn loo_plan() {
        let plan = make_fold_plan(4, 4, None).unwrap();
        for i in 0..4 {
            assert_eq!(plan.fold_indices(i), &[i]);
        }
    }

    #[test]
    fn divisibility_is_enforced() {
        let err = make_fold_plan(7, 3, None).unwrap_err();
        assert!(err.to_string().contains("n/K"));
    }

    #[test]
    fn shuffled_plans_reproduce() {
        let a = make_fold_plan(12, 3, Some(9)).unwrap();
        let b = make_fold_plan(12, 3, Some(9)).unwrap();
        assert_eq!(a, b);
        let c = make_fold_plan(12, 3, Some(10)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn perturb_replaces_one_entry() {
        let d = toy(3);
        let p = perturb_one(&d, 0, Sample::supervised(99.0, vec![1.0])).unwrap();
        assert_eq!(p.sample(0).y, Some(99.0));
        assert_eq!(p.sample(1), d.sample(1));
        assert_eq!(d.sample(0).y, Some(0.0));
    }

    #[test]
    fn perturb_with_self_is_identity() {
        let d = toy(3);
        let p = perturb_one(&d, 1, d.sample(1).clone()).unwrap();
        assert_eq!(p, d);
    }

    #[test]
    fn disjoint_perturbations_commute() {
        let d = toy(4);
        let a = Sample::supervised(-1.0, vec![1.0]);
        let b = Sample::supervised(-2.0, vec![1.0]);
        let ij = perturb_one(&perturb_one(&d, 0, a.clone()).unwrap(), 2, b.clone()).unwrap();
        let ji = perturb_one(&perturb_one(&d, 2, b).unwrap(), 0, a).unwrap();
        assert_eq!(ij, ji);
    }

    #[test]
    fn perturb_index_out_of_range() {
        let d = toy(3);
        assert!(perturb_one(&d, 3, Sample::supervised(0.0, vec![1.0])).is_err());
    }

    #[test]
    fn leave_out_drops_exactly_one_fold() {
        let d = toy(6);
        let plan = make_fold_plan(6, 3, None).unwrap();
        let kept = leave_out(&d, 1, &plan).unwrap();
        let ys: Vec<f64> = kept.iter().map(|s| s.y.unwrap()).collect();
        assert_eq!(ys, vec![0.0, 1.0, 4.0, 5.0]);
    }

    #[test]
    fn leave_out_loo() {
        let d = toy(4);
        let plan = make_fold_plan(4, 4, None).unwrap();
        let kept = leave_out(&d, 2, &plan).unwrap();
        assert_eq!(kept.len(), 3);
    }

    #[test]
    fn leave_out_rejects_k1() {
        let d = toy(4);
        let plan = make_fold_plan(4, 1, None).unwrap();
        assert!(leave_out(&d, 0, &plan).is_err());
    }

    #[test]
    fn partition_exhaustive_to_n_1000() {
        // Every valid (n, K) pair up to n = 1000: folds partition 0..n.
        for n in 1..=1000usize {
            for k in 1..=n {
                if n % k != 0 {
                    continue;
                }
                let plan = make_fold_plan(n, k, None).unwrap();
                let mut seen = vec![false; n];
                for fold in 0..k {
                    assert_eq!(plan.fold_indices(fold).len(), n / k);
                    for &i in plan.fold_indices(fold) {
                        assert!(!seen[i]);
                        seen[i] = true;
                    }
                }
                assert!(seen.into_iter().all(|s| s));
            }
        }
    }

    proptest! {
        #[test]
        fn folds_partition_indices(n_blocks in 1usize..20, k in 1usize..12, seed in proptest::option::of(any::<u64>())) {
            let n = n_blocks * k;
            let plan = make_fold_plan(n, k, seed).unwrap();
            let mut seen = vec![false; n];
            for fold in 0..k {
                prop_assert_eq!(plan.fold_indices(fold).len(), n / k);
                for &i in plan.fold_indices(fold) {
                    prop_assert!(!seen[i], "index appears in two folds");
                    seen[i] = true;
                    prop_assert_eq!(plan.fold_of(i), fold);
                }
            }
            prop_assert!(seen.into_iter().all(|s| s));
        }

        #[test]
        fn perturb_twice_is_involution(n in 1usize..12, idx in 0usize..12, y in -1e3f64..1e3) {
            prop_assume!(idx < n);
            let d = toy(n);
            let original = d.sample(idx).clone();
            let once = perturb_one(&d, idx, Sample::supervised(y, vec![1.0])).unwrap();
            let twice = perturb_one(&once, idx, original).unwrap();
            prop_assert_eq!(twice, d);
        }
    }
}
