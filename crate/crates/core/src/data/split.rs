//! Index partitions for the active learning protocols and the annotation
//! oracle that moves samples from the pool into the training set.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from, stream, Rng};
use crate::scalar::Real;

/// Disjoint index sets into one [`Dataset`]. Each set is kept sorted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    train: Vec<usize>,
    pool: Vec<usize>,
    holdout: Vec<usize>,
    test: Vec<usize>,
}

impl Split {
    pub fn new(mut train: Vec<usize>, mut pool: Vec<usize>, mut holdout: Vec<usize>, mut test: Vec<usize>) -> Result<Self> {
        for v in [&mut train, &mut pool, &mut holdout, &mut test] {
            v.sort_unstable();
        }
        let split = Self {
            train,
            pool,
            holdout,
            test,
        };
        split.check_disjoint()?;
        Ok(split)
    }

    pub fn train(&self) -> &[usize] {
        &self.train
    }

    /// Unlabeled candidates. Only the indices are exposed here; the loop
    /// hands strategies their features, never their labels.
    pub fn pool(&self) -> &[usize] {
        &self.pool
    }

    pub fn holdout(&self) -> &[usize] {
        &self.holdout
    }

    pub fn test(&self) -> &[usize] {
        &self.test
    }

    pub fn check_disjoint(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for (name, set) in [("train", &self.train), ("pool", &self.pool), ("holdout", &self.holdout), ("test", &self.test)] {
            for &i in set.iter() {
                if !seen.insert(i) {
                    return Err(Error::Selection(format!("index {i} appears twice (second time in {name})")));
                }
            }
        }
        Ok(())
    }

    pub fn max_index(&self) -> Option<usize> {
        [&self.train, &self.pool, &self.holdout, &self.test]
            .iter()
            .filter_map(|v| v.last().copied())
            .max()
    }

    /// Moves `selected` from the pool into the training set.
    pub fn annotate(&self, selected: &[usize]) -> Result<Self> {
        oracle_annotate(self, selected)
    }
}

/// Returns a split in which the selected pool indices have been labeled.
///
/// The result depends only on the set of selected indices, not their order.
pub fn oracle_annotate(split: &Split, selected: &[usize]) -> Result<Split> {
    let chosen: BTreeSet<usize> = selected.iter().copied().collect();
    if chosen.len() != selected.len() {
        return Err(Error::Selection("selection contains duplicate indices".into()));
    }
    for &i in &chosen {
        if split.pool.binary_search(&i).is_err() {
            return Err(Error::Selection(format!("index {i} is not in the pool")));
        }
    }
    let pool = split.pool.iter().copied().filter(|i| !chosen.contains(i)).collect();
    let mut train = split.train.clone();
    train.extend(chosen);
    train.sort_unstable();
    Ok(Split {
        train,
        pool,
        holdout: split.holdout.clone(),
        test: split.test.clone(),
    })
}

/// Where the evaluation samples come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestSet {
    /// Fixed indices, e.g. the official test file appended to the data.
    Fixed(Vec<usize>),
    /// Stratified random fraction carved from each class.
    Fraction(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub initial_per_class: usize,
    /// Defaults to `initial_per_class` in the balanced protocol and to the
    /// 1/5 rule in the imbalanced one.
    pub holdout_per_class: Option<usize>,
    /// Optional cap on the per-class pool size.
    pub pool_per_class: Option<usize>,
    pub test: TestSet,
    pub seed: u64,
}

impl SplitSpec {
    pub fn balanced(initial_per_class: usize, seed: u64) -> Self {
        Self {
            initial_per_class,
            holdout_per_class: None,
            pool_per_class: None,
            test: TestSet::Fraction(0.2),
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.initial_per_class == 0 {
            return Err(Error::Config("initial_per_class must be >= 1".into()));
        }
        if let TestSet::Fraction(f) = self.test {
            if !(0.0..1.0).contains(&f) {
                return Err(Error::Config(format!("test fraction must lie in [0, 1), got {f}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MinorityChoice {
    /// Classes `0..count`.
    LowerHalf,
    /// `count` classes drawn with the split seed.
    Random,
    Explicit(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ImbalanceSpec {
    pub minority_fraction: f64,
    /// Number of under-represented classes; defaults to half of them.
    pub minority_class_count: Option<usize>,
    pub minority: MinorityChoice,
    /// Double the majority per-class size of the initial training set.
    pub doubled_initial: bool,
    /// Holdout size relative to the initial training set; kept balanced.
    pub holdout_to_initial_ratio: f64,
}

impl Default for ImbalanceSpec {
    fn default() -> Self {
        Self {
            minority_fraction: 0.1,
            minority_class_count: None,
            minority: MinorityChoice::LowerHalf,
            doubled_initial: true,
            holdout_to_initial_ratio: 0.2,
        }
    }
}

impl ImbalanceSpec {
    fn validate(&self, num_classes: usize) -> Result<()> {
        if !(self.minority_fraction > 0.0 && self.minority_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "minority_fraction must lie in (0, 1], got {}",
                self.minority_fraction
            )));
        }
        if self.holdout_to_initial_ratio.is_nan() || self.holdout_to_initial_ratio <= 0.0 {
            return Err(Error::Config("holdout_to_initial_ratio must be > 0".into()));
        }
        if let MinorityChoice::Explicit(cs) = &self.minority {
            if let Some(&c) = cs.iter().find(|&&c| c >= num_classes) {
                return Err(Error::Config(format!("minority class {c} >= num_classes {num_classes}")));
            }
        }
        Ok(())
    }

    /// Sorted list of under-represented classes.
    pub fn minority_classes(&self, num_classes: usize, seed: u64) -> Vec<usize> {
        let count = self.minority_class_count.unwrap_or(num_classes / 2).min(num_classes);
        let mut out = match &self.minority {
            MinorityChoice::LowerHalf => (0..count).collect(),
            MinorityChoice::Explicit(cs) => cs.clone(),
            MinorityChoice::Random => {
                let mut all: Vec<usize> = (0..num_classes).collect();
                all.shuffle(&mut rng_from(derive_seed(seed, 0x4d49_4e4f)));
                all.truncate(count);
                all
            }
        };
        out.sort_unstable();
        out.dedup();
        out
    }
}

fn round_count(x: f64) -> usize {
    x.round().max(0.0) as usize
}

/// Per-class shuffled members left after carving out the test set.
fn carve<T: Real>(ds: &Dataset<T>, spec: &SplitSpec, rng: &mut Rng) -> Result<(Vec<usize>, Vec<Vec<usize>>)> {
    let mut by_class = vec![Vec::new(); ds.num_classes];
    let mut test = Vec::new();
    match &spec.test {
        TestSet::Fixed(idx) => {
            let fixed: BTreeSet<usize> = idx.iter().copied().collect();
            if let Some(&bad) = fixed.iter().find(|&&i| i >= ds.len()) {
                return Err(Error::Config(format!("test index {bad} out of range ({} samples)", ds.len())));
            }
            for (i, &y) in ds.labels.iter().enumerate() {
                if !fixed.contains(&i) {
                    by_class[y].push(i);
                }
            }
            test.extend(fixed);
            for members in &mut by_class {
                members.shuffle(rng);
            }
        }
        TestSet::Fraction(f) => {
            for (i, &y) in ds.labels.iter().enumerate() {
                by_class[y].push(i);
            }
            for members in &mut by_class {
                members.shuffle(rng);
                let n_test = (f * members.len() as f64).floor() as usize;
                test.extend(members.drain(..n_test));
            }
        }
    }
    Ok((test, by_class))
}

fn take(members: &mut Vec<usize>, n: usize, class: usize, required: usize) -> Result<Vec<usize>> {
    if members.len() < n {
        return Err(Error::InsufficientClass {
            class,
            available: members.len(),
            required,
        });
    }
    Ok(members.drain(..n).collect())
}

/// Stratified split with the same number of initial and holdout samples per
/// class; everything left after the test carve-out forms the pool.
pub fn make_split<T: Real>(ds: &Dataset<T>, spec: &SplitSpec) -> Result<Split> {
    spec.validate()?;
    let mut rng = rng_from(derive_seed(spec.seed, stream::SPLIT));
    let (test, mut by_class) = carve(ds, spec, &mut rng)?;
    let holdout_pc = spec.holdout_per_class.unwrap_or(spec.initial_per_class);
    let (mut train, mut holdout, mut pool) = (Vec::new(), Vec::new(), Vec::new());
    for (c, members) in by_class.iter_mut().enumerate() {
        let required = spec.initial_per_class + holdout_pc;
        train.extend(take(members, spec.initial_per_class, c, required)?);
        holdout.extend(take(members, holdout_pc, c, required)?);
        let n_pool = spec.pool_per_class.map_or(members.len(), |cap| cap.min(members.len()));
        pool.extend(members.drain(..n_pool));
    }
    Split::new(train, pool, holdout, test)
}

/// Split in which the minority classes hold `minority_fraction` of the
/// majority per-class count, both in the initial training set and in the
/// pool. The holdout stays balanced.
pub fn make_imbalanced_split<T: Real>(ds: &Dataset<T>, spec: &SplitSpec, imb: &ImbalanceSpec) -> Result<Split> {
    spec.validate()?;
    imb.validate(ds.num_classes)?;
    let minority = imb.minority_classes(ds.num_classes, spec.seed);
    let is_minor = |c: usize| minority.binary_search(&c).is_ok();
    let mut rng = rng_from(derive_seed(spec.seed, stream::SPLIT));
    let (test, mut by_class) = carve(ds, spec, &mut rng)?;

    let major_init = spec.initial_per_class * if imb.doubled_initial { 2 } else { 1 };
    let minor_init = round_count(imb.minority_fraction * major_init as f64).max(1);
    let initial_total: usize = (0..ds.num_classes)
        .map(|c| if is_minor(c) { minor_init } else { major_init })
        .sum();
    let holdout_pc = spec.holdout_per_class.unwrap_or_else(|| {
        let total = round_count(imb.holdout_to_initial_ratio * initial_total as f64);
        (total / ds.num_classes).max(1)
    });

    let (mut train, mut holdout) = (Vec::new(), Vec::new());
    for (c, members) in by_class.iter_mut().enumerate() {
        let n_init = if is_minor(c) { minor_init } else { major_init };
        train.extend(take(members, n_init, c, n_init + holdout_pc)?);
        holdout.extend(take(members, holdout_pc, c, n_init + holdout_pc)?);
    }

    let majority_pool = (0..ds.num_classes)
        .filter(|&c| !is_minor(c))
        .map(|c| by_class[c].len())
        .min()
        .unwrap_or(0);
    let majority_pool = spec.pool_per_class.map_or(majority_pool, |cap| cap.min(majority_pool));
    let minority_pool = round_count(imb.minority_fraction * majority_pool as f64);
    let mut pool = Vec::new();
    for (c, members) in by_class.iter_mut().enumerate() {
        let n = if is_minor(c) { minority_pool } else { majority_pool };
        pool.extend(take(members, n, c, n)?);
    }
    Split::new(train, pool, holdout, test)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{make_blobs, BlobSpec};

    fn ds(per_class: usize, classes: usize) -> Dataset<f64> {
        make_blobs(&BlobSpec {
            num_classes: classes,
            per_class_counts: vec![per_class; classes],
            dim: 3,
            centers_seed: 0,
            noise_sigma: 0.5,
            sample_seed: 1,
        })
        .unwrap()
    }

    fn counts(ds: &Dataset<f64>, idx: &[usize]) -> Vec<usize> {
        let mut c = vec![0; ds.num_classes];
        for &i in idx {
            c[ds.labels[i]] += 1;
        }
        c
    }

    #[test]
    fn balanced_split_is_stratified() {
        let d = ds(100, 10);
        let s = make_split(&d, &SplitSpec::balanced(5, 3)).unwrap();
        assert_eq!(counts(&d, s.train()), vec![5; 10]);
        assert_eq!(counts(&d, s.holdout()), vec![5; 10]);
        assert_eq!(counts(&d, s.test()), vec![20; 10]);
        assert_eq!(s.pool().len(), 10 * (100 - 20 - 10));
        s.check_disjoint().unwrap();
        assert_eq!(s, make_split(&d, &SplitSpec::balanced(5, 3)).unwrap());
        assert_ne!(s, make_split(&d, &SplitSpec::balanced(5, 4)).unwrap());
    }

    #[test]
    fn too_few_samples_per_class() {
        let d = ds(10, 2);
        assert!(matches!(
            make_split(&d, &SplitSpec::balanced(20, 0)),
            Err(Error::InsufficientClass { .. })
        ));
    }

    #[test]
    fn fixed_test_indices_are_respected() {
        let d = ds(30, 2);
        let mut spec = SplitSpec::balanced(2, 0);
        spec.test = TestSet::Fixed((50..60).collect());
        let s = make_split(&d, &spec).unwrap();
        assert_eq!(s.test(), (50..60).collect::<Vec<_>>().as_slice());
        assert_eq!(s.train().len() + s.holdout().len() + s.pool().len(), 50);
    }

    #[test]
    fn imbalanced_counts() {
        let d = ds(400, 10);
        let mut spec = SplitSpec::balanced(10, 7);
        spec.pool_per_class = Some(100);
        let s = make_imbalanced_split(&d, &spec, &ImbalanceSpec::default()).unwrap();
        let train = counts(&d, s.train());
        assert_eq!(train, [vec![2; 5], vec![20; 5]].concat());
        assert_eq!(s.train().len(), 110);
        assert_eq!(counts(&d, s.holdout()), vec![2; 10]);
        assert_eq!(counts(&d, s.pool()), [vec![10; 5], vec![100; 5]].concat());
        s.check_disjoint().unwrap();
    }

    #[test]
    fn explicit_and_random_minorities() {
        let imb = ImbalanceSpec {
            minority: MinorityChoice::Explicit(vec![7, 2]),
            ..Default::default()
        };
        assert_eq!(imb.minority_classes(10, 0), vec![2, 7]);
        let r = ImbalanceSpec {
            minority: MinorityChoice::Random,
            ..Default::default()
        };
        let a = r.minority_classes(10, 5);
        assert_eq!(a.len(), 5);
        assert_eq!(a, r.minority_classes(10, 5));
    }

    #[test]
    fn annotate_moves_indices() {
        let d = ds(50, 2);
        let s = make_split(&d, &SplitSpec::balanced(2, 0)).unwrap();
        assert_eq!(s.annotate(&[]).unwrap(), s);
        let p = s.pool().to_vec();
        let ab = s.annotate(&[p[3], p[0]]).unwrap().annotate(&[p[5]]).unwrap();
        let abc = s.annotate(&[p[5], p[0], p[3]]).unwrap();
        assert_eq!(ab, abc);
        assert_eq!(abc.train().len(), s.train().len() + 3);
        assert_eq!(abc.pool().len(), s.pool().len() - 3);
        let all = s.annotate(&p).unwrap();
        assert!(all.pool().is_empty());
        assert!(s.annotate(&[s.train()[0]]).is_err());
        assert!(s.annotate(&[p[0], p[0]]).is_err());
    }
}
