use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DataError, Dataset};

/// Absorbs representation error in `x * n` (e.g. `0.29 * 100`).
const ROUNDING_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Split {
    /// Supervised training sample.
    S,
    /// Unsupervised training sample.
    U,
    /// Test sample.
    T,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::S => "S",
            Split::U => "U",
            Split::T => "T",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "S" => Ok(Split::S),
            "U" => Ok(Split::U),
            "T" => Ok(Split::T),
            other => Err(format!("split must be S, U or T, got {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSpec {
    /// Supervised fraction of the whole dataset.
    pub x: f64,
    pub test_frac: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            x: 0.01,
            test_frac: 0.30,
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<(), DataError> {
        if !(self.x > 0.0 && self.x <= 1.0) {
            return Err(DataError::Spec(format!(
                "supervised fraction x must lie in (0, 1], got {}",
                self.x
            )));
        }
        if !(self.test_frac >= 0.0 && self.test_frac < 1.0) {
            return Err(DataError::Spec(format!(
                "test fraction must lie in [0, 1), got {}",
                self.test_frac
            )));
        }
        if self.x + self.test_frac >= 1.0 {
            return Err(DataError::Spec(format!(
                "x + test_frac must be < 1, got {} + {}",
                self.x, self.test_frac
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitAssignment {
    membership: Vec<Split>,
    counts: (usize, usize, usize),
}

impl SplitAssignment {
    pub fn from_membership(membership: Vec<Split>) -> Self {
        let mut counts = (0, 0, 0);
        for m in &membership {
            match m {
                Split::S => counts.0 += 1,
                Split::U => counts.1 += 1,
                Split::T => counts.2 += 1,
            }
        }
        Self { membership, counts }
    }

    pub fn membership(&self) -> &[Split] {
        &self.membership
    }

    /// `(|S|, |U|, |T|)`.
    pub fn counts(&self) -> (usize, usize, usize) {
        self.counts
    }

    /// Sample indices with the given tag, in dataset order.
    pub fn indices(&self, tag: Split) -> Vec<usize> {
        self.membership
            .iter()
            .enumerate()
            .filter(|(_, m)| **m == tag)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Seeded, class-stratified S/U/T split.
///
/// `|S| = floor(x n)`, `|T| = ceil(test_frac n)`, the rest is `U`.
/// Per-class quotas follow class frequency with largest-remainder rounding.
/// A class whose supervised quota rounds to zero still gets one supervised
/// sample, taken from its `U` share, so `|S|` can exceed `floor(x n)` by at
/// most `K - 1`.
pub fn stratified_split(ds: &Dataset, spec: &SplitSpec) -> Result<SplitAssignment, DataError> {
    spec.validate()?;
    let n = ds.len();
    let counts = ds.class_counts();
    if let Some(k) = counts.iter().position(|&c| c == 0) {
        return Err(DataError::EmptyClass(ds.class_names()[k].clone()));
    }
    let k = counts.len();

    let s_floor = (spec.x * n as f64 + ROUNDING_SLACK).floor() as usize;
    if s_floor == 0 {
        return Err(DataError::Spec(format!(
            "x * n must be at least 1 (x = {}, n = {n})",
            spec.x
        )));
    }
    let mut s_quota = proportional_quotas(s_floor, &counts, n, None);
    for q in &mut s_quota {
        *q = (*q).max(1);
    }
    let s_total: usize = s_quota.iter().sum();
    let t_total = ((spec.test_frac * n as f64 - ROUNDING_SLACK).ceil().max(0.0)) as usize;
    if s_total + t_total > n {
        return Err(DataError::Spec(format!(
            "|S| = {s_total} and |T| = {t_total} leave a negative |U| for n = {n}"
        )));
    }
    let capacity: Vec<usize> = counts.iter().zip(&s_quota).map(|(c, s)| c - s).collect();
    let t_quota = proportional_quotas(t_total, &counts, n, Some(&capacity));

    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, s) in ds.samples().iter().enumerate() {
        by_class[s.true_label].push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut membership = vec![Split::U; n];
    for (c, members) in by_class.iter_mut().enumerate() {
        members.shuffle(&mut rng);
        for &i in &members[..s_quota[c]] {
            membership[i] = Split::S;
        }
        for &i in &members[s_quota[c]..s_quota[c] + t_quota[c]] {
            membership[i] = Split::T;
        }
    }
    Ok(SplitAssignment::from_membership(membership))
}

/// Largest-remainder apportionment of `total` slots proportional to
/// `counts / n`, ties to the lower class index. With `capacity`, per-class
/// quotas are capped and the overflow goes to classes with room, again by
/// remainder order.
fn proportional_quotas(
    total: usize,
    counts: &[usize],
    n: usize,
    capacity: Option<&[usize]>,
) -> Vec<usize> {
    let mut quota: Vec<usize> = Vec::with_capacity(counts.len());
    let mut remainders: Vec<(u128, usize)> = Vec::with_capacity(counts.len());
    for (c, &count) in counts.iter().enumerate() {
        let num = total as u128 * count as u128;
        quota.push((num / n as u128) as usize);
        remainders.push((num % n as u128, c));
    }
    // descending remainder, ascending index
    remainders.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let order: Vec<usize> = remainders.iter().map(|&(_, c)| c).collect();
    let mut left = total - quota.iter().sum::<usize>();
    for &c in &order {
        if left == 0 {
            break;
        }
        quota[c] += 1;
        left -= 1;
    }
    if let Some(cap) = capacity {
        let mut overflow = 0;
        for c in 0..quota.len() {
            if quota[c] > cap[c] {
                overflow += quota[c] - cap[c];
                quota[c] = cap[c];
            }
        }
        while overflow > 0 {
            let before = overflow;
            for &c in &order {
                if overflow == 0 {
                    break;
                }
                if quota[c] < cap[c] {
                    quota[c] += 1;
                    overflow -= 1;
                }
            }
            assert!(overflow < before, "total exceeds capacity");
        }
    }
    quota
}

/// One independent split per seed. Seeds must be pairwise distinct.
pub fn make_partitions(
    ds: &Dataset,
    x: f64,
    test_frac: f64,
    seeds: &[u64],
) -> Result<Vec<SplitAssignment>, DataError> {
    if seeds.is_empty() {
        return Err(DataError::Spec("at least one partition seed is required".into()));
    }
    for (i, a) in seeds.iter().enumerate() {
        if seeds[i + 1..].contains(a) {
            return Err(DataError::Spec(format!("partition seed {a} is repeated")));
        }
    }
    seeds
        .iter()
        .map(|&seed| stratified_split(ds, &SplitSpec { x, test_frac, seed }))
        .collect()
}
