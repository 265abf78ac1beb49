//! Semi-supervised optimum-path forest.
//!
//! Every sample is a node of the complete graph whose arc weights are
//! Euclidean distances. A path costs the largest arc weight along it, and
//! every node is conquered by the seed (supervised sample) offering the
//! cheapest such path. The forest is grown with a Dijkstra-style image
//! foresting transform over the implicit complete graph: `O(n^2)` time and
//! `O(n)` memory, no arc list is ever materialized.

mod oracle;

pub use oracle::{minimax_oracle, ORACLE_MAX_NODES};

use crate::matrix::FeatureMatrix;
use crate::par;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum OpfError {
    #[error("seed set is empty")]
    EmptySeeds,
    #[error("class {0} has no seed")]
    MissingClass(usize),
    #[error("seed index {index} is out of range for {n} samples")]
    SeedOutOfRange { index: usize, n: usize },
    #[error("sample {0} is listed as a seed more than once")]
    DuplicateSeed(usize),
    #[error("seed label {label} is out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("seed indices and labels differ in length")]
    LengthMismatch,
    #[error("points contain non-finite coordinates")]
    NonFinite,
    #[error("oracle is limited to {max} nodes, got {n}")]
    TooLarge { n: usize, max: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
}

/// Supervised samples acting as forest roots.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeedSet {
    indices: Vec<usize>,
    labels: Vec<usize>,
    num_classes: usize,
}

impl SeedSet {
    /// Non-empty, unique indices, labels below `num_classes`, and at least
    /// one seed for every class.
    pub fn new(indices: Vec<usize>, labels: Vec<usize>, num_classes: usize) -> Result<Self, OpfError> {
        if indices.len() != labels.len() {
            return Err(OpfError::LengthMismatch);
        }
        if indices.is_empty() {
            return Err(OpfError::EmptySeeds);
        }
        let mut present = vec![false; num_classes];
        for &l in &labels {
            if l >= num_classes {
                return Err(OpfError::LabelOutOfRange {
                    label: l,
                    classes: num_classes,
                });
            }
            present[l] = true;
        }
        if let Some(k) = present.iter().position(|p| !p) {
            return Err(OpfError::MissingClass(k));
        }
        let mut sorted = indices.clone();
        sorted.sort_unstable();
        if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
            return Err(OpfError::DuplicateSeed(w[0]));
        }
        Ok(Self {
            indices,
            labels,
            num_classes,
        })
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Per-sample supervised flag for `n` samples.
    pub fn mask(&self, n: usize) -> Vec<bool> {
        let mut m = vec![false; n];
        for &i in &self.indices {
            m[i] = true;
        }
        m
    }

    fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.indices.iter().copied().zip(self.labels.iter().copied())
    }

    fn check_against(&self, points: &FeatureMatrix) -> Result<(), OpfError> {
        let n = points.rows();
        if let Some(&index) = self.indices.iter().find(|&&i| i >= n) {
            return Err(OpfError::SeedOutOfRange { index, n });
        }
        if !points.is_finite() {
            return Err(OpfError::NonFinite);
        }
        Ok(())
    }
}

/// Optimum-path forest over all samples.
#[derive(Debug, Clone, PartialEq)]
pub struct PathForest {
    /// Predecessor on the optimum path; `None` for seeds.
    pub predecessor: Vec<Option<usize>>,
    /// Minimax path cost from the seed set; zero for seeds.
    pub cost: Vec<f64>,
    /// Seed at the root of each sample's tree.
    pub root: Vec<usize>,
    pub assigned_label: Vec<usize>,
    /// `K x n` minimax costs computed with only class-`k` seeds present.
    pub class_costs: FeatureMatrix,
}

impl PathForest {
    pub fn len(&self) -> usize {
        self.cost.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cost.is_empty()
    }
}

#[inline]
pub(crate) fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(u, v)| (u - v) * (u - v))
        .sum::<f64>()
        .sqrt()
}

struct Forest {
    predecessor: Vec<Option<usize>>,
    cost: Vec<f64>,
    root: Vec<usize>,
    label: Vec<usize>,
}

/// Grows the minimax forest from `seeds` (index, label) on the complete graph.
///
/// The next node to finalize is the open node with the smallest
/// `(cost, insertion sequence)`; a node's sequence number is refreshed every
/// time its cost strictly improves, so among equal costs the earliest offer
/// wins.
fn grow_forest(points: &FeatureMatrix, seeds: impl Iterator<Item = (usize, usize)>) -> Forest {
    let n = points.rows();
    let mut cost = vec![f64::INFINITY; n];
    let mut seq = vec![u64::MAX; n];
    let mut predecessor = vec![None; n];
    let mut root = vec![usize::MAX; n];
    let mut label = vec![usize::MAX; n];
    let mut done = vec![false; n];
    let mut counter = 0u64;
    for (s, l) in seeds {
        cost[s] = 0.0;
        seq[s] = counter;
        counter += 1;
        root[s] = s;
        label[s] = l;
    }
    loop {
        let mut best: Option<usize> = None;
        for t in 0..n {
            if done[t] || cost[t] == f64::INFINITY {
                continue;
            }
            best = match best {
                Some(b) if (cost[b], seq[b]) <= (cost[t], seq[t]) => Some(b),
                _ => Some(t),
            };
        }
        let Some(s) = best else { break };
        done[s] = true;
        let ps = points.row(s);
        for t in 0..n {
            if done[t] {
                continue;
            }
            let offer = cost[s].max(euclidean(ps, points.row(t)));
            if offer < cost[t] {
                cost[t] = offer;
                seq[t] = counter;
                counter += 1;
                predecessor[t] = Some(s);
                root[t] = root[s];
                label[t] = label[s];
            }
        }
    }
    Forest {
        predecessor,
        cost,
        root,
        label,
    }
}

/// Minimax path costs per class: row `k` is the forest cost when only the
/// class-`k` seeds exist. Classes are processed independently (in parallel
/// with the `parallel` feature).
pub fn per_class_costs(points: &FeatureMatrix, seeds: &SeedSet) -> Result<FeatureMatrix, OpfError> {
    seeds.check_against(points)?;
    Ok(class_costs_unchecked(points, seeds))
}

fn class_costs_unchecked(points: &FeatureMatrix, seeds: &SeedSet) -> FeatureMatrix {
    let n = points.rows();
    let k = seeds.num_classes();
    let rows = par::map_range(k, |class| {
        grow_forest(points, seeds.pairs().filter(|&(_, l)| l == class)).cost
    });
    let mut out = FeatureMatrix::zeros(k, n);
    for (class, row) in rows.into_iter().enumerate() {
        out.row_mut(class).copy_from_slice(&row);
    }
    out
}

/// Propagates seed labels to every sample through the optimum-path forest.
///
/// `points` may have any dimensionality; the engine passes the 2D embedding.
pub fn propagate_labels(points: &FeatureMatrix, seeds: &SeedSet) -> Result<PathForest, OpfError> {
    seeds.check_against(points)?;
    let forest = grow_forest(points, seeds.pairs());
    let class_costs = class_costs_unchecked(points, seeds);
    Ok(PathForest {
        predecessor: forest.predecessor,
        cost: forest.cost,
        root: forest.root,
        assigned_label: forest.label,
        class_costs,
    })
}

/// Per-sample confidence in `[0, 1]` from the margin between the assigned
/// class's path cost `c1` and the best competing class's cost `c2`:
/// `2 c2 / (c1 + c2) - 1`. Supervised samples get 1, as does every sample
/// when there is a single class. `c1 = c2 = 0` with a competitor gives 0.
pub fn confidence(
    class_costs: &FeatureMatrix,
    assigned_label: &[usize],
    supervised: &[bool],
) -> Result<Vec<f64>, OpfError> {
    let n = class_costs.cols();
    if assigned_label.len() != n || supervised.len() != n {
        return Err(OpfError::Shape(format!(
            "class costs cover {n} samples, labels {} and mask {}",
            assigned_label.len(),
            supervised.len()
        )));
    }
    let k = class_costs.rows();
    if k == 0 {
        return Err(OpfError::Shape("class cost table has no classes".into()));
    }
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        if supervised[i] || k == 1 {
            out.push(1.0);
            continue;
        }
        let own = assigned_label[i];
        if own >= k {
            return Err(OpfError::LabelOutOfRange {
                label: own,
                classes: k,
            });
        }
        let c1 = class_costs.get(own, i);
        let c2 = (0..k)
            .filter(|&c| c != own)
            .map(|c| class_costs.get(c, i))
            .fold(f64::INFINITY, f64::min);
        let raw = if c1 + c2 == 0.0 { 0.5 } else { c2 / (c1 + c2) };
        out.push((2.0 * raw - 1.0).clamp(0.0, 1.0));
    }
    Ok(out)
}
