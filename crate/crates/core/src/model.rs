//! Problem data, tree representation and the nominal/robust evaluation
//! semantics of a decision-tree surrogate.
//!
//! Trees are complete binary trees stored in level order: inner node `q` has
//! children `2q + 1` and `2q + 2`, and the `2^D` leaves follow the
//! `2^D - 1` inner nodes. Leaf `k` is node `2^D - 1 + k`, so leaves are
//! numbered left to right.

use serde::{Deserialize, Serialize};

use crate::adversary::{self, AdversaryConfig};
use crate::error::{Error, Result};
use crate::space::FeasibleSpace;

/// Historical cost observations `c_1, …, c_N` over `n` items.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DatasetJson", into = "DatasetJson")]
pub struct Dataset {
    n_items: usize,
    samples: Vec<Vec<f64>>,
    labels: Option<Vec<String>>,
}

#[derive(Serialize, Deserialize)]
struct DatasetJson {
    n_items: usize,
    samples: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    labels: Option<Vec<String>>,
}

impl TryFrom<DatasetJson> for Dataset {
    type Error = Error;

    fn try_from(raw: DatasetJson) -> Result<Self> {
        let ds = Dataset::new(raw.samples)?;
        if ds.n_items != raw.n_items {
            return Err(Error::DimensionMismatch { expected: raw.n_items, actual: ds.n_items });
        }
        match raw.labels {
            Some(labels) => ds.with_labels(labels),
            None => Ok(ds),
        }
    }
}

impl From<Dataset> for DatasetJson {
    fn from(ds: Dataset) -> Self {
        DatasetJson { n_items: ds.n_items, samples: ds.samples, labels: ds.labels }
    }
}

impl Dataset {
    pub fn new(samples: Vec<Vec<f64>>) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| Error::InvalidDataset("at least one sample is required".into()))?;
        let n_items = first.len();
        if n_items == 0 {
            return Err(Error::InvalidDataset("samples must have at least one item".into()));
        }
        for (j, row) in samples.iter().enumerate() {
            if row.len() != n_items {
                return Err(Error::InvalidDataset(format!(
                    "sample {j} has {} items, expected {n_items}",
                    row.len()
                )));
            }
            if let Some(i) = row.iter().position(|v| !v.is_finite()) {
                return Err(Error::InvalidDataset(format!("sample {j} item {i} is not finite")));
            }
        }
        Ok(Dataset { n_items, samples, labels: None })
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.samples.len() {
            return Err(Error::InvalidDataset(format!(
                "{} labels for {} samples",
                labels.len(),
                self.samples.len()
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    /// Number of samples `N`.
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[Vec<f64>] {
        &self.samples
    }

    pub fn sample(&self, j: usize) -> &[f64] {
        &self.samples[j]
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    /// Entrywise sum of all samples.
    pub fn aggregate(&self) -> Vec<f64> {
        let mut total = vec![0.0; self.n_items];
        for row in &self.samples {
            for (t, v) in total.iter_mut().zip(row) {
                *t += v;
            }
        }
        total
    }

    /// Largest per-item spread `max_i (max_j c_ji - min_j c_ji)`.
    pub fn max_item_range(&self) -> f64 {
        (0..self.n_items)
            .map(|i| {
                let (lo, hi) = self.samples.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), row| {
                    (lo.min(row[i]), hi.max(row[i]))
                });
                hi - lo
            })
            .fold(0.0, f64::max)
    }

    /// Sorted distinct observed values of item `i`.
    pub fn distinct_values(&self, i: usize) -> Vec<f64> {
        let mut vals: Vec<f64> = self.samples.iter().map(|row| row[i]).collect();
        vals.sort_by(f64::total_cmp);
        vals.dedup();
        vals
    }
}

/// Candidate split thresholds `Θ(i)` per item.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdCatalog {
    per_item: Vec<Vec<f64>>,
}

impl ThresholdCatalog {
    /// Midpoints between consecutive distinct observed values of each item.
    pub fn build(dataset: &Dataset) -> Self {
        let per_item = (0..dataset.n_items())
            .map(|i| {
                let vals = dataset.distinct_values(i);
                let mut mids: Vec<f64> = vals.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
                mids.dedup();
                mids
            })
            .collect();
        ThresholdCatalog { per_item }
    }

    pub fn from_lists(per_item: Vec<Vec<f64>>) -> Self {
        let per_item = per_item
            .into_iter()
            .map(|mut v| {
                v.sort_by(f64::total_cmp);
                v.dedup();
                v
            })
            .collect();
        ThresholdCatalog { per_item }
    }

    pub fn n_items(&self) -> usize {
        self.per_item.len()
    }

    pub fn thresholds(&self, item: usize) -> &[f64] {
        &self.per_item[item]
    }

    pub fn items_with_splits(&self) -> Vec<usize> {
        (0..self.per_item.len()).filter(|&i| !self.per_item[i].is_empty()).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.per_item.iter().all(Vec::is_empty)
    }

    /// Every `(item, threshold)` pair, ordered by item then threshold.
    pub fn candidates(&self) -> Vec<Split> {
        self.per_item
            .iter()
            .enumerate()
            .flat_map(|(item, ths)| ths.iter().map(move |&threshold| Split { item, threshold }))
            .collect()
    }
}

/// Binary solution vector. Feasibility is judged by a [`FeasibleSpace`].
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<u8>", into = "Vec<u8>")]
pub struct Solution(Vec<u8>);

impl TryFrom<Vec<u8>> for Solution {
    type Error = Error;

    fn try_from(bits: Vec<u8>) -> Result<Self> {
        Solution::from_indicator(bits)
    }
}

impl From<Solution> for Vec<u8> {
    fn from(x: Solution) -> Self {
        x.0
    }
}

impl Solution {
    pub fn from_indicator(bits: Vec<u8>) -> Result<Self> {
        if let Some(pos) = bits.iter().position(|&b| b > 1) {
            return Err(Error::InvalidTree(format!("solution entry {pos} is not binary")));
        }
        Ok(Solution(bits))
    }

    pub fn from_bools(bits: impl IntoIterator<Item = bool>) -> Self {
        Solution(bits.into_iter().map(u8::from).collect())
    }

    pub fn zeros(n: usize) -> Self {
        Solution(vec![0; n])
    }

    pub fn bits(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_binary(&self) -> bool {
        self.0.iter().all(|&b| b <= 1)
    }

    pub fn ones(&self) -> usize {
        self.0.iter().filter(|&&b| b == 1).count()
    }

    /// `c^T x`, summed in item order.
    pub fn cost(&self, c: &[f64]) -> f64 {
        self.0.iter().zip(c).filter(|(b, _)| **b == 1).map(|(_, v)| *v).sum()
    }
}

/// Single univariate query `c_item <= threshold`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub item: usize,
    pub threshold: f64,
}

impl Split {
    /// Observations at or below the threshold go left.
    #[inline]
    pub fn goes_left(&self, observation: &[f64]) -> bool {
        observation[self.item] <= self.threshold
    }
}

pub fn inner_count(depth: usize) -> usize {
    (1usize << depth) - 1
}

pub fn leaf_count(depth: usize) -> usize {
    1usize << depth
}

/// Inner nodes on the root-to-leaf path with the branch taken at each
/// (`true` = left), ordered from the root downwards.
pub fn leaf_path(depth: usize, leaf: usize) -> Vec<(usize, bool)> {
    let mut node = inner_count(depth) + leaf;
    let mut path = Vec::with_capacity(depth);
    while node > 0 {
        let parent = (node - 1) / 2;
        path.push((parent, node % 2 == 1));
        node = parent;
    }
    path.reverse();
    path
}

/// Split structure of a complete tree of fixed depth, leaves unpopulated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeStructure {
    depth: usize,
    splits: Vec<Split>,
}

impl TreeStructure {
    pub fn new(depth: usize, splits: Vec<Split>) -> Result<Self> {
        if splits.len() != inner_count(depth) {
            return Err(Error::InvalidTree(format!(
                "depth {depth} needs {} inner nodes, got {}",
                inner_count(depth),
                splits.len()
            )));
        }
        if let Some(s) = splits.iter().find(|s| !s.threshold.is_finite()) {
            return Err(Error::InvalidTree(format!("non-finite threshold on item {}", s.item)));
        }
        Ok(TreeStructure { depth, splits })
    }

    pub fn leaf_only() -> Self {
        TreeStructure { depth: 0, splits: Vec::new() }
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn splits(&self) -> &[Split] {
        &self.splits
    }

    pub fn splits_mut(&mut self) -> &mut [Split] {
        &mut self.splits
    }

    pub fn n_leaves(&self) -> usize {
        leaf_count(self.depth)
    }

    /// Leaf index reached by `observation`.
    pub fn traverse(&self, observation: &[f64]) -> usize {
        let inner = self.splits.len();
        let mut node = 0;
        while node < inner {
            node = if self.splits[node].goes_left(observation) { 2 * node + 1 } else { 2 * node + 2 };
        }
        node - inner
    }

    fn check_items(&self, n_items: usize) -> Result<()> {
        match self.splits.iter().find(|s| s.item >= n_items) {
            Some(s) => Err(Error::InvalidTree(format!("split item {} out of range for {n_items} items", s.item))),
            None => Ok(()),
        }
    }
}

/// Complete univariate tree with a solution at every leaf.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TreeJson", into = "TreeJson")]
pub struct DecisionTree {
    structure: TreeStructure,
    leaves: Vec<Solution>,
}

#[derive(Serialize, Deserialize)]
struct TreeJson {
    depth: usize,
    nodes: Vec<Split>,
    leaves: Vec<Solution>,
}

impl TryFrom<TreeJson> for DecisionTree {
    type Error = Error;

    fn try_from(raw: TreeJson) -> Result<Self> {
        DecisionTree::new(TreeStructure::new(raw.depth, raw.nodes)?, raw.leaves)
    }
}

impl From<DecisionTree> for TreeJson {
    fn from(t: DecisionTree) -> Self {
        TreeJson { depth: t.structure.depth, nodes: t.structure.splits, leaves: t.leaves }
    }
}

impl DecisionTree {
    pub fn new(structure: TreeStructure, leaves: Vec<Solution>) -> Result<Self> {
        if leaves.len() != structure.n_leaves() {
            return Err(Error::InvalidTree(format!(
                "depth {} needs {} leaves, got {}",
                structure.depth,
                structure.n_leaves(),
                leaves.len()
            )));
        }
        if let Some(first) = leaves.first() {
            if leaves.iter().any(|x| x.len() != first.len()) {
                return Err(Error::InvalidTree("leaf solutions differ in length".into()));
            }
            structure.check_items(first.len())?;
        }
        Ok(DecisionTree { structure, leaves })
    }

    /// Depth-0 tree mapping every observation to `solution`.
    pub fn single_leaf(solution: Solution) -> Self {
        DecisionTree { structure: TreeStructure::leaf_only(), leaves: vec![solution] }
    }

    pub fn structure(&self) -> &TreeStructure {
        &self.structure
    }

    pub fn depth(&self) -> usize {
        self.structure.depth
    }

    pub fn splits(&self) -> &[Split] {
        &self.structure.splits
    }

    pub fn leaves(&self) -> &[Solution] {
        &self.leaves
    }

    pub fn n_leaves(&self) -> usize {
        self.leaves.len()
    }

    pub fn traverse(&self, observation: &[f64]) -> usize {
        self.structure.traverse(observation)
    }

    /// Solution `T(ĉ)` for an observation.
    pub fn decide(&self, observation: &[f64]) -> &Solution {
        &self.leaves[self.traverse(observation)]
    }

    pub fn with_thresholds(&self, thresholds: &[f64]) -> Self {
        let mut t = self.clone();
        for (s, &th) in t.structure.splits.iter_mut().zip(thresholds) {
            s.threshold = th;
        }
        t
    }

    /// Every leaf solution is feasible in `space` and every split item exists.
    pub fn validate(&self, space: &dyn FeasibleSpace) -> Result<()> {
        self.structure.check_items(space.dim())?;
        for (k, x) in self.leaves.iter().enumerate() {
            if x.len() != space.dim() {
                return Err(Error::DimensionMismatch { expected: space.dim(), actual: x.len() });
            }
            if !space.is_feasible(x) {
                return Err(Error::InvalidTree(format!("leaf {k} holds an infeasible solution")));
            }
        }
        Ok(())
    }
}

/// Which budgeted uncertainty set constrains the adversary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BudgetKind {
    /// Budget per observation.
    Local,
    /// Budget shared by all observations.
    Global,
}

impl BudgetKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BudgetKind::Local => "local",
            BudgetKind::Global => "global",
        }
    }
}

impl std::fmt::Display for BudgetKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for BudgetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "local" | "loc" => Ok(BudgetKind::Local),
            "global" | "glob" => Ok(BudgetKind::Global),
            other => Err(Error::InvalidConfig(format!("unknown budget kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyBudget {
    pub kind: BudgetKind,
    pub gamma: f64,
}

impl UncertaintyBudget {
    pub fn new(kind: BudgetKind, gamma: f64) -> Result<Self> {
        if !(gamma.is_finite() && gamma >= 0.0) {
            return Err(Error::InvalidConfig(format!("budget must be finite and nonnegative, got {gamma}")));
        }
        Ok(UncertaintyBudget { kind, gamma })
    }

    pub fn local(gamma: f64) -> Self {
        Self::new(BudgetKind::Local, gamma).expect("valid budget")
    }

    pub fn global(gamma: f64) -> Self {
        Self::new(BudgetKind::Global, gamma).expect("valid budget")
    }

    pub fn none(kind: BudgetKind) -> Self {
        UncertaintyBudget { kind, gamma: 0.0 }
    }
}

/// Total true cost of the undisturbed traversal, `Σ_j c_j^T T(c_j)`.
pub fn nominal_objective(tree: &DecisionTree, dataset: &Dataset) -> f64 {
    dataset.samples().iter().map(|c| tree.decide(c).cost(c)).sum()
}

/// Worst-case total cost over the uncertainty set.
pub fn evaluate_robust(
    tree: &DecisionTree,
    dataset: &Dataset,
    budget: UncertaintyBudget,
    space: &dyn FeasibleSpace,
) -> Result<f64> {
    evaluate_robust_with(tree, dataset, budget, space, &AdversaryConfig::default())
}

pub fn evaluate_robust_with(
    tree: &DecisionTree,
    dataset: &Dataset,
    budget: UncertaintyBudget,
    space: &dyn FeasibleSpace,
    config: &AdversaryConfig,
) -> Result<f64> {
    tree.validate(space)?;
    if dataset.n_items() != space.dim() {
        return Err(Error::DimensionMismatch { expected: space.dim(), actual: dataset.n_items() });
    }
    Ok(adversary::solve(tree, dataset, budget, config).objective)
}
