//! Small hand-built instances: the two-path shortest-path example with five
//! observations, its nominal and robust trees, and the partition-based leaf
//! assignment instance on the selection problem.

use crate::model::{Dataset, DecisionTree, Solution, Split, TreeStructure};
use crate::space::{DagPathSpace, SelectionSpace, SpaceSpec};

/// Edges `e1: s→1`, `e2: 1→t`, `e3: s→2`, `e4: 2→t` with nodes `s=0, 1, 2, t=3`.
pub fn motivating_space_spec() -> SpaceSpec {
    SpaceSpec::Dag { nodes: 4, edges: vec![(0, 1), (1, 3), (0, 2), (2, 3)], source: 0, sink: 3 }
}

pub fn motivating_space() -> DagPathSpace {
    DagPathSpace::new(4, vec![(0, 1), (1, 3), (0, 2), (2, 3)], 0, 3).expect("static graph")
}

pub fn motivating_dataset() -> Dataset {
    Dataset::new(vec![
        vec![0.0, 1.0, 7.0, 9.0],
        vec![1.0, 5.0, 3.0, 10.0],
        vec![9.0, 4.0, 4.0, 9.0],
        vec![9.0, 10.0, 5.0, 7.0],
        vec![10.0, 8.0, 2.0, 2.0],
    ])
    .expect("static data")
}

/// Path A = `{e1, e2}`.
pub fn path_a() -> Solution {
    Solution::from_indicator(vec![1, 1, 0, 0]).expect("binary")
}

/// Path B = `{e3, e4}`.
pub fn path_b() -> Solution {
    Solution::from_indicator(vec![0, 0, 1, 1]).expect("binary")
}

/// `e1 <= 5 ? A : B`.
pub fn nominal_tree() -> DecisionTree {
    let s = TreeStructure::new(1, vec![Split { item: 0, threshold: 5.0 }]).expect("depth 1");
    DecisionTree::new(s, vec![path_a(), path_b()]).expect("two leaves")
}

/// `e1 <= 5 ? (e2 <= 6.5 ? A : B) : B`, written as a complete depth-2 tree.
/// The right subtree's split is never decisive since both its leaves hold B.
pub fn robust_tree() -> DecisionTree {
    let s = TreeStructure::new(
        2,
        vec![
            Split { item: 0, threshold: 5.0 },
            Split { item: 1, threshold: 6.5 },
            Split { item: 0, threshold: 9.5 },
        ],
    )
    .expect("depth 2");
    DecisionTree::new(s, vec![path_a(), path_b(), path_b(), path_b()]).expect("four leaves")
}

/// Leaf-assignment instance built from a partition instance with even item
/// count: selection of `p = n/2` out of `n + p` items, three samples and one
/// split `c_{n+1} <= W`. With a budget of 1 the optimum equals
/// `(p + 1/2) W` iff the weights admit a perfect partition.
#[derive(Debug, Clone)]
pub struct PartitionReduction {
    pub weights: Vec<f64>,
    pub p: usize,
    pub total: f64,
    pub big_m: f64,
    pub space: SelectionSpace,
    pub dataset: Dataset,
    pub structure: TreeStructure,
}

pub fn partition_reduction(weights: &[u32]) -> PartitionReduction {
    let n = weights.len();
    assert!(n.is_multiple_of(2) && n > 0, "partition reduction needs an even item count");
    let p = n / 2;
    let w: Vec<f64> = weights.iter().map(|&v| f64::from(v)).collect();
    let total: f64 = w.iter().sum();
    let big_m = 3.0 * p as f64 * total;
    let mut c1: Vec<f64> = w.iter().map(|wi| total - wi).collect();
    c1.extend(std::iter::repeat_n(big_m, p));
    let mut c2 = vec![big_m; n];
    c2.extend(std::iter::repeat_n(0.0, p));
    let mut c3: Vec<f64> = w.iter().map(|wi| 2.0 * wi).collect();
    c3.push(total);
    c3.extend(std::iter::repeat_n(0.0, p - 1));
    let dataset = Dataset::new(vec![c1, c2, c3]).expect("reduction data");
    let structure = TreeStructure::new(1, vec![Split { item: n, threshold: total }]).expect("depth 1");
    PartitionReduction {
        weights: w,
        p,
        total,
        big_m,
        space: SelectionSpace::new(n + p, p).expect("selection"),
        dataset,
        structure,
    }
}
