//! Fixed workloads shared by the solver benchmarks.

use surrogate_core::instance::{generate_instance, InstanceSpec};
use surrogate_core::{Dataset, DecisionTree, FeasibleSpace, GridGraph, Solution, ThresholdCatalog, TreeStructure};

/// Training data and feasible set of a seeded grid instance.
pub fn grid_workload(side: usize, n_train: usize, seed: u64) -> (Dataset, GridGraph) {
    let inst = generate_instance(&InstanceSpec::new(side, n_train, 0, seed)).expect("valid instance spec");
    (inst.train_dataset().expect("generated data is valid"), GridGraph::new(side).expect("valid side"))
}

/// Deterministic depth-`depth` tree: the i-th inner node uses the i-th
/// catalog split (cycling), leaves cycle through the feasible solutions.
pub fn fixed_tree(dataset: &Dataset, space: &dyn FeasibleSpace, depth: usize) -> DecisionTree {
    let candidates = ThresholdCatalog::build(dataset).candidates();
    let stride = (candidates.len() / (1 << depth).max(1)).max(1);
    let splits = (0..(1usize << depth) - 1).map(|i| candidates[(i * stride) % candidates.len()]).collect();
    let pool: Vec<Solution> = space.enumerate_unchecked();
    let leaves = (0..1usize << depth).map(|k| pool[(k * 7) % pool.len()].clone()).collect();
    DecisionTree::new(TreeStructure::new(depth, splits).expect("split count matches depth"), leaves)
        .expect("leaves match depth")
}
