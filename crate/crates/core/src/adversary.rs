//! Worst-case observation perturbations for a fixed tree.
//!
//! The adversary only decides which leaf every sample is pushed into; the
//! cheapest perturbation achieving a leaf is a per-item interval projection
//! of the observation onto the leaf's region. Under a local budget every
//! sample is handled independently; under a global budget the choice is a
//! multiple-choice knapsack solved exactly by depth-first branch and bound.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{leaf_path, BudgetKind, Dataset, DecisionTree, TreeStructure, UncertaintyBudget};

pub const DEFAULT_EPSILON: f64 = 0.001;
pub const DEFAULT_BRUTE_FORCE_CAP: u128 = 10_000_000;
/// Slack on budget feasibility checks.
pub const BUDGET_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdversaryConfig {
    /// Margin used to push an observation strictly above a threshold.
    pub epsilon: f64,
    pub brute_force_cap: u128,
}

impl Default for AdversaryConfig {
    fn default() -> Self {
        AdversaryConfig { epsilon: DEFAULT_EPSILON, brute_force_cap: DEFAULT_BRUTE_FORCE_CAP }
    }
}

/// Outcome of the adversary problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdversaryResult {
    pub objective: f64,
    /// Leaf each sample is sent to.
    pub assignment: Vec<usize>,
    /// `N × n` perturbation realizing `assignment`.
    pub perturbation: Vec<Vec<f64>>,
}

impl AdversaryResult {
    pub fn perturbation_norms(&self) -> Vec<f64> {
        self.perturbation.iter().map(|row| row.iter().map(|v| v.abs()).sum()).collect()
    }
}

/// Per-item bounds `lower < value <= upper` an observation must satisfy to reach a leaf.
#[derive(Debug, Clone)]
struct LeafRegion {
    bounds: Vec<(usize, f64, f64)>,
    consistent: bool,
}

fn leaf_regions(structure: &TreeStructure) -> Vec<LeafRegion> {
    let depth = structure.depth();
    (0..structure.n_leaves())
        .map(|leaf| {
            let mut bounds: Vec<(usize, f64, f64)> = Vec::new();
            for (node, left) in leaf_path(depth, leaf) {
                let split = structure.splits()[node];
                let entry = match bounds.iter_mut().find(|b| b.0 == split.item) {
                    Some(e) => e,
                    None => {
                        bounds.push((split.item, f64::NEG_INFINITY, f64::INFINITY));
                        bounds.last_mut().unwrap()
                    }
                };
                if left {
                    entry.2 = entry.2.min(split.threshold);
                } else {
                    entry.1 = entry.1.max(split.threshold);
                }
            }
            let consistent = bounds.iter().all(|&(_, lo, hi)| lo < hi);
            LeafRegion { bounds, consistent }
        })
        .collect()
}

fn inside(v: f64, lower: f64, upper: f64) -> bool {
    v > lower && v <= upper
}

/// Smallest change of `v` landing inside `(lower, upper]`, aiming at `target`.
/// Rounding of `v + delta` is corrected by stepping `delta` one ulp at a time.
fn landing_delta(v: f64, lower: f64, upper: f64, target: f64) -> Option<f64> {
    let mut delta = target - v;
    for _ in 0..8 {
        let w = v + delta;
        if w > upper {
            delta = delta.next_down();
        } else if w <= lower {
            delta = delta.next_up();
        } else {
            return Some(delta);
        }
    }
    None
}

fn reach(region: &LeafRegion, c: &[f64], epsilon: f64) -> Option<Vec<(usize, f64)>> {
    if !region.consistent {
        return None;
    }
    let mut moves = Vec::new();
    for &(item, lower, upper) in &region.bounds {
        let v = c[item];
        if inside(v, lower, upper) {
            continue;
        }
        let target = if v > upper { upper } else { (lower + epsilon).min(upper) };
        moves.push((item, landing_delta(v, lower, upper, target)?));
    }
    Some(moves)
}

/// Effort `ρ_k` to push observation `c` into each leaf `k`; `+∞` marks
/// leaves no perturbation can reach. The nominal leaf has effort 0.
pub fn perturbation_cost(structure: &TreeStructure, c: &[f64], epsilon: f64) -> Vec<f64> {
    leaf_regions(structure).iter().map(|r| region_cost(r, c, epsilon)).collect()
}

fn region_cost(region: &LeafRegion, c: &[f64], epsilon: f64) -> f64 {
    match reach(region, c, epsilon) {
        Some(moves) => moves.iter().map(|(_, d)| d.abs()).sum(),
        None => f64::INFINITY,
    }
}

/// `ρ_k^j` for all samples and leaves.
#[derive(Debug, Clone, PartialEq)]
pub struct EffortTable {
    rows: Vec<Vec<f64>>,
}

impl EffortTable {
    pub fn new(structure: &TreeStructure, dataset: &Dataset, epsilon: f64) -> Self {
        Self::for_observations(structure, dataset.samples(), epsilon)
    }

    pub fn for_observations(structure: &TreeStructure, observations: &[Vec<f64>], epsilon: f64) -> Self {
        let regions = leaf_regions(structure);
        let rows = observations
            .iter()
            .map(|c| regions.iter().map(|r| region_cost(r, c, epsilon)).collect())
            .collect();
        EffortTable { rows }
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.rows[j]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    /// Leaves sample `j` can be sent to within `gamma`, ascending.
    pub fn reachable(&self, j: usize, gamma: f64) -> Vec<usize> {
        (0..self.rows[j].len()).filter(|&k| self.rows[j][k] <= gamma + BUDGET_TOLERANCE).collect()
    }

    /// Largest finite effort over all samples and leaves.
    pub fn max_finite(&self) -> f64 {
        self.rows.iter().flatten().copied().filter(|v| v.is_finite()).fold(0.0, f64::max)
    }
}

/// Perturbation of `c` sending it to `leaf` at minimum L1 cost.
pub fn reconstruct_perturbation(structure: &TreeStructure, c: &[f64], leaf: usize, epsilon: f64) -> Result<Vec<f64>> {
    let regions = leaf_regions(structure);
    let region = regions.get(leaf).ok_or(Error::InfeasibleTarget { leaf })?;
    let moves = reach(region, c, epsilon).ok_or(Error::InfeasibleTarget { leaf })?;
    let mut xi = vec![0.0; c.len()];
    for (item, delta) in moves {
        xi[item] = delta;
    }
    Ok(xi)
}

/// `values[j][k] = c_j^T x_k`.
fn leaf_values(tree: &DecisionTree, dataset: &Dataset) -> Vec<Vec<f64>> {
    dataset.samples().iter().map(|c| tree.leaves().iter().map(|x| x.cost(c)).collect()).collect()
}

/// Leaves in tie-breaking preference order: nominal first, then ascending index.
fn preference_order(nominal: usize, n_leaves: usize) -> Vec<usize> {
    std::iter::once(nominal).chain((0..n_leaves).filter(|&k| k != nominal)).collect()
}

fn assignment_value(values: &[Vec<f64>], assignment: &[usize]) -> f64 {
    values.iter().zip(assignment).map(|(row, &k)| row[k]).sum()
}

fn finish(tree: &DecisionTree, dataset: &Dataset, values: &[Vec<f64>], assignment: Vec<usize>, epsilon: f64) -> AdversaryResult {
    let perturbation = dataset
        .samples()
        .iter()
        .zip(&assignment)
        .map(|(c, &k)| reconstruct_perturbation(tree.structure(), c, k, epsilon).expect("chosen leaf is reachable"))
        .collect();
    AdversaryResult { objective: assignment_value(values, &assignment), assignment, perturbation }
}

pub fn solve(tree: &DecisionTree, dataset: &Dataset, budget: UncertaintyBudget, config: &AdversaryConfig) -> AdversaryResult {
    match budget.kind {
        BudgetKind::Local => solve_local(tree, dataset, budget.gamma, config),
        BudgetKind::Global => solve_global(tree, dataset, budget.gamma, config),
    }
}

/// Per-sample budget: each sample independently goes to its costliest reachable leaf.
pub fn solve_local(tree: &DecisionTree, dataset: &Dataset, gamma: f64, config: &AdversaryConfig) -> AdversaryResult {
    let efforts = EffortTable::new(tree.structure(), dataset, config.epsilon);
    let values = leaf_values(tree, dataset);
    let assignment = (0..dataset.len())
        .map(|j| {
            let nominal = tree.traverse(dataset.sample(j));
            let mut best = nominal;
            for k in preference_order(nominal, tree.n_leaves()) {
                if efforts.row(j)[k] <= gamma + BUDGET_TOLERANCE && values[j][k] > values[j][best] {
                    best = k;
                }
            }
            best
        })
        .collect();
    finish(tree, dataset, &values, assignment, config.epsilon)
}

struct KnapsackSearch<'a> {
    values: &'a [Vec<f64>],
    efforts: &'a EffortTable,
    options: Vec<Vec<usize>>,
    gamma: f64,
    current: Vec<usize>,
    best: Vec<usize>,
    best_value: f64,
}

impl KnapsackSearch<'_> {
    fn bound(&self, from: usize, used: f64) -> f64 {
        let slack = self.gamma + BUDGET_TOLERANCE - used;
        (from..self.values.len())
            .map(|j| {
                self.options[j]
                    .iter()
                    .filter(|&&k| self.efforts.row(j)[k] <= slack)
                    .map(|&k| self.values[j][k])
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .sum()
    }

    fn dfs(&mut self, j: usize, used: f64, partial: f64) {
        if j == self.values.len() {
            let value = assignment_value(self.values, &self.current);
            if value > self.best_value {
                self.best_value = value;
                self.best.clone_from(&self.current);
            }
            return;
        }
        let bound = partial + self.bound(j, used);
        if bound + 1e-9 * self.best_value.abs().max(1.0) < self.best_value {
            return;
        }
        for idx in 0..self.options[j].len() {
            let k = self.options[j][idx];
            let next = used + self.efforts.row(j)[k];
            if next <= self.gamma + BUDGET_TOLERANCE {
                self.current[j] = k;
                self.dfs(j + 1, next, partial + self.values[j][k]);
            }
        }
    }
}

/// Shared budget: exact multiple-choice knapsack over leaf assignments.
///
/// Samples are branched in order, options in preference order, and the
/// incumbent only changes on strict improvement, so the returned assignment
/// is the first optimal one in that lexicographic order.
pub fn solve_global(tree: &DecisionTree, dataset: &Dataset, gamma: f64, config: &AdversaryConfig) -> AdversaryResult {
    let efforts = EffortTable::new(tree.structure(), dataset, config.epsilon);
    let values = leaf_values(tree, dataset);
    let nominal: Vec<usize> = dataset.samples().iter().map(|c| tree.traverse(c)).collect();
    let options = nominal
        .iter()
        .enumerate()
        .map(|(j, &nom)| {
            preference_order(nom, tree.n_leaves())
                .into_iter()
                .filter(|&k| efforts.row(j)[k] <= gamma + BUDGET_TOLERANCE)
                .collect()
        })
        .collect();
    let mut search = KnapsackSearch {
        values: &values,
        efforts: &efforts,
        options,
        gamma,
        current: nominal.clone(),
        best_value: assignment_value(&values, &nominal),
        best: nominal,
    };
    search.dfs(0, 0.0, 0.0);
    let best = search.best;
    finish(tree, dataset, &values, best, config.epsilon)
}

/// Exhaustive enumeration of all `K^N` leaf assignments; test oracle for [`solve_global`].
pub fn brute_force_global(tree: &DecisionTree, dataset: &Dataset, gamma: f64, config: &AdversaryConfig) -> Result<AdversaryResult> {
    let n_leaves = tree.n_leaves() as u128;
    let total = (0..dataset.len()).try_fold(1u128, |acc, _| acc.checked_mul(n_leaves)).unwrap_or(u128::MAX);
    if total > config.brute_force_cap {
        return Err(Error::CapExceeded { what: "leaf assignments", count: total, cap: config.brute_force_cap });
    }
    let efforts = EffortTable::new(tree.structure(), dataset, config.epsilon);
    let values = leaf_values(tree, dataset);
    let orders: Vec<Vec<usize>> =
        dataset.samples().iter().map(|c| preference_order(tree.traverse(c), tree.n_leaves())).collect();
    let n = dataset.len();
    let mut digits = vec![0usize; n];
    let mut best: Option<(f64, Vec<usize>)> = None;
    loop {
        let assignment: Vec<usize> = (0..n).map(|j| orders[j][digits[j]]).collect();
        let used = (0..n).fold(0.0, |acc, j| acc + efforts.row(j)[assignment[j]]);
        if used <= gamma + BUDGET_TOLERANCE {
            let value = assignment_value(&values, &assignment);
            if best.as_ref().is_none_or(|(b, _)| value > *b) {
                best = Some((value, assignment));
            }
        }
        // odometer, last sample varies fastest
        let mut pos = n;
        loop {
            if pos == 0 {
                let (_, assignment) = best.expect("nominal assignment is always feasible");
                return Ok(finish(tree, dataset, &values, assignment, config.epsilon));
            }
            pos -= 1;
            digits[pos] += 1;
            if digits[pos] < tree.n_leaves() {
                break;
            }
            digits[pos] = 0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::model::nominal_objective;

    const EPS: f64 = DEFAULT_EPSILON;

    #[test]
    fn effort_to_leave_nominal_leaf() {
        let tree = fixtures::nominal_tree();
        let rho = perturbation_cost(tree.structure(), &[10.0, 8.0, 2.0, 2.0], EPS);
        assert_eq!(rho, vec![5.0, 0.0]);
    }

    #[test]
    fn effort_to_cross_upwards_includes_epsilon() {
        let tree = fixtures::robust_tree();
        let rho = perturbation_cost(tree.structure(), &[1.0, 5.0, 3.0, 10.0], EPS);
        assert_eq!(rho[0], 0.0);
        assert!((rho[1] - 1.501).abs() < 1e-12);
        assert!((rho[2] - 4.001).abs() < 1e-12);
    }

    #[test]
    fn reconstruct_examples() {
        let fig2 = fixtures::nominal_tree();
        let xi = reconstruct_perturbation(fig2.structure(), &[10.0, 8.0, 2.0, 2.0], 0, EPS).unwrap();
        assert_eq!(xi, vec![-5.0, 0.0, 0.0, 0.0]);
        let xi = reconstruct_perturbation(fig2.structure(), &[10.0, 8.0, 2.0, 2.0], 1, EPS).unwrap();
        assert_eq!(xi, vec![0.0; 4]);
        let fig3 = fixtures::robust_tree();
        let c2 = [1.0, 5.0, 3.0, 10.0];
        let xi = reconstruct_perturbation(fig3.structure(), &c2, 1, EPS).unwrap();
        assert!((xi[1] - 1.501).abs() < 1e-12);
        assert_eq!([xi[0], xi[2], xi[3]], [0.0, 0.0, 0.0]);
        let moved: Vec<f64> = c2.iter().zip(&xi).map(|(a, b)| a + b).collect();
        assert_eq!(fig3.traverse(&moved), 1);
    }

    #[test]
    fn repeated_item_paths_use_true_minimum() {
        use crate::model::Split;
        // x0 <= 5 then x0 <= 3: leaf 1 is (3, 5], leaf 0 is (-inf, 3]
        let s = TreeStructure::new(
            2,
            vec![
                Split { item: 0, threshold: 5.0 },
                Split { item: 0, threshold: 3.0 },
                Split { item: 0, threshold: 2.0 },
            ],
        )
        .unwrap();
        let rho = perturbation_cost(&s, &[10.0], EPS);
        // summing per-node efforts would give 5 + 7 for leaf 0
        assert_eq!(rho[0], 7.0);
        assert_eq!(rho[1], 5.0);
        // leaf 2 needs x0 > 5 and x0 <= 2
        assert!(rho[2].is_infinite());
        assert_eq!(rho[3], 0.0);
        assert!(matches!(reconstruct_perturbation(&s, &[10.0], 2, EPS), Err(Error::InfeasibleTarget { leaf: 2 })));
    }

    #[test]
    fn narrow_interval_lands_below_epsilon() {
        use crate::model::Split;
        // leaf 1 = (1.0, 1.0004]; epsilon overshoots the interval
        let s = TreeStructure::new(
            2,
            vec![
                Split { item: 0, threshold: 1.0004 },
                Split { item: 0, threshold: 1.0 },
                Split { item: 0, threshold: 7.0 },
            ],
        )
        .unwrap();
        let xi = reconstruct_perturbation(&s, &[0.0], 1, EPS).unwrap();
        assert_eq!(s.traverse(&[xi[0]]), 1);
        assert!(xi[0] <= 1.0004);
    }

    #[test]
    fn global_budget_on_nominal_tree() {
        let ds = fixtures::motivating_dataset();
        let tree = fixtures::nominal_tree();
        let cfg = AdversaryConfig::default();
        let res = solve_global(&tree, &ds, 5.0, &cfg);
        assert_eq!(res.objective, 50.0);
        assert_eq!(res.assignment, vec![0, 0, 1, 1, 0]);
        assert_eq!(res.perturbation[4], vec![-5.0, 0.0, 0.0, 0.0]);
        let zero = solve_global(&tree, &ds, 0.0, &cfg);
        assert_eq!(zero.objective, 36.0);
        assert_eq!(brute_force_global(&tree, &ds, 5.0, &cfg).unwrap().objective, 50.0);
    }

    #[test]
    fn local_budget_on_nominal_tree() {
        let ds = fixtures::motivating_dataset();
        let tree = fixtures::nominal_tree();
        let cfg = AdversaryConfig::default();
        let res = solve_local(&tree, &ds, 5.0, &cfg);
        // each sample has its own budget of 5: c2 crosses to B (4.001),
        // c4 to A (4), c5 to A (5); per-sample worst 1, 13, 13, 19, 18
        assert_eq!(res.objective, 64.0);
        assert_eq!(res.assignment, vec![0, 1, 1, 0, 0]);
        let zero = solve_local(&tree, &ds, 0.0, &cfg);
        assert_eq!(zero.objective, nominal_objective(&tree, &ds));
        let all = solve_local(&tree, &ds, 1e6, &cfg);
        let worst: f64 = ds.samples().iter().map(|c| fixtures::path_a().cost(c).max(fixtures::path_b().cost(c))).sum();
        assert_eq!(all.objective, worst);
    }

    #[test]
    fn robust_tree_worst_case_is_43() {
        // Enumerating the leaf assignments by hand: only sample 2 can be moved
        // to a B leaf within budget 5 (effort 1.501 or 4.001), raising its cost
        // from 6 to 13; sample 1 would need 5.001 to cross e1 > 5.
        let ds = fixtures::motivating_dataset();
        let tree = fixtures::robust_tree();
        let cfg = AdversaryConfig::default();
        assert_eq!(brute_force_global(&tree, &ds, 5.0, &cfg).unwrap().objective, 43.0);
        assert_eq!(solve_global(&tree, &ds, 5.0, &cfg).objective, 43.0);
    }

    #[test]
    fn brute_force_cap() {
        let ds = fixtures::motivating_dataset();
        let tree = fixtures::robust_tree();
        let cfg = AdversaryConfig { brute_force_cap: 100, ..Default::default() };
        assert!(matches!(brute_force_global(&tree, &ds, 5.0, &cfg), Err(Error::CapExceeded { count: 1024, .. })));
    }
}
