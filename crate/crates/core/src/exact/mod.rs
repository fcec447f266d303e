//! Exact robust tree learning by scenario generation.
//!
//! The master problem picks the best tree against a finite list of
//! perturbation scenarios; the adversary then looks for a scenario that
//! hurts the master's tree more than the master anticipated. The loop stops
//! when the two objective values meet.

pub mod assign;
pub(crate) mod search;

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::adversary::{self, AdversaryConfig};
use crate::error::{Error, Result};
use crate::model::{inner_count, BudgetKind, Dataset, DecisionTree, Solution, ThresholdCatalog, TreeStructure, UncertaintyBudget};
use crate::space::{FeasibleSpace, DEFAULT_ENUMERATION_CAP};
use search::{Leaves, MasterOutcome};

/// Absolute tolerance when comparing objective values.
pub const OBJECTIVE_TOLERANCE: f64 = 1e-6;
/// Entrywise tolerance for recognizing a scenario already in the set.
pub const SCENARIO_TOLERANCE: f64 = 1e-9;
pub const DEFAULT_TIME_LIMIT: Duration = Duration::from_secs(3600);
pub const DEFAULT_MAX_DEPTH: usize = 3;
/// Convex weights used when refining thresholds after solving.
pub const DEFAULT_PI: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];

/// Perturbation matrices `ξ^1, …, ξ^S`, starting with the zero matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSet {
    scenarios: Vec<Vec<Vec<f64>>>,
}

impl ScenarioSet {
    pub fn new(n_samples: usize, n_items: usize) -> Self {
        ScenarioSet { scenarios: vec![vec![vec![0.0; n_items]; n_samples]] }
    }

    pub fn for_dataset(dataset: &Dataset) -> Self {
        Self::new(dataset.len(), dataset.n_items())
    }

    pub fn len(&self) -> usize {
        self.scenarios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenarios.is_empty()
    }

    pub fn scenarios(&self) -> &[Vec<Vec<f64>>] {
        &self.scenarios
    }

    pub fn contains(&self, xi: &[Vec<f64>]) -> bool {
        self.scenarios.iter().any(|s| {
            s.iter().zip(xi).all(|(a, b)| a.iter().zip(b).all(|(x, y)| (x - y).abs() <= SCENARIO_TOLERANCE))
        })
    }

    /// Appends `xi` unless an equal scenario is present; returns whether it was added.
    pub fn push(&mut self, xi: Vec<Vec<f64>>) -> bool {
        if self.contains(&xi) {
            return false;
        }
        self.scenarios.push(xi);
        true
    }
}

/// Candidate leaf solutions together with the position of the aggregate optimum.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidatePool {
    pub solutions: Vec<Solution>,
    /// Index of `min_linear(Σ_j c_j)` within `solutions`.
    pub aggregate_index: usize,
}

impl CandidatePool {
    /// Every feasible solution, refusing above `cap`.
    pub fn enumerate(space: &dyn FeasibleSpace, dataset: &Dataset, cap: u128) -> Result<Self> {
        Ok(Self::from_solutions(space.enumerate(cap)?, space, dataset))
    }

    /// Deduplicated per-sample optima.
    pub fn sample_optima(space: &dyn FeasibleSpace, dataset: &Dataset) -> Self {
        let mut solutions: Vec<Solution> = Vec::new();
        for c in dataset.samples() {
            let x = space.min_linear(c);
            if !solutions.contains(&x) {
                solutions.push(x);
            }
        }
        Self::from_solutions(solutions, space, dataset)
    }

    /// Adds the aggregate optimum if missing.
    pub fn from_solutions(mut solutions: Vec<Solution>, space: &dyn FeasibleSpace, dataset: &Dataset) -> Self {
        let h1 = space.min_linear(&dataset.aggregate());
        let aggregate_index = match solutions.iter().position(|x| *x == h1) {
            Some(i) => i,
            None => {
                solutions.push(h1);
                solutions.len() - 1
            }
        };
        CandidatePool { solutions, aggregate_index }
    }

    pub fn len(&self) -> usize {
        self.solutions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.solutions.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveLimits {
    pub time_limit: Duration,
    pub max_iterations: usize,
    pub enumeration_cap: u128,
    pub max_depth: usize,
    pub adversary: AdversaryConfig,
}

impl Default for SolveLimits {
    fn default() -> Self {
        SolveLimits {
            time_limit: DEFAULT_TIME_LIMIT,
            max_iterations: 10_000,
            enumeration_cap: DEFAULT_ENUMERATION_CAP,
            max_depth: DEFAULT_MAX_DEPTH,
            adversary: AdversaryConfig::default(),
        }
    }
}

impl SolveLimits {
    pub fn with_time_limit(mut self, limit: Duration) -> Self {
        self.time_limit = limit;
        self
    }
}

/// Outcome of an exact or heuristic solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub method: String,
    pub budget: UncertaintyBudget,
    pub depth: usize,
    pub tree: DecisionTree,
    /// Last master value (a lower bound for exact runs).
    pub master_objective: f64,
    /// Worst-case objective of `tree`.
    pub adversary_objective: f64,
    pub iterations: usize,
    pub wall_time_secs: f64,
    pub converged: bool,
    pub optimal: bool,
    pub master_history: Vec<f64>,
    pub adversary_history: Vec<f64>,
}

impl SolveReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Optimal tree for a fixed scenario set.
#[derive(Debug, Clone, PartialEq)]
pub struct MasterSolution {
    pub tree: DecisionTree,
    pub objective: f64,
    /// False when the deadline interrupted the search.
    pub complete: bool,
}

fn build_tree(outcome: &MasterOutcome, pool: &[Solution], depth: usize) -> DecisionTree {
    let structure = TreeStructure::new(depth, outcome.splits.clone()).expect("search produces complete trees");
    let leaves = outcome.choice.iter().map(|&p| pool[p].clone()).collect();
    DecisionTree::new(structure, leaves).expect("one solution per leaf")
}

fn check_inputs(dataset: &Dataset, space: &dyn FeasibleSpace, depth: usize, max_depth: usize) -> Result<()> {
    if dataset.n_items() != space.dim() {
        return Err(Error::DimensionMismatch { expected: space.dim(), actual: dataset.n_items() });
    }
    if depth > max_depth {
        return Err(Error::InvalidConfig(format!("depth {depth} exceeds the maximum {max_depth}")));
    }
    Ok(())
}

/// Solves the master problem over all trees of `depth` with free leaves.
pub fn solve_master(
    dataset: &Dataset,
    scenarios: &ScenarioSet,
    space: &dyn FeasibleSpace,
    depth: usize,
    catalog: &ThresholdCatalog,
) -> Result<MasterSolution> {
    let limits = SolveLimits::default();
    check_inputs(dataset, space, depth, limits.max_depth)?;
    let pool = CandidatePool::enumerate(space, dataset, limits.enumeration_cap)?;
    Ok(master_with_pool(dataset, scenarios, &pool, depth, catalog, None, None))
}

/// Master problem over a given pool, optionally with leaf solutions fixed
/// to pool indices.
pub fn master_with_pool(
    dataset: &Dataset,
    scenarios: &ScenarioSet,
    pool: &CandidatePool,
    depth: usize,
    catalog: &ThresholdCatalog,
    fixed_leaves: Option<&[usize]>,
    deadline: Option<Instant>,
) -> MasterSolution {
    let leaves = match fixed_leaves {
        Some(chosen) => Leaves::Fixed(chosen),
        None => Leaves::Free { fallback: pool.aggregate_index },
    };
    let outcome = search::search(dataset, scenarios.scenarios(), &pool.solutions, depth, catalog, leaves, deadline);
    MasterSolution { tree: build_tree(&outcome, &pool.solutions, depth), objective: outcome.objective, complete: outcome.complete }
}

/// Scenario-generation run over a prepared pool; shared with the heuristics.
pub(crate) struct GenerationRun {
    pub tree: DecisionTree,
    pub master_objective: f64,
    pub adversary_objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub complete: bool,
    pub master_history: Vec<f64>,
    pub adversary_history: Vec<f64>,
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn generate(
    dataset: &Dataset,
    budget: UncertaintyBudget,
    depth: usize,
    catalog: &ThresholdCatalog,
    pool: &CandidatePool,
    fixed_leaves: Option<&[usize]>,
    limits: &SolveLimits,
    deadline: Instant,
) -> Result<GenerationRun> {
    let mut scenarios = ScenarioSet::for_dataset(dataset);
    let mut master_history = Vec::new();
    let mut adversary_history = Vec::new();
    let mut best: Option<(DecisionTree, f64)> = None;
    let mut complete = true;
    let mut converged = false;
    let mut master_objective = f64::NEG_INFINITY;
    let mut iterations = 0;
    while iterations < limits.max_iterations {
        iterations += 1;
        let master = master_with_pool(dataset, &scenarios, pool, depth, catalog, fixed_leaves, Some(deadline));
        let adv = adversary::solve(&master.tree, dataset, budget, &limits.adversary);
        master_history.push(master.objective);
        adversary_history.push(adv.objective);
        if best.as_ref().is_none_or(|(_, v)| adv.objective < *v) {
            best = Some((master.tree.clone(), adv.objective));
        }
        if !master.complete {
            complete = false;
            break;
        }
        master_objective = master.objective;
        if adv.objective <= master.objective + OBJECTIVE_TOLERANCE {
            converged = true;
            best = Some((master.tree, adv.objective));
            break;
        }
        if !scenarios.push(adv.perturbation) {
            return Err(Error::ConvergenceStall { iterations });
        }
        if Instant::now() >= deadline {
            complete = false;
            break;
        }
    }
    let (tree, adversary_objective) = best.expect("at least one iteration runs");
    Ok(GenerationRun {
        tree,
        master_objective,
        adversary_objective,
        iterations,
        converged,
        complete,
        master_history,
        adversary_history,
    })
}

/// Exact robust tree of `depth` by scenario generation.
pub fn scenario_generation(
    dataset: &Dataset,
    budget: UncertaintyBudget,
    space: &dyn FeasibleSpace,
    depth: usize,
    limits: &SolveLimits,
) -> Result<SolveReport> {
    let start = Instant::now();
    check_inputs(dataset, space, depth, limits.max_depth)?;
    let pool = CandidatePool::enumerate(space, dataset, limits.enumeration_cap)?;
    let catalog = ThresholdCatalog::build(dataset);
    let run = generate(dataset, budget, depth, &catalog, &pool, None, limits, start + limits.time_limit)?;
    Ok(SolveReport {
        method: "SG".into(),
        budget,
        depth,
        tree: run.tree,
        master_objective: run.master_objective,
        adversary_objective: run.adversary_objective,
        iterations: run.iterations,
        wall_time_secs: start.elapsed().as_secs_f64(),
        converged: run.converged,
        optimal: run.converged && run.complete,
        master_history: run.master_history,
        adversary_history: run.adversary_history,
    })
}

/// Nominal optimum: the master problem with only the zero scenario.
pub fn solve_nominal(dataset: &Dataset, space: &dyn FeasibleSpace, depth: usize, limits: &SolveLimits) -> Result<SolveReport> {
    let start = Instant::now();
    check_inputs(dataset, space, depth, limits.max_depth)?;
    let pool = CandidatePool::enumerate(space, dataset, limits.enumeration_cap)?;
    let catalog = ThresholdCatalog::build(dataset);
    let scenarios = ScenarioSet::for_dataset(dataset);
    let master = master_with_pool(dataset, &scenarios, &pool, depth, &catalog, None, Some(start + limits.time_limit));
    Ok(SolveReport {
        method: "nominal".into(),
        budget: UncertaintyBudget::none(BudgetKind::Global),
        depth,
        tree: master.tree,
        master_objective: master.objective,
        adversary_objective: master.objective,
        iterations: 1,
        wall_time_secs: start.elapsed().as_secs_f64(),
        converged: master.complete,
        optimal: master.complete,
        master_history: vec![master.objective],
        adversary_history: vec![master.objective],
    })
}

/// Result of threshold refinement.
#[derive(Debug, Clone, PartialEq)]
pub struct PostProcessOutcome {
    pub tree: DecisionTree,
    pub objective: f64,
    pub original_objective: f64,
    /// Candidate threshold combinations evaluated, `|Π|^{|Q|}`.
    pub evaluations: usize,
}

/// Observed values of `item` enclosing `threshold` as `a <= θ < b`.
fn enclosing_interval(dataset: &Dataset, item: usize, threshold: f64) -> Option<(f64, f64)> {
    let values = dataset.distinct_values(item);
    let a = values.iter().copied().filter(|&v| v <= threshold).fold(f64::NEG_INFINITY, f64::max);
    let b = values.iter().copied().filter(|&v| v > threshold).fold(f64::INFINITY, f64::min);
    (a.is_finite() && b.is_finite()).then_some((a, b))
}

/// Moves every threshold within its enclosing observed-value interval to
/// the weighted points `π a + (1 − π) b`, `π ∈ Π`, keeping the combination
/// with the smallest worst case. The input tree wins ties. Thresholds
/// outside the observed range are left unchanged.
pub fn post_process(
    tree: &DecisionTree,
    dataset: &Dataset,
    budget: UncertaintyBudget,
    pi: &[f64],
    config: &AdversaryConfig,
) -> Result<PostProcessOutcome> {
    if pi.is_empty() {
        return Err(Error::InvalidConfig("weight set Π is empty".into()));
    }
    let original_objective = adversary::solve(tree, dataset, budget, config).objective;
    let options: Vec<Vec<f64>> = tree
        .splits()
        .iter()
        .map(|s| match enclosing_interval(dataset, s.item, s.threshold) {
            Some((a, b)) => pi.iter().map(|p| p * a + (1.0 - p) * b).collect(),
            None => vec![s.threshold; pi.len()],
        })
        .collect();
    let n_inner = inner_count(tree.depth());
    let mut digits = vec![0usize; n_inner];
    let mut best = (tree.clone(), original_objective);
    let mut evaluations = 0;
    loop {
        let thresholds: Vec<f64> = (0..n_inner).map(|q| options[q][digits[q]]).collect();
        let candidate = tree.with_thresholds(&thresholds);
        let value = adversary::solve(&candidate, dataset, budget, config).objective;
        evaluations += 1;
        if value < best.1 - 1e-9 {
            best = (candidate, value);
        }
        let mut pos = n_inner;
        loop {
            if pos == 0 {
                return Ok(PostProcessOutcome { tree: best.0, objective: best.1, original_objective, evaluations });
            }
            pos -= 1;
            digits[pos] += 1;
            if digits[pos] < pi.len() {
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

    #[test]
    fn nominal_master_on_motivating_data() {
        let ds = fixtures::motivating_dataset();
        let space = fixtures::motivating_space();
        let catalog = ThresholdCatalog::build(&ds);
        let scenarios = ScenarioSet::for_dataset(&ds);
        for depth in 1..=2 {
            let sol = solve_master(&ds, &scenarios, &space, depth, &catalog).unwrap();
            assert_eq!(sol.objective, 36.0);
            assert!(sol.complete);
        }
        let sol = solve_master(&ds, &scenarios, &space, 0, &catalog).unwrap();
        assert_eq!(sol.objective, 57.0);
        assert_eq!(sol.tree.leaves()[0], fixtures::path_a());
    }

    #[test]
    fn zero_budget_converges_in_one_round() {
        let ds = fixtures::motivating_dataset();
        let space = fixtures::motivating_space();
        let report = scenario_generation(&ds, UncertaintyBudget::global(0.0), &space, 2, &SolveLimits::default()).unwrap();
        assert!(report.converged && report.optimal);
        assert_eq!(report.iterations, 1);
        assert_eq!(report.adversary_objective, 36.0);
    }

    #[test]
    fn global_budget_five_on_motivating_data() {
        let ds = fixtures::motivating_dataset();
        let space = fixtures::motivating_space();
        let report = scenario_generation(&ds, UncertaintyBudget::global(5.0), &space, 2, &SolveLimits::default()).unwrap();
        assert!(report.converged);
        assert!(report.adversary_objective <= 43.0);
        assert!((report.adversary_objective - report.master_objective).abs() <= OBJECTIVE_TOLERANCE);
        for w in report.master_history.windows(2) {
            assert!(w[1] >= w[0] - OBJECTIVE_TOLERANCE);
        }
    }

    #[test]
    fn scenario_set_rejects_duplicates() {
        let mut set = ScenarioSet::new(2, 2);
        assert!(!set.push(vec![vec![0.0, 0.0], vec![0.0, 1e-12]]));
        assert!(set.push(vec![vec![0.0, 1.0], vec![0.0, 0.0]]));
        assert_eq!(set.len(), 2);
    }

    #[test]
    fn post_process_counts_and_never_worsens() {
        let ds = fixtures::motivating_dataset();
        let budget = UncertaintyBudget::global(5.0);
        let out = post_process(&fixtures::nominal_tree(), &ds, budget, &DEFAULT_PI, &AdversaryConfig::default()).unwrap();
        assert_eq!(out.evaluations, 9);
        assert!(out.objective <= out.original_objective);
        let out = post_process(&fixtures::robust_tree(), &ds, budget, &DEFAULT_PI, &AdversaryConfig::default()).unwrap();
        assert_eq!(out.evaluations, 729);
        assert!(out.objective <= out.original_objective);
    }
}
