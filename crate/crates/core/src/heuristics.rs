//! Heuristics: the aggregate solution H1, random structures with optimized
//! leaves (H_tree), sampled leaves with optimized structure (H_sol), and the
//! alternation of the two (H_alt).

use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::adversary::{self, AdversaryConfig, EffortTable};
use crate::error::{Error, Result};
use crate::exact::assign::{solve_minmax, solve_sum_of_max, LeafChoices};
use crate::exact::{self, CandidatePool, ScenarioSet, SolveLimits, SolveReport, OBJECTIVE_TOLERANCE};
use crate::model::{inner_count, BudgetKind, Dataset, DecisionTree, Split, ThresholdCatalog, TreeStructure, UncertaintyBudget};
use crate::space::FeasibleSpace;

/// Where leaf solutions are drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolPolicy {
    /// Per-sample optima plus the aggregate optimum.
    SampleOptima,
    /// Every feasible solution.
    FullEnumeration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeuristicConfig {
    pub time_limit: Duration,
    pub seed: u64,
    pub depth: usize,
    pub pool: PoolPolicy,
    /// Stop after this many restarts even if time remains.
    pub max_restarts: Option<usize>,
    /// Cap on alternations within one H_alt restart.
    pub max_alternations: usize,
    pub limits: SolveLimits,
}

impl Default for HeuristicConfig {
    fn default() -> Self {
        HeuristicConfig {
            time_limit: Duration::from_secs(60),
            seed: 0,
            depth: 2,
            pool: PoolPolicy::FullEnumeration,
            max_restarts: None,
            max_alternations: 100,
            limits: SolveLimits::default(),
        }
    }
}

impl HeuristicConfig {
    fn validate(&self) -> Result<()> {
        if self.time_limit.is_zero() {
            return Err(Error::InvalidConfig("time limit must be positive".into()));
        }
        if self.depth > self.limits.max_depth {
            return Err(Error::InvalidConfig(format!("depth {} exceeds the maximum {}", self.depth, self.limits.max_depth)));
        }
        Ok(())
    }

    fn build_pool(&self, space: &dyn FeasibleSpace, dataset: &Dataset) -> Result<CandidatePool> {
        match self.pool {
            PoolPolicy::FullEnumeration => CandidatePool::enumerate(space, dataset, self.limits.enumeration_cap),
            PoolPolicy::SampleOptima => Ok(CandidatePool::sample_optima(space, dataset)),
        }
    }

    fn more_restarts(&self, done: usize, deadline: Instant) -> bool {
        self.max_restarts.is_none_or(|m| done < m) && Instant::now() < deadline
    }
}

/// Depth-0 tree holding the optimum for the summed costs.
pub fn h1(dataset: &Dataset, space: &dyn FeasibleSpace) -> DecisionTree {
    DecisionTree::single_leaf(space.min_linear(&dataset.aggregate()))
}

pub fn h1_report(dataset: &Dataset, space: &dyn FeasibleSpace, budget: UncertaintyBudget) -> SolveReport {
    let start = Instant::now();
    let tree = h1(dataset, space);
    let objective = adversary::solve(&tree, dataset, budget, &AdversaryConfig::default()).objective;
    heuristic_report("H1", budget, 0, tree, objective, 1, start, vec![objective])
}

#[allow(clippy::too_many_arguments)]
fn heuristic_report(
    method: &str,
    budget: UncertaintyBudget,
    depth: usize,
    tree: DecisionTree,
    objective: f64,
    iterations: usize,
    start: Instant,
    history: Vec<f64>,
) -> SolveReport {
    SolveReport {
        method: method.into(),
        budget,
        depth,
        tree,
        master_objective: objective,
        adversary_objective: objective,
        iterations,
        wall_time_secs: start.elapsed().as_secs_f64(),
        converged: true,
        optimal: false,
        master_history: history.clone(),
        adversary_history: history,
    }
}

/// Random split per inner node: item uniform over items with thresholds,
/// then threshold uniform over that item's catalog.
pub fn sample_random_structure<R: Rng + ?Sized>(catalog: &ThresholdCatalog, depth: usize, rng: &mut R) -> Result<TreeStructure> {
    let items = catalog.items_with_splits();
    if items.is_empty() && depth > 0 {
        return Err(Error::NoSplitAvailable);
    }
    let splits = (0..inner_count(depth))
        .map(|_| {
            let item = *items.choose(rng).expect("nonempty");
            let threshold = *catalog.thresholds(item).choose(rng).expect("nonempty");
            Split { item, threshold }
        })
        .collect();
    TreeStructure::new(depth, splits)
}

/// Leaf solutions for a fixed structure with their worst-case objective.
#[derive(Debug, Clone, PartialEq)]
pub struct LeafOptimization {
    pub tree: DecisionTree,
    /// Pool index held by each leaf.
    pub choice: Vec<usize>,
    pub objective: f64,
}

fn pool_values(dataset: &Dataset, pool: &CandidatePool) -> Vec<Vec<f64>> {
    dataset.samples().iter().map(|c| pool.solutions.iter().map(|x| x.cost(c)).collect()).collect()
}

fn tree_from_choice(structure: &TreeStructure, pool: &CandidatePool, choice: &[usize]) -> DecisionTree {
    let leaves = choice.iter().map(|&p| pool.solutions[p].clone()).collect();
    DecisionTree::new(structure.clone(), leaves).expect("one solution per leaf")
}

/// Minimizes `Σ_j max_{k ∈ K̄(j)} c_j^T x_k` with `K̄(j)` the leaves sample
/// `j` reaches within the per-sample budget.
pub fn optimize_leaves_local(
    structure: &TreeStructure,
    dataset: &Dataset,
    gamma: f64,
    pool: &CandidatePool,
    config: &AdversaryConfig,
) -> LeafOptimization {
    let efforts = EffortTable::new(structure, dataset, config.epsilon);
    let reach: Vec<Vec<usize>> = (0..dataset.len()).map(|j| efforts.reachable(j, gamma)).collect();
    let values = pool_values(dataset, pool);
    let choices = LeafChoices::free(structure.n_leaves(), pool.len(), pool.aggregate_index);
    let (choice, objective) = solve_sum_of_max(&values, &reach, &choices);
    LeafOptimization { tree: tree_from_choice(structure, pool, &choice), choice, objective }
}

/// Scenario generation over leaf solutions only, the structure held fixed.
pub fn optimize_leaves_global(
    structure: &TreeStructure,
    dataset: &Dataset,
    gamma: f64,
    pool: &CandidatePool,
    limits: &SolveLimits,
    deadline: Option<Instant>,
) -> LeafOptimization {
    let values = pool_values(dataset, pool);
    let choices = LeafChoices::free(structure.n_leaves(), pool.len(), pool.aggregate_index);
    let mut scenarios = ScenarioSet::for_dataset(dataset);
    let mut best: Option<LeafOptimization> = None;
    for _ in 0..limits.max_iterations {
        let routes: Vec<Vec<usize>> = scenarios
            .scenarios()
            .iter()
            .map(|xi| {
                dataset
                    .samples()
                    .iter()
                    .zip(xi)
                    .map(|(c, d)| {
                        let o: Vec<f64> = c.iter().zip(d).map(|(a, b)| a + b).collect();
                        structure.traverse(&o)
                    })
                    .collect()
            })
            .collect();
        let (choice, master) = solve_minmax(&values, &routes, &choices, f64::INFINITY).expect("no cutoff");
        let tree = tree_from_choice(structure, pool, &choice);
        let adv = adversary::solve_global(&tree, dataset, gamma, &limits.adversary);
        let converged = adv.objective <= master + OBJECTIVE_TOLERANCE;
        if converged || best.as_ref().is_none_or(|b| adv.objective < b.objective) {
            best = Some(LeafOptimization { tree, choice, objective: adv.objective });
        }
        if converged || !scenarios.push(adv.perturbation) || deadline.is_some_and(|d| Instant::now() >= d) {
            break;
        }
    }
    best.expect("at least one iteration")
}

pub fn optimize_leaves(
    structure: &TreeStructure,
    dataset: &Dataset,
    budget: UncertaintyBudget,
    pool: &CandidatePool,
    limits: &SolveLimits,
    deadline: Option<Instant>,
) -> LeafOptimization {
    match budget.kind {
        BudgetKind::Local => optimize_leaves_local(structure, dataset, budget.gamma, pool, &limits.adversary),
        BudgetKind::Global => optimize_leaves_global(structure, dataset, budget.gamma, pool, limits, deadline),
    }
}

struct Incumbent {
    tree: DecisionTree,
    objective: f64,
    history: Vec<f64>,
}

impl Incumbent {
    fn offer(&mut self, tree: DecisionTree, objective: f64, history: Vec<f64>) {
        if objective < self.objective {
            *self = Incumbent { tree, objective, history };
        }
    }
}

fn h1_incumbent(dataset: &Dataset, space: &dyn FeasibleSpace, budget: UncertaintyBudget, limits: &SolveLimits) -> Incumbent {
    let tree = h1(dataset, space);
    let objective = adversary::solve(&tree, dataset, budget, &limits.adversary).objective;
    Incumbent { tree, objective, history: vec![objective] }
}

/// Random structures with optimized leaves until the time or restart limit.
/// Starts from the H1 tree, so the result never exceeds H1's objective.
pub fn h_tree(dataset: &Dataset, space: &dyn FeasibleSpace, budget: UncertaintyBudget, config: &HeuristicConfig) -> Result<SolveReport> {
    let start = Instant::now();
    config.validate()?;
    let deadline = start + config.time_limit;
    let pool = config.build_pool(space, dataset)?;
    let catalog = ThresholdCatalog::build(dataset);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut best = h1_incumbent(dataset, space, budget, &config.limits);
    let mut restarts = 0;
    if config.depth > 0 && !catalog.is_empty() {
        while config.more_restarts(restarts, deadline) {
            restarts += 1;
            let structure = sample_random_structure(&catalog, config.depth, &mut rng)?;
            let opt = optimize_leaves(&structure, dataset, budget, &pool, &config.limits, Some(deadline));
            best.offer(opt.tree, opt.objective, vec![opt.objective]);
        }
    }
    Ok(heuristic_report("Htree", budget, config.depth, best.tree, best.objective, restarts, start, best.history))
}

/// Per-sample optima, deduplicated in sample order.
fn sample_optima(space: &dyn FeasibleSpace, dataset: &Dataset) -> Vec<crate::model::Solution> {
    let mut out = Vec::new();
    for c in dataset.samples() {
        let x = space.min_linear(c);
        if !out.contains(&x) {
            out.push(x);
        }
    }
    out
}

/// Best structure for fixed leaves by scenario generation. A stalled run
/// yields `None`.
#[allow(clippy::too_many_arguments)]
fn structure_for_leaves(
    dataset: &Dataset,
    budget: UncertaintyBudget,
    depth: usize,
    catalog: &ThresholdCatalog,
    pool: &CandidatePool,
    fixed: &[usize],
    limits: &SolveLimits,
    deadline: Instant,
) -> Result<Option<(DecisionTree, f64)>> {
    match exact::generate(dataset, budget, depth, catalog, pool, Some(fixed), limits, deadline) {
        Ok(run) => Ok(Some((run.tree, run.adversary_objective))),
        Err(Error::ConvergenceStall { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Leaves drawn with replacement from the per-sample optima, structure
/// optimized for them.
pub fn h_sol(dataset: &Dataset, space: &dyn FeasibleSpace, budget: UncertaintyBudget, config: &HeuristicConfig) -> Result<SolveReport> {
    let start = Instant::now();
    config.validate()?;
    let deadline = start + config.time_limit;
    let optima = sample_optima(space, dataset);
    let draw_count = optima.len();
    let pool = CandidatePool::from_solutions(optima, space, dataset);
    let catalog = ThresholdCatalog::build(dataset);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n_leaves = 1usize << config.depth;
    let mut best: Option<Incumbent> = None;
    let mut restarts = 0;
    while restarts == 0 || config.more_restarts(restarts, deadline) {
        restarts += 1;
        let fixed: Vec<usize> = (0..n_leaves).map(|_| rng.gen_range(0..draw_count)).collect();
        let Some((tree, objective)) =
            structure_for_leaves(dataset, budget, config.depth, &catalog, &pool, &fixed, &config.limits, deadline)?
        else {
            continue;
        };
        match best.as_mut() {
            Some(b) => b.offer(tree, objective, vec![objective]),
            None => best = Some(Incumbent { tree, objective, history: vec![objective] }),
        }
    }
    let best = match best {
        Some(b) => b,
        None => h1_incumbent(dataset, space, budget, &config.limits),
    };
    Ok(heuristic_report("Hsol", budget, config.depth, best.tree, best.objective, restarts, start, best.history))
}

/// Alternates leaf optimization for a fixed structure and structure
/// optimization for fixed leaves until both give the same objective.
pub fn h_alt(dataset: &Dataset, space: &dyn FeasibleSpace, budget: UncertaintyBudget, config: &HeuristicConfig) -> Result<SolveReport> {
    let start = Instant::now();
    config.validate()?;
    let deadline = start + config.time_limit;
    let pool = config.build_pool(space, dataset)?;
    let catalog = ThresholdCatalog::build(dataset);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut best = h1_incumbent(dataset, space, budget, &config.limits);
    let mut restarts = 0;
    if config.depth > 0 && !catalog.is_empty() {
        while config.more_restarts(restarts, deadline) {
            restarts += 1;
            let mut structure = sample_random_structure(&catalog, config.depth, &mut rng)?;
            let mut history = Vec::new();
            let mut restart_best: Option<(DecisionTree, f64)> = None;
            for _ in 0..config.max_alternations {
                let leaves = optimize_leaves(&structure, dataset, budget, &pool, &config.limits, Some(deadline));
                history.push(leaves.objective);
                restart_best = Some((leaves.tree.clone(), leaves.objective));
                let Some((tree, objective)) = structure_for_leaves(
                    dataset,
                    budget,
                    config.depth,
                    &catalog,
                    &pool,
                    &leaves.choice,
                    &config.limits,
                    deadline,
                )?
                else {
                    break;
                };
                history.push(objective);
                let settled = (leaves.objective - objective).abs() <= OBJECTIVE_TOLERANCE;
                if objective < leaves.objective {
                    restart_best = Some((tree.clone(), objective));
                }
                structure = tree.structure().clone();
                if settled || Instant::now() >= deadline {
                    break;
                }
            }
            if let Some((tree, objective)) = restart_best {
                best.offer(tree, objective, history);
            }
        }
    }
    Ok(heuristic_report("Halt", budget, config.depth, best.tree, best.objective, restarts, start, best.history))
}
