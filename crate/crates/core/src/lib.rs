//! Robust interpretable decision-tree surrogates for combinatorial optimization.
//!
//! A surrogate maps an observed cost vector to a feasible solution through a
//! shallow univariate decision tree. Trees are trained on historical cost
//! samples and made robust against budgeted worst-case perturbations of the
//! observations they route on.

pub mod adversary;
pub mod error;
pub mod exact;
pub mod experiments;
pub mod fixtures;
pub mod heuristics;
pub mod instance;
pub mod model;
pub mod space;

pub use adversary::{AdversaryConfig, AdversaryResult, EffortTable};
pub use error::{Error, Result};
pub use exact::{CandidatePool, MasterSolution, ScenarioSet, SolveLimits, SolveReport};
pub use experiments::{EvalRecord, Method};
pub use heuristics::{HeuristicConfig, PoolPolicy};
pub use instance::{Coupling, Instance, InstanceSpec};
pub use model::{
    evaluate_robust, nominal_objective, BudgetKind, Dataset, DecisionTree, Solution, Split, ThresholdCatalog,
    TreeStructure, UncertaintyBudget,
};
pub use space::{DagPathSpace, FeasibleSpace, GridGraph, SelectionSpace, Space, SpaceSpec};
