//! Exact solvers checked against exhaustive enumeration of trees.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use surrogate_core::adversary::{self, AdversaryConfig};
use surrogate_core::exact::{self, ScenarioSet, SolveLimits};
use surrogate_core::instance::{generate_instance, InstanceSpec};
use surrogate_core::{
    fixtures, BudgetKind, Dataset, DecisionTree, FeasibleSpace, GridGraph, ThresholdCatalog, TreeStructure,
    UncertaintyBudget,
};

fn master_value(tree: &DecisionTree, ds: &Dataset, scenarios: &ScenarioSet) -> f64 {
    scenarios
        .scenarios()
        .iter()
        .map(|xi| {
            ds.samples()
                .iter()
                .zip(xi)
                .map(|(c, d)| {
                    let moved: Vec<f64> = c.iter().zip(d).map(|(a, b)| a + b).collect();
                    tree.decide(&moved).cost(c)
                })
                .sum::<f64>()
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

#[test]
fn robust_depth_two_tree_is_certified_by_enumeration() {
    let ds = fixtures::motivating_dataset();
    let space = fixtures::motivating_space();
    let budget = UncertaintyBudget::new(BudgetKind::Global, 5.0).unwrap();
    let report = exact::scenario_generation(&ds, budget, &space, 2, &SolveLimits::default()).unwrap();
    assert!(report.optimal);

    let cfg = AdversaryConfig::default();
    let pool = space.enumerate_unchecked();
    let splits = ThresholdCatalog::build(&ds).candidates();
    let mut best = f64::INFINITY;
    for a in &splits {
        for b in &splits {
            for c in &splits {
                let structure = TreeStructure::new(2, vec![*a, *b, *c]).unwrap();
                for l0 in &pool {
                    for l1 in &pool {
                        for l2 in &pool {
                            for l3 in &pool {
                                let leaves = vec![l0.clone(), l1.clone(), l2.clone(), l3.clone()];
                                let tree = DecisionTree::new(structure.clone(), leaves).unwrap();
                                best = best.min(adversary::solve_global(&tree, &ds, 5.0, &cfg).objective);
                            }
                        }
                    }
                }
            }
        }
    }
    assert_eq!(best, 43.0);
    assert_eq!(report.adversary_objective, best);
}

#[test]
fn two_scenario_master_matches_enumeration() {
    let space = GridGraph::new(3).unwrap();
    let pool = space.enumerate_unchecked();
    for seed in 0..5 {
        let inst = generate_instance(&InstanceSpec::new(3, 4, 0, 40 + seed)).unwrap();
        let ds = inst.train_dataset().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut scenarios = ScenarioSet::for_dataset(&ds);
        let xi = (0..ds.len()).map(|_| (0..ds.n_items()).map(|_| rng.gen_range(-1.0..3.0)).collect()).collect();
        assert!(scenarios.push(xi));

        let catalog = ThresholdCatalog::build(&ds);
        let master = exact::solve_master(&ds, &scenarios, &space, 1, &catalog).unwrap();
        assert!(master.complete);

        let mut best = f64::INFINITY;
        for split in catalog.candidates() {
            let structure = TreeStructure::new(1, vec![split]).unwrap();
            for a in &pool {
                for b in &pool {
                    let tree = DecisionTree::new(structure.clone(), vec![a.clone(), b.clone()]).unwrap();
                    best = best.min(master_value(&tree, &ds, &scenarios));
                }
            }
        }
        assert!((master.objective - best).abs() <= 1e-9, "seed {seed}: master {} vs {best}", master.objective);
        assert!((master_value(&master.tree, &ds, &scenarios) - master.objective).abs() <= 1e-9);
    }
}
