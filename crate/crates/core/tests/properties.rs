use proptest::prelude::*;

use surrogate_core::adversary::{self, perturbation_cost, reconstruct_perturbation, AdversaryConfig};
use surrogate_core::{Dataset, DecisionTree, FeasibleSpace, GridGraph, SelectionSpace, Solution, Split, TreeStructure};

const EPS: f64 = 0.001;
const TOL: f64 = 1e-9;

fn first_optimum(space: &dyn FeasibleSpace, c: &[f64]) -> Solution {
    let mut best: Option<(f64, Solution)> = None;
    for x in space.enumerate_unchecked() {
        let v = x.cost(c);
        if best.as_ref().is_none_or(|(b, _)| v < *b) {
            best = Some((v, x));
        }
    }
    best.unwrap().1
}

fn structure_strategy(n_items: usize) -> impl Strategy<Value = TreeStructure> {
    (0usize..=2).prop_flat_map(move |depth| {
        prop::collection::vec((0..n_items, 0u32..20), (1usize << depth) - 1).prop_map(move |raw| {
            let splits = raw.into_iter().map(|(item, t)| Split { item, threshold: t as f64 * 0.5 }).collect();
            TreeStructure::new(depth, splits).unwrap()
        })
    })
}

fn tree_strategy() -> impl Strategy<Value = (DecisionTree, Dataset)> {
    let pool = GridGraph::new(3).unwrap().enumerate_unchecked();
    let n_items = pool[0].len();
    (
        structure_strategy(n_items),
        prop::collection::vec(prop::collection::vec(0u32..20, n_items), 1..5),
        prop::collection::vec(0..pool.len(), 4),
    )
        .prop_map(move |(structure, rows, picks)| {
            let samples = rows.into_iter().map(|r| r.into_iter().map(|v| v as f64 * 0.5).collect()).collect();
            let leaves = picks[..structure.n_leaves()].iter().map(|&i| pool[i].clone()).collect();
            (DecisionTree::new(structure, leaves).unwrap(), Dataset::new(samples).unwrap())
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn grid_min_linear_matches_enumeration(c in prop::collection::vec(-5i32..10, 12)) {
        let space = GridGraph::new(3).unwrap();
        let c: Vec<f64> = c.into_iter().map(f64::from).collect();
        let x = space.min_linear(&c);
        prop_assert!(space.is_feasible(&x));
        prop_assert_eq!(x, first_optimum(&space, &c));
    }

    #[test]
    fn selection_min_linear_matches_enumeration(c in prop::collection::vec(-5i32..10, 6), p in 0usize..=6) {
        let space = SelectionSpace::new(6, p).unwrap();
        let c: Vec<f64> = c.into_iter().map(f64::from).collect();
        prop_assert_eq!(space.min_linear(&c), first_optimum(&space, &c));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn reconstruction_reaches_leaf_at_stated_cost(
        structure in structure_strategy(4),
        c in prop::collection::vec(0u32..20, 4),
    ) {
        let c: Vec<f64> = c.into_iter().map(|v| v as f64 * 0.5).collect();
        let costs = perturbation_cost(&structure, &c, EPS);
        prop_assert_eq!(costs[structure.traverse(&c)], 0.0);
        for (leaf, &cost) in costs.iter().enumerate() {
            match reconstruct_perturbation(&structure, &c, leaf, EPS) {
                Ok(xi) => {
                    prop_assert!(cost.is_finite());
                    let moved: Vec<f64> = c.iter().zip(&xi).map(|(a, b)| a + b).collect();
                    prop_assert_eq!(structure.traverse(&moved), leaf);
                    let norm: f64 = xi.iter().map(|v| v.abs()).sum();
                    prop_assert!((norm - cost).abs() <= TOL, "norm {} cost {}", norm, cost);
                }
                Err(_) => prop_assert!(cost.is_infinite()),
            }
        }
    }

    #[test]
    fn worst_case_is_monotone_in_budget((tree, ds) in tree_strategy(), g in 0.0f64..10.0, step in 0.0f64..5.0) {
        let cfg = AdversaryConfig::default();
        let lo_g = adversary::solve_global(&tree, &ds, g, &cfg).objective;
        let hi_g = adversary::solve_global(&tree, &ds, g + step, &cfg).objective;
        prop_assert!(lo_g <= hi_g);
        let lo_l = adversary::solve_local(&tree, &ds, g, &cfg).objective;
        let hi_l = adversary::solve_local(&tree, &ds, g + step, &cfg).objective;
        prop_assert!(lo_l <= hi_l);
    }

    #[test]
    fn local_and_global_sandwich((tree, ds) in tree_strategy(), g in 0.0f64..10.0) {
        let cfg = AdversaryConfig::default();
        let nominal = surrogate_core::nominal_objective(&tree, &ds);
        let glob = adversary::solve_global(&tree, &ds, g, &cfg).objective;
        let loc = adversary::solve_local(&tree, &ds, g, &cfg).objective;
        let glob_n = adversary::solve_global(&tree, &ds, g * ds.len() as f64, &cfg).objective;
        prop_assert!(nominal <= glob);
        prop_assert!(glob <= loc);
        prop_assert!(loc <= glob_n);
    }
}
