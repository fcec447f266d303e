//! Exact leaf solution assignment once the routing of samples to leaves is known.
//!
//! Both variants choose one candidate per leaf out of a pool, given a table
//! `values[j][p] = c_j^T x_p`:
//!
//! * min-max over scenarios, where scenario `s` routes sample `j` to leaf
//!   `routes[s][j]` (master problems with a fixed structure);
//! * sum over samples of the worst reachable leaf (local budgets).

/// Leaf-wise candidate restriction shared by both problems.
#[derive(Debug, Clone)]
pub struct LeafChoices {
    /// Allowed pool indices per leaf, in preference order.
    pub allowed: Vec<Vec<usize>>,
    /// Pool index used for leaves no sample can reach.
    pub fallback: Vec<usize>,
}

impl LeafChoices {
    /// Every leaf may hold any of the `pool_size` candidates.
    pub fn free(n_leaves: usize, pool_size: usize, fallback: usize) -> Self {
        LeafChoices { allowed: vec![(0..pool_size).collect(); n_leaves], fallback: vec![fallback; n_leaves] }
    }

    /// Leaf `k` must hold pool entry `chosen[k]`.
    pub fn fixed(chosen: &[usize]) -> Self {
        LeafChoices { allowed: chosen.iter().map(|&p| vec![p]).collect(), fallback: chosen.to_vec() }
    }

    pub fn n_leaves(&self) -> usize {
        self.allowed.len()
    }
}

/// `max_s Σ_j values[j][choice[routes[s][j]]]`, summed in sample order.
pub fn minmax_value(values: &[Vec<f64>], routes: &[Vec<usize>], choice: &[usize]) -> f64 {
    routes
        .iter()
        .map(|route| route.iter().enumerate().map(|(j, &k)| values[j][choice[k]]).sum::<f64>())
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Minimizes `max_s Σ_j values[j][p_{routes[s][j]}]` over leaf choices.
/// Returns the best choice strictly below `cutoff`, if any.
pub fn solve_minmax(
    values: &[Vec<f64>],
    routes: &[Vec<usize>],
    choices: &LeafChoices,
    cutoff: f64,
) -> Option<(Vec<usize>, f64)> {
    let n_leaves = choices.n_leaves();
    let n_scen = routes.len();
    // agg[s][k][a]: total value of the samples routed to k in s if k holds allowed[k][a]
    let mut agg: Vec<Vec<Vec<f64>>> =
        (0..n_scen).map(|_| choices.allowed.iter().map(|a| vec![0.0; a.len()]).collect()).collect();
    let mut routed = vec![false; n_leaves];
    for (s, route) in routes.iter().enumerate() {
        for (j, &k) in route.iter().enumerate() {
            routed[k] = true;
            for (a, &p) in choices.allowed[k].iter().enumerate() {
                agg[s][k][a] += values[j][p];
            }
        }
    }
    let leaf_min = |s: usize, k: usize| agg[s][k].iter().copied().fold(f64::INFINITY, f64::min);

    let mut order: Vec<usize> = (0..n_leaves).filter(|&k| routed[k]).collect();
    let weight = |k: usize| (0..n_scen).map(|s| leaf_min(s, k)).sum::<f64>();
    order.sort_by(|&a, &b| weight(b).total_cmp(&weight(a)).then(a.cmp(&b)));

    // suffix[pos][s]: Σ of per-scenario minima over order[pos..]
    let mut suffix = vec![vec![0.0; n_scen]; order.len() + 1];
    for pos in (0..order.len()).rev() {
        let next = suffix[pos + 1].clone();
        for (s, slot) in suffix[pos].iter_mut().enumerate() {
            *slot = next[s] + leaf_min(s, order[pos]);
        }
    }
    let cand_order: Vec<Vec<usize>> = (0..n_leaves)
        .map(|k| {
            let mut idx: Vec<usize> = (0..choices.allowed[k].len()).collect();
            let score = |a: usize| (0..n_scen).map(|s| agg[s][k][a]).sum::<f64>();
            idx.sort_by(|&x, &y| score(x).total_cmp(&score(y)).then(x.cmp(&y)));
            idx
        })
        .collect();

    struct Search<'a> {
        agg: &'a [Vec<Vec<f64>>],
        order: &'a [usize],
        suffix: &'a [Vec<f64>],
        cand_order: &'a [Vec<usize>],
        partial: Vec<f64>,
        current: Vec<usize>,
        best: Option<Vec<usize>>,
        best_value: f64,
    }

    impl Search<'_> {
        fn dfs(&mut self, pos: usize) {
            let bound = self
                .partial
                .iter()
                .zip(&self.suffix[pos])
                .map(|(p, r)| p + r)
                .fold(f64::NEG_INFINITY, f64::max);
            if bound >= self.best_value {
                return;
            }
            if pos == self.order.len() {
                self.best_value = bound;
                self.best = Some(self.current.clone());
                return;
            }
            let k = self.order[pos];
            for i in 0..self.cand_order[k].len() {
                let a = self.cand_order[k][i];
                for s in 0..self.partial.len() {
                    self.partial[s] += self.agg[s][k][a];
                }
                self.current[k] = a;
                self.dfs(pos + 1);
                for s in 0..self.partial.len() {
                    self.partial[s] -= self.agg[s][k][a];
                }
            }
        }
    }

    let mut search = Search {
        agg: &agg,
        order: &order,
        suffix: &suffix,
        cand_order: &cand_order,
        partial: vec![0.0; n_scen],
        current: vec![0; n_leaves],
        best: None,
        best_value: cutoff,
    };
    search.dfs(0);
    let best = search.best?;
    let choice: Vec<usize> = (0..n_leaves)
        .map(|k| if routed[k] { choices.allowed[k][best[k]] } else { choices.fallback[k] })
        .collect();
    let value = minmax_value(values, routes, &choice);
    Some((choice, value))
}

/// `Σ_j max_{k ∈ reach[j]} values[j][choice[k]]`, summed in sample order.
pub fn sum_of_max_value(values: &[Vec<f64>], reach: &[Vec<usize>], choice: &[usize]) -> f64 {
    reach
        .iter()
        .enumerate()
        .map(|(j, ks)| ks.iter().map(|&k| values[j][choice[k]]).fold(f64::NEG_INFINITY, f64::max))
        .sum()
}

/// Minimizes `Σ_j max_{k ∈ reach[j]} values[j][p_k]` over leaf choices.
/// Every `reach[j]` must be nonempty.
pub fn solve_sum_of_max(values: &[Vec<f64>], reach: &[Vec<usize>], choices: &LeafChoices) -> (Vec<usize>, f64) {
    let n_leaves = choices.n_leaves();
    let n = values.len();
    // min_val[j][k]: cheapest candidate of leaf k for sample j
    let min_val: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            (0..n_leaves)
                .map(|k| choices.allowed[k].iter().map(|&p| values[j][p]).fold(f64::INFINITY, f64::min))
                .collect()
        })
        .collect();
    let mut reached_by: Vec<Vec<usize>> = vec![Vec::new(); n_leaves];
    for (j, ks) in reach.iter().enumerate() {
        assert!(!ks.is_empty(), "sample {j} reaches no leaf");
        for &k in ks {
            reached_by[k].push(j);
        }
    }
    let mut order: Vec<usize> = (0..n_leaves).filter(|&k| !reached_by[k].is_empty()).collect();
    order.sort_by(|&a, &b| reached_by[b].len().cmp(&reached_by[a].len()).then(a.cmp(&b)));
    let cand_order: Vec<Vec<usize>> = (0..n_leaves)
        .map(|k| {
            let mut idx: Vec<usize> = (0..choices.allowed[k].len()).collect();
            let score = |a: usize| reached_by[k].iter().map(|&j| values[j][choices.allowed[k][a]]).sum::<f64>();
            idx.sort_by(|&x, &y| score(x).total_cmp(&score(y)).then(x.cmp(&y)));
            idx
        })
        .collect();

    struct Search<'a> {
        values: &'a [Vec<f64>],
        reach: &'a [Vec<usize>],
        min_val: &'a [Vec<f64>],
        choices: &'a LeafChoices,
        order: &'a [usize],
        cand_order: &'a [Vec<usize>],
        fixed: Vec<Option<usize>>,
        best: Option<Vec<usize>>,
        best_value: f64,
    }

    impl Search<'_> {
        fn bound(&self) -> f64 {
            self.reach
                .iter()
                .enumerate()
                .map(|(j, ks)| {
                    ks.iter()
                        .map(|&k| match self.fixed[k] {
                            Some(p) => self.values[j][p],
                            None => self.min_val[j][k],
                        })
                        .fold(f64::NEG_INFINITY, f64::max)
                })
                .sum()
        }

        fn dfs(&mut self, pos: usize) {
            let bound = self.bound();
            if bound >= self.best_value {
                return;
            }
            if pos == self.order.len() {
                self.best_value = bound;
                self.best = Some(self.fixed.iter().map(|p| p.unwrap_or(usize::MAX)).collect());
                return;
            }
            let k = self.order[pos];
            for i in 0..self.cand_order[k].len() {
                self.fixed[k] = Some(self.choices.allowed[k][self.cand_order[k][i]]);
                self.dfs(pos + 1);
            }
            self.fixed[k] = None;
        }
    }

    let mut search = Search {
        values,
        reach,
        min_val: &min_val,
        choices,
        order: &order,
        cand_order: &cand_order,
        fixed: vec![None; n_leaves],
        best: None,
        best_value: f64::INFINITY,
    };
    search.dfs(0);
    let best = search.best.expect("some assignment exists");
    let choice: Vec<usize> =
        (0..n_leaves).map(|k| if best[k] == usize::MAX { choices.fallback[k] } else { best[k] }).collect();
    let value = sum_of_max_value(values, reach, &choice);
    (choice, value)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn all_tuples(pool: usize, leaves: usize) -> Vec<Vec<usize>> {
        let mut out = vec![vec![]];
        for _ in 0..leaves {
            out = out.into_iter().flat_map(|t| (0..pool).map(move |p| [t.clone(), vec![p]].concat())).collect();
        }
        out
    }

    fn lcg(seed: &mut u64) -> f64 {
        *seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((*seed >> 33) % 1000) as f64 / 10.0
    }

    #[test]
    fn minmax_matches_enumeration() {
        let mut seed = 7u64;
        for _ in 0..50 {
            let (n, pool, leaves, scen) = (4, 5, 3, 3);
            let values: Vec<Vec<f64>> = (0..n).map(|_| (0..pool).map(|_| lcg(&mut seed)).collect()).collect();
            let routes: Vec<Vec<usize>> =
                (0..scen).map(|_| (0..n).map(|_| (lcg(&mut seed) as usize) % leaves).collect()).collect();
            let choices = LeafChoices::free(leaves, pool, 0);
            let brute = all_tuples(pool, leaves)
                .iter()
                .map(|t| minmax_value(&values, &routes, t))
                .fold(f64::INFINITY, f64::min);
            let (_, got) = solve_minmax(&values, &routes, &choices, f64::INFINITY).unwrap();
            assert!((got - brute).abs() < 1e-9, "{got} vs {brute}");
        }
    }

    #[test]
    fn minmax_respects_cutoff() {
        let values = vec![vec![3.0, 1.0]];
        let routes = vec![vec![0]];
        let choices = LeafChoices::free(1, 2, 0);
        assert!(solve_minmax(&values, &routes, &choices, 1.0).is_none());
        assert_eq!(solve_minmax(&values, &routes, &choices, 1.5).unwrap(), (vec![1], 1.0));
    }

    #[test]
    fn unrouted_leaves_take_fallback() {
        let values = vec![vec![3.0, 1.0, 2.0]];
        let routes = vec![vec![1]];
        let choices = LeafChoices::free(2, 3, 2);
        let (choice, value) = solve_minmax(&values, &routes, &choices, f64::INFINITY).unwrap();
        assert_eq!(choice, vec![2, 1]);
        assert_eq!(value, 1.0);
    }

    #[test]
    fn sum_of_max_matches_enumeration() {
        let mut seed = 11u64;
        for _ in 0..50 {
            let (n, pool, leaves) = (5, 4, 4);
            let values: Vec<Vec<f64>> = (0..n).map(|_| (0..pool).map(|_| lcg(&mut seed)).collect()).collect();
            let reach: Vec<Vec<usize>> = (0..n)
                .map(|_| {
                    let mut ks: Vec<usize> = (0..leaves).filter(|_| lcg(&mut seed) < 50.0).collect();
                    if ks.is_empty() {
                        ks.push((lcg(&mut seed) as usize) % leaves);
                    }
                    ks
                })
                .collect();
            let choices = LeafChoices::free(leaves, pool, 0);
            let brute = all_tuples(pool, leaves)
                .iter()
                .map(|t| sum_of_max_value(&values, &reach, t))
                .fold(f64::INFINITY, f64::min);
            let (_, got) = solve_sum_of_max(&values, &reach, &choices);
            assert!((got - brute).abs() < 1e-9, "{got} vs {brute}");
        }
    }

    #[test]
    fn fixed_choices_evaluate_directly() {
        let values = vec![vec![1.0, 5.0], vec![4.0, 2.0]];
        let routes = vec![vec![0, 1], vec![1, 1]];
        let choices = LeafChoices::fixed(&[0, 1]);
        let (choice, value) = solve_minmax(&values, &routes, &choices, f64::INFINITY).unwrap();
        assert_eq!(choice, vec![0, 1]);
        assert_eq!(value, 7.0);
    }
}
