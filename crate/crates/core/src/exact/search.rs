//! Master problem search: the best complete tree over a finite scenario set.
//!
//! Perturbed observations `c_j + ξ_j^s` are deduplicated, then split
//! structures are enumerated recursively. Two subtrees that route their
//! observations identically are interchangeable, so every (observation set,
//! depth) pair keeps only its distinct routings. Leaf solutions are chosen
//! per routing by the branch and bound in [`super::assign`].

use std::collections::{HashMap, HashSet};
use std::rc::Rc;
use std::time::Instant;

use super::assign::{minmax_value, solve_minmax, LeafChoices};
use crate::model::{inner_count, leaf_count, Dataset, Solution, Split, ThresholdCatalog};

/// How leaf solutions are chosen during the structure search.
#[derive(Debug, Clone, Copy)]
pub(crate) enum Leaves<'a> {
    /// Any pool entry per leaf; unreached leaves take `fallback`.
    Free { fallback: usize },
    /// Leaf `k` holds pool entry `chosen[k]`.
    Fixed(&'a [usize]),
}

#[derive(Debug)]
pub(crate) struct MasterOutcome {
    pub splits: Vec<Split>,
    pub choice: Vec<usize>,
    pub objective: f64,
    pub complete: bool,
}

struct SubtreeOption {
    splits: Vec<Split>,
    /// Local leaf of each observation of the group, aligned with the group.
    leaf_of: Vec<u16>,
}

struct Searcher {
    candidates: Vec<Split>,
    /// `goes_left[cand][obs]`
    goes_left: Vec<Vec<bool>>,
    default_split: Split,
    free: bool,
    memo: HashMap<(Vec<u32>, usize), Rc<Vec<SubtreeOption>>>,
}

/// Level-order splits of a tree with `root` above subtrees `left` and `right`.
fn merge_splits(root: Split, left: &[Split], right: &[Split]) -> Vec<Split> {
    let mut out = Vec::with_capacity(1 + left.len() + right.len());
    out.push(root);
    let mut width = 1;
    let mut start = 0;
    while start < left.len() {
        out.extend_from_slice(&left[start..start + width]);
        out.extend_from_slice(&right[start..start + width]);
        start += width;
        width *= 2;
    }
    out
}

/// Relabels leaves by first appearance so equal partitions compare equal.
fn canonical(leaf_of: &[u16]) -> Vec<u16> {
    let mut map: HashMap<u16, u16> = HashMap::new();
    leaf_of
        .iter()
        .map(|&k| {
            let next = map.len() as u16;
            *map.entry(k).or_insert(next)
        })
        .collect()
}

impl Searcher {
    /// Distinct root partitions `(candidate, left group, right group)` of `group`.
    fn root_partitions(&self, group: &[u32]) -> Vec<(Split, Vec<u32>, Vec<u32>)> {
        let mut seen: HashSet<Vec<u32>> = HashSet::new();
        let mut out = Vec::new();
        let mut any_separating = false;
        for (c, split) in self.candidates.iter().enumerate() {
            let (left, right): (Vec<u32>, Vec<u32>) = group.iter().partition(|&&o| self.goes_left[c][o as usize]);
            if !seen.insert(left.clone()) {
                continue;
            }
            any_separating |= !left.is_empty() && !right.is_empty();
            out.push((*split, left, right));
        }
        if self.free && any_separating {
            out.retain(|(_, l, r)| !l.is_empty() && !r.is_empty());
        }
        out
    }

    fn options(&mut self, group: &[u32], depth: usize) -> Rc<Vec<SubtreeOption>> {
        if let Some(found) = self.memo.get(&(group.to_vec(), depth)) {
            return Rc::clone(found);
        }
        let result = if depth == 0 {
            vec![SubtreeOption { splits: Vec::new(), leaf_of: vec![0; group.len()] }]
        } else if group.is_empty() || self.candidates.is_empty() {
            vec![SubtreeOption { splits: vec![self.default_split; inner_count(depth)], leaf_of: vec![0; group.len()] }]
        } else {
            let half = leaf_count(depth - 1) as u16;
            let mut seen: HashSet<Vec<u16>> = HashSet::new();
            let mut out = Vec::new();
            for (split, left, right) in self.root_partitions(group) {
                let lopts = self.options(&left, depth - 1);
                let ropts = self.options(&right, depth - 1);
                for lo in lopts.iter() {
                    for ro in ropts.iter() {
                        let leaf_of = combine(group, &left, &lo.leaf_of, &ro.leaf_of, half);
                        let key = if self.free { canonical(&leaf_of) } else { leaf_of.clone() };
                        if seen.insert(key) {
                            out.push(SubtreeOption { splits: merge_splits(split, &lo.splits, &ro.splits), leaf_of });
                        }
                    }
                }
            }
            out
        };
        let rc = Rc::new(result);
        self.memo.insert((group.to_vec(), depth), Rc::clone(&rc));
        rc
    }
}

/// Leaf labels of `group` given labels of its left part and of the rest.
fn combine(group: &[u32], left: &[u32], left_leaf: &[u16], right_leaf: &[u16], offset: u16) -> Vec<u16> {
    let (mut li, mut ri) = (0, 0);
    group
        .iter()
        .map(|&o| {
            if li < left.len() && left[li] == o {
                li += 1;
                left_leaf[li - 1]
            } else {
                ri += 1;
                offset + right_leaf[ri - 1]
            }
        })
        .collect()
}

/// Minimizes `max_s Σ_j c_j^T x_{leaf(c_j + ξ_j^s)}` over complete trees of
/// `depth` with thresholds from `catalog` and leaves drawn from `pool`.
pub(crate) fn search(
    dataset: &Dataset,
    scenarios: &[Vec<Vec<f64>>],
    pool: &[Solution],
    depth: usize,
    catalog: &ThresholdCatalog,
    leaves: Leaves<'_>,
    deadline: Option<Instant>,
) -> MasterOutcome {
    let n = dataset.len();
    let mut obs_index: HashMap<Vec<u64>, u32> = HashMap::new();
    let mut observations: Vec<Vec<f64>> = Vec::new();
    let obs_id: Vec<Vec<u32>> = scenarios
        .iter()
        .map(|xi| {
            (0..n)
                .map(|j| {
                    let o: Vec<f64> = dataset.sample(j).iter().zip(&xi[j]).map(|(c, d)| c + d).collect();
                    let key: Vec<u64> = o.iter().map(|v| v.to_bits()).collect();
                    *obs_index.entry(key).or_insert_with(|| {
                        observations.push(o);
                        (observations.len() - 1) as u32
                    })
                })
                .collect()
        })
        .collect();

    let candidates = catalog.candidates();
    let goes_left: Vec<Vec<bool>> =
        candidates.iter().map(|s| observations.iter().map(|o| s.goes_left(o)).collect()).collect();
    let default_split = candidates.first().copied().unwrap_or_else(|| {
        // no usable threshold: a split that sends every training sample left
        let top = dataset.samples().iter().map(|c| c[0]).fold(f64::NEG_INFINITY, f64::max);
        Split { item: 0, threshold: top }
    });
    let free = matches!(leaves, Leaves::Free { .. });
    let mut searcher = Searcher { candidates, goes_left, default_split, free, memo: HashMap::new() };

    let values: Vec<Vec<f64>> = dataset.samples().iter().map(|c| pool.iter().map(|x| x.cost(c)).collect()).collect();
    let lower_bound: f64 = values.iter().map(|row| row.iter().copied().fold(f64::INFINITY, f64::min)).sum();
    let n_leaves = leaf_count(depth);
    let choices = match leaves {
        Leaves::Free { fallback } => LeafChoices::free(n_leaves, pool.len(), fallback),
        Leaves::Fixed(chosen) => LeafChoices::fixed(chosen),
    };

    let all: Vec<u32> = (0..observations.len() as u32).collect();
    let mut best: Option<MasterOutcome> = None;
    let mut evaluations = 0usize;
    let mut leaf_of_obs = vec![0usize; observations.len()];

    let evaluate = |splits: Vec<Split>, leaf_of_obs: &[usize], best: &mut Option<MasterOutcome>| {
        let routes: Vec<Vec<usize>> =
            obs_id.iter().map(|ids| ids.iter().map(|&o| leaf_of_obs[o as usize]).collect()).collect();
        let cutoff = best.as_ref().map_or(f64::INFINITY, |b| b.objective);
        let found = match leaves {
            Leaves::Free { .. } => solve_minmax(&values, &routes, &choices, cutoff),
            Leaves::Fixed(chosen) => {
                let v = minmax_value(&values, &routes, chosen);
                (v < cutoff).then(|| (chosen.to_vec(), v))
            }
        };
        if let Some((choice, objective)) = found {
            *best = Some(MasterOutcome { splits, choice, objective, complete: true });
        }
    };

    let mut complete = true;
    if depth == 0 {
        evaluate(Vec::new(), &leaf_of_obs, &mut best);
    } else {
        let half = leaf_count(depth - 1);
        let partitions = if searcher.candidates.is_empty() {
            vec![(default_split, all.clone(), Vec::new())]
        } else {
            searcher.root_partitions(&all)
        };
        'outer: for (split, left, right) in partitions {
            let lopts = searcher.options(&left, depth - 1);
            let ropts = searcher.options(&right, depth - 1);
            for lo in lopts.iter() {
                for (&o, &k) in left.iter().zip(&lo.leaf_of) {
                    leaf_of_obs[o as usize] = k as usize;
                }
                for ro in ropts.iter() {
                    for (&o, &k) in right.iter().zip(&ro.leaf_of) {
                        leaf_of_obs[o as usize] = half + k as usize;
                    }
                    evaluate(merge_splits(split, &lo.splits, &ro.splits), &leaf_of_obs, &mut best);
                    evaluations += 1;
                    if free && best.as_ref().is_some_and(|b| b.objective <= lower_bound) {
                        break 'outer;
                    }
                    if evaluations.is_multiple_of(256) && deadline.is_some_and(|d| Instant::now() >= d) {
                        complete = false;
                        break 'outer;
                    }
                }
            }
        }
    }
    let mut outcome = best.expect("at least one structure is evaluated");
    outcome.complete = complete;
    outcome
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn merge_keeps_level_order() {
        let s = |i: usize| Split { item: i, threshold: 0.0 };
        assert_eq!(merge_splits(s(0), &[s(1)], &[s(2)]), vec![s(0), s(1), s(2)]);
        let merged = merge_splits(s(0), &[s(1), s(3), s(4)], &[s(2), s(5), s(6)]);
        assert_eq!(merged.iter().map(|x| x.item).collect::<Vec<_>>(), vec![0, 1, 2, 3, 4, 5, 6]);
    }

    #[test]
    fn canonical_relabels_by_first_use() {
        assert_eq!(canonical(&[3, 1, 3, 0]), vec![0, 1, 0, 2]);
    }
}
