//! Experiment drivers: budget correlation of random surrogates, λ sweeps,
//! and objectives relative to the nominal tree. Results are long-format
//! records that serialize to CSV.

use std::io::Write;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adversary;
use crate::error::{Error, Result};
use crate::exact::{self, SolveLimits, SolveReport};
use crate::heuristics::{self, HeuristicConfig};
use crate::instance::{compute_budget, Coupling, Instance};
use crate::model::{nominal_objective, BudgetKind, Dataset, DecisionTree, ThresholdCatalog, TreeStructure, UncertaintyBudget};
use crate::space::FeasibleSpace;

/// Training method for a surrogate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "nominal")]
    Nominal,
    SG,
    H1,
    Htree,
    Hsol,
    Halt,
}

impl Method {
    pub const ALL: [Method; 6] = [Method::Nominal, Method::SG, Method::H1, Method::Htree, Method::Hsol, Method::Halt];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Nominal => "nominal",
            Method::SG => "SG",
            Method::H1 => "H1",
            Method::Htree => "Htree",
            Method::Hsol => "Hsol",
            Method::Halt => "Halt",
        }
    }

    /// Whether the trained tree ignores the budget.
    pub fn budget_free(self) -> bool {
        matches!(self, Method::Nominal | Method::H1)
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidConfig(format!("unknown method {s:?}")))
    }
}

/// Settings shared by every training call.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub depth: usize,
    pub heuristic: HeuristicConfig,
    pub exact: SolveLimits,
}

impl TrainConfig {
    pub fn new(depth: usize, seed: u64, time_limit: Duration) -> Self {
        let heuristic = HeuristicConfig { time_limit, seed, depth, ..HeuristicConfig::default() };
        TrainConfig { depth, heuristic, exact: SolveLimits::default().with_time_limit(time_limit) }
    }
}

pub fn train(
    method: Method,
    dataset: &Dataset,
    space: &dyn FeasibleSpace,
    budget: UncertaintyBudget,
    config: &TrainConfig,
) -> Result<SolveReport> {
    match method {
        Method::Nominal => exact::solve_nominal(dataset, space, config.depth, &config.exact),
        Method::SG => exact::scenario_generation(dataset, budget, space, config.depth, &config.exact),
        Method::H1 => Ok(heuristics::h1_report(dataset, space, budget)),
        Method::Htree => heuristics::h_tree(dataset, space, budget, &config.heuristic),
        Method::Hsol => heuristics::h_sol(dataset, space, budget, &config.heuristic),
        Method::Halt => heuristics::h_alt(dataset, space, budget, &config.heuristic),
    }
}

/// In-sample and out-of-sample performance of one tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub instance: String,
    pub method: String,
    pub kind: BudgetKind,
    pub lambda: Option<f64>,
    pub gamma: f64,
    pub nominal_in_sample: f64,
    pub robust_in_sample: f64,
    pub nominal_out_of_sample: Option<f64>,
    pub robust_out_of_sample: Option<f64>,
    pub runtime_secs: f64,
    pub optimal: bool,
}

/// Nominal and worst-case objectives on training and, if present, test data.
/// The test evaluation reuses the absolute training budget.
pub fn evaluate_tree(
    tree: &DecisionTree,
    train: &Dataset,
    test: Option<&Dataset>,
    budget: UncertaintyBudget,
    space: &dyn FeasibleSpace,
) -> Result<(f64, f64, Option<f64>, Option<f64>)> {
    let robust_in = crate::model::evaluate_robust(tree, train, budget, space)?;
    let (nom_out, rob_out) = match test {
        Some(ds) => (Some(nominal_objective(tree, ds)), Some(crate::model::evaluate_robust(tree, ds, budget, space)?)),
        None => (None, None),
    };
    Ok((nominal_objective(tree, train), robust_in, nom_out, rob_out))
}

/// Sample Pearson correlation of `(x, y)` pairs.
pub fn pearson_r(pairs: &[(f64, f64)]) -> Result<f64> {
    if pairs.len() < 2 {
        return Err(Error::DegenerateVariance);
    }
    let n = pairs.len() as f64;
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for &(x, y) in pairs {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return Err(Error::DegenerateVariance);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// One line of long-format output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvRecord {
    pub instance: String,
    pub method: String,
    pub lambda: String,
    pub kind: String,
    pub split: String,
    pub metric: String,
    pub value: String,
}

pub fn fmt_value(v: f64) -> String {
    format!("{v:.6}")
}

impl CsvRecord {
    pub fn new(instance: &str, method: &str, lambda: Option<f64>, kind: &str, split: &str, metric: &str, value: Option<f64>) -> Self {
        CsvRecord {
            instance: instance.into(),
            method: method.into(),
            lambda: lambda.map(fmt_value).unwrap_or_default(),
            kind: kind.into(),
            split: split.into(),
            metric: metric.into(),
            value: value.map(fmt_value).unwrap_or_default(),
        }
    }
}

pub fn write_csv<W: Write>(writer: W, records: &[CsvRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

impl EvalRecord {
    pub fn to_csv(&self) -> Vec<CsvRecord> {
        let kind = self.kind.as_str();
        let row = |split: &str, metric: &str, v: Option<f64>| {
            CsvRecord::new(&self.instance, &self.method, self.lambda, kind, split, metric, v)
        };
        vec![
            row("train", "nominal", Some(self.nominal_in_sample)),
            row("train", "robust", Some(self.robust_in_sample)),
            row("test", "nominal", self.nominal_out_of_sample),
            row("test", "robust", self.robust_out_of_sample),
            row("train", "gamma", Some(self.gamma)),
            row("train", "runtime", Some(self.runtime_secs)),
            row("train", "optimal", Some(if self.optimal { 1.0 } else { 0.0 })),
        ]
    }
}

/// Maps `f` over `items` on up to `workers` threads; output keeps input order.
pub fn parallel_map<T: Sync, U: Send>(items: &[T], workers: usize, f: impl Fn(usize, &T) -> U + Sync) -> Vec<U> {
    let workers = workers.max(1).min(items.len().max(1));
    if workers == 1 {
        return items.iter().enumerate().map(|(i, t)| f(i, t)).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<U>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let out = f(i, &items[i]);
                slots.lock().expect("no panics while holding the lock")[i] = Some(out);
            });
        }
    });
    slots.into_inner().expect("threads joined").into_iter().map(|u| u.expect("every slot filled")).collect()
}

/// A named training set with its feasible space.
pub struct Prepared {
    pub name: String,
    pub train: Dataset,
    pub test: Option<Dataset>,
    pub space: crate::space::Space,
}

pub fn prepare(instances: &[(String, Instance)]) -> Result<Vec<Prepared>> {
    instances
        .iter()
        .map(|(name, inst)| {
            Ok(Prepared { name: name.clone(), train: inst.train_dataset()?, test: inst.test_dataset()?, space: inst.space()? })
        })
        .collect()
}

fn budget_for(p: &Prepared, lambda: f64, depth: usize, kind: BudgetKind, coupling: Coupling) -> Result<UncertaintyBudget> {
    UncertaintyBudget::new(kind, compute_budget(&p.train, lambda, depth, kind, coupling)?)
}

/// Random structure with each leaf holding the optimum of the summed costs
/// of the samples routed to it (the zero-budget leaf optimum).
pub fn random_surrogate(
    dataset: &Dataset,
    space: &dyn FeasibleSpace,
    catalog: &ThresholdCatalog,
    depth: usize,
    rng: &mut ChaCha8Rng,
) -> Result<DecisionTree> {
    let structure = heuristics::sample_random_structure(catalog, depth, rng)?;
    Ok(nominal_leaves(&structure, dataset, space))
}

fn nominal_leaves(structure: &TreeStructure, dataset: &Dataset, space: &dyn FeasibleSpace) -> DecisionTree {
    let mut sums = vec![vec![0.0; dataset.n_items()]; structure.n_leaves()];
    let mut routed = vec![false; structure.n_leaves()];
    for c in dataset.samples() {
        let k = structure.traverse(c);
        routed[k] = true;
        for (s, v) in sums[k].iter_mut().zip(c) {
            *s += v;
        }
    }
    let fallback = space.min_linear(&dataset.aggregate());
    let leaves = sums
        .iter()
        .zip(&routed)
        .map(|(sum, &r)| if r { space.min_linear(sum) } else { fallback.clone() })
        .collect();
    DecisionTree::new(structure.clone(), leaves).expect("one solution per leaf")
}

/// Worst case of one random surrogate under both sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationPoint {
    pub instance: String,
    pub tree: usize,
    pub global: f64,
    pub local: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationCell {
    pub lambda: f64,
    pub coupling: Coupling,
    pub points: Vec<CorrelationPoint>,
    /// Pearson r over all points of the cell.
    pub r: Option<f64>,
}

impl CorrelationCell {
    pub fn to_csv(&self) -> Vec<CsvRecord> {
        let mut out = Vec::with_capacity(2 * self.points.len() + 1);
        for p in &self.points {
            let method = format!("random{}", p.tree);
            for (kind, v) in [("global", p.global), ("local", p.local)] {
                out.push(CsvRecord::new(&p.instance, &method, Some(self.lambda), kind, "train", &format!("robust_coupling_{}", self.coupling), Some(v)));
            }
        }
        out.push(CsvRecord::new("all", "random", Some(self.lambda), "both", "train", &format!("pearson_r_coupling_{}", self.coupling), self.r));
        out
    }
}

/// Experiment 1: correlation of worst-case objectives under the local and
/// global sets for random surrogates, one cell per λ.
pub fn exp_correlation(
    instances: &[Prepared],
    lambdas: &[f64],
    coupling: Coupling,
    trees_per_instance: usize,
    depth: usize,
    seed: u64,
    workers: usize,
) -> Result<Vec<CorrelationCell>> {
    let per_instance: Vec<Result<Vec<Vec<CorrelationPoint>>>> = parallel_map(instances, workers, |idx, p| {
        let catalog = ThresholdCatalog::build(&p.train);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(idx as u64);
        let trees: Vec<DecisionTree> = (0..trees_per_instance)
            .map(|_| random_surrogate(&p.train, &p.space, &catalog, depth, &mut rng))
            .collect::<Result<_>>()?;
        let config = adversary::AdversaryConfig::default();
        lambdas
            .iter()
            .map(|&lambda| {
                let loc = budget_for(p, lambda, depth, BudgetKind::Local, coupling)?;
                let glob = budget_for(p, lambda, depth, BudgetKind::Global, coupling)?;
                Ok(trees
                    .iter()
                    .enumerate()
                    .map(|(t, tree)| CorrelationPoint {
                        instance: p.name.clone(),
                        tree: t,
                        global: adversary::solve(tree, &p.train, glob, &config).objective,
                        local: adversary::solve(tree, &p.train, loc, &config).objective,
                    })
                    .collect())
            })
            .collect()
    });
    let mut cells: Vec<CorrelationCell> =
        lambdas.iter().map(|&lambda| CorrelationCell { lambda, coupling, points: Vec::new(), r: None }).collect();
    for result in per_instance {
        for (cell, points) in cells.iter_mut().zip(result?) {
            cell.points.extend(points);
        }
    }
    for cell in &mut cells {
        let pairs: Vec<(f64, f64)> = cell.points.iter().map(|p| (p.global, p.local)).collect();
        cell.r = pearson_r(&pairs).ok();
    }
    Ok(cells)
}

/// Worst-case in-sample objective of a tree trained for one set and
/// evaluated under either set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub instance: String,
    pub method: Method,
    pub lambda: f64,
    pub trained_kind: BudgetKind,
    pub eval_kind: BudgetKind,
    pub objective: f64,
    pub optimal: bool,
}

impl SweepRecord {
    pub fn to_csv(&self) -> CsvRecord {
        CsvRecord::new(
            &self.instance,
            self.method.as_str(),
            Some(self.lambda),
            self.trained_kind.as_str(),
            "train",
            &format!("robust_{}", self.eval_kind),
            Some(self.objective),
        )
    }
}

/// Number of optimal runs per `(method, λ, trained kind)`, in first-seen order.
pub fn optimality_counts(records: &[SweepRecord]) -> Vec<(Method, f64, BudgetKind, usize)> {
    let mut out: Vec<(Method, f64, BudgetKind, usize)> = Vec::new();
    for r in records.iter().filter(|r| r.trained_kind == r.eval_kind) {
        match out.iter_mut().find(|(m, l, k, _)| *m == r.method && *l == r.lambda && *k == r.trained_kind) {
            Some(entry) => entry.3 += usize::from(r.optimal),
            None => out.push((r.method, r.lambda, r.trained_kind, usize::from(r.optimal))),
        }
    }
    out
}

/// Experiment 2: worst-case objectives over a λ grid for every method,
/// trained under each set and evaluated under both.
pub fn exp_lambda_sweep(
    instances: &[Prepared],
    methods: &[Method],
    lambdas: &[f64],
    coupling: Coupling,
    config: &TrainConfig,
    workers: usize,
) -> Result<Vec<SweepRecord>> {
    let per_instance = parallel_map(instances, workers, |_, p| -> Result<Vec<SweepRecord>> {
        let mut out = Vec::new();
        let mut fixed: Vec<(Method, SolveReport)> = Vec::new();
        for &m in methods.iter().filter(|m| m.budget_free()) {
            fixed.push((m, train(m, &p.train, &p.space, UncertaintyBudget::none(BudgetKind::Global), config)?));
        }
        for &lambda in lambdas {
            let budgets = [
                budget_for(p, lambda, config.depth, BudgetKind::Local, coupling)?,
                budget_for(p, lambda, config.depth, BudgetKind::Global, coupling)?,
            ];
            for &m in methods {
                for trained in budgets {
                    let report = match fixed.iter().find(|(f, _)| *f == m) {
                        Some((_, r)) => r.clone(),
                        None => train(m, &p.train, &p.space, trained, config)?,
                    };
                    for eval in budgets {
                        out.push(SweepRecord {
                            instance: p.name.clone(),
                            method: m,
                            lambda,
                            trained_kind: trained.kind,
                            eval_kind: eval.kind,
                            objective: adversary::solve(&report.tree, &p.train, eval, &config.exact.adversary).objective,
                            optimal: report.optimal,
                        });
                    }
                }
            }
        }
        Ok(out)
    });
    let mut all = Vec::new();
    for r in per_instance {
        all.extend(r?);
    }
    Ok(all)
}

/// `(obj − obj_nom) / obj_nom` in percent; `None` when `obj_nom = 0`.
pub fn scaled_percent(obj: f64, nominal: f64) -> Option<f64> {
    (nominal != 0.0).then(|| 100.0 * (obj - nominal) / nominal)
}

/// Mean scaled value of one method in one table cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelativeCell {
    /// Instance group, such as `N=5,g=4`.
    pub group: String,
    pub kind: BudgetKind,
    pub method: Method,
    /// `train` or `test`.
    pub split: String,
    /// `nominal` or `robust`.
    pub metric: String,
    /// Mean over the group's instances; `None` if no instance had a nonzero baseline.
    pub percent: Option<f64>,
    pub instances: usize,
}

impl RelativeCell {
    pub fn to_csv(&self, lambda: f64) -> CsvRecord {
        CsvRecord::new(&self.group, self.method.as_str(), Some(lambda), self.kind.as_str(), &self.split, &format!("{}_scaled_pct", self.metric), self.percent)
    }
}

/// Experiment 3: objectives of every method relative to the nominal tree,
/// averaged per instance group. `groups[i]` labels `instances[i]`.
pub fn exp_relative_tables(
    instances: &[Prepared],
    groups: &[String],
    methods: &[Method],
    lambda: f64,
    coupling: Coupling,
    config: &TrainConfig,
    workers: usize,
) -> Result<(Vec<EvalRecord>, Vec<RelativeCell>)> {
    if groups.len() != instances.len() {
        return Err(Error::InvalidConfig("one group label per instance is needed".into()));
    }
    let per_instance = parallel_map(instances, workers, |_, p| -> Result<Vec<EvalRecord>> {
        let mut out = Vec::new();
        let mut cache: Vec<(Method, SolveReport)> = Vec::new();
        for kind in [BudgetKind::Local, BudgetKind::Global] {
            let budget = budget_for(p, lambda, config.depth, kind, coupling)?;
            let mut run = |m: Method| -> Result<SolveReport> {
                if let Some((_, r)) = cache.iter().find(|(c, _)| *c == m) {
                    return Ok(r.clone());
                }
                let start = Instant::now();
                let mut r = train(m, &p.train, &p.space, budget, config)?;
                r.wall_time_secs = start.elapsed().as_secs_f64();
                if m.budget_free() {
                    cache.push((m, r.clone()));
                }
                Ok(r)
            };
            let mut wanted: Vec<Method> = vec![Method::Nominal];
            wanted.extend(methods.iter().copied().filter(|&m| m != Method::Nominal));
            for m in wanted {
                let report = run(m)?;
                let (ni, ri, no, ro) = evaluate_tree(&report.tree, &p.train, p.test.as_ref(), budget, &p.space)?;
                out.push(EvalRecord {
                    instance: p.name.clone(),
                    method: m.as_str().into(),
                    kind,
                    lambda: Some(lambda),
                    gamma: budget.gamma,
                    nominal_in_sample: ni,
                    robust_in_sample: ri,
                    nominal_out_of_sample: no,
                    robust_out_of_sample: ro,
                    runtime_secs: report.wall_time_secs,
                    optimal: report.optimal,
                });
            }
        }
        Ok(out)
    });
    let mut records = Vec::new();
    for r in per_instance {
        records.extend(r?);
    }
    let cells = relative_cells(&records, instances, groups, methods);
    Ok((records, cells))
}

fn relative_cells(records: &[EvalRecord], instances: &[Prepared], groups: &[String], methods: &[Method]) -> Vec<RelativeCell> {
    let mut group_order: Vec<&String> = Vec::new();
    for g in groups {
        if !group_order.contains(&g) {
            group_order.push(g);
        }
    }
    type Pick = fn(&EvalRecord) -> Option<f64>;
    let metrics: [(&str, &str, Pick); 4] = [
        ("train", "nominal", |r| Some(r.nominal_in_sample)),
        ("train", "robust", |r| Some(r.robust_in_sample)),
        ("test", "nominal", |r| r.nominal_out_of_sample),
        ("test", "robust", |r| r.robust_out_of_sample),
    ];
    let mut cells = Vec::new();
    for group in group_order {
        let members: Vec<&str> =
            instances.iter().zip(groups).filter(|(_, g)| *g == group).map(|(p, _)| p.name.as_str()).collect();
        for kind in [BudgetKind::Local, BudgetKind::Global] {
            for &m in methods {
                for (split, metric, pick) in metrics {
                    let values: Vec<f64> = members
                        .iter()
                        .filter_map(|name| {
                            let find = |method: &str| {
                                records.iter().find(|r| r.instance == *name && r.kind == kind && r.method == method)
                            };
                            let base = pick(find(Method::Nominal.as_str())?)?;
                            let obj = pick(find(m.as_str())?)?;
                            scaled_percent(obj, base)
                        })
                        .collect();
                    let percent = (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64);
                    cells.push(RelativeCell {
                        group: group.clone(),
                        kind,
                        method: m,
                        split: split.into(),
                        metric: metric.into(),
                        percent,
                        instances: values.len(),
                    });
                }
            }
        }
    }
    cells
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{generate_instance, InstanceSpec};
    use approx::assert_abs_diff_eq;

    #[test]
    fn pearson_examples() {
        let same: Vec<(f64, f64)> = (0..5).map(|i| (i as f64, i as f64)).collect();
        assert_abs_diff_eq!(pearson_r(&same).unwrap(), 1.0, epsilon = 1e-12);
        let neg: Vec<(f64, f64)> = (0..5).map(|i| (i as f64, -(i as f64))).collect();
        assert_abs_diff_eq!(pearson_r(&neg).unwrap(), -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(pearson_r(&[(1.0, 2.0), (2.0, 4.0), (3.0, 5.0)]).unwrap(), 0.9820, epsilon = 1e-4);
        assert!(matches!(pearson_r(&[(1.0, 2.0), (1.0, 3.0)]), Err(Error::DegenerateVariance)));
    }

    #[test]
    fn scaled_formula() {
        assert_abs_diff_eq!(scaled_percent(43.0, 50.0).unwrap(), -14.0, epsilon = 1e-12);
        assert_eq!(scaled_percent(1.0, 0.0), None);
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
        }
    }

    #[test]
    fn parallel_map_keeps_order() {
        let items: Vec<usize> = (0..20).collect();
        assert_eq!(parallel_map(&items, 4, |_, x| x * 2), items.iter().map(|x| x * 2).collect::<Vec<_>>());
    }

    #[test]
    fn small_sweep_has_constant_h1_rows() {
        let inst = generate_instance(&InstanceSpec::new(3, 3, 0, 2)).unwrap();
        let prepared = prepare(&[("i0".into(), inst)]).unwrap();
        let mut config = TrainConfig::new(1, 1, Duration::from_secs(5));
        config.heuristic.max_restarts = Some(5);
        let recs = exp_lambda_sweep(&prepared, &[Method::Nominal, Method::H1], &[0.0, 0.05, 0.1], Coupling::PerSample, &config, 1)
            .unwrap();
        let h1: Vec<f64> = recs.iter().filter(|r| r.method == Method::H1).map(|r| r.objective).collect();
        assert!(h1.windows(2).all(|w| w[0] == w[1]));
        let nominal_zero = recs.iter().find(|r| r.method == Method::Nominal && r.lambda == 0.0).unwrap();
        let h1_zero = recs.iter().find(|r| r.method == Method::H1 && r.lambda == 0.0).unwrap();
        assert!(nominal_zero.objective <= h1_zero.objective);
    }
}
