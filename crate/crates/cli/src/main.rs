//! `surrogate`: generate instances, train and evaluate robust tree
//! surrogates, and run the experiment drivers.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use surrogate_core::exact::{post_process, DEFAULT_PI};
use surrogate_core::experiments::{self, fmt_value, CsvRecord, EvalRecord, Method, Prepared, TrainConfig};
use surrogate_core::instance::{compute_budget, generate_instance, Coupling, Instance, InstanceSpec, DEFAULT_TEST_SAMPLES};
use surrogate_core::{AdversaryConfig, BudgetKind, Dataset, DecisionTree, UncertaintyBudget};

#[derive(Parser)]
#[command(name = "surrogate", version, about = "Robust interpretable decision-tree surrogates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a random grid instance (or a built-in example) as JSON.
    Generate(GenerateArgs),
    /// Train a tree on an instance's training data.
    Solve(SolveArgs),
    /// Nominal and worst-case objectives of a tree on train and test data.
    Evaluate(EvaluateArgs),
    /// Correlation of local and global worst cases over random surrogates.
    ExpCorr(CorrArgs),
    /// Worst-case objectives of each method over a grid of λ values.
    ExpSweep(SweepArgs),
    /// Objectives relative to the nominal tree, averaged per instance group.
    ExpTables(TablesArgs),
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, default_value_t = 4)]
    grid: usize,
    #[arg(long, default_value_t = 5)]
    train: usize,
    #[arg(long, default_value_t = DEFAULT_TEST_SAMPLES)]
    test: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write a built-in instance instead (`motivating`).
    #[arg(long)]
    example: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Clone)]
struct BudgetArgs {
    #[arg(long, default_value = "global")]
    kind: BudgetKind,
    /// Relative budget scale; Γ_loc = λ · depth · max item range.
    #[arg(long, conflicts_with = "gamma")]
    lambda: Option<f64>,
    /// Absolute budget.
    #[arg(long)]
    gamma: Option<f64>,
    /// Global budget as N·Γ_loc (`N`) or Γ_loc (`1`).
    #[arg(long, default_value = "N")]
    coupling: Coupling,
}

impl BudgetArgs {
    fn resolve(&self, train: &Dataset, depth: usize) -> Result<UncertaintyBudget> {
        let gamma = match (self.lambda, self.gamma) {
            (Some(l), _) => compute_budget(train, l, depth, self.kind, self.coupling)?,
            (None, Some(g)) => g,
            (None, None) => 0.0,
        };
        Ok(UncertaintyBudget::new(self.kind, gamma)?)
    }
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long, default_value = "SG")]
    method: Method,
    #[command(flatten)]
    budget: BudgetArgs,
    #[arg(long, default_value_t = 2)]
    depth: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Seconds.
    #[arg(long, default_value_t = 3600.0)]
    time_limit: f64,
    /// Restart cap for the heuristics.
    #[arg(long)]
    max_restarts: Option<usize>,
    /// Refine thresholds of the trained tree.
    #[arg(long)]
    post_process: bool,
    /// Tree JSON output.
    #[arg(long)]
    out: PathBuf,
    /// Report JSON output; printed to stdout when absent.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    tree: PathBuf,
    #[arg(long)]
    instance: PathBuf,
    #[command(flatten)]
    budget: BudgetArgs,
    /// Depth used to scale λ; defaults to the tree's depth.
    #[arg(long)]
    depth: Option<usize>,
    /// Long-format CSV output; JSON goes to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct InstanceSource {
    /// Instance files; when absent, instances are generated.
    #[arg(long, num_args = 1..)]
    instance: Vec<PathBuf>,
    /// Number of instances to generate per (grid, train) pair.
    #[arg(long, default_value_t = 20)]
    count: usize,
    #[arg(long, num_args = 1.., default_values_t = [4])]
    grid: Vec<usize>,
    #[arg(long, num_args = 1.., default_values_t = [5])]
    train: Vec<usize>,
    #[arg(long, default_value_t = 0)]
    test: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads for instance-level parallelism.
    #[arg(long, env = "SURROGATE_WORKERS", default_value_t = 1)]
    workers: usize,
}

impl InstanceSource {
    /// Named instances with a group label `N=..,g=..`.
    fn load(&self) -> Result<Vec<(String, String, Instance)>> {
        if !self.instance.is_empty() {
            return self
                .instance
                .iter()
                .map(|p| {
                    let inst = Instance::load(p).with_context(|| format!("reading {}", p.display()))?;
                    let group = match inst.grid_side {
                        Some(g) => format!("N={},g={g}", inst.train.len()),
                        None => format!("N={}", inst.train.len()),
                    };
                    Ok((p.display().to_string(), group, inst))
                })
                .collect();
        }
        let mut out = Vec::new();
        for &g in &self.grid {
            for &n in &self.train {
                for i in 0..self.count {
                    let seed = self.seed.wrapping_add(1000 * g as u64 + 100_000 * n as u64 + i as u64);
                    let inst = generate_instance(&InstanceSpec::new(g, n, self.test, seed))?;
                    out.push((format!("g{g}-n{n}-{i}"), format!("N={n},g={g}"), inst));
                }
            }
        }
        Ok(out)
    }

    fn prepared(&self) -> Result<(Vec<Prepared>, Vec<String>)> {
        let loaded = self.load()?;
        let groups = loaded.iter().map(|(_, g, _)| g.clone()).collect();
        let named: Vec<(String, Instance)> = loaded.into_iter().map(|(n, _, i)| (n, i)).collect();
        Ok((experiments::prepare(&named)?, groups))
    }
}

#[derive(Args)]
struct CorrArgs {
    #[command(flatten)]
    source: InstanceSource,
    #[arg(long, num_args = 1.., default_values_t = [0.05, 0.1, 0.15, 0.2])]
    lambda: Vec<f64>,
    #[arg(long, default_value = "N")]
    coupling: Coupling,
    #[arg(long, default_value_t = 200)]
    trees: usize,
    #[arg(long, default_value_t = 2)]
    depth: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, num_args = 1.., default_values_t = [Method::Nominal, Method::H1, Method::Htree, Method::Hsol, Method::Halt])]
    method: Vec<Method>,
    #[arg(long, default_value = "N")]
    coupling: Coupling,
    #[arg(long, default_value_t = 2)]
    depth: usize,
    /// Seconds per training run.
    #[arg(long, default_value_t = 60.0)]
    time_limit: f64,
    /// Restart cap for the heuristics.
    #[arg(long)]
    max_restarts: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

impl TrainArgs {
    fn config(&self, seed: u64) -> Result<TrainConfig> {
        let mut config = TrainConfig::new(self.depth, seed, seconds(self.time_limit)?);
        config.heuristic.max_restarts = self.max_restarts;
        Ok(config)
    }
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    source: InstanceSource,
    #[command(flatten)]
    train: TrainArgs,
    /// λ grid; defaults to steps of 0.01 up to 0.1, then 0.02 up to 0.2.
    #[arg(long, num_args = 1..)]
    lambda: Vec<f64>,
}

#[derive(Args)]
struct TablesArgs {
    #[command(flatten)]
    source: InstanceSource,
    #[command(flatten)]
    train: TrainArgs,
    #[arg(long, default_value_t = 0.05)]
    lambda: f64,
}

fn seconds(s: f64) -> Result<Duration> {
    if !(s.is_finite() && s > 0.0) {
        bail!("time limit must be a positive number of seconds");
    }
    Ok(Duration::from_secs_f64(s))
}

fn write_records(path: &Path, records: &[CsvRecord]) -> Result<()> {
    let file = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    experiments::write_csv(file, records)?;
    Ok(())
}

fn generate(args: &GenerateArgs) -> Result<ExitCode> {
    let inst = match args.example.as_deref() {
        Some("motivating") => Instance::motivating_example(),
        Some(other) => bail!("unknown example {other:?}; available: motivating"),
        None => generate_instance(&InstanceSpec::new(args.grid, args.train, args.test, args.seed))?,
    };
    inst.save(&args.out)?;
    println!(
        "wrote {}: {} training and {} test samples over {} items",
        args.out.display(),
        inst.train.len(),
        inst.test.len(),
        inst.train.first().map_or(0, Vec::len)
    );
    Ok(ExitCode::SUCCESS)
}

fn solve(args: &SolveArgs) -> Result<ExitCode> {
    let inst = Instance::load(&args.instance).with_context(|| format!("reading {}", args.instance.display()))?;
    let train = inst.train_dataset()?;
    let space = inst.space()?;
    let budget = args.budget.resolve(&train, args.depth)?;
    let mut config = TrainConfig::new(args.depth, args.seed, seconds(args.time_limit)?);
    config.heuristic.max_restarts = args.max_restarts;
    let mut report = experiments::train(args.method, &train, &space, budget, &config)?;
    if args.post_process {
        let refined = post_process(&report.tree, &train, budget, &DEFAULT_PI, &AdversaryConfig::default())?;
        report.tree = refined.tree;
        report.adversary_objective = refined.objective;
    }
    fs::write(&args.out, serde_json::to_string_pretty(&report.tree)?)?;
    let json = report.to_json()?;
    match &args.report {
        Some(path) => fs::write(path, json)?,
        None => println!("{json}"),
    }
    eprintln!(
        "{}: worst case {} (nominal {}), {} iterations in {:.2}s{}",
        report.method,
        fmt_value(report.adversary_objective),
        fmt_value(surrogate_core::nominal_objective(&report.tree, &train)),
        report.iterations,
        report.wall_time_secs,
        if report.optimal { ", optimal" } else { "" }
    );
    let exact = matches!(args.method, Method::Nominal | Method::SG);
    Ok(if exact && !report.optimal { ExitCode::from(2) } else { ExitCode::SUCCESS })
}

fn evaluate(args: &EvaluateArgs) -> Result<ExitCode> {
    let inst = Instance::load(&args.instance).with_context(|| format!("reading {}", args.instance.display()))?;
    let text = fs::read_to_string(&args.tree).with_context(|| format!("reading {}", args.tree.display()))?;
    let tree: DecisionTree = serde_json::from_str(&text)?;
    let train = inst.train_dataset()?;
    let test = inst.test_dataset()?;
    let space = inst.space()?;
    let budget = args.budget.resolve(&train, args.depth.unwrap_or(tree.depth()))?;
    let (ni, ri, no, ro) = experiments::evaluate_tree(&tree, &train, test.as_ref(), budget, &space)?;
    let record = EvalRecord {
        instance: args.instance.display().to_string(),
        method: args.tree.display().to_string(),
        kind: budget.kind,
        lambda: args.budget.lambda,
        gamma: budget.gamma,
        nominal_in_sample: ni,
        robust_in_sample: ri,
        nominal_out_of_sample: no,
        robust_out_of_sample: ro,
        runtime_secs: 0.0,
        optimal: false,
    };
    if let Some(path) = &args.out {
        write_records(path, &record.to_csv())?;
    }
    println!("{}", serde_json::to_string_pretty(&record)?);
    Ok(ExitCode::SUCCESS)
}

fn exp_corr(args: &CorrArgs) -> Result<ExitCode> {
    let (prepared, _) = args.source.prepared()?;
    let cells = experiments::exp_correlation(
        &prepared,
        &args.lambda,
        args.coupling,
        args.trees,
        args.depth,
        args.source.seed,
        args.source.workers,
    )?;
    let records: Vec<CsvRecord> = cells.iter().flat_map(|c| c.to_csv()).collect();
    write_records(&args.out, &records)?;
    for c in &cells {
        let r = c.r.map_or_else(|| "undefined".to_string(), |r| format!("{r:.4}"));
        println!("lambda {} coupling {}: r = {r} over {} surrogates", c.lambda, c.coupling, c.points.len());
    }
    Ok(ExitCode::SUCCESS)
}

fn default_lambda_grid() -> Vec<f64> {
    let fine = (0..=10).map(|i| i as f64 / 100.0);
    let coarse = (1..=5).map(|i| 0.1 + 0.02 * i as f64);
    fine.chain(coarse).collect()
}

fn exp_sweep(args: &SweepArgs) -> Result<ExitCode> {
    let (prepared, _) = args.source.prepared()?;
    let lambdas = if args.lambda.is_empty() { default_lambda_grid() } else { args.lambda.clone() };
    let config = args.train.config(args.source.seed)?;
    let records = experiments::exp_lambda_sweep(
        &prepared,
        &args.train.method,
        &lambdas,
        args.train.coupling,
        &config,
        args.source.workers,
    )?;
    let mut rows: Vec<CsvRecord> = records.iter().map(|r| r.to_csv()).collect();
    for (method, lambda, kind, count) in experiments::optimality_counts(&records) {
        rows.push(CsvRecord::new("all", method.as_str(), Some(lambda), kind.as_str(), "train", "optimal_count", Some(count as f64)));
    }
    write_records(&args.train.out, &rows)?;
    println!("wrote {} records for {} instances", rows.len(), prepared.len());
    Ok(ExitCode::SUCCESS)
}

fn exp_tables(args: &TablesArgs) -> Result<ExitCode> {
    let (prepared, groups) = args.source.prepared()?;
    let config = args.train.config(args.source.seed)?;
    let (records, cells) = experiments::exp_relative_tables(
        &prepared,
        &groups,
        &args.train.method,
        args.lambda,
        args.train.coupling,
        &config,
        args.source.workers,
    )?;
    let mut rows: Vec<CsvRecord> = records.iter().flat_map(|r| r.to_csv()).collect();
    rows.extend(cells.iter().map(|c| c.to_csv(args.lambda)));
    write_records(&args.train.out, &rows)?;
    for c in cells.iter().filter(|c| c.split == "train") {
        let v = c.percent.map_or_else(|| "missing".to_string(), |v| format!("{v:+.2}%"));
        println!("{:<10} {:<6} {:<7} {} {}: {v}", c.group, c.kind, c.method, c.split, c.metric);
    }
    Ok(ExitCode::SUCCESS)
}

fn run(cli: &Cli) -> Result<ExitCode> {
    match &cli.command {
        Command::Generate(a) => generate(a),
        Command::Solve(a) => solve(a),
        Command::Evaluate(a) => evaluate(a),
        Command::ExpCorr(a) => exp_corr(a),
        Command::ExpSweep(a) => exp_sweep(a),
        Command::ExpTables(a) => exp_tables(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
