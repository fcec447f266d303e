//! Synthetic grid shortest-path instances and λ-scaled budgets.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BudgetKind, Dataset};
use crate::space::{Space, SpaceSpec};

pub const BASIS_SCENARIOS: usize = 3;
pub const DEFAULT_TEST_SAMPLES: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceSpec {
    pub grid_side: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub seed: u64,
    /// Range of the lower interval end per basis scenario and edge.
    pub low_range: (f64, f64),
    /// Range of the interval width.
    pub width_range: (f64, f64),
}

impl InstanceSpec {
    pub fn new(grid_side: usize, n_train: usize, n_test: usize, seed: u64) -> Self {
        InstanceSpec { grid_side, n_train, n_test, seed, low_range: (1.0, 10.0), width_range: (0.0, 10.0) }
    }

    fn validate(&self) -> Result<()> {
        if self.grid_side < 2 {
            return Err(Error::InvalidConfig(format!("grid side must be at least 2, got {}", self.grid_side)));
        }
        if self.n_train == 0 {
            return Err(Error::InvalidConfig("at least one training sample is needed".into()));
        }
        let ok = |(a, b): (f64, f64)| a.is_finite() && b.is_finite() && 0.0 <= a && a <= b;
        if !ok(self.low_range) || !ok(self.width_range) {
            return Err(Error::InvalidConfig("interval ranges must be finite, nonnegative and ordered".into()));
        }
        Ok(())
    }
}

/// Training and test costs plus the basis scenarios they were drawn from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    /// Side of the grid graph; absent for instances on another space.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_side: Option<usize>,
    pub seed: u64,
    /// `[scenario][edge] = [low, high]`
    pub basis_scenarios: Vec<Vec<(f64, f64)>>,
    pub train: Vec<Vec<f64>>,
    pub test: Vec<Vec<f64>>,
    /// Explicit feasible space overriding the grid.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub space: Option<SpaceSpec>,
}

impl Instance {
    pub fn space_spec(&self) -> Result<SpaceSpec> {
        match (&self.space, self.grid_side) {
            (Some(spec), _) => Ok(spec.clone()),
            (None, Some(side)) => Ok(SpaceSpec::Grid { side }),
            (None, None) => Err(Error::InvalidConfig("instance names neither a grid side nor a space".into())),
        }
    }

    pub fn space(&self) -> Result<Space> {
        self.space_spec()?.build()
    }

    pub fn train_dataset(&self) -> Result<Dataset> {
        Dataset::new(self.train.clone())
    }

    /// `None` when the instance has no test samples.
    pub fn test_dataset(&self) -> Result<Option<Dataset>> {
        if self.test.is_empty() {
            return Ok(None);
        }
        Dataset::new(self.test.clone()).map(Some)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    /// The two-path example as an instance without test data.
    pub fn motivating_example() -> Self {
        Instance {
            grid_side: None,
            seed: 0,
            basis_scenarios: Vec::new(),
            train: crate::fixtures::motivating_dataset().samples().to_vec(),
            test: Vec::new(),
            space: Some(crate::fixtures::motivating_space_spec()),
        }
    }
}

fn draw_samples(rng: &mut ChaCha8Rng, basis: &[Vec<(f64, f64)>], count: usize) -> Vec<Vec<f64>> {
    (0..count)
        .map(|_| {
            let scenario = &basis[rng.gen_range(0..basis.len())];
            scenario.iter().map(|&(lo, hi)| if hi > lo { rng.gen_range(lo..=hi) } else { lo }).collect()
        })
        .collect()
}

fn uniform(rng: &mut ChaCha8Rng, (a, b): (f64, f64)) -> f64 {
    if b > a {
        rng.gen_range(a..=b)
    } else {
        a
    }
}

/// Draws basis scenarios, then training and test samples. Each part uses
/// its own stream of the seeded generator, so the training data does not
/// depend on the number of test samples.
pub fn generate_instance(spec: &InstanceSpec) -> Result<Instance> {
    spec.validate()?;
    let n_edges = 2 * spec.grid_side * (spec.grid_side - 1);
    let base = ChaCha8Rng::seed_from_u64(spec.seed);
    let stream = |id: u64| {
        let mut rng = base.clone();
        rng.set_stream(id);
        rng
    };
    let mut scen_rng = stream(0);
    let basis: Vec<Vec<(f64, f64)>> = (0..BASIS_SCENARIOS)
        .map(|_| {
            (0..n_edges)
                .map(|_| {
                    let lo = uniform(&mut scen_rng, spec.low_range);
                    (lo, lo + uniform(&mut scen_rng, spec.width_range))
                })
                .collect()
        })
        .collect();
    let train = draw_samples(&mut stream(1), &basis, spec.n_train);
    let test = draw_samples(&mut stream(2), &basis, spec.n_test);
    Ok(Instance { grid_side: Some(spec.grid_side), seed: spec.seed, basis_scenarios: basis, train, test, space: None })
}

/// How the global budget relates to the local one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Coupling {
    /// `Γ_glob = N Γ_loc`
    #[serde(rename = "N")]
    PerSample,
    /// `Γ_glob = Γ_loc`
    #[serde(rename = "1")]
    Shared,
}

impl std::fmt::Display for Coupling {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Coupling::PerSample => "N",
            Coupling::Shared => "1",
        })
    }
}

impl std::str::FromStr for Coupling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "N" | "n" => Ok(Coupling::PerSample),
            "1" => Ok(Coupling::Shared),
            other => Err(Error::InvalidConfig(format!("unknown coupling {other:?}, expected N or 1"))),
        }
    }
}

/// `Γ_loc = λ D M` with `M` the largest per-item range of `dataset`; the
/// global budget scales it by `N` or not according to `coupling`.
pub fn compute_budget(dataset: &Dataset, lambda: f64, depth: usize, kind: BudgetKind, coupling: Coupling) -> Result<f64> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::InvalidConfig(format!("λ must be finite and nonnegative, got {lambda}")));
    }
    let local = lambda * depth as f64 * dataset.max_item_range();
    Ok(match (kind, coupling) {
        (BudgetKind::Local, _) | (BudgetKind::Global, Coupling::Shared) => local,
        (BudgetKind::Global, Coupling::PerSample) => dataset.len() as f64 * local,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::space::FeasibleSpace;

    #[test]
    fn budgets_on_motivating_data() {
        let ds = fixtures::motivating_dataset();
        let loc = compute_budget(&ds, 0.05, 2, BudgetKind::Local, Coupling::PerSample).unwrap();
        assert!((loc - 1.0).abs() < 1e-12);
        let glob = compute_budget(&ds, 0.05, 2, BudgetKind::Global, Coupling::PerSample).unwrap();
        assert!((glob - 5.0).abs() < 1e-12);
        assert_eq!(compute_budget(&ds, 0.0, 2, BudgetKind::Global, Coupling::Shared).unwrap(), 0.0);
    }

    #[test]
    fn generation_shape_and_determinism() {
        let spec = InstanceSpec::new(4, 5, 7, 7);
        let a = generate_instance(&spec).unwrap();
        assert!(a.train.iter().chain(&a.test).all(|c| c.len() == 24));
        assert_eq!(a, generate_instance(&spec).unwrap());
        let fewer = generate_instance(&InstanceSpec::new(4, 5, 0, 7)).unwrap();
        assert_eq!(fewer.train, a.train);
        assert!(fewer.test.is_empty());
    }

    #[test]
    fn samples_stay_inside_basis_intervals() {
        let inst = generate_instance(&InstanceSpec::new(3, 2000, 0, 1)).unwrap();
        for c in &inst.train {
            for (e, v) in c.iter().enumerate() {
                assert!(inst.basis_scenarios.iter().any(|s| s[e].0 <= *v && *v <= s[e].1));
                assert!(*v >= 0.0);
            }
        }
    }

    #[test]
    fn json_round_trip() {
        let inst = generate_instance(&InstanceSpec::new(2, 2, 1, 3)).unwrap();
        let text = serde_json::to_string(&inst).unwrap();
        assert!(text.contains("\"grid_side\":2"));
        assert_eq!(serde_json::from_str::<Instance>(&text).unwrap(), inst);
        let example = Instance::motivating_example();
        let back: Instance = serde_json::from_str(&serde_json::to_string(&example).unwrap()).unwrap();
        assert_eq!(back.space().unwrap().count(), Some(2));
    }
}
