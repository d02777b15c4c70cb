//! Benchmark harness: success rate and path cost against wall time for each
//! roadmap method over a family of environments.
//!
//! A cell is one `(environment, method, n, trial)` combination: one roadmap
//! build followed by every query problem of that environment. Cells run on the
//! rayon pool; the work inside a cell is sequential so its timings are
//! comparable across cells.

use std::collections::BTreeMap;
use std::time::Instant;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cprm::{build_roadmap, plan, CriticalPrmConfig, Method, PlanError, PlanProblem};
use crate::env::{generate_narrow_passage, EnvError, Environment, NarrowPassageParams};
use crate::learner::MlpModel;

pub const DEFAULT_GOAL_RADIUS: f64 = 0.02;
const PROBLEM_STREAM: u64 = 0x70726f62;
const ROADMAP_STREAM: u64 = 0x726d6170;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid bench config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Plan(#[from] PlanError),
}

/// Deterministic child seed: the first output of ChaCha8 on `stream`.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(base);
    rng.set_stream(stream);
    rng.next_u64()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EnvFamily {
    Empty { dim: usize },
    NarrowPassage(NarrowPassageParams),
}

impl EnvFamily {
    pub fn dim(&self) -> usize {
        match self {
            EnvFamily::Empty { dim } => *dim,
            EnvFamily::NarrowPassage(p) => p.dim,
        }
    }

    pub fn generate(&self, seed: u64) -> Result<Environment, EnvError> {
        match self {
            EnvFamily::Empty { dim } => {
                let env = Environment::empty(*dim)?;
                Environment::new(*dim, env.obstacles().to_vec(), seed)
            }
            EnvFamily::NarrowPassage(p) => generate_narrow_passage(p, seed),
        }
    }
}

fn default_problems() -> usize {
    50
}

fn default_trials() -> usize {
    1
}

fn default_goal_radius() -> f64 {
    DEFAULT_GOAL_RADIUS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub family: EnvFamily,
    pub methods: Vec<Method>,
    /// Ascending node budgets.
    pub n_values: Vec<usize>,
    /// Environment seeds; one environment per seed.
    pub env_seeds: Vec<u64>,
    #[serde(default = "default_problems")]
    pub problems_per_env: usize,
    /// Independent roadmap builds per `(environment, method, n)`.
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_goal_radius")]
    pub goal_radius: f64,
    /// Critical sample scale; the dimension default when absent.
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default)]
    pub gamma_oversample: Option<f64>,
    #[serde(default)]
    pub gamma_radius: Option<f64>,
    #[serde(default)]
    pub global_radius_cap: Option<f64>,
    /// Model file for the critical methods; resolved by the caller.
    #[serde(default)]
    pub model: Option<String>,
}

impl BenchConfig {
    pub fn new(family: EnvFamily, methods: Vec<Method>, n_values: Vec<usize>, env_seeds: Vec<u64>) -> Self {
        Self {
            family,
            methods,
            n_values,
            env_seeds,
            problems_per_env: default_problems(),
            trials: 1,
            seed: 0,
            goal_radius: DEFAULT_GOAL_RADIUS,
            lambda: None,
            gamma_oversample: None,
            gamma_radius: None,
            global_radius_cap: None,
            model: None,
        }
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        let bad = |m: String| Err(BenchError::InvalidConfig(m));
        if self.methods.is_empty() {
            return bad("no methods".into());
        }
        if self.n_values.is_empty() || self.n_values.windows(2).any(|w| w[0] >= w[1]) {
            return bad(format!("n_values {:?} must be nonempty and strictly ascending", self.n_values));
        }
        if self.env_seeds.is_empty() {
            return bad("no environment seeds".into());
        }
        if self.problems_per_env == 0 {
            return bad("problems_per_env must be at least 1".into());
        }
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if !(self.goal_radius > 0.0) {
            return bad(format!("goal radius {} must be positive", self.goal_radius));
        }
        for &n in &self.n_values {
            self.prm_config(n, 0).validate()?;
        }
        Ok(())
    }

    /// Roadmap parameters for one cell; every method shares them.
    pub fn prm_config(&self, n: usize, seed: u64) -> CriticalPrmConfig {
        let mut cfg = CriticalPrmConfig::new(n, self.family.dim(), seed);
        if let Some(l) = self.lambda {
            cfg.lambda = l;
        }
        if let Some(g) = self.gamma_oversample {
            cfg.gamma_oversample = g;
        }
        if let Some(g) = self.gamma_radius {
            cfg.gamma_radius = g;
        }
        cfg.global_radius_cap = self.global_radius_cap;
        cfg
    }

    /// The query set for `env`, shared by every method and `n`.
    pub fn problems(&self, env: &Environment) -> Result<Vec<PlanProblem>, EnvError> {
        generate_problems(
            env,
            self.problems_per_env,
            derive_seed(self.seed ^ PROBLEM_STREAM, env.seed()),
            self.goal_radius,
        )
    }

    /// Seed of the roadmap built for `(env_seed, n, trial)`; independent of
    /// the method, so all methods see the same random stream.
    pub fn roadmap_seed(&self, env_seed: u64, n: usize, trial: usize) -> u64 {
        let base = derive_seed(self.seed ^ ROADMAP_STREAM, env_seed);
        derive_seed(base, ((n as u64) << 16) | trial as u64)
    }
}

/// Seeded query problems: free start and goal center, start outside the
/// goal ball.
pub fn generate_problems(
    env: &Environment,
    count: usize,
    seed: u64,
    goal_radius: f64,
) -> Result<Vec<PlanProblem>, EnvError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let x_init = env.sample_free(&mut rng)?;
        let goal_center = env.sample_free(&mut rng)?;
        if x_init.distance(&goal_center) > goal_radius {
            out.push(PlanProblem {
                x_init,
                goal_center,
                goal_radius,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRecord {
    pub method: Method,
    pub env_seed: u64,
    pub problem_id: usize,
    pub n: usize,
    /// Full build time of the roadmap this problem was solved on.
    pub build_time_s: f64,
    pub query_time_s: f64,
    pub success: bool,
    pub cost: f64,
    /// Number of problems that share the roadmap (the amortization factor).
    pub problems_in_build: usize,
}

impl BenchRecord {
    pub fn total_time_s(&self, amortized: bool) -> f64 {
        let build = if amortized {
            self.build_time_s / self.problems_in_build.max(1) as f64
        } else {
            self.build_time_s
        };
        build + self.query_time_s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub method: Method,
    pub n: usize,
    pub mean_time_s: f64,
    pub success_rate: f64,
    /// Mean cost over successful problems; `None` when nothing succeeded.
    pub mean_cost: Option<f64>,
}

struct Cell {
    env_idx: usize,
    method: Method,
    n: usize,
    trial: usize,
}

/// Runs every cell and returns records ordered by environment, method, `n`,
/// trial and problem.
pub fn run_bench(cfg: &BenchConfig, model: Option<&MlpModel>) -> Result<Vec<BenchRecord>, BenchError> {
    cfg.validate()?;
    if let Some(&m) = cfg.methods.iter().find(|m| m.needs_model()) {
        if model.is_none() {
            return Err(PlanError::MissingModel(m).into());
        }
    }
    let envs = cfg
        .env_seeds
        .iter()
        .map(|&s| cfg.family.generate(s))
        .collect::<Result<Vec<_>, _>>()?;
    let problems = envs
        .iter()
        .map(|env| cfg.problems(env))
        .collect::<Result<Vec<_>, _>>()?;

    let mut cells = Vec::new();
    for env_idx in 0..envs.len() {
        for &method in &cfg.methods {
            for &n in &cfg.n_values {
                for trial in 0..cfg.trials {
                    cells.push(Cell {
                        env_idx,
                        method,
                        n,
                        trial,
                    });
                }
            }
        }
    }

    let per_cell: Vec<Vec<BenchRecord>> = cells
        .par_iter()
        .map(|c| run_cell(cfg, model, &envs[c.env_idx], &problems[c.env_idx], c))
        .collect::<Result<_, _>>()?;
    Ok(per_cell.into_iter().flatten().collect())
}

fn run_cell(
    cfg: &BenchConfig,
    model: Option<&MlpModel>,
    env: &Environment,
    problems: &[PlanProblem],
    cell: &Cell,
) -> Result<Vec<BenchRecord>, BenchError> {
    let prm_cfg = cfg.prm_config(cell.n, cfg.roadmap_seed(env.seed(), cell.n, cell.trial));
    let t = Instant::now();
    let built = build_roadmap(cell.method, env, model, &prm_cfg);
    let build_time_s = t.elapsed().as_secs_f64();
    let record = |problem_id, query_time_s, success, cost| BenchRecord {
        method: cell.method,
        env_seed: env.seed(),
        problem_id,
        n: cell.n,
        build_time_s,
        query_time_s,
        success,
        cost,
        problems_in_build: problems.len(),
    };
    let rm = match built {
        Ok((rm, _)) => rm,
        Err(PlanError::Env(EnvError::SamplingExhausted(_))) => {
            return Ok((0..problems.len())
                .map(|i| record(i, 0.0, false, f64::INFINITY))
                .collect());
        }
        Err(e) => return Err(e.into()),
    };
    problems
        .iter()
        .enumerate()
        .map(|(i, prob)| {
            let t = Instant::now();
            let res = plan(env, &rm, prob)?;
            Ok(record(i, t.elapsed().as_secs_f64(), res.success, res.cost))
        })
        .collect()
}

/// One curve point per `(method, n)`, sorted by method then `n`.
///
/// With `amortized`, each record's build time is divided by the number of
/// problems that shared the roadmap.
pub fn aggregate_curves(records: &[BenchRecord], amortized: bool) -> Vec<CurvePoint> {
    let mut groups: BTreeMap<(Method, usize), Vec<&BenchRecord>> = BTreeMap::new();
    for r in records {
        groups.entry((r.method, r.n)).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|((method, n), rs)| {
            let count = rs.len() as f64;
            let successes: Vec<f64> = rs.iter().filter(|r| r.success).map(|r| r.cost).collect();
            CurvePoint {
                method,
                n,
                mean_time_s: rs.iter().map(|r| r.total_time_s(amortized)).sum::<f64>() / count,
                success_rate: successes.len() as f64 / count,
                mean_cost: (!successes.is_empty())
                    .then(|| successes.iter().sum::<f64>() / successes.len() as f64),
            }
        })
        .collect()
}

/// Restores `problems_in_build` on records read back from CSV: records from
/// one build share method, environment, `n` and the exact build time.
pub fn infer_amortization(records: &mut [BenchRecord]) {
    let mut counts: BTreeMap<(Method, u64, usize, u64), usize> = BTreeMap::new();
    let key = |r: &BenchRecord| (r.method, r.env_seed, r.n, r.build_time_s.to_bits());
    for r in records.iter() {
        *counts.entry(key(r)).or_default() += 1;
    }
    for r in records.iter_mut() {
        r.problems_in_build = counts[&key(r)];
    }
}

/// Smallest-`n` point of `method` whose success rate reaches `rate`.
pub fn first_reaching(curves: &[CurvePoint], method: Method, rate: f64) -> Option<&CurvePoint> {
    curves
        .iter()
        .filter(|c| c.method == method && c.success_rate >= rate)
        .min_by_key(|c| c.n)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(method: Method, n: usize, build: f64, query: f64, success: bool, cost: f64) -> BenchRecord {
        BenchRecord {
            method,
            env_seed: 1,
            problem_id: 0,
            n,
            build_time_s: build,
            query_time_s: query,
            success,
            cost: if success { cost } else { f64::INFINITY },
            problems_in_build: 2,
        }
    }

    #[test]
    fn aggregation_matches_hand_computation() {
        let records = vec![
            rec(Method::Uniform, 100, 1.0, 0.1, true, 1.0),
            rec(Method::Uniform, 100, 1.0, 0.3, false, 0.0),
            rec(Method::Uniform, 200, 2.0, 0.2, true, 2.0),
            rec(Method::Uniform, 200, 2.0, 0.4, true, 4.0),
            rec(Method::Critical, 100, 4.0, 0.0, true, 1.5),
            rec(Method::Critical, 100, 4.0, 0.2, true, 2.5),
        ];
        let un = aggregate_curves(&records, false);
        assert_eq!(un.len(), 3);
        // BTreeMap order: Uniform < Critical by declaration order
        assert_eq!((un[0].method, un[0].n), (Method::Uniform, 100));
        assert!((un[0].mean_time_s - 1.2).abs() < 1e-12);
        assert_eq!(un[0].success_rate, 0.5);
        assert_eq!(un[0].mean_cost, Some(1.0));
        assert!((un[1].mean_time_s - 2.3).abs() < 1e-12);
        assert_eq!(un[1].mean_cost, Some(3.0));
        assert_eq!(un[2].method, Method::Critical);
        assert!((un[2].mean_time_s - 4.1).abs() < 1e-12);
        assert_eq!(un[2].mean_cost, Some(2.0));

        let am = aggregate_curves(&records, true);
        assert!((am[0].mean_time_s - 0.7).abs() < 1e-12);
        assert!((am[1].mean_time_s - 1.3).abs() < 1e-12);
        assert!((am[2].mean_time_s - 2.1).abs() < 1e-12);
    }

    #[test]
    fn all_successful_unit_cost() {
        let records: Vec<_> = (0..4).map(|_| rec(Method::Hybrid, 50, 0.0, 0.0, true, 1.0)).collect();
        let c = aggregate_curves(&records, true);
        assert_eq!((c[0].success_rate, c[0].mean_cost), (1.0, Some(1.0)));
    }

    #[test]
    fn zero_successes_have_no_cost() {
        let records = vec![rec(Method::Uniform, 10, 0.0, 0.0, false, 0.0)];
        let c = aggregate_curves(&records, false);
        assert_eq!((c[0].success_rate, c[0].mean_cost), (0.0, None));
    }

    #[test]
    fn config_validation() {
        let mut cfg = BenchConfig::new(EnvFamily::Empty { dim: 2 }, vec![Method::Uniform], vec![200, 100], vec![0]);
        assert!(cfg.validate().is_err());
        cfg.n_values = vec![100, 200];
        cfg.validate().unwrap();
        cfg.problems_per_env = 0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn config_json_defaults() {
        let cfg: BenchConfig = serde_json::from_str(
            r#"{"family":{"kind":"narrow-passage","dim":2,"num_walls":3,"gaps_per_wall":2,"gap_width":0.03},
                "methods":["uniform","critical-local"],"n_values":[100],"env_seeds":[1,2]}"#,
        )
        .unwrap();
        assert_eq!(cfg.problems_per_env, 50);
        assert_eq!(cfg.goal_radius, 0.02);
        assert_eq!(cfg.methods, vec![Method::Uniform, Method::CriticalLocal]);
    }

    #[test]
    fn derive_seed_separates_streams() {
        assert_eq!(derive_seed(1, 2), derive_seed(1, 2));
        assert_ne!(derive_seed(1, 2), derive_seed(1, 3));
        assert_ne!(derive_seed(1, 2), derive_seed(2, 2));
    }

    #[test]
    fn roadmap_seed_ignores_method() {
        let cfg = BenchConfig::new(EnvFamily::Empty { dim: 2 }, vec![Method::Uniform], vec![100], vec![0]);
        assert_eq!(cfg.roadmap_seed(3, 100, 0), cfg.roadmap_seed(3, 100, 0));
        assert_ne!(cfg.roadmap_seed(3, 100, 0), cfg.roadmap_seed(3, 200, 0));
        assert_ne!(cfg.roadmap_seed(3, 100, 0), cfg.roadmap_seed(3, 100, 1));
    }

    #[test]
    fn amortization_is_recovered() {
        let mut records = vec![
            rec(Method::Uniform, 100, 1.0, 0.1, true, 1.0),
            rec(Method::Uniform, 100, 1.0, 0.1, true, 1.0),
            rec(Method::Uniform, 100, 3.0, 0.1, true, 1.0),
        ];
        records.iter_mut().for_each(|r| r.problems_in_build = 1);
        infer_amortization(&mut records);
        assert_eq!(
            records.iter().map(|r| r.problems_in_build).collect::<Vec<_>>(),
            vec![2, 2, 1]
        );
    }
}
