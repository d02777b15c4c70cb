//! Online Critical PRM construction, the comparison roadmaps, and queries.
//!
//! A Critical PRM holds `n` nodes: `k = max(1, round(λ ln n))` critical samples
//! picked from `Γn` scored candidates with probability proportional to their
//! predicted criticality, plus `n − k` fresh uniform samples. Uniform samples
//! connect within the usual `r_n`; critical samples connect to every node they
//! can see. The uniform samples come first in node order, so a Critical PRM is
//! the uniform PRM over those samples with the critical nodes appended.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{patch_len, EnvError, Environment, State, MAX_CONSECUTIVE_REJECTIONS};
use crate::learner::{BinaryPredictor, LearnError, MlpModel};
use crate::roadmap::{
    connection_radius, default_gamma, dijkstra, Roadmap, RoadmapConfig, RoadmapError,
    WeightedGraph,
};

/// Standard deviation of the near-obstacle and bridge perturbations.
pub const HYBRID_SIGMA: f64 = 0.05;
/// Mixture weights of the hybrid sampler: uniform, Gaussian, bridge.
pub const HYBRID_WEIGHTS: [f64; 3] = [0.4, 0.3, 0.3];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Roadmap(#[from] RoadmapError),
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("infeasible query: {0}")]
    InfeasibleQuery(String),
    #[error("goal region infeasible: {0}")]
    GoalInfeasible(String),
    #[error("method {0} needs a criticality model")]
    MissingModel(Method),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalPrmConfig {
    /// Total node budget.
    pub n: usize,
    /// Critical sample scale λ.
    pub lambda: f64,
    /// Candidate oversampling factor Γ.
    pub gamma_oversample: f64,
    /// `r_n` scale for local connections.
    pub gamma_radius: f64,
    /// Optional distance cap on critical connections.
    #[serde(default)]
    pub global_radius_cap: Option<f64>,
    pub seed: u64,
}

impl CriticalPrmConfig {
    /// Narrow-passage defaults for the given dimension: Γ = 10 and λ = 2 (2D)
    /// or 10 (3D).
    pub fn new(n: usize, dim: usize, seed: u64) -> Self {
        Self {
            n,
            lambda: if dim == 3 { 10.0 } else { 2.0 },
            gamma_oversample: 10.0,
            gamma_radius: default_gamma(dim),
            global_radius_cap: None,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), PlanError> {
        if self.n < 2 {
            return Err(PlanError::InvalidConfig(format!("n = {} < 2", self.n)));
        }
        if !(self.lambda > 0.0) {
            return Err(PlanError::InvalidConfig(format!("lambda = {} must be positive", self.lambda)));
        }
        if !(self.gamma_oversample >= 1.0) {
            return Err(PlanError::InvalidConfig(format!(
                "Gamma = {} must be at least 1",
                self.gamma_oversample
            )));
        }
        if self.lambda * (self.n as f64).ln() >= self.n as f64 {
            return Err(PlanError::InvalidConfig(format!(
                "lambda * ln(n) = {} must stay below n = {}",
                self.lambda * (self.n as f64).ln(),
                self.n
            )));
        }
        self.roadmap_config().validate()?;
        Ok(())
    }

    pub fn roadmap_config(&self) -> RoadmapConfig {
        RoadmapConfig {
            n: self.n,
            gamma: self.gamma_radius,
            radius_override: None,
        }
    }

    pub fn candidate_count(&self) -> usize {
        (self.gamma_oversample * self.n as f64).round() as usize
    }
}

/// `max(1, round(λ ln n))`.
pub fn critical_count(n: usize, lambda: f64) -> usize {
    ((lambda * (n as f64).ln()).round() as usize).max(1)
}

/// Wall-clock breakdown of a build and/or query, in seconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub sample: f64,
    pub predict: f64,
    pub connect: f64,
    pub search: f64,
}

impl Timing {
    pub fn build_total(&self) -> f64 {
        self.sample + self.predict + self.connect
    }

    pub fn total(&self) -> f64 {
        self.sample + self.predict + self.connect + self.search
    }
}

/// Roadmap construction strategies compared in the benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Uniform,
    Hybrid,
    Critical,
    CriticalLocal,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::Uniform,
        Method::Hybrid,
        Method::Critical,
        Method::CriticalLocal,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Uniform => "uniform",
            Method::Hybrid => "hybrid",
            Method::Critical => "critical",
            Method::CriticalLocal => "critical-local",
        }
    }

    pub fn needs_model(&self) -> bool {
        matches!(self, Method::Critical | Method::CriticalLocal)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown method {s:?}; expected uniform, hybrid, critical or critical-local"))
    }
}

struct CriticalSamples {
    critical: Vec<State>,
    uniform: Vec<State>,
}

fn check_model(env: &Environment, model: &MlpModel) -> Result<(), PlanError> {
    let expected = patch_len(env.dim());
    if model.input_size() != expected {
        return Err(LearnError::ShapeMismatch(format!(
            "model takes {} inputs but {}D patches have {expected}",
            model.input_size(),
            env.dim()
        ))
        .into());
    }
    Ok(())
}

/// Draws `k` indices without replacement with probability proportional to
/// `weights`, renormalising after each draw. Falls back to a uniform choice
/// among the remaining candidates when their total weight is zero.
pub fn weighted_sample_without_replacement<R: Rng + ?Sized>(
    weights: &[f64],
    k: usize,
    rng: &mut R,
) -> Vec<usize> {
    let mut w: Vec<f64> = weights.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect();
    let mut taken = vec![false; w.len()];
    let mut out = Vec::with_capacity(k.min(w.len()));
    for _ in 0..k.min(w.len()) {
        let total: f64 = w.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut chosen = None;
            for (i, &wi) in w.iter().enumerate() {
                if wi <= 0.0 {
                    continue;
                }
                chosen = Some(i);
                if u < wi {
                    break;
                }
                u -= wi;
            }
            chosen.unwrap()
        } else {
            let remaining: Vec<usize> = (0..w.len()).filter(|&i| !taken[i]).collect();
            remaining[rng.random_range(0..remaining.len())]
        };
        taken[pick] = true;
        w[pick] = 0.0;
        out.push(pick);
    }
    out
}

fn draw_critical_samples(
    env: &Environment,
    model: &MlpModel,
    cfg: &CriticalPrmConfig,
    timing: &mut Timing,
) -> Result<CriticalSamples, PlanError> {
    cfg.validate()?;
    check_model(env, model)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let k = critical_count(cfg.n, cfg.lambda);

    let t = Instant::now();
    let candidates = (0..cfg.candidate_count())
        .map(|_| env.sample_free(&mut rng))
        .collect::<Result<Vec<_>, _>>()?;
    timing.sample += t.elapsed().as_secs_f64();

    // patches depend only on the raster cell, so predictions are shared per cell
    let t = Instant::now();
    let raster = env.raster();
    let mut by_cell = vec![f64::NAN; raster.cells().len()];
    let mut predictor = BinaryPredictor::new(model);
    let mut active = Vec::new();
    let mut weights = Vec::with_capacity(candidates.len());
    for x in &candidates {
        let cell = raster.cell_of(x.as_slice());
        let key = raster.flat_index(&cell[..env.dim()]);
        if by_cell[key].is_nan() {
            env.patch_active_at_cell(&cell, &mut active);
            by_cell[key] = predictor.predict_active(&active);
        }
        weights.push(by_cell[key]);
    }
    let picked = weighted_sample_without_replacement(&weights, k, &mut rng);
    timing.predict += t.elapsed().as_secs_f64();

    let t = Instant::now();
    let critical = picked.into_iter().map(|i| candidates[i]).collect();
    let uniform = (0..cfg.n - k)
        .map(|_| env.sample_free(&mut rng))
        .collect::<Result<Vec<_>, _>>()?;
    timing.sample += t.elapsed().as_secs_f64();
    Ok(CriticalSamples { critical, uniform })
}

fn uniform_roadmap(env: &Environment, states: &[State], radius: f64) -> Roadmap {
    let mut rm = Roadmap::new(env.dim());
    for &x in states {
        rm.add_node(x, false);
    }
    let members: Vec<usize> = (0..rm.len()).collect();
    rm.connect_within_radius(env, &members, radius);
    rm
}

/// Appends `critical` states to a copy of `base`, flags them critical and
/// connects each to every node it can see (within `cap`, when given).
///
/// The result contains `base` as a subgraph, so no shortest path can get longer.
pub fn augment_with_critical(
    env: &Environment,
    base: &Roadmap,
    critical: &[State],
    cap: Option<f64>,
) -> Roadmap {
    let mut rm = base.clone();
    for &x in critical {
        let i = rm.add_node(x, true);
        rm.connect_globally(env, i, cap);
    }
    rm
}

fn build_critical(
    env: &Environment,
    model: &MlpModel,
    cfg: &CriticalPrmConfig,
    global: bool,
) -> Result<(Roadmap, Timing), PlanError> {
    let mut timing = Timing::default();
    let samples = draw_critical_samples(env, model, cfg, &mut timing)?;
    let t = Instant::now();
    let radius = connection_radius(&cfg.roadmap_config(), env.dim());
    let rm = if global {
        let base = uniform_roadmap(env, &samples.uniform, radius);
        augment_with_critical(env, &base, &samples.critical, cfg.global_radius_cap)
    } else {
        let mut rm = Roadmap::new(env.dim());
        for &x in &samples.uniform {
            rm.add_node(x, false);
        }
        for &x in &samples.critical {
            rm.add_node(x, true);
        }
        let members: Vec<usize> = (0..rm.len()).collect();
        rm.connect_within_radius(env, &members, radius);
        rm
    };
    timing.connect += t.elapsed().as_secs_f64();
    Ok((rm, timing))
}

/// Critical PRM with globally connected critical samples.
pub fn build_critical_prm(
    env: &Environment,
    model: &MlpModel,
    cfg: &CriticalPrmConfig,
) -> Result<Roadmap, PlanError> {
    Ok(build_critical(env, model, cfg, true)?.0)
}

/// Same samples as [`build_critical_prm`], but critical nodes only get `r_n`
/// connections.
pub fn build_critical_local_prm(
    env: &Environment,
    model: &MlpModel,
    cfg: &CriticalPrmConfig,
) -> Result<Roadmap, PlanError> {
    Ok(build_critical(env, model, cfg, false)?.0)
}

fn build_uniform(env: &Environment, cfg: &RoadmapConfig, seed: u64) -> Result<(Roadmap, Timing), PlanError> {
    cfg.validate()?;
    let mut timing = Timing::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t = Instant::now();
    let states = (0..cfg.n)
        .map(|_| env.sample_free(&mut rng))
        .collect::<Result<Vec<_>, _>>()?;
    timing.sample = t.elapsed().as_secs_f64();
    let t = Instant::now();
    let rm = uniform_roadmap(env, &states, connection_radius(cfg, env.dim()));
    timing.connect = t.elapsed().as_secs_f64();
    Ok((rm, timing))
}

/// Uniform PRM seeded from `seed`.
pub fn build_uniform_prm(env: &Environment, cfg: &RoadmapConfig, seed: u64) -> Result<Roadmap, PlanError> {
    Ok(build_uniform(env, cfg, seed)?.0)
}

fn in_bounds(x: &State) -> bool {
    x.in_unit_box()
}

fn perturb<R: Rng + ?Sized>(x: &State, normal: &Normal<f64>, rng: &mut R) -> State {
    let mut c = [0.0; 3];
    for (i, v) in c.iter_mut().enumerate().take(x.dim()) {
        *v = x[i] + normal.sample(rng);
    }
    State::new(&c[..x.dim()]).expect("finite perturbation")
}

/// One near-obstacle sample: of a uniform point and its Gaussian perturbation,
/// keep the free one when exactly one of them is in collision.
fn gaussian_sample<R: Rng + ?Sized>(env: &Environment, normal: &Normal<f64>, rng: &mut R) -> Option<State> {
    for _ in 0..MAX_CONSECUTIVE_REJECTIONS {
        let a = env.sample_uniform(rng);
        let b = perturb(&a, normal, rng);
        if !in_bounds(&b) {
            continue;
        }
        match (env.is_free(&a), env.is_free(&b)) {
            (true, false) => return Some(a),
            (false, true) => return Some(b),
            _ => {}
        }
    }
    None
}

/// One bridge-test sample: the free midpoint of two nearby colliding points.
fn bridge_sample<R: Rng + ?Sized>(env: &Environment, normal: &Normal<f64>, rng: &mut R) -> Option<State> {
    for _ in 0..MAX_CONSECUTIVE_REJECTIONS {
        let a = env.sample_uniform(rng);
        if env.is_free(&a) {
            continue;
        }
        let b = perturb(&a, normal, rng);
        if !in_bounds(&b) || env.is_free(&b) {
            continue;
        }
        let mid = a.lerp(&b, 0.5);
        if env.is_free(&mid) {
            return Some(mid);
        }
    }
    None
}

/// Hybrid sampling states: fixed quotas of uniform, Gaussian near-obstacle and
/// bridge-test samples. A component that exhausts its rejection budget falls
/// back to a uniform free draw for that sample.
pub fn hybrid_samples<R: Rng + ?Sized>(env: &Environment, n: usize, rng: &mut R) -> Result<Vec<State>, PlanError> {
    let normal = Normal::new(0.0, HYBRID_SIGMA).unwrap();
    let n_uniform = (HYBRID_WEIGHTS[0] * n as f64).round() as usize;
    let n_gauss = ((HYBRID_WEIGHTS[1] * n as f64).round() as usize).min(n - n_uniform);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let x = if i < n_uniform {
            None
        } else if i < n_uniform + n_gauss {
            gaussian_sample(env, &normal, rng)
        } else {
            bridge_sample(env, &normal, rng)
        };
        out.push(match x {
            Some(x) => x,
            None => env.sample_free(rng)?,
        });
    }
    Ok(out)
}

fn build_hybrid(env: &Environment, cfg: &RoadmapConfig, seed: u64) -> Result<(Roadmap, Timing), PlanError> {
    cfg.validate()?;
    let mut timing = Timing::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t = Instant::now();
    let states = hybrid_samples(env, cfg.n, &mut rng)?;
    timing.sample = t.elapsed().as_secs_f64();
    let t = Instant::now();
    let rm = uniform_roadmap(env, &states, connection_radius(cfg, env.dim()));
    timing.connect = t.elapsed().as_secs_f64();
    Ok((rm, timing))
}

/// Hybrid-sampling PRM with `r_n` connections.
pub fn build_hybrid_prm(env: &Environment, cfg: &RoadmapConfig, seed: u64) -> Result<Roadmap, PlanError> {
    Ok(build_hybrid(env, cfg, seed)?.0)
}

/// Builds a roadmap with any [`Method`], returning its timing breakdown.
pub fn build_roadmap(
    method: Method,
    env: &Environment,
    model: Option<&MlpModel>,
    cfg: &CriticalPrmConfig,
) -> Result<(Roadmap, Timing), PlanError> {
    match method {
        Method::Uniform => build_uniform(env, &cfg.roadmap_config(), cfg.seed),
        Method::Hybrid => build_hybrid(env, &cfg.roadmap_config(), cfg.seed),
        Method::Critical | Method::CriticalLocal => {
            let model = model.ok_or(PlanError::MissingModel(method))?;
            build_critical(env, model, cfg, method == Method::Critical)
        }
    }
}

/// Query: start state and a Euclidean goal ball.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanProblem {
    pub x_init: State,
    pub goal_center: State,
    pub goal_radius: f64,
}

impl PlanProblem {
    pub fn in_goal(&self, x: &State) -> bool {
        x.distance(&self.goal_center) <= self.goal_radius
    }

    /// Length of the straight segment from the start to the goal ball.
    pub fn straight_line_cost(&self) -> f64 {
        (self.x_init.distance(&self.goal_center) - self.goal_radius).max(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanResult {
    pub success: bool,
    /// Path length up to the goal ball; infinite on failure.
    #[serde(with = "crate::io::finite_or_null")]
    pub cost: f64,
    /// Start, roadmap waypoints, and the final point inside the goal region.
    pub waypoints: Option<Vec<State>>,
    /// Roadmap nodes visited, in order.
    pub roadmap_nodes: Vec<usize>,
    pub timing: Timing,
}

/// Roadmap plus the start node (index `n`) and goal node (index `n + 1`).
struct QueryGraph<'a> {
    rm: &'a Roadmap,
    init_edges: Vec<(usize, f64)>,
    goal_cost: Vec<Option<f64>>,
    direct_goal: Option<f64>,
}

impl WeightedGraph for QueryGraph<'_> {
    fn node_count(&self) -> usize {
        self.rm.len() + 2
    }

    fn for_each_neighbor<F: FnMut(usize, f64)>(&self, u: usize, mut f: F) {
        let n = self.rm.len();
        if u == n {
            for &(v, w) in &self.init_edges {
                f(v, w);
            }
            if let Some(w) = self.direct_goal {
                f(n + 1, w);
            }
        } else if u < n {
            self.rm.for_each_neighbor(u, &mut f);
            if let Some(w) = self.goal_cost[u] {
                f(n + 1, w);
            }
        }
    }
}

/// Point where the segment from `from` to the goal center enters the goal ball.
fn goal_entry(from: &State, prob: &PlanProblem) -> (State, f64) {
    let d = from.distance(&prob.goal_center);
    if d <= prob.goal_radius {
        return (*from, 0.0);
    }
    let t = (d - prob.goal_radius) / d;
    (from.lerp(&prob.goal_center, t), d - prob.goal_radius)
}

/// Checks that the start is free and the goal center is a free state.
pub fn validate_query(env: &Environment, prob: &PlanProblem) -> Result<(), PlanError> {
    if prob.x_init.dim() != env.dim() || prob.goal_center.dim() != env.dim() {
        return Err(EnvError::DimensionMismatch {
            expected: env.dim(),
            got: if prob.x_init.dim() != env.dim() {
                prob.x_init.dim()
            } else {
                prob.goal_center.dim()
            },
        }
        .into());
    }
    if !(prob.goal_radius > 0.0) {
        return Err(PlanError::GoalInfeasible(format!(
            "goal radius {} must be positive",
            prob.goal_radius
        )));
    }
    if !prob.x_init.in_unit_box() || !env.is_free(&prob.x_init) {
        return Err(PlanError::InfeasibleQuery(format!(
            "start {:?} is not in free space",
            prob.x_init
        )));
    }
    if !prob.goal_center.in_unit_box() || !env.is_free(&prob.goal_center) {
        return Err(PlanError::GoalInfeasible(format!(
            "goal center {:?} is not in free space",
            prob.goal_center
        )));
    }
    Ok(())
}

/// Answers a query on a built roadmap without modifying it.
///
/// The start connects to every roadmap node with a free segment. The goal
/// connects the same way through its center, with the cost of such an edge
/// counted only up to the ball boundary; roadmap nodes inside the ball are
/// terminals as well. Dijkstra stops at the cheapest terminal.
pub fn plan(env: &Environment, rm: &Roadmap, prob: &PlanProblem) -> Result<PlanResult, PlanError> {
    validate_query(env, prob)?;

    let mut timing = Timing::default();
    let t = Instant::now();
    let n = rm.len();
    let mut init_edges = Vec::new();
    let mut goal_cost = vec![None; n];
    for (i, x) in rm.nodes().iter().enumerate() {
        if env.is_segment_free(&prob.x_init, x) {
            init_edges.push((i, prob.x_init.distance(x)));
        }
        if !prob.in_goal(x) {
            let (entry, cost) = goal_entry(x, prob);
            if env.is_segment_free(x, &entry) {
                goal_cost[i] = Some(cost);
            }
        }
    }
    let direct_goal = {
        let (entry, cost) = goal_entry(&prob.x_init, prob);
        env.is_segment_free(&prob.x_init, &entry).then_some(cost)
    };
    let graph = QueryGraph {
        rm,
        init_edges,
        goal_cost,
        direct_goal,
    };
    timing.connect = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let (tree, hit) = dijkstra(&graph, n, |u| u == n + 1 || (u < n && prob.in_goal(rm.node(u))));
    timing.search = t.elapsed().as_secs_f64();

    let Some(terminal) = hit else {
        return Ok(PlanResult {
            success: false,
            cost: f64::INFINITY,
            waypoints: None,
            roadmap_nodes: Vec::new(),
            timing,
        });
    };
    let seq = tree.path_to(terminal).expect("terminal is reachable").nodes;
    let mut waypoints = Vec::with_capacity(seq.len() + 1);
    let mut roadmap_nodes = Vec::new();
    for (k, &u) in seq.iter().enumerate() {
        if u == n {
            waypoints.push(prob.x_init);
        } else if u == n + 1 {
            let prev = if k == 1 { prob.x_init } else { *rm.node(seq[k - 1]) };
            waypoints.push(goal_entry(&prev, prob).0);
        } else {
            waypoints.push(*rm.node(u));
            roadmap_nodes.push(u);
        }
    }
    Ok(PlanResult {
        success: true,
        cost: tree.dist[terminal],
        waypoints: Some(waypoints),
        roadmap_nodes,
        timing,
    })
}
