//! Probabilistic roadmaps: radius-connected sample graphs over free space,
//! shortest-path queries and collision-aware path shortcutting.

mod index;
mod search;

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{EnvError, Environment, State};

pub use index::GridIndex;
pub(crate) use search::{dijkstra, WeightedGraph};
pub use search::ShortestPathTree;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RoadmapError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("invalid roadmap config: {0}")]
    InvalidConfig(String),
    #[error("node index {index} out of range for a roadmap with {len} nodes")]
    NodeOutOfRange { index: usize, len: usize },
    #[error("invalid roadmap: {0}")]
    Invalid(String),
}

/// Volume of the unit ball in `dim` dimensions.
pub fn unit_ball_volume(dim: usize) -> f64 {
    match dim {
        1 => 2.0,
        2 => PI,
        3 => 4.0 / 3.0 * PI,
        d => {
            let d = d as f64;
            PI.powf(d / 2.0) / gamma_half_integer(d / 2.0 + 1.0)
        }
    }
}

fn gamma_half_integer(x: f64) -> f64 {
    // Γ on integers and half-integers, enough for unit_ball_volume
    if x == 1.0 {
        1.0
    } else if x == 0.5 {
        PI.sqrt()
    } else {
        (x - 1.0) * gamma_half_integer(x - 1.0)
    }
}

/// Radius scale `1.1 · 2 (1 + 1/d)^(1/d) (μ(X_free)/ζ_d)^(1/d)` with the free
/// volume bounded above by 1.
pub fn default_gamma(dim: usize) -> f64 {
    let d = dim as f64;
    1.1 * 2.0 * (1.0 + 1.0 / d).powf(1.0 / d) * (1.0 / unit_ball_volume(dim)).powf(1.0 / d)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoadmapConfig {
    pub n: usize,
    pub gamma: f64,
    #[serde(default)]
    pub radius_override: Option<f64>,
}

impl RoadmapConfig {
    pub fn new(n: usize, dim: usize) -> Self {
        Self {
            n,
            gamma: default_gamma(dim),
            radius_override: None,
        }
    }

    pub fn validate(&self) -> Result<(), RoadmapError> {
        if self.n < 2 {
            return Err(RoadmapError::InvalidConfig(format!("n = {} < 2", self.n)));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(RoadmapError::InvalidConfig(format!(
                "gamma = {} must be positive",
                self.gamma
            )));
        }
        if let Some(r) = self.radius_override {
            if !(r > 0.0) {
                return Err(RoadmapError::InvalidConfig(format!(
                    "radius override {r} must be positive"
                )));
            }
        }
        Ok(())
    }
}

/// `r_n = γ (ln n / n)^(1/d)`, or the override when one is set.
pub fn connection_radius(cfg: &RoadmapConfig, dim: usize) -> f64 {
    if let Some(r) = cfg.radius_override {
        return r;
    }
    let n = cfg.n as f64;
    cfg.gamma * (n.ln() / n).powf(1.0 / dim as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub to: usize,
    pub cost: f64,
}

/// Node sequence through a roadmap with its summed Euclidean length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Path {
    pub nodes: Vec<usize>,
    pub cost: f64,
}

/// Undirected roadmap graph. Adjacency is kept symmetric with Euclidean edge
/// costs; every node carries a critical flag.
#[derive(Debug, Clone, PartialEq)]
pub struct Roadmap {
    dim: usize,
    nodes: Vec<State>,
    adjacency: Vec<Vec<Edge>>,
    critical: Vec<bool>,
}

impl Roadmap {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            nodes: Vec::new(),
            adjacency: Vec::new(),
            critical: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[State] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> &State {
        &self.nodes[i]
    }

    pub fn neighbors(&self, i: usize) -> &[Edge] {
        &self.adjacency[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adjacency[i].len()
    }

    pub fn is_critical(&self, i: usize) -> bool {
        self.critical[i]
    }

    pub fn critical_flags(&self) -> &[bool] {
        &self.critical
    }

    pub fn critical_count(&self) -> usize {
        self.critical.iter().filter(|&&c| c).count()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn add_node(&mut self, x: State, critical: bool) -> usize {
        debug_assert_eq!(x.dim(), self.dim);
        self.nodes.push(x);
        self.adjacency.push(Vec::new());
        self.critical.push(critical);
        self.nodes.len() - 1
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adjacency[i].iter().any(|e| e.to == j)
    }

    /// Inserts the undirected edge `i`–`j` unless it already exists.
    /// Returns whether an edge was added.
    pub fn add_edge(&mut self, i: usize, j: usize) -> bool {
        if i == j || self.has_edge(i, j) {
            return false;
        }
        let cost = self.nodes[i].distance(&self.nodes[j]);
        self.adjacency[i].push(Edge { to: j, cost });
        self.adjacency[j].push(Edge { to: i, cost });
        true
    }

    pub(crate) fn push_edge_unchecked(&mut self, i: usize, j: usize) {
        let cost = self.nodes[i].distance(&self.nodes[j]);
        self.adjacency[i].push(Edge { to: j, cost });
        self.adjacency[j].push(Edge { to: i, cost });
    }

    /// Every undirected edge once, as `(i, j, cost)` with `i < j`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.adjacency.iter().enumerate().flat_map(|(i, adj)| {
            adj.iter()
                .filter(move |e| i < e.to)
                .map(move |e| (i, e.to, e.cost))
        })
    }

    pub fn edge_cost(&self, i: usize, j: usize) -> Option<f64> {
        self.adjacency[i].iter().find(|e| e.to == j).map(|e| e.cost)
    }

    pub(crate) fn check_index(&self, i: usize) -> Result<(), RoadmapError> {
        if i >= self.len() {
            return Err(RoadmapError::NodeOutOfRange {
                index: i,
                len: self.len(),
            });
        }
        Ok(())
    }

    /// Connects every pair of `members` within `radius` whose segment is free.
    /// Pairs that already share an edge are skipped.
    pub(crate) fn connect_within_radius(&mut self, env: &Environment, members: &[usize], radius: f64) {
        let points: Vec<State> = members.iter().map(|&i| self.nodes[i]).collect();
        let index = GridIndex::new(&points, self.dim, radius);
        for (a, p) in points.iter().enumerate() {
            for b in index.within_radius(&points, p) {
                if b <= a {
                    continue;
                }
                let (i, j) = (members[a], members[b]);
                if !self.has_edge(i, j) && env.is_segment_free(p, &points[b]) {
                    self.push_edge_unchecked(i, j);
                }
            }
        }
    }

    /// Connects node `i` to every other node within `cap` (all nodes when
    /// `cap` is `None`) whose segment is free.
    pub(crate) fn connect_globally(&mut self, env: &Environment, i: usize, cap: Option<f64>) {
        let cap2 = cap.map(|c| c * c);
        for j in 0..self.len() {
            if j == i || self.has_edge(i, j) {
                continue;
            }
            let (a, b) = (self.nodes[i], self.nodes[j]);
            if cap2.is_some_and(|c2| a.distance_squared(&b) > c2) {
                continue;
            }
            if env.is_segment_free(&a, &b) {
                self.push_edge_unchecked(i, j);
            }
        }
    }

    /// Checks adjacency symmetry, edge costs and node dimensions.
    pub fn validate(&self) -> Result<(), RoadmapError> {
        for (i, adj) in self.adjacency.iter().enumerate() {
            for e in adj {
                if e.to >= self.len() || e.to == i {
                    return Err(RoadmapError::Invalid(format!("bad edge {i}->{}", e.to)));
                }
                match self.edge_cost(e.to, i) {
                    Some(w) if w == e.cost => {}
                    _ => {
                        return Err(RoadmapError::Invalid(format!(
                            "edge {i}->{} lacks a matching reverse edge",
                            e.to
                        )))
                    }
                }
                let d = self.nodes[i].distance(&self.nodes[e.to]);
                if (e.cost - d).abs() > 1e-12 * d.max(f64::MIN_POSITIVE) {
                    return Err(RoadmapError::Invalid(format!(
                        "edge {i}->{} cost {} differs from distance {d}",
                        e.to, e.cost
                    )));
                }
            }
        }
        if self.nodes.iter().any(|x| x.dim() != self.dim) {
            return Err(RoadmapError::Invalid("node dimension mismatch".into()));
        }
        Ok(())
    }
}

/// Standard PRM: `n` free samples, each pair within `r_n` joined when the
/// straight segment is collision free.
pub fn build_prm<R: Rng + ?Sized>(
    env: &Environment,
    cfg: &RoadmapConfig,
    rng: &mut R,
) -> Result<Roadmap, RoadmapError> {
    cfg.validate()?;
    let mut rm = Roadmap::new(env.dim());
    for _ in 0..cfg.n {
        let x = env.sample_free(rng)?;
        rm.add_node(x, false);
    }
    let members: Vec<usize> = (0..rm.len()).collect();
    rm.connect_within_radius(env, &members, connection_radius(cfg, env.dim()));
    Ok(rm)
}

/// One-to-all Dijkstra tree from `source`.
pub fn shortest_path_tree(rm: &Roadmap, source: usize) -> Result<ShortestPathTree, RoadmapError> {
    rm.check_index(source)?;
    Ok(dijkstra(rm, source, |_| false).0)
}

/// Minimum-cost path, or `None` when `target` is unreachable.
pub fn shortest_path(rm: &Roadmap, source: usize, target: usize) -> Result<Option<Path>, RoadmapError> {
    rm.check_index(source)?;
    rm.check_index(target)?;
    let (tree, _) = dijkstra(rm, source, |u| u == target);
    Ok(tree.path_to(target))
}

/// Removes interior waypoints that can be skipped by a free straight segment.
///
/// Scans left to right, dropping `x[i+1]` whenever `x[i]`–`x[i+2]` is free, and
/// repeats full passes until one removes nothing. Shortcut segments need not be
/// roadmap edges. The cost is recomputed from the surviving waypoints.
pub fn shortcut_path(env: &Environment, rm: &Roadmap, path: &Path) -> Path {
    let mut nodes = path.nodes.clone();
    loop {
        let mut changed = false;
        let mut i = 0;
        while i + 2 < nodes.len() {
            if env.is_segment_free(rm.node(nodes[i]), rm.node(nodes[i + 2])) {
                nodes.remove(i + 1);
                changed = true;
            } else {
                i += 1;
            }
        }
        if !changed {
            break;
        }
    }
    let cost = nodes
        .windows(2)
        .map(|w| rm.node(w[0]).distance(rm.node(w[1])))
        .sum();
    Path { nodes, cost }
}
