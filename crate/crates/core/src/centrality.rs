//! Criticality labels from approximate, smoothed betweenness centrality, and
//! assembly of balanced training datasets.
//!
//! For each of `m` source nodes (drawn without replacement) the one-to-all
//! shortest-path tree is computed. Every reachable destination yields one path;
//! with smoothing enabled the path is first shortcut, so only waypoints that
//! cannot be skipped by a free straight segment remain. Each interior node of
//! the resulting path gains one increment. Scores are increments divided by
//! `m`, which makes labels comparable across roadmap sizes.

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{EnvError, Environment, LocalPatch};
use crate::roadmap::{build_prm, dijkstra, shortcut_path, Roadmap, RoadmapConfig, RoadmapError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DatasetError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Roadmap(#[from] RoadmapError),
    #[error("no environments given")]
    NoEnvironments,
    #[error("dataset would be empty: {0}")]
    Empty(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CentralityConfig {
    /// Number of source nodes; clamped to the node count.
    pub m: usize,
    pub smoothing: bool,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CentralityScores {
    counts: Vec<u64>,
    sources: usize,
}

impl CentralityScores {
    /// Raw increment count per node.
    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// Number of source trees the counts were accumulated over.
    pub fn sources(&self) -> usize {
        self.sources
    }

    pub fn score(&self, i: usize) -> f64 {
        if self.sources == 0 {
            0.0
        } else {
            self.counts[i] as f64 / self.sources as f64
        }
    }

    pub fn scores(&self) -> Vec<f64> {
        (0..self.counts.len()).map(|i| self.score(i)).collect()
    }

    pub fn total_increments(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn critical_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        self.counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(i, _)| i)
    }
}

/// Source nodes used by [`betweenness`] for this roadmap size and config.
pub fn centrality_sources(node_count: usize, cfg: &CentralityConfig) -> Vec<usize> {
    let m = cfg.m.min(node_count);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut sources = sample(&mut rng, node_count, m).into_vec();
    sources.sort_unstable();
    sources
}

/// Increment counts contributed by the shortest-path tree of one source.
fn source_counts(env: &Environment, rm: &Roadmap, source: usize, smoothing: bool) -> Vec<u64> {
    let mut counts = vec![0u64; rm.len()];
    let (tree, _) = dijkstra(rm, source, |_| false);
    for target in 0..rm.len() {
        if target == source {
            continue;
        }
        let Some(path) = tree.path_to(target) else {
            continue;
        };
        let path = if smoothing {
            shortcut_path(env, rm, &path)
        } else {
            path
        };
        if path.nodes.len() > 2 {
            for &v in &path.nodes[1..path.nodes.len() - 1] {
                counts[v] += 1;
            }
        }
    }
    counts
}

/// Approximate smoothed betweenness centrality. Endpoints of a path are never
/// incremented and unreachable destinations contribute nothing.
pub fn betweenness(env: &Environment, rm: &Roadmap, cfg: &CentralityConfig) -> CentralityScores {
    let n = rm.len();
    if n == 0 {
        return CentralityScores {
            counts: Vec::new(),
            sources: 0,
        };
    }
    let sources = centrality_sources(n, cfg);
    let counts = sources
        .par_iter()
        .map(|&s| source_counts(env, rm, s, cfg.smoothing))
        .reduce(
            || vec![0u64; n],
            |mut acc, c| {
                for (a, b) in acc.iter_mut().zip(c) {
                    *a += b;
                }
                acc
            },
        );
    CentralityScores {
        counts,
        sources: sources.len(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSample {
    pub patch: LocalPatch,
    pub criticality: f64,
}

impl TrainingSample {
    pub fn is_critical(&self) -> bool {
        self.criticality > 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub env_seed: u64,
    pub node_index: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub samples: Vec<TrainingSample>,
    pub provenance: Vec<Provenance>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn critical_count(&self) -> usize {
        self.samples.iter().filter(|s| s.is_critical()).count()
    }

    /// Exactly half the samples critical, half zero-criticality.
    pub fn is_balanced(&self) -> bool {
        !self.is_empty() && 2 * self.critical_count() == self.len()
    }

    /// Patch length shared by every sample, if the dataset is nonempty.
    pub fn input_len(&self) -> Option<usize> {
        self.samples.first().map(|s| s.patch.len())
    }
}

/// Labels roadmap nodes in every environment and rebalances the result to an
/// equal number of critical and zero-criticality samples.
///
/// `per_env_nodes` caps how many labelled nodes one environment contributes
/// before balancing (a seeded uniform subset; pass `usize::MAX` to keep all).
/// The majority class is subsampled, never oversampled, and the output is
/// shuffled.
pub fn build_dataset<R: Rng + ?Sized>(
    envs: &[Environment],
    rm_cfg: &RoadmapConfig,
    cent_cfg: &CentralityConfig,
    per_env_nodes: usize,
    rng: &mut R,
) -> Result<Dataset, DatasetError> {
    if envs.is_empty() {
        return Err(DatasetError::NoEnvironments);
    }
    rm_cfg.validate()?;
    let seeds: Vec<(u64, u64, u64)> = envs
        .iter()
        .map(|_| (rng.random(), rng.random(), rng.random()))
        .collect();

    let per_env: Vec<Vec<(TrainingSample, Provenance)>> = envs
        .par_iter()
        .zip(seeds.par_iter())
        .map(|(env, &(prm_seed, cent_seed, pick_seed))| {
            label_environment(env, rm_cfg, cent_cfg, per_env_nodes, prm_seed, cent_seed, pick_seed)
        })
        .collect::<Result<_, _>>()?;

    let (critical, zero): (Vec<_>, Vec<_>) = per_env
        .into_iter()
        .flatten()
        .partition(|(s, _)| s.is_critical());
    if critical.is_empty() {
        return Err(DatasetError::Empty("no node has positive criticality".into()));
    }
    if zero.is_empty() {
        return Err(DatasetError::Empty("no node has zero criticality".into()));
    }

    let keep = critical.len().min(zero.len());
    let mut rows = Vec::with_capacity(2 * keep);
    for class in [critical, zero] {
        if class.len() == keep {
            rows.extend(class);
        } else {
            let mut picked = sample(rng, class.len(), keep).into_vec();
            picked.sort_unstable();
            let mut class: Vec<Option<_>> = class.into_iter().map(Some).collect();
            rows.extend(picked.into_iter().map(|i| class[i].take().unwrap()));
        }
    }
    rows.shuffle(rng);

    let (samples, provenance) = rows.into_iter().unzip();
    Ok(Dataset {
        samples,
        provenance,
    })
}

fn label_environment(
    env: &Environment,
    rm_cfg: &RoadmapConfig,
    cent_cfg: &CentralityConfig,
    per_env_nodes: usize,
    prm_seed: u64,
    cent_seed: u64,
    pick_seed: u64,
) -> Result<Vec<(TrainingSample, Provenance)>, DatasetError> {
    let rm = build_prm(env, rm_cfg, &mut ChaCha8Rng::seed_from_u64(prm_seed))?;
    let cfg = CentralityConfig {
        seed: cent_seed,
        ..*cent_cfg
    };
    let scores = betweenness(env, &rm, &cfg);
    let mut nodes: Vec<usize> = (0..rm.len()).collect();
    if per_env_nodes < nodes.len() {
        let mut rng = ChaCha8Rng::seed_from_u64(pick_seed);
        nodes = sample(&mut rng, rm.len(), per_env_nodes).into_vec();
        nodes.sort_unstable();
    }
    nodes
        .into_iter()
        .map(|i| {
            Ok((
                TrainingSample {
                    patch: env.local_patch(rm.node(i))?,
                    criticality: scores.score(i),
                },
                Provenance {
                    env_seed: env.seed(),
                    node_index: i,
                },
            ))
        })
        .collect()
}
