//! Self-checks run by `cprm selftest`: centrality against a Bellman-Ford
//! oracle, smoothing in free space, gradient checks and dataset balance.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::centrality::{betweenness, build_dataset, CentralityConfig};
use crate::env::{generate_narrow_passage, Environment, NarrowPassageParams};
use crate::learner::{gradient_check, MlpModel, Sample};
use crate::roadmap::{build_prm, Roadmap, RoadmapConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Bellman-Ford distances and smallest-index predecessors.
fn bellman_ford(rm: &Roadmap, source: usize) -> (Vec<f64>, Vec<Option<usize>>) {
    let n = rm.len();
    let mut dist = vec![f64::INFINITY; n];
    dist[source] = 0.0;
    for _ in 0..n {
        let mut changed = false;
        for (i, j, w) in rm.edges() {
            for (a, b) in [(i, j), (j, i)] {
                if dist[a] + w < dist[b] {
                    dist[b] = dist[a] + w;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    let pred = (0..n)
        .map(|v| {
            if v == source || !dist[v].is_finite() {
                return None;
            }
            rm.neighbors(v)
                .iter()
                .filter(|e| dist[e.to] + e.cost == dist[v])
                .map(|e| e.to)
                .min()
        })
        .collect();
    (dist, pred)
}

/// Exact unsmoothed betweenness counts by enumerating every ordered pair.
pub fn brute_force_betweenness(rm: &Roadmap) -> Vec<u64> {
    let mut counts = vec![0u64; rm.len()];
    for s in 0..rm.len() {
        let (dist, pred) = bellman_ford(rm, s);
        for t in 0..rm.len() {
            if t == s || !dist[t].is_finite() {
                continue;
            }
            let mut cur = pred[t];
            while let Some(v) = cur {
                if v == s {
                    break;
                }
                counts[v] += 1;
                cur = pred[v];
            }
        }
    }
    counts
}

fn random_geometric_graph(nodes: usize, radius: f64, seed: u64) -> (Environment, Roadmap) {
    let env = Environment::empty(2).expect("2D is supported");
    let cfg = RoadmapConfig {
        n: nodes,
        gamma: 1.0,
        radius_override: Some(radius),
    };
    let rm = build_prm(&env, &cfg, &mut ChaCha8Rng::seed_from_u64(seed)).expect("empty env samples");
    (env, rm)
}

fn check_centrality_oracle() -> Check {
    let mut mismatches = 0;
    let graphs = 25;
    for g in 0..graphs {
        let (env, rm) = random_geometric_graph(5 + g, 0.35, g as u64);
        let scores = betweenness(
            &env,
            &rm,
            &CentralityConfig {
                m: rm.len(),
                smoothing: false,
                seed: g as u64,
            },
        );
        if scores.counts() != brute_force_betweenness(&rm).as_slice() {
            mismatches += 1;
        }
    }
    Check {
        name: "centrality matches all-pairs oracle",
        passed: mismatches == 0,
        detail: format!("{mismatches}/{graphs} graphs differ"),
    }
}

fn check_smoothing() -> Check {
    let mut nonzero = 0;
    for seed in 0..5 {
        let (env, rm) = random_geometric_graph(200, 0.12, 100 + seed);
        let scores = betweenness(
            &env,
            &rm,
            &CentralityConfig {
                m: rm.len(),
                smoothing: true,
                seed,
            },
        );
        nonzero += scores.critical_nodes().count();
    }
    Check {
        name: "smoothing zeroes free-space criticality",
        passed: nonzero == 0,
        detail: format!("{nonzero} nodes with positive score"),
    }
}

fn check_gradients() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for trial in 0..20u64 {
        let width = rng.random_range(3..12);
        let hidden = rng.random_range(2..10);
        let mut model = MlpModel::new_he(&[width, hidden, hidden, 1], trial).expect("valid sizes");
        // zero biases put dead-layer pre-activations exactly on the ReLU kink
        for l in 0..model.layer_count() {
            for b in model.layer_mut(l).1 {
                *b = rng.random_range(-0.5..0.5);
            }
        }
        let batch: Vec<Sample> = (0..8)
            .map(|_| {
                let x = (0..width).map(|_| rng.random_range(-1.0..1.0)).collect();
                Sample::new(x, rng.random_range(0.0..3.0))
            })
            .collect();
        match gradient_check(&model, &batch, 60, trial) {
            Ok(e) => worst = worst.max(e),
            Err(_) => worst = f64::INFINITY,
        }
    }
    Check {
        name: "analytic gradients match finite differences",
        passed: worst < 1e-5,
        detail: format!("max relative error {worst:.3e}"),
    }
}

fn check_dataset_balance() -> Check {
    let envs: Vec<Environment> = (0..4)
        .map(|s| generate_narrow_passage(&NarrowPassageParams::default(), s))
        .collect::<Result<_, _>>()
        .expect("default family is feasible");
    let ds = build_dataset(
        &envs,
        &RoadmapConfig::new(300, 2),
        &CentralityConfig {
            m: 60,
            smoothing: true,
            seed: 0,
        },
        usize::MAX,
        &mut ChaCha8Rng::seed_from_u64(11),
    );
    match ds {
        Ok(ds) => Check {
            name: "dataset is balanced",
            passed: ds.is_balanced(),
            detail: format!("{} of {} rows critical", ds.critical_count(), ds.len()),
        },
        Err(e) => Check {
            name: "dataset is balanced",
            passed: false,
            detail: e.to_string(),
        },
    }
}

/// Runs every check.
pub fn selftest() -> Vec<Check> {
    vec![
        check_centrality_oracle(),
        check_smoothing(),
        check_gradients(),
        check_dataset_balance(),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_checks_pass() {
        for c in selftest() {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }

    #[test]
    fn oracle_on_path_graph() {
        let mut rm = Roadmap::new(2);
        for x in [0.1, 0.2, 0.3, 0.4] {
            rm.add_node(crate::env::State::new(&[x, 0.5]).unwrap(), false);
        }
        for i in 0..3 {
            rm.add_edge(i, i + 1);
        }
        // ordered pairs with interior nodes: (0,2),(2,0),(0,3),(3,0),(1,3),(3,1)
        assert_eq!(brute_force_betweenness(&rm), vec![0, 4, 4, 0]);
    }
}
