use critical_prm::env::{generate_narrow_passage, Environment, NarrowPassageParams};
use critical_prm::roadmap::{build_prm, shortcut_path, shortest_path, shortest_path_tree, Roadmap, RoadmapConfig};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn small_graph(nodes: usize, seed: u64) -> (Environment, Roadmap) {
    let env = generate_narrow_passage(&NarrowPassageParams::default(), seed).unwrap();
    let cfg = RoadmapConfig { n: nodes, gamma: 1.0, radius_override: Some(0.5) };
    let rm = build_prm(&env, &cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
    (env, rm)
}

/// Cheapest simple path by exhaustive depth-first enumeration.
fn dfs_best(rm: &Roadmap, at: usize, goal: usize, seen: &mut Vec<bool>, cost: f64, best: &mut f64) {
    if at == goal {
        *best = best.min(cost);
        return;
    }
    for e in rm.neighbors(at) {
        if !seen[e.to] {
            seen[e.to] = true;
            dfs_best(rm, e.to, goal, seen, cost + e.cost, best);
            seen[e.to] = false;
        }
    }
}

#[test]
fn dijkstra_matches_exhaustive_enumeration() {
    for seed in 0..20 {
        let (_, rm) = small_graph(4 + (seed as usize % 7), seed);
        for s in 0..rm.len() {
            for t in 0..rm.len() {
                let mut best = f64::INFINITY;
                let mut seen = vec![false; rm.len()];
                seen[s] = true;
                dfs_best(&rm, s, t, &mut seen, 0.0, &mut best);
                match shortest_path(&rm, s, t).unwrap() {
                    Some(p) => assert!((p.cost - best).abs() <= 1e-12 && p.cost <= best + 1e-12),
                    None => assert!(best.is_infinite()),
                }
            }
        }
    }
}

#[test]
fn tree_distances_match_bellman_ford() {
    for seed in 0..10 {
        let (_, rm) = small_graph(5, 100 + seed);
        for s in 0..5 {
            let mut d = vec![f64::INFINITY; 5];
            d[s] = 0.0;
            for _ in 0..5 {
                for (a, b, w) in rm.edges() {
                    d[b] = d[b].min(d[a] + w);
                    d[a] = d[a].min(d[b] + w);
                }
            }
            let tree = shortest_path_tree(&rm, s).unwrap();
            for v in 0..5 {
                assert!(d[v] == tree.dist[v] || (d[v] - tree.dist[v]).abs() <= 1e-12, "{d:?} {:?}", tree.dist);
            }
        }
    }
}

#[test]
fn adding_edges_never_lengthens_paths() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for seed in 0..10 {
        let (env, mut rm) = small_graph(25, 200 + seed);
        let before: Vec<Vec<f64>> = (0..rm.len()).map(|s| shortest_path_tree(&rm, s).unwrap().dist).collect();
        for _ in 0..15 {
            let (i, j) = (rng.random_range(0..rm.len()), rng.random_range(0..rm.len()));
            if env.segment_free(rm.node(i), rm.node(j)).unwrap() {
                rm.add_edge(i, j);
            }
        }
        for (s, old) in before.iter().enumerate() {
            let new = shortest_path_tree(&rm, s).unwrap().dist;
            assert!(new.iter().zip(old).all(|(n, o)| n <= o));
        }
    }
}

#[test]
fn shortcutting_reaches_a_fixpoint() {
    for seed in 0..10 {
        let env = generate_narrow_passage(&NarrowPassageParams::default(), seed).unwrap();
        let rm = build_prm(&env, &RoadmapConfig::new(400, 2), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        for t in (1..rm.len()).step_by(37) {
            let Some(p) = shortest_path(&rm, 0, t).unwrap() else { continue };
            let once = shortcut_path(&env, &rm, &p);
            assert!(once.cost <= p.cost + 1e-12);
            assert_eq!(shortcut_path(&env, &rm, &once), once);
            for w in once.nodes.windows(2) {
                assert!(env.segment_free(rm.node(w[0]), rm.node(w[1])).unwrap());
            }
        }
    }
}

#[test]
fn relabelling_nodes_preserves_distances() {
    let (_, rm) = small_graph(20, 42);
    let mut perm: Vec<usize> = (0..rm.len()).collect();
    perm.reverse();
    perm.swap(3, 11);
    let mut relabelled = Roadmap::new(2);
    let mut inverse = vec![0; rm.len()];
    for (new, &old) in perm.iter().enumerate() {
        relabelled.add_node(*rm.node(old), false);
        inverse[old] = new;
    }
    for (a, b, _) in rm.edges() {
        relabelled.add_edge(inverse[a], inverse[b]);
    }
    for s in 0..rm.len() {
        let d = shortest_path_tree(&rm, s).unwrap().dist;
        let e = shortest_path_tree(&relabelled, inverse[s]).unwrap().dist;
        for v in 0..rm.len() {
            assert!((d[v] - e[inverse[v]]).abs() <= 1e-12 || d[v] == e[inverse[v]]);
        }
    }
}

#[test]
fn radius_growth_only_adds_edges() {
    let env = generate_narrow_passage(&NarrowPassageParams::default(), 6).unwrap();
    let edges = |r: f64| {
        let cfg = RoadmapConfig { n: 300, gamma: 1.0, radius_override: Some(r) };
        let rm = build_prm(&env, &cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        rm.edges().map(|(a, b, _)| (a, b)).collect::<std::collections::BTreeSet<_>>()
    };
    let (small, large) = (edges(0.08), edges(0.16));
    assert!(small.is_subset(&large) && large.len() > small.len());
}
