use critical_prm::centrality::{betweenness, build_dataset, CentralityConfig};
use critical_prm::env::{generate_narrow_passage, Environment, NarrowPassageParams};
use critical_prm::roadmap::{build_prm, Roadmap, RoadmapConfig};
use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn setup(n: usize, seed: u64) -> (Environment, Roadmap) {
    let env = generate_narrow_passage(&NarrowPassageParams::default(), seed).unwrap();
    let rm = build_prm(&env, &RoadmapConfig::new(n, 2), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
    (env, rm)
}

#[test]
fn scores_follow_node_relabelling() {
    for (seed, smoothing) in [(1, false), (2, true), (3, true)] {
        let (env, rm) = setup(120, seed);
        let mut perm: Vec<usize> = (0..rm.len()).collect();
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let mut relabelled = Roadmap::new(2);
        let mut new_of = vec![0; rm.len()];
        for (new, &old) in perm.iter().enumerate() {
            relabelled.add_node(*rm.node(old), false);
            new_of[old] = new;
        }
        for (a, b, _) in rm.edges() {
            relabelled.add_edge(new_of[a], new_of[b]);
        }
        let cfg = CentralityConfig { m: rm.len(), smoothing, seed };
        let a = betweenness(&env, &rm, &cfg);
        let b = betweenness(&env, &relabelled, &cfg);
        for v in 0..rm.len() {
            assert_eq!(a.counts()[v], b.counts()[new_of[v]], "node {v}, smoothing {smoothing}");
        }
    }
}

#[test]
fn scores_are_deterministic() {
    let (env, rm) = setup(300, 4);
    let cfg = CentralityConfig { m: 50, smoothing: true, seed: 9 };
    assert_eq!(betweenness(&env, &rm, &cfg), betweenness(&env, &rm, &cfg));
}

/// Criticality mass concentrates on obstacle-adjacent patches.
///
/// Not every critical patch contains an obstacle: after greedy shortcutting a
/// surviving waypoint can sit well clear of the corner that blocks the
/// shortcut over it, outside the local window. Such nodes form a long tail of
/// low scores, so the check weights patches by criticality.
#[test]
fn criticality_mass_sits_next_to_obstacles() {
    let envs: Vec<Environment> = (0..20)
        .map(|s| generate_narrow_passage(&NarrowPassageParams::default(), 300 + s).unwrap())
        .collect();
    let ds = build_dataset(
        &envs,
        &RoadmapConfig::new(500, 2),
        &CentralityConfig { m: 100, smoothing: true, seed: 0 },
        usize::MAX,
        &mut ChaCha8Rng::seed_from_u64(2),
    )
    .unwrap();
    let mass = |occupied: bool| -> f64 {
        ds.samples.iter().filter(|s| (s.patch.occupied_count() > 0) == occupied).map(|s| s.criticality).sum()
    };
    let share = mass(true) / (mass(true) + mass(false));
    let zero_free = ds.samples.iter().filter(|s| !s.is_critical() && s.patch.occupied_count() > 0).count() as f64
        / (ds.len() / 2) as f64;
    eprintln!("occupied share of criticality {share:.3}, occupied zero-score patches {zero_free:.3}");
    assert!(share > 0.65 && share > zero_free + 0.2, "{share:.3} vs {zero_free:.3}");
}
