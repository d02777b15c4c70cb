use std::cmp::Reverse;
use std::collections::BinaryHeap;

use critical_prm::cprm::{build_critical_local_prm, build_uniform_prm, plan, CriticalPrmConfig, PlanProblem};
use critical_prm::env::{generate_narrow_passage, Environment, NarrowPassageParams, State};
use critical_prm::learner::MlpModel;
use critical_prm::roadmap::RoadmapConfig;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

const SIDE: usize = 201;
const H: f64 = 1.0 / (SIDE - 1) as f64;
/// Worst ratio of an 8-connected grid path to the Euclidean length it tracks.
const GRID_STRETCH: f64 = 1.0824;

fn grid_point(i: usize, j: usize) -> State {
    State::new(&[i as f64 * H, j as f64 * H]).unwrap()
}

/// Cheapest path on the 8-connected lattice with spacing `H`, entered from the
/// start through any visible lattice point within two spacings and left at
/// any lattice point inside the goal ball.
fn grid_optimum(env: &Environment, prob: &PlanProblem) -> f64 {
    let idx = |i: usize, j: usize| i * SIDE + j;
    let free: Vec<bool> = (0..SIDE * SIDE).map(|k| env.point_free(&grid_point(k / SIDE, k % SIDE)).unwrap()).collect();
    let mut dist = vec![f64::INFINITY; SIDE * SIDE];
    let mut heap = BinaryHeap::new();
    let s = prob.x_init.as_slice();
    let (ci, cj) = ((s[0] / H).round() as isize, (s[1] / H).round() as isize);
    for i in ci - 2..=ci + 2 {
        for j in cj - 2..=cj + 2 {
            if i < 0 || j < 0 || i >= SIDE as isize || j >= SIDE as isize {
                continue;
            }
            let (i, j) = (i as usize, j as usize);
            let p = grid_point(i, j);
            if free[idx(i, j)] && env.segment_free(&prob.x_init, &p).unwrap() {
                dist[idx(i, j)] = prob.x_init.distance(&p);
                heap.push(Reverse((dist[idx(i, j)].to_bits(), idx(i, j))));
            }
        }
    }
    while let Some(Reverse((bits, k))) = heap.pop() {
        let d = f64::from_bits(bits);
        if d > dist[k] {
            continue;
        }
        let (i, j) = (k / SIDE, k % SIDE);
        let p = grid_point(i, j);
        if prob.in_goal(&p) {
            return d;
        }
        for di in -1isize..=1 {
            for dj in -1isize..=1 {
                let (ni, nj) = (i as isize + di, j as isize + dj);
                if (di, dj) == (0, 0) || ni < 0 || nj < 0 || ni >= SIDE as isize || nj >= SIDE as isize {
                    continue;
                }
                let nk = idx(ni as usize, nj as usize);
                let q = grid_point(ni as usize, nj as usize);
                if !free[nk] || !env.segment_free(&p, &q).unwrap() {
                    continue;
                }
                let nd = d + p.distance(&q);
                if nd < dist[nk] {
                    dist[nk] = nd;
                    heap.push(Reverse((nd.to_bits(), nk)));
                }
            }
        }
    }
    f64::INFINITY
}

#[test]
fn plan_cost_is_bracketed_by_the_grid_optimum() {
    let mut checked = 0;
    for seed in 0..3 {
        let env = generate_narrow_passage(&NarrowPassageParams::default(), 40 + seed).unwrap();
        let rm = build_uniform_prm(&env, &RoadmapConfig::new(3000, 2), seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..4 {
            let prob = PlanProblem {
                x_init: env.sample_free(&mut rng).unwrap(),
                goal_center: env.sample_free(&mut rng).unwrap(),
                goal_radius: 0.02,
            };
            let grid = grid_optimum(&env, &prob);
            let res = plan(&env, &rm, &prob).unwrap();
            if grid.is_infinite() {
                continue;
            }
            assert!(res.success, "{prob:?}");
            assert!(res.cost >= grid / GRID_STRETCH - 2.0 * H, "{} below grid {grid}", res.cost);
            assert!(res.cost <= 1.5 * grid, "{} above grid {grid}", res.cost);
            assert!(res.cost >= prob.straight_line_cost() - 1e-12);
            checked += 1;
        }
    }
    assert!(checked >= 10);
}

#[test]
fn waypoints_trace_a_free_path_of_the_reported_cost() {
    let env = generate_narrow_passage(&NarrowPassageParams::default(), 8).unwrap();
    let rm = build_uniform_prm(&env, &RoadmapConfig::new(800, 2), 1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..30 {
        let prob = PlanProblem {
            x_init: env.sample_free(&mut rng).unwrap(),
            goal_center: env.sample_free(&mut rng).unwrap(),
            goal_radius: 0.02,
        };
        let res = plan(&env, &rm, &prob).unwrap();
        let Some(w) = res.waypoints else { continue };
        let length: f64 = w.windows(2).map(|p| p[0].distance(&p[1])).sum();
        assert!((length - res.cost).abs() <= 1e-9);
        assert!(w.windows(2).all(|p| env.segment_free(&p[0], &p[1]).unwrap()));
        assert_eq!(w[0], prob.x_init);
        assert!(prob.goal_center.distance(w.last().unwrap()) <= prob.goal_radius + 1e-12);
    }
}

#[test]
fn local_variant_edges_grow_like_n_log_n() {
    let env = generate_narrow_passage(&NarrowPassageParams::default(), 2).unwrap();
    let model = MlpModel::zeros(&[100, 4, 1]).unwrap();
    let ns = [200usize, 400, 800, 1600];
    let pts: Vec<(f64, f64)> = ns
        .iter()
        .map(|&n| {
            let rm = build_critical_local_prm(&env, &model, &CriticalPrmConfig::new(n, 2, 5)).unwrap();
            let n = n as f64;
            ((n * n.ln()).ln(), (rm.edge_count() as f64).ln())
        })
        .collect();
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / pts.len() as f64;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / pts.len() as f64;
    let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    assert!((0.9..=1.3).contains(&slope), "exponent {slope}");
}
