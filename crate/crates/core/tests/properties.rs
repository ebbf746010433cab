mod common;

use common::{fixture, random_network, random_times, Rng, ACYCLIC_FIXTURES};
use hsue::loading::{
    dual_smooth_value, network_loading, path_flows_from_load, primal_objective,
    primal_objective_path_free, softmin,
};
use hsue::model::LevelEdgeKind;
use hsue::oracle::{enumerate_all, expanded_path_count, logit_path_table, path_cost};
use hsue::solver::{solve, SolverConfig};
use hsue::{DualPoint, Edge, LevelGraph, LinkCost, Network, NetworkHierarchy, OdPair};

#[test]
fn gradient_matches_central_differences() {
    let mut rng = Rng::new(11);
    for _ in 0..30 {
        let net = random_network(&mut rng, 3, 20);
        let t = random_times(&mut rng, &net);
        let g = network_loading(&net, &t).unwrap().gradient(&net);
        let h = 1e-5;
        for e in 0..t.len() {
            let (mut up, mut down) = (t.clone(), t.clone());
            up.0[e] += h;
            down.0[e] -= h;
            let fd = (dual_smooth_value(&net, &up).unwrap()
                - dual_smooth_value(&net, &down).unwrap())
                / (2.0 * h);
            assert!(
                (fd - g[e]).abs() <= 1e-6 * g[e].abs().max(1.0),
                "edge {e}: fd {fd} vs {}",
                g[e]
            );
        }
    }
}

#[test]
fn dual_smooth_value_is_convex_and_nonincreasing() {
    let mut rng = Rng::new(12);
    for _ in 0..30 {
        let net = random_network(&mut rng, 3, 20);
        let t1 = random_times(&mut rng, &net);
        let t2 = random_times(&mut rng, &net);
        let lam = rng.uniform(0.0, 1.0);
        let mid = DualPoint(
            t1.0.iter()
                .zip(&t2.0)
                .map(|(a, b)| lam * a + (1.0 - lam) * b)
                .collect(),
        );
        let v = |t: &DualPoint| dual_smooth_value(&net, t).unwrap();
        assert!(v(&mid) <= lam * v(&t1) + (1.0 - lam) * v(&t2) + 1e-12);
        let mut up = t1.clone();
        up.0.iter_mut().for_each(|x| *x += 0.1);
        assert!(v(&up) <= v(&t1) + 1e-12);
    }
}

#[test]
fn loading_conserves_flow_and_binds_portals() {
    let mut rng = Rng::new(13);
    for _ in 0..40 {
        let net = random_network(&mut rng, 3, 20);
        let t = random_times(&mut rng, &net);
        let load = network_loading(&net, &t).unwrap();
        for (k, level) in net.levels().iter().enumerate() {
            let lv = &load.levels[k];
            let mut balance = vec![0.0; level.node_count()];
            for (e, edge) in level.edges.iter().enumerate() {
                assert!(lv.flows[e] >= 0.0);
                balance[edge.from] -= lv.flows[e];
                balance[edge.to] += lv.flows[e];
                if let LevelEdgeKind::Portal { target_od } = edge.kind {
                    let induced = load.levels[k + 1].demands[target_od];
                    assert!((induced - lv.flows[e]).abs() <= 1e-12 * (1.0 + induced));
                }
            }
            for (od, &d) in level.ods.iter().zip(&lv.demands) {
                balance[od.origin] += d;
                balance[od.destination] -= d;
            }
            let scale: f64 = 1.0 + lv.demands.iter().sum::<f64>();
            assert!(
                balance.iter().all(|b| b.abs() <= 1e-10 * scale),
                "level {k}: {balance:?}"
            );
        }
    }
}

#[test]
fn loading_matches_path_enumeration() {
    let mut rng = Rng::new(14);
    let mut nets: Vec<Network> = ACYCLIC_FIXTURES.iter().map(|n| fixture(n)).collect();
    nets.extend((0..25).map(|_| random_network(&mut rng, 3, 20)));
    for net in &nets {
        assert!(expanded_path_count(net, 10_000).unwrap() <= 10_000);
        for trial in 0..3 {
            let t = if trial == 0 {
                DualPoint::free_flow(net)
            } else {
                random_times(&mut rng, net)
            };
            let dp = network_loading(net, &t).unwrap().level_flows();
            let brute = logit_path_table(net, &t, 10_000).unwrap().edge_flows(net);
            for (a, b) in dp.iter().flatten().zip(brute.iter().flatten()) {
                assert!((a - b).abs() <= 1e-10 * (1.0 + b.abs()), "{a} vs {b}");
            }
        }
    }
}

#[test]
fn chain_rule_entropy_equals_path_sum() {
    let mut rng = Rng::new(15);
    for _ in 0..25 {
        let net = random_network(&mut rng, 3, 20);
        let t = random_times(&mut rng, &net);
        let load = network_loading(&net, &t).unwrap();
        let paths = enumerate_all(&net, 10_000).unwrap();
        let x = path_flows_from_load(&net, &load, &paths);
        let with_paths = primal_objective(&net, &x, &load.level_flows()).unwrap();
        let path_free =
            primal_objective_path_free(&net, &load.level_flows(), &load.level_entropies()).unwrap();
        assert!((with_paths - path_free).abs() <= 1e-10 * (1.0 + with_paths.abs()));
        // the dual identity γψ = −(⟨f,t⟩ + Σ γ^k H^k) at any t
        let flows = load.plain_flows(&net);
        let ft: f64 = flows.iter().zip(&t.0).map(|(f, t)| f * t).sum();
        let ent: f64 = net
            .levels()
            .iter()
            .zip(&load.levels)
            .map(|(l, lv)| l.gamma * lv.entropy)
            .sum();
        assert!((load.psi1 + ft + ent).abs() <= 1e-10 * (1.0 + load.psi1.abs()));
    }
}

#[test]
fn dp_weights_match_recursive_path_costs() {
    let mut rng = Rng::new(16);
    for _ in 0..20 {
        let net = random_network(&mut rng, 3, 20);
        let t = random_times(&mut rng, &net);
        let load = network_loading(&net, &t).unwrap();
        let paths = enumerate_all(&net, 10_000).unwrap();
        for (k, ods) in paths.levels.iter().enumerate() {
            let w = &load.levels[k].weights;
            for od_paths in ods {
                for p in od_paths {
                    let direct: f64 = p.iter().map(|&e| w[e]).sum();
                    let oracle = path_cost(&net, &t, p, k).unwrap();
                    assert!((direct - oracle).abs() <= 1e-12 * (1.0 + direct.abs()));
                }
            }
        }
    }
}

fn portal_net(gamma2: f64) -> Network {
    Network::new(NetworkHierarchy {
        gammas: vec![1.0, gamma2],
        levels: vec![
            LevelGraph {
                nodes: vec!["o".into(), "d".into()],
                edges: vec![Edge::portal("p", "o", "d", 1, 0)],
                od_pairs: vec![OdPair::new("o", "d", Some(1.0))],
            },
            LevelGraph {
                nodes: vec!["a".into(), "b".into(), "c".into()],
                edges: vec![
                    Edge::plain("ab", "a", "b", LinkCost::affine(1.0, 1.0).unwrap()),
                    Edge::plain("bc", "b", "c", LinkCost::affine(1.5, 1.0).unwrap()),
                    Edge::plain("ac", "a", "c", LinkCost::affine(2.7, 1.0).unwrap()),
                ],
                od_pairs: vec![OdPair::new("a", "c", None)],
            },
        ],
        walk_cap: None,
    })
    .unwrap()
}

#[test]
fn portal_weight_tends_to_shortest_path() {
    let mut prev = f64::NEG_INFINITY;
    for gamma in [1.0, 0.3, 0.1, 0.03, 1e-3] {
        let net = portal_net(gamma);
        let t = DualPoint::free_flow(&net);
        let w = network_loading(&net, &t).unwrap().levels[0].weights[0];
        // soft-min lies below the minimum and rises to it
        assert!(w <= 2.5 + 1e-12 && w >= prev - 1e-12);
        prev = w;
    }
    assert!((prev - 2.5).abs() < 1e-3 * 2f64.ln() + 1e-12);
    let shares = network_loading(&portal_net(1e-3), &DualPoint(vec![1.0, 1.5, 2.7]))
        .unwrap()
        .levels[1]
        .flows
        .clone();
    assert!(shares[0] >= 1.0 - 1e-3);
}

#[test]
fn loading_accepts_times_below_free_flow() {
    let net = fixture("two_level.json");
    let t = DualPoint(
        DualPoint::free_flow(&net)
            .0
            .iter()
            .map(|x| x - 5.0)
            .collect(),
    );
    let load = network_loading(&net, &t).unwrap();
    assert!(load.psi1.is_finite());
}

#[test]
fn softmin_examples() {
    assert_eq!(softmin([5.0], 1.0), 5.0);
    assert!((softmin([1.0, 1.0], 1.0) - (1.0 - 2f64.ln())).abs() < 1e-15);
    assert!((softmin([1.0, 1.0], 2.0) - (1.0 - 2.0 * 2f64.ln())).abs() < 1e-15);
}

#[test]
fn two_level_solve_matches_fixed_point() {
    let net = fixture("two_level.json");
    let reference = hsue::oracle::fixed_point_small(&net, 1e-12).unwrap();
    let sol = solve(
        &net,
        &SolverConfig {
            gap_tol: 1e-10,
            ..SolverConfig::default()
        },
        None,
    )
    .unwrap();
    for (a, b) in sol
        .flows
        .iter()
        .flatten()
        .zip(reference.flows.iter().flatten())
    {
        assert!((a - b).abs() < 1e-4, "{a} vs {b}");
    }
    for (a, b) in sol.times.0.iter().zip(&reference.times.0) {
        assert!((a - b).abs() < 1e-6, "{a} vs {b}");
    }
}

#[test]
fn three_level_and_cyclic_solves_certify() {
    for (name, tol) in [("three_level.json", 1e-8), ("cyclic.json", 1e-6)] {
        let net = fixture(name);
        let sol = solve(
            &net,
            &SolverConfig {
                gap_tol: tol,
                max_iters: 5000,
                ..SolverConfig::default()
            },
            None,
        )
        .unwrap();
        assert!(
            sol.certificate.gap <= tol,
            "{name}: {}",
            sol.certificate.gap
        );
        assert!(sol.history.iter().all(|r| r.gap.unwrap() >= -1e-9));
    }
}

#[test]
fn solver_gap_bounds_random_networks() {
    let mut rng = Rng::new(17);
    for _ in 0..8 {
        let net = random_network(&mut rng, 3, 12);
        let sol = solve(
            &net,
            &SolverConfig {
                gap_tol: 1e-7,
                max_iters: 3000,
                ..SolverConfig::default()
            },
            None,
        )
        .unwrap();
        assert!(sol.history.iter().all(|r| r.gap.unwrap() >= -1e-9));
        assert!(sol.certificate.gap <= 1e-7, "gap {}", sol.certificate.gap);
    }
}
