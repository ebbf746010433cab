// Solving the smallest interesting instance and checking it against a 1-D root.

use std::error::Error;

use hsue::solver::{solve, SolveStatus, SolverConfig};
use hsue::{Edge, LevelGraph, LinkCost, Network, NetworkHierarchy, OdPair};

/// Root of `x/(1−x) = exp(2 − 2x)` by bisection.
fn reference_share() -> f64 {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if (mid / (1.0 - mid)).ln() < 2.0 - 2.0 * mid {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let net = Network::new(NetworkHierarchy {
        gammas: vec![1.0],
        levels: vec![LevelGraph {
            nodes: vec!["o".into(), "d".into()],
            edges: vec![
                Edge::plain("e1", "o", "d", LinkCost::affine(1.0, 1.0)?),
                Edge::plain("e2", "o", "d", LinkCost::affine(2.0, 1.0)?),
            ],
            od_pairs: vec![OdPair::new("o", "d", Some(1.0))],
        }],
        walk_cap: None,
    })?;
    let cfg = SolverConfig {
        gap_tol: 1e-10,
        ..SolverConfig::default()
    };
    let sol = solve(&net, &cfg, None)?;
    assert_eq!(sol.status, SolveStatus::Converged);

    let x = reference_share();
    let c = &sol.certificate;
    println!("iterations {}, gap {:.3e}", c.iterations, c.gap);
    println!("flows  {:.8} {:.8}", sol.flows[0][0], sol.flows[0][1]);
    println!("root   {:.8} {:.8}", x, 1.0 - x);
    println!("times  {:.8} {:.8}", sol.times.0[0], sol.times.0[1]);
    assert!((sol.flows[0][0] - x).abs() < 1e-4);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
