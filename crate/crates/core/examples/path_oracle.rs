// Brute-force references: path enumeration, explicit logit shares, Gumbel simulation.

use std::error::Error;
use std::path::Path;

use hsue::cli::parse_network;
use hsue::loading::{network_loading, softmin};
use hsue::oracle::{
    enumerate_paths, expanded_path_count, gumbel_monte_carlo, logit_path_table, logit_shares,
};
use hsue::{DualPoint, Network, OdRef};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let net = Network::new(parse_network(&dir.join("three_level.json"))?)?;
    let t = DualPoint::free_flow(&net);
    println!("expanded paths: {}", expanded_path_count(&net, 10_000)?);
    for k in 0..net.level_count() {
        let paths = enumerate_paths(&net, OdRef { level: k, od: 0 }, 10_000)?;
        println!("level {} od 0: {} path(s)", k + 1, paths.len());
    }

    let dp = network_loading(&net, &t)?;
    let brute = logit_path_table(&net, &t, 10_000)?.edge_flows(&net);
    let worst = dp
        .level_flows()
        .iter()
        .flatten()
        .zip(brute.iter().flatten())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    println!("max |DP - enumeration| = {worst:.2e}");
    assert!(worst <= 1e-10);

    let costs = [1.0, 1.4, 2.5];
    let gamma = 0.7;
    let exact = logit_shares(&costs, 1.0, gamma);
    let mc = gumbel_monte_carlo(&costs, gamma, 200_000, 7);
    let expected_max = -softmin(costs.iter().copied(), gamma);
    for (p, (e, s)) in exact.iter().zip(&mc.shares).enumerate() {
        println!("path {p}: logit {e:.4}  simulated {s:.4}");
    }
    println!(
        "E[max utility]: {expected_max:.4} vs {:.4} ± {:.4}",
        mc.mean_max, mc.std_error_max
    );
    assert!((mc.mean_max - expected_max).abs() < 5.0 * mc.std_error_max);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
