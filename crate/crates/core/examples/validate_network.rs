// Building a two-level network in code and reading validation reports.

use std::error::Error;

use hsue::model::validate_hierarchy;
use hsue::{Edge, LevelGraph, LinkCost, Network, NetworkHierarchy, OdPair, Violation};

fn city(inner_demand: Option<f64>) -> Result<NetworkHierarchy, Box<dyn Error>> {
    Ok(NetworkHierarchy {
        gammas: vec![1.0, 0.5],
        levels: vec![
            LevelGraph {
                nodes: vec!["home".into(), "work".into()],
                edges: vec![
                    Edge::plain("walk", "home", "work", LinkCost::constant(6.0)?),
                    Edge::portal("metro", "home", "work", 1, 0),
                ],
                od_pairs: vec![OdPair::new("home", "work", Some(10.0))],
            },
            LevelGraph {
                nodes: vec!["in".into(), "hub".into(), "out".into()],
                edges: vec![
                    Edge::plain("l1", "in", "hub", LinkCost::affine(1.0, 0.2)?),
                    Edge::plain("l2", "hub", "out", LinkCost::power(1.5, 0.15, 4.0, 4.0)?),
                    Edge::plain("express", "in", "out", LinkCost::affine(2.0, 0.4)?),
                ],
                od_pairs: vec![OdPair::new("in", "out", inner_demand)],
            },
        ],
        walk_cap: None,
    })
}

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let good = city(None)?;
    assert!(validate_hierarchy(&good).is_empty());
    let net = Network::new(good)?;
    println!(
        "valid: {} levels, {} plain edges, longest expanded path {:?}",
        net.level_count(),
        net.plain_edges().len(),
        net.longest_path_bounds()?
    );

    let bad = city(Some(3.0))?;
    let violations = validate_hierarchy(&bad);
    for v in &violations {
        println!("violation: {v}");
    }
    assert_eq!(
        violations,
        vec![Violation::DemandAtInnerLevel { level: 1, od: 0 }]
    );
    assert!(Network::new(bad).is_err());
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
